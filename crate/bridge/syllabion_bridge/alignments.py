"""Syllable alignments to manifest entries (seconds, sorted by start then end)."""

import csv


class AlignmentError(ValueError):
    pass


def read_alignment_rows(path):
    """Tab-separated `utterance_id start end label` rows; blank lines and `#` comments skipped."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for fields in csv.reader(f, delimiter="\t"):
            if not fields or not "".join(fields).strip() or fields[0].startswith("#"):
                continue
            rows.append(fields)
    return rows


def export_alignments(rows):
    """Map of utterance id to sorted `{start, end, label}` entries.

    Each row is `(utterance_id, start, end, label)`. Rows are numbered from 1
    in error messages.
    """
    out = {}
    for i, row in enumerate(rows, 1):
        if len(row) != 4:
            raise AlignmentError(f"row {i}: expected 4 fields, got {len(row)}")
        utt, start, end, label = row
        try:
            start, end = float(start), float(end)
        except ValueError as e:
            raise AlignmentError(f"row {i}: {e}") from None
        if not (start >= 0.0 and end > start):
            raise AlignmentError(f"row {i}: need 0 <= start < end, got ({start}, {end})")
        if not str(label).strip():
            raise AlignmentError(f"row {i}: empty label")
        out.setdefault(str(utt), []).append({"start": start, "end": end, "label": str(label)})
    for entries in out.values():
        entries.sort(key=lambda a: (a["start"], a["end"]))
    return out


def merge_alignments(records, alignments):
    """Copies of manifest records with `alignments` filled where available."""
    merged = []
    for r in records:
        r = dict(r)
        if r["utterance_id"] in alignments:
            r["alignments"] = alignments[r["utterance_id"]]
        merged.append(r)
    return merged
