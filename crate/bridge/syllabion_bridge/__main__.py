import argparse
import json
import sys
from pathlib import Path

from .alignments import AlignmentError, export_alignments, merge_alignments, read_alignment_rows
from .export import ExportError, ExportSpec, export_features, read_manifest
from .fixture import make_fixture
from .stns import StnsError


def main(argv=None):
    p = argparse.ArgumentParser(prog="syllabion-bridge")
    sub = p.add_subparsers(dest="cmd", required=True)

    f = sub.add_parser("export-features", help="dump per-layer encoder features as STNS")
    f.add_argument("--model", required=True, help="model id or local checkpoint directory")
    f.add_argument("--layers", required=True, help="comma-separated layer indices, e.g. 8,9")
    f.add_argument("--manifest", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path)

    a = sub.add_parser("export-alignments", help="merge tab-separated syllable alignments into a manifest")
    a.add_argument("--alignments", required=True, type=Path)
    a.add_argument("--manifest", required=True, type=Path)
    a.add_argument("--out", required=True, type=Path)

    x = sub.add_parser("make-fixture", help="regenerate the cross-language test fixture")
    x.add_argument("out", type=Path)

    args = p.parse_args(argv)
    try:
        if args.cmd == "export-features":
            layers = [int(v) for v in args.layers.split(",") if v.strip()]
            info = export_features(ExportSpec(args.model, layers, args.manifest, args.out))
            print(json.dumps(info))
        elif args.cmd == "export-alignments":
            al = export_alignments(read_alignment_rows(args.alignments))
            merged = merge_alignments(read_manifest(args.manifest), al)
            args.out.parent.mkdir(parents=True, exist_ok=True)
            with open(args.out, "w", encoding="utf-8") as fh:
                for r in merged:
                    fh.write(json.dumps(r) + "\n")
        else:
            make_fixture(args.out)
    except (AlignmentError, ExportError, StnsError, OSError, ValueError) as e:
        print(f"error[{args.cmd}]: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
