"""Deterministic cross-language fixture: two utterances, layers 8 and 9."""

import json
import struct
import wave
from array import array
from pathlib import Path

from .alignments import export_alignments, merge_alignments, read_alignment_rows
from .export import ExportSpec, export_features, read_manifest, read_wav_mono16k

# Edge cases for the bit-exact check: signed zero, subnormal, extremes, an inexact value.
SPECIAL = [-0.0, 1e-40, 3.4028234663852886e38, -1.1754943508222875e-38, 1.0 / 3.0]
HOP = 320


class PatternEncoder:
    """Stand-in encoder with a fixed, exactly known output per layer."""

    hidden_size = 6
    num_layers = 12
    frame_rate = 50.0

    def __call__(self, samples):
        t = len(samples) // HOP
        seed = round(samples[HOP // 2] * 32768)
        layers = []
        for l in range(self.num_layers + 1):
            m = [[(i - d) * 0.25 + l + seed for d in range(self.hidden_size)] for i in range(t)]
            for k, v in enumerate(SPECIAL):
                m[k % t][k % self.hidden_size] = v
            layers.append(m)
        return layers


def f32_bits(v):
    return struct.pack("<f", v)[::-1].hex()


def make_fixture(out_dir):
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    source = []
    for i, n in enumerate([10, 7]):
        pcm = array("h", [(i + 1) * 100 + (k % 50) for k in range(n * HOP)])
        with wave.open(str(out / "audio" / f"utt{i}.wav"), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(16000)
            w.writeframes(pcm.tobytes())
        source.append({"utterance_id": f"spk{i}/utt{i}", "speaker_id": f"spk{i}", "audio": f"audio/utt{i}.wav"})
    with open(out / "source.jsonl", "w", encoding="utf-8") as f:
        for r in source:
            f.write(json.dumps(r) + "\n")

    # Deliberately unsorted within each utterance.
    (out / "alignments.tsv").write_text(
        "# utterance_id\tstart\tend\tlabel\n"
        "spk0/utt0\t0.10\t0.20\tba\n"
        "spk0/utt0\t0.00\t0.10\tka\n"
        "spk1/utt1\t0.04\t0.14\tto\n",
        encoding="utf-8",
    )

    enc = PatternEncoder()
    export_features(ExportSpec("pattern", [9, 8], out / "source.jsonl", out), encoder=enc)

    rows = read_alignment_rows(out / "alignments.tsv")
    merged = merge_alignments(read_manifest(out / "manifest.jsonl"), export_alignments(rows))
    with open(out / "manifest.jsonl", "w", encoding="utf-8") as f:
        for r in merged:
            f.write(json.dumps(r) + "\n")

    expected = {}
    for r in source:
        hidden = enc(read_wav_mono16k(out / r["audio"]))
        stem = r["utterance_id"].replace("/", "_")
        for l in (8, 9):
            m = hidden[l]
            expected[f"features/{stem}.layer{l}.stns"] = {
                "shape": [len(m), len(m[0])],
                "bits": [f32_bits(v) for row in m for v in row],
            }
    (out / "expected_bits.json").write_text(json.dumps(expected, indent=1) + "\n", encoding="utf-8")
