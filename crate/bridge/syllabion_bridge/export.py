"""Per-layer encoder features for every manifest utterance, written as STNS."""

import json
import re
import wave
from array import array
from dataclasses import dataclass
from pathlib import Path

from .stns import write_stns

SAMPLE_RATE = 16000


class ExportError(RuntimeError):
    pass


@dataclass
class ExportSpec:
    model: str
    layers: list
    manifest: Path
    out_dir: Path


class HuggingFaceEncoder:
    """Hidden states of a pretrained speech encoder, in eval mode.

    `hidden_states[0]` is the input to the first Transformer layer and
    `hidden_states[l]` the output of layer `l`.
    """

    def __init__(self, model_id):
        import torch
        from transformers import AutoModel

        self._torch = torch
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()
        cfg = self.model.config
        self.hidden_size = cfg.hidden_size
        self.num_layers = cfg.num_hidden_layers
        stride = 1
        for s in getattr(cfg, "conv_stride", [320]):
            stride *= s
        self.frame_rate = SAMPLE_RATE / stride

    def __call__(self, samples):
        torch = self._torch
        x = torch.tensor(samples, dtype=torch.float32).unsqueeze(0)
        with torch.no_grad():
            out = self.model(x, output_hidden_states=True)
        return [h[0].numpy() for h in out.hidden_states]


def read_wav_mono16k(path):
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getframerate() != SAMPLE_RATE or w.getsampwidth() != 2:
                raise ExportError(
                    f"{path}: need 16 kHz mono 16-bit PCM, got {w.getframerate()} Hz, "
                    f"{w.getnchannels()} channel(s), {8 * w.getsampwidth()}-bit"
                )
            pcm = array("h", w.readframes(w.getnframes()))
    except (OSError, wave.Error) as e:
        raise ExportError(f"missing or unreadable audio {path}: {e}") from None
    return [s / 32768.0 for s in pcm]


def read_manifest(path):
    path = Path(path)
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    return records


def file_stem(utterance_id):
    return re.sub(r"[^A-Za-z0-9_-]", "_", utterance_id)


def _rows(mat):
    if hasattr(mat, "tolist"):
        mat = mat.tolist()
    return [list(r) for r in mat]


def export_features(spec, encoder=None):
    """Writes `features/<utt>.layer<L>.stns`, `manifest.jsonl` and `export.json` under `spec.out_dir`.

    Output manifest rows carry a `{layer}` feature template and no audio
    path, so the pipeline reads the exported features instead of
    recomputing log-mel frames.
    """
    encoder = encoder or HuggingFaceEncoder(spec.model)
    layers = sorted(set(int(l) for l in spec.layers))
    bad = [l for l in layers if not 0 <= l <= encoder.num_layers]
    if bad or not layers:
        raise ExportError(f"layers {bad or layers} outside 0..={encoder.num_layers} for {spec.model}")
    manifest = Path(spec.manifest)
    out = Path(spec.out_dir)
    rows = []
    for r in read_manifest(manifest):
        if not r.get("audio"):
            raise ExportError(f"{r['utterance_id']}: no audio")
        audio = Path(r["audio"])
        if not audio.is_absolute():
            audio = manifest.parent / audio
        hidden = encoder(read_wav_mono16k(audio))
        stem = file_stem(r["utterance_id"])
        for l in layers:
            frames = _rows(hidden[l])
            if frames and len(frames[0]) != encoder.hidden_size:
                raise ExportError(
                    f"{r['utterance_id']}: layer {l} has width {len(frames[0])}, expected {encoder.hidden_size}"
                )
            flat = [v for row in frames for v in row]
            write_stns(out / "features" / f"{stem}.layer{l}.stns", (len(frames), encoder.hidden_size), flat)
        row = {"utterance_id": r["utterance_id"], "speaker_id": r["speaker_id"]}
        row["features"] = f"features/{stem}.layer{{layer}}.stns"
        if r.get("alignments") is not None:
            row["alignments"] = r["alignments"]
        rows.append(row)
    with open(out / "manifest.jsonl", "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    info = {
        "model": spec.model,
        "layers": layers,
        "frame_rate": encoder.frame_rate,
        "hidden_size": encoder.hidden_size,
        "utterances": len(rows),
    }
    (out / "export.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return info
