//! Reading and writing of audio, feature tensors, manifests and alignments.
//!
//! Tensors use the STNS container: the 4-byte magic `STNS`, then little-endian
//! `u32` version (1), `u32` dtype code (1 = f32), `u32` rank, `rank` × `u64`
//! dimensions and finally the row-major `f32` payload.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// 20 ms hop.
pub const DEFAULT_FRAME_RATE: f64 = 50.0;

const STNS_MAGIC: &[u8; 4] = b"STNS";
const STNS_VERSION: u32 = 1;
const STNS_DTYPE_F32: u32 = 1;

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be > 0"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (e / self.samples.len() as f64).sqrt()
    }
}

/// A `T × D` matrix of frame vectors sampled at `frame_rate` frames per second.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub data: Array2<f32>,
    pub frame_rate: f64,
}

impl FrameFeatures {
    pub fn new(data: Array2<f32>, frame_rate: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Shape(format!(
                "features must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::invalid("frame_rate must be > 0"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features contain non-finite values"));
        }
        Ok(Self { data, frame_rate })
    }

    /// Build from f64 values (the precision used by the numeric stages).
    pub fn from_f64(data: &Array2<f64>, frame_rate: f64) -> Result<Self> {
        Self::new(data.mapv(|v| v as f32), frame_rate)
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.num_frames() as f64 / self.frame_rate
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

/// One reference syllable, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentEntry {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

/// One row of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub audio: Option<String>,
    /// STNS feature path. May contain a `{layer}` placeholder for per-layer exports.
    #[serde(default)]
    pub features: Option<String>,
    #[serde(default)]
    pub alignments: Option<Vec<AlignmentEntry>>,
    /// Set when two reference entries overlap in time. They are kept and scored as-is.
    #[serde(skip)]
    pub overlapping_alignments: bool,
}

impl UtteranceRecord {
    /// Feature path with `{layer}` substituted.
    pub fn feature_path(&self, layer: Option<usize>) -> Option<PathBuf> {
        let raw = self.features.as_ref()?;
        let path = match layer {
            Some(l) => raw.replace("{layer}", &l.to_string()),
            None => raw.clone(),
        };
        Some(PathBuf::from(path))
    }
}

// ---------------------------------------------------------------------------
// WAV

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_wav_from(BufReader::new(file))
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<Waveform> {
    let mut reader = hound::WavReader::new(reader).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "multichannel unsupported ({} channels)",
            spec.channels
        )));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "unsupported encoding: {fmt:?} {bits}-bit (only PCM16 and float32)"
            )))
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM, clipping to [-1, 1).
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Wav(e.to_string()))?;
    for &s in &w.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| Error::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))
}

/// Writes 32-bit float WAV (lossless for `f32` samples).
pub fn write_wav_f32(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Wav(e.to_string()))?;
    for &s in &w.samples {
        writer.write_sample(s).map_err(|e| Error::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))
}

// ---------------------------------------------------------------------------
// STNS tensors

/// An STNS tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq)]
pub struct StnsTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl StnsTensor {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.shape.is_empty() {
            return Err(Error::Tensor("rank must be ≥ 1".into()));
        }
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Tensor(format!(
                "shape {:?} needs {n} values, got {}",
                self.shape,
                self.data.len()
            )));
        }
        let mut out = Vec::with_capacity(16 + 8 * self.shape.len() + 4 * n);
        out.extend_from_slice(STNS_MAGIC);
        out.extend_from_slice(&STNS_VERSION.to_le_bytes());
        out.extend_from_slice(&STNS_DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != STNS_MAGIC {
            return Err(Error::Tensor("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != STNS_VERSION {
            return Err(Error::Tensor(format!("unsupported version {version}")));
        }
        let dtype = cur.u32()?;
        if dtype != STNS_DTYPE_F32 {
            return Err(Error::Tensor(format!("dtype {dtype} is not f32 (1)")));
        }
        let ndim = cur.u32()? as usize;
        if ndim == 0 {
            return Err(Error::Tensor("rank must be ≥ 1".into()));
        }
        let mut shape = Vec::with_capacity(ndim.min(64));
        let mut count: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(cur.u64()?).map_err(|_| Error::Tensor("dimension overflow".into()))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Tensor("dimension overflow".into()))?;
            shape.push(d);
        }
        let payload = count
            .checked_mul(4)
            .ok_or_else(|| Error::Tensor("dimension overflow".into()))?;
        let rest = &bytes[cur.pos..];
        if rest.len() != payload {
            return Err(Error::Tensor(format!(
                "payload is {} bytes, shape {:?} needs {payload}",
                rest.len(),
                shape
            )));
        }
        let data = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Tensor("truncated header".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

impl From<&Array2<f32>> for StnsTensor {
    fn from(a: &Array2<f32>) -> Self {
        Self {
            shape: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
        }
    }
}

/// Reads a rank-1 (treated as `T × 1`) or rank-2 tensor as frame features.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<FrameFeatures> {
    tensor_to_features(StnsTensor::read(path)?, DEFAULT_FRAME_RATE)
}

pub fn tensor_to_features(t: StnsTensor, frame_rate: f64) -> Result<FrameFeatures> {
    let (rows, cols) = match t.shape.as_slice() {
        [r] => (*r, 1),
        [r, c] => (*r, *c),
        s => {
            return Err(Error::Tensor(format!(
                "frame features must be rank 1 or 2, got shape {s:?}"
            )))
        }
    };
    let data = Array2::from_shape_vec((rows, cols), t.data).map_err(|e| Error::Tensor(e.to_string()))?;
    FrameFeatures::new(data, frame_rate)
}

pub fn write_tensor(t: &FrameFeatures, path: impl AsRef<Path>) -> Result<()> {
    let data = t.data.as_standard_layout().into_owned();
    StnsTensor::from(&data).write(path)
}

// ---------------------------------------------------------------------------
// Manifests

/// Reads a JSON-lines manifest. Blank lines are skipped; relative paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(BufReader::new(file), Some(&base))
}

pub fn parse_manifest<R: BufRead>(reader: R, base: Option<&Path>) -> Result<Vec<UtteranceRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Manifest {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: UtteranceRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: lineno,
            msg: e.to_string(),
        })?;
        if !seen.insert(rec.utterance_id.clone()) {
            return Err(Error::DuplicateUtterance(rec.utterance_id));
        }
        if let Some(al) = rec.alignments.as_mut() {
            for a in al.iter() {
                if !(a.start >= 0.0 && a.start < a.end) || a.label.is_empty() {
                    return Err(Error::Manifest {
                        line: lineno,
                        msg: format!("invalid alignment entry ({}, {}, {:?})", a.start, a.end, a.label),
                    });
                }
            }
            al.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
            rec.overlapping_alignments = al.windows(2).any(|w| w[1].start < w[0].end);
        }
        if let Some(base) = base {
            rec.audio = rec.audio.map(|p| resolve(base, &p));
            rec.features = rec.features.map(|p| resolve(base, &p));
        }
        records.push(rec);
    }
    Ok(records)
}

fn resolve(base: &Path, p: &str) -> String {
    let pb = Path::new(p);
    if pb.is_absolute() || base.as_os_str().is_empty() {
        p.to_string()
    } else {
        base.join(pb).to_string_lossy().into_owned()
    }
}

pub fn write_manifest(records: &[UtteranceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_json_lines(&mut w, records).map_err(|e| Error::io(path, e))
}

/// Serializes each item as one JSON line.
pub fn write_json_lines<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pcm16_wav(samples: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let mut buf = std::io::Cursor::new(Vec::new());
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    #[test]
    fn wav_header_echo() {
        let bytes = pcm16_wav(&vec![0i16; 32000], 1, 16000);
        let w = read_wav_from(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(w.len(), 32000);
        assert_eq!(w.sample_rate, 16000);
    }

    #[test]
    fn wav_fixed_point_scaling() {
        let bytes = pcm16_wav(&[32767, -32768, 0], 1, 16000);
        let w = read_wav_from(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(w.samples[0], 32767.0 / 32768.0);
        assert_eq!(w.samples[1], -1.0);
        assert_eq!(w.samples[2], 0.0);
    }

    #[test]
    fn wav_rejects_stereo() {
        let bytes = pcm16_wav(&[0, 0, 0, 0], 2, 16000);
        let err = read_wav_from(std::io::Cursor::new(bytes)).unwrap_err();
        assert!(err.to_string().contains("multichannel unsupported"), "{err}");
    }

    #[test]
    fn wav_rejects_24_bit() {
        let mut buf = std::io::Cursor::new(Vec::new());
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        let err = read_wav_from(std::io::Cursor::new(buf.into_inner())).unwrap_err();
        assert!(err.to_string().contains("unsupported encoding"), "{err}");
    }

    #[test]
    fn wav_sine_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let rate = 16000;
        let synth: Vec<f64> = (0..4000)
            .map(|n| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / rate as f64).sin())
            .collect();
        let w = Waveform::new(synth.iter().map(|&v| v as f32).collect(), rate).unwrap();
        write_wav(&w, &path).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in back.samples.iter().zip(&synth) {
            assert!((*a as f64 - b).abs() <= 1.0 / 32768.0);
        }
        let fpath = dir.path().join("sine_f32.wav");
        write_wav_f32(&w, &fpath).unwrap();
        assert_eq!(read_wav(&fpath).unwrap(), w);
    }

    #[test]
    fn tensor_round_trip_3x2() {
        let a = Array2::from_shape_vec((3, 2), vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-30]).unwrap();
        let t = FrameFeatures::new(a, 50.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.stns");
        write_tensor(&t, &p).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), t);
    }

    #[test]
    fn tensor_header_layout() {
        let t = StnsTensor {
            shape: vec![2],
            data: vec![1.0, 2.0],
        };
        let b = t.encode().unwrap();
        assert_eq!(&b[0..4], b"STNS");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..28], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 32);
    }

    #[test]
    fn tensor_bad_magic() {
        let mut b = StnsTensor {
            shape: vec![1],
            data: vec![0.0],
        }
        .encode()
        .unwrap();
        b[..4].copy_from_slice(b"XXXX");
        let err = StnsTensor::decode(&b).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn tensor_rank_zero_rejected() {
        let mut b = Vec::new();
        b.extend_from_slice(b"STNS");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&0f32.to_le_bytes());
        let err = StnsTensor::decode(&b).unwrap_err();
        assert!(err.to_string().contains("rank must be ≥ 1"));
    }

    #[test]
    fn tensor_rejects_non_f32_and_overflow() {
        let mut b = StnsTensor {
            shape: vec![1],
            data: vec![0.0],
        }
        .encode()
        .unwrap();
        b[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(StnsTensor::decode(&b).unwrap_err().to_string().contains("dtype"));

        let mut b = Vec::new();
        b.extend_from_slice(b"STNS");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&u64::MAX.to_le_bytes());
        b.extend_from_slice(&3u64.to_le_bytes());
        assert!(StnsTensor::decode(&b)
            .unwrap_err()
            .to_string()
            .contains("dimension overflow"));
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(
            rows in 1usize..12,
            cols in 1usize..9,
            seed in proptest::collection::vec(any::<u32>(), 108),
        ) {
            let vals: Vec<f32> = (0..rows * cols)
                .map(|i| {
                    let v = f32::from_bits(seed[i % seed.len()].rotate_left(i as u32));
                    if v.is_finite() { v } else { i as f32 }
                })
                .collect();
            let t = StnsTensor { shape: vec![rows, cols], data: vals };
            let back = StnsTensor::decode(&t.encode().unwrap()).unwrap();
            prop_assert_eq!(back.shape, t.shape);
            let a: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn manifest_parses_sorts_and_flags_overlap() {
        let text = r#"{"utterance_id":"a","speaker_id":"s1","audio":"a.wav","features":null,"alignments":[{"start":0.5,"end":0.9,"label":"ba"},{"start":0.1,"end":0.6,"label":"ka"}]}
{"utterance_id":"b","speaker_id":"s2","audio":null,"features":"/abs/b_{layer}.stns","alignments":null}
"#;
        let recs = parse_manifest(text.as_bytes(), Some(Path::new("/data"))).unwrap();
        assert_eq!(recs.len(), 2);
        let al = recs[0].alignments.as_ref().unwrap();
        assert_eq!(al[0].label, "ka");
        assert!(recs[0].overlapping_alignments);
        assert_eq!(recs[0].audio.as_deref(), Some("/data/a.wav"));
        assert_eq!(recs[1].feature_path(Some(8)).unwrap(), PathBuf::from("/abs/b_8.stns"));
    }

    #[test]
    fn manifest_duplicate_id_named() {
        let text = "{\"utterance_id\":\"x1\",\"speaker_id\":\"s\"}\n{\"utterance_id\":\"x1\",\"speaker_id\":\"s\"}\n";
        let err = parse_manifest(text.as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("x1"));
    }

    #[test]
    fn manifest_malformed_line_reports_number() {
        let text = "{\"utterance_id\":\"x1\",\"speaker_id\":\"s\"}\n{oops\n";
        match parse_manifest(text.as_bytes(), None).unwrap_err() {
            Error::Manifest { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }
}
