//! Self-similarity images (binary PGM) and boundary CSVs for overlays.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::segmenter::Segmentation;

/// `Z Zᵀ` min–max scaled to `0..=255`, row-major. A constant matrix maps to 0.
pub fn ssm_image(z: &ArrayView2<f64>) -> Result<Array2<u8>> {
    if z.nrows() == 0 {
        return Err(Error::Shape("cannot plot zero frames".into()));
    }
    let s = z.dot(&z.t());
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(s.mapv(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }))
}

pub fn encode_pgm(img: &Array2<u8>) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.iter());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Array2<u8>> {
    let bad = |m: &str| Error::invalid(format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ascii"))?);
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated pixels"))?;
    Array2::from_shape_vec((h, w), data.to_vec()).map_err(|e| Error::Shape(e.to_string()))
}

/// `kind,frame,seconds` rows for predicted and reference interior boundaries.
pub fn boundary_csv(seg: &Segmentation, reference_seconds: &[f64], frame_rate: f64) -> String {
    let mut s = String::from("kind,frame,seconds\n");
    for &b in seg.interior() {
        s.push_str(&format!("predicted,{b},{}\n", b as f64 / frame_rate));
    }
    for &t in reference_seconds {
        s.push_str(&format!("reference,{},{t}\n", (t * frame_rate).round() as usize));
    }
    s
}

/// Writes `<stem>.pgm` and `<stem>.csv`.
pub fn plot_ssm(
    z: &ArrayView2<f64>,
    seg: &Segmentation,
    reference_seconds: &[f64],
    frame_rate: f64,
    stem: &Path,
) -> Result<()> {
    let img = ssm_image(z)?;
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pgm = stem.with_extension("pgm");
    fs::write(&pgm, encode_pgm(&img)).map_err(|e| Error::io(&pgm, e))?;
    let csv = stem.with_extension("csv");
    fs::write(&csv, boundary_csv(seg, reference_seconds, frame_rate)).map_err(|e| Error::io(&csv, e))
}
