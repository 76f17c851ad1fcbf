//! End-to-end run: features → (optional training) → segmentation →
//! clustering → evaluation, with a JSON report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterer::{discover_units, Discovery, UnitToken};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate_boundaries, evaluate_units, speaker_nmi, unit_quality, BoundaryCounts, BoundaryScores, Reference,
    UnitQualityScores,
};
use crate::featurize::log_mel;
use crate::io::{read_tensor, read_wav, write_json_lines, UtteranceRecord};
use crate::neural::{Model, ParamStore};
use crate::segmenter::Segmentation;
use crate::trainer::{load_checkpoint, pair_source_from_records, run_training};

/// Segment record written as one JSON line per utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub utterance_id: String,
    pub boundaries_frames: Vec<usize>,
    pub boundaries_seconds: Vec<f64>,
}

impl SegmentRecord {
    pub fn new(utterance_id: &str, seg: &Segmentation, frame_rate: f64) -> Self {
        Self {
            utterance_id: utterance_id.to_string(),
            boundaries_frames: seg.boundaries.clone(),
            boundaries_seconds: seg.to_seconds(frame_rate),
        }
    }

    pub fn segmentation(&self) -> Result<Segmentation> {
        Segmentation::new(self.boundaries_frames.clone())
    }
}

/// Unit record written as one JSON line per utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub utterance_id: String,
    pub tokens: Vec<UnitToken>,
}

/// Per-utterance features at one layer plus their frame rate.
#[derive(Debug, Clone)]
pub struct LayerFeatures {
    pub features: Vec<Array2<f64>>,
    pub frame_rate: f64,
}

/// Input features for one record: log-mel from audio when present, else the
/// stored tensor (with `{layer}` substituted when `layer` is given).
pub fn input_features(r: &UtteranceRecord, cfg: &Config, layer: Option<usize>) -> Result<(Array2<f64>, f64)> {
    if let Some(audio) = &r.audio {
        let f = log_mel(&read_wav(audio)?, &cfg.featurizer)?;
        return Ok((f.to_f64(), f.frame_rate));
    }
    let path = r
        .feature_path(layer)
        .ok_or_else(|| Error::invalid(format!("{}: neither audio nor features", r.utterance_id)))?;
    let f = read_tensor(path)?;
    Ok((f.to_f64(), f.frame_rate))
}

/// Features at `layer` for every record. With a model, inputs pass through
/// its encoder; without one, stored per-layer tensors (or log-mel frames)
/// are used directly.
pub fn extract_features(
    records: &[UtteranceRecord],
    cfg: &Config,
    model: Option<(&Model, &ParamStore)>,
    layer: usize,
) -> Result<LayerFeatures> {
    if let Some((m, _)) = model {
        m.encoder.check_layer(layer)?;
    }
    let rows = records
        .par_iter()
        .map(|r| match model {
            Some((m, ps)) => {
                let (x, fr) = input_features(r, cfg, None)?;
                Ok((m.encoder.layer_output(ps, &x, layer)?, fr))
            }
            None => input_features(r, cfg, Some(layer)),
        })
        .collect::<Result<Vec<_>>>()?;
    let frame_rate = rows
        .first()
        .map(|r| r.1)
        .ok_or_else(|| Error::invalid("empty manifest"))?;
    if rows.iter().any(|r| (r.1 - frame_rate).abs() > 1e-9) {
        return Err(Error::invalid("utterances have different frame rates"));
    }
    Ok(LayerFeatures {
        features: rows.into_iter().map(|r| r.0).collect(),
        frame_rate,
    })
}

/// Reference for a record: its alignments and a duration from audio length
/// or frame count.
pub fn reference_for(r: &UtteranceRecord, num_frames: usize, frame_rate: f64) -> Option<Reference> {
    let alignments = r.alignments.clone()?;
    Some(Reference {
        alignments,
        duration: num_frames as f64 / frame_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub utterances: usize,
    pub evaluated_utterances: usize,
    pub layer: usize,
    pub frame_rate: f64,
    pub k1: usize,
    pub k2: usize,
    pub trained: bool,
    pub boundary_counts: BoundaryCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub r_value: f64,
    pub syllable_purity: f64,
    pub cluster_purity: f64,
    pub mutual_info_nats: f64,
    /// Normalized MI between speakers and units; absent with one speaker.
    pub speaker_nmi: Option<f64>,
}

impl PipelineReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        records: &[UtteranceRecord],
        layer: usize,
        frame_rate: f64,
        trained: bool,
        d: &Discovery,
        counts: BoundaryCounts,
        b: BoundaryScores,
        u: UnitQualityScores,
        nmi: Option<f64>,
        evaluated: usize,
    ) -> Self {
        Self {
            utterances: records.len(),
            evaluated_utterances: evaluated,
            layer,
            frame_rate,
            k1: d.k1,
            k2: d.k2,
            trained,
            boundary_counts: counts,
            precision: b.precision,
            recall: b.recall,
            f1: b.f1,
            r_value: b.r_value,
            syllable_purity: u.syllable_purity,
            cluster_purity: u.cluster_purity,
            mutual_info_nats: u.mutual_info,
            speaker_nmi: nmi,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    /// Fine-tune before segmenting; otherwise `paths.checkpoint` (if set)
    /// supplies the encoder.
    pub train: bool,
}

/// Writes `items` as JSON lines to `path`.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_json_lines(&mut w, items)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes `report.json`, `segments.jsonl`,
/// `units.jsonl` and `codebook/` under `out_dir`.
pub fn run_pipeline(
    records: &[UtteranceRecord],
    cfg: &Config,
    opts: PipelineOptions,
    out_dir: &Path,
) -> Result<PipelineReport> {
    cfg.validate().map_err(Error::in_stage("config"))?;
    if records.is_empty() {
        return Err(Error::in_stage("load")(Error::invalid("empty manifest")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let layer = cfg.eval.layer;

    let model = if opts.train {
        let train = || -> Result<(Model, ParamStore)> {
            let src = pair_source_from_records(records, &cfg.featurizer, &cfg.dsp, None)?;
            let model_cfg = cfg.model();
            let rep = run_training(src.as_ref(), &model_cfg, &cfg.byol, None, Some(&out_dir.join("train")))?;
            Ok((Model::new(&model_cfg)?, rep.state.student))
        };
        Some(train().map_err(Error::in_stage("train"))?)
    } else if let Some(ck) = &cfg.paths.checkpoint {
        Some(load_checkpoint(ck).map_err(Error::in_stage("load"))?)
    } else {
        None
    };

    let feats = extract_features(records, cfg, model.as_ref().map(|(m, p)| (m, p)), layer)
        .map_err(Error::in_stage("featurize"))?;
    let d = discover_units(&feats.features, feats.frame_rate, &cfg.segmenter, &cfg.clusterer)
        .map_err(Error::in_stage("segment/cluster"))?;

    let write_outputs = || -> Result<()> {
        let segs: Vec<SegmentRecord> = records
            .iter()
            .zip(&d.segmentations)
            .map(|(r, s)| SegmentRecord::new(&r.utterance_id, s, feats.frame_rate))
            .collect();
        let units: Vec<UnitRecord> = records
            .iter()
            .zip(&d.units)
            .map(|(r, u)| UnitRecord {
                utterance_id: r.utterance_id.clone(),
                tokens: u.clone(),
            })
            .collect();
        write_jsonl(&out_dir.join("segments.jsonl"), &segs)?;
        write_jsonl(&out_dir.join("units.jsonl"), &units)?;
        d.codebook.save(out_dir.join("codebook"))
    };
    write_outputs().map_err(Error::in_stage("write"))?;

    let evaluate = || -> Result<PipelineReport> {
        let mut refs = Vec::new();
        let mut segs = Vec::new();
        let mut units = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(rf) = reference_for(r, feats.features[i].nrows(), feats.frame_rate) {
                refs.push(rf);
                segs.push(d.segmentations[i].clone());
                units.push(d.units[i].clone());
            }
        }
        if refs.is_empty() {
            return Err(Error::invalid("no utterance carries reference alignments"));
        }
        let counts = evaluate_boundaries(&refs, &segs, feats.frame_rate, cfg.eval.tolerance)?;
        let joint = evaluate_units(&refs, &units, feats.frame_rate)?;
        let quality = unit_quality(&joint)?;

        let mut speakers = std::collections::BTreeMap::new();
        let (mut spk, mut unit_ids) = (Vec::new(), Vec::new());
        for (r, u) in records.iter().zip(&d.units) {
            let next = speakers.len();
            let s = *speakers.entry(r.speaker_id.clone()).or_insert(next);
            for t in u {
                spk.push(s);
                unit_ids.push(t.unit);
            }
        }
        let nmi = if speakers.len() >= 2 {
            Some(speaker_nmi(&spk, &unit_ids)?)
        } else {
            None
        };
        Ok(PipelineReport::new(
            records,
            layer,
            feats.frame_rate,
            model.is_some(),
            &d,
            counts,
            counts.scores(),
            quality,
            nmi,
            refs.len(),
        ))
    };
    let report = evaluate().map_err(Error::in_stage("evaluate"))?;
    let path = out_dir.join("report.json");
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
