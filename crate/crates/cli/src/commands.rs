use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array2, Axis};
use serde::Serialize;

use syllabion_core::clusterer::{assign_units, fit_codebook, stack, Codebook, UnitSequence};
use syllabion_core::dsp::perturb::perturb_speaker_with;
use syllabion_core::evaluator::{
    self, evaluate_boundaries, evaluate_units, layer_sweep, speaker_nmi, speaker_probe_split, unit_quality,
    write_sweep_csv, Reference,
};
use syllabion_core::featurize::log_mel;
use syllabion_core::io::{
    read_json_lines, read_manifest, read_wav, write_manifest, write_tensor, write_wav, FrameFeatures, UtteranceRecord,
    DEFAULT_FRAME_RATE,
};
use syllabion_core::neural::{Model, ParamStore};
use syllabion_core::pipeline::{
    extract_features, input_features, reference_for, run_pipeline, write_jsonl, LayerFeatures, PipelineOptions,
    SegmentRecord, UnitRecord,
};
use syllabion_core::plot::plot_ssm;
use syllabion_core::segmenter::{pool_segments, segment_features, Segmentation};
use syllabion_core::synth::{planted_corpus, syllabic_utterance, PlantedSpec};
use syllabion_core::trainer::{load_checkpoint, pair_source_from_records, run_training};
use syllabion_core::Config;

use crate::{Cli, Command, Preset, Source, SynthKind};

struct Ctx {
    cfg: Config,
    out_dir: PathBuf,
}

impl Ctx {
    fn manifest(&self, arg: &Option<PathBuf>) -> Result<Vec<UtteranceRecord>> {
        let path = arg
            .clone()
            .or_else(|| self.cfg.paths.manifest.clone())
            .ok_or_else(|| anyhow!("no manifest: pass --manifest or set paths.manifest"))?;
        let records = read_manifest(&path).context("load")?;
        if records.is_empty() {
            bail!("load: {}: manifest is empty", path.display());
        }
        Ok(records)
    }

    fn model(&self, src: &Source) -> Result<Option<(Model, ParamStore)>> {
        match src.checkpoint.as_ref().or(self.cfg.paths.checkpoint.as_ref()) {
            Some(dir) => Ok(Some(load_checkpoint(dir).context("load checkpoint")?)),
            None => Ok(None),
        }
    }

    fn layer(&self, src: &Source) -> usize {
        src.layer.unwrap_or(self.cfg.eval.layer)
    }

    fn features(&self, src: &Source, records: &[UtteranceRecord]) -> Result<LayerFeatures> {
        let model = self.model(src)?;
        extract_features(records, &self.cfg, model.as_ref().map(|(m, p)| (m, p)), self.layer(src)).context("featurize")
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("create {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("start worker pool")?;
    }
    let base = match cli.preset {
        Preset::Full => Config::default(),
        Preset::Desk => Config::desk_scale(),
    };
    let mut cfg = match &cli.config {
        Some(p) => Config::load_over(&base, p)?,
        None => base,
    };
    cfg.apply_overrides(&cli.overrides)?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| cfg.paths.out_dir.clone());
    let ctx = Ctx { cfg, out_dir };

    match cli.command {
        Command::Perturb { input, output, seed } => perturb(&ctx, &input, &output, seed),
        Command::Featurize { manifest } => featurize(&ctx, &ctx.manifest(&manifest)?),
        Command::Train { manifest, init } => train(&ctx, &ctx.manifest(&manifest)?, init),
        Command::Segment { src } => {
            let records = ctx.manifest(&src.manifest)?;
            let feats = ctx.features(&src, &records)?;
            let segs = segment_all(&ctx, &feats)?;
            let rows: Vec<_> = records
                .iter()
                .zip(&segs)
                .map(|(r, s)| SegmentRecord::new(&r.utterance_id, s, feats.frame_rate))
                .collect();
            let path = ctx.out("segments.jsonl")?;
            write_jsonl(&path, &rows)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Cluster { src, segments } => cluster(&ctx, &src, segments.as_deref()),
        Command::Assign {
            src,
            codebook,
            segments,
        } => assign(&ctx, &src, &codebook, segments.as_deref()),
        Command::EvalBoundaries { manifest, segments } => eval_boundaries(&ctx, &ctx.manifest(&manifest)?, &segments),
        Command::EvalUnits {
            manifest,
            units,
            frame_rate,
        } => eval_units(&ctx.manifest(&manifest)?, &units, frame_rate),
        Command::EvalSpeaker { src, units } => eval_speaker(&ctx, &src, units.as_deref()),
        Command::LayerSweep { src, layers } => sweep(&ctx, &src, &layers),
        Command::PlotSsm { src, utterance } => plot(&ctx, &src, &utterance),
        Command::Run { manifest, train } => {
            let records = ctx.manifest(&manifest)?;
            let report = run_pipeline(&records, &ctx.cfg, PipelineOptions { train }, &ctx.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Synth {
            kind,
            utterances,
            speakers,
            seed,
        } => synth(&ctx, kind, utterances, speakers, seed),
        Command::Config => {
            println!("{}", ctx.cfg.to_json()?);
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// File-name-safe form of an utterance id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn perturb(ctx: &Ctx, input: &Path, output: &Path, seed: u64) -> Result<()> {
    let w = read_wav(input).context("load")?;
    let p = perturb_speaker_with(&w, &ctx.cfg.dsp, seed).context("perturb")?;
    write_wav(&p, output).context("write")?;
    Ok(())
}

fn featurize(ctx: &Ctx, records: &[UtteranceRecord]) -> Result<()> {
    let dir = ctx.out("features")?;
    fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let audio = r
            .audio
            .as_ref()
            .ok_or_else(|| anyhow!("{}: no audio to featurize", r.utterance_id))?;
        let f = log_mel(&read_wav(audio)?, &ctx.cfg.featurizer).with_context(|| r.utterance_id.clone())?;
        let rel = format!("features/{}.stns", file_stem(&r.utterance_id));
        write_tensor(&f, ctx.out_dir.join(&rel))?;
        out.push(UtteranceRecord {
            audio: None,
            features: Some(rel),
            ..r.clone()
        });
    }
    let path = ctx.out("manifest.jsonl")?;
    write_manifest(&out, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn train(ctx: &Ctx, records: &[UtteranceRecord], init: Option<PathBuf>) -> Result<()> {
    let model_cfg = ctx.cfg.model();
    let init = match init {
        Some(dir) => {
            let (m, ps) = load_checkpoint(&dir).context("load checkpoint")?;
            if m.cfg != model_cfg {
                bail!("checkpoint {} has a different model configuration", dir.display());
            }
            Some(ps)
        }
        None => None,
    };
    let src = pair_source_from_records(records, &ctx.cfg.featurizer, &ctx.cfg.dsp, None).context("load")?;
    fs::create_dir_all(&ctx.out_dir)?;
    let rep = run_training(src.as_ref(), &model_cfg, &ctx.cfg.byol, init, Some(&ctx.out_dir)).context("train")?;
    let first = rep.losses.first().map(|l| l.loss);
    let last = rep.losses.last().map(|l| l.loss);
    print_json(&serde_json::json!({
        "steps": rep.losses.len(),
        "first_loss": first,
        "final_loss": last,
        "checkpoint": rep.checkpoints.last(),
    }))
}

fn segment_all(ctx: &Ctx, feats: &LayerFeatures) -> Result<Vec<Segmentation>> {
    use rayon::prelude::*;
    feats
        .features
        .par_iter()
        .map(|z| segment_features(&z.view(), feats.frame_rate, &ctx.cfg.segmenter))
        .collect::<syllabion_core::Result<Vec<_>>>()
        .context("segment")
}

/// Segmentations from a file (checked against frame counts) or recomputed.
fn segmentations(
    ctx: &Ctx,
    records: &[UtteranceRecord],
    feats: &LayerFeatures,
    file: Option<&Path>,
) -> Result<Vec<Segmentation>> {
    let Some(path) = file else {
        return segment_all(ctx, feats);
    };
    let rows: Vec<SegmentRecord> = read_json_lines(path).context("load")?;
    let by_id: BTreeMap<_, _> = rows.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    records
        .iter()
        .zip(&feats.features)
        .map(|(r, z)| {
            let row = by_id
                .get(r.utterance_id.as_str())
                .ok_or_else(|| anyhow!("{}: no segments for utterance {}", path.display(), r.utterance_id))?;
            let s = row.segmentation()?;
            if s.num_frames() != z.nrows() {
                bail!(
                    "{}: segments span {} frames but features have {}",
                    r.utterance_id,
                    s.num_frames(),
                    z.nrows()
                );
            }
            Ok(s)
        })
        .collect()
}

fn pooled(segs: &[Segmentation], feats: &LayerFeatures) -> Result<Vec<Array2<f64>>> {
    segs.iter()
        .zip(&feats.features)
        .map(|(s, z)| Ok(pool_segments(s, &z.view())?))
        .collect()
}

fn cluster(ctx: &Ctx, src: &Source, segments: Option<&Path>) -> Result<()> {
    let records = ctx.manifest(&src.manifest)?;
    let feats = ctx.features(src, &records)?;
    let segs = segmentations(ctx, &records, &feats, segments)?;
    let all = stack(&pooled(&segs, &feats)?)?;
    let c = &ctx.cfg.clusterer;
    c.validate()?;
    let k1 = c.k1.min(all.nrows());
    let k2 = c.k2.min(k1);
    if k1 < c.k1 {
        log::warn!("k1 clamped from {} to {} pooled segments", c.k1, k1);
    }
    let cb = fit_codebook(&all.view(), k1, k2, &c.kmeans()).context("cluster")?;
    let dir = ctx.out("codebook")?;
    cb.save(&dir)?;
    print_json(&serde_json::json!({ "segments": all.nrows(), "k1": k1, "k2": k2, "codebook": dir }))
}

fn assign(ctx: &Ctx, src: &Source, codebook: &Path, segments: Option<&Path>) -> Result<()> {
    let records = ctx.manifest(&src.manifest)?;
    let cb = Codebook::load(codebook).context("load codebook")?;
    let feats = ctx.features(src, &records)?;
    let segs = segmentations(ctx, &records, &feats, segments)?;
    let pools = pooled(&segs, &feats)?;
    let rows = records
        .iter()
        .zip(segs.iter().zip(&pools))
        .map(|(r, (s, p))| {
            Ok(UnitRecord {
                utterance_id: r.utterance_id.clone(),
                tokens: assign_units(&p.view(), s, &cb).with_context(|| r.utterance_id.clone())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = ctx.out("units.jsonl")?;
    write_jsonl(&path, &rows)?;
    println!("{}", path.display());
    Ok(())
}

/// References keyed by utterance id; durations come from the last frame of
/// each hypothesis, which spans the whole utterance.
fn references(
    records: &[UtteranceRecord],
    frames: impl Fn(&str) -> Option<usize>,
    frame_rate: f64,
) -> Vec<(&str, Reference)> {
    records
        .iter()
        .filter_map(|r| {
            let t = frames(&r.utterance_id)?;
            Some((r.utterance_id.as_str(), reference_for(r, t, frame_rate)?))
        })
        .collect()
}

fn eval_boundaries(ctx: &Ctx, records: &[UtteranceRecord], segments: &Path) -> Result<()> {
    let rows: Vec<SegmentRecord> = read_json_lines(segments).context("load")?;
    let by_id: BTreeMap<_, _> = rows.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    let frame_rate = segment_frame_rate(&rows)?;
    let refs = references(
        records,
        |id| by_id.get(id).and_then(|r| r.boundaries_frames.last().copied()),
        frame_rate,
    );
    if refs.is_empty() {
        bail!("evaluate: no utterance has both segments and reference alignments");
    }
    let segs = refs
        .iter()
        .map(|(id, _)| by_id[id].segmentation())
        .collect::<syllabion_core::Result<Vec<_>>>()?;
    let refs: Vec<Reference> = refs.into_iter().map(|(_, r)| r).collect();
    let counts = evaluate_boundaries(&refs, &segs, frame_rate, ctx.cfg.eval.tolerance).context("evaluate")?;
    print_json(&serde_json::json!({
        "utterances": refs.len(),
        "counts": counts,
        "scores": counts.scores(),
    }))
}

/// Frame rate implied by a segment file (frames ÷ seconds of the last boundary).
fn segment_frame_rate(rows: &[SegmentRecord]) -> Result<f64> {
    rows.iter()
        .find_map(|r| {
            let (&f, &s) = (r.boundaries_frames.last()?, r.boundaries_seconds.last()?);
            (f > 0 && s > 0.0).then(|| f as f64 / s)
        })
        .ok_or_else(|| anyhow!("segments file has no non-empty utterance"))
}

fn eval_units(records: &[UtteranceRecord], units: &Path, frame_rate: f64) -> Result<()> {
    let rows: Vec<UnitRecord> = read_json_lines(units).context("load")?;
    let by_id: BTreeMap<_, _> = rows.iter().map(|r| (r.utterance_id.as_str(), &r.tokens)).collect();
    if frame_rate.is_nan() || frame_rate <= 0.0 {
        bail!("--frame-rate must be positive");
    }
    let refs = references(
        records,
        |id| by_id.get(id).and_then(|t| t.last().map(|t| t.end)),
        frame_rate,
    );
    if refs.is_empty() {
        bail!("evaluate: no utterance has both units and reference alignments");
    }
    let seqs: Vec<UnitSequence> = refs.iter().map(|(id, _)| by_id[id].clone()).collect();
    let refs: Vec<Reference> = refs.into_iter().map(|(_, r)| r).collect();
    let joint = evaluate_units(&refs, &seqs, frame_rate).context("evaluate")?;
    let q = unit_quality(&joint).context("evaluate")?;
    print_json(&serde_json::json!({
        "utterances": refs.len(),
        "matched_pairs": joint.total(),
        "scores": q,
    }))
}

fn speaker_indices(records: &[UtteranceRecord]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let idx = records
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(r.speaker_id.clone()).or_insert(next)
        })
        .collect();
    (idx, ids.len())
}

fn eval_speaker(ctx: &Ctx, src: &Source, units: Option<&Path>) -> Result<()> {
    let records = ctx.manifest(&src.manifest)?;
    let (spk, n_speakers) = speaker_indices(&records);
    if n_speakers < 2 {
        bail!("evaluate: speaker probe needs at least two speakers, found {n_speakers}");
    }
    let feats = ctx.features(src, &records)?;
    let dim = feats.features[0].ncols();
    let mut x = Array2::zeros((records.len(), dim));
    for (mut row, z) in x.axis_iter_mut(Axis(0)).zip(&feats.features) {
        row.assign(
            &z.mean_axis(Axis(0))
                .ok_or_else(|| anyhow!("utterance with zero frames"))?,
        );
    }
    let acc = speaker_probe_split(&x.view(), &spk, &ctx.cfg.eval).context("probe")?;
    let nmi = match units {
        Some(path) => {
            let rows: Vec<UnitRecord> = read_json_lines(path).context("load")?;
            let by_id: BTreeMap<_, _> = rows.iter().map(|r| (r.utterance_id.as_str(), &r.tokens)).collect();
            let (mut s, mut u) = (Vec::new(), Vec::new());
            for (r, &k) in records.iter().zip(&spk) {
                for t in by_id.get(r.utterance_id.as_str()).into_iter().flat_map(|t| t.iter()) {
                    s.push(k);
                    u.push(t.unit);
                }
            }
            Some(speaker_nmi(&s, &u).context("nmi")?)
        }
        None => None,
    };
    print_json(&serde_json::json!({
        "layer": ctx.layer(src),
        "speakers": n_speakers,
        "probe_accuracy": acc,
        "chance": 1.0 / n_speakers as f64,
        "speaker_unit_nmi": nmi,
    }))
}

struct SweepSource<'a> {
    ctx: &'a Ctx,
    records: Vec<UtteranceRecord>,
    model: Option<(Model, ParamStore)>,
}

impl evaluator::LayerFeatures for SweepSource<'_> {
    fn num_utterances(&self) -> usize {
        self.records.len()
    }

    fn features(&self, utterance: usize, layer: usize) -> syllabion_core::Result<Array2<f64>> {
        let r = &self.records[utterance];
        match &self.model {
            Some((m, ps)) => {
                let (x, _) = input_features(r, &self.ctx.cfg, None)?;
                m.encoder.layer_output(ps, &x, layer)
            }
            None => Ok(input_features(r, &self.ctx.cfg, Some(layer))?.0),
        }
    }
}

fn sweep(ctx: &Ctx, src: &Source, layers: &[usize]) -> Result<()> {
    let records: Vec<_> = ctx
        .manifest(&src.manifest)?
        .into_iter()
        .filter(|r| r.alignments.is_some())
        .collect();
    if records.is_empty() {
        bail!("evaluate: no utterance carries reference alignments");
    }
    let first = *layers.first().ok_or_else(|| anyhow!("no layers given"))?;
    let source = SweepSource {
        ctx,
        records,
        model: ctx.model(src)?,
    };
    if let Some((m, _)) = &source.model {
        for &l in layers {
            m.encoder.check_layer(l)?;
        }
    }
    let probe = extract_features(
        &source.records,
        &ctx.cfg,
        source.model.as_ref().map(|(m, p)| (m, p)),
        first,
    )
    .context("featurize")?;
    let refs: Vec<Reference> = source
        .records
        .iter()
        .zip(&probe.features)
        .map(|(r, z)| reference_for(r, z.nrows(), probe.frame_rate).expect("filtered above"))
        .collect();
    let rows = layer_sweep(
        &source,
        layers,
        &refs,
        probe.frame_rate,
        &ctx.cfg.segmenter,
        &ctx.cfg.clusterer,
        &ctx.cfg.eval,
    )
    .context("layer sweep")?;
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &rows)?;
    let path = ctx.out("layer_sweep.csv")?;
    fs::write(&path, &csv).with_context(|| format!("write {}", path.display()))?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

fn plot(ctx: &Ctx, src: &Source, utterance: &str) -> Result<()> {
    let records = ctx.manifest(&src.manifest)?;
    let r = records
        .iter()
        .find(|r| r.utterance_id == utterance)
        .ok_or_else(|| anyhow!("utterance {utterance:?} not in manifest"))?;
    let feats = ctx.features(src, std::slice::from_ref(r))?;
    let z = &feats.features[0];
    let seg = segment_features(&z.view(), feats.frame_rate, &ctx.cfg.segmenter).context("segment")?;
    let reference = reference_for(r, z.nrows(), feats.frame_rate)
        .map(|rf| evaluator::reference_boundaries(&rf.alignments, rf.duration))
        .unwrap_or_default();
    let stem = ctx.out("ssm")?.join(file_stem(utterance));
    plot_ssm(&z.view(), &seg, &reference, feats.frame_rate, &stem).context("plot")?;
    println!("{}", stem.with_extension("pgm").display());
    Ok(())
}

fn synth(ctx: &Ctx, kind: SynthKind, n: usize, speakers: usize, seed: u64) -> Result<()> {
    if n == 0 || speakers == 0 {
        bail!("need at least one utterance and one speaker");
    }
    let dir = ctx.out("data")?;
    fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    let mut records = Vec::with_capacity(n);
    match kind {
        SynthKind::Planted => {
            let (_, utts) = planted_corpus(n, 16, &PlantedSpec::default(), true, seed);
            for (i, u) in utts.iter().enumerate() {
                let rel = format!("data/u{i:04}.stns");
                write_tensor(
                    &FrameFeatures::from_f64(&u.features, DEFAULT_FRAME_RATE)?,
                    ctx.out_dir.join(&rel),
                )?;
                records.push(record(i, speakers, None, Some(rel), u.alignments(DEFAULT_FRAME_RATE)));
            }
        }
        SynthKind::Speech => {
            const F0: [f64; 4] = [105.0, 130.0, 210.0, 245.0];
            for i in 0..n {
                let f0 = F0[(i % speakers) % F0.len()] * (1.0 + 0.02 * ((i % speakers) / F0.len()) as f64);
                let (w, al) = syllabic_utterance(f0, 1.5, 16_000, seed.wrapping_add(i as u64));
                let rel = format!("data/u{i:04}.wav");
                write_wav(&w, ctx.out_dir.join(&rel))?;
                records.push(record(i, speakers, Some(rel), None, al));
            }
        }
    }
    let path = ctx.out("manifest.jsonl")?;
    write_manifest(&records, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn record(
    i: usize,
    speakers: usize,
    audio: Option<String>,
    features: Option<String>,
    alignments: Vec<syllabion_core::io::AlignmentEntry>,
) -> UtteranceRecord {
    UtteranceRecord {
        utterance_id: format!("u{i:04}"),
        speaker_id: format!("s{}", i % speakers),
        audio,
        features,
        alignments: Some(alignments),
        overlapping_alignments: false,
    }
}
