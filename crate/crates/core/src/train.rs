//! Training loop, evaluation and ablation sweeps.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clm::{contrastive_loss, label_grid, LabelGrid};
use crate::config::{EvalConfig, RunConfig};
use crate::data::{load_checkpoint, save_checkpoint, stack_images, Dataset, Sample, Split};
use crate::diff::Graph;
use crate::error::{Error, Result};
use crate::losses::{combined_loss, density_loss, GroundTruth, LossWeights};
use crate::metrics::{detect_points, mae_rmse, match_with, prf};
use crate::model::Ldfnet;
use crate::mpm::{consistent_loss, make_mask, MaskSpec};
use crate::optim::Adam;
use crate::DenseArray;

pub const LOG_FILE: &str = "train_log.csv";
pub const SUMMARY_FILE: &str = "train_summary.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_HEADER: [&str; 7] = ["epoch", "L_d", "L_mp", "L_cl", "total", "val_mae", "val_rmse"];
pub const SUMMARY_HEADER: [&str; 5] = ["initial_val_mae", "initial_val_rmse", "best_epoch", "best_val_mae", "final_val_mae"];
pub const METRICS_HEADER: [&str; 11] =
    ["image", "gt_count", "pred_count", "mae", "rmse", "tp", "fp", "fn", "precision", "recall", "f1"];
pub const SWEEP_HEADER: [&str; 9] =
    ["axis", "value", "seed", "initial_val_mae", "val_mae", "val_rmse", "precision", "recall", "f1"];

fn num(v: f64) -> String {
    format!("{v:.8}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, 0, format!("{other:?}")),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A sample with its per-image training targets.
pub struct Prepared {
    pub sample: Sample,
    pub gt: GroundTruth,
    pub labels: LabelGrid,
}

pub fn prepare(samples: &[Sample], cfg: &RunConfig) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                gt: GroundTruth::new(&s.points, s.height(), s.width())?,
                labels: label_grid(&s.points, s.height(), s.width(), cfg.clm.dilation)?,
                sample: s.clone(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub l_d: f64,
    pub l_mp: f64,
    pub l_cl: f64,
    pub total: f64,
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub model: Ldfnet,
    opt: Adam,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Ldfnet::new(&cfg.model, cfg.seed)?;
        let opt = Adam::new(&model.params, cfg.optim.lr);
        Ok(Self { cfg: cfg.clone(), model, opt })
    }

    fn uses_mpm(&self) -> bool {
        self.cfg.loss.alpha > 0.0 && self.cfg.mask.ratio > 0.0
    }

    /// Loss terms and their graph for one batch; `mask_seed` seeds image `i`'s mask with
    /// `mask_seed + i`.
    pub fn losses(&self, g: &mut Graph, params: &crate::param::Bound, batch: &[&Prepared], mask_seed: u64) -> Result<(crate::Var, StepStats)> {
        let cfg = &self.cfg;
        let samples: Vec<&Sample> = batch.iter().map(|p| &p.sample).collect();
        let x = g.constant(stack_images(&samples)?);
        let masks: Option<Vec<MaskSpec>> = if self.uses_mpm() {
            let (h, w) = (samples[0].height() / 32, samples[0].width() / 32);
            Some(
                (0..batch.len())
                    .map(|i| make_mask(h * w, cfg.mask.ratio, cfg.mask.strategy, (h, w), mask_seed.wrapping_add(i as u64)))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        let fwd = self.model.forward(g, params, x, masks.as_deref())?;
        let gts: Vec<GroundTruth> = batch.iter().map(|p| p.gt.clone()).collect();
        let (l_d, _) = density_loss(g, fwd.density, &gts, &cfg.loss, &cfg.sinkhorn, cfg.tv.sigma)?;
        let l_mp = match (&masks, fwd.fd_masked) {
            (Some(m), Some(fdm)) => Some(consistent_loss(
                g,
                fdm,
                fwd.fd,
                m,
                cfg.mask.variant,
                Some(fwd.tokens),
                Some((&self.model.mpm, params)),
                cfg.mask.detach_target,
            )?),
            _ => None,
        };
        let l_cl = if cfg.loss.beta > 0.0 {
            let proj = self.model.clm_head.project(g, params, fwd.fused)?;
            let labels: Vec<LabelGrid> = batch.iter().map(|p| p.labels.clone()).collect();
            Some(contrastive_loss(g, proj, &labels, cfg.clm.variant)?.loss)
        } else {
            None
        };
        let total = combined_loss(g, l_d, l_mp, l_cl, &cfg.loss)?;
        let val = |v: Option<crate::Var>| v.map_or(0.0, |v| g.value(v).item());
        let stats = StepStats { l_d: g.value(l_d).item(), l_mp: val(l_mp), l_cl: val(l_cl), total: g.value(total).item() };
        Ok((total, stats))
    }

    /// Forward, backward and one optimizer update.
    pub fn step(&mut self, batch: &[&Prepared], mask_seed: u64) -> Result<StepStats> {
        let mut g = Graph::new();
        let params = self.model.params.bind(&mut g, true);
        let (total, stats) = self.losses(&mut g, &params, batch, mask_seed)?;
        if !stats.total.is_finite() {
            return Err(Error::NonFiniteValue(format!("total loss {:?}", stats)));
        }
        let grads = g.backward(total)?;
        let warm = self.cfg.optim.warmup_steps;
        let t = self.opt.steps() as usize + 1;
        self.opt.lr = if t < warm { self.cfg.optim.lr * t as f64 / warm as f64 } else { self.cfg.optim.lr };
        self.opt.step(&mut self.model.params, &params, &grads);
        Ok(stats)
    }
}

/// Density maps `[1, 1, h, w]` of every sample, predicted in batches.
pub fn predict_densities(model: &Ldfnet, samples: &[&Sample], batch_size: usize) -> Result<Vec<DenseArray>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let d = model.predict(&stack_images(chunk)?)?;
        let s = d.shape();
        let per = s[2] * s[3];
        for i in 0..chunk.len() {
            out.push(DenseArray::new(vec![1, 1, s[2], s[3]], d.data()[i * per..(i + 1) * per].to_vec())?);
        }
    }
    Ok(out)
}

pub fn count_errors(model: &Ldfnet, samples: &[&Sample], batch_size: usize) -> Result<(f64, f64)> {
    let d = predict_densities(model, samples, batch_size)?;
    let pred: Vec<f64> = d.iter().map(|m| m.sum()).collect();
    let gt: Vec<f64> = samples.iter().map(|s| s.count() as f64).collect();
    mae_rmse(&pred, &gt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub stats: StepStats,
    pub val: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub rows: Vec<EpochRow>,
    pub initial_val: Option<(f64, f64)>,
    pub best_epoch: usize,
    pub best_val_mae: Option<f64>,
}

impl TrainOutcome {
    pub fn final_val_mae(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.val.map(|v| v.0))
    }

    fn log_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let (mae, rmse) = r.val.map_or((String::new(), String::new()), |(a, b)| (num(a), num(b)));
                vec![r.epoch.to_string(), num(r.stats.l_d), num(r.stats.l_mp), num(r.stats.l_cl), num(r.stats.total), mae, rmse]
            })
            .collect()
    }

    fn summary_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), num);
        vec![
            opt(self.initial_val.map(|v| v.0)),
            opt(self.initial_val.map(|v| v.1)),
            self.best_epoch.to_string(),
            opt(self.best_val_mae),
            opt(self.final_val_mae()),
        ]
    }
}

/// Train on in-memory samples. With `out`, the log, summary, config and best-val
/// checkpoint are written there. Returns the best-val model (the last one without a
/// validation set).
pub fn train_on(cfg: &RunConfig, train: &[Sample], val: &[Sample], out: Option<&Path>) -> Result<(Ldfnet, TrainOutcome)> {
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut trainer = Trainer::new(cfg)?;
    let data = prepare(train, cfg)?;
    let val_refs: Vec<&Sample> = val.iter().collect();
    let bs = cfg.optim.batch_size;
    let evaluate = |m: &Ldfnet| -> Result<Option<(f64, f64)>> {
        if val_refs.is_empty() {
            Ok(None)
        } else {
            count_errors(m, &val_refs, bs).map(Some)
        }
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.save(&dir.join(CONFIG_FILE))?;
    }
    let initial_val = evaluate(&trainer.model)?;
    let mut best = (0usize, f64::INFINITY, trainer.model.params.clone());
    let mut rows = Vec::with_capacity(cfg.optim.epochs);
    for epoch in 1..=cfg.optim.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut acc = StepStats::default();
        let chunks: Vec<&[usize]> = order.chunks(bs).collect();
        for (bi, chunk) in chunks.iter().enumerate() {
            let mask_seed = rng.next_u64();
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let s = match trainer.step(&batch, mask_seed) {
                Ok(s) => s,
                Err(Error::NonFiniteValue(detail)) => {
                    log::error!("diverged at epoch {epoch} batch {bi}: images {chunk:?}, mask seed {mask_seed}: {detail}");
                    return Err(Error::Diverged { epoch, batch: bi, seed: mask_seed, detail });
                }
                Err(e) => return Err(e),
            };
            acc.l_d += s.l_d;
            acc.l_mp += s.l_mp;
            acc.l_cl += s.l_cl;
            acc.total += s.total;
        }
        let nb = chunks.len() as f64;
        let stats = StepStats { l_d: acc.l_d / nb, l_mp: acc.l_mp / nb, l_cl: acc.l_cl / nb, total: acc.total / nb };
        let val = evaluate(&trainer.model)?;
        log::info!(
            "epoch {epoch}: L_d {:.4} L_mp {:.4} L_cl {:.4} total {:.4} val {:?}",
            stats.l_d,
            stats.l_mp,
            stats.l_cl,
            stats.total,
            val
        );
        let score = val.map_or(f64::NEG_INFINITY, |v| v.0);
        if score < best.1 || val.is_none() {
            best = (epoch, score, trainer.model.params.clone());
            if let Some(dir) = out {
                save_checkpoint(&trainer.model.params, dir)?;
            }
        }
        rows.push(EpochRow { epoch, stats, val });
    }
    let outcome = TrainOutcome {
        rows,
        initial_val,
        best_epoch: best.0,
        best_val_mae: if best.1.is_finite() { Some(best.1) } else { None },
    };
    if let Some(dir) = out {
        if cfg.optim.epochs == 0 {
            save_checkpoint(&trainer.model.params, dir)?;
        }
        write_csv(&dir.join(LOG_FILE), &LOG_HEADER, &outcome.log_rows())?;
        write_csv(&dir.join(SUMMARY_FILE), &SUMMARY_HEADER, &[outcome.summary_row()])?;
    }
    let mut model = trainer.model;
    if cfg.optim.epochs > 0 {
        model.params = best.2;
    }
    Ok((model, outcome))
}

pub fn train(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let ds = Dataset::open(data_dir)?;
    let train = ds.load(Split::Train)?;
    let val = ds.load(Split::Val)?;
    Ok(train_on(cfg, &train, &val, Some(out_dir))?.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub gt_count: f64,
    pub pred_count: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ImageMetrics>,
    pub mae: f64,
    pub rmse: f64,
    /// Micro-averaged over all images.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsReport {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let e = (r.pred_count - r.gt_count).abs();
                vec![
                    r.id.clone(),
                    num(r.gt_count),
                    num(r.pred_count),
                    num(e),
                    num(e),
                    r.tp.to_string(),
                    r.fp.to_string(),
                    r.fn_.to_string(),
                    num(r.precision),
                    num(r.recall),
                    num(r.f1),
                ]
            })
            .collect();
        let n = self.rows.len() as f64;
        let sum = |f: fn(&ImageMetrics) -> usize| self.rows.iter().map(f).sum::<usize>().to_string();
        out.push(vec![
            "summary".into(),
            num(self.rows.iter().map(|r| r.gt_count).sum::<f64>() / n),
            num(self.rows.iter().map(|r| r.pred_count).sum::<f64>() / n),
            num(self.mae),
            num(self.rmse),
            sum(|r| r.tp),
            sum(|r| r.fp),
            sum(|r| r.fn_),
            num(self.precision),
            num(self.recall),
            num(self.f1),
        ]);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &METRICS_HEADER, &self.csv_rows())
    }
}

/// Metrics from precomputed density maps.
pub fn evaluate_densities(samples: &[(String, &Sample)], densities: &[DenseArray], eval: &EvalConfig) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if samples.len() != densities.len() {
        return Err(Error::LengthMismatch(samples.len(), densities.len()));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for ((id, s), d) in samples.iter().zip(densities) {
        let found = detect_points(d, &eval.peaks)?;
        let m = match_with(eval.matching, &found, &s.points, eval.sigma);
        let (precision, recall, f1) = prf(&m);
        rows.push(ImageMetrics {
            id: id.clone(),
            gt_count: s.count() as f64,
            pred_count: d.sum(),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision,
            recall,
            f1,
        });
    }
    let pred: Vec<f64> = rows.iter().map(|r| r.pred_count).collect();
    let gt: Vec<f64> = rows.iter().map(|r| r.gt_count).collect();
    let (mae, rmse) = mae_rmse(&pred, &gt)?;
    let total = crate::metrics::MatchResult {
        tp: rows.iter().map(|r| r.tp).sum(),
        fp: rows.iter().map(|r| r.fp).sum(),
        fn_: rows.iter().map(|r| r.fn_).sum(),
        pairs: Vec::new(),
    };
    let (precision, recall, f1) = prf(&total);
    Ok(MetricsReport { rows, mae, rmse, precision, recall, f1 })
}

/// Inference-only evaluation; the contrastive head never enters the graph.
pub fn evaluate_model(model: &Ldfnet, samples: &[(String, &Sample)], eval: &EvalConfig, batch_size: usize) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let refs: Vec<&Sample> = samples.iter().map(|(_, s)| *s).collect();
    let d = predict_densities(model, &refs, batch_size)?;
    evaluate_densities(samples, &d, eval)
}

/// Which dataset entries to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Val,
    All,
}

impl FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "all" => Ok(Self::All),
            other => Err(Error::Config(format!("unknown split `{other}` (train, val or all)"))),
        }
    }
}

/// Load the checkpoint in `ckpt_dir` into a model built from `cfg` and evaluate it.
pub fn evaluate(cfg: &RunConfig, ckpt_dir: &Path, data_dir: &Path, split: EvalSplit) -> Result<MetricsReport> {
    let mut model = Ldfnet::new(&cfg.model, cfg.seed)?;
    load_checkpoint(&mut model.params, ckpt_dir)?;
    let ds = Dataset::open(data_dir)?;
    let mut samples = Vec::new();
    for (id, s) in &ds.entries {
        let keep = match split {
            EvalSplit::All => true,
            EvalSplit::Train => *s == Split::Train,
            EvalSplit::Val => *s == Split::Val,
        };
        if keep {
            samples.push((id.clone(), crate::data::read_sample(&ds.root, id)?));
        }
    }
    let refs: Vec<(String, &Sample)> = samples.iter().map(|(id, s)| (id.clone(), s)).collect();
    evaluate_model(&model, &refs, &cfg.eval, cfg.optim.batch_size)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    MaskRatio,
    MaskStrategy,
    EncoderLayers,
    ClmVariant,
    Dilation,
    Alpha,
    Beta,
    /// `baseline` (no MPM/CLM), `mpm`, `clm`, `full`.
    Components,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 8] = [
        SweepAxis::MaskRatio,
        SweepAxis::MaskStrategy,
        SweepAxis::EncoderLayers,
        SweepAxis::ClmVariant,
        SweepAxis::Dilation,
        SweepAxis::Alpha,
        SweepAxis::Beta,
        SweepAxis::Components,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::MaskRatio => "mask_ratio",
            SweepAxis::MaskStrategy => "mask_strategy",
            SweepAxis::EncoderLayers => "encoder_layers",
            SweepAxis::ClmVariant => "clm_variant",
            SweepAxis::Dilation => "dilation",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::Components => "components",
        }
    }

    /// `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut c = cfg.clone();
        let float = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("{}: `{v}` is not a number", self.as_str())));
        match self {
            SweepAxis::MaskRatio => c.mask.ratio = float(value)?,
            SweepAxis::MaskStrategy => c.mask.strategy = value.parse()?,
            SweepAxis::EncoderLayers => {
                c.model.encoder.layers =
                    value.parse().map_err(|_| Error::Config(format!("encoder_layers: `{value}` is not a count")))?
            }
            SweepAxis::ClmVariant => c.clm.variant = value.parse()?,
            SweepAxis::Dilation => c.clm.dilation = value.parse()?,
            SweepAxis::Alpha => c.loss.alpha = float(value)?,
            SweepAxis::Beta => c.loss.beta = float(value)?,
            SweepAxis::Components => {
                let d = LossWeights::default();
                let alpha = if cfg.loss.alpha > 0.0 { cfg.loss.alpha } else { d.alpha };
                let beta = if cfg.loss.beta > 0.0 { cfg.loss.beta } else { d.beta };
                (c.loss.alpha, c.loss.beta) = match value {
                    "baseline" => (0.0, 0.0),
                    "mpm" => (alpha, 0.0),
                    "clm" => (0.0, beta),
                    "full" => (alpha, beta),
                    other => return Err(Error::Config(format!("components: unknown setting `{other}` (baseline, mpm, clm, full)"))),
                };
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| Error::UnknownAxis(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub seed: u64,
    pub initial_val_mae: f64,
    pub report: MetricsReport,
}

/// Train and evaluate once per (value, seed). Every setting uses the same seed list.
pub fn ablate(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    train: &[Sample],
    val: &[(String, Sample)],
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput);
    }
    let configs: Vec<RunConfig> = values.iter().map(|v| axis.apply(base, v)).collect::<Result<_>>()?;
    let val_samples: Vec<Sample> = val.iter().map(|(_, s)| s.clone()).collect();
    let val_refs: Vec<(String, &Sample)> = val.iter().map(|(id, s)| (id.clone(), s)).collect();
    let mut rows = Vec::new();
    for (value, cfg) in values.iter().zip(&configs) {
        for &seed in seeds {
            let cfg = RunConfig { seed, ..cfg.clone() };
            let run_dir = out.map(|d| d.join(format!("{}={value}", axis.as_str())).join(format!("seed={seed}")));
            let (model, outcome) = train_on(&cfg, train, &val_samples, run_dir.as_deref())?;
            let report = evaluate_model(&model, &val_refs, &cfg.eval, cfg.optim.batch_size)?;
            log::info!("{axis}={value} seed {seed}: val MAE {:.4}", report.mae);
            rows.push(SweepRow {
                axis,
                value: value.clone(),
                seed,
                initial_val_mae: outcome.initial_val.map_or(f64::NAN, |v| v.0),
                report,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.axis.to_string(),
                r.value.clone(),
                r.seed.to_string(),
                num(r.initial_val_mae),
                num(r.report.mae),
                num(r.report.rmse),
                num(r.report.precision),
                num(r.report.recall),
                num(r.report.f1),
            ]
        })
        .collect();
    write_csv(path, &SWEEP_HEADER, &body)
}

/// Median val MAE per sweep value, in first-seen order.
pub fn median_mae_by_value(rows: &[SweepRow]) -> Vec<(String, f64)> {
    let mut values: Vec<String> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value.clone());
        }
    }
    values
        .into_iter()
        .map(|v| {
            let mut m: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.report.mae).collect();
            m.sort_by(f64::total_cmp);
            let k = m.len();
            let med = if k % 2 == 1 { m[k / 2] } else { 0.5 * (m[k / 2 - 1] + m[k / 2]) };
            (v, med)
        })
        .collect()
}

pub fn read_csv_header(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    Ok(r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_scene, Point, SceneConfig};
    use crate::model::ModelConfig;
    use crate::mpm::EncoderConfig;

    pub(crate) fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig {
            stage_channels: vec![4, 4, 8, 8, 8],
            decoder_channels: vec![8],
            encoder: EncoderConfig { layers: 1, hidden: 8, heads: 2, ffn: 16, positional: true },
            clm_dim: 4,
        };
        cfg.optim.epochs = 2;
        cfg.optim.batch_size = 2;
        cfg
    }

    fn scenes(n: usize, seed: u64) -> Vec<Sample> {
        (0..n).map(|i| gen_scene(&SceneConfig { seed: seed + i as u64, count_range: [0, 8], ..SceneConfig::default() }).unwrap()).collect()
    }

    #[test]
    fn zero_weights_log_zero_auxiliary_terms() {
        let mut cfg = tiny_config();
        cfg.loss.alpha = 0.0;
        cfg.loss.beta = 0.0;
        let (_, out) = train_on(&cfg, &scenes(4, 0), &scenes(2, 100), None).unwrap();
        assert!(out.rows.iter().all(|r| r.stats.l_mp == 0.0 && r.stats.l_cl == 0.0));
        assert!(out.rows.iter().all(|r| r.stats.total == r.stats.l_d));
    }

    #[test]
    fn zero_ratio_gives_zero_consistent_loss() {
        let mut cfg = tiny_config();
        cfg.mask.ratio = 0.0;
        let (_, out) = train_on(&cfg, &scenes(4, 0), &scenes(2, 100), None).unwrap();
        assert!(out.rows.iter().all(|r| r.stats.l_mp == 0.0));
        assert!(out.rows.iter().any(|r| r.stats.l_cl > 0.0));
    }

    #[test]
    fn empty_scenes_train() {
        let empty: Vec<Sample> = (0..4)
            .map(|i| gen_scene(&SceneConfig { seed: i, count_range: [0, 0], ..SceneConfig::default() }).unwrap())
            .collect();
        let (_, out) = train_on(&tiny_config(), &empty, &empty[..2], None).unwrap();
        assert!(out.rows.iter().all(|r| r.stats.total.is_finite()));
    }

    #[test]
    fn perfect_densities_score_perfectly() {
        let pts = vec![Point::new(5.0, 5.0), Point::new(30.0, 13.0), Point::new(50.0, 50.0)];
        let s = Sample { image: DenseArray::zeros(&[64, 64]), points: pts };
        let gt = GroundTruth::new(&s.points, 64, 64).unwrap();
        let d = gt.dot_grid.reshaped(&[1, 1, 8, 8]).unwrap();
        let r = evaluate_densities(&[("0000".into(), &s)], &[d], &EvalConfig::default()).unwrap();
        assert_eq!((r.mae, r.rmse, r.f1), (0.0, 0.0, 1.0));
        assert!(matches!(evaluate_densities(&[], &[], &EvalConfig::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn axes_parse_and_apply() {
        let base = RunConfig::default();
        assert!(matches!("learning_rate".parse::<SweepAxis>(), Err(Error::UnknownAxis(_))));
        let c = SweepAxis::Components.apply(&base, "baseline").unwrap();
        assert_eq!((c.loss.alpha, c.loss.beta), (0.0, 0.0));
        let c = SweepAxis::Components.apply(&c, "full").unwrap();
        assert_eq!((c.loss.alpha, c.loss.beta), (0.1, 0.01));
        assert_eq!(SweepAxis::MaskRatio.apply(&base, "0.75").unwrap().mask.ratio, 0.75);
        assert!(SweepAxis::MaskRatio.apply(&base, "2").is_err());
        assert_eq!(SweepAxis::EncoderLayers.apply(&base, "2").unwrap().model.encoder.layers, 2);
        for a in SweepAxis::ALL {
            assert_eq!(a.as_str().parse::<SweepAxis>().unwrap(), a);
        }
    }
}
