//! Full-batch training, the multi-run selection protocol and the
//! single-instance ablation.

mod adam;
mod config;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use config::TrainConfig;

use crate::backprop::loss_and_grad;
use crate::embedset::{EmbedDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{auc, EvalReport};
use crate::milhead::{BagFeatures, HeadDims, HeadParams, Model, ParamLayout, TrainMode};
use crate::par::Exec;

/// One split's bags promoted for the head, with their ids and labels.
#[derive(Debug, Clone, Default)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub bags: Vec<BagFeatures>,
    pub labels: Vec<u8>,
}

impl SplitData {
    fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    fn require_both_classes(&self, split: Split) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(Error::SingleClass {
                split: split.as_str().into(),
            })
        }
    }
}

/// A dataset converted once so that repeated runs share it.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub embed_dim: usize,
    pub train: SplitData,
    pub val: SplitData,
    pub test: SplitData,
}

impl PreparedData {
    pub fn new(ds: &EmbedDataset) -> Result<Self> {
        let take = |split: Split| -> SplitData {
            let mut out = SplitData::default();
            for bag in ds.split_bags(split) {
                out.ids.push(bag.bag_id.clone());
                out.bags.push(BagFeatures::from(bag));
                out.labels.push(bag.label);
            }
            out
        };
        Ok(PreparedData {
            embed_dim: ds.embed_dim,
            train: take(Split::Train),
            val: take(Split::Val),
            test: take(Split::Test),
        })
    }

    pub fn split(&self, split: Split) -> &SplitData {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Outcome of one training run, holding the parameters of its best
/// validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub model: Model,
    pub val_auc: f64,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub test_metrics: EvalReport,
    /// Mean training loss at the start of each epoch.
    pub loss_history: Vec<f64>,
    /// Validation AUC after each epoch's update.
    pub val_auc_history: Vec<f64>,
}

impl RunResult {
    pub fn params(&self) -> &HeadParams {
        &self.model.params
    }
}

/// Uniform `±init_scale/√fan_in` for weights and the attention latent; zero
/// biases.
pub fn init_params(layout: ParamLayout, init_scale: f64, seed: u64) -> HeadParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HeadParams::zeros(layout.clone());
    let values = p.values_mut();
    for seg in layout.segments() {
        let Some(fan_in) = seg.fan_in else { continue };
        let a = init_scale / (fan_in as f64).sqrt();
        for v in &mut values[seg.range()] {
            *v = if a > 0.0 { rng.random_range(-a..a) } else { 0.0 };
        }
    }
    p
}

/// Bag scores of `bags` under `params` read with `mode`'s inference rule.
pub fn score_bags(params: &HeadParams, mode: TrainMode, bags: &[BagFeatures], exec: Exec) -> Result<Vec<f64>> {
    Model::new(params.clone(), mode)?.score_all(bags, exec)
}

/// Test metrics with the bACC threshold taken from validation.
pub fn evaluate(model: &Model, data: &PreparedData, exec: Exec) -> Result<EvalReport> {
    let val = model.score_all(&data.val.bags, exec)?;
    let test = model.score_all(&data.test.bags, exec)?;
    EvalReport::compute(&val, &data.val.labels, &test, &data.test.labels)
}

/// One view per example, carrying its bag's label.
fn view_examples(bags: &[BagFeatures]) -> Vec<BagFeatures> {
    let mut out = Vec::new();
    for bag in bags {
        let d = bag.dim();
        for row in bag.global.axis_iter(Axis(0)) {
            out.push(BagFeatures {
                global: row.insert_axis(Axis(0)).to_owned(),
                tiles: Array2::zeros((0, d)),
                label: bag.label,
            });
        }
    }
    out
}

fn check_inputs(data: &PreparedData, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    data.train.require_both_classes(Split::Train)?;
    data.val.require_both_classes(Split::Val)?;
    data.test.require_both_classes(Split::Test)
}

/// Full-batch Adam for `cfg.epochs` steps from the initialization drawn with
/// `seed`, keeping the parameters of the epoch with the highest validation
/// AUC (earliest on ties). SIL modes are routed to [`train_sil`].
pub fn train_once(data: &PreparedData, cfg: &TrainConfig, seed: u64, exec: Exec) -> Result<RunResult> {
    if cfg.mode.is_sil() {
        return train_sil(data, cfg, seed, exec);
    }
    check_inputs(data, cfg)?;
    fit(data, &data.train.bags, cfg, seed, exec)
}

/// Single-instance ablation: each view is a training example with its bag's
/// label; bag scores are the mean or max of view probabilities.
pub fn train_sil(data: &PreparedData, cfg: &TrainConfig, seed: u64, exec: Exec) -> Result<RunResult> {
    if !cfg.mode.is_sil() {
        return Err(Error::invalid(format!("train_sil needs a sil mode, got {}", cfg.mode)));
    }
    check_inputs(data, cfg)?;
    let views = view_examples(&data.train.bags);
    fit(data, &views, cfg, seed, exec)
}

fn fit(data: &PreparedData, examples: &[BagFeatures], cfg: &TrainConfig, seed: u64, exec: Exec) -> Result<RunResult> {
    let layout = ParamLayout::new(HeadDims::new(data.embed_dim), cfg.agg()?)?;
    let mut params = init_params(layout, cfg.init_scale, seed);
    let mut opt = Adam::new(params.values().len(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut val_auc_history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, HeadParams)> = None;
    for epoch in 1..=cfg.epochs {
        let (loss, grad) = loss_and_grad(examples, &params, exec)?;
        loss_history.push(loss);
        opt.step(params.values_mut(), grad.values());
        params.check_finite()?;

        let scores = score_bags(&params, cfg.mode, &data.val.bags, exec)?;
        let val_auc = auc(&scores, &data.val.labels)?;
        val_auc_history.push(val_auc);
        if best.as_ref().is_none_or(|(b, _, _)| val_auc > *b) {
            best = Some((val_auc, epoch, params.clone()));
        }
        log::debug!("seed {seed} epoch {epoch}: loss {loss:.6} val_auc {val_auc:.4}");
    }

    let (val_auc, best_epoch, params) = best.expect("epochs >= 1");
    let model = Model::new(params, cfg.mode)?;
    let test_metrics = evaluate(&model, data, exec)?;
    log::info!(
        "seed {seed}: best epoch {best_epoch}, val AUC {val_auc:.4}, test AUC {:.4}",
        test_metrics.auc
    );
    Ok(RunResult {
        seed,
        model,
        val_auc,
        best_epoch,
        test_metrics,
        loss_history,
        val_auc_history,
    })
}

/// Minimum, median and maximum of a metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Spread {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Per-run line of a sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub val_auc: f64,
    pub best_epoch: usize,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub best_seed: u64,
    pub best_val_auc: f64,
    pub best_test: EvalReport,
    pub val_auc: Spread,
    pub test_auc: Spread,
    pub test_bacc: Spread,
    pub test_spec_at_sens90: Spread,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    /// Index into `runs` of the selected run.
    pub best: usize,
    pub runs: Vec<RunResult>,
}

impl Sweep {
    pub fn best_run(&self) -> &RunResult {
        &self.runs[self.best]
    }

    pub fn report(&self) -> SweepReport {
        let col = |f: fn(&RunResult) -> f64| Spread::of(&self.runs.iter().map(f).collect::<Vec<_>>()).expect("runs >= 1");
        let best = self.best_run();
        SweepReport {
            best_seed: best.seed,
            best_val_auc: best.val_auc,
            best_test: best.test_metrics.clone(),
            val_auc: col(|r| r.val_auc),
            test_auc: col(|r| r.test_metrics.auc),
            test_bacc: col(|r| r.test_metrics.bacc),
            test_spec_at_sens90: col(|r| r.test_metrics.spec_at_sens90),
            runs: self
                .runs
                .iter()
                .map(|r| RunSummary {
                    seed: r.seed,
                    val_auc: r.val_auc,
                    best_epoch: r.best_epoch,
                    test: r.test_metrics.clone(),
                })
                .collect(),
        }
    }
}

/// Index of the highest validation AUC; the first (lowest seed) wins ties.
pub fn select_best(runs: &[RunResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if best.is_none_or(|b| r.val_auc > runs[b].val_auc) {
            best = Some(i);
        }
    }
    best
}

/// `cfg.runs` independent runs with seeds `cfg.seed, cfg.seed + 1, …`, run
/// concurrently under `exec`.
pub fn multi_run(data: &PreparedData, cfg: &TrainConfig, exec: Exec) -> Result<Sweep> {
    check_inputs(data, cfg)?;
    let results = exec.map_range(cfg.runs, |k| train_once(data, cfg, cfg.seed + k as u64, Exec::Sequential));
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let best = select_best(&runs).expect("runs >= 1");
    Ok(Sweep { best, runs })
}

/// Writes `epoch,train_loss,val_auc` rows, one per epoch.
pub fn write_run_log(path: &Path, run: &RunResult) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = String::from("epoch,train_loss,val_auc\n");
    for (k, (loss, auc)) in run.loss_history.iter().zip(&run.val_auc_history).enumerate() {
        body.push_str(&format!("{},{loss},{auc}\n", k + 1));
    }
    w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedset::{synth_dataset, SynthConfig};
    use crate::milhead::{AggConfig, AggKind};

    fn tiny_data() -> PreparedData {
        let ds = synth_dataset(&SynthConfig {
            n_bags: 80,
            dim: 6,
            tiles_per_view: (3, 6),
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        PreparedData::new(&ds).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: 1e-2,
            runs: 3,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let layout = ParamLayout::new(HeadDims::new(10), AggConfig::default()).unwrap();
        let p = init_params(layout.clone(), 1.0, 1);
        for seg in layout.segments() {
            let vals = &p.values()[seg.range()];
            match seg.fan_in {
                None => assert!(vals.iter().all(|&v| v == 0.0), "{}", seg.name),
                Some(f) => {
                    let a = 1.0 / (f as f64).sqrt();
                    assert!(vals.iter().all(|v| v.abs() < a), "{}", seg.name);
                    assert!(vals.iter().any(|&v| v != 0.0), "{}", seg.name);
                }
            }
        }
        assert_eq!(init_params(layout.clone(), 1.0, 1), p);
        assert_ne!(init_params(layout.clone(), 1.0, 2), p);
        assert!(init_params(layout, 0.0, 1).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_epoch_keeps_post_step_params() {
        let data = tiny_data();
        let cfg = quick(1);
        let r = train_once(&data, &cfg, 11, Exec::Sequential).unwrap();
        let mut p = init_params(r.params().layout().clone(), cfg.init_scale, 11);
        let (_, g) = loss_and_grad(&data.train.bags, &p, Exec::Sequential).unwrap();
        let mut opt = Adam::new(p.values().len(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        opt.step(p.values_mut(), g.values());
        assert_eq!(r.params(), &p);
        assert_eq!(r.best_epoch, 1);
        assert_eq!(r.loss_history.len(), 1);
    }

    #[test]
    fn zero_lr_freezes_params() {
        let data = tiny_data();
        let cfg = TrainConfig { lr: 0.0, ..quick(4) };
        let r = train_once(&data, &cfg, 2, Exec::Sequential).unwrap();
        assert_eq!(r.params(), &init_params(r.params().layout().clone(), 1.0, 2));
        assert!(r.loss_history.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r.best_epoch, 1);
    }

    #[test]
    fn best_epoch_has_max_val_auc() {
        let data = tiny_data();
        let r = train_once(&data, &quick(25), 4, Exec::Sequential).unwrap();
        let max = r.val_auc_history.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(r.val_auc, max);
        let first = r.val_auc_history.iter().position(|&v| v == max).unwrap();
        assert_eq!(r.best_epoch, first + 1);
        let replay = auc(&r.model.score_all(&data.val.bags, Exec::Sequential).unwrap(), &data.val.labels).unwrap();
        assert_eq!(replay, r.val_auc);
    }

    #[test]
    fn deterministic_and_exec_independent() {
        let data = tiny_data();
        let a = train_once(&data, &quick(6), 9, Exec::Sequential).unwrap();
        let b = train_once(&data, &quick(6), 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_run_selects_first_max() {
        let data = tiny_data();
        let sweep = multi_run(&data, &quick(5), Exec::Parallel).unwrap();
        assert_eq!(sweep.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![5, 6, 7]);
        let best = sweep.best_run();
        assert!(sweep.runs.iter().all(|r| r.val_auc <= best.val_auc));
        assert!(sweep.runs[..sweep.best].iter().all(|r| r.val_auc < best.val_auc));
        let single = multi_run(&data, &TrainConfig { runs: 1, ..quick(5) }, Exec::Sequential).unwrap();
        assert_eq!(single.best, 0);
        assert_eq!(single.runs[0], sweep.runs[0]);
        let report = sweep.report();
        assert_eq!(report.runs.len(), 3);
        assert!(report.test_auc.min <= report.test_auc.median && report.test_auc.median <= report.test_auc.max);
    }

    #[test]
    fn ties_go_to_the_lowest_seed() {
        let data = tiny_data();
        let r = train_once(&data, &quick(1), 1, Exec::Sequential).unwrap();
        let mut twin = r.clone();
        twin.seed = 2;
        assert_eq!(select_best(&[r, twin]), Some(0));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn sil_scores_views_and_aggregates() {
        let data = tiny_data();
        let cfg = TrainConfig {
            mode: TrainMode::SilMax,
            local_agg: AggKind::None,
            ..quick(3)
        };
        let r = train_once(&data, &cfg, 1, Exec::Sequential).unwrap();
        assert_eq!(r.model.mode, TrainMode::SilMax);
        assert!(train_sil(&data, &quick(3), 1, Exec::Sequential).is_err());
    }

    #[test]
    fn single_class_split_is_an_error() {
        let mut data = tiny_data();
        data.val.labels.iter_mut().for_each(|l| *l = 0);
        match train_once(&data, &quick(1), 1, Exec::Sequential) {
            Err(Error::SingleClass { split }) => assert_eq!(split, "val"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spread_median() {
        let s = Spread::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.min, s.median, s.max), (1.0, 2.5, 10.0));
        assert_eq!(Spread::of(&[4.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Spread::of(&[]).is_none());
    }

    #[test]
    fn run_log_rows() {
        let data = tiny_data();
        let r = train_once(&data, &quick(3), 1, Exec::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_run_log(&path, &r).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_auc");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("3,"));
    }
}
