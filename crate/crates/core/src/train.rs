//! The regularized objective, the training loop (Adam, step decay, early
//! stopping on a validation carve-out) and the repeated-run uncertainty protocol.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Stage, StandardizationStats};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, RSquaredMode};
use crate::models::{predict_network, McresanetConfig, Model, ModelKind, Network, OUTPUT_NAMES};
use crate::nn::{AdamState, Graph, ParamKind, ParamSet, Tensor, Var};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Step decay: the rate is multiplied by `decay_factor` every `decay_interval` epochs.
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Coefficient of the squared-weight penalty.
    pub l2: f64,
    pub patience: usize,
    pub min_delta: f64,
    /// Share of the training rows held out to monitor early stopping.
    pub validation_fraction: f64,
    /// When off, training runs all `max_epochs` and keeps the final parameters.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay_factor: 0.5,
            decay_interval: 20,
            max_epochs: 100,
            batch_size: 64,
            l2: 1e-5,
            patience: 10,
            min_delta: 1e-6,
            validation_fraction: 0.1,
            early_stopping: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad(format!("decay_factor must be positive, got {}", self.decay_factor));
        }
        if self.decay_interval == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return bad("decay_interval, max_epochs and batch_size must be at least 1".into());
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max_epochs {}", self.patience, self.max_epochs));
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must be in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

/// Learning rate for 0-based `epoch`: `lr₀ · factor^⌊epoch / interval⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.learning_rate * cfg.decay_factor.powi((epoch / cfg.decay_interval) as i32)
}

/// Mean squared error plus `alpha` times the squared weight-matrix entries.
pub fn loss(pred: &[f64], target: &[f64], params: &ParamSet, alpha: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::dim(
            "loss",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse + alpha * params.weight_sum_squares())
}

/// Records the same objective as [`loss`] on the tape.
pub fn objective<N: Network + ?Sized>(
    g: &mut Graph,
    net: &N,
    x: &Tensor,
    target: &Tensor,
    alpha: f64,
) -> Result<Var> {
    let set = net.params();
    let xi = g.input(x.clone());
    let y = net.forward_with(g, set, xi)?;
    let mse = g.mse(y, target.clone())?;
    if alpha == 0.0 {
        return Ok(mse);
    }
    let mut penalty: Option<Var> = None;
    for (id, p) in set.iter() {
        if p.kind != ParamKind::Weight {
            continue;
        }
        let leaf = g.param(set, id);
        let s = g.sum_squares(leaf);
        penalty = Some(match penalty {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
    }
    match penalty {
        Some(p) => {
            let p = g.scale(p, alpha);
            g.add(mse, p)
        }
        None => Ok(mse),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    Diverged,
}

/// Per-epoch trace of one training run (one ensemble head or one baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub label: String,
    pub train_loss: Vec<f64>,
    /// `None` when no validation rows were carved out.
    pub val_loss: Vec<Option<f64>>,
    pub learning_rate: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Monitored loss at `best_epoch` (validation, or training without a carve-out).
    pub best_loss: f64,
    pub stop_reason: StopReason,
    pub duration_secs: f64,
}

impl TrainHistory {
    fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            learning_rate: Vec::new(),
            best_epoch: 0,
            best_loss: f64::INFINITY,
            stop_reason: StopReason::MaxEpochs,
            duration_secs: 0.0,
        }
    }

    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// Equality of everything except wall-clock time.
    pub fn same_trace(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.duration_secs = other.duration_secs;
        a == *other
    }
}

/// Losses reported by one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub train: f64,
    pub validation: Option<f64>,
}

/// Counts epochs without an improvement of at least `min_delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    /// Records the monitored loss of a 0-based epoch; true when it is the new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if self.best_epoch.is_none() || self.best - loss >= self.min_delta {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}

/// What the loop needs from a model: run an epoch, keep and restore the best state.
pub trait EpochRunner {
    type Snapshot;
    fn run_epoch(&mut self, epoch: usize, lr: f64) -> Result<EpochLosses>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

/// Step-decayed epochs with early stopping; restores the best epoch's state.
pub fn run_loop<R: EpochRunner>(runner: &mut R, cfg: &TrainConfig, label: &str) -> Result<TrainHistory> {
    cfg.validate()?;
    let start = Instant::now();
    let mut history = TrainHistory::new(label);
    let mut stopping = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best = None;
    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        let losses = runner.run_epoch(epoch, lr)?;
        history.train_loss.push(losses.train);
        history.val_loss.push(losses.validation);
        history.learning_rate.push(lr);
        log::info!(
            "{label}: {}, {lr:e}, {:.6e}, {}",
            epoch + 1,
            losses.train,
            losses.validation.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"))
        );
        let monitored = losses.validation.unwrap_or(losses.train);
        if !losses.train.is_finite() || !monitored.is_finite() {
            history.stop_reason = StopReason::Diverged;
            history.duration_secs = start.elapsed().as_secs_f64();
            return Err(Error::Diverged {
                epoch: epoch + 1,
                history: Box::new(history),
            });
        }
        if cfg.early_stopping {
            if stopping.observe(epoch, monitored) {
                best = Some(runner.snapshot());
            }
            if stopping.should_stop() {
                history.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    match (cfg.early_stopping, stopping.best(), best) {
        (true, Some((epoch, loss)), Some(snapshot)) => {
            runner.restore(snapshot);
            history.best_epoch = epoch + 1;
            history.best_loss = loss;
        }
        _ => {
            let last = history.epochs() - 1;
            history.best_epoch = last + 1;
            history.best_loss = history.val_loss[last].unwrap_or(history.train_loss[last]);
        }
    }
    history.duration_secs = start.elapsed().as_secs_f64();
    Ok(history)
}

/// Mini-batch Adam over one network and its own targets.
struct NetworkRunner<'a, N: Network> {
    net: &'a mut N,
    adam: AdamState,
    x: &'a Tensor,
    y: Tensor,
    validation: Option<(&'a Tensor, Tensor)>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    batch: usize,
    l2: f64,
    graph: Graph,
}

impl<'a, N: Network> NetworkRunner<'a, N> {
    fn new(
        net: &'a mut N,
        x: &'a Tensor,
        y: Tensor,
        validation: Option<(&'a Tensor, Tensor)>,
        rng: ChaCha8Rng,
        cfg: &TrainConfig,
    ) -> Self {
        let adam = AdamState::new(net.params());
        Self {
            net,
            adam,
            order: (0..x.rows()).collect(),
            x,
            y,
            validation,
            rng,
            batch: cfg.batch_size,
            l2: cfg.l2,
            graph: Graph::new(),
        }
    }
}

fn mse(pred: &Tensor, target: &Tensor) -> f64 {
    let n = pred.len() as f64;
    pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

impl<N: Network> EpochRunner for NetworkRunner<'_, N> {
    type Snapshot = ParamSet;

    fn run_epoch(&mut self, _epoch: usize, lr: f64) -> Result<EpochLosses> {
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for rows in self.order.chunks(self.batch) {
            let xb = self.x.select_rows(rows)?;
            let yb = self.y.select_rows(rows)?;
            let g = &mut self.graph;
            g.clear();
            let out = objective(g, &*self.net, &xb, &yb, self.l2)?;
            total += g.value(out).data()[0] * rows.len() as f64;
            let grads = g.backward(out)?.for_params(self.net.params());
            // release the tape's handles so the update writes in place
            g.clear();
            self.adam.step(self.net.params_mut(), &grads, lr)?;
        }
        let validation = match &self.validation {
            Some((xv, yv)) => Some(mse(&predict_network(&*self.net, xv)?, yv)),
            None => None,
        };
        Ok(EpochLosses {
            train: total / self.order.len() as f64,
            validation,
        })
    }

    fn snapshot(&self) -> ParamSet {
        self.net.params().clone()
    }

    fn restore(&mut self, snapshot: ParamSet) {
        *self.net.params_mut() = snapshot;
    }
}

/// Splits training rows into (fit, validation); the carve-out is seeded and
/// rounds half up, always leaving at least one fitting row.
pub fn validation_carve(rows: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((rows.len() as f64 * fraction + 0.5).floor() as usize).min(rows.len().saturating_sub(1));
    if n_val == 0 {
        return (rows.to_vec(), Vec::new());
    }
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut seeds::rng(seed, seeds::stream::VALIDATION));
    let mut val = shuffled[..n_val].to_vec();
    let mut fit = shuffled[n_val..].to_vec();
    val.sort_unstable();
    fit.sort_unstable();
    (fit, val)
}

/// Fits `net` on standardized `(x, y)`; `label` prefixes the progress lines.
pub fn train_network<N: Network>(
    net: &mut N,
    x: &Tensor,
    y: &Tensor,
    validation: Option<(&Tensor, &Tensor)>,
    cfg: &TrainConfig,
    rng: ChaCha8Rng,
    label: &str,
) -> Result<TrainHistory> {
    if x.rows() == 0 || x.rows() != y.rows() || y.cols() != net.output_width() {
        return Err(Error::dim(
            label,
            format!("features {:?}, targets {:?}, output width {}", x.shape(), y.shape(), net.output_width()),
        ));
    }
    let validation = validation.map(|(xv, yv)| (xv, yv.clone()));
    let mut runner = NetworkRunner::new(net, x, y.clone(), validation, rng, cfg);
    run_loop(&mut runner, cfg, label)
}

/// Trains every part of `model` on the standardized, split dataset.
///
/// Ensemble heads each fit their own output column with their own shuffle
/// stream and may run in parallel; baselines fit all 10 outputs jointly.
/// Returns one history per head (or one for a baseline).
pub fn train(model: &mut Model, ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<TrainHistory>> {
    cfg.validate()?;
    if !ds.has_stage(Stage::Standardized) {
        return Err(Error::Usage("training needs a standardized, split dataset".into()));
    }
    let train_rows = ds.train_rows()?;
    if train_rows.is_empty() {
        return Err(Error::EmptyDataset("the training split has no rows".into()));
    }
    let (fit, val) = validation_carve(train_rows, cfg.validation_fraction, cfg.seed);
    let (x, y) = (ds.features(&fit)?, ds.targets(&fit)?);
    let holdout = if val.is_empty() {
        None
    } else {
        Some((ds.features(&val)?, ds.targets(&val)?))
    };
    match model {
        Model::Mcresanet(ens) => ens
            .heads_mut()
            .par_iter_mut()
            .enumerate()
            .map(|(k, head)| {
                let yk = y.column(k)?;
                let vk = match &holdout {
                    Some((xv, yv)) => Some((xv, yv.column(k)?)),
                    None => None,
                };
                let rng = seeds::rng2(cfg.seed, seeds::stream::SHUFFLE, k as u64);
                let label = format!("head{k} ({})", OUTPUT_NAMES[k]);
                train_network(head, &x, &yk, vk.as_ref().map(|(a, b)| (*a, b)), cfg, rng, &label)
            })
            .collect(),
        Model::Mlp(net) => {
            let rng = seeds::rng(cfg.seed, seeds::stream::SHUFFLE);
            let h = train_network(net, &x, &y, holdout.as_ref().map(|(a, b)| (a, b)), cfg, rng, "mlp")?;
            Ok(vec![h])
        }
        Model::Cnn(net) => {
            let rng = seeds::rng(cfg.seed, seeds::stream::SHUFFLE);
            let h = train_network(net, &x, &y, holdout.as_ref().map(|(a, b)| (a, b)), cfg, rng, "cnn")?;
            Ok(vec![h])
        }
    }
}

/// Test-set MAE and RMSE of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    /// Per output, in `OUTPUT_NAMES` order.
    pub mae: Vec<f64>,
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpread {
    pub output: String,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
}

/// Repeated fresh trainings evaluated on one fixed test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub model: ModelKind,
    pub runs: Vec<RunMetrics>,
    /// Mean and sample standard deviation (n − 1) across runs, one row per output.
    pub outputs: Vec<OutputSpread>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// One train + evaluate repetition; `seed` drives both initialization and shuffling.
pub fn run_once(
    kind: ModelKind,
    mcfg: McresanetConfig,
    ds: &Dataset,
    stats: &StandardizationStats,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RunMetrics> {
    let mut model = Model::new(kind, mcfg, seed)?;
    train(&mut model, ds, &TrainConfig { seed, ..*cfg })?;
    let report = evaluate(&model, kind.as_str(), ds, stats, RSquaredMode::Standard)?;
    let outputs = &report.rows[..OUTPUT_NAMES.len()];
    Ok(RunMetrics {
        seed,
        mae: outputs.iter().map(|r| r.mae).collect(),
        rmse: outputs.iter().map(|r| r.rmse).collect(),
    })
}

/// `runs` repetitions with seeds `cfg.seed + 0 .. cfg.seed + runs − 1`.
pub fn uncertainty(
    kind: ModelKind,
    mcfg: McresanetConfig,
    ds: &Dataset,
    stats: &StandardizationStats,
    cfg: &TrainConfig,
    runs: usize,
) -> Result<UncertaintyReport> {
    if runs < 2 {
        return Err(Error::Config(format!("uncertainty needs at least 2 runs, got {runs}")));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    uncertainty_with_seeds(kind, mcfg, ds, stats, cfg, &seeds)
}

pub fn uncertainty_with_seeds(
    kind: ModelKind,
    mcfg: McresanetConfig,
    ds: &Dataset,
    stats: &StandardizationStats,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<UncertaintyReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("uncertainty needs at least 2 runs, got {}", seeds.len())));
    }
    let runs = seeds
        .iter()
        .map(|&s| run_once(kind, mcfg, ds, stats, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let outputs = OUTPUT_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (mae_mean, mae_std) = mean_std(&runs.iter().map(|r| r.mae[k]).collect::<Vec<_>>());
            let (rmse_mean, rmse_std) = mean_std(&runs.iter().map(|r| r.rmse[k]).collect::<Vec<_>>());
            OutputSpread {
                output: name.to_string(),
                mae_mean,
                mae_std,
                rmse_mean,
                rmse_std,
            }
        })
        .collect();
    Ok(UncertaintyReport { model: kind, runs, outputs })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::nn::ParamKind;

    #[test]
    fn loss_hand_cases() {
        let empty = ParamSet::new();
        assert_eq!(loss(&[1.0, 2.0], &[1.0, 2.0], &empty, 0.0).unwrap(), 0.0);
        assert_eq!(loss(&[1.0, 2.0], &[0.0, 3.0], &empty, 0.0).unwrap(), 1.0);
        let mut set = ParamSet::new();
        set.add("w", ParamKind::Weight, Tensor::scalar(2.0));
        set.add("b", ParamKind::Bias, Tensor::scalar(5.0));
        set.add("ln.gain", ParamKind::Gain, Tensor::scalar(3.0));
        assert_close!(loss(&[0.5], &[0.5], &set, 1e-5).unwrap(), 4e-5, 1e-20);
        assert!(loss(&[1.0], &[1.0, 2.0], &set, 0.0).is_err());
    }

    #[test]
    fn step_decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 0.001);
        assert_eq!(lr_at(19, &cfg), 0.001);
        assert_eq!(lr_at(20, &cfg), 0.0005);
        assert_eq!(lr_at(40, &cfg), 0.00025);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { patience: 101, ..Default::default() },
            TrainConfig { validation_fraction: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    /// Replays scripted losses; the state is the epoch it was last at.
    struct Scripted {
        losses: Vec<f64>,
        state: usize,
    }

    impl EpochRunner for Scripted {
        type Snapshot = usize;
        fn run_epoch(&mut self, epoch: usize, _lr: f64) -> Result<EpochLosses> {
            self.state = epoch;
            let v = self.losses[epoch.min(self.losses.len() - 1)];
            Ok(EpochLosses { train: v, validation: Some(v) })
        }
        fn snapshot(&self) -> usize {
            self.state
        }
        fn restore(&mut self, s: usize) {
            self.state = s;
        }
    }

    #[test]
    fn patience_one_stops_after_first_stale_epoch() {
        let cfg = TrainConfig { patience: 1, ..Default::default() };
        let mut r = Scripted { losses: vec![1.0, 0.5, 0.5, 0.6, 0.1], state: 0 };
        let h = run_loop(&mut r, &cfg, "stub").unwrap();
        assert_eq!(h.epochs(), 3);
        assert_eq!(h.stop_reason, StopReason::EarlyStop);
        assert_eq!((h.best_epoch, h.best_loss), (2, 0.5));
        // the best epoch's state is what remains
        assert_eq!(r.state, 1);
        assert!(h.learning_rate.iter().enumerate().all(|(e, &lr)| lr == lr_at(e, &cfg)));
    }

    #[test]
    fn improvements_smaller_than_min_delta_do_not_count() {
        let cfg = TrainConfig { patience: 2, min_delta: 1e-3, ..Default::default() };
        let mut r = Scripted { losses: vec![1.0, 0.9995, 0.9991, 0.5], state: 0 };
        let h = run_loop(&mut r, &cfg, "stub").unwrap();
        assert_eq!(h.epochs(), 3);
        assert_eq!(h.best_epoch, 1);
    }

    #[test]
    fn divergence_aborts_with_history() {
        let mut r = Scripted { losses: vec![1.0, f64::NAN], state: 0 };
        match run_loop(&mut r, &TrainConfig::default(), "stub") {
            Err(Error::Diverged { epoch, history }) => {
                assert_eq!(epoch, 2);
                assert_eq!(history.epochs(), 2);
                assert_eq!(history.stop_reason, StopReason::Diverged);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn without_early_stopping_all_epochs_run() {
        let cfg = TrainConfig { early_stopping: false, max_epochs: 45, patience: 1, ..Default::default() };
        let mut r = Scripted { losses: vec![1.0, 2.0, 3.0], state: 0 };
        let h = run_loop(&mut r, &cfg, "stub").unwrap();
        assert_eq!(h.epochs(), 45);
        assert_eq!(h.stop_reason, StopReason::MaxEpochs);
        assert_eq!(h.best_epoch, 45);
        assert_eq!(h.learning_rate[44], 0.00025);
    }

    #[test]
    fn carve_out_partitions_train_rows() {
        let rows: Vec<usize> = (10..42).collect();
        let (fit, val) = validation_carve(&rows, 0.1, 3);
        assert_eq!(val.len(), 3);
        assert_eq!(fit.len(), 29);
        let mut all: Vec<usize> = fit.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, rows);
        assert_eq!(validation_carve(&rows, 0.1, 3), (fit, val));
        assert_eq!(validation_carve(&rows, 0.0, 3).1.len(), 0);
        assert_eq!(validation_carve(&[4], 0.5, 3), (vec![4], vec![]));
    }

    proptest! {
        #[test]
        fn lr_trace_follows_schedule(epoch in 0usize..500, interval in 1usize..50, factor in 0.05f64..1.0) {
            let cfg = TrainConfig { decay_interval: interval, decay_factor: factor, ..Default::default() };
            let k = (epoch / interval) as i32;
            prop_assert_eq!(lr_at(epoch, &cfg), 1e-3 * factor.powi(k));
            prop_assert!(lr_at(epoch + interval, &cfg) <= lr_at(epoch, &cfg));
        }
    }
}
