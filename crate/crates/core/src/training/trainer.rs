use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{stack_inputs, AugmentConfig, Dataset, SampleSpec, Target, TrainingSample};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::metrics::{epe_with_grad, interpolation_loss_with_grad, SsimConfig};
use crate::model::{Head, Mode, Network, Tensor};
use crate::raster::Plane;

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::history::{EpochRecord, History};
use super::schedule::{LossKind, LrEvent, LrScheduler, TrainingSchedule};

pub const METRICS_LOG: &str = "metrics.jsonl";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Smallest dynamic range assumed for the normalized-domain training SSIM.
const MIN_SSIM_RANGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub schedule: TrainingSchedule,
    /// Training augmentation; validation uses its deterministic identity variant.
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Threads preparing samples.
    pub workers: usize,
    /// Metrics log and checkpoints go here when set.
    pub run_dir: Option<PathBuf>,
    /// Evaluate at most this many validation samples per epoch.
    pub max_val_samples: Option<usize>,
}

impl TrainOptions {
    pub fn new(schedule: TrainingSchedule, augment: AugmentConfig, seed: u64) -> Self {
        TrainOptions {
            schedule,
            augment,
            seed,
            workers: 1,
            run_dir: None,
            max_val_samples: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord<'a> {
    Epoch(&'a EpochRecord),
    LrReduced(&'a LrEvent),
}

/// Owns the network and optimizer state of one training run.
#[derive(Debug)]
pub struct Trainer {
    net: Network,
    opts: TrainOptions,
    adam: Adam,
    scheduler: LrScheduler,
    epoch: usize,
    history: History,
}

fn check_head(net: &Network, loss: LossKind) -> Result<()> {
    match (net.head(), loss) {
        (Head::Interpolation, LossKind::Interpolation) | (Head::Flow, LossKind::Epe) => Ok(()),
        (head, loss) => Err(Error::State(format!(
            "a {head:?}-head network cannot be trained with the {loss:?} loss"
        ))),
    }
}

impl Trainer {
    pub fn new(net: Network, opts: TrainOptions) -> Result<Self> {
        opts.schedule.validate()?;
        check_head(&net, opts.schedule.loss)?;
        let adam = Adam::new(opts.schedule.optimizer, &net);
        let scheduler = LrScheduler::new(opts.schedule.lr_policy.clone(), opts.schedule.optimizer.initial_lr);
        Ok(Trainer {
            net,
            opts,
            adam,
            scheduler,
            epoch: 0,
            history: History::default(),
        })
    }

    /// Continue a run from a checkpoint; epoch numbering, optimizer and
    /// learning-rate state carry over. The checkpoint's seed wins.
    pub fn resume(ckpt: Checkpoint, mut opts: TrainOptions) -> Result<Self> {
        opts.schedule.validate()?;
        check_head(&ckpt.network, opts.schedule.loss)?;
        if ckpt.seed != opts.seed {
            log::warn!("resuming with the checkpoint's seed {} instead of {}", ckpt.seed, opts.seed);
            opts.seed = ckpt.seed;
        }
        let adam = match ckpt.optimizer {
            Some(a) => a,
            None => {
                log::warn!("checkpoint has no optimizer state; starting Adam from zero");
                Adam::new(opts.schedule.optimizer, &ckpt.network)
            }
        };
        let scheduler = ckpt
            .scheduler
            .unwrap_or_else(|| LrScheduler::new(opts.schedule.lr_policy.clone(), opts.schedule.optimizer.initial_lr));
        Ok(Trainer {
            net: ckpt.network,
            opts,
            adam,
            scheduler,
            epoch: ckpt.epoch,
            history: ckpt.history,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            network: self.net.clone(),
            optimizer: Some(self.adam.clone()),
            scheduler: Some(self.scheduler.clone()),
            schedule: Some(self.opts.schedule.clone()),
            epoch: self.epoch,
            seed: self.opts.seed,
            history: self.history.clone(),
        }
    }

    /// Train until the schedule's epoch budget is spent. On a non-finite loss
    /// or parameter the network is restored to the last completed epoch and
    /// a numerical error is returned; on-disk checkpoints are left untouched.
    pub fn run(&mut self, data: &Dataset, train: &[SampleSpec], val: &[SampleSpec]) -> Result<&History> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if let Some(dir) = &self.opts.run_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let val_cfg = AugmentConfig::identity(self.opts.augment.out_width, self.opts.augment.out_height);
        let val_specs = &val[..val.len().min(self.opts.max_val_samples.unwrap_or(usize::MAX))];
        let val_samples = prepare(data, val_specs, &val_cfg, self.opts.seed, u64::MAX, self.opts.workers)?;
        while self.epoch < self.opts.schedule.total_epochs {
            let last_good = self.net.clone();
            let started = Instant::now();
            match self.run_epoch(data, train, &val_samples) {
                Ok(record) => {
                    log::info!(
                        "epoch {:>3}  lr {:.3e}  train {:.5}  val {}  ({:.1}s)",
                        record.epoch + 1,
                        record.lr,
                        record.train_loss,
                        record.val_metric.map_or("-".into(), |v| format!("{v:.5}")),
                        started.elapsed().as_secs_f64()
                    );
                }
                Err(e @ Error::Numerical(_)) => {
                    self.net = last_good;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(&self.history)
    }

    fn run_epoch(&mut self, data: &Dataset, train: &[SampleSpec], val: &[TrainingSample]) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let lr = self.scheduler.lr;
        let mut order = train.to_vec();
        order.shuffle(&mut epoch_rng(self.opts.seed, epoch));
        self.net.set_mode(Mode::Train);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(self.opts.schedule.batch_size).enumerate() {
            let stream = (epoch as u64) << 32 | b as u64;
            let samples = prepare(data, chunk, &self.opts.augment, self.opts.seed, stream, self.opts.workers)?;
            let refs: Vec<&TrainingSample> = samples.iter().collect();
            let x = stack_inputs(&refs)?;
            let out = self.net.forward(&x)?;
            let (loss, grad) = batch_loss(self.opts.schedule.loss, &out, &refs)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss in epoch {}", epoch + 1)));
            }
            self.net.zero_grad();
            self.net.backward(&grad)?;
            self.adam.step(&mut self.net, lr)?;
            if !self.net.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite parameters after a step in epoch {}",
                    epoch + 1
                )));
            }
            loss_sum += loss;
            batches += 1;
        }
        self.net.set_mode(Mode::Eval);
        let val_metric = if val.is_empty() {
            None
        } else {
            Some(evaluate_loss(&self.net, self.opts.schedule.loss, val, self.opts.schedule.batch_size)?)
        };
        if val_metric.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite validation metric in epoch {}", epoch + 1)));
        }
        let previous_best = self.history.best().map(|(_, m)| m);
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            val_metric,
            train_samples: train.len(),
        };
        self.history.records.push(record.clone());
        let event = self.scheduler.end_epoch(epoch, val_metric);
        if let Some(ev) = event {
            log::info!("epoch {}: learning rate {:.3e} -> {:.3e}", epoch + 1, ev.from, ev.to);
            self.history.lr_events.push(ev);
        }
        self.epoch += 1;
        if let Some(dir) = self.opts.run_dir.clone() {
            let mut lines = vec![serde_json::to_string(&LogRecord::Epoch(&record))];
            if let Some(ev) = &event {
                lines.push(serde_json::to_string(&LogRecord::LrReduced(ev)));
            }
            append_lines(&dir.join(METRICS_LOG), lines)?;
            let ckpt = self.checkpoint();
            ckpt.save(dir.join(LATEST_CHECKPOINT))?;
            let improved = match (val_metric, previous_best) {
                (Some(v), Some(b)) => v < b,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if improved || (val_metric.is_none() && self.epoch == self.opts.schedule.total_epochs) {
                ckpt.save(dir.join(BEST_CHECKPOINT))?;
            }
        }
        Ok(record)
    }
}

fn append_lines(path: &Path, lines: Vec<serde_json::Result<String>>) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for line in lines {
        let line = line.map_err(|e| Error::Numerical(format!("cannot log metrics: {e}")))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Per-sample generator: a pure function of (seed, batch stream, position).
fn sample_rng(seed: u64, stream: u64, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a_5a5a_0000_0000 ^ position as u64);
    rng.set_stream(stream);
    rng
}

/// Load and augment `specs`, spreading the work over `workers` threads.
pub(crate) fn prepare(
    data: &Dataset,
    specs: &[SampleSpec],
    augment: &AugmentConfig,
    seed: u64,
    stream: u64,
    workers: usize,
) -> Result<Vec<TrainingSample>> {
    let one = |i: usize| data.sample(&specs[i], augment, &mut sample_rng(seed, stream, i));
    let workers = workers.max(1).min(specs.len().max(1));
    if workers == 1 {
        return (0..specs.len()).map(one).collect();
    }
    let per = specs.len().div_ceil(workers);
    let parts: Vec<Result<Vec<TrainingSample>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let one = &one;
                s.spawn(move || (w * per..((w + 1) * per).min(specs.len())).map(one).collect())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sample worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(specs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn ssim_range(samples: &[&TrainingSample]) -> f64 {
    let (lo, hi) = samples
        .iter()
        .filter_map(|s| match &s.target {
            Target::Frame(p) => Some(p),
            Target::Flow(_) => None,
        })
        .flat_map(|p| p.data.iter().copied())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    ((hi - lo) as f64).max(MIN_SSIM_RANGE)
}

/// Mean loss over the batch and its gradient with respect to the network output.
pub fn batch_loss(kind: LossKind, out: &Tensor, samples: &[&TrainingSample]) -> Result<(f64, Tensor)> {
    let n = samples.len();
    let mut grad = Tensor::zeros(out.n(), out.c(), out.h(), out.w());
    let (h, w) = (out.h(), out.w());
    let mut total = 0.0;
    let mut counted = 0usize;
    let ssim = SsimConfig::default().with_range(ssim_range(samples));
    for (i, s) in samples.iter().enumerate() {
        match (kind, &s.target) {
            (LossKind::Interpolation, Target::Frame(t)) => {
                let pred = Plane::new(w, h, out.plane(i, 0).to_vec())?;
                let (l, g) = interpolation_loss_with_grad(&pred, t, &ssim)?;
                total += l;
                counted += 1;
                for (d, gv) in grad.plane_mut(i, 0).iter_mut().zip(g) {
                    *d = (gv / n as f64) as f32;
                }
            }
            (LossKind::Epe, Target::Flow(gt)) => {
                if gt.valid_count() == 0 {
                    log::warn!("skipping a flow sample without valid ground truth");
                    continue;
                }
                let pred = FlowField::new(
                    w,
                    h,
                    out.plane(i, 0).to_vec(),
                    out.plane(i, 1).to_vec(),
                    vec![true; w * h],
                )?;
                let (l, gu, gv) = epe_with_grad(&pred, gt)?;
                total += l;
                counted += 1;
                for (d, g) in grad.plane_mut(i, 0).iter_mut().zip(gu) {
                    *d = (g / n as f64) as f32;
                }
                for (d, g) in grad.plane_mut(i, 1).iter_mut().zip(gv) {
                    *d = (g / n as f64) as f32;
                }
            }
            (kind, _) => {
                return Err(Error::Input(format!("sample target does not match the {kind:?} loss")));
            }
        }
    }
    if counted == 0 {
        return Err(Error::Data("batch has no usable samples".into()));
    }
    if counted < n {
        let scale = n as f32 / counted as f32;
        grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    }
    Ok((total / counted as f64, grad))
}

/// Mean per-sample loss of an eval-mode network over prepared samples.
pub fn evaluate_loss(net: &Network, kind: LossKind, samples: &[TrainingSample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&TrainingSample> = chunk.iter().collect();
        let out = net.infer(&stack_inputs(&refs)?)?;
        let (l, _) = batch_loss(kind, &out, &refs)?;
        total += l * refs.len() as f64;
        count += refs.len();
    }
    Ok(total / count as f64)
}
