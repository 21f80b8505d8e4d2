//! Interpolation pretraining and flow fine-tuning loops, with Adam,
//! learning-rate schedules, checkpoints and run directories.

mod adam;
mod checkpoint;
mod history;
mod schedule;
mod trainer;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use history::{average_histories, EpochRecord, History};
pub use schedule::{replay_lr_trace, LossKind, LrEvent, LrPolicy, LrScheduler, OptimizerConfig, TrainingSchedule};
pub use trainer::{
    batch_loss, evaluate_loss, TrainOptions, Trainer, BEST_CHECKPOINT, LATEST_CHECKPOINT, METRICS_LOG,
};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{Head, Network, NetworkSpec};

fn run(net: Network, data: &Dataset, split: &Split, opts: &TrainOptions) -> Result<(Network, History)> {
    let mut trainer = Trainer::new(net, opts.clone())?;
    trainer.run(data, &split.train, &split.val)?;
    let history = trainer.history().clone();
    Ok((trainer.into_network(), history))
}

/// Unsupervised interpolation pretraining.
pub fn pretrain(net: Network, data: &Dataset, split: &Split, opts: &TrainOptions) -> Result<(Network, History)> {
    if net.head() != Head::Interpolation {
        return Err(Error::State("pretraining needs an interpolation-head network".into()));
    }
    run(net, data, split, opts)
}

/// Supervised flow training of a flow-head network (see [`Network::swap_head`]).
pub fn finetune(net: Network, data: &Dataset, split: &Split, opts: &TrainOptions) -> Result<(Network, History)> {
    if net.head() != Head::Flow {
        return Err(Error::State("fine-tuning needs a flow-head network; swap the head first".into()));
    }
    run(net, data, split, opts)
}

/// The fine-tuning loop on a freshly initialized flow network.
pub fn train_from_scratch(
    spec: &NetworkSpec,
    init_seed: u64,
    data: &Dataset,
    split: &Split,
    opts: &TrainOptions,
) -> Result<(Network, History)> {
    let net = Network::new(spec.clone().with_head(Head::Flow), init_seed)?;
    finetune(net, data, split, opts)
}

/// Result of repeated fine-tuning on random training subsets.
#[derive(Debug, Clone)]
pub struct SubsampleRun {
    pub n_frames: usize,
    pub histories: Vec<History>,
    pub mean: History,
    pub subsets: Vec<Vec<crate::data::SampleSpec>>,
}

impl SubsampleRun {
    /// Mean over repeats of the last epoch's validation metric.
    pub fn final_val(&self) -> Option<f64> {
        self.mean.final_val()
    }
}

/// Fine-tune `repeats` fresh copies of `net`, each on its own random subset of
/// `n_frames` training pairs; repeat `r` trains with seed `opts.seed + r`.
pub fn subsample_finetune(
    net: &Network,
    data: &Dataset,
    split: &Split,
    n_frames: usize,
    repeats: usize,
    opts: &TrainOptions,
) -> Result<SubsampleRun> {
    if n_frames > split.train.len() {
        return Err(Error::Data(format!(
            "requested {n_frames} training frames but only {} are available",
            split.train.len()
        )));
    }
    if repeats == 0 || n_frames == 0 {
        return Err(Error::Config("subsampling needs at least one repeat and one frame".into()));
    }
    let mut histories = Vec::new();
    let mut subsets = Vec::new();
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(1 + r as u64);
        let mut picked: Vec<usize> = (0..split.train.len())
            .collect::<Vec<_>>()
            .choose_multiple(&mut rng, n_frames)
            .copied()
            .collect();
        picked.sort_unstable();
        let subset: Vec<_> = picked.iter().map(|&i| split.train[i]).collect();
        let sub = Split {
            train: subset.clone(),
            val: split.val.clone(),
            warnings: Vec::new(),
        };
        let mut o = opts.clone();
        o.seed = opts.seed.wrapping_add(r as u64);
        o.run_dir = opts.run_dir.as_ref().map(|d| d.join(format!("n{n_frames}_repeat{r}")));
        let (_, h) = finetune(net.clone(), data, &sub, &o)?;
        histories.push(h);
        subsets.push(subset);
    }
    Ok(SubsampleRun {
        n_frames,
        mean: average_histories(&histories),
        histories,
        subsets,
    })
}
