use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{Head, Network};
use crate::training::{finetune, subsample_finetune, train_from_scratch, History, TrainOptions};

/// Paired fine-tuning runs that differ only in initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pretrained: History,
    pub scratch: History,
    pub pretrained_final: f64,
    pub scratch_final: f64,
    /// `scratch_final / pretrained_final`.
    pub ratio: f64,
}

/// Fine-tune `pretrained` (its head swapped when it is an interpolation
/// network) and a freshly initialized flow network on identical data, schedule
/// and sample order.
pub fn compare_pretrained_vs_scratch(
    pretrained: &Network,
    head_seed: u64,
    scratch_seed: u64,
    data: &Dataset,
    split: &Split,
    opts: &TrainOptions,
) -> Result<Comparison> {
    let start = match pretrained.head() {
        Head::Interpolation => pretrained.clone().swap_head(head_seed)?,
        Head::Flow => pretrained.clone(),
    };
    let arm = |sub: &str| {
        let mut o = opts.clone();
        o.run_dir = opts.run_dir.as_ref().map(|d| d.join(sub));
        o
    };
    let (_, pre) = finetune(start, data, split, &arm("pretrained"))?;
    let (_, scratch) = train_from_scratch(pretrained.spec(), scratch_seed, data, split, &arm("scratch"))?;
    let last = |h: &History, arm: &str| {
        h.final_val()
            .ok_or_else(|| Error::Data(format!("the {arm} arm recorded no validation EPE")))
    };
    let (p, s) = (last(&pre, "pretrained")?, last(&scratch, "scratch")?);
    Ok(Comparison {
        pretrained: pre,
        scratch,
        pretrained_final: p,
        scratch_final: s,
        ratio: s / p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_frames: usize,
    /// Mean over repeats of the final validation EPE.
    pub mean_epe: f64,
    pub repeat_epe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ascending in `n_frames`.
    pub points: Vec<SweepPoint>,
    /// Final validation EPE when fine-tuning on the full training split.
    pub full_set_epe: f64,
    pub full_set_frames: usize,
    /// Requested sizes larger than the training split.
    pub dropped: Vec<usize>,
}

/// Validation EPE as a function of the number of fine-tuning pairs, each size
/// averaged over `repeats` random subsets, plus the full-set reference.
pub fn low_data_sweep(
    net: &Network,
    head_seed: u64,
    data: &Dataset,
    split: &Split,
    sizes: &[usize],
    repeats: usize,
    opts: &TrainOptions,
) -> Result<SweepResult> {
    let start = match net.head() {
        Head::Interpolation => net.clone().swap_head(head_seed)?,
        Head::Flow => net.clone(),
    };
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let available = split.train.len();
    let (kept, dropped): (Vec<usize>, Vec<usize>) = sizes.into_iter().partition(|&n| n <= available);
    for n in &dropped {
        log::warn!("sweep size {n} exceeds the {available} available training pairs; dropped");
    }
    let mut points = Vec::new();
    for n in kept {
        let run = subsample_finetune(&start, data, split, n, repeats, opts)?;
        let repeat_epe = run
            .histories
            .iter()
            .map(|h| h.final_val().ok_or_else(|| Error::Data("sweep run recorded no validation EPE".into())))
            .collect::<Result<Vec<f64>>>()?;
        points.push(SweepPoint {
            n_frames: n,
            mean_epe: repeat_epe.iter().sum::<f64>() / repeat_epe.len() as f64,
            repeat_epe,
        });
    }
    let mut o = opts.clone();
    o.run_dir = opts.run_dir.as_ref().map(|d| d.join("full"));
    let (_, full) = finetune(start, data, split, &o)?;
    Ok(SweepResult {
        points,
        full_set_epe: full
            .final_val()
            .ok_or_else(|| Error::Data("full-set run recorded no validation EPE".into()))?,
        full_set_frames: available,
        dropped,
    })
}
