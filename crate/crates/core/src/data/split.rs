use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::{interpolation_samples_for, SampleSpec};

/// How a corpus is divided into training and validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Hold out runs of target frames at the beginning, center and end of
    /// every sequence; training windows never overlap validation windows.
    Frames { fraction: f64 },
    /// Hold out whole sequences.
    Sequences { fraction: f64 },
}

impl SplitPolicy {
    pub const MOVIE: SplitPolicy = SplitPolicy::Frames { fraction: 0.01 };
    pub const DRIVING: SplitPolicy = SplitPolicy::Sequences { fraction: 0.10 };
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<SampleSpec>,
    pub val: Vec<SampleSpec>,
    /// Human-readable notes, e.g. a fallback to sequence-level splitting.
    pub warnings: Vec<String>,
}

/// Smallest sequence the frame policy handles: three held-out regions plus
/// room for training windows between them.
const MIN_FRAMES_FOR_FRAME_POLICY: usize = 60;

/// Split the interpolation samples of one corpus, deterministically in `seed`.
pub fn split_train_val(sequence_lengths: &[usize], policy: SplitPolicy, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match policy {
        SplitPolicy::Sequences { fraction } => split_sequences(sequence_lengths, fraction, &mut rng, Vec::new()),
        SplitPolicy::Frames { fraction } => {
            if sequence_lengths.iter().any(|&l| l > 0 && l < MIN_FRAMES_FOR_FRAME_POLICY) {
                let msg = format!(
                    "corpus has sequences shorter than {MIN_FRAMES_FOR_FRAME_POLICY} frames; \
                     falling back to a sequence-level split"
                );
                log::warn!("{msg}");
                return split_sequences(sequence_lengths, 0.10, &mut rng, vec![msg]);
            }
            let mut split = Split::default();
            for (seq, &len) in sequence_lengths.iter().enumerate() {
                split_frames(seq, len, fraction, &mut rng, &mut split);
            }
            split
        }
    }
}

fn split_sequences(lengths: &[usize], fraction: f64, rng: &mut ChaCha8Rng, mut warnings: Vec<String>) -> Split {
    let n = lengths.len();
    let n_val = if n >= 2 {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        let msg = "fewer than two sequences; nothing held out for validation".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        0
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let held: BTreeSet<usize> = order[..n_val].iter().copied().collect();
    let mut split = Split {
        warnings,
        ..Default::default()
    };
    for (seq, &len) in lengths.iter().enumerate() {
        let dst = if held.contains(&seq) {
            &mut split.val
        } else {
            &mut split.train
        };
        dst.extend(interpolation_samples_for(seq, len));
    }
    split
}

fn split_frames(seq: usize, len: usize, fraction: f64, rng: &mut ChaCha8Rng, split: &mut Split) {
    if len == 0 {
        return;
    }
    // Centers whose spacing-2 window fits, so every held-out target yields both samples.
    let (lo, hi) = (6usize, len - 7);
    let n_centers = ((fraction * len as f64).round() as usize).max(3);
    let per_region = [
        n_centers.div_ceil(3),
        (n_centers - n_centers.div_ceil(3)).div_ceil(2),
        n_centers - n_centers.div_ceil(3) - (n_centers - n_centers.div_ceil(3)).div_ceil(2),
    ];
    let band = ((len as f64 * 0.1) as usize).max(1);
    let mid = len / 2;
    let regions = [
        (lo, lo + band),
        (mid.saturating_sub(band / 2).max(lo), mid + band / 2),
        (hi.saturating_sub(band), hi),
    ];
    let mut centers = BTreeSet::new();
    for (&(a, b), &count) in regions.iter().zip(&per_region) {
        if count == 0 {
            continue;
        }
        let b = b.min(hi);
        let last_start = b.saturating_sub(count - 1).max(a);
        let start = rng.random_range(a..=last_start);
        centers.extend((start..start + count).filter(|&t| t <= hi));
    }
    let specs: Vec<SampleSpec> = interpolation_samples_for(seq, len).collect();
    let val: Vec<SampleSpec> = specs.iter().filter(|s| centers.contains(&s.center)).copied().collect();
    let spans: Vec<(usize, usize)> = val.iter().map(|s| s.frame_span(len)).collect();
    let overlaps = |s: &SampleSpec| {
        let (a, b) = s.frame_span(len);
        spans.iter().any(|&(c, d)| a <= d && c <= b)
    };
    split.train.extend(specs.iter().filter(|s| !overlaps(s)).copied());
    split.val.extend(val);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_policy_holds_out_one_of_ten() {
        let lengths = vec![30; 10];
        let split = split_train_val(&lengths, SplitPolicy::DRIVING, 4);
        let held: BTreeSet<usize> = split.val.iter().map(|s| s.sequence).collect();
        assert_eq!(held.len(), 1);
        assert!(split.train.iter().all(|s| !held.contains(&s.sequence)));
    }

    #[test]
    fn same_seed_same_split() {
        let a = split_train_val(&[1000], SplitPolicy::MOVIE, 9);
        let b = split_train_val(&[1000], SplitPolicy::MOVIE, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn short_sequences_fall_back() {
        let split = split_train_val(&[20, 25, 30], SplitPolicy::MOVIE, 1);
        assert_eq!(split.warnings.len(), 1);
        let held: BTreeSet<usize> = split.val.iter().map(|s| s.sequence).collect();
        assert_eq!(held.len(), 1);
    }
}
