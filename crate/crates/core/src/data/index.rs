use serde::{Deserialize, Serialize};

/// Offsets of the four interpolation inputs around the target, in units of the spacing.
pub const INTERP_OFFSETS: [isize; 4] = [-3, -1, 1, 3];
/// Spacings used for every interpolation target.
pub const SPACINGS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Interpolation,
    Flow,
}

/// Address of one training sample inside a corpus.
///
/// Interpolation: target frame `center`, inputs `center ± spacing`, `center ± 3·spacing`.
/// Flow: the pair (`center`, `center + 1`), inputs `center-1 ..= center+2` clamped to the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleSpec {
    pub sequence: usize,
    pub center: usize,
    pub spacing: usize,
    pub kind: SampleKind,
}

impl SampleSpec {
    pub fn interpolation(sequence: usize, center: usize, spacing: usize) -> Self {
        SampleSpec {
            sequence,
            center,
            spacing,
            kind: SampleKind::Interpolation,
        }
    }

    pub fn flow(sequence: usize, first: usize) -> Self {
        SampleSpec {
            sequence,
            center: first,
            spacing: 1,
            kind: SampleKind::Flow,
        }
    }

    /// Indices of the four input frames for a sequence of `len` frames.
    pub fn input_frames(&self, len: usize) -> [usize; 4] {
        match self.kind {
            SampleKind::Interpolation => {
                INTERP_OFFSETS.map(|o| (self.center as isize + o * self.spacing as isize) as usize)
            }
            SampleKind::Flow => flow_quadruple(self.center, len),
        }
    }

    /// Inclusive frame interval touched by the sample (inputs and target).
    pub fn frame_span(&self, len: usize) -> (usize, usize) {
        let frames = self.input_frames(len);
        let lo = frames.iter().copied().min().unwrap_or(self.center).min(self.center);
        let hi = frames.iter().copied().max().unwrap_or(self.center).max(self.center);
        (lo, hi)
    }
}

/// Input frames for the flow from `t` to `t + 1`: `(t-1, t, t+1, t+2)`, with the
/// first and last frames of the sequence duplicated at the boundaries.
pub fn flow_quadruple(t: usize, len: usize) -> [usize; 4] {
    let last = len.saturating_sub(1);
    let clamp = |i: isize| i.clamp(0, last as isize) as usize;
    let t = t as isize;
    [clamp(t - 1), clamp(t), clamp(t + 1), clamp(t + 2)]
}

/// Every interpolation sample of every sequence: for each sequence, spacing 1
/// centers `3..=L-4`, then spacing 2 centers `6..=L-7`.
pub fn index_interpolation_samples(sequence_lengths: &[usize]) -> Vec<SampleSpec> {
    let mut out = Vec::new();
    for (seq, &len) in sequence_lengths.iter().enumerate() {
        out.extend(interpolation_samples_for(seq, len));
    }
    out
}

pub(crate) fn interpolation_samples_for(seq: usize, len: usize) -> impl Iterator<Item = SampleSpec> {
    SPACINGS.into_iter().flat_map(move |s| {
        let reach = 3 * s;
        let range = if len > 2 * reach { reach..len - reach } else { 0..0 };
        range.map(move |t| SampleSpec::interpolation(seq, t, s))
    })
}

/// Every consecutive pair of a sequence with ground-truth flow.
pub fn index_flow_samples(sequence_lengths: &[usize]) -> Vec<SampleSpec> {
    sequence_lengths
        .iter()
        .enumerate()
        .flat_map(|(seq, &len)| (0..len.saturating_sub(1)).map(move |t| SampleSpec::flow(seq, t)))
        .collect()
}
