use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{ColorFrame, Plane};

use super::augment::{augment_flow, augment_interpolation, AugmentConfig, AugmentPlan};
use super::index::{index_interpolation_samples, SampleKind, SampleSpec};
use super::sample::{RawSample, Target, TrainingSample};
use super::split::{split_train_val, Split, SplitPolicy};
use super::synthetic::SyntheticSequence;

/// One video clip held in memory, with optional ground-truth flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub corpus: String,
    pub frames: Vec<ColorFrame>,
    pub gray: Vec<Plane>,
    /// `flows[t]` is the flow from frame `t` to `t + 1`, when known.
    pub flows: Vec<Option<FlowField>>,
}

impl Sequence {
    pub fn new(name: String, corpus: String, frames: Vec<ColorFrame>, flows: Vec<Option<FlowField>>) -> Result<Self> {
        if let Some(f) = frames.first() {
            if frames.iter().any(|g| g.width() != f.width() || g.height() != f.height()) {
                return Err(Error::Data(format!("sequence {name}: frames differ in size")));
            }
            for flow in flows.iter().flatten() {
                if flow.width != f.width() || flow.height != f.height() {
                    return Err(Error::Data(format!(
                        "sequence {name}: flow {}x{} does not match frames {}x{}",
                        flow.width,
                        flow.height,
                        f.width(),
                        f.height()
                    )));
                }
            }
        }
        if flows.len() > frames.len().saturating_sub(1) {
            return Err(Error::Data(format!(
                "sequence {name}: {} flows for {} frames",
                flows.len(),
                frames.len()
            )));
        }
        let gray = frames.iter().map(ColorFrame::to_gray).collect();
        Ok(Sequence {
            name,
            corpus,
            frames,
            gray,
            flows,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn flow(&self, t: usize) -> Option<&FlowField> {
        self.flows.get(t).and_then(Option::as_ref)
    }
}

/// All sequences of one or more corpora.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn from_synthetic(corpus: &str, seqs: Vec<SyntheticSequence>) -> Result<Self> {
        let sequences = seqs
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                Sequence::new(
                    format!("{corpus}_{i:03}"),
                    corpus.to_string(),
                    s.frames,
                    s.flows.into_iter().map(Some).collect(),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { sequences })
    }

    pub fn extend(&mut self, other: Dataset) {
        self.sequences.extend(other.sequences);
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sequences.iter().map(Sequence::len).collect()
    }

    /// Corpus tags in order of first appearance.
    pub fn corpora(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sequences {
            if !out.contains(&s.corpus) {
                out.push(s.corpus.clone());
            }
        }
        out
    }

    /// Dataset restricted to the sequences of one corpus.
    pub fn corpus(&self, tag: &str) -> Dataset {
        Dataset {
            sequences: self.sequences.iter().filter(|s| s.corpus == tag).cloned().collect(),
        }
    }

    pub fn interpolation_specs(&self) -> Vec<SampleSpec> {
        index_interpolation_samples(&self.lengths())
    }

    /// Every frame pair with ground-truth flow.
    pub fn flow_specs(&self) -> Vec<SampleSpec> {
        self.sequences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                (0..s.flows.len())
                    .filter(|&t| s.flows[t].is_some())
                    .map(move |t| SampleSpec::flow(i, t))
            })
            .collect()
    }

    /// Split interpolation samples corpus by corpus with the policy registered
    /// for each tag, falling back to `default`.
    pub fn interpolation_split(
        &self,
        policies: &BTreeMap<String, SplitPolicy>,
        default: SplitPolicy,
        seed: u64,
    ) -> Split {
        let mut out = Split::default();
        for (k, tag) in self.corpora().iter().enumerate() {
            let members: Vec<usize> = (0..self.sequences.len())
                .filter(|&i| &self.sequences[i].corpus == tag)
                .collect();
            let lengths: Vec<usize> = members.iter().map(|&i| self.sequences[i].len()).collect();
            let policy = policies.get(tag).copied().unwrap_or(default);
            let split = split_train_val(&lengths, policy, seed.wrapping_add(k as u64));
            let remap = |s: SampleSpec| SampleSpec {
                sequence: members[s.sequence],
                ..s
            };
            out.train.extend(split.train.into_iter().map(remap));
            out.val.extend(split.val.into_iter().map(remap));
            out.warnings
                .extend(split.warnings.into_iter().map(|w| format!("corpus {tag}: {w}")));
        }
        out
    }

    /// Hold out `fraction` of the flow samples: whole sequences when at least
    /// two sequences carry ground truth, individual pairs otherwise.
    pub fn flow_split(&self, fraction: f64, seed: u64) -> Split {
        let specs = self.flow_specs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seqs: Vec<usize> = specs.iter().map(|s| s.sequence).collect();
        seqs.dedup();
        let mut split = Split::default();
        if seqs.len() >= 2 {
            let n_val = ((fraction * seqs.len() as f64).round() as usize).clamp(1, seqs.len() - 1);
            seqs.shuffle(&mut rng);
            let held = &seqs[..n_val];
            for s in specs {
                if held.contains(&s.sequence) {
                    split.val.push(s);
                } else {
                    split.train.push(s);
                }
            }
        } else {
            let n_val = if specs.len() >= 2 {
                ((fraction * specs.len() as f64).round() as usize).clamp(1, specs.len() - 1)
            } else {
                0
            };
            let mut order: Vec<usize> = (0..specs.len()).collect();
            order.shuffle(&mut rng);
            let mut held = order[..n_val].to_vec();
            held.sort_unstable();
            for (i, s) in specs.into_iter().enumerate() {
                if held.binary_search(&i).is_ok() {
                    split.val.push(s);
                } else {
                    split.train.push(s);
                }
            }
            let msg = "flow ground truth comes from a single sequence; holding out individual frame pairs".to_string();
            log::warn!("{msg}");
            split.warnings.push(msg);
        }
        split
    }

    fn sequence(&self, spec: &SampleSpec) -> Result<&Sequence> {
        self.sequences
            .get(spec.sequence)
            .ok_or_else(|| Error::Data(format!("sample refers to missing sequence {}", spec.sequence)))
    }

    /// Grayscale inputs and target of `spec` at the source resolution.
    pub fn raw_sample(&self, spec: &SampleSpec) -> Result<RawSample> {
        let seq = self.sequence(spec)?;
        let len = seq.len();
        let frames = spec.input_frames(len);
        if frames.iter().any(|&i| i >= len) || spec.center >= len {
            return Err(Error::Data(format!(
                "sample at frame {} (spacing {}) does not fit sequence {} of {len} frames",
                spec.center, spec.spacing, seq.name
            )));
        }
        let inputs = frames.iter().map(|&i| seq.gray[i].clone()).collect();
        let target = match spec.kind {
            SampleKind::Interpolation => Target::Frame(seq.gray[spec.center].clone()),
            SampleKind::Flow => Target::Flow(
                seq.flow(spec.center)
                    .ok_or_else(|| {
                        Error::Data(format!("sequence {} has no flow for frame {}", seq.name, spec.center))
                    })?
                    .clone(),
            ),
        };
        Ok(RawSample {
            spec: *spec,
            inputs,
            target,
        })
    }

    /// Load, augment and normalize one sample.
    pub fn sample(&self, spec: &SampleSpec, augment: &AugmentConfig, rng: &mut impl Rng) -> Result<TrainingSample> {
        let raw = self.raw_sample(spec)?;
        let (raw, plan): (RawSample, AugmentPlan) = match spec.kind {
            SampleKind::Interpolation => augment_interpolation(&raw, augment, rng)?,
            SampleKind::Flow => augment_flow(&raw, augment, rng)?,
        };
        TrainingSample::from_raw(raw, Some(plan))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic_corpus, SyntheticConfig};

    fn toy() -> Dataset {
        let cfg = SyntheticConfig {
            sequences: 4,
            length: 9,
            ..Default::default()
        };
        Dataset::from_synthetic("synthetic", generate_synthetic_corpus(&cfg, 3).unwrap()).unwrap()
    }

    #[test]
    fn flow_split_holds_out_whole_sequences() {
        let d = toy();
        let split = d.flow_split(0.1, 0);
        assert_eq!(split.val.len(), 8);
        assert_eq!(split.train.len(), 24);
        let held = split.val[0].sequence;
        assert!(split.train.iter().all(|s| s.sequence != held));
    }

    #[test]
    fn samples_have_requested_size() {
        let d = toy();
        let cfg = AugmentConfig::identity(32, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = d.sample(&SampleSpec::flow(1, 0), &cfg, &mut rng).unwrap();
        assert_eq!((s.width(), s.height()), (32, 16));
        assert!(matches!(s.target, Target::Flow(ref f) if f.width == 32));
        assert!(d.raw_sample(&SampleSpec::interpolation(0, 8, 1)).is_err());
    }
}
