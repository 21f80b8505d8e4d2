//! Layered configuration: built-in defaults, then the TOML file, then
//! command-line overrides. Unknown keys are collected and reported together.

use std::path::{Path, PathBuf};

use interflow::data::{AugmentConfig, DatasetConfig, SyntheticConfig};
use interflow::training::TrainingSchedule;
use interflow::{Head, NetworkSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Name of the merged configuration written into every output directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Divide every block width by this; 1 is the full-size network.
    pub width_divisor: usize,
    pub width: usize,
    pub height: usize,
    /// Initialization seed of fresh networks.
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            width_divisor: 1,
            width: 384,
            height: 192,
            init_seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, head: Head) -> interflow::Result<NetworkSpec> {
        let base = NetworkSpec::full_size();
        let spec = if self.width_divisor > 1 {
            base.narrowed(self.width_divisor)?
        } else {
            base
        };
        let spec = spec.with_resolution(self.width, self.height).with_head(head);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![25, 50, 100, 200, 400],
            repeats: 3,
        }
    }
}

/// Configuration shared by the training and experiment subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    /// Relative manifest paths resolve against this directory.
    pub data_root: Option<PathBuf>,
    /// Checkpoint a fine-tuning run starts from.
    pub init: Option<PathBuf>,
    /// Seed of the freshly initialized flow head after a head swap.
    pub head_seed: u64,
    /// Initialization seed of the scratch arm in `compare`.
    pub scratch_seed: u64,
    pub max_val_samples: Option<usize>,
    pub network: NetworkConfig,
    pub data: DatasetConfig,
    pub augment: AugmentConfig,
    pub schedule: TrainingSchedule,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            data_root: None,
            init: None,
            head_seed: 1,
            scratch_seed: 2,
            max_val_samples: None,
            network: NetworkConfig::default(),
            data: DatasetConfig::default(),
            augment: AugmentConfig::default(),
            schedule: TrainingSchedule::pretrain(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults for the flow subcommands: the fine-tuning schedule and no
    /// temporal reversal.
    pub fn flow_defaults() -> Self {
        RunConfig {
            schedule: TrainingSchedule::finetune(),
            augment: AugmentConfig {
                temporal_reversal: false,
                ..AugmentConfig::default()
            },
            ..RunConfig::default()
        }
    }
}

/// Configuration of `gen-synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Corpus tag written into the manifest.
    pub corpus: String,
    pub synthetic: SyntheticConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            corpus: "synthetic".into(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn config_error(msg: impl Into<String>) -> interflow::Error {
    interflow::Error::Config(msg.into())
}

/// Recursively overlay `top` onto `base`; tables merge, everything else replaces.
pub fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// `schedule.preset = "name"` swaps in that preset before the remaining
/// schedule keys apply.
fn expand_preset(base: &mut Table, file: &mut Table) -> interflow::Result<()> {
    let Some(Value::Table(sched)) = file.get_mut("schedule") else {
        return Ok(());
    };
    let Some(preset) = sched.remove("preset") else {
        return Ok(());
    };
    let name = preset
        .as_str()
        .ok_or_else(|| config_error("schedule.preset must be a string"))?;
    let table = to_table(&TrainingSchedule::preset(name)?)?;
    base.insert("schedule".into(), Value::Table(table));
    Ok(())
}

pub fn to_table<T: Serialize>(value: &T) -> interflow::Result<Table> {
    Table::try_from(value).map_err(|e| config_error(format!("cannot serialize config: {e}")))
}

pub fn read_table(path: &Path) -> interflow::Result<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| config_error(format!("{}: {e}", path.display())))
}

/// Deserialize `table`, failing with every unknown key listed.
pub fn strict_from_table<T: DeserializeOwned>(table: Table) -> interflow::Result<T> {
    let mut unknown = Vec::new();
    let value: T = serde_ignored::deserialize(Value::Table(table), |path| unknown.push(path.to_string()))
        .map_err(|e| config_error(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(config_error(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(value)
}

/// Defaults, then the file, then `overrides` (already nested tables).
pub fn layered<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    overrides: Table,
) -> interflow::Result<T> {
    let mut base = to_table(defaults)?;
    if let Some(path) = file {
        let mut top = read_table(path)?;
        expand_preset(&mut base, &mut top)?;
        merge(&mut base, top);
    }
    merge(&mut base, overrides);
    strict_from_table(base)
}

pub fn dump<T: Serialize>(value: &T) -> interflow::Result<String> {
    toml::to_string_pretty(value).map_err(|e| config_error(format!("cannot serialize config: {e}")))
}

/// Build a nested override table from dotted keys.
#[derive(Default)]
pub struct Overrides(Table);

impl Overrides {
    pub fn set(&mut self, dotted: &str, value: impl Into<Value>) {
        let mut parts: Vec<&str> = dotted.split('.').collect();
        let last = parts.pop().unwrap_or(dotted);
        let mut t = &mut self.0;
        for p in parts {
            t = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("override path prefix is a table");
        }
        t.insert(last.to_string(), value.into());
    }

    pub fn into_table(self) -> Table {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 4\n[schedule]\npreset = \"s_short\"\nbatch_size = 2\n").unwrap();
        let mut o = Overrides::default();
        o.set("schedule.total_epochs", 7);
        let c: RunConfig = layered(&RunConfig::default(), Some(&path), o.into_table()).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.schedule.batch_size, 2);
        assert_eq!(c.schedule.total_epochs, 7);
        assert_eq!(c.schedule.lr_policy, TrainingSchedule::s_short().lr_policy);
    }

    #[test]
    fn default_pretraining_schedule() {
        let s = RunConfig::default().schedule;
        assert_eq!(s.optimizer.initial_lr, 1e-4);
        assert_eq!(s.batch_size, 8);
        assert_eq!(s.total_epochs, 12);
        assert_eq!(
            s.lr_policy,
            interflow::training::LrPolicy::Milestones {
                epochs: vec![3, 6, 8, 10],
                factor: 0.5
            }
        );
    }

    #[test]
    fn unknown_keys_are_listed() {
        let mut t: Table = "sed = 1\n[network]\nwidht = 3\n".parse().unwrap();
        let mut base = to_table(&RunConfig::default()).unwrap();
        merge(&mut base, std::mem::take(&mut t));
        let err = strict_from_table::<RunConfig>(base).unwrap_err().to_string();
        assert!(err.contains("sed") && err.contains("network.widht"), "{err}");
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::flow_defaults();
        let back: RunConfig = strict_from_table(dump(&c).unwrap().parse().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
