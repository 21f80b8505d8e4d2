use serde::{Deserialize, Serialize};

use super::schedule::LrEvent;

/// Metrics of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Mean validation loss (interpolation) or EPE (flow); absent without a validation set.
    pub val_metric: Option<f64>,
    pub train_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub lr_events: Vec<LrEvent>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn val_metrics(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.val_metric).collect()
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lr).collect()
    }

    /// Epoch and value of the lowest validation metric.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.val_metric.map(|m| (r.epoch, m)))
            .fold(None, |best, (e, m)| match best {
                Some((_, b)) if b <= m => best,
                _ => Some((e, m)),
            })
    }

    pub fn final_val(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.val_metric)
    }
}

/// Element-wise mean of equally long histories; lr events are taken from the first.
pub fn average_histories(runs: &[History]) -> History {
    let Some(first) = runs.first() else {
        return History::default();
    };
    let n = runs.len() as f64;
    let len = runs.iter().map(History::len).min().unwrap_or(0);
    let records = (0..len)
        .map(|i| {
            let col = || runs.iter().map(move |h| &h.records[i]);
            let vals: Vec<f64> = col().filter_map(|r| r.val_metric).collect();
            EpochRecord {
                epoch: first.records[i].epoch,
                lr: col().map(|r| r.lr).sum::<f64>() / n,
                train_loss: col().map(|r| r.train_loss).sum::<f64>() / n,
                val_metric: (vals.len() == runs.len()).then(|| vals.iter().sum::<f64>() / n),
                train_samples: first.records[i].train_samples,
            }
        })
        .collect();
    History {
        records,
        lr_events: first.lr_events.clone(),
    }
}
