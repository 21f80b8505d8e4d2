use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OVERALL_ROW: &str = "All";

/// Aggregates for one corpus. Metrics that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportRow {
    pub corpus: String,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fl_all: Option<f64>,
}

/// Per-corpus metric table with a trailing sample-weighted "All" row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

fn weighted(rows: &[ReportRow], pick: impl Fn(&ReportRow) -> Option<f64>) -> Option<f64> {
    let (sum, n) = rows
        .iter()
        .filter_map(|r| pick(r).map(|v| (v * r.n_samples as f64, r.n_samples)))
        .fold((0.0, 0usize), |(s, n), (v, k)| (s + v, n + k));
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    /// Build a report from per-corpus rows and append the overall row.
    pub fn new(title: impl Into<String>, rows: Vec<ReportRow>) -> Self {
        let overall = ReportRow {
            corpus: OVERALL_ROW.to_string(),
            n_samples: rows.iter().map(|r| r.n_samples).sum(),
            psnr: weighted(&rows, |r| r.psnr),
            ssim: weighted(&rows, |r| r.ssim),
            epe: weighted(&rows, |r| r.epe),
            fl_all: weighted(&rows, |r| r.fl_all),
        };
        let mut rows = rows;
        rows.push(overall);
        MetricsReport {
            title: title.into(),
            rows,
        }
    }

    pub fn row(&self, corpus: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.corpus == corpus)
    }

    pub fn overall(&self) -> Option<&ReportRow> {
        self.row(OVERALL_ROW)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            let bad = r.ssim.is_some_and(|s| !(-1.0..=1.0).contains(&s))
                || r.fl_all.is_some_and(|f| !(0.0..=100.0).contains(&f))
                || r.epe.is_some_and(|e| !(e >= 0.0));
            if bad {
                return Err(Error::Data(format!("row {} has out-of-range metrics", r.corpus)));
            }
        }
        Ok(())
    }

    /// Fixed-width text table, one row per corpus.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"));
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>10} {:>8} {:>10} {:>9}",
            "corpus", "samples", "PSNR[dB]", "SSIM", "EPE[px]", "Fl-all[%]"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>10} {:>8} {:>10} {:>9}",
                r.corpus,
                r.n_samples,
                cell(r.psnr, 2),
                cell(r.ssim, 4),
                cell(r.epe, 3),
                cell(r.fl_all, 2)
            );
        }
        out
    }

    /// Machine-readable key-value (TOML) form.
    pub fn to_kv(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Data(format!("serializing report: {e}")))
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Data(format!("parsing report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, n: usize, epe: f64) -> ReportRow {
        ReportRow {
            corpus: name.into(),
            n_samples: n,
            epe: Some(epe),
            ..Default::default()
        }
    }

    #[test]
    fn overall_is_sample_weighted() {
        let r = MetricsReport::new("t", vec![row("a", 1, 1.0), row("b", 3, 5.0)]);
        let all = r.overall().unwrap();
        assert_eq!(all.n_samples, 4);
        assert_eq!(all.epe, Some(4.0));
        assert_eq!(all.psnr, None);
    }

    #[test]
    fn kv_round_trip() {
        let mut a = row("sintel-like", 7, 0.1 + 0.2);
        a.fl_all = Some(12.345678901234567);
        let r = MetricsReport::new("flow", vec![a, row("kitti", 2, 1e-9)]);
        let back = MetricsReport::from_kv(&r.to_kv().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("sintel-like"));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut r = MetricsReport::new("x", vec![row("a", 1, 1.0)]);
        r.rows[0].ssim = Some(1.5);
        assert!(r.validate().is_err());
    }
}
