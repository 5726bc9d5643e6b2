//! Evaluation report rendering: aligned text table and JSON.

use std::fmt::Write as _;
use std::path::Path;

use imuwave_core::metrics::{EvalReport, TopK};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub class: String,
    pub count: usize,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub input: String,
    pub samples: usize,
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub per_class: Vec<ClassRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pearson: Option<f64>,
}

impl Section {
    pub fn new(input: &str, r: &EvalReport, class_names: &[String]) -> Self {
        let TopK { top1, top2, top3 } = r.overall;
        Self {
            input: input.into(),
            samples: r.samples,
            top1,
            top2,
            top3,
            per_class: r
                .per_class
                .iter()
                .map(|(c, n, k)| ClassRow {
                    class: class_names.get(*c).cloned().unwrap_or_else(|| c.to_string()),
                    count: *n,
                    top1: k.top1,
                    top2: k.top2,
                    top3: k.top3,
                })
                .collect(),
            ssim_mean: r.ssim.map(|s| s.mean),
            ssim_std: r.ssim.map(|s| s.std),
            pearson: r.pearson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config_digest: String,
    pub master_seed: u64,
    pub split: String,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            let width = sec.per_class.iter().map(|r| r.class.len()).max().unwrap_or(0).max(7);
            let _ = writeln!(s, "{} ({} samples, {} split)", sec.input, sec.samples, self.split);
            let _ = writeln!(s, "  {:<width$}  {:>5}  {:>6}  {:>6}  {:>6}", "class", "n", "top1", "top2", "top3");
            for r in &sec.per_class {
                let _ = writeln!(s, "  {:<width$}  {:>5}  {:>6.3}  {:>6.3}  {:>6.3}", r.class, r.count, r.top1, r.top2, r.top3);
            }
            let _ = writeln!(s, "  {:<width$}  {:>5}  {:>6.3}  {:>6.3}  {:>6.3}", "overall", sec.samples, sec.top1, sec.top2, sec.top3);
            if let (Some(m), Some(sd)) = (sec.ssim_mean, sec.ssim_std) {
                let _ = writeln!(s, "  ssim {m:.4} +- {sd:.4}");
            }
            if let Some(p) = sec.pearson {
                let _ = writeln!(s, "  pearson {p:.4}");
            }
        }
        s
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
