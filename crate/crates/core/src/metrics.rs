//! Append-only experiment metrics, persisted as CSV with the fixed header
//! `step,iteration,method,model_id,split,metric,value`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "step,iteration,method,model_id,split,metric,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub iteration: u64,
    pub method: String,
    pub model_id: String,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a row. Steps must not decrease.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        step: u64,
        iteration: u64,
        method: &str,
        model_id: &str,
        split: &str,
        metric: &str,
        value: f64,
    ) {
        if let Some(last) = self.rows.last() {
            assert!(step >= last.step, "metrics step went backwards: {} after {}", step, last.step);
        }
        self.rows.push(MetricRow {
            step,
            iteration,
            method: method.to_string(),
            model_id: model_id.to_string(),
            split: split.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of another log appended after this one's, steps offset to stay monotone.
    pub fn extend(&mut self, other: MetricsLog) {
        let base = self.rows.last().map_or(0, |r| r.step);
        for mut row in other.rows {
            row.step = row.step.max(base);
            self.rows.push(row);
        }
    }

    /// Values of `metric` for `model_id` on `split`, in log order.
    pub fn series(&self, model_id: &str, split: &str, metric: &str) -> Vec<&MetricRow> {
        self.rows
            .iter()
            .filter(|r| r.model_id == model_id && r.split == split && r.metric == metric)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        if self.rows.is_empty() {
            wr.write_record(CSV_HEADER.split(','))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(crate::error::Error::Format {
                offset: 0,
                section: "csv header",
                message: format!("expected `{CSV_HEADER}`, found `{}`", header.join(",")),
            });
        }
        let rows = rd.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(fs::File::open(path)?)
    }
}
