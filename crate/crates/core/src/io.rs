//! File formats: long-format sample CSV, quantile-matrix CSV and the
//! versioned JSON fit report.

use crate::distribution::{Distribution, SampleBatch};
use crate::error::{AtmError, Result};
use crate::grid::{Grid, ProbGrid};
use crate::model::{Atm1Fit, AtmPFit, AtmVariant, CatFit, FitConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Read long-format raw observations: header `time,value`, one row per
/// observation. Batches are returned sorted by time index.
pub fn read_long_csv<R: Read>(reader: R) -> Result<Vec<SampleBatch>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        if headers.len() < 2 {
            return Err(AtmError::Format(format!(
                "expected columns time,value; got {} column(s)",
                headers.len()
            )));
        }
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2; // 1-based, after the header
        if record.len() < 2 {
            return Err(AtmError::Format(format!("row {line}: expected 2 fields")));
        }
        let time: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| AtmError::Format(format!("row {line}: bad time index {:?}", &record[0])))?;
        let value: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| AtmError::Format(format!("row {line}: bad value {:?}", &record[1])))?;
        groups.entry(time).or_default().push(value);
    }
    if groups.is_empty() {
        return Err(AtmError::Format("no data rows".into()));
    }
    groups
        .into_iter()
        .map(|(time_index, values)| SampleBatch::new(time_index, values))
        .collect()
}

/// Write distributions as a quantile matrix: first column the probability
/// level, then one column per time index.
pub fn write_quantile_matrix<W: Write>(writer: W, dists: &[Distribution]) -> Result<()> {
    let first = dists
        .first()
        .ok_or_else(|| AtmError::Format("no distributions to write".into()))?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["prob".to_string()];
    header.extend((1..=dists.len()).map(|i| format!("t{i}")));
    wtr.write_record(&header)?;
    for (k, &level) in first.prob().levels().iter().enumerate() {
        let mut row = vec![format!("{level}")];
        for d in dists {
            row.push(format!("{}", d.quantile_values()[k]));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read a quantile matrix back onto the given support interval.
pub fn read_quantile_matrix<R: Read>(reader: R, support: Grid) -> Result<Vec<Distribution>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let columns = {
        let headers = rdr.headers()?;
        if headers.len() < 2 {
            return Err(AtmError::Format(
                "expected a probability column plus at least one time column".into(),
            ));
        }
        headers.len() - 1
    };
    let mut levels = Vec::new();
    let mut quantiles: Vec<Vec<f64>> = vec![Vec::new(); columns];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        if record.len() != columns + 1 {
            return Err(AtmError::Format(format!(
                "row {line}: expected {} fields, got {}",
                columns + 1,
                record.len()
            )));
        }
        let level: f64 = record[0]
            .trim()
            .parse()
            .map_err(|_| AtmError::Format(format!("row {line}: bad probability level")))?;
        levels.push(level);
        for (c, q) in quantiles.iter_mut().enumerate() {
            let v: f64 = record[c + 1]
                .trim()
                .parse()
                .map_err(|_| AtmError::Format(format!("row {line}: bad quantile value")))?;
            q.push(v);
        }
    }
    let prob = ProbGrid::from_levels(levels)?;
    quantiles
        .into_iter()
        .map(|q| Distribution::new(support, prob.clone(), q))
        .collect()
}

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelReport {
    Atm1(Atm1Fit),
    AtmP(AtmPFit),
    Cat(CatFit),
}

/// Versioned JSON payload describing a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub variant: AtmVariant,
    #[serde(flatten)]
    pub fit: ModelReport,
    /// Echo of the tuning used, when an iterative fitter ran.
    pub config: Option<FitConfig>,
}

impl FitReport {
    pub fn new(variant: AtmVariant, fit: ModelReport, config: Option<FitConfig>) -> Self {
        FitReport { schema_version: FIT_SCHEMA_VERSION, variant, fit, config }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| AtmError::Format(format!("serializing fit report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| AtmError::Format(format!("parsing fit report: {e}")))
    }
}
