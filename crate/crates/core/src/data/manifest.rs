//! Cohort manifest: comma-delimited text with header
//! `patient_id,duration,event,bag_path`. Durations are in years; bag paths
//! are resolved relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bag::{load_bag, PatchBag};
use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Converts a follow-up time in days to years.
pub fn days_to_years(days: f64) -> f64 {
    days / DAYS_PER_YEAR
}

/// Survival label for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub patient_id: String,
    /// Time to death (event) or last follow-up (censored), in years.
    pub duration: f64,
    /// `true` when the death was observed.
    pub event: bool,
    pub bag_path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    patient_id: String,
    duration: String,
    event: String,
    bag_path: String,
}

pub fn load_manifest(path: &Path) -> Result<Vec<CohortRecord>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let headers = reader.headers()?.clone();
    let expected = ["patient_id", "duration", "event", "bag_path"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Validation {
            file: path.to_path_buf(),
            row: 0,
            reason: format!("header must be {}", expected.join(",")),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let row_no = i + 1;
        let invalid = |reason: String| Error::Validation {
            file: path.to_path_buf(),
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| invalid(e.to_string()))?;
        let duration: f64 = row
            .duration
            .parse()
            .map_err(|_| invalid(format!("duration {:?} is not a number", row.duration)))?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid(format!("duration must be positive, got {duration}")));
        }
        let event = match row.event.as_str() {
            "1" => true,
            "0" => false,
            other => return Err(invalid(format!("event must be 0 or 1, got {other:?}"))),
        };
        let bag_path = base.join(&row.bag_path);
        if !bag_path.is_file() {
            return Err(invalid(format!("bag file {} not found", bag_path.display())));
        }
        records.push(CohortRecord {
            patient_id: row.patient_id,
            duration,
            event,
            bag_path,
        });
    }
    Ok(records)
}

/// Writes records with bag paths relative to `path`'s directory when
/// possible.
pub fn write_manifest(path: &Path, records: &[CohortRecord]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["patient_id", "duration", "event", "bag_path"])?;
    for r in records {
        let rel = r.bag_path.strip_prefix(base).unwrap_or(&r.bag_path);
        writer.write_record([
            r.patient_id.clone(),
            format!("{:?}", r.duration),
            if r.event { "1" } else { "0" }.to_string(),
            rel.to_string_lossy().into_owned(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// A loaded cohort: labels plus bags in manifest order.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub records: Vec<CohortRecord>,
    pub bags: Vec<PatchBag>,
}

impl Cohort {
    pub fn new(records: Vec<CohortRecord>, bags: Vec<PatchBag>) -> Result<Self> {
        if records.len() != bags.len() {
            return Err(Error::Config(format!(
                "{} records but {} bags",
                records.len(),
                bags.len()
            )));
        }
        if let Some(first) = bags.first() {
            let d = first.dim();
            if let Some(bad) = bags.iter().find(|b| b.dim() != d) {
                return Err(Error::Config(format!(
                    "bag {} has d={} but the cohort uses d={d}",
                    bad.patient_id,
                    bad.dim()
                )));
            }
        }
        Ok(Self { records, bags })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.bags.first().map(PatchBag::dim)
    }

    /// Loads the manifest and every bag it references, checking that all
    /// bags share one feature dimension.
    pub fn load(manifest: &Path) -> Result<Self> {
        let records = load_manifest(manifest)?;
        let mut bags = Vec::with_capacity(records.len());
        let mut dim = None;
        for r in &records {
            let mut bag = load_bag(&r.bag_path)?;
            match dim {
                None => dim = Some(bag.dim()),
                Some(d) if d != bag.dim() => {
                    return Err(Error::Format {
                        what: "bag",
                        offset: 9,
                        reason: format!(
                            "{}: d={} inconsistent with manifest cohort d={d}",
                            r.bag_path.display(),
                            bag.dim()
                        ),
                    })
                }
                Some(_) => {}
            }
            bag.patient_id = r.patient_id.clone();
            bags.push(bag);
        }
        Self::new(records, bags)
    }
}
