//! Patient record fixtures: one CSV file per (patient, signal).

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::HealthError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepRecord {
    pub date: NaiveDate,
    pub total_sleep_min: f64,
    pub rem_min: f64,
    pub deep_min: f64,
    pub light_min: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub date: NaiveDate,
    pub steps: u64,
    pub active_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgSample {
    /// Epoch milliseconds.
    pub date: i64,
    pub ppg: f64,
    /// Beats per minute.
    pub hr: f64,
}

pub trait Dated {
    fn day(&self) -> NaiveDate;
}

impl Dated for SleepRecord {
    fn day(&self) -> NaiveDate {
        self.date
    }
}

impl Dated for ActivityRecord {
    fn day(&self) -> NaiveDate {
        self.date
    }
}

impl Dated for PpgSample {
    fn day(&self) -> NaiveDate {
        DateTime::from_timestamp_millis(self.date)
            .map(|t| t.date_naive())
            .unwrap_or_default()
    }
}

pub const SLEEP_FILE: &str = "sleep.csv";
pub const ACTIVITY_FILE: &str = "activity.csv";
pub const PPG_FILE: &str = "ppg.csv";

/// Parses a `%Y-%m-%d` date.
pub fn parse_date(text: &str) -> Result<NaiveDate, HealthError> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| HealthError::BadDate(text.to_string()))
}

/// Inclusive date range from task inputs; an empty end means a single day.
pub fn date_range(start: &str, end: &str) -> Result<(NaiveDate, NaiveDate), HealthError> {
    let start = parse_date(start)?;
    let end = if end.trim().is_empty() {
        start
    } else {
        parse_date(end)?
    };
    if end < start {
        return Err(HealthError::BadDate(format!("end {end} is before start {start}")));
    }
    Ok((start, end))
}

fn is_patient_id(id: &str) -> bool {
    id.strip_prefix("par_")
        .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

/// Read-only access to the `data/<patient>/<signal>.csv` tree.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
}

impl Dataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file(&self, patient: &str, signal: &str) -> Result<PathBuf, HealthError> {
        let patient = patient.trim();
        let dir = self.root.join(patient);
        if !is_patient_id(patient) || !dir.is_dir() {
            return Err(HealthError::UnknownPatient(patient.to_string()));
        }
        Ok(dir.join(signal))
    }

    pub fn load<T: DeserializeOwned>(&self, patient: &str, signal: &str) -> Result<Vec<T>, HealthError> {
        let path = self.file(patient, signal)?;
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| HealthError::Data(format!("{}: {e}", path.display())))?;
        reader
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| HealthError::Data(format!("{}: {e}", path.display())))
    }

    /// Rows of `signal` for `patient` whose day falls in the range.
    pub fn range<T: DeserializeOwned + Dated>(
        &self,
        patient: &str,
        signal: &str,
        start: &str,
        end: &str,
    ) -> Result<Vec<T>, HealthError> {
        let (from, to) = date_range(start, end)?;
        let rows: Vec<T> = self.load(patient, signal)?;
        Ok(rows
            .into_iter()
            .filter(|r| (from..=to).contains(&r.day()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates() {
        assert!(parse_date("2020-08-01").is_ok());
        assert!(matches!(parse_date("08/01/2020"), Err(HealthError::BadDate(_))));
        let (a, b) = date_range("2020-08-29", "").unwrap();
        assert_eq!(a, b);
        assert!(date_range("2020-08-29", "2020-08-01").is_err());
    }

    #[test]
    fn patient_ids() {
        assert!(is_patient_id("par_5"));
        assert!(!is_patient_id("par_"));
        assert!(!is_patient_id("../par_5"));
        assert!(!is_patient_id("patient5"));
    }

    #[test]
    fn ppg_day_is_utc() {
        let s = PpgSample {
            date: 1_598_695_200_000, // 2020-08-29T10:00:00Z
            ppg: 0.0,
            hr: 60.0,
        };
        assert_eq!(s.day(), NaiveDate::from_ymd_opt(2020, 8, 29).unwrap());
    }
}
