//! Study-level dose-toxicity tables and their CSV representation.
//!
//! The on-disk format is one row per dose group:
//!
//! ```text
//! study_id,label,year,group_tag,dose,n_patients,n_dlt
//! ```
//!
//! `year` and `group_tag` may be empty. Rows are grouped by `study_id` in
//! order of first appearance; doses are sorted ascending and repeated
//! `(study_id, dose)` rows are merged by summing patients and events.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Patients treated and DLTs observed at one dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseGroup {
    pub dose: f64,
    pub n_patients: u32,
    pub n_dlt: u32,
}

impl DoseGroup {
    pub fn new(dose: f64, n_patients: u32, n_dlt: u32) -> Result<Self> {
        let group = Self {
            dose,
            n_patients,
            n_dlt,
        };
        group.validate()?;
        Ok(group)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dose.is_finite() && self.dose > 0.0) {
            return Err(Error::Validation(format!(
                "dose must be positive and finite, got {}",
                self.dose
            )));
        }
        if self.n_dlt > self.n_patients {
            return Err(Error::Validation(format!(
                "{} DLTs exceed {} patients at dose {}",
                self.n_dlt, self.n_patients, self.dose
            )));
        }
        Ok(())
    }
}

/// One study's dose groups plus descriptive metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseToxicityDataset {
    pub study_id: String,
    pub label: String,
    pub year: Option<i32>,
    /// Population stratum used for bridging, e.g. `western` / `japanese`.
    pub group_tag: Option<String>,
    groups: Vec<DoseGroup>,
}

/// Dose, patient and event totals of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudySummary {
    pub n_doses: usize,
    pub n_patients: u32,
    pub n_events: u32,
}

impl DoseToxicityDataset {
    /// Builds a dataset, sorting groups by dose and merging repeated doses.
    pub fn new(
        study_id: impl Into<String>,
        label: impl Into<String>,
        year: Option<i32>,
        group_tag: Option<String>,
        groups: Vec<DoseGroup>,
    ) -> Result<Self> {
        let study_id = study_id.into();
        if groups.is_empty() {
            return Err(Error::Validation(format!(
                "study `{study_id}` has no dose groups"
            )));
        }
        for g in &groups {
            g.validate()?;
        }
        Ok(Self {
            study_id,
            label: label.into(),
            year,
            group_tag,
            groups: merge_sorted(groups),
        })
    }

    /// Dose groups in strictly increasing dose order.
    pub fn groups(&self) -> &[DoseGroup] {
        &self.groups
    }

    pub fn summarize(&self) -> StudySummary {
        summarize(self)
    }
}

fn merge_sorted(mut groups: Vec<DoseGroup>) -> Vec<DoseGroup> {
    groups.sort_by(|a, b| a.dose.total_cmp(&b.dose));
    let mut merged: Vec<DoseGroup> = Vec::with_capacity(groups.len());
    for g in groups {
        match merged.last_mut() {
            Some(last) if last.dose == g.dose => {
                last.n_patients += g.n_patients;
                last.n_dlt += g.n_dlt;
            }
            _ => merged.push(g),
        }
    }
    merged
}

/// Number of doses, patients and DLT events in a study.
pub fn summarize(ds: &DoseToxicityDataset) -> StudySummary {
    StudySummary {
        n_doses: ds.groups.len(),
        n_patients: ds.groups.iter().map(|g| g.n_patients).sum(),
        n_events: ds.groups.iter().map(|g| g.n_dlt).sum(),
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "study_id",
    "label",
    "year",
    "group_tag",
    "dose",
    "n_patients",
    "n_dlt",
];

struct PendingStudy {
    label: String,
    year: Option<i32>,
    group_tag: Option<String>,
    groups: Vec<DoseGroup>,
}

/// Parses the long-format CSV into datasets, in order of first appearance.
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<DoseToxicityDataset>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = reader.headers()?.clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                columns.join(",")
            ),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, PendingStudy> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };

        let study_id = record[0].to_string();
        if study_id.is_empty() {
            return Err(bad("empty study_id".into()));
        }
        let label = record[1].to_string();
        let year = match &record[2] {
            "" => None,
            s => Some(
                s.parse::<i32>()
                    .map_err(|e| bad(format!("year `{s}`: {e}")))?,
            ),
        };
        let group_tag = match &record[3] {
            "" => None,
            s => Some(s.to_string()),
        };
        let dose: f64 = record[4]
            .parse()
            .map_err(|e| bad(format!("dose `{}`: {e}", &record[4])))?;
        let n_patients: u32 = record[5]
            .parse()
            .map_err(|e| bad(format!("n_patients `{}`: {e}", &record[5])))?;
        let n_dlt: u32 = record[6]
            .parse()
            .map_err(|e| bad(format!("n_dlt `{}`: {e}", &record[6])))?;

        let group = DoseGroup {
            dose,
            n_patients,
            n_dlt,
        };
        group
            .validate()
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;

        match pending.get_mut(&study_id) {
            Some(study) => {
                if study.label != label || study.year != year || study.group_tag != group_tag {
                    return Err(Error::Validation(format!(
                        "line {line}: metadata for study `{study_id}` differs from its first row"
                    )));
                }
                study.groups.push(group);
            }
            None => {
                order.push(study_id.clone());
                pending.insert(
                    study_id,
                    PendingStudy {
                        label,
                        year,
                        group_tag,
                        groups: vec![group],
                    },
                );
            }
        }
    }

    order
        .into_iter()
        .map(|id| {
            let study = pending.remove(&id).expect("study registered in order");
            DoseToxicityDataset::new(id, study.label, study.year, study.group_tag, study.groups)
        })
        .collect()
}

/// Writes datasets in the same long format `parse_csv` reads.
pub fn write_csv<W: Write>(datasets: &[DoseToxicityDataset], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for ds in datasets {
        let year = ds.year.map(|y| y.to_string()).unwrap_or_default();
        let tag = ds.group_tag.clone().unwrap_or_default();
        for g in &ds.groups {
            writer.write_record([
                ds.study_id.as_str(),
                ds.label.as_str(),
                year.as_str(),
                tag.as_str(),
                &g.dose.to_string(),
                &g.n_patients.to_string(),
                &g.n_dlt.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{IRINOTECAN_CSV, SORAFENIB_CSV};

    fn by_id<'a>(sets: &'a [DoseToxicityDataset], id: &str) -> &'a DoseToxicityDataset {
        sets.iter().find(|d| d.study_id == id).unwrap()
    }

    #[test]
    fn sorafenib_fixture() {
        let sets = parse_csv(SORAFENIB_CSV.as_bytes()).unwrap();
        assert_eq!(sets.len(), 13);
        let totals: Vec<u32> = sets.iter().map(|d| d.summarize().n_patients).collect();
        assert_eq!(*totals.iter().min().unwrap(), 16);
        assert_eq!(*totals.iter().max().unwrap(), 54);
        let awada = by_id(&sets, "awada2005").summarize();
        assert_eq!((awada.n_doses, awada.n_patients, awada.n_events), (6, 37, 10));
    }

    #[test]
    fn irinotecan_fixture() {
        let sets = parse_csv(IRINOTECAN_CSV.as_bytes()).unwrap();
        assert_eq!(sets.len(), 12);
        let ino = by_id(&sets, "inokuchi2006").summarize();
        assert_eq!((ino.n_patients, ino.n_events), (51, 12));
        let yos = by_id(&sets, "yoshioka2009").summarize();
        assert_eq!((yos.n_doses, yos.n_patients, yos.n_events), (3, 12, 1));
    }

    #[test]
    fn header_only_gives_empty_list() {
        let sets = parse_csv(CSV_HEADER.join(",").as_bytes()).unwrap();
        assert!(sets.is_empty());
    }

    #[test]
    fn single_group_summary() {
        let ds = DoseToxicityDataset::new(
            "s",
            "s",
            None,
            None,
            vec![DoseGroup::new(1.0, 3, 0).unwrap()],
        )
        .unwrap();
        assert_eq!(
            summarize(&ds),
            StudySummary {
                n_doses: 1,
                n_patients: 3,
                n_events: 0
            }
        );
    }

    #[test]
    fn unsorted_and_duplicate_doses_are_normalized() {
        let csv = "study_id,label,year,group_tag,dose,n_patients,n_dlt\n\
                   a,A,,,20,3,1\n\
                   a,A,,,10,3,0\n\
                   a,A,,,20,3,2\n";
        let sets = parse_csv(csv.as_bytes()).unwrap();
        let doses: Vec<f64> = sets[0].groups().iter().map(|g| g.dose).collect();
        assert_eq!(doses, vec![10.0, 20.0]);
        assert_eq!(sets[0].groups()[1], DoseGroup::new(20.0, 6, 3).unwrap());
        assert_eq!(sets[0].year, None);
        assert_eq!(sets[0].group_tag, None);
    }

    #[test]
    fn malformed_row_names_line() {
        let csv = "study_id,label,year,group_tag,dose,n_patients,n_dlt\n\
                   a,A,2001,,10,3,0\n\
                   a,A,2001,,x,3,0\n";
        match parse_csv(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_many_events_rejected() {
        let csv = "study_id,label,year,group_tag,dose,n_patients,n_dlt\na,A,,,10,3,4\n";
        assert!(matches!(
            parse_csv(csv.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn nonpositive_dose_rejected() {
        let csv = "study_id,label,year,group_tag,dose,n_patients,n_dlt\na,A,,,0,3,0\n";
        assert!(matches!(
            parse_csv(csv.as_bytes()),
            Err(Error::Validation(_))
        ));
        assert!(DoseGroup::new(-1.0, 3, 0).is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "study,dose\na,1\n";
        assert!(matches!(parse_csv(csv.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn write_then_parse_roundtrip() {
        let sets = parse_csv(SORAFENIB_CSV.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_csv(&sets, &mut buf).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), sets);
    }
}
