use super::sequence::RunReport;
use crate::error::{Error, Result};
use crate::landscape::fmt_f64;

pub const SUMMARY_CSV_HEADER: &str = "plan_id,seed,gap,method,forgetting_delta,sc,ag,mag,composite,passes_used";

/// One line of a sweep summary: a run's forgetting and final-checkpoint flatness.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub plan_id: String,
    pub seed: u64,
    pub gap: f64,
    pub method: String,
    pub forgetting_delta: f64,
    pub sc: f64,
    pub ag: f64,
    pub mag: f64,
    pub composite: f64,
    pub passes_used: u64,
}

impl SummaryRow {
    pub fn from_report(report: &RunReport) -> Result<Self> {
        let flat = report
            .final_stage()
            .and_then(|s| s.flatness)
            .ok_or_else(|| Error::Config(format!("report `{}` has no final flatness probe", report.plan_id)))?;
        Ok(Self {
            plan_id: report.plan_id.clone(),
            seed: report.seed,
            gap: report.gap,
            method: report.method.clone(),
            forgetting_delta: report.forgetting_delta,
            sc: flat.sc,
            ag: flat.ag,
            mag: flat.mag,
            composite: flat.composite,
            passes_used: report.passes_used(),
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.plan_id,
            self.seed,
            fmt_f64(self.gap),
            self.method,
            fmt_f64(self.forgetting_delta),
            fmt_f64(self.sc),
            fmt_f64(self.ag),
            fmt_f64(self.mag),
            fmt_f64(self.composite),
            self.passes_used
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Config(format!("summary row has {} fields, expected 10: {line}", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].trim()
                .parse()
                .map_err(|e| Error::Config(format!("summary field {k} `{}`: {e}", f[k])))
        };
        let int = |k: usize| -> Result<u64> {
            f[k].trim()
                .parse()
                .map_err(|e| Error::Config(format!("summary field {k} `{}`: {e}", f[k])))
        };
        Ok(Self {
            plan_id: f[0].to_string(),
            seed: int(1)?,
            gap: num(2)?,
            method: f[3].to_string(),
            forgetting_delta: num(4)?,
            sc: num(5)?,
            ag: num(6)?,
            mag: num(7)?,
            composite: num(8)?,
            passes_used: int(9)?,
        })
    }

    /// Full CSV document with header.
    pub fn to_csv(rows: &[SummaryRow]) -> String {
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        for r in rows {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    /// Parses a document written by [`SummaryRow::to_csv`]; the header must match exactly.
    pub fn parse_csv(text: &str) -> Result<Vec<SummaryRow>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == SUMMARY_CSV_HEADER => {}
            other => return Err(Error::Config(format!("summary header mismatch: {other:?}"))),
        }
        lines.map(Self::parse_csv_row).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let row = SummaryRow {
            plan_id: "p".into(),
            seed: 3,
            gap: 0.5,
            method: "sam-adamw".into(),
            forgetting_delta: -12.3456789012345678,
            sc: 0.1,
            ag: 1.0 / 3.0,
            mag: 2.5e-7,
            composite: 0.9,
            passes_used: 400,
        };
        let text = SummaryRow::to_csv(&[row.clone(), row.clone()]);
        assert_eq!(SummaryRow::parse_csv(&text).unwrap(), vec![row.clone(), row]);
        assert!(SummaryRow::parse_csv("a,b\n1,2\n").is_err());
    }
}
