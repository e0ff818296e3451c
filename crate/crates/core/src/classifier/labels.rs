use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::table::{FeatureTable, Functional};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "FFR")]
    Ffr,
    #[serde(rename = "WSS")]
    Wss,
    #[serde(rename = "DFFR")]
    Dffr,
    #[serde(rename = "HRS")]
    Hrs,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Ffr, Criterion::Wss, Criterion::Dffr, Criterion::Hrs];

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Ffr => "FFR",
            Criterion::Wss => "WSS",
            Criterion::Dffr => "DFFR",
            Criterion::Hrs => "HRS",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FFR" | "VFFR" => Ok(Criterion::Ffr),
            "WSS" => Ok(Criterion::Wss),
            "DFFR" | "ΔFFR" => Ok(Criterion::Dffr),
            "HRS" => Ok(Criterion::Hrs),
            _ => Err(Error::InvalidInput(format!("unknown criterion `{s}`"))),
        }
    }
}

/// Severity cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    /// Severe when vFFR is at most this.
    pub vffr_max: f64,
    /// Severe when WSS (Pa) is at least this.
    pub wss_min: f64,
    /// Severe when the FFR drop is at least this.
    pub dffr_min: f64,
    /// High-risk when at least this many of the three are severe.
    pub hrs_min_positive: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            vffr_max: 0.80,
            wss_min: 15.47,
            dffr_min: 0.06,
            hrs_min_positive: 2,
        }
    }
}

impl Cutoffs {
    /// Label of one lesion, `None` when a needed value is missing.
    pub fn label(&self, f: &Functional, criterion: Criterion) -> Option<bool> {
        let ffr = f.vffr.map(|v| v <= self.vffr_max);
        let wss = f.wss.map(|v| v >= self.wss_min);
        let dffr = f.dffr.map(|v| v >= self.dffr_min);
        match criterion {
            Criterion::Ffr => ffr,
            Criterion::Wss => wss,
            Criterion::Dffr => dffr,
            Criterion::Hrs => {
                let votes = [ffr?, wss?, dffr?].iter().filter(|&&b| b).count();
                Some(votes >= self.hrs_min_positive)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    /// Rows that received a label.
    pub rows: Vec<usize>,
    /// Aligned with `rows`.
    pub y: Vec<u8>,
    /// Rows without the functional values the criterion needs.
    pub excluded: Vec<usize>,
}

impl Labels {
    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }
}

pub fn label_lesions(table: &FeatureTable, criterion: Criterion, cutoffs: &Cutoffs) -> Labels {
    let mut out = Labels {
        rows: Vec::new(),
        y: Vec::new(),
        excluded: Vec::new(),
    };
    for (i, row) in table.rows.iter().enumerate() {
        match cutoffs.label(&row.functional, criterion) {
            Some(l) => {
                out.rows.push(i);
                out.y.push(u8::from(l));
            }
            None => out.excluded.push(i),
        }
    }
    if !out.excluded.is_empty() {
        log::warn!(
            "{criterion}: {} rows lack functional values and were excluded",
            out.excluded.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(vffr: f64, wss: f64, dffr: f64) -> Functional {
        Functional {
            vffr: Some(vffr),
            wss: Some(wss),
            dffr: Some(dffr),
        }
    }

    #[test]
    fn boundaries_are_inclusive() {
        let c = Cutoffs::default();
        assert_eq!(c.label(&f(0.80, 0.0, 0.0), Criterion::Ffr), Some(true));
        assert_eq!(c.label(&f(0.81, 0.0, 0.0), Criterion::Ffr), Some(false));
        assert_eq!(c.label(&f(1.0, 15.47, 0.0), Criterion::Wss), Some(true));
        assert_eq!(c.label(&f(1.0, 15.46, 0.0), Criterion::Wss), Some(false));
        assert_eq!(c.label(&f(1.0, 0.0, 0.06), Criterion::Dffr), Some(true));
        assert_eq!(c.label(&f(1.0, 0.0, 0.059), Criterion::Dffr), Some(false));
    }

    #[test]
    fn high_risk_needs_two_of_three() {
        let c = Cutoffs::default();
        assert_eq!(c.label(&f(0.75, 10.0, 0.07), Criterion::Hrs), Some(true));
        assert_eq!(c.label(&f(0.75, 10.0, 0.01), Criterion::Hrs), Some(false));
        assert_eq!(c.label(&f(0.9, 20.0, 0.07), Criterion::Hrs), Some(true));
        let partial = Functional {
            vffr: Some(0.7),
            wss: None,
            dffr: Some(0.1),
        };
        assert_eq!(c.label(&partial, Criterion::Hrs), None);
        assert_eq!(c.label(&partial, Criterion::Ffr), Some(true));
    }

    #[test]
    fn criterion_names_parse() {
        for c in Criterion::ALL {
            assert_eq!(c.as_str().parse::<Criterion>().unwrap(), c);
        }
        assert!("ffr2".parse::<Criterion>().is_err());
    }
}
