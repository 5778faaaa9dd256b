//! The two suite-level evaluation metrics, kept as exact rationals:
//! repair success rate (successfully repaired cases over all cases, as a
//! percentage) and average number of repairs (total repair attempts over
//! successfully repaired cases).

use num_rational::Ratio;

/// Repair success rate: `NRC / TTC`. Undefined when `ttc` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rsr {
    nrc: u64,
    ttc: u64,
}

pub fn compute_rsr(nrc: u64, ttc: u64) -> Option<Rsr> {
    if ttc == 0 {
        None
    } else {
        Some(Rsr { nrc, ttc })
    }
}

impl Rsr {
    /// Headline percentage, rounded to the nearest integer (ties away from
    /// zero). The exact rational is retained alongside.
    pub fn percent_rounded(&self) -> u64 {
        Ratio::new(self.nrc * 100, self.ttc).round().to_integer()
    }

    pub fn exact(&self) -> Ratio<u64> {
        Ratio::new(self.nrc, self.ttc)
    }

    pub fn raw_fraction(&self) -> f64 {
        self.nrc as f64 / self.ttc as f64
    }
}

/// Average number of repairs: `TRA / NRC`. Undefined when `nrc` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anr {
    tra: u64,
    nrc: u64,
}

pub fn compute_anr(tra: u64, nrc: u64) -> Option<Anr> {
    if nrc == 0 {
        None
    } else {
        Some(Anr { tra, nrc })
    }
}

impl Anr {
    pub fn exact(&self) -> Ratio<u64> {
        Ratio::new(self.tra, self.nrc)
    }

    /// Two-decimal display, rounded to nearest (ties away from zero),
    /// computed in integer arithmetic.
    pub fn display_2dp(&self) -> String {
        let hundredths: u64 = Ratio::new(self.tra * 100, self.nrc).round().to_integer();
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }

    pub fn raw(&self) -> f64 {
        self.tra as f64 / self.nrc as f64
    }
}
