//! Discriminant bound for totally real fields from the regulator and the
//! sign split `min(p, m)`.
//!
//! `log|D| <= min(p,m) log 4 + sqrt(gamma_{n-1} (n^3 - n) / 3) (sqrt(n) R)^(1/(n-1))`
//!
//! Field arithmetic is out of scope: `min(p, m)` and `R` are inputs, and the
//! "totally real" and "primitive" hypotheses are echoed, not checked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatorQuery {
    pub n: u32,
    pub min_pm: u32,
    #[serde(rename = "R")]
    pub regulator: f64,
}

impl RegulatorQuery {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!(
                "degree n = {} must be at least 2",
                self.n
            )));
        }
        if self.min_pm > self.n / 2 {
            return Err(Error::Domain(format!(
                "min_pm = {} exceeds floor(n/2) = {}",
                self.min_pm,
                self.n / 2
            )));
        }
        if !(self.regulator.is_finite() && self.regulator > 0.0) {
            return Err(Error::Domain(format!(
                "regulator R = {} must be positive",
                self.regulator
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteValue {
    pub dimension: u32,
    pub value: f64,
    /// False when `value` is only the upper bound `(4/3)^((d-1)/2)`.
    pub exact: bool,
}

/// Hermite's constant: exact for `d` in `1..=8` and `d = 24`, otherwise the
/// classical upper bound `(4/3)^((d-1)/2)`.
pub fn hermite_gamma(d: u32) -> Result<HermiteValue> {
    let exact = match d {
        0 => {
            return Err(Error::Domain(
                "Hermite constant needs dimension >= 1".into(),
            ))
        }
        1 => Some(1.0),
        2 => Some((4.0f64 / 3.0).sqrt()),
        3 => Some(2f64.cbrt()),
        4 => Some(2f64.sqrt()),
        5 => Some(8f64.powf(1.0 / 5.0)),
        6 => Some((64.0f64 / 3.0).powf(1.0 / 6.0)),
        7 => Some(64f64.powf(1.0 / 7.0)),
        8 => Some(2.0),
        24 => Some(4.0),
        _ => None,
    };
    Ok(match exact {
        Some(value) => HermiteValue {
            dimension: d,
            value,
            exact: true,
        },
        None => HermiteValue {
            dimension: d,
            value: (4.0f64 / 3.0).powf(f64::from(d - 1) / 2.0),
            exact: false,
        },
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantBound {
    pub log_bound: f64,
    pub bound: f64,
    pub gamma: HermiteValue,
}

fn regulator_term(n: u32, regulator: f64, gamma: f64) -> f64 {
    let nf = f64::from(n);
    (gamma * (nf * nf * nf - nf) / 3.0).sqrt() * (nf.sqrt() * regulator).powf(1.0 / (nf - 1.0))
}

pub fn discriminant_log_bound(q: &RegulatorQuery) -> Result<DiscriminantBound> {
    q.validate()?;
    let gamma = hermite_gamma(q.n - 1)?;
    let log_bound = f64::from(q.min_pm) * 4f64.ln() + regulator_term(q.n, q.regulator, gamma.value);
    Ok(DiscriminantBound {
        log_bound,
        bound: log_bound.exp(),
        gamma,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureComparison {
    pub log_bound: f64,
    /// Bound with `min_pm` replaced by `floor(n/2)`.
    pub signature_free_log_bound: f64,
    /// `(floor(n/2) - min_pm) log 4`.
    pub improvement: f64,
}

pub fn compare_with_signature_free(q: &RegulatorQuery) -> Result<SignatureComparison> {
    let new = discriminant_log_bound(q)?;
    let free = discriminant_log_bound(&RegulatorQuery {
        min_pm: q.n / 2,
        ..*q
    })?;
    Ok(SignatureComparison {
        log_bound: new.log_bound,
        signature_free_log_bound: free.log_bound,
        improvement: f64::from(q.n / 2 - q.min_pm) * 4f64.ln(),
    })
}

/// JSON report for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatorReport {
    pub n: u32,
    pub min_pm: u32,
    #[serde(rename = "R")]
    pub regulator: f64,
    pub gamma: f64,
    pub gamma_exact: bool,
    pub log_bound: f64,
    pub bound: f64,
    pub signature_free_log_bound: f64,
    pub improvement: f64,
    /// Hypotheses the caller asserts about the field.
    pub assumed: Vec<String>,
}

pub fn regulator_report(q: &RegulatorQuery) -> Result<RegulatorReport> {
    let b = discriminant_log_bound(q)?;
    let cmp = compare_with_signature_free(q)?;
    Ok(RegulatorReport {
        n: q.n,
        min_pm: q.min_pm,
        regulator: q.regulator,
        gamma: b.gamma.value,
        gamma_exact: b.gamma.exact,
        log_bound: b.log_bound,
        bound: b.bound,
        signature_free_log_bound: cmp.signature_free_log_bound,
        improvement: cmp.improvement,
        assumed: vec!["totally real".into(), "primitive".into()],
    })
}
