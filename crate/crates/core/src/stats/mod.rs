//! Paired t-tests, OLS with coefficient significance, and the
//! diagonal/off-diagonal confusion-matrix comparison.
//!
//! The Student-t CDF is computed from the regularized incomplete beta
//! function; everything downstream (p-values, decisions) funnels through
//! [`t_cdf`]. p-values are clamped to `[1e-300, 1]` so reports never carry
//! an exact zero.

mod special;

use crate::metrics::ConfusionMatrix;
use serde::Serialize;
use thiserror::Error;

/// Smallest reported p-value.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degrees of freedom must be at least 1")]
    InvalidDf,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} paired observations, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("x values are all equal; slope is undefined")]
    SingularDesign,
    #[error("confusion matrices mix class counts: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("empty confusion-matrix family")]
    EmptyFamily,
}

/// Result of a paired two-sided t-test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_two_sided: f64,
    /// Number of pairs (df + 1).
    pub n: usize,
}

/// Ordinary least squares fit of y = intercept + slope * x.
///
/// Coefficient p-values are `None` when n < 3 (no residual degrees of
/// freedom).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_p: Option<f64>,
    pub intercept_p: Option<f64>,
    pub n: usize,
    pub r2: f64,
}

/// Accept/reject outcome at a significance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject_null: bool,
}

/// How families of confusion matrices enter the diagonal/off-diagonal test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Average each family cellwise first; one observation per cell position.
    Cells,
    /// Every (family member, cell position) is its own observation;
    /// families must pair up by index.
    Pairs,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Cells => "cells",
            Pooling::Pairs => "pairs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagOffdiagTest {
    pub diag: TTestResult,
    pub offdiag: TTestResult,
}

/// CDF of Student's t with `df` degrees of freedom.
///
/// Absolute error is below 1e-10 over df in 1..=200 (checked against an
/// independent quadrature oracle in the acceptance suite). Infinite `t`
/// maps to the exact limit.
pub fn t_cdf(t: f64, df: usize) -> Result<f64, StatsError> {
    if df < 1 {
        return Err(StatsError::InvalidDf);
    }
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let v = df as f64;
    let x = v / (v + t * t);
    let half_tail = 0.5 * special::inc_beta(0.5 * v, 0.5, x);
    Ok(if t <= 0.0 { half_tail } else { 1.0 - half_tail })
}

/// Two-sided p-value for a t statistic, clamped to [P_FLOOR, 1].
pub fn two_sided_p(t: f64, df: usize) -> Result<f64, StatsError> {
    let tail = 1.0 - t_cdf(t.abs(), df)?;
    Ok((2.0 * tail).clamp(P_FLOOR, 1.0))
}

/// Paired two-sided t-test of xs against ys.
///
/// statistic = mean(d) / (sd(d)/sqrt(n)) with d = x - y and the n-1
/// variance denominator. All differences identical is a degenerate
/// comparison and errors with [`StatsError::ZeroVariance`] rather than
/// reporting a statistic.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<TTestResult, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs { need: 2, got: n });
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    // bitwise-equal differences would otherwise survive the variance check
    // with rounding crumbs from the mean subtraction
    if d.iter().all(|&v| v == d[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let ss: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sd = (ss / (n - 1) as f64).sqrt();
    let statistic = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(TTestResult {
        statistic,
        df,
        p_two_sided: two_sided_p(statistic, df)?,
        n,
    })
}

/// Closed-form OLS for a single regressor with intercept.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<OlsFit, StatsError> {
    let n = points.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs { need: 2, got: n });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::SingularDesign);
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    let (slope_p, intercept_p) = if n >= 3 {
        let df = n - 2;
        let s2 = ss_res / df as f64;
        let se_slope = (s2 / sxx).sqrt();
        let se_int = (s2 * (1.0 / nf + mean_x * mean_x / sxx)).sqrt();
        (
            Some(coefficient_p(slope, se_slope, df)?),
            Some(coefficient_p(intercept, se_int, df)?),
        )
    } else {
        (None, None)
    };

    Ok(OlsFit {
        slope,
        intercept,
        slope_p,
        intercept_p,
        n,
        r2,
    })
}

/// p-value of H0: coefficient = 0. A zero standard error means an exact
/// fit: p collapses to the floor unless the coefficient itself is zero.
fn coefficient_p(coef: f64, se: f64, df: usize) -> Result<f64, StatsError> {
    if se == 0.0 {
        return Ok(if coef == 0.0 { 1.0 } else { P_FLOOR });
    }
    two_sided_p(coef / se, df)
}

/// Compare two families of confusion matrices on their diagonal and
/// off-diagonal cells with paired t-tests.
///
/// With [`Pooling::Cells`] each family is first averaged cellwise and the
/// tests pair the K diagonal (and K(K-1) off-diagonal) positions of the two
/// means. With [`Pooling::Pairs`] the families must have equal length and
/// every (member, position) combination is an observation.
pub fn diag_offdiag_test(
    c1: &[ConfusionMatrix],
    c2: &[ConfusionMatrix],
    pooling: Pooling,
) -> Result<DiagOffdiagTest, StatsError> {
    if c1.is_empty() || c2.is_empty() {
        return Err(StatsError::EmptyFamily);
    }
    let k = c1[0].k();
    for m in c1.iter().chain(c2) {
        if m.k() != k {
            return Err(StatsError::DimensionMismatch { a: k, b: m.k() });
        }
    }
    let (diag1, off1, diag2, off2) = match pooling {
        Pooling::Cells => {
            let m1 = family_mean(c1, k);
            let m2 = family_mean(c2, k);
            let (d1, o1) = split_cells(&m1, k);
            let (d2, o2) = split_cells(&m2, k);
            (d1, o1, d2, o2)
        }
        Pooling::Pairs => {
            if c1.len() != c2.len() {
                return Err(StatsError::LengthMismatch {
                    left: c1.len(),
                    right: c2.len(),
                });
            }
            let mut d1 = Vec::new();
            let mut o1 = Vec::new();
            let mut d2 = Vec::new();
            let mut o2 = Vec::new();
            for (a, b) in c1.iter().zip(c2) {
                let (da, oa) = split_cells(a.cells(), k);
                let (db, ob) = split_cells(b.cells(), k);
                d1.extend(da);
                o1.extend(oa);
                d2.extend(db);
                o2.extend(ob);
            }
            (d1, o1, d2, o2)
        }
    };
    Ok(DiagOffdiagTest {
        diag: paired_t_test(&diag1, &diag2)?,
        offdiag: paired_t_test(&off1, &off2)?,
    })
}

fn family_mean(family: &[ConfusionMatrix], k: usize) -> Vec<f64> {
    let mut mean = vec![0.0; k * k];
    for m in family {
        for (acc, &c) in mean.iter_mut().zip(m.cells()) {
            *acc += c;
        }
    }
    let nf = family.len() as f64;
    for v in &mut mean {
        *v /= nf;
    }
    mean
}

/// Row-major cells -> (diagonal values, off-diagonal values in row order).
fn split_cells(cells: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k * (k - 1));
    for p in 0..k {
        for q in 0..k {
            if p == q {
                diag.push(cells[p * k + q]);
            } else {
                off.push(cells[p * k + q]);
            }
        }
    }
    (diag, off)
}

/// Reject H0 iff p < alpha; equality retains.
pub fn decide(p: f64, alpha: f64) -> Decision {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&alpha));
    Decision {
        alpha,
        reject_null: p < alpha,
    }
}
