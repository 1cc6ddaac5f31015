//! Hypothesis tests of `R̃^(2)` against separability and producibility
//! bounds, and the batch pipeline over all applicable criteria.

use serde::Serialize;

use crate::bounds::{depth_implication, CriterionBound, CriterionKind, N4_NOTE};
use crate::confidence::{one_sided_tail, Method};
use crate::error::{Error, Result};
use crate::estimation::{
    moment_estimate, variance_upper_bound, Hypothesis, MomentEstimate, SettingStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    Violated,
    NotViolated,
    /// Violation observed but below the requested confidence.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: CriterionKind,
    pub observed: f64,
    /// Exact bound as `num/den`.
    pub bound: String,
    pub bound_f64: f64,
    pub delta_obs: f64,
    pub method: Method,
    pub gamma: f64,
    /// Per-setting variance bound under the hypothesis.
    pub variance_bound: f64,
    /// One-sided tail probability; `None` when nothing was observed above
    /// the bound.
    pub tail: Option<f64>,
    pub confidence: f64,
    pub verdict: VerdictKind,
    pub depth_implication: Option<usize>,
    pub assumptions: Vec<String>,
    pub diagnostics: Vec<String>,
}

/// Tests `H0: state satisfies criterion` on an `R̃^(2)` estimate. The
/// variance is bounded under `H0`, not estimated.
pub fn test_criterion(
    estimate: &MomentEstimate,
    n: usize,
    criterion: CriterionKind,
    gamma: f64,
    method: Method,
) -> Result<Verdict> {
    if estimate.t != 2 {
        return Err(Error::validation(format!(
            "criteria test the second moment, got an estimate of order {}",
            estimate.t
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!(
            "confidence {gamma} outside (0, 1)"
        )));
    }
    let bound = CriterionBound::new(n, criterion, 2)?;
    let vb = variance_upper_bound(n, estimate.k, Hypothesis::Criterion(criterion))?;
    let bound_f64 = bound.value.to_f64();
    let delta_obs = estimate.value - bound_f64;
    let (tail, diagnostics) = if delta_obs > 0.0 {
        let (t, d) = one_sided_tail(method, estimate.m, estimate.k, vb.value, delta_obs)?;
        (Some(t), d)
    } else {
        (None, Vec::new())
    };
    let confidence = tail.map_or(0.0, |t| 1.0 - t);
    let verdict = match tail {
        None => VerdictKind::NotViolated,
        Some(_) if confidence >= gamma => VerdictKind::Violated,
        Some(_) => VerdictKind::Inconclusive,
    };
    Ok(Verdict {
        criterion,
        observed: estimate.value,
        bound: bound.value.to_string(),
        bound_f64,
        delta_obs,
        method,
        gamma,
        variance_bound: vb.value,
        tail,
        confidence,
        verdict,
        depth_implication: if verdict == VerdictKind::Violated {
            depth_implication(n, criterion)
        } else {
            None
        },
        assumptions: vb.assumptions,
        diagnostics,
    })
}

/// Criteria that an `N`-qubit state can violate: FullSep, WClass, KSep(k)
/// for `2 ≤ k ≤ ⌊(N−1)/2⌋` and MProducible(m) for `2 ≤ m < N`.
pub fn applicable_criteria(n: usize) -> Vec<CriterionKind> {
    let mut out = Vec::new();
    if n >= 2 {
        out.push(CriterionKind::FullSep);
    }
    if n >= 3 {
        out.push(CriterionKind::WClass);
    }
    out.extend((2..=n.saturating_sub(1) / 2).map(CriterionKind::KSep));
    out.extend((2..n).map(CriterionKind::MProducible));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub n_qubits: usize,
    pub m: usize,
    pub k: u64,
    pub estimate_r2: f64,
    /// Plug-in variance of `R̃^(2)`, for diagnostics only.
    pub plug_in_variance: f64,
    pub gamma: f64,
    pub method: Method,
    /// Strongest claim first (largest bound).
    pub verdicts: Vec<Verdict>,
    /// Largest depth lower bound among violated criteria.
    pub summary_depth: Option<usize>,
    pub notes: Vec<String>,
}

/// Estimates `R̃^(2)` and tests every applicable criterion.
pub fn certify_all(
    stats: &[SettingStats],
    n: usize,
    gamma: f64,
    method: Method,
) -> Result<CertificationReport> {
    certify_criteria(stats, n, gamma, method, &applicable_criteria(n))
}

/// Estimates `R̃^(2)` and tests the given criteria on the same data. No
/// multiple-testing correction is applied.
pub fn certify_criteria(
    stats: &[SettingStats],
    n: usize,
    gamma: f64,
    method: Method,
    criteria: &[CriterionKind],
) -> Result<CertificationReport> {
    let estimate = moment_estimate(stats, 2)?;
    let mut verdicts = criteria
        .iter()
        .copied()
        .map(|c| test_criterion(&estimate, n, c, gamma, method))
        .collect::<Result<Vec<_>>>()?;
    verdicts.sort_by(|a, b| b.bound_f64.total_cmp(&a.bound_f64));
    let summary_depth = verdicts.iter().filter_map(|v| v.depth_implication).max();
    let mut notes = Vec::new();
    if n <= 4 {
        notes.push(if n == 4 {
            N4_NOTE.to_string()
        } else {
            "no k-separability criteria below N = 5".to_string()
        });
    }
    Ok(CertificationReport {
        n_qubits: n,
        m: estimate.m,
        k: estimate.k,
        estimate_r2: estimate.value,
        plug_in_variance: estimate.variance_estimate,
        gamma,
        method,
        verdicts,
        summary_depth,
        notes,
    })
}
