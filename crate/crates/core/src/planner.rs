//! Measurement budgets: settings `M` and shots `K` needed for a target error
//! bar or for certifying a violation.

use serde::Serialize;

use crate::bounds::{hypothesis_r2, hypothesis_r4, CriterionBound, CriterionKind};
use crate::confidence::{error_bar, log_term, one_sided_tail, range_constant, Method};
use crate::error::{Error, Result};
use crate::estimation::{
    max_setting_variance, variance_coefficients, variance_upper_bound, Hypothesis,
};
use crate::moments::ghz_moment_closed;

/// Default upper end of the `K` scan.
pub const DEFAULT_K_CAP: u64 = 1_000_000;
/// Largest `M` a plan may ask for.
pub const MAX_SETTINGS: f64 = 1e18;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPlan {
    pub n_qubits: usize,
    /// `None` for plain estimation.
    pub criterion: Option<CriterionKind>,
    pub gamma: f64,
    pub method: Method,
    /// Target half-width (estimation) or planned violation (certification).
    pub delta: f64,
    pub delta_rel: Option<f64>,
    pub k: u64,
    pub m: u64,
    pub m_tot: u128,
    /// Half-width (estimation) or one-sided tail (certification) achieved
    /// by `(M, K)`, from forward evaluation.
    pub achieved: f64,
    pub assumptions: Vec<String>,
}

/// `A r4 + B r2 + C` for fixed moment bounds.
#[derive(Debug, Clone, Copy)]
struct VarianceModel {
    r2: f64,
    r4: f64,
}

impl VarianceModel {
    fn at(&self, k: u64) -> f64 {
        let (a, b, c) = variance_coefficients(k).expect("K >= 2");
        a * self.r4 + b * self.r2 + c
    }
}

fn check_inputs(k: u64, gamma: f64, delta: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::validation(format!("K must be at least 2, got {k}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!(
            "confidence {gamma} outside (0, 1)"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::validation(format!(
            "target deviation {delta} must be positive"
        )));
    }
    Ok(())
}

/// Continuous estimate of the `M` needed; exact for the Cantelli and
/// Bernstein methods up to rounding.
fn m_estimate(
    method: Method,
    k: u64,
    gamma: f64,
    var: f64,
    delta: f64,
    one_sided_test: bool,
) -> f64 {
    let mu = range_constant(k);
    let l = if one_sided_test {
        (1.0 / (1.0 - gamma)).ln()
    } else {
        log_term(gamma)
    };
    let bern = |v: f64| l * (2.0 * v + 2.0 / 3.0 * mu * delta) / (delta * delta);
    match method {
        Method::CantelliTwoSided if !one_sided_test => {
            (1.0 + gamma) / (1.0 - gamma) * var / (delta * delta)
        }
        Method::CantelliTwoSided | Method::CantelliOneSided => {
            gamma / (1.0 - gamma) * var / (delta * delta)
        }
        Method::BernsteinRange => bern(max_setting_variance(k).expect("K >= 2")),
        Method::BernsteinVariance => bern(var),
        Method::ChernoffVariance => {
            let plain = 2.0 * l * var / (delta * delta);
            if one_sided_test {
                plain.max(8.0 * mu / (delta * var)).min(bern(var))
            } else {
                plain.max((16.0 * l * mu / delta.powi(3)).sqrt())
            }
        }
    }
}

/// Smallest `M ≥ 1` satisfying a monotone predicate, starting from a
/// candidate.
fn minimal_m(candidate: f64, ok: impl Fn(u64) -> bool) -> Result<u64> {
    if !(candidate.is_finite()) || candidate > MAX_SETTINGS {
        return Err(Error::resource(format!(
            "required number of settings ({candidate:.3e}) exceeds {MAX_SETTINGS:e}"
        )));
    }
    let c = (candidate.ceil() as u64).max(1);
    if ok(c) && (c == 1 || !ok(c - 1)) {
        return Ok(c);
    }
    let (mut lo, mut hi) = if ok(c) {
        (0, c)
    } else {
        (c, c.saturating_mul(2))
    };
    while !ok(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi as f64 > 4.0 * MAX_SETTINGS {
            return Err(Error::resource("required number of settings unbounded"));
        }
    }
    // invariant: !ok(lo) or lo == 0, ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn m_two_sided(method: Method, k: u64, gamma: f64, var: f64, delta: f64) -> Result<u64> {
    let cand = m_estimate(method, k, gamma, var, delta, false);
    minimal_m(cand, |m| {
        error_bar(method, m as usize, k, gamma, var).is_ok_and(|b| b.delta <= delta)
    })
}

fn m_one_sided(method: Method, k: u64, gamma: f64, var: f64, delta: f64) -> Result<u64> {
    let cand = m_estimate(method, k, gamma, var, delta, true);
    minimal_m(cand, |m| {
        one_sided_tail(method, m as usize, k, var, delta).is_ok_and(|(t, _)| t <= 1.0 - gamma)
    })
}

fn global_model(n: usize) -> Result<VarianceModel> {
    let vb = variance_upper_bound(n, 2, Hypothesis::Global)?;
    Ok(VarianceModel {
        r2: vb.r2.to_f64(),
        r4: vb.r4.to_f64(),
    })
}

/// Settings needed so that `method`'s two-sided bar at `(M, K, γ)` is at
/// most `δ_rel · R^(2)_{GHZ_N}`, using the state-independent variance bound.
pub fn required_m(n: usize, k: u64, gamma: f64, delta_rel: f64, method: Method) -> Result<u64> {
    let delta = delta_rel * ghz_moment_closed(n, 2)?.to_f64();
    check_inputs(k, gamma, delta)?;
    m_two_sided(method, k, gamma, global_model(n)?.at(k), delta)
}

/// Unrounded Cantelli `M(K)`, usable where the integer count would overflow.
pub fn required_m_continuous(n: usize, k: u64, gamma: f64, delta_rel: f64) -> Result<f64> {
    let delta = delta_rel * ghz_moment_closed(n, 2)?.to_f64();
    check_inputs(k, gamma, delta)?;
    Ok((1.0 + gamma) / (1.0 - gamma) * global_model(n)?.at(k) / (delta * delta))
}

/// Minimizer of `K · M(K)` for the Cantelli bar with GHZ moment values:
/// `K_opt = 1 + √2 · sqrt(1 + (1 − 2 R^(2))/R^(4))`.
pub fn optimal_k(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::validation("optimal K needs N >= 2"));
    }
    let r2 = ghz_moment_closed(n, 2)?.to_f64();
    let r4 = ghz_moment_closed(n, 4)?.to_f64();
    Ok(1.0 + 2f64.sqrt() * (1.0 + (1.0 - 2.0 * r2) / r4).sqrt())
}

/// Scans `K = 2..=k_cap` for the smallest `M·K`; ties go to the smaller `K`.
fn scan(k_cap: u64, m_of: impl Fn(u64) -> Result<u64>) -> Result<(u64, u64)> {
    if k_cap < 2 {
        return Err(Error::validation("K cap must be at least 2"));
    }
    let mut best: Option<(u128, u64, u64)> = None;
    let mut last_err = None;
    for k in 2..=k_cap {
        match m_of(k) {
            Ok(m) => {
                let tot = m as u128 * k as u128;
                if best.is_none_or(|(b, _, _)| tot < b) {
                    best = Some((tot, k, m));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, k, m)) => Ok((k, m)),
        None => Err(Error::Infeasible(format!(
            "no feasible K in 2..={k_cap}{}",
            last_err.map(|e| format!(" ({e})")).unwrap_or_default()
        ))),
    }
}

/// Fast Cantelli `M(K)` for scans: closed form plus a one-step check.
fn cantelli_m(fac: f64, var: f64, delta: f64) -> Result<u64> {
    let cand = fac * var / (delta * delta);
    if !(cand.is_finite()) || cand > MAX_SETTINGS {
        return Err(Error::resource("settings overflow"));
    }
    let mut m = (cand.ceil() as u64).max(1);
    // exact re-check of the defining inequality fac·var/m <= δ²
    while fac * var / m as f64 > delta * delta {
        m += 1;
    }
    while m > 1 && fac * var / (m - 1) as f64 <= delta * delta {
        m -= 1;
    }
    Ok(m)
}

/// Plan with the smallest `M_tot = M·K` for estimating `R^(2)` to relative
/// precision `δ_rel`.
pub fn min_total_budget(
    n: usize,
    gamma: f64,
    delta_rel: f64,
    method: Method,
    k_cap: u64,
) -> Result<BudgetPlan> {
    let delta = delta_rel * ghz_moment_closed(n, 2)?.to_f64();
    check_inputs(2, gamma, delta)?;
    let model = global_model(n)?;
    let (k, m) = match method {
        Method::CantelliTwoSided | Method::CantelliOneSided => {
            let fac = if method == Method::CantelliTwoSided {
                (1.0 + gamma) / (1.0 - gamma)
            } else {
                gamma / (1.0 - gamma)
            };
            scan(k_cap, |k| cantelli_m(fac, model.at(k), delta))?
        }
        _ => scan(k_cap, |k| m_two_sided(method, k, gamma, model.at(k), delta))?,
    };
    let var = model.at(k);
    let achieved = error_bar(method, m as usize, k, gamma, var)?.delta;
    Ok(BudgetPlan {
        n_qubits: n,
        criterion: None,
        gamma,
        method,
        delta,
        delta_rel: Some(delta_rel),
        k,
        m,
        m_tot: m as u128 * k as u128,
        achieved,
        assumptions: variance_upper_bound(n, 2, Hypothesis::Global)?.assumptions,
    })
}

/// Budget for observing a violation `δ = target_r2 − bound` of `criterion`
/// with one-sided confidence `γ`, bounding the variance under the
/// hypothesis that the state satisfies the criterion.
pub fn certification_budget(
    n: usize,
    criterion: CriterionKind,
    target_r2: f64,
    gamma: f64,
    method: Method,
    k_cap: u64,
) -> Result<BudgetPlan> {
    let bound = CriterionBound::new(n, criterion, 2)?;
    let delta = target_r2 - bound.value.to_f64();
    if !(delta > 0.0) {
        return Err(Error::Infeasible(format!(
            "criterion not violated by target state: target R2 = {target_r2:.6e} <= bound {}",
            bound.value
        )));
    }
    check_inputs(2, gamma, delta)?;
    let (r4, assumptions) = hypothesis_r4(n, criterion)?;
    let model = VarianceModel {
        r2: hypothesis_r2(n, criterion)?.to_f64(),
        r4: r4.to_f64(),
    };
    let (k, m) = match method {
        Method::CantelliTwoSided | Method::CantelliOneSided => {
            let fac = gamma / (1.0 - gamma);
            scan(k_cap, |k| cantelli_m(fac, model.at(k), delta))?
        }
        _ => scan(k_cap, |k| m_one_sided(method, k, gamma, model.at(k), delta))?,
    };
    let achieved = one_sided_tail(method, m as usize, k, model.at(k), delta)?.0;
    Ok(BudgetPlan {
        n_qubits: n,
        criterion: Some(criterion),
        gamma,
        method,
        delta,
        delta_rel: None,
        k,
        m,
        m_tot: m as u128 * k as u128,
        achieved,
        assumptions,
    })
}
