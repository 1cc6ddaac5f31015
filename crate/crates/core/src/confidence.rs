//! Error bars and tail probabilities for `R̃^(2)` from Chebyshev–Cantelli,
//! Bernstein and Chernoff-type inequalities.
//!
//! Variances passed in as `variance_bound` are per setting, i.e. bounds on
//! `Var(Ẽ_2)` for one setting. The variance of the mean over `M` settings is
//! `variance_bound / M`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::max_setting_variance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CantelliTwoSided,
    CantelliOneSided,
    BernsteinRange,
    ChernoffVariance,
    BernsteinVariance,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CantelliTwoSided,
        Method::CantelliOneSided,
        Method::BernsteinRange,
        Method::ChernoffVariance,
        Method::BernsteinVariance,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::CantelliTwoSided => "cantelli-two-sided",
            Method::CantelliOneSided => "cantelli-one-sided",
            Method::BernsteinRange => "bernstein-range",
            Method::ChernoffVariance => "chernoff-variance",
            Method::BernsteinVariance => "bernstein-variance",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "cantelli-two-sided" | "cantelli" => Ok(Method::CantelliTwoSided),
            "cantelli-one-sided" => Ok(Method::CantelliOneSided),
            "bernstein-range" | "bernstein" => Ok(Method::BernsteinRange),
            "chernoff-variance" | "chernoff" => Ok(Method::ChernoffVariance),
            "bernstein-variance" => Ok(Method::BernsteinVariance),
            _ => Err(Error::validation(format!("unknown error-bar method {s:?}"))),
        }
    }
}

/// Half-width `δ` of an interval holding with probability at least `γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBar {
    pub method: Method,
    pub gamma: f64,
    pub delta: f64,
    /// False only if the bar's assumptions are known not to hold.
    pub valid: bool,
    /// Chernoff inflation factor, 1 when not needed.
    pub eta: f64,
    pub diagnostics: Vec<String>,
}

impl ErrorBar {
    fn plain(method: Method, gamma: f64, delta: f64) -> Self {
        ErrorBar {
            method,
            gamma,
            delta,
            valid: true,
            eta: 1.0,
            diagnostics: Vec::new(),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!(
            "confidence {gamma} outside (0, 1)"
        )));
    }
    Ok(())
}

fn check_mk(m: usize, k: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::validation("M must be at least 1"));
    }
    if k < 2 {
        return Err(Error::validation(format!("K must be at least 2, got {k}")));
    }
    Ok(())
}

fn check_var(v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::validation(format!(
            "variance {v} must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// `L = |ln((1−γ)/2)|`, the per-side log budget of a two-sided bar.
pub fn log_term(gamma: f64) -> f64 {
    ((1.0 - gamma) / 2.0).ln().abs()
}

/// `μ = 1 + 1/(K−1)`, the largest deviation of `Ẽ_2` from its mean.
pub fn range_constant(k: u64) -> f64 {
    1.0 + 1.0 / (k as f64 - 1.0)
}

/// `δ = sqrt((1+γ)/(1−γ) · variance)`, `variance` being that of the mean.
pub fn cantelli_two_sided(variance: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_var(variance)?;
    Ok(((1.0 + gamma) / (1.0 - gamma) * variance).sqrt())
}

/// One-sided bar `δ = sqrt(γ/(1−γ) · variance)`.
pub fn cantelli_one_sided(variance: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_var(variance)?;
    Ok((gamma / (1.0 - gamma) * variance).sqrt())
}

/// `P(X − ⟨X⟩ ≥ δ) ≤ Var/(Var + δ²)`.
pub fn cantelli_one_sided_tail(variance: f64, delta: f64) -> Result<f64> {
    check_var(variance)?;
    if !(delta > 0.0) {
        return Err(Error::validation(format!(
            "deviation {delta} must be positive"
        )));
    }
    Ok(variance / (variance + delta * delta))
}

/// Inverts `exp(−Mδ²/(2σ² + (2/3)cδ)) = e^{−L}` for `δ`.
fn bernstein_delta(m: usize, l: f64, var: f64, c: f64) -> f64 {
    let m = m as f64;
    c * l / (3.0 * m) * (1.0 + (1.0 + 18.0 * m * var / (c * c * l)).sqrt())
}

/// Bernstein bar from the worst-case single-setting variance
/// `σ̄² = 2(K−1)/(K(2K−3))` and range constant `μ`.
pub fn bernstein_error_bar(m: usize, k: u64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_mk(m, k)?;
    Ok(bernstein_delta(
        m,
        log_term(gamma),
        max_setting_variance(k)?,
        range_constant(k),
    ))
}

/// Bernstein bar from a per-setting variance bound.
pub fn bernstein_variance_error_bar(
    m: usize,
    k: u64,
    gamma: f64,
    variance_bound: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    check_mk(m, k)?;
    check_var(variance_bound)?;
    Ok(bernstein_delta(
        m,
        log_term(gamma),
        variance_bound,
        range_constant(k),
    ))
}

/// Chernoff-type bar `δ = sqrt(2L·V/M)`, valid when `M ≥ 8μ/(δV)`. When
/// that fails the bar is inflated to `√η·δ` with the smallest `η` restoring
/// validity, `η^{3/2} = 8μ/(MδV)`.
pub fn chernoff_error_bar(m: usize, k: u64, gamma: f64, variance_bound: f64) -> Result<ErrorBar> {
    check_gamma(gamma)?;
    check_mk(m, k)?;
    check_var(variance_bound)?;
    if variance_bound == 0.0 {
        // no variance information: the validity condition can never hold
        let d = bernstein_delta(m, log_term(gamma), 0.0, range_constant(k));
        let mut bar = ErrorBar::plain(Method::ChernoffVariance, gamma, d);
        bar.diagnostics
            .push("zero variance bound; Bernstein bar used".into());
        return Ok(bar);
    }
    let mu = range_constant(k);
    let mf = m as f64;
    let delta = (2.0 * log_term(gamma) * variance_bound / mf).sqrt();
    let needed = 8.0 * mu / (delta * variance_bound);
    let mut bar = ErrorBar::plain(Method::ChernoffVariance, gamma, delta);
    if mf < needed {
        let eta = (needed / mf).powf(2.0 / 3.0);
        bar.eta = eta;
        bar.delta = eta.sqrt() * delta;
        bar.diagnostics.push(format!(
            "M = {m} below validity threshold {needed:.1}; bar inflated by sqrt(eta), eta = {eta:.4}"
        ));
    }
    Ok(bar)
}

/// Smallest `M` with `M ≥ 8μ/(δV)` for a target `δ`.
pub fn chernoff_validity_threshold(k: u64, delta: f64, variance_bound: f64) -> f64 {
    8.0 * range_constant(k) / (delta * variance_bound)
}

/// Error bar of `method` for the mean of `M` settings with the given
/// per-setting variance bound.
pub fn error_bar(
    method: Method,
    m: usize,
    k: u64,
    gamma: f64,
    variance_bound: f64,
) -> Result<ErrorBar> {
    check_mk(m, k)?;
    let var_mean = variance_bound / m as f64;
    Ok(match method {
        Method::CantelliTwoSided => {
            ErrorBar::plain(method, gamma, cantelli_two_sided(var_mean, gamma)?)
        }
        Method::CantelliOneSided => {
            ErrorBar::plain(method, gamma, cantelli_one_sided(var_mean, gamma)?)
        }
        Method::BernsteinRange => ErrorBar::plain(method, gamma, bernstein_error_bar(m, k, gamma)?),
        Method::ChernoffVariance => chernoff_error_bar(m, k, gamma, variance_bound)?,
        Method::BernsteinVariance => ErrorBar::plain(
            method,
            gamma,
            bernstein_variance_error_bar(m, k, gamma, variance_bound)?,
        ),
    })
}

/// Upper bound on `P(R̃ − ⟨R̃⟩ ≥ δ)` for the mean of `M` settings; the
/// one-sided analogue of each method. Returns the tail and diagnostics.
pub fn one_sided_tail(
    method: Method,
    m: usize,
    k: u64,
    variance_bound: f64,
    delta: f64,
) -> Result<(f64, Vec<String>)> {
    check_mk(m, k)?;
    check_var(variance_bound)?;
    if !(delta > 0.0) {
        return Err(Error::validation(format!(
            "deviation {delta} must be positive"
        )));
    }
    let mf = m as f64;
    let mu = range_constant(k);
    let bernstein =
        |var: f64, c: f64| (-mf * delta * delta / (2.0 * var + 2.0 / 3.0 * c * delta)).exp();
    let mut notes = Vec::new();
    let tail = match method {
        Method::CantelliTwoSided | Method::CantelliOneSided => {
            cantelli_one_sided_tail(variance_bound / mf, delta)?
        }
        Method::BernsteinRange => bernstein(max_setting_variance(k)?, mu),
        Method::BernsteinVariance => bernstein(variance_bound, mu),
        Method::ChernoffVariance => {
            if variance_bound > 0.0 && mf >= chernoff_validity_threshold(k, delta, variance_bound) {
                (-mf * delta * delta / (2.0 * variance_bound)).exp()
            } else {
                notes
                    .push("Chernoff validity condition fails; Bernstein-variance tail used".into());
                bernstein(variance_bound, mu)
            }
        }
    };
    Ok((tail.min(1.0), notes))
}
