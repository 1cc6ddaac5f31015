//! Unbiased estimators of `E^t` and `R^(t)` from shot counts, and their
//! variances.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    global_r4_cap, hypothesis_r2, hypothesis_r4, CriterionKind, GHZ_R4_ASSUMPTION,
};
use crate::confidence::ErrorBar;
use crate::error::{Error, Result};
use crate::moments::ghz_moment_closed;
use crate::rational::ExactRational;

/// Shots `K` taken under one setting and the number `y` with correlation
/// sample `X = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingStats {
    k: u64,
    y: u64,
}

impl SettingStats {
    pub fn new(k: u64, y: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("a setting needs at least one shot"));
        }
        if y > k {
            return Err(Error::validation(format!("count y = {y} exceeds K = {k}")));
        }
        Ok(SettingStats { k, y })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn y(&self) -> u64 {
        self.y
    }
}

/// `X = Π r_i` over `subset` (all outcomes when `None`).
pub fn correlation_sample(outcomes: &[i8], subset: Option<&[usize]>) -> Result<i8> {
    for &r in outcomes {
        if r != 1 && r != -1 {
            return Err(Error::validation(format!("outcome {r} is not +1 or -1")));
        }
    }
    match subset {
        None => Ok(outcomes.iter().product()),
        Some(idx) => {
            let mut seen = vec![false; outcomes.len()];
            let mut x = 1i8;
            for &i in idx {
                if i >= outcomes.len() {
                    return Err(Error::validation(format!(
                        "subset index {i} out of range for {} outcomes",
                        outcomes.len()
                    )));
                }
                if seen[i] {
                    return Err(Error::validation(format!("subset index {i} repeated")));
                }
                seen[i] = true;
                x *= outcomes[i];
            }
            Ok(x)
        }
    }
}

fn check_order(stats: &SettingStats, k: u64, what: &str) -> Result<()> {
    if k == 0 {
        return Err(Error::validation(format!("{what} order must be positive")));
    }
    if stats.k < k {
        return Err(Error::validation(format!(
            "insufficient shots for order {k}: K = {}",
            stats.k
        )));
    }
    Ok(())
}

/// `P̃_k = Y(Y−1)…(Y−k+1) / (K(K−1)…(K−k+1))`, unbiased for `P^k`.
pub fn p_hat_k(stats: &SettingStats, k: u64) -> Result<f64> {
    check_order(stats, k, "power")?;
    let mut v = 1.0;
    for j in 0..k {
        if stats.y < j + 1 {
            return Ok(0.0);
        }
        v *= (stats.y - j) as f64 / (stats.k - j) as f64;
    }
    Ok(v)
}

pub fn p_hat_k_exact(stats: &SettingStats, k: u64) -> Result<ExactRational> {
    check_order(stats, k, "power")?;
    let mut num = BigInt::from(1);
    let mut den = BigInt::from(1);
    for j in 0..k {
        num *= stats.y as i64 - j as i64;
        den *= stats.k - j;
    }
    Ok(ExactRational::new(num, den))
}

fn binom_f(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Ẽ_t = (−1)^t Σ_k (−2)^k C(t,k) P̃_k`, unbiased for `E^t` with `E = 2P − 1`.
pub fn e_hat_t(stats: &SettingStats, t: u64) -> Result<f64> {
    check_order(stats, t, "moment")?;
    let mut acc = 0.0;
    for k in 0..=t {
        let pk = if k == 0 { 1.0 } else { p_hat_k(stats, k)? };
        acc += (-2f64).powi(k as i32) * binom_f(t, k) * pk;
    }
    Ok(if t.is_multiple_of(2) { acc } else { -acc })
}

pub fn e_hat_t_exact(stats: &SettingStats, t: u64) -> Result<ExactRational> {
    check_order(stats, t, "moment")?;
    let mut acc = ExactRational::zero();
    let mut binom = BigInt::from(1);
    for k in 0..=t {
        let pk = if k == 0 {
            ExactRational::one()
        } else {
            p_hat_k_exact(stats, k)?
        };
        let coeff = BigInt::from(-2).pow(k as u32) * &binom;
        acc = acc + ExactRational::from_integer(coeff) * pk;
        binom = binom * (t - k) / (k + 1);
    }
    Ok(if t.is_multiple_of(2) {
        acc
    } else {
        ExactRational::zero() - acc
    })
}

/// Estimate `R̃^(t)` and its sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub t: u64,
    pub value: f64,
    pub m: usize,
    pub k: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_setting: Vec<f64>,
    /// Variance of `value`; see [`moment_estimate`] for how it is formed.
    pub variance_estimate: f64,
    pub error_bar: Option<ErrorBar>,
}

/// Averages `Ẽ_t` over settings.
///
/// For `t = 2` with `K ≥ 4` the variance is the plug-in
/// `(A R̃^(4) + B R̃^(2) + C − (R̃^(2))²)/M`; otherwise the between-setting
/// sample variance over `M` (zero when `M = 1`).
pub fn moment_estimate(records: &[SettingStats], t: u64) -> Result<MomentEstimate> {
    let first = records
        .first()
        .ok_or_else(|| Error::validation("no settings to estimate from"))?;
    let k = first.k;
    if let Some(bad) = records.iter().find(|r| r.k != k) {
        return Err(Error::validation(format!(
            "heterogeneous shot counts (K = {k} and K = {}) are not supported",
            bad.k
        )));
    }
    let per_setting = records
        .iter()
        .map(|r| e_hat_t(r, t))
        .collect::<Result<Vec<_>>>()?;
    let m = records.len();
    let value = per_setting.iter().sum::<f64>() / m as f64;
    let variance_estimate = if t == 2 && k >= 4 {
        let r4 = records.iter().map(|r| e_hat_t(r, 4)).sum::<Result<f64>>()? / m as f64;
        variance_r2_estimator(value, r4, m, k)?.max(0.0)
    } else if m > 1 {
        let ss: f64 = per_setting.iter().map(|v| (v - value).powi(2)).sum();
        ss / ((m - 1) * m) as f64
    } else {
        0.0
    };
    Ok(MomentEstimate {
        t,
        value,
        m,
        k,
        per_setting,
        variance_estimate,
        error_bar: None,
    })
}

/// `(A, B, C)` with `E_binomial[Ẽ_2²] = A E⁴ + B E² + C`:
/// `A = (K−2)(K−3)/(K(K−1))`, `B = 4(K−2)/(K(K−1))`, `C = 2/(K(K−1))`.
pub fn variance_coefficients_exact(
    k: u64,
) -> Result<(ExactRational, ExactRational, ExactRational)> {
    if k < 2 {
        return Err(Error::validation(format!(
            "variance coefficients need K >= 2, got {k}"
        )));
    }
    let k = k as i64;
    let d = k * (k - 1);
    Ok((
        ExactRational::new((k - 2) * (k - 3), d),
        ExactRational::new(4 * (k - 2), d),
        ExactRational::new(2, d),
    ))
}

pub fn variance_coefficients(k: u64) -> Result<(f64, f64, f64)> {
    if k < 2 {
        return Err(Error::validation(format!(
            "variance coefficients need K >= 2, got {k}"
        )));
    }
    let kf = k as f64;
    let d = kf * (kf - 1.0);
    Ok(((kf - 2.0) * (kf - 3.0) / d, 4.0 * (kf - 2.0) / d, 2.0 / d))
}

/// `Var(R̃^(2)) = (A r4 + B r2 + C − r2²)/M`.
pub fn variance_r2_estimator(r2: f64, r4: f64, m: usize, k: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::validation("M must be at least 1"));
    }
    let (a, b, c) = variance_coefficients(k)?;
    Ok((a * r4 + b * r2 + c - r2 * r2) / m as f64)
}

/// Largest single-setting variance of `Ẽ_2` over `P ∈ [0, 1]`:
/// `2(K−1)/(K(2K−3))`.
pub fn max_setting_variance(k: u64) -> Result<f64> {
    if k < 2 {
        return Err(Error::validation("K must be at least 2"));
    }
    let kf = k as f64;
    Ok(2.0 * (kf - 1.0) / (kf * (2.0 * kf - 3.0)))
}

/// State class assumed when bounding the variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Any N-qubit state.
    Global,
    Criterion(CriterionKind),
}

/// Per-setting variance bound `A r4 + B r2 + C` (divide by `M` for the
/// variance of `R̃^(2)`), with the moment bounds it used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBound {
    pub value: f64,
    pub r2: ExactRational,
    pub r4: ExactRational,
    pub assumptions: Vec<String>,
}

/// Upper bound on `E[Ẽ_2²]` for states in the hypothesis class, dropping the
/// `−r2²` term.
pub fn variance_upper_bound(n: usize, k: u64, hypothesis: Hypothesis) -> Result<VarianceBound> {
    let (r2, r4, assumptions) = match hypothesis {
        Hypothesis::Global => (
            ghz_moment_closed(n, 2)?,
            global_r4_cap(n)?,
            vec![GHZ_R4_ASSUMPTION.to_string()],
        ),
        Hypothesis::Criterion(kind) => {
            let (r4, a) = hypothesis_r4(n, kind)?;
            (hypothesis_r2(n, kind)?, r4, a)
        }
    };
    let (a, b, c) = variance_coefficients(k)?;
    Ok(VarianceBound {
        value: a * r4.to_f64() + b * r2.to_f64() + c,
        r2,
        r4,
        assumptions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Polynomials in one variable with exact coefficients, lowest degree first.
    type Poly = Vec<ExactRational>;

    fn padd(a: &Poly, b: &Poly) -> Poly {
        let mut out = vec![ExactRational::zero(); a.len().max(b.len())];
        for (i, c) in a.iter().enumerate() {
            out[i] = &out[i] + c;
        }
        for (i, c) in b.iter().enumerate() {
            out[i] = &out[i] + c;
        }
        trim(out)
    }

    fn pmul(a: &Poly, b: &Poly) -> Poly {
        let mut out = vec![ExactRational::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] = &out[i + j] + &(x * y);
            }
        }
        trim(out)
    }

    fn ppow(a: &Poly, e: u64) -> Poly {
        (0..e).fold(vec![ExactRational::one()], |acc, _| pmul(&acc, a))
    }

    fn trim(mut p: Poly) -> Poly {
        while p.len() > 1 && p.last().unwrap().is_zero() {
            p.pop();
        }
        p
    }

    fn scalar(c: ExactRational) -> Poly {
        vec![c]
    }

    fn choose(n: u64, k: u64) -> ExactRational {
        let v = (0..k).fold(BigInt::from(1), |acc, i| acc * (n - i) / (i + 1));
        ExactRational::from_integer(v)
    }

    /// `Σ_Y Bin(Y; K, P(x)) f(Y)` as a polynomial in x, where P and 1 − P
    /// are given as polynomials.
    fn binomial_expectation(k: u64, p: &Poly, q: &Poly, f: impl Fn(u64) -> ExactRational) -> Poly {
        let mut total = vec![ExactRational::zero()];
        for y in 0..=k {
            let w = pmul(&ppow(p, y), &ppow(q, k - y));
            let term = pmul(&w, &scalar(&choose(k, y) * &f(y)));
            total = padd(&total, &term);
        }
        total
    }

    #[test]
    fn p_hat_unbiased_exhaustive() {
        let p = vec![ExactRational::zero(), ExactRational::one()];
        let q = vec![ExactRational::one(), ExactRational::from_integer(-1)];
        for kk in 1..=6u64 {
            for order in 1..=kk {
                let e = binomial_expectation(kk, &p, &q, |y| {
                    p_hat_k_exact(&SettingStats::new(kk, y).unwrap(), order).unwrap()
                });
                let mut want = vec![ExactRational::zero(); order as usize + 1];
                want[order as usize] = ExactRational::one();
                assert_eq!(e, want, "K={kk} k={order}");
            }
        }
    }

    fn e_polys() -> (Poly, Poly) {
        // P = (1+E)/2, 1−P = (1−E)/2
        let h = ExactRational::new(1, 2);
        (
            vec![h.clone(), h.clone()],
            vec![h.clone(), ExactRational::zero() - h],
        )
    }

    #[test]
    fn e_hat_unbiased_exhaustive() {
        let (p, q) = e_polys();
        for kk in 1..=8u64 {
            for t in 1..=kk.min(5) {
                let e = binomial_expectation(kk, &p, &q, |y| {
                    e_hat_t_exact(&SettingStats::new(kk, y).unwrap(), t).unwrap()
                });
                let mut want = vec![ExactRational::zero(); t as usize + 1];
                want[t as usize] = ExactRational::one();
                assert_eq!(e, want, "K={kk} t={t}");
            }
        }
    }

    #[test]
    fn variance_identity_exhaustive() {
        let (p, q) = e_polys();
        for kk in 2..=10u64 {
            let e = binomial_expectation(kk, &p, &q, |y| {
                let v = e_hat_t_exact(&SettingStats::new(kk, y).unwrap(), 2).unwrap();
                &v * &v
            });
            let (a, b, c) = variance_coefficients_exact(kk).unwrap();
            let want = trim(vec![c, ExactRational::zero(), b, ExactRational::zero(), a]);
            assert_eq!(e, want, "K={kk}");
        }
    }

    #[test]
    fn coefficient_examples() {
        let q = ExactRational::new;
        assert_eq!(
            variance_coefficients_exact(2).unwrap(),
            (q(0, 1), q(0, 1), q(1, 1))
        );
        assert_eq!(
            variance_coefficients_exact(3).unwrap(),
            (q(0, 1), q(2, 3), q(1, 3))
        );
        assert_eq!(variance_coefficients_exact(10).unwrap().0, q(28, 45));
        assert!(variance_coefficients(1).is_err());
        // the main-text form (K−2)/K is not what enumeration gives at K=3
        assert_ne!(variance_coefficients_exact(3).unwrap().0, q(1, 3));
        for kk in 2..40u64 {
            let (a, b, c) = variance_coefficients(kk).unwrap();
            let (ea, eb, ec) = variance_coefficients_exact(kk).unwrap();
            assert!((a - ea.to_f64()).abs() < 1e-15);
            assert!((b - eb.to_f64()).abs() < 1e-15);
            assert!((c - ec.to_f64()).abs() < 1e-15);
        }
    }

    #[test]
    fn estimator_examples() {
        let s = |k, y| SettingStats::new(k, y).unwrap();
        assert_eq!(p_hat_k(&s(5, 5), 2).unwrap(), 1.0);
        assert_eq!(p_hat_k(&s(4, 1), 2).unwrap(), 0.0);
        assert!((p_hat_k(&s(3, 2), 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e_hat_t(&s(2, 2), 2).unwrap(), 1.0);
        assert_eq!(e_hat_t(&s(2, 1), 2).unwrap(), -1.0);
        assert_eq!(e_hat_t(&s(3, 0), 2).unwrap(), 1.0);
        assert!(p_hat_k(&s(1, 1), 2).is_err());
        assert!(e_hat_t(&s(3, 1), 4).is_err());
        assert!(SettingStats::new(3, 4).is_err());
    }

    #[test]
    fn e2_range_exhaustive() {
        for kk in 2..=100u64 {
            let lo = -1.0 / (kk - 1) as f64;
            for y in 0..=kk {
                let v = e_hat_t(&SettingStats::new(kk, y).unwrap(), 2).unwrap();
                assert!(v >= lo - 1e-12 && v <= 1.0 + 1e-12, "K={kk} y={y}: {v}");
            }
        }
    }

    #[test]
    fn float_and_exact_agree() {
        for kk in 4..=30u64 {
            for y in 0..=kk {
                let s = SettingStats::new(kk, y).unwrap();
                for t in [2, 4] {
                    let a = e_hat_t(&s, t).unwrap();
                    let b = e_hat_t_exact(&s, t).unwrap().to_f64();
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bernstein_variance_cap() {
        for kk in 2..=50u64 {
            let (a, b, c) = variance_coefficients(kk).unwrap();
            let cap = max_setting_variance(kk).unwrap();
            let mut top = 0.0f64;
            for i in 0..=20_000 {
                let e = i as f64 / 20_000.0;
                let e2 = e * e;
                top = top.max(a * e2 * e2 + b * e2 + c - e2 * e2);
            }
            assert!(top <= cap + 1e-12, "K={kk}: {top} > {cap}");
            assert!(
                top >= cap - 1e-6,
                "K={kk}: cap {cap} not approached ({top})"
            );
        }
    }

    #[test]
    fn correlation_samples() {
        assert_eq!(correlation_sample(&[1, 1, 1], None).unwrap(), 1);
        assert_eq!(correlation_sample(&[-1, -1, 1], None).unwrap(), 1);
        assert_eq!(correlation_sample(&[-1, 1, -1], Some(&[0, 1])).unwrap(), -1);
        assert!(correlation_sample(&[1, 1], Some(&[2])).is_err());
        assert!(correlation_sample(&[1, 1], Some(&[0, 0])).is_err());
        assert!(correlation_sample(&[1, 0], None).is_err());
    }

    #[test]
    fn moment_estimate_basics() {
        let one = [SettingStats::new(7, 3).unwrap()];
        let e = moment_estimate(&one, 2).unwrap();
        assert_eq!(e.value, e_hat_t(&one[0], 2).unwrap());
        let all = vec![SettingStats::new(5, 5).unwrap(); 4];
        assert_eq!(moment_estimate(&all, 2).unwrap().value, 1.0);
        let mixed = [
            SettingStats::new(5, 5).unwrap(),
            SettingStats::new(6, 5).unwrap(),
        ];
        assert!(moment_estimate(&mixed, 2).is_err());
        assert!(moment_estimate(&[], 2).is_err());
    }

    #[test]
    fn variance_examples() {
        let (_, _, c) = variance_coefficients(10).unwrap();
        assert!((variance_r2_estimator(0.0, 0.0, 7, 10).unwrap() - c / 7.0).abs() < 1e-15);
        assert!(
            (variance_r2_estimator(0.3, 0.2, 4, 2).unwrap() - (1.0 - 0.09) / 4.0).abs() < 1e-15
        );
        let g = variance_upper_bound(1, 2, Hypothesis::Global).unwrap();
        assert!((g.value - 1.0).abs() < 1e-15);
        let g = variance_upper_bound(5, 10, Hypothesis::Global).unwrap();
        let want =
            28.0 / 45.0 * (3.0 * 4096.0 / 759375.0) + 32.0 / 90.0 * (16.0 / 243.0) + 2.0 / 90.0;
        assert!((g.value - want).abs() < 1e-15);
        let h =
            variance_upper_bound(11, 125, Hypothesis::Criterion(CriterionKind::KSep(5))).unwrap();
        assert_eq!(h.r2, crate::bounds::ksep_bound_r2(11, 5).unwrap());
        assert_eq!(h.r4, crate::bounds::ksep_bound_r4(11, 5).unwrap());
    }
}
