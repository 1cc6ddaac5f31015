//! Separability and producibility bounds on `R^(2)` and `R^(4)`, noise
//! thresholds and entanglement-depth implications. All values are exact.

use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{bell_product_r4, ghz_moment_closed};
use crate::rational::ExactRational;
use crate::states::{Block, BlockProduct};

/// Recorded on every result that relies on GHZ states maximizing `R^(4)`.
pub const GHZ_R4_ASSUMPTION: &str =
    "GHZ states maximize R^(4) among N-qubit states for N != 4 (numerical conjecture)";
/// Recorded when a hypothesis has no dedicated `R^(4)` bound.
pub const GLOBAL_R4_FALLBACK: &str =
    "no class-specific R^(4) bound known; the global R^(4) cap was used";
/// Note attached to the N = 4 k-separability exclusion.
pub const N4_NOTE: &str =
    "GME detection is only possible for N > 4: the 2-separable bound equals the GHZ value at N = 4";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param")]
pub enum CriterionKind {
    FullSep,
    KSep(usize),
    WClass,
    MProducible(usize),
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriterionKind::FullSep => write!(f, "FullSep"),
            CriterionKind::KSep(k) => write!(f, "KSep({k})"),
            CriterionKind::WClass => write!(f, "WClass"),
            CriterionKind::MProducible(m) => write!(f, "MProducible({m})"),
        }
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;

    /// Accepts `fullsep`, `wclass`, `ksep:K` / `ksep(K)`, `mprod:M` / `mproducible(M)`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::validation(format!("unknown criterion {s:?}"));
        let (name, arg) = match lower.find([':', '(', '=']) {
            Some(i) => (
                &lower[..i],
                Some(lower[i + 1..].trim_end_matches(')').trim().to_string()),
            ),
            None => (lower.as_str(), None),
        };
        let num =
            || -> Result<usize> { arg.as_deref().ok_or_else(bad)?.parse().map_err(|_| bad()) };
        match name {
            "fullsep" | "full-sep" | "separable" => Ok(CriterionKind::FullSep),
            "wclass" | "w-class" | "w" => Ok(CriterionKind::WClass),
            "ksep" | "k-sep" => Ok(CriterionKind::KSep(num()?)),
            "mprod" | "mproducible" | "m-producible" => Ok(CriterionKind::MProducible(num()?)),
            _ => Err(bad()),
        }
    }
}

/// A bound on `R^(t)` for one state class, validated for use in a
/// certification test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionBound {
    pub kind: CriterionKind,
    pub n_qubits: usize,
    pub t: u32,
    pub value: ExactRational,
    pub saturating_state: Option<String>,
    pub assumptions: Vec<String>,
}

impl CriterionBound {
    /// Bound on `R^(t)` under the hypothesis `kind`. Rejects criteria that can
    /// never be violated by an `N`-qubit state with [`Error::Inapplicable`].
    pub fn new(n: usize, kind: CriterionKind, t: u32) -> Result<Self> {
        check_applicable(n, kind)?;
        let (value, saturating, assumptions) = match t {
            2 => {
                let (v, s) = r2_with_fixture(n, kind)?;
                (v, s, Vec::new())
            }
            4 => {
                let (v, a) = hypothesis_r4(n, kind)?;
                (v, None, a)
            }
            _ => {
                return Err(Error::validation(format!(
                    "bounds exist for t = 2 and t = 4, got {t}"
                )))
            }
        };
        Ok(CriterionBound {
            kind,
            n_qubits: n,
            t,
            value,
            saturating_state: saturating.map(|b| b.to_string()),
            assumptions,
        })
    }
}

/// Criterion applicability for certification of `N`-qubit states.
pub fn check_applicable(n: usize, kind: CriterionKind) -> Result<()> {
    match kind {
        CriterionKind::FullSep => {
            if n < 2 {
                return Err(Error::Inapplicable("full separability needs N >= 2".into()));
            }
        }
        CriterionKind::WClass => {
            if n < 3 {
                return Err(Error::Inapplicable("W-class bound needs N >= 3".into()));
            }
        }
        CriterionKind::KSep(k) => {
            let hi = (n.saturating_sub(1)) / 2;
            if k < 2 || k > hi {
                let note = if n == 4 {
                    format!("; {N4_NOTE}")
                } else {
                    String::new()
                };
                return Err(Error::Inapplicable(format!(
                    "KSep({k}) at N = {n}: admissible k is 2..={hi}{note}"
                )));
            }
        }
        CriterionKind::MProducible(m) => {
            if m < 1 || m >= n {
                return Err(Error::Inapplicable(format!(
                    "MProducible({m}) at N = {n}: admissible m is 1..={}",
                    n.saturating_sub(1)
                )));
            }
        }
    }
    Ok(())
}

fn r2_with_fixture(n: usize, kind: CriterionKind) -> Result<(ExactRational, Option<BlockProduct>)> {
    Ok(match kind {
        CriterionKind::FullSep => (
            fullsep_bounds(n)?.0,
            Some(BlockProduct::new(vec![Block::single(); n])?),
        ),
        CriterionKind::KSep(k) => (
            ksep_bound_r2(n, k)?,
            Some(BlockProduct::ksep_saturating(n, k)?),
        ),
        CriterionKind::WClass => (wclass_bound_r2(n)?, None),
        CriterionKind::MProducible(m) => {
            let (v, assignment) = mprod_bound_r2(n, m)?;
            (v, Some(assignment_blocks(&assignment)?))
        }
    })
}

/// Bound on `R^(2)` under a hypothesis.
pub fn hypothesis_r2(n: usize, kind: CriterionKind) -> Result<ExactRational> {
    Ok(r2_with_fixture(n, kind)?.0)
}

/// Bound on `R^(4)` under a hypothesis, with the assumptions it rests on.
pub fn hypothesis_r4(n: usize, kind: CriterionKind) -> Result<(ExactRational, Vec<String>)> {
    let conj = vec![GHZ_R4_ASSUMPTION.to_string()];
    Ok(match kind {
        CriterionKind::FullSep => (fullsep_bounds(n)?.1, Vec::new()),
        CriterionKind::KSep(k) => (ksep_bound_r4(n, k)?, conj),
        CriterionKind::MProducible(m) => (mprod_bound_r4(n, m)?.0, conj),
        CriterionKind::WClass => (
            global_r4_cap(n)?,
            vec![
                GHZ_R4_ASSUMPTION.to_string(),
                GLOBAL_R4_FALLBACK.to_string(),
            ],
        ),
    })
}

fn pow_big(b: u64, e: usize) -> BigInt {
    BigInt::from(b).pow(e as u32)
}

fn check_k(n: usize, k: usize) -> Result<()> {
    let hi = n / 2;
    if k < 2 || k > hi {
        return Err(Error::validation(format!(
            "k = {k} out of range for N = {n}: admissible 2..={hi}"
        )));
    }
    Ok(())
}

/// `(2^(N−2k+1) + [N even]) / 3^(N−k+1)`, attained by `Bell^(k−1) ⊗ GHZ_(N−2k+2)`.
pub fn ksep_bound_r2(n: usize, k: usize) -> Result<ExactRational> {
    check_k(n, k)?;
    let mut num = pow_big(2, n + 1 - 2 * k);
    if n.is_multiple_of(2) {
        num += 1;
    }
    Ok(ExactRational::new(num, pow_big(3, n - k + 1)))
}

/// `5^−(k−1) · R^(4)_{GHZ_(N−2(k−1))}`.
pub fn ksep_bound_r4(n: usize, k: usize) -> Result<ExactRational> {
    check_k(n, k)?;
    Ok(ExactRational::inv_pow(5, (k - 1) as u32) * ghz_moment_closed(n - 2 * (k - 1), 4)?)
}

/// `(1/3^N, 1/5^N)`.
pub fn fullsep_bounds(n: usize) -> Result<(ExactRational, ExactRational)> {
    if n == 0 {
        return Err(Error::validation("number of qubits must be positive"));
    }
    Ok((
        ExactRational::inv_pow(3, n as u32),
        ExactRational::inv_pow(5, n as u32),
    ))
}

/// `(5 − 4/N) / 3^N`.
pub fn wclass_bound_r2(n: usize) -> Result<ExactRational> {
    if n < 2 {
        return Err(Error::validation("W-class bound needs N >= 2"));
    }
    Ok(ExactRational::new(
        5 * n as i64 - 4,
        BigInt::from(n) * pow_big(3, n),
    ))
}

/// Largest `R^(4)` of any `N`-qubit state, assuming GHZ is optimal except at
/// `N = 4` where two Bell pairs do better.
pub fn global_r4_cap(n: usize) -> Result<ExactRational> {
    let ghz = ghz_moment_closed(n, 4)?;
    Ok(if n.is_multiple_of(2) {
        ghz.max(bell_product_r4(n)?)
    } else {
        ghz
    })
}

/// Maximizes `Π_i w(i)^(k_i)` over `Σ i·k_i = N`, `1 <= i <= m`, returning
/// the lexicographically smallest optimal `(k_1, …, k_m)`.
fn product_dp(n: usize, m: usize, w: &[ExactRational]) -> (ExactRational, Vec<usize>) {
    // best[j][r]: max product using block sizes j..=m summing to r
    let mut best: Vec<Vec<Option<ExactRational>>> = vec![vec![None; n + 1]; m + 2];
    best[m + 1][0] = Some(ExactRational::one());
    for j in (1..=m).rev() {
        for r in 0..=n {
            let mut top: Option<ExactRational> = None;
            let mut factor = ExactRational::one();
            let mut k = 0;
            while k * j <= r {
                if let Some(rest) = &best[j + 1][r - k * j] {
                    let v = &factor * rest;
                    if top.as_ref().is_none_or(|t| v > *t) {
                        top = Some(v);
                    }
                }
                factor = &factor * &w[j];
                k += 1;
            }
            best[j][r] = top;
        }
    }
    let target = best[1][n].clone().expect("size-1 blocks always fit");
    let mut assignment = Vec::with_capacity(m);
    let mut acc = ExactRational::one();
    let mut rem = n;
    for j in 1..=m {
        let mut factor = ExactRational::one();
        let mut k = 0;
        loop {
            if let Some(rest) = &best[j + 1][rem - k * j] {
                if &(&acc * &factor) * rest == target {
                    break;
                }
            }
            factor = &factor * &w[j];
            k += 1;
        }
        assignment.push(k);
        acc = &acc * &factor;
        rem -= k * j;
    }
    (target, assignment)
}

fn check_m(n: usize, m: usize) -> Result<()> {
    if m < 1 || m > n {
        return Err(Error::validation(format!(
            "m = {m} out of range for N = {n}: admissible 1..={n}"
        )));
    }
    Ok(())
}

/// m-producibility bound on `R^(2)` and an optimal assignment
/// `(k_1, …, k_m)` of GHZ blocks (`k_i` blocks of size `i`).
pub fn mprod_bound_r2(n: usize, m: usize) -> Result<(ExactRational, Vec<usize>)> {
    check_m(n, m)?;
    let mut w = vec![ExactRational::zero()];
    for i in 1..=m {
        w.push(ghz_moment_closed(i, 2)?);
    }
    Ok(product_dp(n, m, &w))
}

/// m-producibility bound on `R^(4)`: the same product DP over per-block caps
/// [`global_r4_cap`]. Relies on [`GHZ_R4_ASSUMPTION`].
pub fn mprod_bound_r4(n: usize, m: usize) -> Result<(ExactRational, Vec<usize>)> {
    check_m(n, m)?;
    let mut w = vec![ExactRational::zero()];
    for i in 1..=m {
        w.push(global_r4_cap(i)?);
    }
    Ok(product_dp(n, m, &w))
}

/// Evaluates `Π ghz_moment_closed(i, t)^(k_i)`.
pub fn evaluate_assignment(assignment: &[usize], t: u32) -> Result<ExactRational> {
    let mut v = ExactRational::one();
    for (idx, &k) in assignment.iter().enumerate() {
        if k > 0 {
            v = v * ghz_moment_closed(idx + 1, t)?.pow(k as u32);
        }
    }
    Ok(v)
}

/// GHZ blocks described by an assignment, largest first.
pub fn assignment_blocks(assignment: &[usize]) -> Result<BlockProduct> {
    let mut blocks = Vec::new();
    for (idx, &k) in assignment.iter().enumerate().rev() {
        let size = idx + 1;
        for _ in 0..k {
            blocks.push(if size == 1 {
                Block::single()
            } else {
                Block::ghz(size)
            });
        }
    }
    BlockProduct::new(blocks)
}

/// Noise `p*` at which `(1−p)² R^(2)_{GHZ_N}` meets the k-separable bound:
/// `1 − f·(3/4)^((k−1)/2)`, `f = 1` for odd N and
/// `sqrt((4^k + 2^(N+1))/(4 + 2^(N+1)))` for even N.
pub fn noise_threshold(n: usize, k: usize) -> Result<f64> {
    check_k(n, k)?;
    // from the exact ratio, so the N = 4 equality case gives exactly 0
    let ratio = ksep_bound_r2(n, k)? / ghz_moment_closed(n, 2)?;
    Ok(1.0 - ratio.to_f64().sqrt())
}

/// `N → ∞` limit of [`noise_threshold`]: `1 − (3/4)^((k−1)/2)`.
pub fn noise_threshold_asymptotic(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::validation("k must be at least 2"));
    }
    Ok(1.0 - 0.75f64.powf((k as f64 - 1.0) / 2.0))
}

/// Lower bound on entanglement depth implied by violating `kind`:
/// `⌈N/(k−1)⌉` for KSep(k), `m+1` for MProducible(m), 2 for FullSep.
/// A W-class violation says nothing about depth.
pub fn depth_implication(n: usize, kind: CriterionKind) -> Option<usize> {
    match kind {
        CriterionKind::KSep(k) if k >= 2 => Some(n.div_ceil(k - 1)),
        CriterionKind::MProducible(m) => Some(m + 1),
        CriterionKind::FullSep => Some(2),
        _ => None,
    }
}

/// Random pure-state search for a state beating the assumed `R^(4)` cap.
/// Returns the largest `R^(4)` found and the cap.
pub fn search_r4_counterexample(n: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    use crate::moments::moment_design;
    use crate::states::{DenseState, StateModel};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    if n == 0 || n > 6 {
        return Err(Error::resource(
            "counterexample search runs for 1 <= N <= 6",
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut top = 0.0f64;
    for _ in 0..trials {
        let mut v: Vec<Complex64> = (0..1usize << n)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let s = StateModel::Dense(DenseState::pure(n, v)?);
        top = top.max(moment_design(&s, 4)?);
    }
    Ok((top, global_r4_cap(n)?.to_f64()))
}
