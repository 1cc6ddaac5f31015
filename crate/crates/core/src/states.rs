//! Quantum states the simulator and the exact-moment engine operate on.
//!
//! Qubit `n` of an `N`-qubit register is stored in bit `N - 1 - n` of the
//! basis index, so the tensor order `q_0 ⊗ q_1 ⊗ …` reads left to right.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for norm, trace and hermiticity checks.
pub const STATE_TOL: f64 = 1e-12;
/// Lower bound accepted for eigenvalues in [`DenseState::check_positive`].
pub const EIGEN_TOL: f64 = 1e-10;
/// Largest register densified as a pure state vector.
pub const MAX_PURE_QUBITS: usize = 24;
/// Largest register densified as a density matrix.
pub const MAX_MIXED_QUBITS: usize = 14;

/// Dense pure state vector or density matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DenseState {
    Pure {
        n_qubits: usize,
        amplitudes: Vec<Complex64>,
    },
    /// Row-major `2^N × 2^N` density matrix.
    Mixed {
        n_qubits: usize,
        matrix: Vec<Complex64>,
    },
}

impl DenseState {
    /// Validates norm and dimension.
    pub fn pure(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_qubits(n_qubits, MAX_PURE_QUBITS)?;
        if amplitudes.len() != 1usize << n_qubits {
            return Err(Error::validation(format!(
                "expected {} amplitudes for {} qubits, got {}",
                1usize << n_qubits,
                n_qubits,
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::validation(format!(
                "state vector not normalized: |psi|^2 = {norm}"
            )));
        }
        Ok(DenseState::Pure {
            n_qubits,
            amplitudes,
        })
    }

    /// Validates hermiticity and unit trace. Positivity is checked separately
    /// by [`DenseState::check_positive`].
    pub fn mixed(n_qubits: usize, matrix: Vec<Complex64>) -> Result<Self> {
        check_qubits(n_qubits, MAX_MIXED_QUBITS)?;
        let dim = 1usize << n_qubits;
        if matrix.len() != dim * dim {
            return Err(Error::validation(format!(
                "expected a {dim}x{dim} density matrix"
            )));
        }
        let mut trace = Complex64::new(0.0, 0.0);
        for i in 0..dim {
            trace += matrix[i * dim + i];
            for j in i..dim {
                let d = matrix[i * dim + j] - matrix[j * dim + i].conj();
                if d.norm() > STATE_TOL {
                    return Err(Error::validation(format!(
                        "density matrix not Hermitian at ({i},{j})"
                    )));
                }
            }
        }
        if (trace.re - 1.0).abs() > STATE_TOL || trace.im.abs() > STATE_TOL {
            return Err(Error::validation(format!(
                "density matrix trace is {trace}, expected 1"
            )));
        }
        Ok(DenseState::Mixed { n_qubits, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            DenseState::Pure { n_qubits, .. } | DenseState::Mixed { n_qubits, .. } => *n_qubits,
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_qubits()
    }

    /// `⟨i|ρ|j⟩`.
    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        match self {
            DenseState::Pure { amplitudes, .. } => amplitudes[i] * amplitudes[j].conj(),
            DenseState::Mixed { matrix, .. } => matrix[i * self.dim() + j],
        }
    }

    /// Diagonal of ρ in the computational basis.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            DenseState::Pure { amplitudes, .. } => {
                amplitudes.iter().map(|a| a.norm_sqr()).collect()
            }
            DenseState::Mixed { matrix, .. } => {
                let d = self.dim();
                (0..d).map(|i| matrix[i * d + i].re).collect()
            }
        }
    }

    /// `⟨GHZ_N|ρ|GHZ_N⟩`.
    pub fn ghz_overlap(&self) -> f64 {
        let last = self.dim() - 1;
        let v = self.element(0, 0)
            + self.element(last, last)
            + self.element(0, last)
            + self.element(last, 0);
        0.5 * v.re
    }

    /// Positive semidefiniteness up to [`EIGEN_TOL`]: Cholesky factorization
    /// of `ρ + EIGEN_TOL·1` succeeds iff its smallest eigenvalue exceeds
    /// `-EIGEN_TOL`.
    pub fn check_positive(&self) -> Result<()> {
        let DenseState::Mixed { matrix, .. } = self else {
            return Ok(());
        };
        let d = self.dim();
        let mut a = matrix.clone();
        for i in 0..d {
            a[i * d + i] += EIGEN_TOL;
        }
        for j in 0..d {
            let mut diag = a[j * d + j].re;
            for k in 0..j {
                diag -= a[j * d + k].norm_sqr();
            }
            if diag <= 0.0 {
                return Err(Error::validation(format!(
                    "density matrix has an eigenvalue below -{EIGEN_TOL}"
                )));
            }
            let l = diag.sqrt();
            a[j * d + j] = Complex64::new(l, 0.0);
            for i in (j + 1)..d {
                let mut s = a[i * d + j];
                for k in 0..j {
                    s -= a[i * d + k] * a[j * d + k].conj();
                }
                a[i * d + j] = s / l;
            }
        }
        Ok(())
    }

    /// Applies a single-qubit operator `op` (row-major 2×2) to qubit `q`:
    /// `|ψ⟩ → op_q|ψ⟩` or `ρ → op_q ρ op_q†`.
    pub fn apply_single(&mut self, q: usize, op: &[Complex64; 4]) {
        let n = self.n_qubits();
        let bit = 1usize << (n - 1 - q);
        match self {
            DenseState::Pure { amplitudes, .. } => apply_to_vector(amplitudes, bit, op),
            DenseState::Mixed { matrix, .. } => {
                let d = 1usize << n;
                // left multiply: columns as vectors
                let mut col = vec![Complex64::new(0.0, 0.0); d];
                for c in 0..d {
                    for r in 0..d {
                        col[r] = matrix[r * d + c];
                    }
                    apply_to_vector(&mut col, bit, op);
                    for r in 0..d {
                        matrix[r * d + c] = col[r];
                    }
                }
                // right multiply by op†: rows, conj(op) acting on row vectors
                let adj = [op[0].conj(), op[1].conj(), op[2].conj(), op[3].conj()];
                for r in 0..d {
                    apply_to_vector(&mut matrix[r * d..(r + 1) * d], bit, &adj);
                }
            }
        }
    }
}

pub(crate) fn apply_to_vector(v: &mut [Complex64], bit: usize, op: &[Complex64; 4]) {
    for i in 0..v.len() {
        if i & bit == 0 {
            let a = v[i];
            let b = v[i | bit];
            v[i] = op[0] * a + op[1] * b;
            v[i | bit] = op[2] * a + op[3] * b;
        }
    }
}

fn check_qubits(n: usize, limit: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::validation("number of qubits must be positive"));
    }
    if n > limit {
        return Err(Error::resource(format!(
            "{n} qubits exceed the dense limit of {limit}"
        )));
    }
    Ok(())
}

/// White-noise GHZ state `p·1/2^N + (1-p)|GHZ_N⟩⟨GHZ_N|`, kept symbolic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyGhz {
    n_qubits: usize,
    p: f64,
}

impl NoisyGhz {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn noise(&self) -> f64 {
        self.p
    }

    /// `(1-p) + p/2^N`.
    pub fn ghz_fidelity(&self) -> f64 {
        (1.0 - self.p) + self.p * 0.5f64.powi(self.n_qubits as i32)
    }
}

pub fn make_noisy_ghz(n_qubits: usize, p: f64) -> Result<NoisyGhz> {
    if n_qubits == 0 {
        return Err(Error::validation("number of qubits must be positive"));
    }
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::validation(format!("noise p = {p} outside [0, 1]")));
    }
    Ok(NoisyGhz { n_qubits, p })
}

/// Inverts `F = (1-p) + p/2^N`.
pub fn fidelity_to_p(n_qubits: usize, fidelity: f64) -> Result<f64> {
    if n_qubits == 0 {
        return Err(Error::validation("number of qubits must be positive"));
    }
    let floor = 0.5f64.powi(n_qubits as i32);
    if !(fidelity > floor && fidelity <= 1.0) {
        return Err(Error::validation(format!(
            "fidelity {fidelity} outside ({floor}, 1]"
        )));
    }
    Ok((1.0 - fidelity) / (1.0 - floor))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Ghz,
    Bell,
    /// The pure single-qubit state |0⟩.
    SingleQubitPure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub size: usize,
}

impl Block {
    pub fn ghz(size: usize) -> Self {
        Block {
            kind: BlockKind::Ghz,
            size,
        }
    }

    pub fn bell() -> Self {
        Block {
            kind: BlockKind::Bell,
            size: 2,
        }
    }

    pub fn single() -> Self {
        Block {
            kind: BlockKind::SingleQubitPure,
            size: 1,
        }
    }
}

/// Tensor product of named pure blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockProduct {
    blocks: Vec<Block>,
}

impl BlockProduct {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::validation("block product needs at least one block"));
        }
        for b in &blocks {
            match b.kind {
                BlockKind::Bell if b.size != 2 => {
                    return Err(Error::validation("Bell blocks have size 2"));
                }
                BlockKind::SingleQubitPure if b.size != 1 => {
                    return Err(Error::validation("single-qubit blocks have size 1"));
                }
                BlockKind::Ghz if b.size == 0 => {
                    return Err(Error::validation("GHZ blocks need at least one qubit"));
                }
                _ => {}
            }
        }
        Ok(BlockProduct { blocks })
    }

    /// `|Bell⟩^⊗(k-1) ⊗ |GHZ_{N-2(k-1)}⟩`, the k-separable states attaining
    /// the second- and fourth-moment bounds.
    pub fn ksep_saturating(n_qubits: usize, k: usize) -> Result<Self> {
        if k < 1 || n_qubits < 2 * (k - 1) + 1 {
            return Err(Error::validation(format!(
                "no Bell^{} x GHZ block structure on {n_qubits} qubits",
                k.saturating_sub(1)
            )));
        }
        let mut blocks = vec![Block::bell(); k - 1];
        blocks.push(Block::ghz(n_qubits - 2 * (k - 1)));
        BlockProduct::new(blocks)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_qubits(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }
}

impl fmt::Display for BlockProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Ghz => format!("ghz{}", b.size),
                BlockKind::Bell => "bell".to_string(),
                BlockKind::SingleQubitPure => "zero".to_string(),
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Any state the toolkit can simulate.
#[derive(Debug, Clone, PartialEq)]
pub enum StateModel {
    Dense(DenseState),
    NoisyGhz(NoisyGhz),
    BlockProduct(BlockProduct),
}

impl StateModel {
    pub fn n_qubits(&self) -> usize {
        match self {
            StateModel::Dense(d) => d.n_qubits(),
            StateModel::NoisyGhz(g) => g.n_qubits(),
            StateModel::BlockProduct(b) => b.n_qubits(),
        }
    }

    /// Short text form used in record headers, e.g. `noisy_ghz(n=11,p=0.24)`.
    pub fn descriptor(&self) -> String {
        match self {
            StateModel::Dense(d) => format!("dense(n={})", d.n_qubits()),
            StateModel::NoisyGhz(g) => format!("noisy_ghz(n={},p={})", g.n_qubits(), g.noise()),
            StateModel::BlockProduct(b) => format!("blocks({b})"),
        }
    }
}

impl From<NoisyGhz> for StateModel {
    fn from(g: NoisyGhz) -> Self {
        StateModel::NoisyGhz(g)
    }
}

impl From<BlockProduct> for StateModel {
    fn from(b: BlockProduct) -> Self {
        StateModel::BlockProduct(b)
    }
}

impl From<DenseState> for StateModel {
    fn from(d: DenseState) -> Self {
        StateModel::Dense(d)
    }
}

/// Something that can be turned into a [`DenseState`].
pub trait Densify {
    fn densify(&self) -> Result<DenseState>;
}

fn ghz_vector(n: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); 1usize << n];
    let a = std::f64::consts::FRAC_1_SQRT_2;
    v[0] = Complex64::new(a, 0.0);
    let last = v.len() - 1;
    v[last] += Complex64::new(a, 0.0);
    v
}

impl Densify for NoisyGhz {
    fn densify(&self) -> Result<DenseState> {
        let n = self.n_qubits;
        if self.p == 0.0 {
            check_qubits(n, MAX_PURE_QUBITS)?;
            return DenseState::pure(n, ghz_vector(n));
        }
        check_qubits(n, MAX_MIXED_QUBITS)?;
        let d = 1usize << n;
        let mut m = vec![Complex64::new(0.0, 0.0); d * d];
        let white = self.p / d as f64;
        for i in 0..d {
            m[i * d + i] = Complex64::new(white, 0.0);
        }
        let half = 0.5 * (1.0 - self.p);
        let last = d - 1;
        for &(i, j) in &[(0, 0), (0, last), (last, 0), (last, last)] {
            m[i * d + j] += Complex64::new(half, 0.0);
        }
        DenseState::mixed(n, m)
    }
}

impl Densify for BlockProduct {
    fn densify(&self) -> Result<DenseState> {
        let n = self.n_qubits();
        check_qubits(n, MAX_PURE_QUBITS)?;
        let mut v = vec![Complex64::new(1.0, 0.0)];
        for b in &self.blocks {
            let block = match b.kind {
                BlockKind::Ghz | BlockKind::Bell => ghz_vector(b.size),
                BlockKind::SingleQubitPure => {
                    vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
                }
            };
            let mut next = Vec::with_capacity(v.len() * block.len());
            for a in &v {
                for c in &block {
                    next.push(a * c);
                }
            }
            v = next;
        }
        DenseState::pure(n, v)
    }
}

impl Densify for StateModel {
    fn densify(&self) -> Result<DenseState> {
        match self {
            StateModel::Dense(d) => Ok(d.clone()),
            StateModel::NoisyGhz(g) => g.densify(),
            StateModel::BlockProduct(b) => b.densify(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noisy_ghz_validation() {
        assert!(make_noisy_ghz(0, 0.1).is_err());
        assert!(make_noisy_ghz(3, -0.1).is_err());
        assert!(make_noisy_ghz(3, 1.5).is_err());
        assert!(make_noisy_ghz(3, f64::NAN).is_err());
        assert!(make_noisy_ghz(1, 1.0).is_ok());
    }

    #[test]
    fn single_qubit_ghz_is_plus_state() {
        let d = make_noisy_ghz(1, 0.0).unwrap().densify().unwrap();
        let DenseState::Pure { amplitudes, .. } = d else {
            panic!("expected pure state")
        };
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert!((amplitudes[0].re - a).abs() < 1e-15);
        assert!((amplitudes[1].re - a).abs() < 1e-15);
    }

    #[test]
    fn fidelity_inversion() {
        assert_eq!(fidelity_to_p(7, 1.0).unwrap(), 0.0);
        let p = fidelity_to_p(11, 0.76).unwrap();
        assert!((p - 0.240117).abs() < 5e-7, "{p}");
        let p = fidelity_to_p(20, 0.44).unwrap();
        assert!((p - 0.560001).abs() < 5e-7, "{p}");
        assert!(fidelity_to_p(3, 0.125).is_err());
        assert!(fidelity_to_p(3, 1.01).is_err());
    }

    #[test]
    fn fidelity_matches_dense_overlap() {
        let p = fidelity_to_p(5, 0.6).unwrap();
        let d = make_noisy_ghz(5, p).unwrap().densify().unwrap();
        assert!((d.ghz_overlap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn noisy_ghz_dense_invariants() {
        let d = make_noisy_ghz(4, 0.5).unwrap().densify().unwrap();
        d.check_positive().unwrap();
        assert!((d.ghz_overlap() - 0.53125).abs() < 1e-15);
        for n in 1..=10 {
            for &p in &[0.0, 0.3, 1.0] {
                let g = make_noisy_ghz(n, p).unwrap();
                let d = g.densify().unwrap();
                assert!((d.ghz_overlap() - g.ghz_fidelity()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_pair_product() {
        let b = BlockProduct::new(vec![Block::bell(), Block::bell()]).unwrap();
        let d = b.densify().unwrap();
        assert_eq!(d.n_qubits(), 4);
        let probs = d.probabilities();
        // |00⟩,|11⟩ on each pair: indices 0b0000, 0b0011, 0b1100, 0b1111
        for (i, pr) in probs.iter().enumerate() {
            let expect = if [0, 3, 12, 15].contains(&i) {
                0.25
            } else {
                0.0
            };
            assert!((pr - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn block_validation() {
        assert!(BlockProduct::new(vec![]).is_err());
        assert!(BlockProduct::new(vec![Block {
            kind: BlockKind::Bell,
            size: 3
        }])
        .is_err());
        let s = BlockProduct::ksep_saturating(7, 3).unwrap();
        assert_eq!(s.n_qubits(), 7);
        assert_eq!(s.to_string(), "bell*bell*ghz3");
    }

    #[test]
    fn densify_limits() {
        let g = make_noisy_ghz(15, 0.2).unwrap();
        assert!(matches!(g.densify(), Err(Error::Resource(_))));
        let g = make_noisy_ghz(25, 0.0).unwrap();
        assert!(matches!(g.densify(), Err(Error::Resource(_))));
    }

    #[test]
    fn positivity_detects_negative_eigenvalue() {
        // diag(1.5, -0.5) has unit trace but is not a state
        let m = vec![
            Complex64::new(1.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-0.5, 0.0),
        ];
        let d = DenseState::mixed(1, m).unwrap();
        assert!(d.check_positive().is_err());
    }

    #[test]
    fn rejects_unnormalized() {
        let v = vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
        assert!(DenseState::pure(1, v).is_err());
    }
}
