//! Correlation functions and moments `R^(t)` of randomized local measurements.

use num_bigint::BigInt;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::ExactRational;
use crate::states::{apply_to_vector, BlockKind, BlockProduct, DenseState, StateModel};

/// Tolerance on `x² + y² + z² = 1`.
pub const UNIT_TOL: f64 = 1e-12;
/// Largest dense register for `t = 2` design sums (`6^N` work).
pub const DESIGN_T2_MAX_QUBITS: usize = 12;
/// Largest dense register for `t = 4` design sums.
pub const DESIGN_T4_MAX_QUBITS: usize = 9;

/// Unit vector on the Bloch sphere; measuring it means measuring
/// `σ_u = x σ_x + y σ_y + z σ_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochDirection {
    x: f64,
    y: f64,
    z: f64,
}

impl BlochDirection {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = x * x + y * y + z * z;
        if !n2.is_finite() || (n2 - 1.0).abs() > UNIT_TOL {
            return Err(Error::validation(format!(
                "Bloch direction ({x}, {y}, {z}) is not a unit vector"
            )));
        }
        Ok(BlochDirection { x, y, z })
    }

    /// Normalizes a nonzero vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::validation("cannot normalize a zero vector"));
        }
        Ok(BlochDirection {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        BlochDirection {
            x: s * phi.cos(),
            y: s * phi.sin(),
            z: theta.cos(),
        }
    }

    pub const X: BlochDirection = BlochDirection {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: BlochDirection = BlochDirection {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: BlochDirection = BlochDirection {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn neg(&self) -> Self {
        BlochDirection {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn theta(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt().atan2(self.z)
    }

    pub fn phi(&self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Eigenvectors of `σ_u` for eigenvalues +1 and −1:
    /// `(cos θ/2, e^{iφ} sin θ/2)` and `(sin θ/2, −e^{iφ} cos θ/2)`.
    pub fn eigenvectors(&self) -> ([Complex64; 2], [Complex64; 2]) {
        let half = 0.5 * self.theta();
        let (s, c) = half.sin_cos();
        let e = Complex64::from_polar(1.0, self.phi());
        (
            [Complex64::new(c, 0.0), e * s],
            [Complex64::new(s, 0.0), -e * c],
        )
    }

    /// Rows are `⟨u+|` and `⟨u−|`; maps amplitudes into the measurement basis.
    pub(crate) fn basis_change(&self) -> [Complex64; 4] {
        let (p, m) = self.eigenvectors();
        [p[0].conj(), p[1].conj(), m[0].conj(), m[1].conj()]
    }
}

impl Serialize for BlochDirection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.components().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlochDirection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        BlochDirection::new(x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Antipodally symmetric spherical design, stored as one representative per
/// antipodal pair. Even-degree averages are unaffected by dropping the
/// partners.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalDesign {
    order: usize,
    points: Vec<BlochDirection>,
}

impl SphericalDesign {
    /// `±x, ±y, ±z`: a 3-design.
    pub fn pauli3() -> Self {
        SphericalDesign {
            order: 3,
            points: vec![BlochDirection::X, BlochDirection::Y, BlochDirection::Z],
        }
    }

    /// Icosahedron vertices `(0, ±1, ±φ)` and cyclic permutations: a 5-design.
    pub fn icosahedron6() -> Self {
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (0.0, 1.0, g),
            (0.0, 1.0, -g),
            (1.0, g, 0.0),
            (1.0, -g, 0.0),
            (g, 0.0, 1.0),
            (-g, 0.0, 1.0),
        ];
        SphericalDesign {
            order: 5,
            points: raw
                .iter()
                .map(|&(x, y, z)| BlochDirection::normalized(x, y, z).expect("nonzero"))
                .collect(),
        }
    }

    /// The design used for the moment of order `t`.
    pub fn for_moment(t: u32) -> Result<Self> {
        match t {
            2 => Ok(Self::pauli3()),
            4 => Ok(Self::icosahedron6()),
            _ => Err(Error::validation(format!(
                "moment order t = {t} unsupported; use 2 or 4"
            ))),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Representatives, one per antipodal pair.
    pub fn points(&self) -> &[BlochDirection] {
        &self.points
    }

    /// Full point set including antipodes.
    pub fn full_points(&self) -> Vec<BlochDirection> {
        self.points.iter().flat_map(|p| [*p, p.neg()]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_setting(n: usize, setting: &[BlochDirection]) -> Result<()> {
    if setting.len() != n {
        return Err(Error::validation(format!(
            "setting has {} directions for {n} qubits",
            setting.len()
        )));
    }
    Ok(())
}

/// Pure GHZ correlation `[N even]·Π z_n + Re Π (x_n + i y_n)`.
pub fn ghz_correlation(setting: &[BlochDirection]) -> f64 {
    let mut zprod = 1.0;
    let mut w = Complex64::new(1.0, 0.0);
    for u in setting {
        zprod *= u.z;
        w *= Complex64::new(u.x, u.y);
    }
    let even = if setting.len().is_multiple_of(2) {
        zprod
    } else {
        0.0
    };
    even + w.re
}

/// `⟨σ_{u_1} ⊗ … ⊗ σ_{u_N}⟩`.
pub fn correlation(state: &StateModel, setting: &[BlochDirection]) -> Result<f64> {
    check_setting(state.n_qubits(), setting)?;
    Ok(match state {
        StateModel::NoisyGhz(g) => (1.0 - g.noise()) * ghz_correlation(setting),
        StateModel::BlockProduct(b) => block_correlation(b, setting),
        StateModel::Dense(d) => dense_correlation(d, setting),
    })
}

fn block_correlation(b: &BlockProduct, setting: &[BlochDirection]) -> f64 {
    let mut e = 1.0;
    let mut at = 0;
    for blk in b.blocks() {
        let part = &setting[at..at + blk.size];
        e *= match blk.kind {
            BlockKind::Ghz | BlockKind::Bell => ghz_correlation(part),
            BlockKind::SingleQubitPure => part[0].z,
        };
        at += blk.size;
    }
    e
}

/// Outcome distribution in the measurement basis of `setting`; bit value 0
/// of qubit `n` is outcome +1.
pub(crate) fn rotated_probabilities(d: &DenseState, setting: &[BlochDirection]) -> Vec<f64> {
    let n = d.n_qubits();
    match d {
        DenseState::Pure { amplitudes, .. } => {
            let mut v = amplitudes.clone();
            for (q, u) in setting.iter().enumerate() {
                apply_to_vector(&mut v, 1usize << (n - 1 - q), &u.basis_change());
            }
            v.iter().map(|a| a.norm_sqr()).collect()
        }
        DenseState::Mixed { .. } => {
            let mut r = d.clone();
            for (q, u) in setting.iter().enumerate() {
                r.apply_single(q, &u.basis_change());
            }
            r.probabilities()
        }
    }
}

fn dense_correlation(d: &DenseState, setting: &[BlochDirection]) -> f64 {
    rotated_probabilities(d, setting)
        .iter()
        .enumerate()
        .map(|(i, p)| if i.count_ones() % 2 == 0 { *p } else { -*p })
        .sum()
}

/// `T_μ = ⟨σ_{μ_1} ⊗ … ⊗ σ_{μ_N}⟩` for all `3^N` full-body Pauli strings,
/// `μ_n ∈ {x, y, z}`, qubit 0 as the most significant base-3 digit.
pub fn pauli_correlations(d: &DenseState) -> Vec<f64> {
    let n = d.n_qubits();
    let count = 3usize.pow(n as u32);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let (mut flip, mut ymask, mut zmask, mut ny) = (0usize, 0usize, 0usize, 0u32);
        let mut rest = idx;
        for q in (0..n).rev() {
            let bit = 1usize << (n - 1 - q);
            match rest % 3 {
                0 => flip |= bit,
                1 => {
                    flip |= bit;
                    ymask |= bit;
                    ny += 1;
                }
                _ => zmask |= bit,
            }
            rest /= 3;
        }
        let signmask = ymask | zmask;
        let mut acc = Complex64::new(0.0, 0.0);
        match d {
            DenseState::Pure { amplitudes, .. } => {
                for (i, a) in amplitudes.iter().enumerate() {
                    let term = a * amplitudes[i ^ flip].conj();
                    if (i & signmask).count_ones() % 2 == 0 {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
            }
            DenseState::Mixed { matrix, .. } => {
                let dim = 1usize << n;
                for i in 0..dim {
                    let term = matrix[i * dim + (i ^ flip)];
                    if (i & signmask).count_ones() % 2 == 0 {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
            }
        }
        // i^{ny}
        let v = match ny % 4 {
            0 => acc.re,
            1 => -acc.im,
            2 => -acc.re,
            _ => acc.im,
        };
        out.push(v);
    }
    out
}

/// Correlations at all `L^N` settings drawn from `points`, by mode-wise
/// contraction of the Pauli tensor.
fn design_correlations(pauli: Vec<f64>, n: usize, points: &[BlochDirection]) -> Vec<f64> {
    let l = points.len();
    let mut cur = pauli;
    // cur has shape (l^q, 3, 3^(n-q-1)) before processing mode q
    for q in 0..n {
        let outer = l.pow(q as u32);
        let inner = 3usize.pow((n - q - 1) as u32);
        let mut next = vec![0.0; outer * l * inner];
        for o in 0..outer {
            for (a, p) in points.iter().enumerate() {
                let c = p.components();
                let dst = (o * l + a) * inner;
                for (mu, cm) in c.iter().enumerate() {
                    if *cm == 0.0 {
                        continue;
                    }
                    let src = (o * 3 + mu) * inner;
                    for i in 0..inner {
                        next[dst + i] += cm * cur[src + i];
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// GHZ design average `(1/L^N) Σ E^t` over all settings drawn from `points`,
/// without enumerating them. Expanding `E = c·Π z_n + Re Π w_n` binomially
/// reduces it to products of single-qubit averages.
fn ghz_design_average(n: usize, t: u32, points: &[BlochDirection]) -> f64 {
    let c = if n.is_multiple_of(2) { 1.0 } else { 0.0 };
    let l = points.len() as f64;
    let t = t as usize;
    let mut total = 0.0;
    for j in 0..=t {
        let cpow = if t - j == 0 { 1.0 } else { c };
        if cpow == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for k in 0..=j {
            let mut avg = Complex64::new(0.0, 0.0);
            for p in points {
                let w = Complex64::new(p.x, -p.y);
                avg += p.z.powi((t - j) as i32) * w.powi(k as i32) * w.conj().powi((j - k) as i32);
            }
            avg /= l;
            inner += binom(j, k) * avg.powi(n as i32).re;
        }
        total += binom(t, j) * cpow * inner / 2f64.powi(j as i32);
    }
    total
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `R^(t)` by design sums: `(1/L^N) Σ E^t` over the Pauli axes (`t = 2`) or
/// the six icosahedron axes (`t = 4`).
pub fn moment_design(state: &StateModel, t: u32) -> Result<f64> {
    let design = SphericalDesign::for_moment(t)?;
    let pts = design.points();
    match state {
        StateModel::NoisyGhz(g) => {
            Ok((1.0 - g.noise()).powi(t as i32) * ghz_design_average(g.n_qubits(), t, pts))
        }
        StateModel::BlockProduct(b) => Ok(b
            .blocks()
            .iter()
            .map(|blk| match blk.kind {
                BlockKind::Ghz | BlockKind::Bell => ghz_design_average(blk.size, t, pts),
                BlockKind::SingleQubitPure => {
                    pts.iter().map(|p| p.z.powi(t as i32)).sum::<f64>() / pts.len() as f64
                }
            })
            .product()),
        StateModel::Dense(d) => dense_moment_design(d, t, &design),
    }
}

fn dense_moment_design(d: &DenseState, t: u32, design: &SphericalDesign) -> Result<f64> {
    let n = d.n_qubits();
    let limit = if t == 2 {
        DESIGN_T2_MAX_QUBITS
    } else {
        DESIGN_T4_MAX_QUBITS
    };
    if n > limit {
        return Err(Error::resource(format!(
            "dense design sum for t = {t} limited to {limit} qubits, got {n}"
        )));
    }
    let values = design_correlations(pauli_correlations(d), n, design.points());
    let sum: f64 = values.iter().map(|e| e.powi(t as i32)).sum();
    Ok(sum / values.len() as f64)
}

/// Exact GHZ moments:
/// `t = 2`: `(2^(N−1) + [N even]) / 3^N`;
/// `t = 4`: `(3·8^(N−1) + [N even](3^N + 3·2^N)) / 15^N`.
pub fn ghz_moment_closed(n: usize, t: u32) -> Result<ExactRational> {
    if n == 0 {
        return Err(Error::validation("number of qubits must be positive"));
    }
    let e = n as u32;
    let even = n.is_multiple_of(2);
    let big = |b: u64, k: u32| BigInt::from(b).pow(k);
    match t {
        2 => {
            let mut num = big(2, e - 1);
            if even {
                num += 1;
            }
            Ok(ExactRational::new(num, big(3, e)))
        }
        4 => {
            let mut num = big(8, e - 1) * 3;
            if even {
                num += big(3, e) + big(2, e) * 3;
            }
            Ok(ExactRational::new(num, big(15, e)))
        }
        _ => Err(Error::validation(format!(
            "closed-form GHZ moment needs t = 2 or 4, got {t}"
        ))),
    }
}

/// `(1−p)² R^(2)_{GHZ_N}`.
pub fn noisy_ghz_r2(n: usize, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::validation(format!("noise p = {p} outside [0, 1]")));
    }
    Ok((1.0 - p).powi(2) * ghz_moment_closed(n, 2)?.to_f64())
}

/// `R^(4)` of `N/2` Bell pairs: `1/5^(N/2)`.
pub fn bell_product_r4(n: usize) -> Result<ExactRational> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::validation(format!(
            "Bell product needs an even positive number of qubits, got {n}"
        )));
    }
    Ok(ExactRational::inv_pow(5, (n / 2) as u32))
}
