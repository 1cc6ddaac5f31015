//! Randomized-measurement simulation: uniform settings, Born-rule shots and
//! the line-delimited record format.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{correlation_sample, SettingStats};
use crate::moments::{correlation, rotated_probabilities, BlochDirection};
use crate::states::{BlockKind, DenseState, StateModel};

/// Largest register sampled through its full outcome distribution.
pub const MAX_DENSE_SAMPLING_QUBITS: usize = 14;
/// Record format version written to headers.
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordMode {
    /// All `K` outcome tuples.
    Full,
    /// Only the number of shots with `X = +1`.
    Compact,
}

impl std::str::FromStr for RecordMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(RecordMode::Full),
            "compact" => Ok(RecordMode::Compact),
            _ => Err(Error::validation(format!("unknown record mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    pub setting_id: u64,
    pub directions: Vec<BlochDirection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShotData {
    Full(Vec<Vec<i8>>),
    Compact { x_count: u64, k: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub setting: MeasurementSetting,
    pub data: ShotData,
}

impl ShotRecord {
    pub fn k(&self) -> u64 {
        match &self.data {
            ShotData::Full(o) => o.len() as u64,
            ShotData::Compact { k, .. } => *k,
        }
    }

    pub fn mode(&self) -> RecordMode {
        match self.data {
            ShotData::Full(_) => RecordMode::Full,
            ShotData::Compact { .. } => RecordMode::Compact,
        }
    }

    /// Shots whose full correlation sample is +1.
    pub fn x_count(&self) -> u64 {
        match &self.data {
            ShotData::Full(o) => o
                .iter()
                .filter(|t| t.iter().filter(|&&r| r < 0).count() % 2 == 0)
                .count() as u64,
            ShotData::Compact { x_count, .. } => *x_count,
        }
    }

    pub fn stats(&self) -> Result<SettingStats> {
        SettingStats::new(self.k(), self.x_count())
    }

    /// Statistics of the correlation sample restricted to `subset`.
    pub fn marginal_stats(&self, subset: &[usize]) -> Result<SettingStats> {
        match &self.data {
            ShotData::Compact { .. } => Err(Error::validation(
                "marginal moments need outcome tuples; full mode required",
            )),
            ShotData::Full(o) => {
                let mut y = 0;
                for t in o {
                    if correlation_sample(t, Some(subset))? == 1 {
                        y += 1;
                    }
                }
                SettingStats::new(o.len() as u64, y)
            }
        }
    }
}

/// RNG stream for one setting: ChaCha20 keyed by `seed`, stream `setting_id`.
pub fn setting_rng(seed: u64, setting_id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(setting_id);
    rng
}

/// Uniform direction: `z` uniform in [−1, 1], azimuth uniform in [0, 2π).
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> BlochDirection {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    // renormalize to absorb rounding in s
    BlochDirection::normalized(s * phi.cos(), s * phi.sin(), z).expect("unit vector")
}

pub fn sample_setting<R: Rng + ?Sized>(
    n: usize,
    setting_id: u64,
    rng: &mut R,
) -> MeasurementSetting {
    MeasurementSetting {
        setting_id,
        directions: (0..n).map(|_| sample_direction(rng)).collect(),
    }
}

/// `⟨u^±|0⟩`, `⟨u^±|1⟩` for outcome `+1` (index 0) and `−1` (index 1).
fn overlaps(u: &BlochDirection) -> [[Complex64; 2]; 2] {
    let (p, m) = u.eigenvectors();
    [[p[0].conj(), p[1].conj()], [m[0].conj(), m[1].conj()]]
}

/// One shot on a pure GHZ state. The amplitude of outcome string `r` is
/// `(Π a_n(r_n) + Π b_n(r_n))/√2` with `a = ⟨u^r|0⟩`, `b = ⟨u^r|1⟩`; the
/// cross term of the marginal vanishes while unmeasured qubits remain.
fn ghz_chain_shot<R: Rng + ?Sized>(ov: &[[[Complex64; 2]; 2]], rng: &mut R, out: &mut [i8]) {
    let n = ov.len();
    let mut alpha = Complex64::new(1.0, 0.0);
    let mut beta = Complex64::new(1.0, 0.0);
    for q in 0..n {
        let w = |r: usize| -> f64 {
            let a = alpha * ov[q][r][0];
            let b = beta * ov[q][r][1];
            if q + 1 < n {
                a.norm_sqr() + b.norm_sqr()
            } else {
                (a + b).norm_sqr()
            }
        };
        let (w0, w1) = (w(0), w(1));
        let r = if rng.random::<f64>() * (w0 + w1) < w0 {
            0
        } else {
            1
        };
        alpha *= ov[q][r][0];
        beta *= ov[q][r][1];
        let scale = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if scale > 0.0 {
            alpha /= scale;
            beta /= scale;
        }
        out[q] = if r == 0 { 1 } else { -1 };
    }
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn dense_shots<R: Rng + ?Sized>(
    d: &DenseState,
    setting: &[BlochDirection],
    k: u64,
    rng: &mut R,
) -> Vec<Vec<i8>> {
    let n = d.n_qubits();
    let probs = rotated_probabilities(d, setting);
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    (0..k)
        .map(|_| {
            let i = sample_index(&cdf, rng);
            (0..n)
                .map(|q| if i >> (n - 1 - q) & 1 == 0 { 1 } else { -1 })
                .collect()
        })
        .collect()
}

/// Draws `K` shots under `setting`.
///
/// Dense states (N ≤ 14) sample from the full outcome distribution; noisy
/// GHZ states and block products use the chain sampler; compact mode draws
/// the count from `Binomial(K, (1+E)/2)` directly.
pub fn sample_shots<R: Rng + ?Sized>(
    state: &StateModel,
    setting: &MeasurementSetting,
    k: u64,
    rng: &mut R,
    mode: RecordMode,
) -> Result<ShotRecord> {
    let n = state.n_qubits();
    if setting.directions.len() != n {
        return Err(Error::validation(format!(
            "setting has {} directions for {n} qubits",
            setting.directions.len()
        )));
    }
    if k == 0 {
        return Err(Error::validation("K must be at least 1"));
    }
    if let StateModel::Dense(d) = state {
        if d.n_qubits() > MAX_DENSE_SAMPLING_QUBITS {
            return Err(Error::resource(format!(
                "dense sampling limited to {MAX_DENSE_SAMPLING_QUBITS} qubits, got {n}"
            )));
        }
    }
    let data = match mode {
        RecordMode::Compact => {
            let e = correlation(state, &setting.directions)?;
            let p = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
            let x = Binomial::new(k, p)
                .map_err(|e| Error::validation(format!("binomial: {e}")))?
                .sample(rng);
            ShotData::Compact { x_count: x, k }
        }
        RecordMode::Full => ShotData::Full(match state {
            StateModel::Dense(d) => dense_shots(d, &setting.directions, k, rng),
            StateModel::NoisyGhz(g) => {
                let ov: Vec<_> = setting.directions.iter().map(overlaps).collect();
                (0..k)
                    .map(|_| {
                        let mut out = vec![0i8; n];
                        if g.noise() > 0.0 && rng.random::<f64>() < g.noise() {
                            out.iter_mut()
                                .for_each(|r| *r = if rng.random::<bool>() { 1 } else { -1 });
                        } else {
                            ghz_chain_shot(&ov, rng, &mut out);
                        }
                        out
                    })
                    .collect()
            }
            StateModel::BlockProduct(b) => {
                let ov: Vec<_> = setting.directions.iter().map(overlaps).collect();
                (0..k)
                    .map(|_| {
                        let mut out = vec![0i8; n];
                        let mut at = 0;
                        for blk in b.blocks() {
                            let part = &mut out[at..at + blk.size];
                            match blk.kind {
                                BlockKind::Ghz | BlockKind::Bell => {
                                    ghz_chain_shot(&ov[at..at + blk.size], rng, part)
                                }
                                BlockKind::SingleQubitPure => {
                                    let p_plus = (1.0 + setting.directions[at].z()) / 2.0;
                                    part[0] = if rng.random::<f64>() < p_plus { 1 } else { -1 };
                                }
                            }
                            at += blk.size;
                        }
                        out
                    })
                    .collect()
            }
        }),
    };
    Ok(ShotRecord {
        setting: setting.clone(),
        data,
    })
}

/// One setting of an experiment, reproducible from `(seed, setting_id)`.
pub fn simulate_setting(
    state: &StateModel,
    setting_id: u64,
    k: u64,
    seed: u64,
    mode: RecordMode,
) -> Result<ShotRecord> {
    let mut rng = setting_rng(seed, setting_id);
    let setting = sample_setting(state.n_qubits(), setting_id, &mut rng);
    sample_shots(state, &setting, k, &mut rng, mode)
}

/// `M` records with settings `0..M`, generated in parallel, ordered by id.
pub fn run_experiment(
    state: &StateModel,
    m: usize,
    k: u64,
    seed: u64,
    mode: RecordMode,
) -> Result<Vec<ShotRecord>> {
    if m == 0 {
        return Err(Error::validation("M must be at least 1"));
    }
    (0..m as u64)
        .into_par_iter()
        .map(|id| simulate_setting(state, id, k, seed, mode))
        .collect()
}

/// First line of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub version: u32,
    pub n_qubits: usize,
    pub k_shots: u64,
    pub mode: RecordMode,
    pub seed: Option<u64>,
    pub state_descriptor: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    setting_id: u64,
    bloch: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcomes: Option<Vec<Vec<i8>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
}

/// Writes a header line and one JSON line per record. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_records<W: Write>(
    mut w: W,
    header: &RecordHeader,
    records: &[ShotRecord],
) -> Result<()> {
    let io = |e: serde_json::Error| Error::Io(e.to_string());
    serde_json::to_writer(&mut w, header).map_err(io)?;
    w.write_all(b"\n")?;
    for r in records {
        let (outcomes, x_count, k) = match &r.data {
            ShotData::Full(o) => (Some(o.clone()), None, None),
            ShotData::Compact { x_count, k } => (None, Some(*x_count), Some(*k)),
        };
        let line = RecordLine {
            setting_id: r.setting.setting_id,
            bloch: r
                .setting
                .directions
                .iter()
                .map(|d| d.components())
                .collect(),
            outcomes,
            x_count,
            k,
        };
        serde_json::to_writer(&mut w, &line).map_err(io)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses and validates a record file. Errors carry 1-based line numbers.
pub fn read_records<R: BufRead>(r: R) -> Result<(RecordHeader, Vec<ShotRecord>)> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::ingestion(1, "empty record file"))?;
    let first = first?;
    let header: RecordHeader = serde_json::from_str(&first)
        .map_err(|e| Error::ingestion(1, format!("bad header: {e}")))?;
    if header.version != RECORD_VERSION {
        return Err(Error::ingestion(
            1,
            format!("unsupported version {}", header.version),
        ));
    }
    if header.n_qubits == 0 || header.k_shots == 0 {
        return Err(Error::ingestion(1, "n_qubits and k_shots must be positive"));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine =
            serde_json::from_str(&line).map_err(|e| Error::ingestion(ln, e.to_string()))?;
        let bad = |m: String| Error::ingestion(ln, m);
        if rec.bloch.len() != header.n_qubits {
            return Err(bad(format!(
                "field bloch: {} directions, expected {}",
                rec.bloch.len(),
                header.n_qubits
            )));
        }
        let directions = rec
            .bloch
            .iter()
            .map(|[x, y, z]| BlochDirection::new(*x, *y, *z))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(format!("field bloch: {e}")))?;
        let data = match (header.mode, rec.outcomes, rec.x_count, rec.k) {
            (RecordMode::Full, Some(o), None, None) => {
                if o.len() as u64 != header.k_shots {
                    return Err(bad(format!(
                        "field outcomes: {} shots, expected {}",
                        o.len(),
                        header.k_shots
                    )));
                }
                for t in &o {
                    if t.len() != header.n_qubits || t.iter().any(|&v| v != 1 && v != -1) {
                        return Err(bad(
                            "field outcomes: each shot needs n_qubits values of +1/-1".into(),
                        ));
                    }
                }
                ShotData::Full(o)
            }
            (RecordMode::Compact, None, Some(x), Some(k)) => {
                if k != header.k_shots {
                    return Err(bad(format!("field k: {k}, expected {}", header.k_shots)));
                }
                if x > k {
                    return Err(bad(format!("field x_count: {x} exceeds k = {k}")));
                }
                ShotData::Compact { x_count: x, k }
            }
            (RecordMode::Full, ..) => {
                return Err(bad("full mode records need only `outcomes`".into()))
            }
            (RecordMode::Compact, ..) => {
                return Err(bad("compact records need `x_count` and `k`".into()))
            }
        };
        records.push(ShotRecord {
            setting: MeasurementSetting {
                setting_id: rec.setting_id,
                directions,
            },
            data,
        });
    }
    if records.is_empty() {
        return Err(Error::ingestion(1, "record file has no settings"));
    }
    Ok((header, records))
}
