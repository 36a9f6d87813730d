//! Finite toy model of the self-induced-decoherence equilibrium state and
//! the large-|x| behaviour of its two-slit interference term.
//!
//! Modes carry an abstract domain index, an energy label ω and a momentum
//! label m ∈ ℝ². Modes sharing (domain, ω) form a block; each block has a
//! unitary `U[(m, p)]` from m-labels to the diagonal p-labels, and the state
//! is diagonal in p with weights ρ(ω)_{i p}.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SidError {
    #[error("negative weight {value} in block {block}, p = {p}")]
    NegativeWeight { block: usize, p: usize, value: f64 },
    #[error("block {block} unitary deviates from unitarity by {err:e}")]
    NotUnitary { block: usize, err: f64 },
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("duplicate momentum label in block {0}")]
    DuplicateMomentum(usize),
    #[error("empty mode set")]
    Empty,
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub domain: usize,
    pub omega: f64,
    pub m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub domain: usize,
    pub omega: f64,
    /// indices into `ModeSet::modes`; position in this list is the row of
    /// the block unitary
    pub modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub blocks: Vec<Block>,
}

impl ModeSet {
    /// Groups modes into blocks of equal (domain, ω), in order of first
    /// appearance.
    pub fn new(modes: Vec<Mode>) -> Result<ModeSet, SidError> {
        let mut blocks: Vec<Block> = Vec::new();
        for (k, md) in modes.iter().enumerate() {
            if !(md.omega >= 0.0) || !md.m.iter().all(|v| v.is_finite()) {
                return Err(SidError::BadParameter(format!("mode {k} has invalid labels")));
            }
            match blocks.iter_mut().find(|b| b.domain == md.domain && b.omega == md.omega) {
                Some(b) => b.modes.push(k),
                None => blocks.push(Block { domain: md.domain, omega: md.omega, modes: vec![k] }),
            }
        }
        for (bi, b) in blocks.iter().enumerate() {
            for (x, &i) in b.modes.iter().enumerate() {
                if b.modes[..x].iter().any(|&j| modes[j].m == modes[i].m) {
                    return Err(SidError::DuplicateMomentum(bi));
                }
            }
        }
        Ok(ModeSet { modes, blocks })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.modes.len()).collect()
    }
}

/// Standard deviation of each Cartesian component of an isotropic 2D
/// Gaussian whose rms momentum magnitude is `spread`.
fn component_sigma(spread: f64) -> f64 {
    spread / std::f64::consts::SQRT_2
}

/// `n` momenta sampling an isotropic Gaussian of rms magnitude `spread`:
/// x-components are the conditional means of `n` equal-probability strata,
/// y-components the same values in seeded random order. Modes are split
/// into blocks of `block_size` (one domain index and ω per block).
pub fn stratified_gaussian_modes(n: usize, spread: f64, block_size: usize, seed: u64) -> Result<ModeSet, SidError> {
    if n == 0 || block_size == 0 || !(spread > 0.0) {
        return Err(SidError::BadParameter("need n > 0, block_size > 0 and spread > 0".into()));
    }
    let s = component_sigma(spread);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let edges: Vec<f64> = (0..=n)
        .map(|k| match k {
            0 => f64::NEG_INFINITY,
            k if k == n => f64::INFINITY,
            k => normal.inverse_cdf(k as f64 / n as f64),
        })
        .collect();
    let comp: Vec<f64> = (0..n)
        .map(|k| {
            let (a, b) = (edges[k], edges[k + 1]);
            let pa = if a.is_finite() { pdf(a) } else { 0.0 };
            let pb = if b.is_finite() { pdf(b) } else { 0.0 };
            s * n as f64 * (pa - pb)
        })
        .collect();
    let mut ys = comp.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ys.shuffle(&mut rng);
    let modes = (0..n)
        .map(|k| {
            let b = k / block_size;
            Mode { domain: b, omega: 1.0 + b as f64, m: [comp[k], ys[k]] }
        })
        .collect();
    ModeSet::new(modes)
}

/// `n` momenta drawn independently from the isotropic Gaussian.
pub fn random_gaussian_modes(n: usize, spread: f64, block_size: usize, seed: u64) -> Result<ModeSet, SidError> {
    if n == 0 || block_size == 0 || !(spread > 0.0) {
        return Err(SidError::BadParameter("need n > 0, block_size > 0 and spread > 0".into()));
    }
    let s = component_sigma(spread);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = (0..n)
        .map(|k| {
            let b = k / block_size;
            let mx: f64 = StandardNormal.sample(&mut rng);
            let my: f64 = StandardNormal.sample(&mut rng);
            Mode { domain: b, omega: 1.0 + b as f64, m: [s * mx, s * my] }
        })
        .collect();
    ModeSet::new(modes)
}

/// `count` momenta of magnitude `k` at evenly spaced angles starting at
/// `theta0`, all in one block.
pub fn direction_modes(count: usize, k: f64, theta0: f64) -> Result<ModeSet, SidError> {
    if count == 0 || !(k > 0.0) {
        return Err(SidError::BadParameter("need count > 0 and k > 0".into()));
    }
    let modes = (0..count)
        .map(|j| {
            let th = theta0 + 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            Mode { domain: 0, omega: 0.5 * k * k, m: [k * th.cos(), k * th.sin()] }
        })
        .collect();
    ModeSet::new(modes)
}

/// One unitary per block; row index = position of the mode in the block,
/// column index = p.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryFamily {
    pub blocks: Vec<DMatrix<C>>,
}

pub const UNITARY_TOL: f64 = 1e-12;

fn unitarity_error(u: &DMatrix<C>) -> f64 {
    let d = u.nrows();
    let prod = u * u.adjoint();
    let mut err: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) };
            err = err.max((prod[(i, j)] - target).norm());
        }
    }
    err
}

impl UnitaryFamily {
    pub fn from_matrices(modes: &ModeSet, blocks: Vec<DMatrix<C>>) -> Result<UnitaryFamily, SidError> {
        if blocks.len() != modes.blocks.len() {
            return Err(SidError::IndexMismatch(format!(
                "{} unitaries for {} blocks",
                blocks.len(),
                modes.blocks.len()
            )));
        }
        for (i, (u, b)) in blocks.iter().zip(&modes.blocks).enumerate() {
            if u.nrows() != b.modes.len() || u.ncols() != b.modes.len() {
                return Err(SidError::IndexMismatch(format!("block {i} unitary has wrong shape")));
            }
            let err = unitarity_error(u);
            if err > UNITARY_TOL {
                return Err(SidError::NotUnitary { block: i, err });
            }
        }
        Ok(UnitaryFamily { blocks })
    }

    pub fn identity(modes: &ModeSet) -> UnitaryFamily {
        UnitaryFamily { blocks: modes.blocks.iter().map(|b| DMatrix::identity(b.modes.len(), b.modes.len())).collect() }
    }

    /// Householder reflection per block whose column `p = 0` is the uniform
    /// superposition `1/√d` of all m-labels in the block.
    pub fn coherent(modes: &ModeSet) -> UnitaryFamily {
        let blocks = modes
            .blocks
            .iter()
            .map(|b| {
                let d = b.modes.len();
                let u = 1.0 / (d as f64).sqrt();
                let mut v = DMatrix::<C>::from_element(d, 1, C::new(-u, 0.0));
                v[(0, 0)] += 1.0;
                let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                let mut h = DMatrix::<C>::identity(d, d);
                if vv > 0.0 {
                    h -= &v * v.adjoint() * C::new(2.0 / vv, 0.0);
                }
                h
            })
            .collect();
        UnitaryFamily { blocks }
    }

    /// Orthonormalized complex Gaussian matrices (QR with the phases of
    /// `R`'s diagonal absorbed into `Q`).
    pub fn random(modes: &ModeSet, seed: u64) -> UnitaryFamily {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = modes
            .blocks
            .iter()
            .map(|b| {
                let d = b.modes.len();
                let g = DMatrix::<C>::from_fn(d, d, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C::new(re, im)
                });
                let qr = g.qr();
                let mut q = qr.q();
                let r = qr.r();
                for j in 0..d {
                    let ph = r[(j, j)] / r[(j, j)].norm();
                    for i in 0..d {
                        q[(i, j)] *= ph;
                    }
                }
                q
            })
            .collect();
        UnitaryFamily { blocks }
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.blocks.iter().map(unitarity_error).fold(0.0, f64::max)
    }
}

/// Weights ρ(ω)_{i p}, one vector per block indexed by p.
pub type Weights = Vec<Vec<f64>>;

/// Profile of the total weight per block as a function of ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightProfile {
    Uniform,
    /// `exp(-(ω - center)² / 2 width²)`
    Gaussian { center: f64, width: f64 },
}

/// All of each block's weight on `p = 0`, distributed over blocks by the
/// profile.
pub fn coherent_weights(modes: &ModeSet, profile: WeightProfile) -> Weights {
    modes
        .blocks
        .iter()
        .map(|b| {
            let w = match profile {
                WeightProfile::Uniform => 1.0,
                WeightProfile::Gaussian { center, width } => (-(b.omega - center).powi(2) / (2.0 * width * width)).exp(),
            };
            let mut v = vec![0.0; b.modes.len()];
            v[0] = w;
            v
        })
        .collect()
}

/// Equal weight on every p of every block.
pub fn flat_weights(modes: &ModeSet) -> Weights {
    modes.blocks.iter().map(|b| vec![1.0; b.modes.len()]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub weights: Weights,
    /// Set when the input weights did not sum to one.
    pub renormalized: bool,
}

impl EquilibriumState {
    pub fn trace(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }

    /// The state of block `b` in the m-basis: `U diag(ρ) U†`.
    pub fn m_basis_matrix(&self, unitaries: &UnitaryFamily, b: usize) -> DMatrix<C> {
        let u = &unitaries.blocks[b];
        let d = u.nrows();
        let rho = DMatrix::<C>::from_fn(d, d, |i, j| if i == j { C::new(self.weights[b][i], 0.0) } else { C::new(0.0, 0.0) });
        u * rho * u.adjoint()
    }
}

pub fn build_equilibrium(modes: &ModeSet, weights: &Weights, unitaries: &UnitaryFamily) -> Result<EquilibriumState, SidError> {
    if modes.is_empty() {
        return Err(SidError::Empty);
    }
    if weights.len() != modes.blocks.len() {
        return Err(SidError::IndexMismatch(format!("{} weight blocks for {} mode blocks", weights.len(), modes.blocks.len())));
    }
    UnitaryFamily::from_matrices(modes, unitaries.blocks.clone())?;
    for (bi, (w, b)) in weights.iter().zip(&modes.blocks).enumerate() {
        if w.len() != b.modes.len() {
            return Err(SidError::IndexMismatch(format!("block {bi} has {} weights for {} modes", w.len(), b.modes.len())));
        }
        for (p, &v) in w.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(SidError::NegativeWeight { block: bi, p, value: v });
            }
        }
    }
    let total: f64 = weights.iter().flatten().sum();
    if total == 0.0 {
        return Err(SidError::ZeroWeights);
    }
    let renormalized = (total - 1.0).abs() > 1e-12;
    let weights = weights.iter().map(|w| w.iter().map(|v| v / total).collect()).collect();
    Ok(EquilibriumState { weights, renormalized })
}

fn phase(m: [f64; 2], y: [f64; 2], hbar: f64) -> C {
    C::from_polar(1.0, -(m[0] * y[0] + m[1] * y[1]) / hbar)
}

/// Interference term at film points `(x, 0)` for slit displacement `s`:
///
/// `Σ ρ_p [U^m_p (U^{m'}_p)* e^{-i(m-m')·x/ħ} e^{i(m+m')·s/2ħ} + c.c.]`,
///
/// evaluated per p as `2 Re(A_p(x - s/2) A_p(x + s/2)*)` with
/// `A_p(y) = Σ_m U^m_p e^{-i m·y/ħ}`.
pub fn pint_pattern(
    state: &EquilibriumState,
    unitaries: &UnitaryFamily,
    modes: &ModeSet,
    s: [f64; 2],
    xs: &[f64],
    hbar: f64,
) -> Result<Vec<f64>, SidError> {
    check_indices(state, unitaries, modes)?;
    Ok(xs.iter().map(|&x| pint_at(state, unitaries, modes, s, [x, 0.0], hbar)).collect())
}

fn check_indices(state: &EquilibriumState, unitaries: &UnitaryFamily, modes: &ModeSet) -> Result<(), SidError> {
    if modes.is_empty() {
        return Err(SidError::Empty);
    }
    if state.weights.len() != modes.blocks.len() || unitaries.blocks.len() != modes.blocks.len() {
        return Err(SidError::IndexMismatch("state, unitaries and modes disagree on blocks".into()));
    }
    for (b, blk) in modes.blocks.iter().enumerate() {
        let d = blk.modes.len();
        if state.weights[b].len() != d || unitaries.blocks[b].nrows() != d || unitaries.blocks[b].ncols() != d {
            return Err(SidError::IndexMismatch(format!("block {b} sizes disagree")));
        }
    }
    Ok(())
}

fn pint_at(state: &EquilibriumState, unitaries: &UnitaryFamily, modes: &ModeSet, s: [f64; 2], x: [f64; 2], hbar: f64) -> f64 {
    let y1 = [x[0] - 0.5 * s[0], x[1] - 0.5 * s[1]];
    let y2 = [x[0] + 0.5 * s[0], x[1] + 0.5 * s[1]];
    let mut total = 0.0;
    for (b, blk) in modes.blocks.iter().enumerate() {
        let u = &unitaries.blocks[b];
        let e1: Vec<C> = blk.modes.iter().map(|&k| phase(modes.modes[k].m, y1, hbar)).collect();
        let e2: Vec<C> = blk.modes.iter().map(|&k| phase(modes.modes[k].m, y2, hbar)).collect();
        for (p, &rho) in state.weights[b].iter().enumerate() {
            if rho == 0.0 {
                continue;
            }
            let mut a1 = C::new(0.0, 0.0);
            let mut a2 = C::new(0.0, 0.0);
            for r in 0..blk.modes.len() {
                a1 += u[(r, p)] * e1[r];
                a2 += u[(r, p)] * e2[r];
            }
            total += 2.0 * rho * (a1 * a2.conj()).re;
        }
    }
    total
}

/// Same interference term from the m-basis matrices `U diag(ρ) U†`.
pub fn pint_m_basis(
    state: &EquilibriumState,
    unitaries: &UnitaryFamily,
    modes: &ModeSet,
    s: [f64; 2],
    xs: &[f64],
    hbar: f64,
) -> Result<Vec<f64>, SidError> {
    check_indices(state, unitaries, modes)?;
    let mats: Vec<DMatrix<C>> = (0..modes.blocks.len()).map(|b| state.m_basis_matrix(unitaries, b)).collect();
    Ok(xs
        .iter()
        .map(|&x| {
            let y1 = [x - 0.5 * s[0], -0.5 * s[1]];
            let y2 = [x + 0.5 * s[0], 0.5 * s[1]];
            let mut total = C::new(0.0, 0.0);
            for (b, blk) in modes.blocks.iter().enumerate() {
                let e1: Vec<C> = blk.modes.iter().map(|&k| phase(modes.modes[k].m, y1, hbar)).collect();
                let e2: Vec<C> = blk.modes.iter().map(|&k| phase(modes.modes[k].m, y2, hbar)).collect();
                for i in 0..e1.len() {
                    for j in 0..e2.len() {
                        total += mats[b][(i, j)] * e1[i] * e2[j].conj();
                    }
                }
            }
            2.0 * total.re
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayVerdict {
    Decays,
    Persists,
}

impl DecayVerdict {
    pub fn label(self) -> &'static str {
        match self {
            DecayVerdict::Decays => "DECAYS",
            DecayVerdict::Persists => "PERSISTS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayScan {
    /// `|x|` at the left end of each window; the first is 0
    pub r: Vec<f64>,
    /// `max |p_int|` over each window
    pub envelope: Vec<f64>,
    pub verdict: DecayVerdict,
}

impl DecayScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("abs_x,envelope\n");
        for (r, e) in self.r.iter().zip(&self.envelope) {
            let _ = writeln!(out, "{r:.16e},{e:.16e}");
        }
        out
    }
}

pub const DECAY_RATIO: f64 = 1e-3;
const WINDOW_SAMPLES: usize = 24;

/// Window left ends: 0, then geometric from `x_max·1e-3` to `x_max`.
pub fn scan_points(x_max: f64, n_points: usize) -> Vec<f64> {
    let mut r = vec![0.0];
    let m = n_points - 1;
    for j in 0..m {
        let f = if m == 1 { 1.0 } else { j as f64 / (m - 1) as f64 };
        r.push(x_max * 10f64.powf(-3.0 * (1.0 - f)));
    }
    r
}

/// Envelope of `|p_int|` along the film: window `j` spans `[r_j, r_{j+1})`
/// (the last window is the single point `x_max`). The verdict is DECAYS when
/// `E(x_max) < 1e-3 E(0)`.
pub fn rl_decay_scan(
    state: &EquilibriumState,
    unitaries: &UnitaryFamily,
    modes: &ModeSet,
    s: [f64; 2],
    x_max: f64,
    n_points: usize,
    hbar: f64,
) -> Result<DecayScan, SidError> {
    if n_points < 10 {
        return Err(SidError::TooFewPoints { need: 10, got: n_points });
    }
    if modes.is_empty() {
        return Err(SidError::Empty);
    }
    check_indices(state, unitaries, modes)?;
    let r = scan_points(x_max, n_points);
    let envelope: Vec<f64> = (0..r.len())
        .map(|j| {
            if j == 0 || j + 1 == r.len() {
                return pint_at(state, unitaries, modes, s, [r[j], 0.0], hbar).abs();
            }
            let (a, b) = (r[j], r[j + 1]);
            (0..WINDOW_SAMPLES)
                .map(|k| a + (b - a) * k as f64 / WINDOW_SAMPLES as f64)
                .map(|x| pint_at(state, unitaries, modes, s, [x, 0.0], hbar).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let e0 = envelope[0];
    let last = envelope[envelope.len() - 1];
    let verdict = if last < DECAY_RATIO * e0 { DecayVerdict::Decays } else { DecayVerdict::Persists };
    Ok(DecayScan { r, envelope, verdict })
}

/// `E(|x|)/E(0)` for a coherent superposition over an isotropic Gaussian
/// of rms momentum `spread`, with the displacement along the film.
pub fn gaussian_envelope(r: f64, spread: f64, hbar: f64) -> f64 {
    (-(spread * r / hbar).powi(2) / 2.0).exp()
}
