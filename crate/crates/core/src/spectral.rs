//! Lowest eigenvalues of the closed billiard, Poincaré recurrence time and
//! the consecutive-gap ratio diagnostic.
//!
//! The discrete Hamiltonian is the 5-point `-(ħ²/2M)Δ` on the active cells
//! of a mask with Dirichlet closure. Eigenpairs come from a block Krylov
//! space of `H⁻¹` (banded Cholesky, cells in row-major order) with
//! Rayleigh–Ritz on `H`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{ApparatusGeometry, GeometryError};

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("eigensolver did not converge: {converged} of {wanted} pairs after {iterations} expansions")]
    NoConvergence { converged: usize, wanted: usize, iterations: usize },
    #[error("requested {wanted} levels but only {available} cells are active")]
    TooManyLevels { wanted: usize, available: usize },
    #[error("no finite gap in window")]
    NoGap,
    #[error("need at least {need} levels, got {got}")]
    TooFewLevels { need: usize, got: usize },
    #[error("operator is not positive definite (pivot {0})")]
    NotPositive(usize),
    #[error("grid needs at least 3 nodes per side")]
    BadGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData {
    pub eigenvalues: Vec<f64>,
    /// Relative residual `‖Hy − αy‖/(α‖y‖)` of each pair.
    pub residuals: Vec<f64>,
    pub min_gap: Option<f64>,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl SpectrumData {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("nu,alpha\n");
        for (k, a) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{},{:.16e}", k + 1, a);
        }
        out
    }
}

pub const RESIDUAL_TOL: f64 = 1e-8;
const BLOCK: usize = 4;

/// Sparse 5-point operator on the active cells.
struct Operator {
    n: usize,
    diag: f64,
    cx: f64,
    cy: f64,
    /// left, right, down, up neighbour indices (`usize::MAX` when closed)
    nbr: Vec<[usize; 4]>,
    /// half bandwidth of the row-major ordering
    band: usize,
}

impl Operator {
    fn new(mask: &[bool], nx: usize, ny: usize, dx: f64, dy: f64, hbar: f64, mass: f64) -> Operator {
        let mut index = vec![usize::MAX; nx * ny];
        let mut n = 0;
        for (k, &m) in mask.iter().enumerate() {
            if m {
                index[k] = n;
                n += 1;
            }
        }
        let c = hbar * hbar / (2.0 * mass);
        let mut nbr = Vec::with_capacity(n);
        let mut band = 0;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !mask[k] {
                    continue;
                }
                let at = |ii: isize, jj: isize| -> usize {
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        usize::MAX
                    } else {
                        index[jj as usize * nx + ii as usize]
                    }
                };
                let (ii, jj) = (i as isize, j as isize);
                let nb = [at(ii - 1, jj), at(ii + 1, jj), at(ii, jj - 1), at(ii, jj + 1)];
                for &m in &nb {
                    if m != usize::MAX {
                        band = band.max(index[k].abs_diff(m));
                    }
                }
                nbr.push(nb);
            }
        }
        Operator { n, diag: c * (2.0 / (dx * dx) + 2.0 / (dy * dy)), cx: -c / (dx * dx), cy: -c / (dy * dy), nbr, band }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (k, nb) in self.nbr.iter().enumerate() {
            let mut s = self.diag * v[k];
            if nb[0] != usize::MAX {
                s += self.cx * v[nb[0]];
            }
            if nb[1] != usize::MAX {
                s += self.cx * v[nb[1]];
            }
            if nb[2] != usize::MAX {
                s += self.cy * v[nb[2]];
            }
            if nb[3] != usize::MAX {
                s += self.cy * v[nb[3]];
            }
            out[k] = s;
        }
    }

    /// Entry `(i, j)` for `j <= i`.
    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag;
        }
        let nb = &self.nbr[i];
        if nb[0] == j || nb[1] == j {
            self.cx
        } else if nb[2] == j || nb[3] == j {
            self.cy
        } else {
            0.0
        }
    }
}

/// Lower Cholesky factor in band storage: row `i` holds columns
/// `i - band ..= i`.
struct BandCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn new(op: &Operator) -> Result<BandCholesky, SpectralError> {
        let (n, b) = (op.n, op.band);
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(b));
                let mut s = op.entry(i, j);
                let ri = i * w + b - i;
                let rj = j * w + b - j;
                for k in k0..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(SpectralError::NotPositive(i));
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandCholesky { n, b, l })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        for i in 0..n {
            let ri = i * w + b - i;
            let mut s = rhs[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l[ri + k] * rhs[k];
            }
            rhs[i] = s / self.l[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + b - i;
            rhs[i] /= self.l[ri + i];
            let xi = rhs[i];
            for k in i.saturating_sub(b)..i {
                rhs[k] -= self.l[ri + k] * xi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Lowest `k` eigenpairs of the masked 5-point Hamiltonian.
#[allow(clippy::too_many_arguments)]
pub fn spectrum_on_mask(
    mask: &[bool],
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    hbar: f64,
    mass: f64,
    k: usize,
) -> Result<SpectrumData, SpectralError> {
    let op = Operator::new(mask, nx, ny, dx, dy, hbar, mass);
    let n = op.n;
    if k == 0 || k + BLOCK > n {
        return Err(SpectralError::TooManyLevels { wanted: k, available: n });
    }
    let chol = BandCholesky::new(&op)?;
    let block_size = (k / 4).clamp(BLOCK, 32);
    let cap = (3 * k).max(k + 4 * block_size).min(n);
    let max_expansions = 40 * (k / block_size + 10);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut random_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() - 0.5).collect() };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut hbasis: Vec<Vec<f64>> = Vec::new();
    // projected matrix VᵀHV, grown as vectors are added
    let mut proj: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = (0..block_size).map(|_| random_vec(n)).collect();
    // lowest pair not yet known to be converged
    let mut first = 0;
    let mut result: Option<Vec<(f64, f64)>> = None;

    for _ in 0..max_expansions {
        for mut w in block.drain(..) {
            let norm0 = dot(&w, &w).sqrt();
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    axpy(-c, v, &mut w);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm <= 1e-10 * norm0 || norm == 0.0 {
                continue;
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let mut hw = vec![0.0; n];
            op.apply(&w, &mut hw);
            let row: Vec<f64> = basis.iter().map(|v| dot(v, &hw)).chain([dot(&w, &hw)]).collect();
            basis.push(w);
            hbasis.push(hw);
            proj.push(row);
        }
        let m = basis.len();
        let t = DMatrix::<f64>::from_fn(m, m, |i, j| if j <= i { proj[i][j] } else { proj[j][i] });
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let ritz = |idx: usize| -> (f64, Vec<f64>, f64) {
            let c = order[idx];
            let theta = eig.eigenvalues[c];
            let mut y = vec![0.0; n];
            let mut hy = vec![0.0; n];
            for r in 0..m {
                let s = eig.eigenvectors[(r, c)];
                axpy(s, &basis[r], &mut y);
                axpy(s, &hbasis[r], &mut hy);
            }
            axpy(-theta, &y, &mut hy);
            let rel = dot(&hy, &hy).sqrt() / (theta.abs() * dot(&y, &y).sqrt());
            (theta, y, rel)
        };

        // advance past converged pairs; once all look converged, recheck
        // the whole window
        let mut targets = Vec::new();
        let mut idx = first;
        while idx < k.min(m) && targets.len() < block_size {
            let r = ritz(idx);
            if r.2 >= RESIDUAL_TOL {
                targets.push(r);
            } else if targets.is_empty() {
                first = idx + 1;
            }
            idx += 1;
        }
        if first >= k {
            let all: Vec<(f64, Vec<f64>, f64)> = (0..k).map(ritz).collect();
            match all.iter().position(|r| r.2 >= RESIDUAL_TOL) {
                None => {
                    result = Some(all.into_iter().map(|r| (r.0, r.2)).collect());
                    break;
                }
                Some(p) => {
                    first = p;
                    targets = all.into_iter().skip(p).filter(|r| r.2 >= RESIDUAL_TOL).take(block_size).collect();
                }
            }
        }

        for (_, y, _) in &targets {
            let mut w = y.clone();
            chol.solve(&mut w);
            block.push(w);
        }
        while block.len() < block_size {
            block.push(random_vec(n));
        }

        if m + block_size > cap {
            // thick restart on the lowest Ritz vectors
            let keep = (k + block_size).min(m);
            let kept: Vec<Vec<f64>> = (0..keep).map(|i| ritz(i).1).collect();
            basis.clear();
            hbasis.clear();
            proj.clear();
            block.splice(0..0, kept);
        }
    }

    let Some(pairs) = result else {
        return Err(SpectralError::NoConvergence { converged: first, wanted: k, iterations: max_expansions });
    };
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let residuals = pairs.iter().map(|p| p.1).collect();
    Ok(SpectrumData { min_gap: min_positive_gap(&eigenvalues), eigenvalues, residuals, nx, ny, dx, dy })
}

/// Mask of the billiard interior on an `n × n` node lattice spanning
/// `[0, L]²`; boundary nodes are Dirichlet.
pub fn billiard_mask(geom: &ApparatusGeometry, n: usize) -> Result<(Vec<bool>, f64), SpectralError> {
    if n < 3 {
        return Err(SpectralError::BadGrid);
    }
    let h = geom.leg_length / (n - 1) as f64;
    let mut mask = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            let p = [i as f64 * h, j as f64 * h];
            // nodes that round onto the hypotenuse stay on the boundary
            mask[j * n + i] = geom.inside_d0(p) && geom.dist_to_hypotenuse(p) > 1e-9 * h;
        }
    }
    Ok((mask, h))
}

/// Lowest `k` levels of the closed billiard (slits sealed) on an `n × n`
/// node lattice.
pub fn billiard_spectrum(
    geom: &ApparatusGeometry,
    n: usize,
    k: usize,
    hbar: f64,
    mass: f64,
) -> Result<SpectrumData, SpectralError> {
    let (mask, h) = billiard_mask(geom, n)?;
    spectrum_on_mask(&mask, n, n, h, h, hbar, mass, k)
}

fn degeneracy_tol(levels: &[f64]) -> Option<f64> {
    if levels.len() < 2 {
        return None;
    }
    let mean = (levels[levels.len() - 1] - levels[0]) / (levels.len() - 1) as f64;
    Some(1e-6 * mean)
}

/// Smallest gap between consecutive levels, skipping gaps below the
/// degeneracy tolerance (`1e-6` of the mean gap).
pub fn min_positive_gap(levels: &[f64]) -> Option<f64> {
    let tol = degeneracy_tol(levels)?;
    levels
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > tol && g > 0.0)
        .min_by(|a, b| a.total_cmp(b))
}

/// Index pairs `(ν, ν+1)` whose gap is below the degeneracy tolerance.
pub fn degenerate_pairs(levels: &[f64]) -> Vec<(usize, usize)> {
    let Some(tol) = degeneracy_tol(levels) else { return Vec::new() };
    (0..levels.len().saturating_sub(1)).filter(|&i| levels[i + 1] - levels[i] <= tol).map(|i| (i, i + 1)).collect()
}

/// `t_P = 2πħ/Δ_min` over the given window of levels. This is an estimate:
/// the true minimum gap may lie outside the window.
pub fn poincare_time(levels: &[f64], hbar: f64) -> Result<f64, SpectralError> {
    if levels.len() < 2 {
        return Err(SpectralError::TooFewLevels { need: 2, got: levels.len() });
    }
    let gap = min_positive_gap(levels).ok_or(SpectralError::NoGap)?;
    Ok(2.0 * PI * hbar / gap)
}

/// Mean of `min(g_ν, g_ν+1)/max(g_ν, g_ν+1)` over consecutive gaps.
pub fn spacing_ratio_stats(levels: &[f64]) -> Result<f64, SpectralError> {
    if levels.len() < 20 {
        return Err(SpectralError::TooFewLevels { need: 20, got: levels.len() });
    }
    let tol = degeneracy_tol(levels).unwrap_or(0.0);
    let gaps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in gaps.windows(2) {
        let (lo, hi) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
        if hi > tol {
            sum += lo.max(0.0) / hi;
            count += 1;
        }
    }
    if count == 0 {
        return Err(SpectralError::NoGap);
    }
    Ok(sum / count as f64)
}
