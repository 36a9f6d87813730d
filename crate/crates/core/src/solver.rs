//! Time-dependent Schrödinger propagation on a rectangular grid.
//!
//! One step is a symmetric (Strang) product of directional Crank–Nicolson
//! (Cayley) factors, `C_x(dt/2) C_y(dt) C_x(dt/2)`, where each factor solves a
//! set of independent tridiagonal systems along grid lines. The potential is
//! shared equally between the two directions. With a real potential every
//! factor is unitary, so the discrete norm is conserved to round-off; with the
//! complex absorber switched on, every factor is a contraction.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DomainIndex, PotentialField};

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite amplitude after step {step}")]
    NonFinite { step: usize },
    #[error("packet width {sigma} below 3 grid cells ({min})")]
    PacketTooNarrow { sigma: f64, min: f64 },
    #[error("packet leaks {leaked:.3e} of its mass outside D0 (limit 1e-6)")]
    PacketLeaks { leaked: f64 },
    #[error("recorder cadence must be positive")]
    ZeroCadence,
    #[error("grid mismatch between field and potential")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
}

/// Grid, time step and physical constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Coordinates of node `(0, 0)`.
    pub origin: [f64; 2],
    pub dt: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl GridSpec {
    /// Grid with ħ = M = 1 and the default time step.
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2]) -> GridSpec {
        let mut g = GridSpec { nx, ny, dx, dy, origin, dt: 0.0, hbar: 1.0, mass: 1.0 };
        g.dt = g.default_dt();
        g
    }

    /// `0.2·M·min(dx,dy)²/ħ`.
    pub fn default_dt(&self) -> f64 {
        0.2 * self.mass * self.dx.min(self.dy).powi(2) / self.hbar
    }

    pub fn with_dt(mut self, dt: f64) -> GridSpec {
        self.dt = dt;
        self
    }

    /// Sets ħ and M and resets `dt` to the default rule.
    pub fn with_units(mut self, hbar: f64, mass: f64) -> GridSpec {
        self.hbar = hbar;
        self.mass = mass;
        self.dt = self.default_dt();
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.nx < 3 || self.ny < 3 {
            return Err(SolverError::InvalidGrid("need at least 3x3 nodes"));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(SolverError::InvalidGrid("spacings must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(SolverError::InvalidGrid("dt must be positive"));
        }
        if !(self.hbar > 0.0 && self.mass > 0.0) {
            return Err(SolverError::InvalidGrid("hbar and mass must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dy]
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Row index closest to height `y`.
    pub fn row_of(&self, y: f64) -> usize {
        (((y - self.origin[1]) / self.dy).round().max(0.0) as usize).min(self.ny - 1)
    }

    pub fn col_of(&self, x: f64) -> usize {
        (((x - self.origin[0]) / self.dx).round().max(0.0) as usize).min(self.nx - 1)
    }
}

/// Complex amplitude on the grid, row major (`j * nx + i`), at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub t: f64,
    pub psi: Vec<C>,
}

impl WaveField {
    pub fn zeros(grid: &GridSpec) -> WaveField {
        WaveField {
            nx: grid.nx,
            ny: grid.ny,
            dx: grid.dx,
            dy: grid.dy,
            t: 0.0,
            psi: vec![C::new(0.0, 0.0); grid.nx * grid.ny],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C {
        self.psi[j * self.nx + i]
    }

    /// Per-row sums combined in row order, so the result does not depend on
    /// the number of worker threads.
    fn row_reduce<F>(&self, f: F) -> f64
    where
        F: Fn(usize, usize, C) -> f64 + Sync,
    {
        let nx = self.nx;
        let rows: Vec<f64> = self
            .psi
            .par_chunks(nx)
            .enumerate()
            .map(|(j, row)| row.iter().enumerate().map(|(i, &z)| f(i, j, z)).sum())
            .collect();
        rows.iter().sum::<f64>() * self.dx * self.dy
    }

    pub fn norm(&self) -> f64 {
        self.row_reduce(|_, _, z| z.norm_sqr())
    }

    /// Probability inside the cells selected by `mask`.
    pub fn mass_where(&self, mask: &[bool]) -> f64 {
        let nx = self.nx;
        self.row_reduce(|i, j, z| if mask[j * nx + i] { z.norm_sqr() } else { 0.0 })
    }

    pub fn scale(&mut self, s: f64) {
        self.psi.par_iter_mut().for_each(|z| *z *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.psi.par_iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `<x>`, `<y>` for a grid with the given origin (not normalized).
    pub fn position_moments(&self, grid: &GridSpec) -> [f64; 2] {
        let mx = self.row_reduce(|i, j, z| grid.point(i, j)[0] * z.norm_sqr());
        let my = self.row_reduce(|i, j, z| grid.point(i, j)[1] * z.norm_sqr());
        [mx, my]
    }

    /// Position variance `<x²> - <x>²`, `<y²> - <y>²` (normalized).
    pub fn position_variance(&self, grid: &GridSpec) -> [f64; 2] {
        let n = self.norm();
        let [mx, my] = self.position_moments(grid);
        let (mx, my) = (mx / n, my / n);
        let vx = self.row_reduce(|i, j, z| (grid.point(i, j)[0] - mx).powi(2) * z.norm_sqr());
        let vy = self.row_reduce(|i, j, z| (grid.point(i, j)[1] - my).powi(2) * z.norm_sqr());
        [vx / n, vy / n]
    }

    /// `<p_x>`, `<p_y>` from central differences (normalized).
    pub fn momentum_expectation(&self, hbar: f64) -> [f64; 2] {
        let (nx, ny) = (self.nx, self.ny);
        let n = self.norm();
        let px = self.row_reduce(|i, j, z| {
            if i == 0 || i + 1 == nx {
                return 0.0;
            }
            let d = (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * self.dx);
            (z.conj() * d * C::new(0.0, -hbar)).re
        });
        let py = self.row_reduce(|i, j, z| {
            if j == 0 || j + 1 == ny {
                return 0.0;
            }
            let d = (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * self.dy);
            (z.conj() * d * C::new(0.0, -hbar)).re
        });
        [px / n, py / n]
    }

    /// `<H>` of the discrete Hamiltonian with the real part of the potential
    /// (normalized). Exterior cells act as zeros.
    pub fn energy(&self, potential: &PotentialField, grid: &GridSpec) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let cx = grid.hbar * grid.hbar / (2.0 * grid.mass * grid.dx * grid.dx);
        let cy = grid.hbar * grid.hbar / (2.0 * grid.mass * grid.dy * grid.dy);
        let n = self.norm();
        let get = |i: isize, j: isize| -> C {
            if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
                return C::new(0.0, 0.0);
            }
            let k = j as usize * nx + i as usize;
            if potential.is_active(k) {
                self.psi[k]
            } else {
                C::new(0.0, 0.0)
            }
        };
        let e = self.row_reduce(|i, j, z| {
            let k = j * nx + i;
            if !potential.is_active(k) {
                return 0.0;
            }
            let (ii, jj) = (i as isize, j as isize);
            let lap_x = get(ii + 1, jj) + get(ii - 1, jj) - z * 2.0;
            let lap_y = get(ii, jj + 1) + get(ii, jj - 1) - z * 2.0;
            let hz = -(lap_x * cx + lap_y * cy) + z * potential.real[k];
            (z.conj() * hz).re
        });
        e / n
    }
}

/// Initial Gaussian wave packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacketSpec {
    pub center: [f64; 2],
    /// Position spread of |ψ|² along each axis.
    pub sigma: f64,
    pub k0: [f64; 2],
}

/// `ψ ∝ exp(-|x-x₀|²/4σ² + i k₀·x)`, normalized on the grid. Fails when the
/// packet is under-resolved or carries more than 1e-6 of its mass outside
/// D0.
pub fn init_gaussian(
    spec: &GaussianPacketSpec,
    grid: &GridSpec,
    potential: &PotentialField,
) -> Result<WaveField, SolverError> {
    grid.validate()?;
    if potential.nx != grid.nx || potential.ny != grid.ny {
        return Err(SolverError::GridMismatch);
    }
    let min = 3.0 * grid.dx.max(grid.dy);
    if spec.sigma < min {
        return Err(SolverError::PacketTooNarrow { sigma: spec.sigma, min });
    }
    let mut field = WaveField::zeros(grid);
    let four_s2 = 4.0 * spec.sigma * spec.sigma;
    field.psi.par_chunks_mut(grid.nx).enumerate().for_each(|(j, row)| {
        for (i, z) in row.iter_mut().enumerate() {
            let [x, y] = grid.point(i, j);
            let r2 = (x - spec.center[0]).powi(2) + (y - spec.center[1]).powi(2);
            let phase = spec.k0[0] * x + spec.k0[1] * y;
            *z = C::from_polar((-r2 / four_s2).exp(), phase);
        }
    });
    let total = field.norm();
    let d0: Vec<bool> = potential.labels.iter().map(|&l| l == DomainIndex::D0).collect();
    let inside = field.mass_where(&d0);
    let leaked = 1.0 - inside / total;
    if leaked > 1e-6 {
        return Err(SolverError::PacketLeaks { leaked });
    }
    for (z, &keep) in field.psi.iter_mut().zip(&d0) {
        if !keep {
            *z = C::new(0.0, 0.0);
        }
    }
    let n = field.norm();
    field.scale(1.0 / n.sqrt());
    Ok(field)
}

/// Precomputed Thomas factors for `(1 + iαA)` along a family of lines, plus
/// the diagonal of `(1 - iαA)`.
#[derive(Debug, Clone)]
struct LineOperator {
    len: usize,
    rhs_diag: Vec<C>,
    link: Vec<C>,
    cp: Vec<C>,
    inv: Vec<C>,
}

impl LineOperator {
    /// `lines` × `len` layout; `active`, `real`, `absorb` are given in that
    /// layout. `spacing` is the grid spacing along the lines.
    fn build(
        len: usize,
        lines: usize,
        active: &[bool],
        real: &[f64],
        absorb: &[f64],
        spacing: f64,
        h: f64,
        grid: &GridSpec,
    ) -> LineOperator {
        let n = len * lines;
        let alpha = C::new(0.0, h / (2.0 * grid.hbar));
        let kin_diag = grid.hbar * grid.hbar / (grid.mass * spacing * spacing);
        let kin_off = -0.5 * kin_diag;
        let mut op = LineOperator {
            len,
            rhs_diag: vec![C::new(0.0, 0.0); n],
            link: vec![C::new(0.0, 0.0); n],
            cp: vec![C::new(0.0, 0.0); n],
            inv: vec![C::new(0.0, 0.0); n],
        };
        let mut diag = vec![C::new(1.0, 0.0); n];
        for k in 0..n {
            if !active[k] {
                continue;
            }
            let v = C::new(real[k], -absorb[k]) * 0.5;
            let a = alpha * (v + kin_diag);
            diag[k] = C::new(1.0, 0.0) + a;
            op.rhs_diag[k] = C::new(1.0, 0.0) - a;
            let pos = k % len;
            if pos + 1 < len && active[k + 1] {
                op.link[k] = alpha * kin_off;
            }
        }
        for line in 0..lines {
            let base = line * len;
            let mut prev_cp = C::new(0.0, 0.0);
            let mut prev_link = C::new(0.0, 0.0);
            for pos in 0..len {
                let k = base + pos;
                let m = diag[k] - prev_link * prev_cp;
                let inv = m.inv();
                op.inv[k] = inv;
                op.cp[k] = op.link[k] * inv;
                prev_cp = op.cp[k];
                prev_link = op.link[k];
            }
        }
        op
    }

    /// `x ← (1 + iαA)⁻¹ (1 - iαA) x` for every line.
    fn apply(&self, data: &mut [C]) {
        let len = self.len;
        data.par_chunks_mut(len)
            .zip(self.rhs_diag.par_chunks(len))
            .zip(self.link.par_chunks(len))
            .zip(self.cp.par_chunks(len).zip(self.inv.par_chunks(len)))
            .for_each(|(((x, e), link), (cp, inv))| {
                // forward pass: build the right-hand side on the fly and eliminate
                let mut prev_old = C::new(0.0, 0.0);
                let mut prev_y = C::new(0.0, 0.0);
                let mut prev_link = C::new(0.0, 0.0);
                for i in 0..len {
                    let old = x[i];
                    let next = if i + 1 < len { x[i + 1] } else { C::new(0.0, 0.0) };
                    let r = e[i] * old - prev_link * prev_old - link[i] * next;
                    let y = (r - prev_link * prev_y) * inv[i];
                    x[i] = y;
                    prev_old = old;
                    prev_y = y;
                    prev_link = link[i];
                }
                for i in (0..len.saturating_sub(1)).rev() {
                    let nxt = x[i + 1];
                    x[i] -= cp[i] * nxt;
                }
            });
    }
}

fn transpose(src: &[C], dst: &mut [C], rows: usize, cols: usize) {
    // src is rows x cols, dst is cols x rows
    dst.par_chunks_mut(rows).enumerate().for_each(|(c, out)| {
        for (r, o) in out.iter_mut().enumerate() {
            *o = src[r * cols + c];
        }
    });
}

/// Reusable propagator for a fixed potential, grid and time step.
#[derive(Debug, Clone)]
pub struct Stepper {
    nx: usize,
    ny: usize,
    dt: f64,
    x_half: LineOperator,
    y_full: LineOperator,
    active: Vec<bool>,
    scratch: Vec<C>,
    steps_taken: usize,
}

impl Stepper {
    pub fn new(potential: &PotentialField, grid: &GridSpec) -> Result<Stepper, SolverError> {
        Stepper::with_dt(potential, grid, grid.dt)
    }

    /// Propagator with an explicit (possibly negative, for backward runs)
    /// time step.
    pub fn with_dt(
        potential: &PotentialField,
        grid: &GridSpec,
        dt: f64,
    ) -> Result<Stepper, SolverError> {
        grid.with_dt(dt.abs()).validate()?;
        if potential.nx != grid.nx || potential.ny != grid.ny {
            return Err(SolverError::GridMismatch);
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let active: Vec<bool> = (0..nx * ny).map(|k| potential.is_active(k)).collect();
        let x_half = LineOperator::build(
            nx,
            ny,
            &active,
            &potential.real,
            &potential.absorb,
            grid.dx,
            0.5 * dt,
            grid,
        );
        let mut active_t = vec![false; nx * ny];
        let mut real_t = vec![0.0; nx * ny];
        let mut absorb_t = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let kt = i * ny + j;
                active_t[kt] = active[k];
                real_t[kt] = potential.real[k];
                absorb_t[kt] = potential.absorb[k];
            }
        }
        let y_full =
            LineOperator::build(ny, nx, &active_t, &real_t, &absorb_t, grid.dy, dt, grid);
        Ok(Stepper {
            nx,
            ny,
            dt,
            x_half,
            y_full,
            active,
            scratch: vec![C::new(0.0, 0.0); nx * ny],
            steps_taken: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `field` by one time step.
    pub fn step(&mut self, field: &mut WaveField) -> Result<(), SolverError> {
        if field.nx != self.nx || field.ny != self.ny {
            return Err(SolverError::GridMismatch);
        }
        self.x_half.apply(&mut field.psi);
        transpose(&field.psi, &mut self.scratch, self.ny, self.nx);
        self.y_full.apply(&mut self.scratch);
        transpose(&self.scratch, &mut field.psi, self.nx, self.ny);
        self.x_half.apply(&mut field.psi);
        field.t += self.dt;
        self.steps_taken += 1;
        if !field.all_finite() {
            return Err(SolverError::NonFinite { step: self.steps_taken });
        }
        Ok(())
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }
}

/// One step with a freshly built propagator. Prefer [`Stepper`] in loops.
pub fn step(
    field: &mut WaveField,
    potential: &PotentialField,
    grid: &GridSpec,
) -> Result<(), SolverError> {
    Stepper::new(potential, grid)?.step(field)
}

/// Something sampled during a run every `cadence()` steps. `interval` is the
/// elapsed time represented by the sample (`cadence · dt`).
pub trait Recorder {
    fn cadence(&self) -> usize;
    fn record(&mut self, field: &WaveField, step: usize, interval: f64);
}

/// Probability inside a region over time.
#[derive(Debug, Clone)]
pub struct RegionProbe {
    pub cadence: usize,
    pub mask: Vec<bool>,
    /// `(t, total norm, mass inside the region)`
    pub samples: Vec<(f64, f64, f64)>,
}

impl RegionProbe {
    pub fn new(cadence: usize, mask: Vec<bool>) -> RegionProbe {
        RegionProbe { cadence, mask, samples: Vec::new() }
    }

    pub fn for_label(cadence: usize, potential: &PotentialField, label: DomainIndex) -> RegionProbe {
        RegionProbe::new(cadence, potential.labels.iter().map(|&l| l == label).collect())
    }
}

impl Recorder for RegionProbe {
    fn cadence(&self) -> usize {
        self.cadence
    }

    fn record(&mut self, field: &WaveField, _step: usize, _interval: f64) {
        self.samples.push((field.t, field.norm(), field.mass_where(&self.mask)));
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub field: WaveField,
    pub steps: usize,
}

/// Runs `n_steps` steps, invoking each recorder after every step whose index
/// is a multiple of its cadence.
pub fn evolve(
    mut field: WaveField,
    stepper: &mut Stepper,
    n_steps: usize,
    recorders: &mut [&mut dyn Recorder],
) -> Result<SimulationResult, SolverError> {
    if recorders.iter().any(|r| r.cadence() == 0) {
        return Err(SolverError::ZeroCadence);
    }
    for n in 1..=n_steps {
        stepper.step(&mut field)?;
        for rec in recorders.iter_mut() {
            let c = rec.cadence();
            if n % c == 0 {
                rec.record(&field, n, c as f64 * stepper.dt());
            }
        }
    }
    Ok(SimulationResult { field, steps: n_steps })
}
