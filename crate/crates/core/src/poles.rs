//! Resolvent pole nearest the real axis for a wall of order ν and the
//! resulting decoherence time.

use std::fmt::Write as _;

use thiserror::Error;

pub const ELECTRON_MASS_KG: f64 = 9.109_383_701_5e-31;
pub const HBAR_SI: f64 = 1.054_571_817e-34;

#[derive(Debug, Error, PartialEq)]
pub enum PoleError {
    #[error("pole formula outside validity (I0 <= 0): 2*U0^(nu+2) = {lhs} <= A^2 = {rhs}")]
    OutsideValidity { lhs: f64, rhs: f64 },
    #[error("U0 must be positive, got {0}")]
    NonPositiveU0(f64),
    #[error("A must be nonzero")]
    ZeroA,
    #[error("R0*I0 = {0} must be positive")]
    NonPositiveProduct(f64),
    #[error("{0} must be positive and finite, got {1}")]
    BadParameter(&'static str, f64),
}

/// Wall radius; `Infinite` is the flat-wall limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl Radius {
    pub fn parse(s: &str) -> Option<Radius> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Some(Radius::Infinite),
            t => t.parse::<f64>().ok().filter(|v| v.is_finite()).map(Radius::Finite),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Radius::Finite(a) => a,
            Radius::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallParams {
    pub u0: f64,
    pub a_coef: f64,
    /// Order of the first non-vanishing derivative of the wall potential.
    pub wall_order: u32,
    pub radius: Radius,
    pub mass: f64,
    pub hbar: f64,
}

/// `β0 = R0 - i I0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleBeta {
    pub r0: f64,
    pub i0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleResult {
    pub r0: f64,
    pub i0: f64,
    pub gamma: f64,
    pub t_d: f64,
}

pub fn pole_beta0(u0: f64, a_coef: f64, wall_order: u32) -> Result<PoleBeta, PoleError> {
    if !(u0 > 0.0) {
        return Err(PoleError::NonPositiveU0(u0));
    }
    if a_coef == 0.0 {
        return Err(PoleError::ZeroA);
    }
    let p = wall_order as f64 + 2.0;
    let lhs = 2.0 * u0.powf(p);
    let rhs = a_coef * a_coef;
    if lhs <= rhs {
        return Err(PoleError::OutsideValidity { lhs, rhs });
    }
    let log = (lhs / rhs).ln();
    Ok(PoleBeta { r0: u0 - p / (4.0 * u0) * log, i0: 0.5 * log })
}

/// `γ = ħ² R0 I0 / (2 M a²)` and `t_D = ħ/γ`; an infinite radius gives
/// `γ = 0`, `t_D = ∞`.
pub fn decoherence_time(beta: PoleBeta, radius: Radius, mass: f64, hbar: f64) -> Result<PoleResult, PoleError> {
    for (name, v) in [("mass", mass), ("hbar", hbar)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(PoleError::BadParameter(name, v));
        }
    }
    let prod = beta.r0 * beta.i0;
    if !(prod > 0.0) {
        return Err(PoleError::NonPositiveProduct(prod));
    }
    let (gamma, t_d) = match radius {
        Radius::Infinite => (0.0, f64::INFINITY),
        Radius::Finite(a) => {
            if !(a > 0.0) {
                return Err(PoleError::BadParameter("radius", a));
            }
            let gamma = hbar * hbar * prod / (2.0 * mass * a * a);
            (gamma, hbar / gamma)
        }
    };
    Ok(PoleResult { r0: beta.r0, i0: beta.i0, gamma, t_d })
}

pub fn evaluate(wall: &WallParams) -> Result<PoleResult, PoleError> {
    let beta = pole_beta0(wall.u0, wall.a_coef, wall.wall_order)?;
    decoherence_time(beta, wall.radius, wall.mass, wall.hbar)
}

/// `R0·I0` that gives decoherence time `t_d` for radius `a`.
pub fn product_for_time(t_d: f64, a: f64, mass: f64, hbar: f64) -> f64 {
    2.0 * mass * a * a / (hbar * t_d)
}

pub fn sweep_radius(beta: PoleBeta, radii: &[Radius], mass: f64, hbar: f64) -> Result<Vec<(Radius, PoleResult)>, PoleError> {
    radii.iter().map(|&a| Ok((a, decoherence_time(beta, a, mass, hbar)?))).collect()
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Columns `a,gamma,t_D`.
pub fn sweep_csv(rows: &[(Radius, PoleResult)]) -> String {
    let mut out = String::from("a,gamma,t_D\n");
    for (a, r) in rows {
        let _ = writeln!(out, "{},{},{}", fmt_f64(a.value()), fmt_f64(r.gamma), fmt_f64(r.t_d));
    }
    out
}
