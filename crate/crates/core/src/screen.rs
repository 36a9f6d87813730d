//! Detector film: time-integrated density on the film row, the three-run
//! interference decomposition and fringe metrics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::solver::{GridSpec, Recorder, WaveField};

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("empty accumulation window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("film row {0} is outside the grid")]
    BadRow(usize),
    #[error("records do not share grid and window")]
    Mismatch,
    #[error("no fringe structure")]
    NoFringes,
    #[error("zero-variance pattern")]
    ZeroVariance,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Film pattern `p(x)` with optional single-slit and interference parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenRecord {
    pub xs: Vec<f64>,
    pub p: Vec<f64>,
    pub p1: Option<Vec<f64>>,
    pub p2: Option<Vec<f64>>,
    pub p_int: Option<Vec<f64>>,
    pub window: (f64, f64),
}

impl ScreenRecord {
    pub fn new(xs: Vec<f64>, p: Vec<f64>, window: (f64, f64)) -> ScreenRecord {
        ScreenRecord { xs, p, p1: None, p2: None, p_int: None, window }
    }

    /// `∫ p dx` by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.p.windows(2))
            .map(|(x, p)| 0.5 * (x[1] - x[0]) * (p[0] + p[1]))
            .sum()
    }

    /// Restriction to `lo <= x <= hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> ScreenRecord {
        let keep: Vec<usize> = (0..self.xs.len()).filter(|&i| self.xs[i] >= lo && self.xs[i] <= hi).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        ScreenRecord {
            xs: pick(&self.xs),
            p: pick(&self.p),
            p1: self.p1.as_ref().map(pick),
            p2: self.p2.as_ref().map(pick),
            p_int: self.p_int.as_ref().map(pick),
            window: self.window,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScreenError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Columns `x,p,p1,p2,p_int`; absent components are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p,p1,p2,p_int\n");
        let col = |v: &Option<Vec<f64>>, i: usize| match v {
            Some(v) => format!("{:.16e}", v[i]),
            None => "nan".to_string(),
        };
        for i in 0..self.xs.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{},{},{}",
                self.xs[i],
                self.p[i],
                col(&self.p1, i),
                col(&self.p2, i),
                col(&self.p_int, i)
            );
        }
        out
    }

    pub fn read_csv(path: &Path, window: (f64, f64)) -> Result<ScreenRecord, ScreenError> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ScreenError::Csv("empty file".into()))?;
        if header.trim() != "x,p,p1,p2,p_int" {
            return Err(ScreenError::Csv(format!("unexpected header {header:?}")));
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(ScreenError::Csv(format!("line {}: expected 5 fields", n + 2)));
            }
            for (c, f) in fields.iter().enumerate() {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| ScreenError::Csv(format!("line {}: bad number {f:?}", n + 2)))?;
                cols[c].push(v);
            }
        }
        let [xs, p, p1, p2, pi] = cols;
        let opt = |v: Vec<f64>| if v.iter().all(|x| x.is_nan()) { None } else { Some(v) };
        Ok(ScreenRecord { xs, p, p1: opt(p1), p2: opt(p2), p_int: opt(pi), window })
    }
}

/// Accumulates `Σ |ψ(x, y_film, t)|² Δt` over a time window, together with
/// the downward probability flux through the film row used to normalize the
/// pattern. The window is also split in halves for stationarity checks.
#[derive(Debug, Clone)]
pub struct FilmRecorder {
    cadence: usize,
    row: usize,
    window: (f64, f64),
    xs: Vec<f64>,
    dx: f64,
    dy: f64,
    hbar: f64,
    mass: f64,
    raw: [Vec<f64>; 2],
    flux: [f64; 2],
    pub samples: usize,
}

impl FilmRecorder {
    pub fn new(
        grid: &GridSpec,
        row: usize,
        window: (f64, f64),
        cadence: usize,
    ) -> Result<FilmRecorder, ScreenError> {
        if !(window.1 > window.0) {
            return Err(ScreenError::EmptyWindow(window.0, window.1));
        }
        if row == 0 || row + 1 >= grid.ny {
            return Err(ScreenError::BadRow(row));
        }
        let xs = (0..grid.nx).map(|i| grid.point(i, row)[0]).collect();
        Ok(FilmRecorder {
            cadence,
            row,
            window,
            xs,
            dx: grid.dx,
            dy: grid.dy,
            hbar: grid.hbar,
            mass: grid.mass,
            raw: [vec![0.0; grid.nx], vec![0.0; grid.nx]],
            flux: [0.0; 2],
            samples: 0,
        })
    }

    /// Adds a frame standing for the interval `(t - interval, t]`, weighted
    /// by its overlap with each half of the window.
    pub fn accumulate(&mut self, field: &WaveField, interval: f64) {
        let (ta, tb) = self.window;
        let mid = 0.5 * (ta + tb);
        let (t0, t1) = (field.t - interval, field.t);
        let overlap = |lo: f64, hi: f64| (t1.min(hi) - t0.max(lo)).max(0.0);
        let w = [overlap(ta, mid), overlap(mid, tb)];
        if w == [0.0, 0.0] {
            return;
        }
        let nx = field.nx;
        let j = self.row;
        let mut flux = 0.0;
        let mut dens = vec![0.0; nx];
        for (i, d_i) in dens.iter_mut().enumerate() {
            let z = field.psi[j * nx + i];
            *d_i = z.norm_sqr();
            let d = (field.psi[(j + 1) * nx + i] - field.psi[(j - 1) * nx + i]) / (2.0 * self.dy);
            let jy = self.hbar / self.mass * (z.conj() * d).im;
            flux -= jy;
        }
        for h in 0..2 {
            if w[h] > 0.0 {
                for (r, d) in self.raw[h].iter_mut().zip(&dens) {
                    *r += d * w[h];
                }
                self.flux[h] += flux * self.dx * w[h];
            }
        }
        self.samples += 1;
    }

    fn normalized(&self, raw: &[f64], flux: f64) -> Vec<f64> {
        let total: f64 = raw.iter().sum::<f64>() * self.dx;
        let scale = if total > 0.0 && flux > 0.0 { flux / total } else { 1.0 };
        raw.iter().map(|v| v * scale).collect()
    }

    /// Pattern over the whole window, scaled so that `∫ p dx` equals the
    /// probability that crossed the film row.
    pub fn record(&self) -> ScreenRecord {
        let raw: Vec<f64> = self.raw[0].iter().zip(&self.raw[1]).map(|(a, b)| a + b).collect();
        let p = self.normalized(&raw, self.flux[0] + self.flux[1]);
        ScreenRecord::new(self.xs.clone(), p, self.window)
    }

    pub fn halves(&self) -> [ScreenRecord; 2] {
        let mid = 0.5 * (self.window.0 + self.window.1);
        [
            ScreenRecord::new(self.xs.clone(), self.normalized(&self.raw[0], self.flux[0]), (self.window.0, mid)),
            ScreenRecord::new(self.xs.clone(), self.normalized(&self.raw[1], self.flux[1]), (mid, self.window.1)),
        ]
    }

    /// Probability that crossed the film row during the window.
    pub fn crossed(&self) -> f64 {
        self.flux[0] + self.flux[1]
    }
}

impl Recorder for FilmRecorder {
    fn cadence(&self) -> usize {
        self.cadence
    }

    fn record(&mut self, field: &WaveField, _step: usize, interval: f64) {
        self.accumulate(field, interval);
    }
}

/// Film pattern from a sequence of frames spaced `frame_interval` apart.
pub fn accumulate_film<'a, I>(
    frames: I,
    grid: &GridSpec,
    film_row: usize,
    window: (f64, f64),
    frame_interval: f64,
) -> Result<ScreenRecord, ScreenError>
where
    I: IntoIterator<Item = &'a WaveField>,
{
    let mut rec = FilmRecorder::new(grid, film_row, window, 1)?;
    for f in frames {
        rec.accumulate(f, frame_interval);
    }
    Ok(rec.record())
}

/// `p_int = p_both - p1 - p2` from three matched runs.
pub fn decompose_interference(
    both: &ScreenRecord,
    only1: &ScreenRecord,
    only2: &ScreenRecord,
) -> Result<ScreenRecord, ScreenError> {
    let same = |a: &ScreenRecord, b: &ScreenRecord| a.xs == b.xs && a.window == b.window;
    if !same(both, only1) || !same(both, only2) {
        return Err(ScreenError::Mismatch);
    }
    let p_int = (0..both.xs.len()).map(|i| both.p[i] - only1.p[i] - only2.p[i]).collect();
    Ok(ScreenRecord {
        xs: both.xs.clone(),
        p: both.p.clone(),
        p1: Some(only1.p.clone()),
        p2: Some(only2.p.clone()),
        p_int: Some(p_int),
        window: both.window,
    })
}

/// Largest `|p_int| / (2√(p1 p2))` over points where `p1 p2 > 0`; values
/// above one violate the Cauchy–Schwarz bound.
pub fn cauchy_schwarz_ratio(rec: &ScreenRecord) -> Option<f64> {
    let (p1, p2, pi) = (rec.p1.as_ref()?, rec.p2.as_ref()?, rec.p_int.as_ref()?);
    let mut worst: f64 = 0.0;
    for i in 0..pi.len() {
        let bound = 2.0 * (p1[i] * p2[i]).sqrt();
        if bound > 0.0 {
            worst = worst.max(pi[i].abs() / bound);
        } else if pi[i] != 0.0 {
            return Some(f64::INFINITY);
        }
    }
    Some(worst)
}

/// Gaussian smoothing; `width` is the kernel's full width at half maximum.
fn gaussian_smooth(xs: &[f64], p: &[f64], width: f64) -> Vec<f64> {
    if width <= 0.0 {
        return p.to_vec();
    }
    let width = width / (8.0 * std::f64::consts::LN_2).sqrt();
    (0..xs.len())
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..xs.len() {
                let u = (xs[k] - xs[i]) / width;
                if u.abs() <= 3.0 {
                    let w = (-0.5 * u * u).exp();
                    num += w * p[k];
                    den += w;
                }
            }
            num / den
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Extremum {
    Max(usize, f64),
    Min(usize, f64),
}

fn extrema(xs: &[f64], p: &[f64], width: f64) -> Vec<Extremum> {
    let s = gaussian_smooth(xs, p, width);
    let mut out = Vec::new();
    for i in 1..s.len().saturating_sub(1) {
        let is_max = s[i] > s[i - 1] && s[i] >= s[i + 1];
        let is_min = s[i] < s[i - 1] && s[i] <= s[i + 1];
        if !(is_max || is_min) {
            continue;
        }
        // refine on the raw pattern within half a kernel width
        let near = (0..xs.len()).filter(|&k| (xs[k] - xs[i]).abs() <= 0.5 * width);
        if is_max {
            let v = near.map(|k| p[k]).fold(f64::NEG_INFINITY, f64::max).max(p[i]);
            out.push(Extremum::Max(i, v));
        } else {
            let v = near.map(|k| p[k]).fold(f64::INFINITY, f64::min).min(p[i]);
            out.push(Extremum::Min(i, v));
        }
    }
    out
}

/// Fringe visibility in `lo <= x <= hi`.
///
/// Extrema are located on the pattern smoothed with a Gaussian of full width
/// at half maximum `smoothing`, their values are read off the raw pattern, and the
/// local contrast `(p_max - p_min)/(p_max + p_min)` of each maximum against
/// the lower envelope (linear through the neighbouring minima) is averaged.
pub fn visibility(rec: &ScreenRecord, window: (f64, f64), smoothing: f64) -> Result<f64, ScreenError> {
    let sub = rec.restrict(window.0, window.1);
    let ext = extrema(&sub.xs, &sub.p, smoothing);
    if ext.len() < 3 {
        return Err(ScreenError::NoFringes);
    }
    let mut contrasts = Vec::new();
    for (n, e) in ext.iter().enumerate() {
        let Extremum::Max(i, pmax) = *e else { continue };
        let left = ext[..n].iter().rev().find_map(|e| match *e {
            Extremum::Min(k, v) => Some((sub.xs[k], v)),
            _ => None,
        });
        let right = ext[n + 1..].iter().find_map(|e| match *e {
            Extremum::Min(k, v) => Some((sub.xs[k], v)),
            _ => None,
        });
        let x = sub.xs[i];
        let pmin = match (left, right) {
            (Some((xl, vl)), Some((xr, vr))) => vl + (vr - vl) * (x - xl) / (xr - xl),
            (Some((_, v)), None) | (None, Some((_, v))) => v,
            (None, None) => continue,
        };
        let pmin = pmin.max(0.0);
        if pmax + pmin > 0.0 {
            contrasts.push((pmax - pmin) / (pmax + pmin));
        }
    }
    if contrasts.is_empty() {
        return Err(ScreenError::NoFringes);
    }
    Ok(contrasts.iter().sum::<f64>() / contrasts.len() as f64)
}

/// Mean distance between consecutive maxima of the smoothed pattern.
pub fn fringe_spacing(rec: &ScreenRecord, window: (f64, f64), smoothing: f64) -> Result<f64, ScreenError> {
    let sub = rec.restrict(window.0, window.1);
    let maxima: Vec<f64> = extrema(&sub.xs, &sub.p, smoothing)
        .into_iter()
        .filter_map(|e| match e {
            Extremum::Max(i, _) => Some(sub.xs[i]),
            _ => None,
        })
        .collect();
    if maxima.len() < 2 {
        return Err(ScreenError::NoFringes);
    }
    Ok((maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64)
}

/// Pearson correlation of two patterns on the same film grid.
pub fn pattern_correlation(a: &ScreenRecord, b: &ScreenRecord) -> Result<f64, ScreenError> {
    if a.xs != b.xs {
        return Err(ScreenError::Mismatch);
    }
    let n = a.p.len() as f64;
    let ma = a.p.iter().sum::<f64>() / n;
    let mb = b.p.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.p.iter().zip(&b.p) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(ScreenError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Cylindrical waves `e^{ikr}/√r` from two point sources, sampled along the
/// line `y = film_y`. Returns the amplitudes of each source.
pub fn two_source_amplitudes(
    sources: [[f64; 2]; 2],
    k: f64,
    xs: &[f64],
    film_y: f64,
) -> [Vec<Complex64>; 2] {
    let wave = |s: [f64; 2]| -> Vec<Complex64> {
        xs.iter()
            .map(|&x| {
                let r = ((x - s[0]).powi(2) + (film_y - s[1]).powi(2)).sqrt();
                Complex64::from_polar(r.powf(-0.5), k * r)
            })
            .collect()
    };
    [wave(sources[0]), wave(sources[1])]
}

/// Records built from known amplitudes: `(both, only1, only2)`.
pub fn records_from_amplitudes(
    xs: &[f64],
    phi1: &[Complex64],
    phi2: &[Complex64],
    window: (f64, f64),
) -> (ScreenRecord, ScreenRecord, ScreenRecord) {
    let both = phi1.iter().zip(phi2).map(|(a, b)| (a + b).norm_sqr()).collect();
    let p1 = phi1.iter().map(|a| a.norm_sqr()).collect();
    let p2 = phi2.iter().map(|a| a.norm_sqr()).collect();
    (
        ScreenRecord::new(xs.to_vec(), both, window),
        ScreenRecord::new(xs.to_vec(), p1, window),
        ScreenRecord::new(xs.to_vec(), p2, window),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sampled(f: impl Fn(f64) -> f64, n: usize, lo: f64, hi: f64) -> ScreenRecord {
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let p = xs.iter().map(|&x| f(x)).collect();
        ScreenRecord::new(xs, p, (0.0, 1.0))
    }

    #[test]
    fn visibility_closed_forms() {
        let kappa = 2.0 * PI / 0.25;
        let full = sampled(|x| 1.0 + (kappa * x).cos(), 2001, 0.0, 1.0);
        let v = visibility(&full, (0.0, 1.0), 0.05).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
        let half = sampled(|x| 1.0 + 0.5 * (kappa * x).cos(), 2001, 0.0, 1.0);
        let v = visibility(&half, (0.0, 1.0), 0.05).unwrap();
        assert!((v - 0.5).abs() < 1e-3, "{v}");
        let flat = sampled(|_| 2.0, 200, 0.0, 1.0);
        assert!(matches!(visibility(&flat, (0.0, 1.0), 0.05), Err(ScreenError::NoFringes)));
    }

    #[test]
    fn visibility_is_scale_invariant() {
        let kappa = 2.0 * PI / 0.2;
        let a = sampled(|x| (1.0 + 0.3 * (kappa * x).cos()) * (-x * x).exp(), 1001, -1.0, 1.0);
        let mut b = a.clone();
        b.p.iter_mut().for_each(|v| *v *= 37.5);
        let va = visibility(&a, (-1.0, 1.0), 0.02).unwrap();
        let vb = visibility(&b, (-1.0, 1.0), 0.02).unwrap();
        assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn correlation_edge_cases() {
        let a = sampled(|x| (3.0 * x).sin() + 2.0, 100, 0.0, 1.0);
        assert!((pattern_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mean = a.p.iter().sum::<f64>() / a.p.len() as f64;
        let mut neg = a.clone();
        neg.p.iter_mut().for_each(|v| *v = 2.0 * mean - *v);
        assert!((pattern_correlation(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let flat = sampled(|_| 1.0, 100, 0.0, 1.0);
        assert!(matches!(pattern_correlation(&a, &flat), Err(ScreenError::ZeroVariance)));
    }

    #[test]
    fn incoherent_halves_have_no_interference() {
        let both = sampled(|x| (-x * x).exp(), 50, -1.0, 1.0);
        let mut half = both.clone();
        half.p.iter_mut().for_each(|v| *v *= 0.5);
        let d = decompose_interference(&both, &half, &half).unwrap();
        assert!(d.p_int.unwrap().iter().all(|&v| v == 0.0));
        let zero = sampled(|_| 0.0, 50, -1.0, 1.0);
        let d = decompose_interference(&zero, &zero, &zero).unwrap();
        assert!(d.p_int.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_records_are_rejected() {
        let a = sampled(|x| x, 50, 0.0, 1.0);
        let b = sampled(|x| x, 51, 0.0, 1.0);
        assert!(matches!(decompose_interference(&a, &a, &b), Err(ScreenError::Mismatch)));
        let mut c = a.clone();
        c.window = (0.0, 2.0);
        assert!(matches!(decompose_interference(&a, &c, &a), Err(ScreenError::Mismatch)));
    }

    #[test]
    fn analytic_two_source_interference_term() {
        let xs: Vec<f64> = (0..801).map(|i| -1.0 + 2.0 * i as f64 / 800.0).collect();
        let [phi1, phi2] = two_source_amplitudes([[-0.15, 0.0], [0.15, 0.0]], 100.0, &xs, -1.2);
        let (both, o1, o2) = records_from_amplitudes(&xs, &phi1, &phi2, (0.0, 1.0));
        let d = decompose_interference(&both, &o1, &o2).unwrap();
        let pint = d.p_int.as_ref().unwrap();
        for i in 0..xs.len() {
            let exact = 2.0 * (phi1[i] * phi2[i].conj()).re;
            assert!((pint[i] - exact).abs() < 1e-10);
            let total = d.p[i] - d.p1.as_ref().unwrap()[i] - d.p2.as_ref().unwrap()[i] - pint[i];
            assert!(total.abs() < 1e-12);
        }
        assert!(cauchy_schwarz_ratio(&d).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn two_source_fringe_spacing_matches_far_field() {
        let k = 100.0;
        let s = 0.3;
        let dist = 1.2;
        let xs: Vec<f64> = (0..2001).map(|i| -0.5 + i as f64 / 2000.0).collect();
        let [phi1, phi2] = two_source_amplitudes([[-s / 2.0, 0.0], [s / 2.0, 0.0]], k, &xs, -dist);
        let (both, _, _) = records_from_amplitudes(&xs, &phi1, &phi2, (0.0, 1.0));
        let lambda = 2.0 * PI / k;
        let expected = lambda * dist / s;
        let spacing = fringe_spacing(&both, (-0.4, 0.4), 0.01).unwrap();
        assert!((spacing / expected - 1.0).abs() < 0.05, "{spacing} vs {expected}");
    }

    #[test]
    fn film_recorder_single_slit_and_zero_field() {
        let grid = GridSpec::new(20, 10, 0.1, 0.1, [0.0, 0.0]);
        let zero = WaveField::zeros(&grid);
        let frames: Vec<WaveField> = (1..=5)
            .map(|n| WaveField { t: n as f64 * 0.1, ..zero.clone() })
            .collect();
        let rec = accumulate_film(frames.iter(), &grid, 4, (0.0, 1.0), 0.1).unwrap();
        assert!(rec.p.iter().all(|&v| v == 0.0));
        assert!(matches!(
            accumulate_film(frames.iter(), &grid, 4, (1.0, 1.0), 0.1),
            Err(ScreenError::EmptyWindow(..))
        ));
        // one source only: p_int vanishes identically
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let [phi1, _] = two_source_amplitudes([[0.0, 1.0], [0.5, 1.0]], 40.0, &xs, 0.0);
        let silent = vec![Complex64::new(0.0, 0.0); xs.len()];
        let (both, o1, o2) = records_from_amplitudes(&xs, &phi1, &silent, (0.0, 1.0));
        let d = decompose_interference(&both, &o1, &o2).unwrap();
        assert_eq!(d.p, o1.p);
        assert!(d.p_int.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let xs: Vec<f64> = (0..10).map(|i| 0.1 * i as f64 + 1e-17).collect();
        let a = ScreenRecord::new(xs.clone(), xs.iter().map(|x| x.sin()).collect(), (0.5, 1.5));
        let d = decompose_interference(&a, &a, &a).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for rec in [&a, &d] {
            let path = dir.path().join("p.csv");
            rec.write_csv(&path).unwrap();
            let back = ScreenRecord::read_csv(&path, rec.window).unwrap();
            assert_eq!(&back, rec);
        }
    }
}
