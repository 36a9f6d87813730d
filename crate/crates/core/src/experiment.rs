//! Experiment orchestration: runs one subcommand from a configuration and
//! writes its outputs, the effective configuration and a manifest with
//! SHA-256 checksums into one output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classical::{self, ClassicalError, ClassicalState};
use crate::config::{ConfigError, ExperimentConfig, Sampling, UnitaryKind, WeightKind};
use crate::geometry::{build_apparatus, rasterize_potential, DomainIndex, GeometryError};
use crate::poles::{self, PoleError, Radius, WallParams};
use crate::screen::{self, FilmRecorder, ScreenError, ScreenRecord};
use crate::sid::{self, SidError, UnitaryFamily, WeightProfile};
use crate::snapshot::{self, SnapshotError};
use crate::solver::{evolve, init_gaussian, Recorder, RegionProbe, SolverError, Stepper, WaveField};
use crate::spectral::{self, SpectralError};

pub const OUTPUT_ROOT_ENV: &str = "SINAI_LAB_OUTPUT_ROOT";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Classical,
    Spectrum,
    Poles,
    Sid,
    Analyze,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Classical => "classical",
            Command::Spectrum => "spectrum",
            Command::Poles => "poles",
            Command::Sid => "sid",
            Command::Analyze => "analyze",
        }
    }
}

/// Error categories map to process exit codes.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Numeric(_) => 3,
            LabError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for LabError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => LabError::Io(e.to_string()),
            _ => LabError::Config(e.to_string()),
        }
    }
}

impl From<GeometryError> for LabError {
    fn from(e: GeometryError) -> Self {
        LabError::Config(e.to_string())
    }
}

impl From<SolverError> for LabError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::PacketTooNarrow { .. } | SolverError::PacketLeaks { .. } | SolverError::InvalidGrid(_) => {
                LabError::Config(e.to_string())
            }
            _ => LabError::Numeric(e.to_string()),
        }
    }
}

impl From<ScreenError> for LabError {
    fn from(e: ScreenError) -> Self {
        match e {
            ScreenError::Io(_) | ScreenError::Csv(_) => LabError::Io(e.to_string()),
            ScreenError::EmptyWindow(..) | ScreenError::BadRow(_) => LabError::Config(e.to_string()),
            _ => LabError::Numeric(e.to_string()),
        }
    }
}

impl From<ClassicalError> for LabError {
    fn from(e: ClassicalError) -> Self {
        match e {
            ClassicalError::OutsideStart(..) | ClassicalError::BadDirection | ClassicalError::TooFewBounces { .. } => {
                LabError::Config(e.to_string())
            }
            _ => LabError::Numeric(e.to_string()),
        }
    }
}

impl From<SpectralError> for LabError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Geometry(_) | SpectralError::BadGrid | SpectralError::TooManyLevels { .. } => {
                LabError::Config(e.to_string())
            }
            _ => LabError::Numeric(e.to_string()),
        }
    }
}

impl From<PoleError> for LabError {
    fn from(e: PoleError) -> Self {
        match e {
            PoleError::NonPositiveProduct(_) => LabError::Numeric(e.to_string()),
            _ => LabError::Config(e.to_string()),
        }
    }
}

impl From<SidError> for LabError {
    fn from(e: SidError) -> Self {
        match e {
            SidError::NotUnitary { .. } => LabError::Numeric(e.to_string()),
            _ => LabError::Config(e.to_string()),
        }
    }
}

impl From<SnapshotError> for LabError {
    fn from(e: SnapshotError) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

/// Relative paths are placed under `$SINAI_LAB_OUTPUT_ROOT` when it is set.
pub fn resolve_output_dir(out: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if out.is_relative() && !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

/// Creates `dir`, refusing a non-empty directory unless `force` is set.
/// With `force`, only a directory holding a previous run (it has a
/// manifest) is cleared.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<(), LabError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty {
            if !force {
                return Err(LabError::Io(format!("output directory {} is not empty (use --force)", dir.display())));
            }
            if !dir.join(MANIFEST).exists() {
                return Err(LabError::Io(format!(
                    "refusing to clear {}: it does not contain a previous run ({MANIFEST} missing)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir)?;
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    /// `analyze` inputs: pattern CSVs of the both, only-1 and only-2 runs.
    pub analyze_inputs: Option<[PathBuf; 3]>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// `(file name, sha256 hex)` sorted by name, manifest excluded.
    pub checksums: Vec<(String, String)>,
    pub summary: Value,
}

impl RunOutput {
    pub fn checksum(&self, name: &str) -> Option<&str> {
        self.checksums.iter().find(|(n, _)| n == name).map(|(_, h)| h.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Finite numbers as JSON numbers, infinities as the strings `inf`/`-inf`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), LabError> {
        fs::write(self.dir.join(name), bytes)?;
        Ok(())
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    command: Command,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunOutput, LabError> {
    cfg.require(command.name(), "config")?;
    if command == Command::Analyze && opts.analyze_inputs.is_none() {
        return Err(LabError::Config("analyze needs the both, only-1 and only-2 pattern files".into()));
    }
    let dir = resolve_output_dir(out_dir);
    prepare_output_dir(&dir, opts.force)?;
    let out = Out { dir: dir.clone() };
    out.write(CONFIG_ECHO, cfg.echo())?;
    let started = Instant::now();
    let summary = match command {
        Command::Simulate => simulate(cfg, &out)?,
        Command::Classical => run_classical(cfg, &out)?,
        Command::Spectrum => run_spectrum(cfg, &out)?,
        Command::Poles => run_poles(cfg, &out)?,
        Command::Sid => run_sid(cfg, &out)?,
        Command::Analyze => analyze(cfg, &out, opts.analyze_inputs.as_ref().expect("checked above"))?,
    };
    out.write("summary.json", serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    let wall_clock = started.elapsed().as_secs_f64();

    let mut names: Vec<String> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    let mut checksums = Vec::with_capacity(names.len());
    for n in names {
        let bytes = fs::read(dir.join(&n))?;
        checksums.push((n, sha256_hex(&bytes)));
    }
    let files: Map<String, Value> = checksums.iter().map(|(n, h)| (n.clone(), json!(h))).collect();
    let manifest = json!({
        "command": command.name(),
        "config": CONFIG_ECHO,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "wall_clock_s": wall_clock,
        "sha256": files,
    });
    out.write(MANIFEST, serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    Ok(RunOutput { dir, checksums, summary })
}

/// Writes a snapshot every `cadence` steps.
struct SnapshotRecorder<'a> {
    out: &'a Out,
    label: &'static str,
    cadence: usize,
    error: Option<LabError>,
    written: usize,
}

impl Recorder for SnapshotRecorder<'_> {
    fn cadence(&self) -> usize {
        self.cadence
    }

    fn record(&mut self, field: &WaveField, step: usize, _interval: f64) {
        if self.error.is_some() {
            return;
        }
        let name = format!("snapshot_{}_{:07}.qbil", self.label, step);
        match self.out.write(&name, snapshot::encode(field)) {
            Ok(()) => self.written += 1,
            Err(e) => self.error = Some(e),
        }
    }
}

fn visibility_value(cfg: &ExperimentConfig, rec: &ScreenRecord) -> Value {
    let Some(a) = &cfg.analysis else { return Value::Null };
    match screen::visibility(rec, (a.visibility_window[0], a.visibility_window[1]), a.smoothing) {
        Ok(v) => num(v),
        Err(e) => json!(e.to_string()),
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Out) -> Result<Value, LabError> {
    let geom = build_apparatus(&cfg.apparatus().expect("required"))?;
    let grid = cfg.grid_spec().ok_or_else(|| LabError::Config("cannot build the grid".into()))?;
    let packet = cfg.packet_spec().expect("required");
    let run = cfg.run.as_ref().expect("required");
    let n_steps = run.n_steps.expect("filled on load");
    let film_row = grid.row_of(geom.film_y());
    let window = (run.film_window[0], run.film_window[1]);

    let mut summary = Map::new();
    summary.insert(
        "grid".into(),
        json!({"nx": grid.nx, "ny": grid.ny, "dx": grid.dx, "dy": grid.dy, "dt": grid.dt, "n_steps": n_steps, "film_row": film_row, "film_y": grid.point(0, film_row)[1]}),
    );
    let mut records = Vec::new();
    for (label, open) in run.slits.runs() {
        let g = geom.with_open_slits(open);
        let pot = rasterize_potential(&g, &grid)?;
        let field = init_gaussian(&packet, &grid, &pot)?;
        let mut stepper = Stepper::new(&pot, &grid)?;
        let mut film = FilmRecorder::new(&grid, film_row, window, run.film_cadence)?;
        let mut probe = RegionProbe::for_label(run.probe_cadence, &pot, DomainIndex::Box);
        let mut snaps = SnapshotRecorder { out, label, cadence: run.snapshot_cadence.max(1), error: None, written: 0 };
        let result = if run.snapshot_cadence > 0 {
            evolve(field, &mut stepper, n_steps, &mut [&mut film, &mut probe, &mut snaps])?
        } else {
            evolve(field, &mut stepper, n_steps, &mut [&mut film, &mut probe])?
        };
        if let Some(e) = snaps.error {
            return Err(e);
        }
        out.write(&format!("final_{label}.qbil"), snapshot::encode(&result.field))?;
        let mut probe_csv = String::from("t,norm,box_mass\n");
        for (t, n, m) in &probe.samples {
            let _ = writeln!(probe_csv, "{t:.16e},{n:.16e},{m:.16e}");
        }
        out.write(&format!("probe_{label}.csv"), probe_csv)?;

        let rec = film.record();
        let [h1, h2] = film.halves();
        out.write(&format!("pattern_{label}.csv"), rec.to_csv())?;
        out.write(&format!("pattern_{label}_half1.csv"), h1.to_csv())?;
        out.write(&format!("pattern_{label}_half2.csv"), h2.to_csv())?;
        let half_corr = match screen::pattern_correlation(&h1, &h2) {
            Ok(c) => num(c),
            Err(e) => json!(e.to_string()),
        };
        summary.insert(
            label.into(),
            json!({
                "final_norm": result.field.norm(),
                "film_flux": film.crossed(),
                "box_mass_max": probe.samples.iter().map(|s| s.2).fold(0.0, f64::max),
                "half_correlation": half_corr,
                "visibility": visibility_value(cfg, &rec),
                "snapshots": snaps.written,
            }),
        );
        records.push(rec);
    }
    if records.len() == 3 {
        decomposition_summary(cfg, out, &records[0], &records[1], &records[2], &mut summary)?;
    }
    Ok(Value::Object(summary))
}

fn decomposition_summary(
    cfg: &ExperimentConfig,
    out: &Out,
    both: &ScreenRecord,
    only1: &ScreenRecord,
    only2: &ScreenRecord,
    summary: &mut Map<String, Value>,
) -> Result<(), LabError> {
    let d = screen::decompose_interference(both, only1, only2)?;
    out.write("pattern.csv", d.to_csv())?;
    let pi = d.p_int.as_ref().expect("decomposed");
    let (p1, p2) = (d.p1.as_ref().expect("decomposed"), d.p2.as_ref().expect("decomposed"));
    let residual = (0..d.xs.len()).map(|i| (d.p[i] - p1[i] - p2[i] - pi[i]).abs()).fold(0.0, f64::max);
    summary.insert(
        "interference".into(),
        json!({
            "visibility": visibility_value(cfg, &d),
            "cauchy_schwarz_ratio": d_ratio(&d),
            "identity_residual": residual,
            "p_int_abs_max": pi.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }),
    );
    Ok(())
}

fn d_ratio(d: &ScreenRecord) -> Value {
    screen::cauchy_schwarz_ratio(d).map_or(Value::Null, num)
}

fn analyze(cfg: &ExperimentConfig, out: &Out, inputs: &[PathBuf; 3]) -> Result<Value, LabError> {
    let window = cfg.run.as_ref().map_or((0.0, 0.0), |r| (r.film_window[0], r.film_window[1]));
    let read = |p: &PathBuf| ScreenRecord::read_csv(p, window).map_err(|e| LabError::Io(format!("{}: {e}", p.display())));
    let (both, only1, only2) = (read(&inputs[0])?, read(&inputs[1])?, read(&inputs[2])?);
    let mut summary = Map::new();
    summary.insert("inputs".into(), json!(inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()));
    decomposition_summary(cfg, out, &both, &only1, &only2, &mut summary)?;
    Ok(Value::Object(summary))
}

fn run_classical(cfg: &ExperimentConfig, out: &Out) -> Result<Value, LabError> {
    let geom = build_apparatus(&cfg.apparatus().expect("required"))?;
    let c = cfg.classical.as_ref().expect("required");
    let state = ClassicalState::new(c.start, c.theta_deg.to_radians());
    let traj = classical::trace_trajectory(&state, &geom, c.n_bounces)?;
    out.write("trajectory.csv", traj.to_csv())?;
    let lambda = classical::lyapunov_with_offset(&geom, &state, c.n_bounces, c.offset)?;
    let mut census = Map::new();
    let mut checkpoints = c.census_checkpoints.clone();
    checkpoints.push(c.n_bounces);
    checkpoints.sort_unstable();
    checkpoints.dedup();
    for n in checkpoints.into_iter().filter(|&n| n > 0) {
        census.insert(n.to_string(), json!(classical::direction_census(&geom, &state, n)?));
    }
    let dev = classical::parallel_deviation(&geom, &state, c.offset, c.deviation_bounces)?;
    let mut csv = String::from("bounce,path,separation,angle_diff\n");
    for (k, s) in dev.iter().enumerate() {
        let _ = writeln!(csv, "{},{:.16e},{:.16e},{:.16e}", k + 1, s.path, s.separation, s.angle_diff);
    }
    out.write("deviation.csv", csv)?;
    let rate = classical::exponential_rate(&dev, c.offset, 1e-3);
    Ok(json!({
        "lyapunov": lambda,
        "path_length": traj.path_length,
        "census": census,
        "deviation_rate": rate.map_or(Value::Null, num),
        "max_angle_diff": dev.iter().map(|s| s.angle_diff).fold(0.0, f64::max),
    }))
}

fn run_spectrum(cfg: &ExperimentConfig, out: &Out) -> Result<Value, LabError> {
    let geom = build_apparatus(&cfg.apparatus().expect("required"))?.with_open_slits([false, false]);
    let s = cfg.spectrum.as_ref().expect("required");
    let data = spectral::billiard_spectrum(&geom, s.n, s.levels, s.hbar, s.mass)?;
    out.write("spectrum.csv", data.to_csv())?;
    let t_p = spectral::poincare_time(&data.eigenvalues, s.hbar)?;
    let ratio = if data.eigenvalues.len() >= 20 {
        spectral::spacing_ratio_stats(&data.eigenvalues).map_or(Value::Null, num)
    } else {
        Value::Null
    };
    let mut v = json!({
        "levels": data.eigenvalues.len(),
        "lowest": data.eigenvalues[0],
        "min_gap": data.min_gap.map_or(Value::Null, num),
        "t_poincare_window_estimate": t_p,
        "spacing_ratio": ratio,
        "degenerate_pairs": spectral::degenerate_pairs(&data.eigenvalues).len(),
        "max_residual": data.residuals.iter().fold(0.0f64, |m, &r| m.max(r)),
    });
    if let Some(t) = s.t_run {
        v["t_run"] = json!(t);
        v["t_poincare_over_t_run"] = num(t_p / t);
    }
    Ok(v)
}

fn run_poles(cfg: &ExperimentConfig, out: &Out) -> Result<Value, LabError> {
    let p = cfg.poles.as_ref().expect("required");
    let radius = if p.radius.is_infinite() { Radius::Infinite } else { Radius::Finite(p.radius) };
    let wall = WallParams {
        u0: p.u0,
        a_coef: p.a_coef,
        wall_order: p.wall_order,
        radius,
        mass: p.mass.expect("filled on load"),
        hbar: p.hbar.expect("filled on load"),
    };
    let r = poles::evaluate(&wall)?;
    if !p.sweep.is_empty() {
        let beta = poles::pole_beta0(p.u0, p.a_coef, p.wall_order)?;
        let radii: Vec<Radius> =
            p.sweep.iter().map(|&a| if a.is_infinite() { Radius::Infinite } else { Radius::Finite(a) }).collect();
        let rows = poles::sweep_radius(beta, &radii, wall.mass, wall.hbar)?;
        out.write("sweep.csv", poles::sweep_csv(&rows))?;
    }
    Ok(json!({
        "R0": r.r0,
        "I0": r.i0,
        "R0_I0": r.r0 * r.i0,
        "gamma": num(r.gamma),
        "t_D": num(r.t_d),
        "radius": num(p.radius),
    }))
}

fn run_sid(cfg: &ExperimentConfig, out: &Out) -> Result<Value, LabError> {
    let s = cfg.sid.as_ref().expect("required");
    let seed = cfg.seed.unwrap_or(0);
    let modes = match s.sampling {
        Sampling::Stratified => sid::stratified_gaussian_modes(s.modes, s.spread, s.block_size, seed)?,
        Sampling::Random => sid::random_gaussian_modes(s.modes, s.spread, s.block_size, seed)?,
        Sampling::Directions => sid::direction_modes(s.modes, s.spread, 0.0)?,
    };
    let unitaries = match s.unitary {
        UnitaryKind::Coherent => UnitaryFamily::coherent(&modes),
        UnitaryKind::Random => UnitaryFamily::random(&modes, seed.wrapping_add(1)),
        UnitaryKind::Identity => UnitaryFamily::identity(&modes),
    };
    let profile = match s.weights {
        WeightKind::Uniform => WeightProfile::Uniform,
        WeightKind::Gaussian => WeightProfile::Gaussian {
            center: s.weight_center.expect("checked on load"),
            width: s.weight_width.expect("checked on load"),
        },
    };
    let state = sid::build_equilibrium(&modes, &sid::coherent_weights(&modes, profile), &unitaries)?;
    let disp = [s.slit_separation, 0.0];
    let x_max = s.x_max.expect("filled on load");
    let scan = sid::rl_decay_scan(&state, &unitaries, &modes, disp, x_max, s.n_points, s.hbar)?;
    out.write("envelope.csv", scan.to_csv())?;
    let xs: Vec<f64> = (0..s.dump_points).map(|k| x_max * k as f64 / (s.dump_points.max(2) - 1) as f64).collect();
    let pint = sid::pint_pattern(&state, &unitaries, &modes, disp, &xs, s.hbar)?;
    let mut csv = String::from("x,p_int\n");
    for (x, v) in xs.iter().zip(&pint) {
        let _ = writeln!(csv, "{x:.16e},{v:.16e}");
    }
    out.write("pint.csv", csv)?;
    let e0 = scan.envelope[0];
    let last = scan.envelope[scan.envelope.len() - 1];
    let mut v = json!({
        "verdict": scan.verdict.label(),
        "modes": modes.len(),
        "blocks": modes.blocks.len(),
        "x_max": x_max,
        "e0": e0,
        "e_x_max": last,
        "ratio": if e0 > 0.0 { num(last / e0) } else { Value::Null },
        "renormalized": state.renormalized,
    });
    if s.sampling != Sampling::Directions && s.unitary == UnitaryKind::Coherent && modes.blocks.len() == 1 && e0 > 0.0 {
        let dev = scan
            .r
            .iter()
            .zip(&scan.envelope)
            .map(|(&r, &e)| (sid::gaussian_envelope(r, s.spread, s.hbar), e / e0))
            .filter(|&(g, _)| g >= 1e-4)
            .map(|(g, e)| (e / g - 1.0).abs())
            .fold(0.0, f64::max);
        v["max_rel_dev_from_gaussian"] = json!(dev);
    }
    Ok(v)
}
