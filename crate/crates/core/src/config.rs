//! Experiment configuration: a TOML file with one table per block.
//!
//! Unknown keys, missing required keys and type mismatches are rejected
//! with the offending line. After loading, every default is filled in so
//! that [`ExperimentConfig::echo`] is the complete effective configuration;
//! loading an echo and echoing again reproduces it byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ApparatusConfig, HypotenuseSpec};
use crate::solver::{GaussianPacketSpec, GridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: line {line}: {msg}")]
    Invalid { path: String, line: usize, msg: String },
    #[error("{path}: missing block [{block}] required by `{command}`")]
    MissingBlock { path: String, block: &'static str, command: String },
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypotenuse {
    Straight,
    Arc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub leg_length: f64,
    pub hypotenuse: Hypotenuse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc_sagitta: Option<f64>,
    pub wall_height: f64,
    pub wall_skin: f64,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub box_depth: f64,
    #[serde(default = "default_box_margin")]
    pub box_margin: f64,
    pub film_offset: f64,
    pub absorber_width: f64,
    pub absorber_strength: f64,
}

fn default_box_margin() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Number of grid rows; square cells of side `(y_max - y_min)/(rows - 3)`
    /// cover the apparatus bounds.
    pub rows: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    /// Defaults to `0.2·M·h²/ħ`.
    #[serde(default)]
    pub dt: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub center: [f64; 2],
    pub sigma: f64,
    pub k0: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlitMode {
    Both,
    Only1,
    Only2,
    /// both, only-1 and only-2 runs plus the decomposition
    Triplet,
}

impl SlitMode {
    pub fn runs(self) -> Vec<(&'static str, [bool; 2])> {
        match self {
            SlitMode::Both => vec![("both", [true, true])],
            SlitMode::Only1 => vec![("only1", [true, false])],
            SlitMode::Only2 => vec![("only2", [false, true])],
            SlitMode::Triplet => vec![("both", [true, true]), ("only1", [true, false]), ("only2", [false, true])],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    /// Defaults to `ceil(t_end / dt)`.
    #[serde(default)]
    pub n_steps: Option<usize>,
    pub film_window: [f64; 2],
    #[serde(default = "default_film_cadence")]
    pub film_cadence: usize,
    #[serde(default = "default_probe_cadence")]
    pub probe_cadence: usize,
    /// Steps between field snapshots; 0 writes only the final field.
    #[serde(default)]
    pub snapshot_cadence: usize,
    #[serde(default = "default_slits")]
    pub slits: SlitMode,
}

fn default_film_cadence() -> usize {
    4
}

fn default_probe_cadence() -> usize {
    500
}

fn default_slits() -> SlitMode {
    SlitMode::Triplet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub visibility_window: [f64; 2],
    /// Full width at half maximum of the Gaussian smoothing kernel.
    pub smoothing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub start: [f64; 2],
    pub theta_deg: f64,
    pub n_bounces: usize,
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_checkpoints")]
    pub census_checkpoints: Vec<usize>,
    #[serde(default = "default_deviation_bounces")]
    pub deviation_bounces: usize,
}

fn default_offset() -> f64 {
    1e-9
}

fn default_checkpoints() -> Vec<usize> {
    vec![100, 1000]
}

fn default_deviation_bounces() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Nodes per side of the lattice over `[0, L]²`.
    pub n: usize,
    pub levels: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    /// Simulated run time to compare with t_P.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_run: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Si,
    Natural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolesSection {
    pub u0: f64,
    pub a_coef: f64,
    pub wall_order: u32,
    /// `inf` for a flat wall.
    pub radius: f64,
    pub units: Units,
    /// Defaults to the electron mass (SI) or 1 (natural).
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub hbar: Option<f64>,
    #[serde(default)]
    pub sweep: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Stratified,
    Random,
    Directions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitaryKind {
    Coherent,
    Random,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidSection {
    pub sampling: Sampling,
    pub modes: usize,
    /// rms momentum of the Gaussian sets, or |m| of the direction set
    pub spread: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    pub unitary: UnitaryKind,
    pub weights: WeightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_width: Option<f64>,
    pub slit_separation: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Defaults to `50 ħ / spread`.
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_dump_points")]
    pub dump_points: usize,
}

fn default_block_size() -> usize {
    32
}

fn default_n_points() -> usize {
    40
}

fn default_dump_points() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<PacketSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<PolesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sid: Option<SidSection>,
}

/// 1-based line of a table header, or 1 if absent.
fn header_line(src: &str, table: &str) -> usize {
    let want = format!("[{table}]");
    src.lines().position(|l| l.trim() == want).map_or(1, |i| i + 1)
}

/// 1-based line where `key` is set inside `table`.
fn key_line(src: &str, table: &str, key: &str) -> usize {
    let start = header_line(src, table);
    for (i, l) in src.lines().enumerate().skip(start) {
        let t = l.trim();
        if t.starts_with('[') {
            break;
        }
        if t.split('=').next().map(str::trim) == Some(key) {
            return i + 1;
        }
    }
    start
}

impl ExperimentConfig {
    pub fn parse(src: &str, path: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(src).map_err(|e| ConfigError::Parse { path: path.into(), msg: e.to_string().trim_end().into() })?;
        let invalid = |table: &str, key: &str, msg: String| ConfigError::Invalid {
            path: path.into(),
            line: key_line(src, table, key),
            msg,
        };
        if let Some(g) = &cfg.geometry {
            match (g.hypotenuse, g.arc_sagitta) {
                (Hypotenuse::Arc, None) => {
                    return Err(invalid("geometry", "hypotenuse", "arc_sagitta is required when hypotenuse = \"arc\"".into()))
                }
                (Hypotenuse::Straight, Some(_)) => {
                    return Err(invalid("geometry", "arc_sagitta", "arc_sagitta given for a straight hypotenuse".into()))
                }
                _ => {}
            }
            crate::geometry::build_apparatus(&cfg.apparatus().expect("geometry present"))
                .map_err(|e| invalid("geometry", "", e.to_string()))?;
        }
        if let Some(grid) = cfg.grid.clone() {
            if grid.rows < 8 {
                return Err(invalid("grid", "rows", format!("rows = {} is too small", grid.rows)));
            }
            if !(grid.hbar > 0.0 && grid.mass > 0.0) {
                return Err(invalid("grid", "hbar", "hbar and mass must be positive".into()));
            }
            if let Some(dt) = grid.dt {
                if !(dt > 0.0) {
                    return Err(invalid("grid", "dt", format!("dt = {dt} must be positive")));
                }
            }
            if let Some(g) = cfg.grid_spec() {
                cfg.grid.as_mut().unwrap().dt = Some(g.dt);
            }
        }
        if let Some(run) = &cfg.run {
            if !(run.film_window[1] > run.film_window[0]) {
                return Err(invalid("run", "film_window", "film_window must be increasing".into()));
            }
            if run.film_cadence == 0 || run.probe_cadence == 0 {
                return Err(invalid("run", "film_cadence", "cadences must be positive".into()));
            }
            if !(run.t_end > 0.0) {
                return Err(invalid("run", "t_end", "t_end must be positive".into()));
            }
        }
        if let (Some(run), Some(dt)) = (cfg.run.as_mut(), cfg.grid.as_ref().and_then(|g| g.dt)) {
            if run.n_steps.is_none() {
                run.n_steps = Some((run.t_end / dt).ceil() as usize);
            }
        }
        if let Some(a) = &cfg.analysis {
            if !(a.visibility_window[1] > a.visibility_window[0]) || !(a.smoothing > 0.0) {
                return Err(invalid("analysis", "visibility_window", "need an increasing window and positive smoothing".into()));
            }
        }
        if let Some(c) = &cfg.classical {
            if c.n_bounces < 1000 {
                return Err(invalid("classical", "n_bounces", "n_bounces must be at least 1000".into()));
            }
        }
        if let Some(s) = &cfg.spectrum {
            if s.levels < 2 || s.n < 8 {
                return Err(invalid("spectrum", "levels", "need levels >= 2 and n >= 8".into()));
            }
        }
        if let Some(p) = cfg.poles.as_mut() {
            let (m, h) = match p.units {
                Units::Si => (crate::poles::ELECTRON_MASS_KG, crate::poles::HBAR_SI),
                Units::Natural => (1.0, 1.0),
            };
            p.mass.get_or_insert(m);
            p.hbar.get_or_insert(h);
        }
        if let Some(s) = cfg.sid.as_mut() {
            if s.modes == 0 || s.block_size == 0 || !(s.spread > 0.0) || !(s.hbar > 0.0) {
                return Err(invalid("sid", "modes", "need modes > 0, block_size > 0, spread > 0 and hbar > 0".into()));
            }
            if s.weights == WeightKind::Gaussian && (s.weight_center.is_none() || s.weight_width.is_none()) {
                return Err(invalid("sid", "weights", "gaussian weights need weight_center and weight_width".into()));
            }
            s.x_max.get_or_insert(50.0 * s.hbar / s.spread);
            let seeded = s.sampling != Sampling::Directions || s.unitary == UnitaryKind::Random;
            if seeded && cfg.seed.is_none() {
                return Err(ConfigError::Invalid {
                    path: path.into(),
                    line: header_line(src, "sid"),
                    msg: "seed is required for seeded mode sets and unitaries".into(),
                });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let p = path.display().to_string();
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: p.clone(), msg: e.to_string() })?;
        ExperimentConfig::parse(&src, &p)
    }

    /// Canonical text of the effective configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that the blocks needed by `command` are present.
    pub fn require(&self, command: &str, path: &str) -> Result<(), ConfigError> {
        let needed: &[(&'static str, bool)] = match command {
            "simulate" => &[
                ("geometry", self.geometry.is_some()),
                ("grid", self.grid.is_some()),
                ("packet", self.packet.is_some()),
                ("run", self.run.is_some()),
            ],
            "classical" => &[("geometry", self.geometry.is_some()), ("classical", self.classical.is_some())],
            "spectrum" => &[("geometry", self.geometry.is_some()), ("spectrum", self.spectrum.is_some())],
            "poles" => &[("poles", self.poles.is_some())],
            "sid" => &[("sid", self.sid.is_some())],
            "analyze" => &[("analysis", self.analysis.is_some())],
            _ => &[],
        };
        for &(block, present) in needed {
            if !present {
                return Err(ConfigError::MissingBlock { path: path.into(), block, command: command.into() });
            }
        }
        Ok(())
    }

    pub fn apparatus(&self) -> Option<ApparatusConfig> {
        let g = self.geometry.as_ref()?;
        Some(ApparatusConfig {
            leg_length: g.leg_length,
            hypotenuse: match g.hypotenuse {
                Hypotenuse::Straight => HypotenuseSpec::Straight,
                Hypotenuse::Arc => HypotenuseSpec::Arc { sagitta: g.arc_sagitta.unwrap_or(0.0) },
            },
            wall_height: g.wall_height,
            wall_skin: g.wall_skin,
            slit_separation: g.slit_separation,
            slit_width: g.slit_width,
            box_depth: g.box_depth,
            box_margin: g.box_margin,
            film_offset: g.film_offset,
            absorber_width: g.absorber_width,
            absorber_strength: g.absorber_strength,
            open_slits: [true, true],
        })
    }

    /// Simulation grid covering the apparatus, with `dt` from the config or
    /// the default rule.
    pub fn grid_spec(&self) -> Option<GridSpec> {
        let g = self.grid.as_ref()?;
        let geom = crate::geometry::build_apparatus(&self.apparatus()?).ok()?;
        let b = geom.bounds();
        let h = (b[3] - b[2]) / (g.rows as f64 - 3.0);
        let grid = geom.covering_grid(h, h).with_units(g.hbar, g.mass);
        Some(match g.dt {
            Some(dt) => grid.with_dt(dt),
            None => grid,
        })
    }

    pub fn packet_spec(&self) -> Option<GaussianPacketSpec> {
        let p = self.packet.as_ref()?;
        Some(GaussianPacketSpec { center: p.center, sigma: p.sigma, k0: p.k0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"seed = 7

[geometry]
leg_length = 1.0
hypotenuse = "straight"
wall_height = 50000.0
wall_skin = 0.04
slit_separation = 0.3
slit_width = 0.05
box_depth = 1.5
film_offset = 0.3
absorber_width = 0.25
absorber_strength = 20000.0

[grid]
rows = 384

[packet]
center = [0.5, 0.16]
sigma = 0.03
k0 = [0.0, -60.0]

[run]
t_end = 0.25
film_window = [0.05, 0.25]
"#;

    #[test]
    fn dt_defaults_and_echo_round_trips() {
        let cfg = ExperimentConfig::parse(BASE, "base.toml").unwrap();
        let grid = cfg.grid_spec().unwrap();
        let dt = cfg.grid.as_ref().unwrap().dt.unwrap();
        assert_eq!(dt, 0.2 * grid.dx.min(grid.dy).powi(2));
        let n = cfg.run.as_ref().unwrap().n_steps.unwrap();
        assert_eq!(n, (0.25 / dt).ceil() as usize);
        let echo = cfg.echo();
        assert!(echo.contains("dt = "));
        let again = ExperimentConfig::parse(&echo, "echo.toml").unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn misspelled_key_names_key_and_line() {
        let src = BASE.replace("slit_width = 0.05", "slit_widht = 0.05");
        let err = ExperimentConfig::parse(&src, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("slit_widht"), "{err}");
        assert!(err.contains("line 9"), "{err}");
    }

    #[test]
    fn missing_key_and_type_mismatch_report_lines() {
        let src = BASE.replace("sigma = 0.03\n", "");
        let err = ExperimentConfig::parse(&src, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("sigma") && err.contains("line "), "{err}");
        let src = BASE.replace("rows = 384", "rows = \"many\"");
        let err = ExperimentConfig::parse(&src, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("line 16"), "{err}");
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let src = BASE.replace("hypotenuse = \"straight\"", "hypotenuse = \"arc\"");
        match ExperimentConfig::parse(&src, "arc.toml").unwrap_err() {
            ConfigError::Invalid { line, msg, .. } => {
                assert_eq!(line, 5);
                assert!(msg.contains("arc_sagitta"));
            }
            e => panic!("{e}"),
        }
        let src = BASE.replace("film_window = [0.05, 0.25]", "film_window = [0.25, 0.05]");
        assert!(matches!(ExperimentConfig::parse(&src, "w.toml"), Err(ConfigError::Invalid { line: 25, .. })));
    }

    #[test]
    fn blocks_are_checked_per_command() {
        let cfg = ExperimentConfig::parse(BASE, "base.toml").unwrap();
        assert!(cfg.require("simulate", "base.toml").is_ok());
        assert!(matches!(cfg.require("sid", "base.toml"), Err(ConfigError::MissingBlock { block: "sid", .. })));
    }

    #[test]
    fn sid_needs_a_seed() {
        let src = "[sid]\nsampling = \"random\"\nmodes = 10\nspread = 1.0\nunitary = \"coherent\"\nweights = \"uniform\"\nslit_separation = 0.3\n";
        assert!(matches!(ExperimentConfig::parse(src, "s.toml"), Err(ConfigError::Invalid { line: 1, .. })));
        let cfg = ExperimentConfig::parse(&format!("seed = 1\n{src}"), "s.toml").unwrap();
        assert_eq!(cfg.sid.unwrap().x_max, Some(50.0));
    }

    #[test]
    fn infinite_radius_round_trips() {
        let src = "[poles]\nu0 = 10.0\na_coef = 1.0\nwall_order = 0\nradius = inf\nunits = \"si\"\n";
        let cfg = ExperimentConfig::parse(src, "p.toml").unwrap();
        let p = cfg.poles.as_ref().unwrap();
        assert_eq!(p.radius, f64::INFINITY);
        assert_eq!(p.mass, Some(crate::poles::ELECTRON_MASS_KG));
        assert_eq!(ExperimentConfig::parse(&cfg.echo(), "e.toml").unwrap(), cfg);
    }
}
