//! Apparatus geometry: the triangular billiard, the slit screen in its base,
//! the radiation box underneath and the film line, plus rasterization of all
//! of it into a potential and a domain-label map on a grid.
//!
//! Coordinates: the right angle of the triangle sits at the origin, the base
//! (horizontal leg, carrying the slits) runs along `y = 0`, the vertical leg
//! along `x = 0`, and the hypotenuse joins `(L, 0)` to `(0, L)`. The box lies
//! below the screen, `y < -w_skin`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use thiserror::Error;

use crate::solver::GridSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("nonpositive dimension: {0}")]
    NonPositive(&'static str),
    #[error("slits overlap (separation {separation} <= width {width})")]
    SlitsOverlap { separation: f64, width: f64 },
    #[error("slits do not fit strictly inside the base")]
    SlitsOutsideBase,
    #[error("degenerate arc; use Straight")]
    DegenerateArc,
    #[error("arc sagitta {sagitta} >= triangle height {height}")]
    SagittaTooLarge { sagitta: f64, height: f64 },
    #[error("absorber width must be smaller than the box depth")]
    AbsorberTooWide,
    #[error("film row must lie above the absorber and inside the box")]
    FilmPlacement,
    #[error("grid under-resolves {what}: {cells:.2} cells, need at least 4")]
    UnderResolved { what: &'static str, cells: f64 },
}

/// Shape of the third side of the triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HypotenuseKind {
    Straight,
    /// Circular arc through both hypotenuse endpoints, bulging into the
    /// triangle (dispersing wall).
    Arc { radius: f64, center: [f64; 2] },
}

/// Requested hypotenuse shape; the arc is given by its sagitta (the depth of
/// the bulge measured from the chord midpoint toward the right angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HypotenuseSpec {
    Straight,
    Arc { sagitta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApparatusConfig {
    pub leg_length: f64,
    pub hypotenuse: HypotenuseSpec,
    pub wall_height: f64,
    pub wall_skin: f64,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub box_depth: f64,
    /// Extra width of the box on each side of the triangle base.
    pub box_margin: f64,
    pub film_offset: f64,
    pub absorber_width: f64,
    /// Peak strength of the complex absorbing potential.
    pub absorber_strength: f64,
    pub open_slits: [bool; 2],
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        ApparatusConfig {
            leg_length: 1.0,
            hypotenuse: HypotenuseSpec::Straight,
            wall_height: 5.0e4,
            wall_skin: 0.04,
            slit_separation: 0.3,
            slit_width: 0.05,
            box_depth: 1.5,
            box_margin: 0.5,
            film_offset: 0.3,
            absorber_width: 0.25,
            absorber_strength: 2.0e4,
            open_slits: [true, true],
        }
    }
}

/// Spatial domain labels.
///
/// `D0` is the open triangle, `D1`/`D2`/`D4` the soft wall skins behind the
/// base, the vertical leg and the hypotenuse. `Box` is the radiation region
/// below the screen including the slit channels; `Exterior` is hard-wall
/// (Dirichlet) closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainIndex {
    D0,
    D1,
    D2,
    D4,
    Box,
    Exterior,
}

impl DomainIndex {
    pub fn is_wall(self) -> bool {
        matches!(self, DomainIndex::D1 | DomainIndex::D2 | DomainIndex::D4)
    }

    pub fn label(self) -> &'static str {
        match self {
            DomainIndex::D0 => "D0",
            DomainIndex::D1 => "D1",
            DomainIndex::D2 => "D2",
            DomainIndex::D4 => "D4",
            DomainIndex::Box => "box",
            DomainIndex::Exterior => "exterior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApparatusGeometry {
    pub leg_length: f64,
    pub hypotenuse: HypotenuseKind,
    pub wall_height: f64,
    pub wall_skin: f64,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub box_depth: f64,
    pub box_margin: f64,
    pub film_offset: f64,
    pub absorber_width: f64,
    pub absorber_strength: f64,
    pub open_slits: [bool; 2],
}

/// Validate a configuration and solve the arc circle if needed.
pub fn build_apparatus(cfg: &ApparatusConfig) -> Result<ApparatusGeometry, GeometryError> {
    let positive = [
        (cfg.leg_length, "leg_length"),
        (cfg.wall_height, "wall_height"),
        (cfg.wall_skin, "wall_skin"),
        (cfg.slit_width, "slit_width"),
        (cfg.slit_separation, "slit_separation"),
        (cfg.box_depth, "box_depth"),
        (cfg.film_offset, "film_offset"),
        (cfg.absorber_width, "absorber_width"),
    ];
    for (v, name) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GeometryError::NonPositive(name));
        }
    }
    if !(cfg.box_margin >= 0.0) {
        return Err(GeometryError::NonPositive("box_margin"));
    }
    if !(cfg.absorber_strength >= 0.0) {
        return Err(GeometryError::NonPositive("absorber_strength"));
    }
    if cfg.slit_width >= cfg.slit_separation {
        return Err(GeometryError::SlitsOverlap {
            separation: cfg.slit_separation,
            width: cfg.slit_width,
        });
    }
    let l = cfg.leg_length;
    let half_span = 0.5 * (cfg.slit_separation + cfg.slit_width);
    if 0.5 * l - half_span <= 0.0 {
        return Err(GeometryError::SlitsOutsideBase);
    }
    if cfg.absorber_width >= cfg.box_depth {
        return Err(GeometryError::AbsorberTooWide);
    }
    if cfg.film_offset <= cfg.absorber_width || cfg.film_offset >= cfg.box_depth {
        return Err(GeometryError::FilmPlacement);
    }

    let hypotenuse = match cfg.hypotenuse {
        HypotenuseSpec::Straight => HypotenuseKind::Straight,
        HypotenuseSpec::Arc { sagitta } => {
            if sagitta == 0.0 {
                return Err(GeometryError::DegenerateArc);
            }
            if !(sagitta > 0.0) {
                return Err(GeometryError::NonPositive("sagitta"));
            }
            let height = l / SQRT_2;
            if sagitta >= height {
                return Err(GeometryError::SagittaTooLarge { sagitta, height });
            }
            let half_chord = l / SQRT_2;
            let radius = (half_chord * half_chord + sagitta * sagitta) / (2.0 * sagitta);
            // center lies on the outward normal of the chord, beyond it
            let offset = (radius - sagitta) / SQRT_2;
            let center = [0.5 * l + offset, 0.5 * l + offset];
            HypotenuseKind::Arc { radius, center }
        }
    };

    Ok(ApparatusGeometry {
        leg_length: l,
        hypotenuse,
        wall_height: cfg.wall_height,
        wall_skin: cfg.wall_skin,
        slit_separation: cfg.slit_separation,
        slit_width: cfg.slit_width,
        box_depth: cfg.box_depth,
        box_margin: cfg.box_margin,
        film_offset: cfg.film_offset,
        absorber_width: cfg.absorber_width,
        absorber_strength: cfg.absorber_strength,
        open_slits: cfg.open_slits,
    })
}

/// C¹ monotone ramp from 0 at `t = 0` to 1 at `t = 1`.
pub fn ramp(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

impl ApparatusGeometry {
    pub fn vertices(&self) -> [[f64; 2]; 3] {
        let l = self.leg_length;
        [[0.0, 0.0], [l, 0.0], [0.0, l]]
    }

    /// Slit centers along the base.
    pub fn slit_centers(&self) -> [f64; 2] {
        let mid = 0.5 * self.leg_length;
        [mid - 0.5 * self.slit_separation, mid + 0.5 * self.slit_separation]
    }

    pub fn with_open_slits(&self, open: [bool; 2]) -> ApparatusGeometry {
        ApparatusGeometry { open_slits: open, ..self.clone() }
    }

    pub fn with_absorber_strength(&self, eta: f64) -> ApparatusGeometry {
        ApparatusGeometry { absorber_strength: eta, ..self.clone() }
    }

    /// Bounding rectangle `[xmin, xmax, ymin, ymax]` of the whole apparatus.
    pub fn bounds(&self) -> [f64; 4] {
        let l = self.leg_length;
        let w = self.wall_skin;
        let xmin = -(self.box_margin).max(w);
        let xmax = l + self.box_margin.max(w);
        [xmin, xmax, self.box_bottom(), l + w]
    }

    pub fn box_bottom(&self) -> f64 {
        -(self.wall_skin + self.box_depth)
    }

    pub fn film_y(&self) -> f64 {
        self.box_bottom() + self.film_offset
    }

    /// Area of the billiard region D0.
    pub fn d0_area(&self) -> f64 {
        let l = self.leg_length;
        let tri = 0.5 * l * l;
        match self.hypotenuse {
            HypotenuseKind::Straight => tri,
            HypotenuseKind::Arc { radius, .. } => {
                let half_chord = l / SQRT_2;
                let theta = 2.0 * (half_chord / radius).asin();
                tri - 0.5 * radius * radius * (theta - theta.sin())
            }
        }
    }

    /// Whether `p` lies in the open billiard region.
    pub fn inside_d0(&self, p: [f64; 2]) -> bool {
        let l = self.leg_length;
        if !(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < l) {
            return false;
        }
        match self.hypotenuse {
            HypotenuseKind::Straight => true,
            HypotenuseKind::Arc { radius, center } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() > radius
            }
        }
    }

    /// Distance from `p` to the hypotenuse wall (segment or arc).
    pub fn dist_to_hypotenuse(&self, p: [f64; 2]) -> f64 {
        let l = self.leg_length;
        let a = [l, 0.0];
        let b = [0.0, l];
        match self.hypotenuse {
            HypotenuseKind::Straight => dist_to_segment(p, a, b),
            HypotenuseKind::Arc { radius, center } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r = (dx * dx + dy * dy).sqrt();
                // angular span of the arc, seen from the center (third quadrant)
                let ang = dy.atan2(dx);
                let a0 = (a[1] - center[1]).atan2(a[0] - center[0]);
                let a1 = (b[1] - center[1]).atan2(b[0] - center[0]);
                let (lo, hi) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
                if ang >= lo && ang <= hi {
                    (r - radius).abs()
                } else {
                    let da = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
                    let db = ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt();
                    da.min(db)
                }
            }
        }
    }

    fn in_slit_gap(&self, p: [f64; 2]) -> bool {
        if !(p[1] <= 0.0 && p[1] >= -self.wall_skin) {
            return false;
        }
        let half = 0.5 * self.slit_width;
        self.slit_centers()
            .iter()
            .zip(self.open_slits)
            .any(|(&c, open)| open && (p[0] - c).abs() < half)
    }

    /// Label and real potential at a point.
    pub fn classify(&self, p: [f64; 2]) -> (DomainIndex, f64) {
        let l = self.leg_length;
        let w = self.wall_skin;
        if p[1] < -w {
            return (DomainIndex::Box, 0.0);
        }
        if self.in_slit_gap(p) {
            return (DomainIndex::Box, 0.0);
        }
        if self.inside_d0(p) {
            return (DomainIndex::D0, 0.0);
        }
        let d1 = dist_to_segment(p, [0.0, 0.0], [l, 0.0]);
        let d2 = dist_to_segment(p, [0.0, 0.0], [0.0, l]);
        let d4 = self.dist_to_hypotenuse(p);
        let (d, label) = [(d1, DomainIndex::D1), (d2, DomainIndex::D2), (d4, DomainIndex::D4)]
            .into_iter()
            .fold((f64::INFINITY, DomainIndex::Exterior), |acc, c| if c.0 < acc.0 { c } else { acc });
        // a point in the lens between chord and arc is "behind" the arc even
        // when it is closer to a leg
        let (d, label) = match self.hypotenuse {
            HypotenuseKind::Arc { .. }
                if p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < l && d4 <= w =>
            {
                (d4, DomainIndex::D4)
            }
            _ => (d, label),
        };
        if d <= w {
            (label, self.wall_height * ramp(d / w))
        } else {
            (DomainIndex::Exterior, 0.0)
        }
    }

    pub fn domain_of(&self, p: [f64; 2]) -> DomainIndex {
        self.classify(p).0
    }

    /// Imaginary (absorbing) part Γ ≥ 0 of the potential, nonzero only in
    /// the box near its floor and side walls.
    pub fn absorber_at(&self, p: [f64; 2]) -> f64 {
        if self.absorber_strength == 0.0 {
            return 0.0;
        }
        let [xmin, xmax, ymin, _] = self.bounds();
        let w = self.absorber_width;
        let depth = [
            w - (p[1] - ymin),
            w - (p[0] - xmin),
            w - (xmax - p[0]),
        ]
        .into_iter()
        .fold(0.0f64, f64::max);
        if depth <= 0.0 {
            0.0
        } else {
            self.absorber_strength * (depth / w).min(1.0).powi(4)
        }
    }

    /// Smallest grid that covers the apparatus with the given spacings.
    pub fn covering_grid(&self, dx: f64, dy: f64) -> GridSpec {
        let [xmin, xmax, ymin, ymax] = self.bounds();
        // one Dirichlet ring outside the bounding box
        let nx = ((xmax - xmin) / dx).ceil() as usize + 3;
        let ny = ((ymax - ymin) / dy).ceil() as usize + 3;
        GridSpec::new(nx, ny, dx, dy, [xmin - dx, ymin - dy])
    }
}

/// Rasterized potential: real part, absorbing part and domain labels, row
/// major (`j * nx + i`).
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    pub real: Vec<f64>,
    pub absorb: Vec<f64>,
    pub labels: Vec<DomainIndex>,
}

impl PotentialField {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dy]
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.labels[idx] != DomainIndex::Exterior
    }

    pub fn count(&self, label: DomainIndex) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Free potential over the whole grid with a Dirichlet border ring.
    pub fn free(grid: &GridSpec) -> PotentialField {
        let (nx, ny) = (grid.nx, grid.ny);
        let labels = (0..nx * ny)
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    DomainIndex::Exterior
                } else {
                    DomainIndex::D0
                }
            })
            .collect();
        PotentialField {
            nx,
            ny,
            dx: grid.dx,
            dy: grid.dy,
            origin: grid.origin,
            real: vec![0.0; nx * ny],
            absorb: vec![0.0; nx * ny],
            labels,
        }
    }
}

/// Rasterize the apparatus onto a grid. The outermost ring of cells is always
/// Dirichlet closure.
pub fn rasterize_potential(
    geom: &ApparatusGeometry,
    grid: &GridSpec,
) -> Result<PotentialField, GeometryError> {
    let h = grid.dx.max(grid.dy);
    if geom.wall_skin / h < 4.0 {
        return Err(GeometryError::UnderResolved { what: "wall skin", cells: geom.wall_skin / h });
    }
    if geom.slit_width / h < 4.0 {
        return Err(GeometryError::UnderResolved { what: "slit width", cells: geom.slit_width / h });
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let cells: Vec<(DomainIndex, f64, f64)> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                return (DomainIndex::Exterior, 0.0, 0.0);
            }
            let p = grid.point(i, j);
            let (label, u) = geom.classify(p);
            let gamma = if label == DomainIndex::Box { geom.absorber_at(p) } else { 0.0 };
            (label, u, gamma)
        })
        .collect();
    let mut field = PotentialField {
        nx,
        ny,
        dx: grid.dx,
        dy: grid.dy,
        origin: grid.origin,
        real: Vec::with_capacity(nx * ny),
        absorb: Vec::with_capacity(nx * ny),
        labels: Vec::with_capacity(nx * ny),
    };
    for (label, u, g) in cells {
        field.labels.push(label);
        field.real.push(u);
        field.absorb.push(g);
    }
    Ok(field)
}
