use sinai_lab::geometry::{build_apparatus, rasterize_potential, ApparatusConfig, DomainIndex, PotentialField};
use sinai_lab::screen::FilmRecorder;
use sinai_lab::solver::{evolve, init_gaussian, GaussianPacketSpec, GridSpec, RegionProbe, Stepper};

/// Triangle only (no box), slits sealed, h = 0.01.
fn closed_triangle() -> (GridSpec, PotentialField) {
    let geom = build_apparatus(&ApparatusConfig { open_slits: [false, false], ..Default::default() }).unwrap();
    let grid = GridSpec::new(131, 131, 0.01, 0.01, [-0.15, -0.15]);
    let pot = rasterize_potential(&geom, &grid).unwrap();
    (grid, pot)
}

fn packet() -> GaussianPacketSpec {
    GaussianPacketSpec { center: [0.35, 0.3], sigma: 0.05, k0: [25.0, -15.0] }
}

#[test]
fn closed_norm_drift_per_thousand_steps() {
    let (grid, pot) = closed_triangle();
    let mut f = init_gaussian(&packet(), &grid, &pot).unwrap();
    let mut st = Stepper::new(&pot, &grid).unwrap();
    for _ in 0..1000 {
        st.step(&mut f).unwrap();
    }
    assert!((f.norm() - 1.0).abs() < 1e-8, "drift {:e}", f.norm() - 1.0);
}

#[test]
fn closed_energy_drift_over_ten_thousand_steps() {
    let (grid, pot) = closed_triangle();
    let mut f = init_gaussian(&packet(), &grid, &pot).unwrap();
    let e0 = f.energy(&pot, &grid);
    let mut st = Stepper::new(&pot, &grid).unwrap();
    for _ in 0..10_000 {
        st.step(&mut f).unwrap();
    }
    let e1 = f.energy(&pot, &grid);
    assert!((e1 / e0 - 1.0).abs() < 1e-3, "{e0} -> {e1}");
}

#[test]
fn forward_then_backward_returns_the_initial_state() {
    let (grid, pot) = closed_triangle();
    let f0 = init_gaussian(&packet(), &grid, &pot).unwrap();
    let mut f = f0.clone();
    let mut fwd = Stepper::new(&pot, &grid).unwrap();
    let mut back = Stepper::with_dt(&pot, &grid, -grid.dt).unwrap();
    for _ in 0..800 {
        fwd.step(&mut f).unwrap();
    }
    for _ in 0..800 {
        back.step(&mut f).unwrap();
    }
    let overlap: num_complex::Complex64 = f0.psi.iter().zip(&f.psi).map(|(a, b)| a.conj() * b).sum();
    let fid = overlap.norm() * grid.cell_area();
    assert!(fid > 1.0 - 1e-6, "fidelity {fid}");
}

#[test]
fn absorber_alone_removes_the_packet() {
    // free region whose lowest absorber_width carries the golden absorber ramp
    let h = 0.01;
    let grid = GridSpec::new(121, 161, h, h, [-0.6, -0.8]);
    let mut pot = PotentialField::free(&grid);
    let cfg = ApparatusConfig::default();
    let (w, eta) = (cfg.absorber_width, cfg.absorber_strength);
    let floor = grid.origin[1] + w;
    for j in 0..grid.ny {
        let y = grid.point(0, j)[1];
        let depth = floor - y;
        if depth > 0.0 {
            let g = eta * (depth / w).min(1.0).powi(4);
            for i in 0..grid.nx {
                pot.absorb[j * grid.nx + i] = g;
            }
        }
    }
    let spec = GaussianPacketSpec { center: [0.0, 0.3], sigma: 0.06, k0: [0.0, -60.0] };
    let f = init_gaussian(&spec, &grid, &pot).unwrap();
    let mut st = Stepper::new(&pot, &grid).unwrap();
    let n = (0.05 / grid.dt).ceil() as usize;
    let res = evolve(f, &mut st, n, &mut []).unwrap();
    assert!(res.field.norm() < 1e-3, "remaining {}", res.field.norm());
}

#[test]
fn open_run_leaks_into_box_and_film_is_cadence_consistent() {
    let geom = build_apparatus(&ApparatusConfig::default()).unwrap();
    let b = geom.bounds();
    let h = (b[3] - b[2]) / 381.0;
    let grid0 = geom.covering_grid(h, h);
    let grid = grid0.with_dt(4.0 * grid0.dt);
    let pot = rasterize_potential(&geom, &grid).unwrap();
    let spec = GaussianPacketSpec { center: [0.5, 0.16], sigma: 0.03, k0: [0.0, -60.0] };
    let f = init_gaussian(&spec, &grid, &pot).unwrap();
    let mut st = Stepper::new(&pot, &grid).unwrap();
    let row = grid.row_of(geom.film_y());
    let window = (0.02, 0.1);
    let mut film4 = FilmRecorder::new(&grid, row, window, 4).unwrap();
    let mut film8 = FilmRecorder::new(&grid, row, window, 8).unwrap();
    let mut probe = RegionProbe::for_label(20, &pot, DomainIndex::Box);
    let n = 8 * (0.1 / (8.0 * grid.dt)).ceil() as usize;
    evolve(f, &mut st, n, &mut [&mut film4, &mut film8, &mut probe]).unwrap();

    // only the Gaussian tail is in the box before the packet reaches the base
    let first = probe.samples[0];
    assert!(first.2 < 1e-4, "{first:?}");
    let leaked = probe.samples.iter().map(|s| s.2).fold(0.0, f64::max);
    assert!(leaked > 1e-3 && leaked > 100.0 * first.2, "box mass {leaked}");

    let (a, b) = (film4.record(), film8.record());
    let peak = a.p.iter().fold(0.0f64, |m, &v| m.max(v));
    assert!(peak > 0.0);
    let worst = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst / peak < 1e-3, "relative change {}", worst / peak);
}

fn film_at(h: f64, t_end: f64, window: (f64, f64)) -> sinai_lab::screen::ScreenRecord {
    let geom = build_apparatus(&ApparatusConfig::default()).unwrap();
    let grid0 = geom.covering_grid(h, h);
    let grid = grid0.with_dt(4.0 * grid0.dt);
    let pot = rasterize_potential(&geom, &grid).unwrap();
    let spec = GaussianPacketSpec { center: [0.5, 0.16], sigma: 0.03, k0: [0.0, -60.0] };
    let f = init_gaussian(&spec, &grid, &pot).unwrap();
    let mut st = Stepper::new(&pot, &grid).unwrap();
    let mut film = FilmRecorder::new(&grid, grid.row_of(geom.film_y()), window, 4).unwrap();
    let n = (t_end / grid.dt).ceil() as usize;
    evolve(f, &mut st, n, &mut [&mut film]).unwrap();
    film.record()
}

fn interp(xs: &[f64], p: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x).clamp(1, xs.len() - 1);
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    (1.0 - w) * p[k - 1] + w * p[k]
}

// Measured 0.957 (h = 0.01 vs 0.005). The slit jaws are sharp on the grid
// scale, so the pattern shifts with node alignment; a half-cell shift of
// the fine grid alone gives 0.988. Takes about two minutes in release.
#[test]
#[ignore = "known to fail: staircase slit edges, see README"]
fn film_pattern_is_refinement_consistent() {
    let window = (0.05, 0.12);
    let coarse = film_at(0.01, 0.12, window);
    let fine = film_at(0.005, 0.12, window);
    let on_coarse: Vec<f64> = coarse.xs.iter().map(|&x| interp(&fine.xs, &fine.p, x)).collect();
    let fine = sinai_lab::screen::ScreenRecord::new(coarse.xs.clone(), on_coarse, window);
    let r = sinai_lab::screen::pattern_correlation(&coarse, &fine).unwrap();
    assert!(r > 0.98, "correlation {r}");
}
