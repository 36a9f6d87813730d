use std::path::Path;

use sinai_lab::config::{ExperimentConfig, SlitMode};
use sinai_lab::experiment::{run_experiment, Command, RunOptions, RunOutput};

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn small_simulation() -> ExperimentConfig {
    let src = std::fs::read_to_string(configs().join("arc.toml")).unwrap();
    let mut cfg = ExperimentConfig::parse(&src, "arc.toml").unwrap();
    let grid = cfg.grid.as_mut().unwrap();
    grid.rows = 300;
    grid.dt = None;
    let run = cfg.run.as_mut().unwrap();
    run.t_end = 0.006;
    run.n_steps = None;
    run.film_window = [0.002, 0.006];
    run.snapshot_cadence = 150;
    run.slits = SlitMode::Both;
    // reparse to refill the derived step count
    ExperimentConfig::parse(&cfg.echo().replace("dt = ", "# dt = ").replace("n_steps = ", "# n_steps = "), "small")
        .unwrap()
}

fn run_with(threads: usize, cfg: &ExperimentConfig, command: Command, dir: &Path) -> RunOutput {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_experiment(cfg, command, dir, &RunOptions::default())).unwrap()
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = small_simulation();
    let sid = ExperimentConfig::load(&configs().join("sid_sparse.toml")).unwrap();
    for (name, cfg, command) in [("sim", &sim, Command::Simulate), ("sid", &sid, Command::Sid)] {
        let one = run_with(1, cfg, command, &tmp.path().join(format!("{name}1")));
        let four = run_with(4, cfg, command, &tmp.path().join(format!("{name}4")));
        assert!(!one.checksums.is_empty());
        assert_eq!(one.checksums, four.checksums, "{name}");
    }
}
