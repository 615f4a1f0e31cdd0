use stefan_flame::config::{RunConfig, PRESETS};
use stefan_flame::output::read_snapshot;
use stefan_flame::simulation::run_simulation;

#[test]
fn every_preset_round_trips_through_toml() {
    for name in PRESETS {
        let c = RunConfig::preset(name).unwrap();
        let text = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c, "{name}");
        c.validate().unwrap();
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = RunConfig::preset("binary_fick").unwrap().to_toml_string();
    text.push_str("\n[extra]\nvalue = 1\n");
    assert!(RunConfig::from_toml_str(&text).is_err());
}

#[test]
fn run_writes_readable_snapshots_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::preset("binary_fick").unwrap();
    c.grid.nx = 8;
    c.grid.nz = 8;
    c.numerics.t_end = 0.005;
    c.output.snapshot_interval = 5;
    c.output.directory = dir.path().join("run");
    let summary = run_simulation(&c).unwrap();

    let csv = std::fs::read_to_string(summary.time_series.as_ref().unwrap()).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"gibbsEnergy") && header.contains(&"dissipationIntegral"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').take(9).map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), summary.steps + 1);
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));

    let last = read_snapshot(summary.snapshots.last().unwrap()).unwrap();
    assert_eq!(last.dimensions, [8, 8, 1]);
    let y1 = last.scalar("Y1").unwrap();
    let y2 = last.scalar("Y2").unwrap();
    assert!(y1.iter().zip(y2).all(|(a, b)| (a + b - 1.0).abs() <= 1e-12));
    assert!(std::fs::read_dir(&c.output.directory).unwrap().count() >= 3);
}
