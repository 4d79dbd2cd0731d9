use flywheel_core::coefficients::{build_table, find_negative_damping_interval, CoefficientTable};
use flywheel_core::electronic::SteadyState;
use flywheel_core::DeviceParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn core_table(v: f64) -> (DeviceParams, CoefficientTable) {
    let p = DeviceParams::reference(v);
    let reach = 12.0 * p.x0();
    let t = build_table(&p, -reach, reach, 256).unwrap();
    (p, t)
}

#[test]
fn spline_matches_direct_evaluation() {
    let solver = SteadyState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for v in [0.0, 6.0, 16.0] {
        let (p, t) = core_table(v);
        let (mut dn, mut dd, mut dg) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..1000 {
            let x = rng.random_range(t.x_min()..t.x_max());
            let exact = solver.coefficients(x, &p).unwrap();
            let got = t.lookup(x);
            dn = dn.max(((got.occupation - exact.occupation) / exact.occupation).abs());
            dd = dd.max(((got.diffusion - exact.diffusion) / exact.diffusion).abs());
            if exact.damping.abs() > 1e-4 {
                dg = dg.max(((got.damping - exact.damping) / exact.damping).abs());
            }
        }
        assert!(dn < 1e-4 && dd < 1e-4 && dg < 1e-3, "V={v}: n {dn:.2e} D {dd:.2e} gamma {dg:.2e}");
        assert_eq!(t.out_of_range_count(), 0);
    }
}

#[test]
fn above_threshold_set_is_upward_closed() {
    let above: Vec<bool> = [0.0, 2.0, 4.0, 5.0, 6.0, 10.0, 15.0, 16.0]
        .iter()
        .map(|&v| find_negative_damping_interval(&core_table(v).1).is_some())
        .collect();
    let first = above.iter().position(|a| *a).expect("some voltage lases");
    assert!(above[first..].iter().all(|a| *a), "{above:?}");
    assert!(!above[0]);
}

#[test]
fn negative_damping_interval_brackets_sign_change() {
    let (p, t) = core_table(6.0);
    let (lo, hi) = find_negative_damping_interval(&t).unwrap();
    assert!(lo < 0.0 && hi > 0.0);
    let solver = SteadyState::default();
    assert!(solver.damping(0.5 * (lo + hi), &p).unwrap() < 0.0);
    assert!(solver.damping(hi + 0.5 * p.x0(), &p).unwrap() > 0.0);
    assert!(solver.damping(lo - 0.5 * p.x0(), &p).unwrap() > 0.0);
}

#[test]
fn lookups_outside_grid_clamp_and_count() {
    let (_, t) = core_table(0.0);
    let edge = t.lookup(t.x_max());
    let beyond = t.lookup(t.x_max() + 100.0);
    assert!(!edge.clamped && beyond.clamped);
    assert_eq!(beyond.occupation, edge.occupation);
    t.lookup(t.x_min() - 1.0);
    assert_eq!(t.out_of_range_count(), 2);
}

#[test]
fn csv_round_trip_preserves_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coefficients.csv");
    let (_, t) = core_table(4.0);
    t.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x,n_excess,D,gamma\n"));
    let back = CoefficientTable::read_csv(&path).unwrap();
    assert_eq!(back.positions(), t.positions());
    assert_eq!(back.fingerprint(), t.fingerprint());
    assert!(back.damping_values().eq(t.damping_values()));
    assert!(back.diffusion_values().eq(t.diffusion_values()));
}

#[test]
fn tampered_sidecar_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coefficients.csv");
    core_table(0.0).1.write_csv(&path).unwrap();
    let side = path.with_extension("json");
    let text = std::fs::read_to_string(&side).unwrap().replace("\"mass\": 1.0", "\"mass\": 2.0");
    std::fs::write(&side, text).unwrap();
    assert!(CoefficientTable::read_csv(&path).is_err());
}
