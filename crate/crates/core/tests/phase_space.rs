use flywheel_core::phase_space::{radial_profile, GridSpec, RadialProfile, RadialSpec, WignerAccumulator};
use flywheel_core::{DeviceParams, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Scaled samples of a thermal state with mean occupation `nbar`.
fn thermal_samples(nbar: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let g = Normal::new(0.0, ((2.0 * nbar + 1.0) / 4.0).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (g.sample(&mut rng), g.sample(&mut rng))).collect()
}

fn accumulate(samples: &[(f64, f64)], spec: GridSpec) -> WignerAccumulator {
    let mut acc = WignerAccumulator::new(&DeviceParams::reference(0.0), spec);
    for &(a, b) in samples {
        acc.push_scaled(a, b);
    }
    acc
}

#[test]
fn grid_moments_track_sample_moments() {
    let samples = thermal_samples(5.0, 2_000_000, 1);
    let grid = accumulate(&samples, GridSpec::default()).finish().unwrap();
    let g = grid.moments();
    let s = grid.moments;
    assert!((grid.total_mass() - 1.0).abs() < 1e-12);
    assert!((g.mean_x2 / s.mean_x2() - 1.0).abs() < 5e-3);
    assert!((g.mean_p2 / s.mean_p2() - 1.0).abs() < 5e-3);
    assert!((g.mean_x - s.mean_x()).abs() < 5e-3 * s.mean_x2().sqrt());
    assert!((g.mean_p - s.mean_p()).abs() < 5e-3 * s.mean_p2().sqrt());
}

#[test]
fn symmetric_moments_give_occupation_and_coherence() {
    let samples = thermal_samples(5.0, 2_000_000, 2);
    let acc = accumulate(&samples, GridSpec::default());
    assert!((acc.moments().mean_occupation() - 5.0).abs() < 0.05);
    assert!((acc.moments().coherence() - 2.0).abs() < 0.03);
    let vacuum = accumulate(&thermal_samples(0.0, 1_000_000, 3), GridSpec::default());
    assert!(vacuum.moments().mean_occupation().abs() < 2e-3);
}

#[test]
fn radial_profile_is_normalized_and_thermal() {
    let nbar: f64 = 3.0;
    let samples = thermal_samples(nbar, 4_000_000, 4);
    let grid = accumulate(&samples, GridSpec::default()).finish().unwrap();
    let profile = radial_profile(&grid, RadialSpec::default());
    assert!((profile.normalization() - 1.0).abs() < 1e-3);
    assert!(profile.is_symmetric(), "eta = {}", profile.asymmetry);
    let s = 2.0 * nbar + 1.0;
    for (u, w) in profile.centers.iter().zip(&profile.values).take(30) {
        let exact = 2.0 / (std::f64::consts::PI * s) * (-2.0 * u * u / s).exp();
        assert!((w - exact).abs() < 0.03 * exact, "u = {u}: {w} vs {exact}");
    }
    assert!(profile.mode() < 0.3);
}

#[test]
fn ring_has_off_centre_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Normal::new(0.0, 0.7).unwrap();
    let samples: Vec<(f64, f64)> = (0..2_000_000)
        .map(|_| {
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            let r = 6.0 + g.sample(&mut rng);
            (r * th.cos(), r * th.sin())
        })
        .collect();
    let grid = accumulate(&samples, GridSpec::default()).finish().unwrap();
    let profile = radial_profile(&grid, RadialSpec::default());
    assert!((profile.mode() - 6.0).abs() <= 0.25, "mode {}", profile.mode());
    assert!(profile.is_symmetric());
}

#[test]
fn squeezed_distribution_is_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (gx, gp) = (Normal::new(0.0, 3.0).unwrap(), Normal::new(0.0, 1.5).unwrap());
    let samples: Vec<(f64, f64)> = (0..1_000_000).map(|_| (gx.sample(&mut rng), gp.sample(&mut rng))).collect();
    let grid = accumulate(&samples, GridSpec::default()).finish().unwrap();
    assert!(!radial_profile(&grid, RadialSpec::default()).is_symmetric());
}

#[test]
fn merged_blocks_equal_single_pass() {
    let samples = thermal_samples(2.0, 100_000, 7);
    let whole = accumulate(&samples, GridSpec::default());
    let mut merged = accumulate(&samples[..30_000], GridSpec::default());
    merged.merge(&accumulate(&samples[30_000..], GridSpec::default()));
    assert_eq!(merged.total(), whole.total());
    assert_eq!(merged.finish().unwrap().densities, whole.finish().unwrap().densities);
}

#[test]
fn samples_off_the_grid_are_an_error() {
    let samples = thermal_samples(40.0, 100_000, 8);
    let small = GridSpec { half_width: 5.0, bins: 101 };
    assert!(matches!(accumulate(&samples, small).finish(), Err(Error::SamplesOutsideGrid { .. })));
}

#[test]
fn csv_outputs_have_declared_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let grid = accumulate(&thermal_samples(1.0, 10_000, 9), GridSpec { half_width: 6.0, bins: 21 })
        .finish()
        .unwrap();
    let wpath = dir.path().join("wigner.csv");
    grid.write_csv(&wpath).unwrap();
    let text = std::fs::read_to_string(&wpath).unwrap();
    assert!(text.starts_with("x,p,W\n"));
    assert_eq!(text.lines().count(), 1 + 21 * 21);
    assert!(wpath.with_extension("json").exists());

    let profile = radial_profile(&grid, RadialSpec { bin_width: 0.5, max_radius: 6.0 });
    let rpath = dir.path().join("radial.csv");
    profile.write_csv(&rpath).unwrap();
    let back = RadialProfile::read_csv(&rpath).unwrap();
    assert_eq!(back.values, profile.values);
    assert_eq!(back.centers, profile.centers);
}
