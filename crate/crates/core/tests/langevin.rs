use flywheel_core::coefficients::{default_table, CoefficientTable};
use flywheel_core::langevin::{run, run_streaming, step, IntegratorConfig, PhaseState};
use flywheel_core::{DeviceParams, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn frozen(params: DeviceParams, gamma: f64, diffusion: f64) -> CoefficientTable {
    let xs: Vec<f64> = (0..64).map(|i| -60.0 + 120.0 * i as f64 / 63.0).collect();
    let n = xs.len();
    CoefficientTable::from_samples(params, xs, vec![0.0; n], vec![diffusion; n], vec![gamma; n]).unwrap()
}

/// Variance and its batched-means standard error.
fn batched_variance(series: &[f64], batches: usize) -> (f64, f64) {
    let len = series.len() / batches;
    let vars: Vec<f64> = series
        .chunks_exact(len)
        .map(|c| {
            let m = c.iter().sum::<f64>() / len as f64;
            c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / len as f64
        })
        .collect();
    let mean = vars.iter().sum::<f64>() / vars.len() as f64;
    let sd = (vars.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vars.len() - 1) as f64).sqrt();
    (mean, sd / (vars.len() as f64).sqrt())
}

#[test]
fn frozen_coefficients_give_ou_covariance() {
    let params = DeviceParams::reference(0.0);
    let (gamma, diffusion) = (0.05, 0.01);
    let traj = run(&IntegratorConfig::with_steps(10_000_000, 4), &frozen(params, gamma, diffusion), &params).unwrap();
    let (vx, ex) = batched_variance(&traj.positions, 30);
    let (vv, ev) = batched_variance(&traj.velocities, 30);
    let w2 = params.omega0 * params.omega0;
    let m2 = params.mass * params.mass;
    assert!((vx - diffusion / (2.0 * m2 * gamma * w2)).abs() < 3.0 * ex, "{vx} +- {ex}");
    assert!((vv - diffusion / (2.0 * m2 * gamma)).abs() < 3.0 * ev, "{vv} +- {ev}");
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let params = DeviceParams::reference(6.0);
    let table = default_table(&params).unwrap();
    let config = IntegratorConfig::with_steps(200_000, 99);
    let a = run(&config, &table, &params).unwrap();
    let b = run(&config, &table, &params).unwrap();
    assert_eq!(a, b);
    let c = run(&IntegratorConfig { seed: 100, ..config }, &table, &params).unwrap();
    assert_ne!(a.positions, c.positions);
    assert_eq!(a.len(), 18_000);
    assert!((a.sample_interval() - 0.1).abs() < 1e-12);
}

/// Steady-state Var(x) at step `dt` and at `dt / 2` driven by the same
/// Brownian path: each coarse increment is the sum of two fine ones.
fn coupled_variances(params: &DeviceParams, table: &CoefficientTable, dt: f64, coarse_steps: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut coarse, mut fine) = (PhaseState { x: 0.0, v: 0.0 }, PhaseState { x: 0.0, v: 0.0 });
    let burn = coarse_steps / 10;
    let (mut sc, mut sf, mut count) = ([0.0f64; 2], [0.0f64; 2], 0.0);
    let h = (0.5 * dt).sqrt();
    for i in 0..coarse_steps {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        fine = step(fine, table, params, 0.5 * dt, h * z1).0;
        fine = step(fine, table, params, 0.5 * dt, h * z2).0;
        coarse = step(coarse, table, params, dt, h * (z1 + z2)).0;
        if i >= burn {
            sc[0] += coarse.x;
            sc[1] += coarse.x * coarse.x;
            sf[0] += fine.x;
            sf[1] += fine.x * fine.x;
            count += 1.0;
        }
    }
    let var = |s: [f64; 2]| s[1] / count - (s[0] / count).powi(2);
    (var(sc), var(sf))
}

#[test]
fn halving_time_step_changes_variance_by_under_one_percent() {
    for v in [0.0, 16.0] {
        let params = DeviceParams::reference(v);
        let table = default_table(&params).unwrap();
        for (dt, steps) in [(0.01, 20_000_000), (0.1, 4_000_000)] {
            let (coarse, fine) = coupled_variances(&params, &table, dt, steps);
            let rel = (coarse / fine - 1.0).abs();
            assert!(rel < 0.01, "V={v} dt={dt}: {coarse} vs {fine}");
        }
    }
}

#[test]
fn equilibrium_blob_is_isotropic() {
    let params = DeviceParams::reference(0.0);
    let table = default_table(&params).unwrap();
    let config = IntegratorConfig {
        time_step: 0.1,
        ..IntegratorConfig::with_steps(100_000_000, 21)
    };
    let (x0, p0) = (params.x0(), params.p0());
    let mut s = [0.0f64; 5];
    run_streaming(&config, &table, &params, |_, x, v| {
        let (a, b) = (x / x0, params.mass * v / p0);
        s[0] += 1.0;
        s[1] += a;
        s[2] += a * a;
        s[3] += b;
        s[4] += b * b;
    })
    .unwrap();
    let vx = s[2] / s[0] - (s[1] / s[0]).powi(2);
    let vp = s[4] / s[0] - (s[3] / s[0]).powi(2);
    assert!((vp / vx - 1.0).abs() < 0.05, "{vp} / {vx}");
}

#[test]
fn stability_guards_reject_bad_steps() {
    let params = DeviceParams::reference(0.0);
    let table = frozen(params, 0.05, 0.01);
    let base = IntegratorConfig::with_steps(1000, 0);
    let bad = [
        IntegratorConfig { time_step: 0.25, ..base },
        IntegratorConfig { time_step: 0.0, ..base },
        IntegratorConfig { burn_in_steps: 1000, ..base },
        IntegratorConfig { record_stride: 0, ..base },
    ];
    for c in bad {
        assert!(matches!(run(&c, &table, &params), Err(Error::InvalidParameter { .. })), "{c:?}");
    }
    let stiff = frozen(params, 20.0, 0.01);
    assert!(run(&IntegratorConfig { time_step: 0.01, ..base }, &stiff, &params).is_err());
}
