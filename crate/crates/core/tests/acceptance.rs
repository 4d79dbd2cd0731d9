//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance`. The sweep integrates
//! 5e8 steps per voltage; set `FLYWHEEL_ACCEPTANCE_STEPS` to shorten it.

use std::f64::consts::PI;
use std::process::ExitCode;

use flywheel_core::coefficients::{build_table, find_negative_damping_interval, find_threshold_voltage, CoefficientTable};
use flywheel_core::config::RunConfig;
use flywheel_core::electronic::SteadyState;
use flywheel_core::langevin::{run_streaming, IntegratorConfig};
use flywheel_core::phase_space::RadialProfile;
use flywheel_core::reconstruction::reconstruct_populations;
use flywheel_core::sweep::{run_sweep, VoltageResult, SUMMARY_FILE, UNCERTAINTY_FILE};
use flywheel_core::DeviceParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SWEEP: [f64; 7] = [0.0, 2.0, 4.0, 5.0, 6.0, 10.0, 16.0];
/// First sweep voltage above the bisected threshold (≈ 4.23).
const JUST_ABOVE: f64 = 5.0;
/// Radial resolution of the synthetic oracle profiles.
const ORACLE_BIN: f64 = 0.02;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn table(params: &DeviceParams) -> CoefficientTable {
    let reach = 12.0 * params.x0();
    build_table(params, -reach, reach, 256).expect("table")
}

fn fdt_ratio() -> Verdict {
    let params = DeviceParams::reference(0.0);
    let mut worst: f64 = 0.0;
    for t in [table(&params), flywheel_core::coefficients::default_table(&params).unwrap()] {
        for (d, g) in t.diffusion_values().zip(t.damping_values()) {
            worst = worst.max((d / (params.mass * g) / 4.0 - 1.0).abs());
        }
    }
    verdict(worst < 0.02, format!("max |D/(m gamma) / 4 - 1| = {worst:.3e} over all nodes"))
}

fn detailed_balance() -> Verdict {
    let params = DeviceParams::reference(0.0);
    let solver = SteadyState::default();
    let x0 = params.x0();
    let mut worst: f64 = 0.0;
    for x in [0.0, 2.0 * x0, -2.0 * x0] {
        for w in [0.1, 0.3, 1.0] {
            let ratio = solver.noise_spectrum(x, -w, &params).unwrap() / solver.noise_spectrum(x, w, &params).unwrap();
            worst = worst.max((ratio / (-0.5 * w).exp() - 1.0).abs());
        }
    }
    verdict(worst < 0.01, format!("max relative deviation {worst:.3e}"))
}

fn sum_rule() -> Verdict {
    let solver = SteadyState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v = rng.random_range(0.0..16.0);
        let params = DeviceParams::reference(v);
        let x = rng.random_range(-12.0..12.0) * params.x0();
        worst = worst.max((solver.sum_rule(x, &params).unwrap() - 1.0).abs());
    }
    verdict(worst <= 1e-6, format!("max |sum - 1| = {worst:.3e} over 20 random (x, V)"))
}

fn threshold() -> Verdict {
    let interval = |v: f64| find_negative_damping_interval(&table(&DeviceParams::reference(v)));
    let absent = interval(0.0).is_none();
    let present: Vec<bool> = [6.0, 15.0, 16.0].iter().map(|&v| interval(v).is_some()).collect();
    let v_star = find_threshold_voltage(DeviceParams::reference, 0.0, 6.0, 1e-3, 256).unwrap();
    let ok = absent && present.iter().all(|p| *p) && v_star.is_some_and(|v| v > 0.0 && v < 6.0);
    verdict(ok, format!("V=0 interval absent: {absent}; V=6,15,16 present: {present:?}; V* = {v_star:?}"))
}

fn by_voltage(results: &[VoltageResult], v: f64) -> &VoltageResult {
    results.iter().find(|r| r.voltage == v).expect("sweep voltage")
}

fn annulus(results: &[VoltageResult]) -> Verdict {
    let (m0, m6, m16) = (
        by_voltage(results, 0.0).profile_mode,
        by_voltage(results, 6.0).profile_mode,
        by_voltage(results, 16.0).profile_mode,
    );
    let ok = m0 <= 0.1 && m6 > 1.0 && m16 > m6;
    verdict(ok, format!("mode u: V=0 {m0:.2}, V=6 {m6:.2}, V=16 {m16:.2}"))
}

fn coherence(results: &[VoltageResult]) -> Verdict {
    let (a, b) = (by_voltage(results, 0.0), by_voltage(results, 16.0));
    let (g0, g16) = (a.report.g2.unwrap_or(f64::NAN), b.report.g2.unwrap_or(f64::NAN));
    let (e0, e16) = (a.uncertainty.g2, b.uncertainty.g2);
    let ok = (g0 - 2.0).abs() <= 0.2 && (1.3..=1.7).contains(&g16) && g0 - g16 > e0 + e16;
    verdict(ok, format!("g2(0) = {g0:.4} +- {e0:.4}, g2(16) = {g16:.4} +- {e16:.4} (band [1.3, 1.7])"))
}

fn ergotropy_order(results: &[VoltageResult], v_star: f64, omega0: f64) -> Verdict {
    let below: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.voltage < v_star)
        .map(|r| (r.voltage, r.report.ergotropy))
        .collect();
    let quiet = below.iter().all(|(_, w)| *w < 1e-3 * omega0);
    let chain: Vec<&VoltageResult> = [JUST_ABOVE, 10.0, 16.0].iter().map(|&v| by_voltage(results, v)).collect();
    let rising = chain.windows(2).all(|w| {
        let sigma = w[0].uncertainty.ergotropy.hypot(w[1].uncertainty.ergotropy);
        w[1].report.ergotropy >= w[0].report.ergotropy - 3.0 * sigma
    });
    let w16 = by_voltage(results, 16.0).report.ergotropy;
    let ok = quiet && rising && w16 > 0.1 * omega0;
    let listed: Vec<String> = below.iter().map(|(v, w)| format!("V={v}: {w:.3e}")).collect();
    verdict(
        ok,
        format!(
            "below V* [{}] (limit {:.1e}); W_E at {JUST_ABOVE}, 10, 16: {:.3e}, {:.3e}, {:.3e}",
            listed.join(", "),
            1e-3 * omega0,
            chain[0].report.ergotropy,
            chain[1].report.ergotropy,
            chain[2].report.ergotropy
        ),
    )
}

fn work_ordering(results: &[VoltageResult], v_star: f64) -> Verdict {
    let ordered = results
        .iter()
        .all(|r| 0.0 <= r.report.ergotropy && r.report.ergotropy <= r.report.free_energy_work);
    let near = results
        .iter()
        .filter(|r| r.voltage < v_star)
        .max_by(|a, b| a.voltage.total_cmp(&b.voltage))
        .expect("a sweep voltage below threshold");
    let ok = ordered && near.report.free_energy_work > 0.0;
    verdict(
        ok,
        format!("0 <= W_E <= W_F everywhere: {ordered}; W_F(V={}) = {:.4e}", near.voltage, near.report.free_energy_work),
    )
}

fn entropy(results: &[VoltageResult]) -> Verdict {
    let s: Vec<(f64, f64)> = [0.0, 2.0, 4.0, 6.0, 10.0, 16.0]
        .iter()
        .map(|&v| {
            let r = by_voltage(results, v);
            (r.report.entropy, r.uncertainty.entropy)
        })
        .collect();
    let monotone = s.windows(2).all(|w| w[1].0 >= w[0].0 - 3.0 * w[0].1.hypot(w[1].1));
    let early = (s[3].0 - s[0].0) / s[0].0;
    let late = (s[5].0 - s[4].0) / s[4].0;
    let values: Vec<String> = s.iter().map(|(v, e)| format!("{v:.3}+-{e:.3}")).collect();
    verdict(
        monotone && late < early,
        format!("S = [{}]; rel. change 0->6 {early:.3}, 10->16 {late:.3}", values.join(", ")),
    )
}

fn reconstruction_oracles() -> Verdict {
    let omega0 = 0.2;
    let thermal_nbar: f64 = 2.0;
    let thermal = RadialProfile::from_fn(ORACLE_BIN, 25.0, |u| {
        let s = 2.0 * thermal_nbar + 1.0;
        2.0 / (PI * s) * (-2.0 * u * u / s).exp()
    });
    // coherent state |α = 2⟩, angular average by the periodic trapezoid rule
    let poisson = RadialProfile::from_fn(ORACLE_BIN, 25.0, |u| {
        let m = 2048;
        (0..m)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / m as f64;
                let d2 = (u * th.cos() - 2.0).powi(2) + (u * th.sin()).powi(2);
                2.0 / PI * (-2.0 * d2).exp()
            })
            .sum::<f64>()
            / m as f64
    });
    let vacuum = RadialProfile::from_fn(ORACLE_BIN, 25.0, |u| 2.0 / PI * (-2.0 * u * u).exp());

    let max_err = |profile: &RadialProfile, exact: &dyn Fn(usize) -> f64| {
        let state = reconstruct_populations(profile, 64, omega0).unwrap();
        state
            .populations
            .iter()
            .enumerate()
            .map(|(n, p)| (p - exact(n)).abs())
            .fold(0.0, f64::max)
    };
    let e_thermal = max_err(&thermal, &|n| thermal_nbar.powi(n as i32) / (1.0 + thermal_nbar).powi(n as i32 + 1));
    let e_poisson = max_err(&poisson, &|n| {
        let ln = n as f64 * 4f64.ln() - 4.0 - (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
        ln.exp()
    });
    let p0 = reconstruct_populations(&vacuum, 64, omega0).unwrap().populations[0];
    let ok = e_thermal < 1e-3 && e_poisson < 5e-3 && (p0 - 1.0).abs() < 1e-3;
    verdict(ok, format!("thermal max err {e_thermal:.2e}, Poisson max err {e_poisson:.2e}, vacuum p0 = {p0:.6}"))
}

fn ou_oracle() -> Verdict {
    let params = DeviceParams::reference(0.0);
    let (gamma, diff) = (0.05, 0.01);
    let xs: Vec<f64> = (0..64).map(|i| -60.0 + 120.0 * i as f64 / 63.0).collect();
    let n = xs.len();
    let t = CoefficientTable::from_samples(params, xs, vec![0.0; n], vec![diff; n], vec![gamma; n]).unwrap();
    let config = IntegratorConfig::with_steps(10_000_000, 11);
    let batches = 30;
    let per_batch = ((config.n_steps - config.burn_in_steps) / config.record_stride) as usize / batches;
    let mut sums = vec![[0.0f64; 5]; batches];
    let mut k = 0usize;
    run_streaming(&config, &t, &params, |_, x, v| {
        let b = (k / per_batch).min(batches - 1);
        let s = &mut sums[b];
        s[0] += 1.0;
        s[1] += x;
        s[2] += x * x;
        s[3] += v;
        s[4] += v * v;
        k += 1;
    })
    .unwrap();
    let var_of = |i: usize| -> Vec<f64> { sums.iter().map(|s| s[i + 1] / s[0] - (s[i] / s[0]).powi(2)).collect() };
    let m2w2 = params.mass * params.mass * params.omega0 * params.omega0;
    let exact = [diff / (2.0 * m2w2 * gamma), diff / (2.0 * params.mass * params.mass * gamma)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, name) in [(1, "x"), (3, "v")] {
        let vals = var_of(i);
        let mean = vals.iter().sum::<f64>() / batches as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
        let err = sd / (batches as f64).sqrt();
        let target = exact[i / 2];
        ok &= (mean - target).abs() <= 3.0 * err;
        parts.push(format!("Var({name}) = {mean:.4} +- {err:.4} (exact {target:.4})"));
    }
    verdict(ok, parts.join(", "))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::default();
    config.voltages = vec![0.0, 6.0, 16.0];
    config.integrator.time_step = 0.1;
    config.integrator.n_steps = 2_000_000;
    let run = |workers: usize, name: &str| {
        let mut c = config.clone();
        c.workers = workers;
        c.out_dir = dir.path().join(name);
        let outcome = run_sweep(&c).unwrap();
        assert_eq!(outcome.failures(), 0);
        [SUMMARY_FILE, UNCERTAINTY_FILE].map(|f| std::fs::read(c.out_dir.join(f)).unwrap())
    };
    let a = run(1, "a");
    let b = run(1, "b");
    let c = run(4, "c");
    verdict(
        a == b && a == c,
        format!("repeat identical: {}; 1 vs 4 workers identical: {}", a == b, a == c),
    )
}

fn main() -> ExitCode {
    let steps: u64 = std::env::var("FLYWHEEL_ACCEPTANCE_STEPS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(500_000_000);
    let mut config = RunConfig::default();
    config.voltages = SWEEP.to_vec();
    config.integrator.time_step = 0.1;
    config.integrator.n_steps = steps;
    let out = tempfile::tempdir().unwrap();
    config.out_dir = out.path().to_path_buf();

    let v_star = find_threshold_voltage(|v| config.device.params_at(v), 0.0, 6.0, 1e-3, 256)
        .unwrap()
        .expect("threshold inside (0, 6)");
    let outcome = run_sweep(&config).expect("sweep");
    let results: Vec<VoltageResult> = outcome.results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let complete = results.len() == SWEEP.len();
    let omega0 = config.device.omega0;
    let from_sweep = |f: &dyn Fn(&[VoltageResult]) -> Verdict| {
        if complete {
            f(&results)
        } else {
            verdict(false, format!("{} of {} sweep voltages failed", outcome.failures(), SWEEP.len()))
        }
    };

    let criteria: Vec<(&str, Verdict)> = vec![
        ("equilibrium FDT ratio", fdt_ratio()),
        ("detailed balance", detailed_balance()),
        ("spectral sum rule", sum_rule()),
        ("threshold structure", threshold()),
        ("lasing annulus", from_sweep(&annulus)),
        ("g2 curve", from_sweep(&coherence)),
        ("ergotropy order parameter", from_sweep(&|r| ergotropy_order(r, v_star, omega0))),
        ("work ordering", from_sweep(&|r| work_ordering(r, v_star))),
        ("entropy behaviour", from_sweep(&entropy)),
        ("reconstruction oracles", reconstruction_oracles()),
        ("SDE oracle", ou_oracle()),
        ("determinism", determinism()),
    ];

    println!("sweep: {} steps per voltage, dt = {}, V* = {v_star:.4}", steps, config.integrator.time_step);
    for r in &results {
        println!(
            "  V = {:<4} nbar = {:.3} g2 = {:.4} S = {:.4} W_E = {:.3e} W_F = {:.3e} mode = {:.2} clipped = {:.1e}",
            r.voltage,
            r.report.nbar,
            r.report.g2.unwrap_or(f64::NAN),
            r.report.entropy,
            r.report.ergotropy,
            r.report.free_energy_work,
            r.profile_mode,
            r.clipped_mass
        );
    }
    let mut failed = 0;
    for (i, (name, v)) in criteria.iter().enumerate() {
        failed += !v.pass as usize;
        println!("{} criterion {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
