//! Quasi-adiabatic Langevin dynamics of the oscillator,
//!
//!   m ẍ + m γ(x) ẋ + m ω₀² x = F ⟨n⟩ₓ + √D(x) ξ(t),
//!
//! integrated with a first-order stochastic Euler scheme against a
//! precomputed [`CoefficientTable`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientTable;
use crate::error::{Error, Result};
use crate::params::DeviceParams;

/// Default steps per voltage.
pub const DEFAULT_STEPS: u64 = 250_000_000;
/// Scaled-down run length for quick checks.
pub const DESK_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub time_step: f64,
    pub n_steps: u64,
    pub burn_in_steps: u64,
    pub seed: u64,
    pub record_stride: u64,
    pub initial_x: f64,
    pub initial_v: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::with_steps(DEFAULT_STEPS, 0)
    }
}

impl IntegratorConfig {
    /// Δt = 0.01, 10% burn-in, every 10th step recorded, start at rest.
    pub fn with_steps(n_steps: u64, seed: u64) -> Self {
        IntegratorConfig {
            time_step: 0.01,
            n_steps,
            burn_in_steps: n_steps / 10,
            seed,
            record_stride: 10,
            initial_x: 0.0,
            initial_v: 0.0,
        }
    }

    pub fn validate(&self, params: &DeviceParams, table: &CoefficientTable) -> Result<()> {
        if !(self.time_step.is_finite() && self.time_step > 0.0) {
            return Err(Error::invalid("time_step", "must be > 0"));
        }
        if self.time_step * params.omega0 >= 0.05 {
            return Err(Error::invalid(
                "time_step",
                format!("dt * omega0 = {} must stay below 0.05", self.time_step * params.omega0),
            ));
        }
        let gamma_dt = self.time_step * table.max_abs_damping();
        if gamma_dt >= 0.1 {
            return Err(Error::invalid("time_step", format!("dt * max|gamma| = {gamma_dt} must stay below 0.1")));
        }
        if self.n_steps <= self.burn_in_steps {
            return Err(Error::invalid("n_steps", "must exceed burn_in_steps"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be >= 1"));
        }
        if !self.initial_x.is_finite() || !self.initial_v.is_finite() {
            return Err(Error::invalid("initial_x", "initial state must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub x: f64,
    pub v: f64,
}

/// One Euler step. `dw` is a Gaussian increment of variance Δt.
///
/// The velocity takes the full Euler update from the state at t; the
/// position then advances with the updated velocity, which keeps the
/// harmonic part area-preserving.
#[inline]
pub fn step(
    state: PhaseState,
    table: &CoefficientTable,
    params: &DeviceParams,
    dt: f64,
    dw: f64,
) -> (PhaseState, bool) {
    let c = table.lookup(state.x);
    let accel = -params.omega0 * params.omega0 * state.x - c.damping * state.v
        + params.force() * c.occupation / params.mass;
    let v = state.v + accel * dt + c.diffusion.sqrt() / params.mass * dw;
    let x = state.x + v * dt;
    (PhaseState { x, v }, c.clamped)
}

/// Totals from a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub recorded: u64,
    pub clamp_count: u64,
    pub seed: u64,
}

impl RunStats {
    pub fn clamp_fraction(&self) -> f64 {
        self.clamp_count as f64 / self.steps.max(1) as f64
    }
}

/// Integrates and hands every recorded post-burn-in sample `(t, x, v)` to
/// `sink`. Nothing is stored, so arbitrarily long runs are fine.
pub fn run_streaming<S>(config: &IntegratorConfig, table: &CoefficientTable, params: &DeviceParams, mut sink: S) -> Result<RunStats>
where
    S: FnMut(f64, f64, f64),
{
    config.validate(params, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dt = config.time_step;
    let sqrt_dt = dt.sqrt();
    let mut state = PhaseState {
        x: config.initial_x,
        v: config.initial_v,
    };
    let mut clamp_count = 0u64;
    let mut recorded = 0u64;
    let mut until_record = config.record_stride;
    for i in 0..config.n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let (next, clamped) = step(state, table, params, dt, sqrt_dt * z);
        if !(next.x.is_finite() && next.v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: i,
                x: next.x,
                v: next.v,
            });
        }
        state = next;
        clamp_count += clamped as u64;
        if i >= config.burn_in_steps {
            until_record -= 1;
            if until_record == 0 {
                until_record = config.record_stride;
                sink((i + 1) as f64 * dt, state.x, state.v);
                recorded += 1;
            }
        }
    }
    let stats = RunStats {
        steps: config.n_steps,
        recorded,
        clamp_count,
        seed: config.seed,
    };
    if stats.clamp_fraction() > 1e-3 {
        log::warn!(
            "{:.3}% of steps left the coefficient grid [{}, {}]",
            100.0 * stats.clamp_fraction(),
            table.x_min(),
            table.x_max()
        );
    }
    Ok(stats)
}

/// Recorded post-burn-in samples of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub clamp_count: u64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Time between consecutive recorded samples.
    pub fn sample_interval(&self) -> f64 {
        match self.times.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }
}

pub fn run(config: &IntegratorConfig, table: &CoefficientTable, params: &DeviceParams) -> Result<Trajectory> {
    let expected = ((config.n_steps - config.burn_in_steps.min(config.n_steps)) / config.record_stride.max(1)) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(expected),
        positions: Vec::with_capacity(expected),
        velocities: Vec::with_capacity(expected),
        clamp_count: 0,
        seed: config.seed,
    };
    let stats = run_streaming(config, table, params, |t, x, v| {
        traj.times.push(t);
        traj.positions.push(x);
        traj.velocities.push(v);
    })?;
    traj.clamp_count = stats.clamp_count;
    Ok(traj)
}

/// Stationary autocovariance of x at lags 0..=max_lag (in recorded
/// samples), computed by zero-padded FFT.
pub fn position_autocorrelation(trajectory: &Trajectory, max_lag: usize) -> Result<Vec<f64>> {
    autocovariance(&trajectory.positions, max_lag)
}

pub fn autocovariance(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag > n / 2 {
        return Err(Error::LagTooLarge { max_lag, len: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    Ok((0..=max_lag).map(|k| buf[k].re / size as f64 / n as f64).collect())
}

/// Time-scale separation of the quasi-adiabatic treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticityReport {
    /// min(k_B T, Γ) over both leads.
    pub electronic_scale: f64,
    /// max(ω₀, |λ|).
    pub mechanical_scale: f64,
    pub ratio: f64,
    pub warning: bool,
}

pub const ADIABATIC_RATIO_WARNING: f64 = 5.0;

/// Ratio min(1/β, Γ) / max(ω₀, |λ|); warns below 5 but never fails.
pub fn check_adiabaticity(params: &DeviceParams) -> AdiabaticityReport {
    let electronic_scale = params
        .leads()
        .iter()
        .map(|l| (1.0 / l.beta).min(l.coupling))
        .fold(f64::INFINITY, f64::min);
    let mechanical_scale = params.omega0.max(params.coupling_energy.abs());
    let ratio = electronic_scale / mechanical_scale;
    let warning = ratio < ADIABATIC_RATIO_WARNING;
    if warning {
        log::warn!("quasi-adiabatic ratio {ratio:.3} is below {ADIABATIC_RATIO_WARNING}");
    }
    AdiabaticityReport {
        electronic_scale,
        mechanical_scale,
        ratio,
        warning,
    }
}
