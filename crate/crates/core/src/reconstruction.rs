//! Diagonal density matrix from a radially symmetric Wigner profile.
//!
//! The profile is first mapped to its radial characteristic function
//! χ(r) = 2π ∫ u J₀(2ru) W(u) du, and populations follow from
//! p_n = 2 ∫ r χ(r) e^{−r²/2} L_n(r²) dr. Both integrals use the density
//! convention ∫ W d²α = 1 of [`crate::phase_space`].

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_json, write_text};
use crate::phase_space::RadialProfile;
use crate::quadrature::{composite_kronrod, Quadrature};

/// Largest population allowed in the last retained level.
pub const TAIL_TOLERANCE: f64 = 1e-6;
/// Clipped negative mass above which the reconstruction is suspect.
pub const CLIP_WARNING: f64 = 1e-2;

/// Fills `out[k] = e^{−x/2} L_k(x)` for k = 0..=n_max by upward recurrence.
pub fn laguerre_functions(x: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(n_max + 1);
    let w = (-0.5 * x).exp();
    out.push(w);
    if n_max == 0 {
        return;
    }
    out.push((1.0 - x) * w);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
}

/// χ(r) of the piecewise-constant profile. The u J₀(2ru) kernel is
/// integrated exactly over each bin, ∫ u J₀(2ru) du = u J₁(2ru) / 2r, so
/// the sum telescopes to one Bessel evaluation per bin edge.
pub fn characteristic_at(profile: &RadialProfile, r: f64) -> f64 {
    let h = profile.bin_width;
    let values = &profile.values;
    // edge k+1 separates bin k from bin k+1
    let jump = |k: usize| values[k] - values.get(k + 1).copied().unwrap_or(0.0);
    if r < 1e-9 {
        let s: f64 = (0..values.len()).map(|k| jump(k) * ((k + 1) as f64 * h).powi(2)).sum();
        return PI * s;
    }
    let s: f64 = (0..values.len())
        .map(|k| {
            let e = (k + 1) as f64 * h;
            jump(k) * e * libm::j1(2.0 * r * e)
        })
        .sum();
    PI * s / r
}

/// Radial characteristic function sampled at `radii`.
pub fn characteristic_from_radial(profile: &RadialProfile, radii: &[f64]) -> Vec<f64> {
    radii.par_iter().map(|&r| characteristic_at(profile, r)).collect()
}

/// Controls for the population transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionSettings {
    /// Upper limit of the r integral; e^{−r²/2} is below 1e−13 there.
    pub r_max: f64,
    pub initial_n_max: usize,
    pub max_n_max: usize,
    pub tail_tolerance: f64,
    /// Width σ (per quadrature, in units of x₀ and p₀) of a Gaussian applied
    /// to sampled profiles before the transform. Suppresses the sampling
    /// noise that the Fock-state kernels otherwise spread over high levels;
    /// adds 2σ² to n̄. Zero gives the unsmoothed transform.
    pub smoothing: f64,
}

impl Default for ReconstructionSettings {
    fn default() -> Self {
        ReconstructionSettings {
            r_max: 8.0,
            initial_n_max: 64,
            max_n_max: 8192,
            tail_tolerance: TAIL_TOLERANCE,
            smoothing: 0.2,
        }
    }
}

fn panel_count(profile: &RadialProfile, n_max: usize, r_max: f64) -> usize {
    let u_max = profile.centers.last().copied().unwrap_or(0.0);
    // highest angular frequency in r of J0(2ru) times the Laguerre function
    let k = 2.0 * u_max + 2.0 * (n_max as f64).sqrt() + 2.0;
    ((r_max * k / 2.0).ceil() as usize).max(64)
}

/// Characteristic function of the isotropic Gaussian of width `sigma`.
#[inline]
fn window(sigma: f64, r: f64) -> f64 {
    (-2.0 * sigma * sigma * r * r).exp()
}

/// Unclipped populations p_0..=p_{n_max} via χ on composite Kronrod nodes,
/// after Gaussian smoothing of width `smoothing`.
pub fn raw_populations(profile: &RadialProfile, n_max: usize, r_max: f64, smoothing: f64) -> Vec<f64> {
    let (nodes, weights) = composite_kronrod(0.0, r_max, panel_count(profile, n_max, r_max));
    let chi = characteristic_from_radial(profile, &nodes);
    // fixed chunks summed in order keep the result independent of the
    // number of worker threads
    let partials: Vec<Vec<f64>> = (0..nodes.len())
        .collect::<Vec<_>>()
        .par_chunks(256)
        .map(|idx| {
            let mut acc = vec![0.0; n_max + 1];
            let mut lag = Vec::with_capacity(n_max + 1);
            for &i in idx {
                let r = nodes[i];
                laguerre_functions(r * r, n_max, &mut lag);
                let f = 2.0 * weights[i] * r * chi[i] * window(smoothing, r);
                for (a, l) in acc.iter_mut().zip(&lag) {
                    *a += f * l;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n_max + 1];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

/// Same populations from the double integral taken in one pass per level:
/// the u integral is evaluated inside an adaptive r integral.
pub fn raw_populations_fused(
    profile: &RadialProfile,
    n_max: usize,
    r_max: f64,
    smoothing: f64,
    quadrature: &Quadrature,
) -> Result<Vec<f64>> {
    let breaks: Vec<f64> = {
        let panels = panel_count(profile, n_max, r_max) / 4;
        (0..=panels).map(|k| r_max * k as f64 / panels as f64).collect()
    };
    (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let mut lag = Vec::with_capacity(n + 1);
            let f = |r: f64| {
                laguerre_functions(r * r, n, &mut lag);
                2.0 * r * window(smoothing, r) * lag[n] * characteristic_at(profile, r)
            };
            quadrature
                .integrate_breaks(f, &breaks)
                .map(|e| e.value)
                .map_err(|e| Error::Quadrature {
                    what: "population",
                    x: n as f64,
                    error: e.estimate.error,
                    tolerance: e.tolerance,
                })
        })
        .collect()
}

/// Truncated diagonal density matrix in the oscillator's number basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalState {
    pub populations: Vec<f64>,
    /// Values before clipping, kept for diagnostics.
    pub raw_populations: Vec<f64>,
    pub omega0: f64,
    pub n_max: usize,
    pub renormalized: bool,
    pub clipped_mass: f64,
    /// Azimuthal asymmetry of the source profile.
    pub asymmetry: f64,
}

impl DiagonalState {
    /// Exact populations, e.g. from a closed form; must be nonnegative and
    /// sum to one.
    pub fn new(populations: Vec<f64>, omega0: f64) -> Result<Self> {
        if populations.is_empty() || populations.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("populations", "must be nonempty and nonnegative"));
        }
        let total: f64 = populations.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("populations", format!("sum to {total}, not 1")));
        }
        Ok(DiagonalState {
            n_max: populations.len() - 1,
            raw_populations: populations.clone(),
            populations,
            omega0,
            renormalized: false,
            clipped_mass: 0.0,
            asymmetry: 0.0,
        })
    }

    /// Clips negative entries to zero and renormalizes.
    pub fn from_raw(raw: Vec<f64>, omega0: f64, asymmetry: f64) -> Result<Self> {
        let clipped_mass: f64 = raw.iter().filter(|p| **p < 0.0).map(|p| -p).sum();
        let mut populations: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
        let total: f64 = populations.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("populations", "no positive mass after clipping"));
        }
        for p in &mut populations {
            *p /= total;
        }
        if clipped_mass > CLIP_WARNING {
            log::warn!("reconstruction clipped {clipped_mass:.3e} of negative population");
        }
        Ok(DiagonalState {
            n_max: raw.len() - 1,
            raw_populations: raw,
            populations,
            omega0,
            renormalized: true,
            clipped_mass,
            asymmetry,
        })
    }

    pub fn mean_occupation(&self) -> f64 {
        mean_occupation(self)
    }

    /// CSV `n,p_n` plus `<stem>.json` with the truncation diagnostics.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("n,p_n\n");
        for (n, p) in self.populations.iter().enumerate() {
            out.push_str(&format!("{n},{}\n", fmt_f64(*p)));
        }
        write_text(path, &out)?;
        write_json(
            &path.with_extension("json"),
            &PopulationSidecar {
                n_max: self.n_max,
                clipped_mass: self.clipped_mass,
                eta: self.asymmetry,
                omega0: self.omega0,
                renormalized: self.renormalized,
            },
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let format = |reason: String| Error::Format {
            what: "populations",
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("n,p_n") {
            return Err(format("expected header `n,p_n`".into()));
        }
        let mut populations = Vec::new();
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let (n, p) = line.split_once(',').ok_or_else(|| format(format!("bad line `{line}`")))?;
            if n.trim().parse::<usize>().ok() != Some(k) {
                return Err(format(format!("levels out of order at `{line}`")));
            }
            populations.push(p.trim().parse::<f64>().map_err(|e| format(format!("{e} in `{line}`")))?);
        }
        let side_path = path.with_extension("json");
        let side_text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: PopulationSidecar = serde_json::from_str(&side_text)?;
        if side.n_max + 1 != populations.len() {
            return Err(format(format!("sidecar n_max {} but {} rows", side.n_max, populations.len())));
        }
        let mut state = DiagonalState::new(populations, side.omega0)?;
        state.clipped_mass = side.clipped_mass;
        state.asymmetry = side.eta;
        state.renormalized = side.renormalized;
        Ok(state)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PopulationSidecar {
    n_max: usize,
    clipped_mass: f64,
    eta: f64,
    omega0: f64,
    renormalized: bool,
}

/// Σ n p_n.
pub fn mean_occupation(state: &DiagonalState) -> f64 {
    state.populations.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Populations of the unsmoothed profile up to a fixed `n_max`; fails if
/// the last level still holds more than the tail tolerance.
pub fn reconstruct_populations(profile: &RadialProfile, n_max: usize, omega0: f64) -> Result<DiagonalState> {
    let settings = ReconstructionSettings::default();
    let raw = raw_populations(profile, n_max, settings.r_max, 0.0);
    let tail = raw[n_max].abs();
    if tail >= settings.tail_tolerance {
        return Err(Error::Truncation { n_max, tail });
    }
    DiagonalState::from_raw(raw, omega0, profile.asymmetry)
}

/// Doubles the truncation from `initial_n_max` until the tail criterion
/// holds.
pub fn reconstruct_auto(profile: &RadialProfile, omega0: f64, settings: &ReconstructionSettings) -> Result<DiagonalState> {
    let mut n_max = settings.initial_n_max.max(1);
    loop {
        let raw = raw_populations(profile, n_max, settings.r_max, settings.smoothing);
        let tail = raw[n_max].abs();
        if tail < settings.tail_tolerance {
            return DiagonalState::from_raw(raw, omega0, profile.asymmetry);
        }
        if n_max >= settings.max_n_max {
            return Err(Error::Truncation { n_max, tail });
        }
        n_max = (2 * n_max).min(settings.max_n_max);
    }
}
