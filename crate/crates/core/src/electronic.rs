//! Frozen-position electronic steady state of the resonant level.
//!
//! With the oscillator held at `x` the dot is a non-interacting resonant
//! level at ε_x = ε − F x coupled to two Lorentzian leads. Everything here is
//! a closed-form integrand fed to adaptive quadrature over frequency.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{DeviceParams, LeadSpec};
use crate::quadrature::{Estimate, NotConverged, Quadrature};

/// Fermi–Dirac occupation, evaluated without overflow for any β(ω − μ).
#[inline]
pub fn fermi(beta: f64, mu: f64, omega: f64) -> f64 {
    let z = beta * (omega - mu);
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// 1 − f, computed directly so the far-occupied tail keeps full precision.
#[inline]
pub fn fermi_complement(beta: f64, mu: f64, omega: f64) -> f64 {
    fermi(-beta, mu, omega)
}

impl LeadSpec {
    #[inline]
    pub fn spectral_density(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        let w2 = self.bandwidth * self.bandwidth;
        self.coupling * w2 / (d * d + w2)
    }

    #[inline]
    pub fn spectral_density_derivative(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        let w2 = self.bandwidth * self.bandwidth;
        let den = d * d + w2;
        -2.0 * self.coupling * w2 * d / (den * den)
    }

    /// Retarded self-energy, (Γδ/2) / (ω − ω_α + iδ).
    #[inline]
    pub fn self_energy(&self, omega: f64) -> Complex64 {
        let z = Complex64::new(omega - self.center, self.bandwidth);
        0.5 * self.coupling * self.bandwidth / z
    }

    #[inline]
    pub fn self_energy_derivative(&self, omega: f64) -> Complex64 {
        let z = Complex64::new(omega - self.center, self.bandwidth);
        -0.5 * self.coupling * self.bandwidth / (z * z)
    }

    #[inline]
    pub fn occupation(&self, omega: f64) -> f64 {
        fermi(self.beta, self.chemical_potential, omega)
    }

    #[inline]
    pub fn vacancy(&self, omega: f64) -> f64 {
        fermi_complement(self.beta, self.chemical_potential, omega)
    }
}

pub fn spectral_density(omega: f64, lead: &LeadSpec) -> f64 {
    lead.spectral_density(omega)
}

pub fn self_energy(omega: f64, lead: &LeadSpec) -> Complex64 {
    lead.self_energy(omega)
}

pub fn green_function(omega: f64, x: f64, params: &DeviceParams) -> Complex64 {
    FrozenLevel::new(params, x).green(omega)
}

/// The dot with the oscillator frozen at one position.
#[derive(Debug, Clone, Copy)]
pub struct FrozenLevel<'a> {
    params: &'a DeviceParams,
    level: f64,
}

impl<'a> FrozenLevel<'a> {
    pub fn new(params: &'a DeviceParams, x: f64) -> Self {
        FrozenLevel {
            params,
            level: params.level_at(x),
        }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    #[inline]
    pub fn green(&self, omega: f64) -> Complex64 {
        let [l, r] = self.params.leads();
        let inverse = omega - self.level - l.self_energy(omega) - r.self_energy(omega);
        inverse.inv()
    }

    #[inline]
    pub fn spectral(&self, omega: f64) -> f64 {
        self.green(omega).norm_sqr()
    }

    #[inline]
    fn total_width(&self, omega: f64) -> f64 {
        let [l, r] = self.params.leads();
        l.spectral_density(omega) + r.spectral_density(omega)
    }

    /// A(ω) Σ_α κ_α f_α: density of occupied dot states.
    #[inline]
    pub fn occupied(&self, omega: f64) -> f64 {
        let [l, r] = self.params.leads();
        let inflow = l.spectral_density(omega) * l.occupation(omega)
            + r.spectral_density(omega) * r.occupation(omega);
        self.spectral(omega) * inflow
    }

    /// A(ω) Σ_α κ_α (1 − f_α): density of empty dot states.
    #[inline]
    pub fn empty(&self, omega: f64) -> f64 {
        let [l, r] = self.params.leads();
        let outflow = l.spectral_density(omega) * l.vacancy(omega)
            + r.spectral_density(omega) * r.vacancy(omega);
        self.spectral(omega) * outflow
    }

    /// d/dω of [`Self::empty`], by the product rule on closed forms.
    #[inline]
    pub fn empty_derivative(&self, omega: f64) -> f64 {
        let [l, r] = self.params.leads();
        let g = self.green(omega);
        let dsigma = l.self_energy_derivative(omega) + r.self_energy_derivative(omega);
        let dg = -g * g * (1.0 - dsigma);
        let a = g.norm_sqr();
        let da = 2.0 * (g.conj() * dg).re;
        let mut outflow = 0.0;
        let mut doutflow = 0.0;
        for lead in [l, r] {
            let k = lead.spectral_density(omega);
            let f = lead.occupation(omega);
            let fbar = lead.vacancy(omega);
            outflow += k * fbar;
            // d(1 − f)/dω = β f (1 − f)
            doutflow += lead.spectral_density_derivative(omega) * fbar + k * lead.beta * f * fbar;
        }
        da * outflow + a * doutflow
    }

    /// Frequencies where the integrands have structure; `shift` adds the
    /// same set displaced by −shift for convolution-type integrands.
    fn breakpoints(&self, shift: f64) -> Vec<f64> {
        let [l, r] = self.params.leads();
        let mut pts = vec![self.level];
        let mut reach: f64 = 1.0;
        for lead in [l, r] {
            let thermal = 1.0 / lead.beta;
            pts.extend([
                lead.center - 3.0 * lead.bandwidth,
                lead.center,
                lead.center + 3.0 * lead.bandwidth,
                lead.chemical_potential - 8.0 * thermal,
                lead.chemical_potential,
                lead.chemical_potential + 8.0 * thermal,
            ]);
            reach = reach.max(lead.bandwidth).max(lead.coupling).max(thermal);
        }
        if shift != 0.0 {
            let shifted: Vec<f64> = pts.iter().map(|p| p - shift).collect();
            pts.extend(shifted);
        }
        let lo = pts.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * reach;
        let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * reach;
        pts.push(lo);
        pts.push(hi);
        pts
    }
}

/// Occupation, diffusion and damping at one frozen position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub occupation: f64,
    pub diffusion: f64,
    pub damping: f64,
}

/// Quadrature settings plus the self-consistency tolerances checked on
/// every evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub quadrature: Quadrature,
    /// Allowed deviation of ∫(dω/2π) A (κ_L + κ_R) from 1.
    pub sum_rule_tolerance: f64,
    /// Frequency step of the finite-difference damping cross-check.
    pub fd_step: f64,
    /// Relative agreement demanded between analytic and finite-difference
    /// damping.
    pub damping_tolerance: f64,
}

impl Default for SteadyState {
    fn default() -> Self {
        SteadyState {
            quadrature: Quadrature::default(),
            sum_rule_tolerance: 1e-6,
            fd_step: 1e-4,
            damping_tolerance: 5e-3,
        }
    }
}

fn quad_error(what: &'static str, x: f64) -> impl FnOnce(NotConverged) -> Error {
    move |e| Error::Quadrature {
        what,
        x,
        error: e.estimate.error,
        tolerance: e.tolerance,
    }
}

impl SteadyState {
    fn over_line<F: FnMut(f64) -> f64>(&self, what: &'static str, x: f64, f: F, points: &[f64]) -> Result<Estimate> {
        self.quadrature
            .integrate_real_line(f, points)
            .map_err(quad_error(what, x))
    }

    /// ∫(dω/2π) A(ω)[κ_L(ω) + κ_R(ω)], which equals 1 for any retarded G.
    pub fn sum_rule(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let dot = FrozenLevel::new(params, x);
        let est = self.over_line(
            "spectral sum rule",
            x,
            |w| dot.spectral(w) * dot.total_width(w),
            &dot.breakpoints(0.0),
        )?;
        Ok(est.value / (2.0 * PI))
    }

    /// Same integral through −2 Im G(ω), an independent algebraic route.
    pub fn sum_rule_from_green(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let dot = FrozenLevel::new(params, x);
        let est = self.over_line(
            "spectral sum rule",
            x,
            |w| -2.0 * dot.green(w).im,
            &dot.breakpoints(0.0),
        )?;
        Ok(est.value / (2.0 * PI))
    }

    fn check_sum_rule(&self, x: f64, params: &DeviceParams) -> Result<()> {
        let value = self.sum_rule(x, params)?;
        if (value - 1.0).abs() > self.sum_rule_tolerance {
            return Err(Error::SumRule {
                x,
                value,
                tolerance: self.sum_rule_tolerance,
            });
        }
        Ok(())
    }

    /// ⟨c†c⟩ₓ − ½.
    pub fn excess_occupation(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        self.check_sum_rule(x, params)?;
        let dot = FrozenLevel::new(params, x);
        let est = self.over_line("occupation", x, |w| dot.occupied(w), &dot.breakpoints(0.0))?;
        let filling = (est.value / (2.0 * PI)).clamp(0.0, 1.0);
        Ok(filling - 0.5)
    }

    /// Force noise S_x(ω) = F² ∫(dω′/2π) P(ω′) H(ω′ + ω), with P and H the
    /// occupied and empty dot densities. Satisfies S(−ω) = e^{−βω} S(ω) in
    /// equilibrium.
    pub fn noise_spectrum(&self, x: f64, omega: f64, params: &DeviceParams) -> Result<f64> {
        let dot = FrozenLevel::new(params, x);
        let est = self.over_line(
            "noise spectrum",
            x,
            |w| dot.occupied(w) * dot.empty(w + omega),
            &dot.breakpoints(omega),
        )?;
        Ok(params.force().powi(2) * est.value.max(0.0) / (2.0 * PI))
    }

    /// D(x) = S_x(0), evaluated from the explicit lead-pair sum
    /// Σ_{αβ} A² κ_α κ_β f_α (1 − f_β) rather than the shifted convolution.
    pub fn diffusion(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let dot = FrozenLevel::new(params, x);
        let leads = params.leads();
        let est = self.over_line(
            "diffusion",
            x,
            |w| {
                let a = dot.spectral(w);
                let mut sum = 0.0;
                for la in leads {
                    for lb in leads {
                        sum += la.spectral_density(w)
                            * lb.spectral_density(w)
                            * la.occupation(w)
                            * lb.vacancy(w);
                    }
                }
                a * a * sum
            },
            &dot.breakpoints(0.0),
        )?;
        Ok(params.force().powi(2) * est.value.max(0.0) / (2.0 * PI))
    }

    /// γ(x) from the analytic ω-derivative of the noise integrand.
    pub fn damping_analytic(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let dot = FrozenLevel::new(params, x);
        let est = self.over_line(
            "damping",
            x,
            |w| dot.occupied(w) * dot.empty_derivative(w),
            &dot.breakpoints(0.0),
        )?;
        Ok(params.force().powi(2) * est.value / (2.0 * PI) / params.mass)
    }

    /// γ(x) from a central difference of S_x(ω) at ω = ±h.
    pub fn damping_finite_difference(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let h = self.fd_step;
        let plus = self.noise_spectrum(x, h, params)?;
        let minus = self.noise_spectrum(x, -h, params)?;
        Ok((plus - minus) / (2.0 * h) / params.mass)
    }

    /// γ(x), analytic path checked against the finite difference.
    pub fn damping(&self, x: f64, params: &DeviceParams) -> Result<f64> {
        let diffusion = self.diffusion(x, params)?;
        self.damping_checked(x, params, diffusion)
    }

    fn damping_checked(&self, x: f64, params: &DeviceParams, diffusion: f64) -> Result<f64> {
        let analytic = self.damping_analytic(x, params)?;
        let finite_difference = self.damping_finite_difference(x, params)?;
        let beta = 0.5 * (params.left.beta + params.right.beta);
        // below this |γ| the comparison is dominated by quadrature noise
        let floor = 1e-5 * beta * diffusion / (2.0 * params.mass);
        if (analytic - finite_difference).abs() > self.damping_tolerance * analytic.abs() + floor {
            return Err(Error::DampingMismatch {
                x,
                analytic,
                finite_difference,
            });
        }
        Ok(analytic)
    }

    pub fn coefficients(&self, x: f64, params: &DeviceParams) -> Result<Coefficients> {
        let occupation = self.excess_occupation(x, params)?;
        let diffusion = self.diffusion(x, params)?;
        let damping = self.damping_checked(x, params, diffusion)?;
        Ok(Coefficients {
            occupation,
            diffusion,
            damping,
        })
    }
}

pub fn excess_occupation(x: f64, params: &DeviceParams) -> Result<f64> {
    SteadyState::default().excess_occupation(x, params)
}

pub fn noise_spectrum(x: f64, omega: f64, params: &DeviceParams) -> Result<f64> {
    SteadyState::default().noise_spectrum(x, omega, params)
}

pub fn diffusion(x: f64, params: &DeviceParams) -> Result<f64> {
    SteadyState::default().diffusion(x, params)
}

pub fn damping(x: f64, params: &DeviceParams) -> Result<f64> {
    SteadyState::default().damping(x, params)
}
