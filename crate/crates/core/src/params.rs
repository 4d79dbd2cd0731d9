//! Physical configuration of the dot, its two leads and the mechanical mode.
//!
//! Units: ħ = e = k_B = 1. Energies and frequencies share one unit, times are
//! its inverse, and temperatures only ever appear as inverse temperatures.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One electrode with a Lorentzian level-width function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadSpec {
    /// Band center ω_α.
    pub center: f64,
    /// Band half-width δ_α.
    pub bandwidth: f64,
    /// Peak tunnelling rate Γ_α.
    pub coupling: f64,
    /// Inverse temperature β_α.
    pub beta: f64,
    /// Chemical potential μ_α.
    pub chemical_potential: f64,
}

impl LeadSpec {
    pub fn validate(&self, name: &'static str) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.bandwidth) {
            return Err(Error::invalid(name, format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        if !positive(self.coupling) {
            return Err(Error::invalid(name, format!("coupling must be > 0, got {}", self.coupling)));
        }
        if !positive(self.beta) {
            return Err(Error::invalid(name, format!("beta must be > 0, got {}", self.beta)));
        }
        if !self.center.is_finite() || !self.chemical_potential.is_finite() {
            return Err(Error::invalid(name, "center and chemical potential must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub mass: f64,
    pub omega0: f64,
    /// Electromechanical interaction energy λ = F x₀ / 2.
    pub coupling_energy: f64,
    /// Bare dot level ε.
    pub dot_energy: f64,
    pub left: LeadSpec,
    pub right: LeadSpec,
}

impl DeviceParams {
    /// Reference device at sweep voltage `voltage` (μ_L = −μ_R = V).
    pub fn reference(voltage: f64) -> Self {
        let lead = |center: f64, mu: f64| LeadSpec {
            center,
            bandwidth: 1.0,
            coupling: 2.0,
            beta: 0.5,
            chemical_potential: mu,
        };
        DeviceParams {
            mass: 1.0,
            omega0: 0.2,
            coupling_energy: 0.1,
            dot_energy: 0.0,
            left: lead(0.5, voltage),
            right: lead(-0.5, -voltage),
        }
    }

    /// Same device with the leads at μ = ε ± V. The sweep voltage V is the
    /// offset of each lead from the dot level, so the bias μ_L − μ_R is 2V.
    pub fn with_voltage(mut self, voltage: f64) -> Self {
        self.left.chemical_potential = self.dot_energy + voltage;
        self.right.chemical_potential = self.dot_energy - voltage;
        self
    }

    /// Same device with both leads at inverse temperature `beta`.
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.left.beta = beta;
        self.right.beta = beta;
        self
    }

    /// μ_L − μ_R.
    pub fn bias(&self) -> f64 {
        self.left.chemical_potential - self.right.chemical_potential
    }

    /// Sweep voltage, half the bias.
    pub fn voltage(&self) -> f64 {
        0.5 * self.bias()
    }

    pub fn leads(&self) -> [&LeadSpec; 2] {
        [&self.left, &self.right]
    }

    /// Zero-point length x₀ = (2/(mω₀))^{1/2}.
    pub fn x0(&self) -> f64 {
        (2.0 / (self.mass * self.omega0)).sqrt()
    }

    /// Zero-point momentum p₀ = (2mω₀)^{1/2}; x₀·p₀ = 2.
    pub fn p0(&self) -> f64 {
        (2.0 * self.mass * self.omega0).sqrt()
    }

    /// Force per unit charge F = 2λ/x₀.
    pub fn force(&self) -> f64 {
        2.0 * self.coupling_energy / self.x0()
    }

    /// Level position with the oscillator frozen at `x`: ε_x = ε − F x.
    pub fn level_at(&self, x: f64) -> f64 {
        self.dot_energy - self.force() * x
    }

    /// True when both leads share one temperature.
    pub fn common_beta(&self) -> Option<f64> {
        (self.left.beta == self.right.beta).then_some(self.left.beta)
    }

    /// Checks positivity constraints and the half-filling convention
    /// ε = (μ_L + μ_R)/2 that makes ⟨n⟩ = ⟨c†c⟩ − ½ valid.
    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::invalid("omega0", format!("must be > 0, got {}", self.omega0)));
        }
        if !self.coupling_energy.is_finite() || !self.dot_energy.is_finite() {
            return Err(Error::invalid("coupling_energy", "must be finite"));
        }
        self.left.validate("left")?;
        self.right.validate("right")?;
        let midpoint = 0.5 * (self.left.chemical_potential + self.right.chemical_potential);
        let scale = 1.0 + self.dot_energy.abs() + midpoint.abs();
        if (midpoint - self.dot_energy).abs() > 1e-12 * scale {
            return Err(Error::invalid(
                "dot_energy",
                format!(
                    "half filling requires dot_energy = (mu_L + mu_R)/2 = {midpoint}, got {}",
                    self.dot_energy
                ),
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("DeviceParams serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_point_scales_have_unit_commutator() {
        let p = DeviceParams::reference(0.0);
        assert!((p.x0() * p.p0() - 2.0).abs() < 1e-14);
        assert!((p.x0() - 10f64.sqrt()).abs() < 1e-14);
        assert!((p.force() * p.x0() / 2.0 - p.coupling_energy).abs() < 1e-15);
    }

    #[test]
    fn voltage_offsets_both_leads() {
        let p = DeviceParams::reference(15.0);
        assert_eq!(p.left.chemical_potential, 15.0);
        assert_eq!(p.right.chemical_potential, -15.0);
        assert_eq!(p.bias(), 30.0);
        assert_eq!(p.voltage(), 15.0);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_bad_leads_and_off_center_level() {
        let mut p = DeviceParams::reference(0.0);
        p.left.coupling = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "left", .. })));

        let mut p = DeviceParams::reference(2.0);
        p.dot_energy = 0.3;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "dot_energy", .. })));
        p.with_voltage(2.0).validate().unwrap();
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = DeviceParams::reference(0.0);
        assert_eq!(a.fingerprint(), DeviceParams::reference(0.0).fingerprint());
        assert_ne!(a.fingerprint(), DeviceParams::reference(1.0).fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
