//! Self-checks of the electronic steady state that need no dynamics:
//! spectral sum rule, detailed balance, fluctuation-dissipation ratio,
//! mirror symmetry and the damping cross-check.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::electronic::SteadyState;
use crate::error::{Error, Result};
use crate::params::DeviceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Preconditions of the check are not met by this configuration.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub voltage: f64,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status_of(&self, name: &str, voltage: f64) -> Option<CheckStatus> {
        self.checks
            .iter()
            .find(|c| c.name == name && c.voltage == voltage)
            .map(|c| c.status)
    }
}

/// Largest relative FDT deviation tolerated.
pub const FDT_TOLERANCE: f64 = 0.02;
/// Largest relative detailed-balance deviation tolerated.
pub const DETAILED_BALANCE_TOLERANCE: f64 = 0.01;
const SYMMETRY_TOLERANCE: f64 = 1e-6;

struct Collector {
    voltage: f64,
    checks: Vec<Check>,
}

impl Collector {
    fn record(&mut self, name: &str, outcome: Result<std::result::Result<String, String>>) {
        let (status, detail) = match outcome {
            Ok(Ok(d)) => (CheckStatus::Pass, d),
            Ok(Err(d)) => (CheckStatus::Fail, d),
            Err(e) => (CheckStatus::Fail, e.to_string()),
        };
        self.checks.push(Check {
            name: name.into(),
            voltage: self.voltage,
            status,
            detail,
        });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.checks.push(Check {
            name: name.into(),
            voltage: self.voltage,
            status: CheckStatus::Skipped,
            detail: why.into(),
        });
    }
}

fn verdict(ok: bool, detail: String) -> std::result::Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// True when the device maps onto itself under x → −x combined with
/// particle-hole conjugation and exchange of the leads.
pub fn is_mirror_symmetric(p: &DeviceParams) -> bool {
    let (l, r) = (&p.left, &p.right);
    p.dot_energy == 0.0
        && l.center == -r.center
        && l.chemical_potential == -r.chemical_potential
        && l.bandwidth == r.bandwidth
        && l.coupling == r.coupling
        && l.beta == r.beta
}

/// Runs every applicable check on one device.
pub fn validate_params(params: &DeviceParams, solver: &SteadyState) -> Result<Vec<Check>> {
    params.validate()?;
    let mut c = Collector {
        voltage: params.voltage(),
        checks: Vec::new(),
    };
    let x0 = params.x0();
    let probes: Vec<f64> = [0.0, 2.0, -2.0, 6.0, -6.0].iter().map(|k| k * x0).collect();

    c.record(
        "sum_rule",
        probes.iter().try_fold(0.0f64, |worst, &x| Ok(worst.max((solver.sum_rule(x, params)? - 1.0).abs()))).map(|dev| {
            verdict(dev <= solver.sum_rule_tolerance, format!("max |sum - 1| = {dev:.3e}"))
        }),
    );

    c.record(
        "damping_cross_check",
        probes
            .iter()
            .try_for_each(|&x| solver.damping(x, params).map(|_| ()))
            .map(|_| Ok("analytic and finite-difference damping agree".into()))
            .or_else(|e| match e {
                Error::DampingMismatch { .. } => Ok(Err(e.to_string())),
                other => Err(other),
            }),
    );

    let equilibrium = params.bias() == 0.0;
    match (equilibrium, params.common_beta()) {
        (true, Some(beta)) => {
            c.record(
                "detailed_balance",
                (|| {
                    let mut worst: f64 = 0.0;
                    for &x in &[0.0, 2.0 * x0, -2.0 * x0] {
                        for &w in &[0.1, 0.3, 1.0] {
                            let ratio = solver.noise_spectrum(x, -w, params)? / solver.noise_spectrum(x, w, params)?;
                            worst = worst.max((ratio / (-beta * w).exp() - 1.0).abs());
                        }
                    }
                    Ok(verdict(worst <= DETAILED_BALANCE_TOLERANCE, format!("max relative deviation {worst:.3e}")))
                })(),
            );
            c.record(
                "fdt_ratio",
                (|| {
                    let mut worst: f64 = 0.0;
                    for k in -12..=12 {
                        let x = k as f64 * x0;
                        let ratio = solver.diffusion(x, params)? / (params.mass * solver.damping(x, params)?);
                        worst = worst.max((ratio * beta / 2.0 - 1.0).abs());
                    }
                    Ok(verdict(worst <= FDT_TOLERANCE, format!("max |D beta/(2 m gamma) - 1| = {worst:.3e}")))
                })(),
            );
        }
        (false, _) => {
            c.skip("detailed_balance", "leads are biased");
            c.skip("fdt_ratio", "leads are biased");
        }
        (true, None) => {
            c.skip("detailed_balance", "lead temperatures differ");
            c.skip("fdt_ratio", "lead temperatures differ");
        }
    }

    if is_mirror_symmetric(params) {
        c.record(
            "mirror_symmetry",
            (|| {
                let mut worst: f64 = 0.0;
                for k in [0.5, 1.0, 3.0, 7.0] {
                    let x = k * x0;
                    let a = solver.coefficients(x, params)?;
                    let b = solver.coefficients(-x, params)?;
                    let rel = |p: f64, q: f64| (p - q).abs() / (p.abs() + q.abs()).max(1e-300);
                    worst = worst
                        .max(rel(a.occupation, -b.occupation))
                        .max(rel(a.diffusion, b.diffusion))
                        .max((a.damping - b.damping).abs() / (a.damping.abs() + b.damping.abs() + 1e-9));
                }
                Ok(verdict(worst <= SYMMETRY_TOLERANCE, format!("max relative asymmetry {worst:.3e}")))
            })(),
        );
    } else {
        c.skip("mirror_symmetry", "device is not mirror symmetric");
    }
    Ok(c.checks)
}

/// Validates the configuration, then checks every voltage of the scan.
pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    config.validate()?;
    let solver = SteadyState::default();
    let mut report = ValidationReport::default();
    for &v in &config.voltages {
        report.checks.extend(validate_params(&config.device.params_at(v), &solver)?);
    }
    Ok(report)
}
