//! Run configuration. Every field has a default, so an empty file describes
//! the reference device and voltage scan.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{DEFAULT_HALF_WIDTH, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::langevin::{IntegratorConfig, DEFAULT_STEPS};
use crate::params::{DeviceParams, LeadSpec};
use crate::phase_space::{GridSpec, RadialSpec};
use crate::reconstruction::ReconstructionSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeadConfig {
    pub center: f64,
    pub bandwidth: f64,
    pub coupling: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub mass: f64,
    pub omega0: f64,
    pub coupling_energy: f64,
    pub dot_energy: f64,
    pub left: LeadConfig,
    pub right: LeadConfig,
}

impl Default for LeadConfig {
    fn default() -> Self {
        let p = DeviceParams::reference(0.0);
        LeadConfig {
            center: p.left.center,
            bandwidth: p.left.bandwidth,
            coupling: p.left.coupling,
            beta: p.left.beta,
        }
    }
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let p = DeviceParams::reference(0.0);
        DeviceConfig {
            mass: p.mass,
            omega0: p.omega0,
            coupling_energy: p.coupling_energy,
            dot_energy: p.dot_energy,
            left: LeadConfig::default(),
            right: LeadConfig {
                center: p.right.center,
                ..LeadConfig::default()
            },
        }
    }
}

impl DeviceConfig {
    /// Device with the leads at μ = ε ± `voltage`.
    pub fn params_at(&self, voltage: f64) -> DeviceParams {
        let lead = |l: &LeadConfig, mu: f64| LeadSpec {
            center: l.center,
            bandwidth: l.bandwidth,
            coupling: l.coupling,
            beta: l.beta,
            chemical_potential: mu,
        };
        DeviceParams {
            mass: self.mass,
            omega0: self.omega0,
            coupling_energy: self.coupling_energy,
            dot_energy: self.dot_energy,
            left: lead(&self.left, self.dot_energy + voltage),
            right: lead(&self.right, self.dot_energy - voltage),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub time_step: f64,
    pub n_steps: u64,
    pub burn_in_fraction: f64,
    pub record_stride: u64,
    pub initial_x: f64,
    pub initial_v: f64,
    /// Contiguous segments of the record used for jackknife error bars.
    pub blocks: usize,
    /// Write a gzip CSV of every `dump_stride`-th recorded sample.
    pub dump_trajectory: bool,
    pub dump_stride: u64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::with_steps(DEFAULT_STEPS, 0);
        IntegratorSection {
            time_step: c.time_step,
            n_steps: c.n_steps,
            burn_in_fraction: 0.1,
            record_stride: c.record_stride,
            initial_x: c.initial_x,
            initial_v: c.initial_v,
            blocks: 8,
            dump_trajectory: false,
            dump_stride: 100,
        }
    }
}

impl IntegratorSection {
    pub fn integrator(&self, seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            time_step: self.time_step,
            n_steps: self.n_steps,
            burn_in_steps: (self.n_steps as f64 * self.burn_in_fraction).round() as u64,
            seed,
            record_stride: self.record_stride,
            initial_x: self.initial_x,
            initial_v: self.initial_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    /// Half-width in units of x₀.
    pub half_width: f64,
    pub nodes: usize,
    /// Grow the range by half and rerun when more than 0.1% of steps clamp.
    pub auto_extend: bool,
    pub max_extensions: usize,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection {
            half_width: DEFAULT_HALF_WIDTH,
            nodes: DEFAULT_NODES,
            auto_extend: true,
            max_extensions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Lead offsets V from the dot level, μ = ε ± V.
    pub voltages: Vec<f64>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Inverse temperature of the reference bath for W_F; defaults to the
    /// common lead temperature.
    pub reference_beta: Option<f64>,
    pub device: DeviceConfig,
    pub integrator: IntegratorSection,
    pub table: TableSection,
    pub grid: GridSpec,
    pub profile: RadialSpec,
    pub reconstruction: ReconstructionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            voltages: vec![0.0, 2.0, 4.0, 6.0, 10.0, 16.0],
            seed: 20_240_601,
            workers: 0,
            out_dir: PathBuf::from("flywheel-out"),
            reference_beta: None,
            device: DeviceConfig::default(),
            integrator: IntegratorSection::default(),
            table: TableSection::default(),
            grid: GridSpec::default(),
            profile: RadialSpec::default(),
            reconstruction: ReconstructionSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Bath temperature used for the free-energy reference.
    pub fn reference_beta(&self) -> Result<f64> {
        match self.reference_beta {
            Some(b) => Ok(b),
            None => self.device.params_at(0.0).common_beta().ok_or_else(|| {
                Error::Config("leads have different temperatures; set reference_beta".into())
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.voltages.is_empty() {
            return bad("voltage list is empty".into());
        }
        if let Some(v) = self.voltages.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("voltages must be finite and >= 0, got {v}"));
        }
        for &v in &self.voltages {
            self.device
                .params_at(v)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        let integ = &self.integrator;
        if !(0.0..1.0).contains(&integ.burn_in_fraction) {
            return bad("integrator.burn_in_fraction must lie in [0, 1)".into());
        }
        if integ.blocks < 2 {
            return bad("integrator.blocks must be at least 2".into());
        }
        if integ.record_stride == 0 || integ.dump_stride == 0 {
            return bad("record and dump strides must be >= 1".into());
        }
        let records = (integ.n_steps - integ.integrator(0).burn_in_steps.min(integ.n_steps)) / integ.record_stride;
        if records < integ.blocks as u64 {
            return bad(format!("only {records} recorded samples for {} blocks", integ.blocks));
        }
        if !(self.table.half_width > 0.0) || self.table.nodes < crate::coefficients::MIN_NODES {
            return bad("table needs half_width > 0 and at least 16 nodes".into());
        }
        if self.grid.bins == 0 || !(self.grid.half_width > 0.0) {
            return bad("grid needs bins >= 1 and half_width > 0".into());
        }
        if !(self.profile.bin_width > 0.0 && self.profile.max_radius > self.profile.bin_width) {
            return bad("profile needs 0 < bin_width < max_radius".into());
        }
        if self.reconstruction.initial_n_max == 0 || self.reconstruction.max_n_max < self.reconstruction.initial_n_max {
            return bad("reconstruction needs 0 < initial_n_max <= max_n_max".into());
        }
        if !(self.reconstruction.smoothing >= 0.0 && self.reconstruction.smoothing.is_finite()) {
            return bad("reconstruction.smoothing must be finite and >= 0".into());
        }
        match self.reference_beta() {
            Ok(b) if b > 0.0 => Ok(()),
            Ok(b) => bad(format!("reference_beta must be > 0, got {b}")),
            Err(e) => Err(e),
        }
    }
}

/// Independent per-voltage seed, a SplitMix64 mix of the master seed and the
/// voltage's index in the scan.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
