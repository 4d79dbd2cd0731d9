//! Voltage scan: table, trajectory, Wigner estimate, populations and
//! thermodynamics for each voltage, plus the summary and manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{build_table, find_negative_damping_interval, CoefficientTable};
use crate::config::{derive_seed, RunConfig};
use crate::error::{Error, Result};
use crate::io::{create_dir, fmt_f64, sha256_file, write_json, write_text};
use crate::langevin::{check_adiabaticity, run_streaming, IntegratorConfig, RunStats};
use crate::params::DeviceParams;
use crate::phase_space::{radial_profile, RadialProfile, WignerAccumulator, WignerGrid};
use crate::reconstruction::{reconstruct_auto, DiagonalState};
use crate::work::{analyze, ThermoReport};

/// Clamped-step fraction that triggers a wider coefficient table.
pub const CLAMP_EXTEND_FRACTION: f64 = 1e-3;

pub const SUMMARY_FILE: &str = "sweep_summary.csv";
pub const UNCERTAINTY_FILE: &str = "sweep_uncertainty.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything derived from one phase-space histogram.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub grid: WignerGrid,
    pub profile: RadialProfile,
    pub state: DiagonalState,
    pub report: ThermoReport,
    /// n̄ from symmetric phase-space moments.
    pub nbar_wigner: f64,
}

/// Runs histogram → profile → populations → thermodynamics.
pub fn estimate(acc: &WignerAccumulator, config: &RunConfig, voltage: f64, omega0: f64, above_threshold: bool) -> Result<Estimate> {
    let grid = acc.finish()?;
    let profile = radial_profile(&grid, config.profile);
    let state = reconstruct_auto(&profile, omega0, &config.reconstruction)?;
    let report = analyze(&state, voltage, config.reference_beta()?, above_threshold)?;
    Ok(Estimate {
        nbar_wigner: acc.moments().mean_occupation(),
        grid,
        profile,
        state,
        report,
    })
}

/// Jackknife standard errors from leave-one-block-out estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub nbar: f64,
    pub energy: f64,
    pub entropy: f64,
    pub g2: f64,
    pub ergotropy: f64,
    pub free_energy_work: f64,
    pub nbar_wigner: f64,
    pub profile_mode: f64,
}

fn jackknife(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    ((b - 1.0) / b * values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

fn block_uncertainty(blocks: &[WignerAccumulator], config: &RunConfig, voltage: f64, omega0: f64, above: bool) -> Result<Uncertainty> {
    let partial: Vec<Estimate> = (0..blocks.len())
        .into_par_iter()
        .map(|skip| {
            let mut acc = blocks[(skip + 1) % blocks.len()].clone();
            for (i, b) in blocks.iter().enumerate() {
                if i != skip && i != (skip + 1) % blocks.len() {
                    acc.merge(b);
                }
            }
            estimate(&acc, config, voltage, omega0, above)
        })
        .collect::<Result<_>>()?;
    let pick = |f: &dyn Fn(&Estimate) -> f64| jackknife(&partial.iter().map(f).collect::<Vec<_>>());
    Ok(Uncertainty {
        nbar: pick(&|e| e.report.nbar),
        energy: pick(&|e| e.report.energy),
        entropy: pick(&|e| e.report.entropy),
        g2: pick(&|e| e.report.g2.unwrap_or(f64::NAN)),
        ergotropy: pick(&|e| e.report.ergotropy),
        free_energy_work: pick(&|e| e.report.free_energy_work),
        nbar_wigner: pick(&|e| e.nbar_wigner),
        profile_mode: pick(&|e| e.profile.mode()),
    })
}

/// Per-voltage numbers kept for the summary and written to `thermo.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageResult {
    pub voltage: f64,
    pub seed: u64,
    pub report: ThermoReport,
    pub uncertainty: Uncertainty,
    pub nbar_wigner: f64,
    pub g2_wigner: f64,
    pub profile_mode: f64,
    pub asymmetry: f64,
    pub clipped_mass: f64,
    pub n_max: usize,
    pub negative_damping_interval: Option<(f64, f64)>,
    pub table_half_width: f64,
    pub clamp_fraction: f64,
    pub outside_fraction: f64,
    pub recorded_samples: u64,
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageRecord {
    pub voltage: f64,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub runtime_s: f64,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub results: Vec<std::result::Result<VoltageResult, String>>,
    pub records: Vec<VoltageRecord>,
    pub out_dir: PathBuf,
}

impl SweepOutcome {
    pub fn succeeded(&self) -> impl Iterator<Item = &VoltageResult> {
        self.results.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.is_err()).count()
    }

    pub fn summary_path(&self) -> PathBuf {
        self.out_dir.join(SUMMARY_FILE)
    }
}

/// Directory name for the voltage at position `index` of the scan.
pub fn voltage_dir(index: usize, voltage: f64) -> String {
    format!("v{index:02}_{voltage}")
}

/// Builds a table on ±`half_width` x₀ with `nodes` scaled to keep the
/// default spacing.
fn table_for(params: &DeviceParams, config: &RunConfig, half_width: f64) -> Result<CoefficientTable> {
    let nodes = ((config.table.nodes as f64) * half_width / config.table.half_width).round() as usize;
    let reach = half_width * params.x0();
    build_table(params, -reach, reach, nodes.max(config.table.nodes))
}

struct TrajectoryDump {
    writer: GzEncoder<BufWriter<File>>,
    stride: u64,
    seen: u64,
    error: Option<std::io::Error>,
}

impl TrajectoryDump {
    fn create(path: &Path, stride: u64) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = GzEncoder::new(BufWriter::new(file), Compression::default());
        writer.write_all(b"t,x,v\n").map_err(|e| Error::io(path, e))?;
        Ok(TrajectoryDump {
            writer,
            stride,
            seen: 0,
            error: None,
        })
    }

    fn push(&mut self, t: f64, x: f64, v: f64) {
        self.seen += 1;
        if self.error.is_some() || !(self.seen - 1).is_multiple_of(self.stride) {
            return;
        }
        if let Err(e) = writeln!(self.writer, "{},{},{}", fmt_f64(t), fmt_f64(x), fmt_f64(v)) {
            self.error = Some(e);
        }
    }

    fn finish(self, path: &Path) -> Result<()> {
        if let Some(e) = self.error {
            return Err(Error::io(path, e));
        }
        self.writer
            .finish()
            .and_then(|mut w| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

struct Sampled {
    blocks: Vec<WignerAccumulator>,
    stats: RunStats,
}

fn sample(config: &RunConfig, integ: &IntegratorConfig, table: &CoefficientTable, params: &DeviceParams, dump: Option<&mut TrajectoryDump>) -> Result<Sampled> {
    let n_blocks = config.integrator.blocks;
    let expected = (integ.n_steps - integ.burn_in_steps) / integ.record_stride;
    let mut blocks = vec![WignerAccumulator::new(params, config.grid); n_blocks];
    let mut seen = 0u64;
    let mut dump = dump;
    let stats = run_streaming(integ, table, params, |t, x, v| {
        let b = ((seen as u128 * n_blocks as u128) / expected.max(1) as u128) as usize;
        blocks[b.min(n_blocks - 1)].push(x, v);
        seen += 1;
        if let Some(d) = dump.as_deref_mut() {
            d.push(t, x, v);
        }
    })?;
    Ok(Sampled { blocks, stats })
}

/// Runs the whole pipeline for one voltage and writes its artifacts into
/// `dir`.
pub fn run_voltage(config: &RunConfig, voltage: f64, seed: u64, dir: &Path) -> Result<VoltageResult> {
    create_dir(dir)?;
    let params = config.device.params_at(voltage);
    params.validate()?;
    check_adiabaticity(&params);
    let integ = config.integrator.integrator(seed);

    let mut half_width = config.table.half_width;
    let mut extensions = 0;
    let (table, sampled) = loop {
        let table = table_for(&params, config, half_width)?;
        let dump_path = dir.join("trajectory.csv.gz");
        let mut dump = if config.integrator.dump_trajectory {
            Some(TrajectoryDump::create(&dump_path, config.integrator.dump_stride)?)
        } else {
            None
        };
        let sampled = sample(config, &integ, &table, &params, dump.as_mut())?;
        if let Some(d) = dump {
            d.finish(&dump_path)?;
        }
        let clamped = sampled.stats.clamp_fraction();
        if config.table.auto_extend && clamped > CLAMP_EXTEND_FRACTION && extensions < config.table.max_extensions {
            extensions += 1;
            half_width *= 1.5;
            log::info!("V = {voltage}: {:.2}% of steps clamped; widening table to ±{half_width} x0", 100.0 * clamped);
            continue;
        }
        break (table, sampled);
    };

    table.write_csv(&dir.join("coefficients.csv"))?;
    if config.integrator.dump_trajectory {
        write_json(
            &dir.join("trajectory.json"),
            &serde_json::json!({
                "columns": ["t", "x", "v"],
                "dump_stride": config.integrator.dump_stride,
                "integrator": integ,
                "params": params,
            }),
        )?;
    }

    let interval = find_negative_damping_interval(&table);
    let above = interval.is_some();
    let mut all = sampled.blocks[0].clone();
    for b in &sampled.blocks[1..] {
        all.merge(b);
    }
    let est = estimate(&all, config, voltage, params.omega0, above)?;
    let uncertainty = block_uncertainty(&sampled.blocks, config, voltage, params.omega0, above)?;

    est.grid.write_csv(&dir.join("wigner.csv"))?;
    est.profile.write_csv(&dir.join("radial.csv"))?;
    est.state.write_csv(&dir.join("populations.csv"))?;

    let result = VoltageResult {
        voltage,
        seed,
        report: est.report,
        uncertainty,
        nbar_wigner: est.nbar_wigner,
        g2_wigner: all.moments().coherence(),
        profile_mode: est.profile.mode(),
        asymmetry: est.profile.asymmetry,
        clipped_mass: est.state.clipped_mass,
        n_max: est.state.n_max,
        negative_damping_interval: interval,
        table_half_width: half_width,
        clamp_fraction: sampled.stats.clamp_fraction(),
        outside_fraction: all.outside() as f64 / all.total() as f64,
        recorded_samples: all.total(),
        populations: est.state.populations.clone(),
    };
    let mut thermo = serde_json::to_value(&result)?;
    if let Some(obj) = thermo.as_object_mut() {
        // populations live in their own CSV
        obj.remove("populations");
    }
    write_json(&dir.join("thermo.json"), &thermo)?;
    Ok(result)
}

fn list_files(root: &Path, dir: &Path) -> Result<Vec<FileEntry>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            Ok(FileEntry {
                path: p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn summary_csv(results: &[&VoltageResult]) -> String {
    let mut out = String::from("V,nbar,U,S,g2,W_E,W_F,passive,above_threshold\n");
    for r in results {
        let t = &r.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.voltage),
            fmt_f64(t.nbar),
            fmt_f64(t.energy),
            fmt_f64(t.entropy),
            t.g2.map(fmt_f64).unwrap_or_default(),
            fmt_f64(t.ergotropy),
            fmt_f64(t.free_energy_work),
            t.passive,
            t.above_threshold,
        ));
    }
    out
}

fn uncertainty_csv(results: &[&VoltageResult]) -> String {
    let mut out = String::from("V,nbar_err,U_err,S_err,g2_err,W_E_err,W_F_err,nbar_wigner,nbar_wigner_err,mode,mode_err\n");
    for r in results {
        let u = &r.uncertainty;
        let cols = [
            r.voltage,
            u.nbar,
            u.energy,
            u.entropy,
            u.g2,
            u.ergotropy,
            u.free_energy_work,
            r.nbar_wigner,
            u.nbar_wigner,
            r.profile_mode,
            u.profile_mode,
        ];
        out.push_str(&cols.iter().map(|c| fmt_f64(*c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("flywheel-core {}", env!("CARGO_PKG_VERSION")))
}

/// Runs every voltage of the scan on a pool of `config.workers` threads.
/// Per-voltage failures are recorded, not propagated; only setup and
/// summary I/O errors abort the sweep.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let root = config.out_dir.clone();
    create_dir(&root)?;
    let seeds: Vec<u64> = (0..config.voltages.len()).map(|i| derive_seed(config.seed, i)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let jobs: Vec<(std::result::Result<VoltageResult, String>, VoltageRecord)> = pool.install(|| {
        config
            .voltages
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let dir = root.join(voltage_dir(i, v));
                let t0 = Instant::now();
                let result = run_voltage(config, v, seeds[i], &dir).map_err(|e| e.to_string());
                let runtime_s = t0.elapsed().as_secs_f64();
                if let Err(e) = &result {
                    log::error!("V = {v} failed: {e}");
                }
                let files = if dir.is_dir() { list_files(&root, &dir).unwrap_or_default() } else { Vec::new() };
                let record = VoltageRecord {
                    voltage: v,
                    seed: seeds[i],
                    status: if result.is_ok() { "ok" } else { "failed" }.into(),
                    error: result.as_ref().err().cloned(),
                    runtime_s,
                    files,
                };
                (result, record)
            })
            .collect()
    });
    let (results, records): (Vec<_>, Vec<_>) = jobs.into_iter().unzip();

    let ok: Vec<&VoltageResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    write_text(&root.join(SUMMARY_FILE), &summary_csv(&ok))?;
    write_text(&root.join(UNCERTAINTY_FILE), &uncertainty_csv(&ok))?;
    let top_files = [SUMMARY_FILE, UNCERTAINTY_FILE]
        .iter()
        .map(|f| {
            Ok(FileEntry {
                path: f.to_string(),
                sha256: sha256_file(&root.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_voltage: BTreeMap<String, &VoltageRecord> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (voltage_dir(i, r.voltage), r))
        .collect();
    write_json(
        &root.join(MANIFEST_FILE),
        &serde_json::json!({
            "config": config,
            "seeds": seeds,
            "git_describe": git_describe(),
            "started_at": started_at,
            "workers": pool.current_num_threads(),
            "files": top_files,
            "per_voltage": per_voltage,
        }),
    )?;
    Ok(SweepOutcome {
        results,
        records,
        out_dir: root,
    })
}

/// Recomputes thermodynamics from a stored populations CSV.
pub fn analyze_populations(path: &Path, voltage: f64, beta: f64, above_threshold: bool) -> Result<ThermoReport> {
    let state = DiagonalState::read_csv(path)?;
    analyze(&state, voltage, beta, above_threshold)
}
