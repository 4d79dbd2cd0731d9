//! Histogram estimate of the steady-state Wigner function.
//!
//! Samples (x, mẋ) are scaled to α = x/x₀ + i p/p₀ so that the vacuum has
//! ⟨(x/x₀)²⟩ = ¼ and a radially symmetric state depends only on u = |α|.
//! Densities are per unit area in these scaled coordinates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_json, write_text};
use crate::langevin::Trajectory;
use crate::params::DeviceParams;

/// Largest fraction of samples allowed to miss the grid.
pub const MAX_OUTSIDE_FRACTION: f64 = 1e-3;

/// Square grid, symmetric about the origin in both scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    /// Bins per axis; odd so a bin is centred on the origin.
    pub bins: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            half_width: 25.0,
            bins: 401,
        }
    }
}

impl GridSpec {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.bins).map(|i| -self.half_width + i as f64 * w).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.bins).map(|i| -self.half_width + (i as f64 + 0.5) * w).collect()
    }

    #[inline]
    fn index(&self, v: f64) -> Option<usize> {
        let k = (v + self.half_width) / self.bin_width();
        (k >= 0.0 && k < self.bins as f64).then_some(k as usize)
    }
}

/// Running sums of the raw scaled samples, kept next to the histogram so
/// grid moments can be checked against exact sample moments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub count: u64,
    pub sum_x: f64,
    pub sum_p: f64,
    pub sum_x2: f64,
    pub sum_p2: f64,
    pub sum_r4: f64,
}

impl SampleMoments {
    fn push(&mut self, a: f64, b: f64) {
        let r2 = a * a + b * b;
        self.count += 1;
        self.sum_x += a;
        self.sum_p += b;
        self.sum_x2 += a * a;
        self.sum_p2 += b * b;
        self.sum_r4 += r2 * r2;
    }

    fn merge(&mut self, o: &SampleMoments) {
        self.count += o.count;
        self.sum_x += o.sum_x;
        self.sum_p += o.sum_p;
        self.sum_x2 += o.sum_x2;
        self.sum_p2 += o.sum_p2;
        self.sum_r4 += o.sum_r4;
    }

    pub fn mean_x(&self) -> f64 {
        self.sum_x / self.count as f64
    }

    pub fn mean_p(&self) -> f64 {
        self.sum_p / self.count as f64
    }

    pub fn mean_x2(&self) -> f64 {
        self.sum_x2 / self.count as f64
    }

    pub fn mean_p2(&self) -> f64 {
        self.sum_p2 / self.count as f64
    }

    /// n̄_W = ⟨(x/x₀)² + (p/p₀)²⟩ − ½, the symmetric-ordering estimate of ⟨a†a⟩.
    pub fn mean_occupation(&self) -> f64 {
        self.mean_x2() + self.mean_p2() - 0.5
    }

    /// g²(0) from symmetric moments: ⟨a†²a²⟩ = ⟨|α|⁴⟩_W − 2⟨|α|²⟩_W + ½.
    pub fn coherence(&self) -> f64 {
        let m2 = self.mean_x2() + self.mean_p2();
        let m4 = self.sum_r4 / self.count as f64;
        let n = m2 - 0.5;
        (m4 - 2.0 * m2 + 0.5) / (n * n)
    }
}

/// Mergeable partial histogram. Partial results from trajectory segments
/// combine by addition in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerAccumulator {
    spec: GridSpec,
    x_scale: f64,
    p_scale: f64,
    counts: Vec<u64>,
    outside: u64,
    moments: SampleMoments,
}

impl WignerAccumulator {
    pub fn new(params: &DeviceParams, spec: GridSpec) -> Self {
        WignerAccumulator {
            spec,
            x_scale: 1.0 / params.x0(),
            p_scale: params.mass / params.p0(),
            counts: vec![0; spec.bins * spec.bins],
            outside: 0,
            moments: SampleMoments::default(),
        }
    }

    /// Adds one sample given in physical position and velocity.
    #[inline]
    pub fn push(&mut self, x: f64, v: f64) {
        self.push_scaled(x * self.x_scale, v * self.p_scale);
    }

    /// Adds one sample already in (x/x₀, p/p₀).
    #[inline]
    pub fn push_scaled(&mut self, a: f64, b: f64) {
        self.moments.push(a, b);
        match (self.spec.index(a), self.spec.index(b)) {
            (Some(i), Some(j)) => self.counts[i * self.spec.bins + j] += 1,
            _ => self.outside += 1,
        }
    }

    pub fn merge(&mut self, other: &WignerAccumulator) {
        assert_eq!(self.spec, other.spec, "merging histograms on different grids");
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.outside += other.outside;
        self.moments.merge(&other.moments);
    }

    pub fn total(&self) -> u64 {
        self.moments.count
    }

    pub fn outside(&self) -> u64 {
        self.outside
    }

    pub fn moments(&self) -> &SampleMoments {
        &self.moments
    }

    /// Normalized density grid; fails if too many samples missed the grid.
    pub fn finish(&self) -> Result<WignerGrid> {
        let total = self.total();
        if total == 0 || self.outside as f64 > MAX_OUTSIDE_FRACTION * total as f64 {
            return Err(Error::SamplesOutsideGrid {
                outside: self.outside,
                total,
            });
        }
        let inside = (total - self.outside) as f64;
        let w = self.spec.bin_width();
        let norm = 1.0 / (inside * w * w);
        Ok(WignerGrid {
            spec: self.spec,
            x_edges: self.spec.edges(),
            p_edges: self.spec.edges(),
            densities: self.counts.iter().map(|&c| c as f64 * norm).collect(),
            n_samples: total,
            outside: self.outside,
            moments: self.moments,
        })
    }
}

/// Density-normalized 2D histogram over (x/x₀, p/p₀); row index is x.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub x_edges: Vec<f64>,
    pub p_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub n_samples: u64,
    pub outside: u64,
    pub moments: SampleMoments,
}

/// Moments of the binned density, evaluated at bin centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub mean_x2: f64,
    pub mean_p2: f64,
}

impl WignerGrid {
    #[inline]
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.densities[i * self.spec.bins + j]
    }

    pub fn bin_area(&self) -> f64 {
        self.spec.bin_width().powi(2)
    }

    /// Σ W ΔxΔp, equal to 1 by construction.
    pub fn total_mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_area()
    }

    pub fn moments(&self) -> GridMoments {
        let c = self.spec.centers();
        let area = self.bin_area();
        let mut m = GridMoments {
            mean_x: 0.0,
            mean_p: 0.0,
            mean_x2: 0.0,
            mean_p2: 0.0,
        };
        for (i, &x) in c.iter().enumerate() {
            for (j, &p) in c.iter().enumerate() {
                let w = self.density(i, j) * area;
                m.mean_x += w * x;
                m.mean_p += w * p;
                m.mean_x2 += w * x * x;
                m.mean_p2 += w * p * p;
            }
        }
        m
    }

    /// CSV of `x,p,W` triplets over bin centres plus `<stem>.json` metadata.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let c = self.spec.centers();
        let mut out = String::with_capacity(c.len() * c.len() * 72 + 8);
        out.push_str("x,p,W\n");
        for (i, x) in c.iter().enumerate() {
            let xs = fmt_f64(*x);
            for (j, p) in c.iter().enumerate() {
                out.push_str(&xs);
                out.push(',');
                out.push_str(&fmt_f64(*p));
                out.push(',');
                out.push_str(&fmt_f64(self.density(i, j)));
                out.push('\n');
            }
        }
        write_text(path, &out)?;
        write_json(
            &path.with_extension("json"),
            &serde_json::json!({
                "grid": self.spec,
                "bin_width": self.spec.bin_width(),
                "n_samples": self.n_samples,
                "outside": self.outside,
                "coordinates": "x/x0, p/p0",
            }),
        )
    }
}

/// Builds the Wigner estimate from recorded trajectory samples.
pub fn estimate_wigner(trajectory: &Trajectory, params: &DeviceParams, spec: GridSpec) -> Result<WignerGrid> {
    let mut acc = WignerAccumulator::new(params, spec);
    for (&x, &v) in trajectory.positions.iter().zip(&trajectory.velocities) {
        acc.push(x, v);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadialSpec {
    pub bin_width: f64,
    pub max_radius: f64,
}

impl Default for RadialSpec {
    fn default() -> Self {
        RadialSpec {
            bin_width: 0.1,
            max_radius: 25.0,
        }
    }
}

/// Threshold on the azimuthal asymmetry diagnostic above which radial
/// symmetry (and so a diagonal density matrix) is in doubt.
pub const ASYMMETRY_WARNING: f64 = 0.2;

const SECTORS: usize = 8;
const SUBDIVISIONS: usize = 8;
/// Radial width over which sectors are pooled for the asymmetry diagnostic.
const ANNULUS: f64 = 1.0;

/// Angular average W(u) of a radially symmetric Wigner function.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    pub bin_width: f64,
    /// max over well-populated annuli of (max − min sector mean) / mean.
    pub asymmetry: f64,
}

impl RadialProfile {
    /// Profile sampled from a closed-form W(u) at bin centres.
    pub fn from_fn(bin_width: f64, max_radius: f64, w: impl Fn(f64) -> f64) -> Self {
        let n = (max_radius / bin_width).round() as usize;
        let centers: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * bin_width).collect();
        let values = centers.iter().map(|&u| w(u)).collect();
        RadialProfile {
            centers,
            values,
            bin_width,
            asymmetry: 0.0,
        }
    }

    /// 2π Σ u W(u) Δu.
    pub fn normalization(&self) -> f64 {
        2.0 * std::f64::consts::PI
            * self
                .centers
                .iter()
                .zip(&self.values)
                .map(|(u, w)| u * w)
                .sum::<f64>()
            * self.bin_width
    }

    /// Centre of the bin holding the largest W(u).
    pub fn mode(&self) -> f64 {
        let k = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) })
            .0;
        self.centers[k]
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry <= ASYMMETRY_WARNING
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("u,W\n");
        for (u, w) in self.centers.iter().zip(&self.values) {
            out.push_str(&format!("{},{}\n", fmt_f64(*u), fmt_f64(*w)));
        }
        write_text(path, &out)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("u,W") {
            return Err(Error::Format {
                what: "radial profile",
                reason: "expected header `u,W`".into(),
            });
        }
        let mut centers = Vec::new();
        let mut values = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Format {
                    what: "radial profile",
                    reason: format!("bad line `{line}`"),
                })
            };
            let mut it = line.split(',');
            centers.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        if centers.len() < 2 {
            return Err(Error::Format {
                what: "radial profile",
                reason: "needs at least two bins".into(),
            });
        }
        let bin_width = centers[1] - centers[0];
        Ok(RadialProfile {
            centers,
            values,
            bin_width,
            asymmetry: 0.0,
        })
    }
}

#[inline]
fn octant(a: f64, b: f64) -> usize {
    let mut k = 0;
    let (mut a, mut b) = (a, b);
    if b < 0.0 {
        a = -a;
        b = -b;
        k += 4;
    }
    if a <= 0.0 {
        let t = a;
        a = b;
        b = -t;
        k += 2;
    }
    if b > a {
        k += 1;
    }
    k
}

/// Area-weighted azimuthal average of the grid over rings of width
/// `spec.bin_width`. Each grid bin is split into sub-cells that are assigned
/// to rings (and to eight angular sectors for the asymmetry diagnostic) by
/// their centres.
pub fn radial_profile(grid: &WignerGrid, spec: RadialSpec) -> RadialProfile {
    let n_rings = (spec.max_radius / spec.bin_width).round() as usize;
    let mut mass = vec![0.0; n_rings];
    let mut area = vec![0.0; n_rings];
    let mut sector_mass = vec![[0.0; SECTORS]; n_rings];
    let mut sector_area = vec![[0.0; SECTORS]; n_rings];
    let w = grid.spec.bin_width();
    let sub = w / SUBDIVISIONS as f64;
    let sub_area = sub * sub;
    let edges = &grid.x_edges;
    for i in 0..grid.spec.bins {
        for j in 0..grid.spec.bins {
            let d = grid.density(i, j);
            for si in 0..SUBDIVISIONS {
                let a = edges[i] + (si as f64 + 0.5) * sub;
                for sj in 0..SUBDIVISIONS {
                    let b = edges[j] + (sj as f64 + 0.5) * sub;
                    let k = ((a * a + b * b).sqrt() / spec.bin_width) as usize;
                    if k >= n_rings {
                        continue;
                    }
                    let s = octant(a, b);
                    mass[k] += d * sub_area;
                    area[k] += sub_area;
                    sector_mass[k][s] += d * sub_area;
                    sector_area[k][s] += sub_area;
                }
            }
        }
    }
    let values: Vec<f64> = mass
        .iter()
        .zip(&area)
        .map(|(m, a)| if *a > 0.0 { m / a } else { 0.0 })
        .collect();
    // sectors are compared over annuli of width ANNULUS so each sector spans
    // many grid cells
    let per = ((ANNULUS / spec.bin_width).round() as usize).max(1);
    let annuli: Vec<[f64; 2 * SECTORS]> = sector_mass
        .chunks(per)
        .zip(sector_area.chunks(per))
        .map(|(ms, as_)| {
            let mut acc = [0.0; 2 * SECTORS];
            for (m, a) in ms.iter().zip(as_) {
                for s in 0..SECTORS {
                    acc[s] += m[s];
                    acc[SECTORS + s] += a[s];
                }
            }
            acc
        })
        .collect();
    let means: Vec<f64> = annuli
        .iter()
        .map(|a| {
            let (m, ar): (f64, f64) = (a[..SECTORS].iter().sum(), a[SECTORS..].iter().sum());
            if ar > 0.0 { m / ar } else { 0.0 }
        })
        .collect();
    let peak = means.iter().copied().fold(0.0, f64::max);
    let mut asymmetry: f64 = 0.0;
    for (a, &mean) in annuli.iter().zip(&means) {
        if mean <= 0.0 || mean < 0.1 * peak || a[SECTORS..].iter().any(|&ar| ar <= 0.0) {
            continue;
        }
        let sector = |s: usize| a[s] / a[SECTORS + s];
        let hi = (0..SECTORS).map(sector).fold(f64::NEG_INFINITY, f64::max);
        let lo = (0..SECTORS).map(sector).fold(f64::INFINITY, f64::min);
        asymmetry = asymmetry.max((hi - lo) / mean);
    }
    if asymmetry > ASYMMETRY_WARNING {
        log::warn!("Wigner estimate is not radially symmetric: asymmetry {asymmetry:.3}");
    }
    RadialProfile {
        centers: (0..n_rings).map(|k| (k as f64 + 0.5) * spec.bin_width).collect(),
        values,
        bin_width: spec.bin_width,
        asymmetry,
    }
}
