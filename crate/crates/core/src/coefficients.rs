//! Precomputed ⟨n⟩ₓ, D(x) and γ(x) on a position grid.
//!
//! The integrator never evaluates the electronic problem directly; it reads
//! these tables through natural cubic splines. Lookups outside the grid are
//! clamped to the edge values and counted.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::electronic::{Coefficients, SteadyState};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::params::DeviceParams;

pub const MIN_NODES: usize = 16;
pub const DEFAULT_NODES: usize = 640;
/// Default half-width of the grid in units of x₀. The saturated limit cycle
/// at high bias reaches |x| ≈ 24 x₀.
pub const DEFAULT_HALF_WIDTH: f64 = 30.0;
/// Half-width used when only the region around the origin matters.
pub const CORE_HALF_WIDTH: f64 = 12.0;

/// Natural cubic spline second derivatives for data on `x`.
fn spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations, M_0 = M_{n-1} = 0.
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Per-node payload: values then spline moments for (n, D, γ).
type Node = [f64; 6];

#[derive(Debug)]
pub struct CoefficientTable {
    positions: Vec<f64>,
    nodes: Vec<Node>,
    /// Set when the grid is uniform: (x_min, 1/h).
    uniform: Option<(f64, f64)>,
    params: DeviceParams,
    fingerprint: String,
    out_of_range: AtomicU64,
}

impl Clone for CoefficientTable {
    fn clone(&self) -> Self {
        CoefficientTable {
            positions: self.positions.clone(),
            nodes: self.nodes.clone(),
            uniform: self.uniform,
            params: self.params,
            fingerprint: self.fingerprint.clone(),
            out_of_range: AtomicU64::new(self.out_of_range.load(Ordering::Relaxed)),
        }
    }
}

/// Result of a table lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub occupation: f64,
    pub diffusion: f64,
    pub damping: f64,
    pub clamped: bool,
}

impl CoefficientTable {
    /// Assembles a table from sampled values. Used by [`build_table`], by
    /// CSV import and by tests that need synthetic coefficient curves.
    pub fn from_samples(
        params: DeviceParams,
        positions: Vec<f64>,
        occupation: Vec<f64>,
        diffusion: Vec<f64>,
        damping: Vec<f64>,
    ) -> Result<Self> {
        let n = positions.len();
        if n < MIN_NODES {
            return Err(Error::invalid("n_points", format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        if occupation.len() != n || diffusion.len() != n || damping.len() != n {
            return Err(Error::invalid("table", "coefficient arrays differ in length"));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("table", "grid must be strictly increasing"));
        }
        if let Some(d) = diffusion.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::invalid("table", format!("negative or NaN diffusion value {d}")));
        }
        let mn = spline_moments(&positions, &occupation);
        let md = spline_moments(&positions, &diffusion);
        let mg = spline_moments(&positions, &damping);
        let nodes = (0..n)
            .map(|i| [occupation[i], diffusion[i], damping[i], mn[i], md[i], mg[i]])
            .collect();
        let h = (positions[n - 1] - positions[0]) / (n - 1) as f64;
        let uniform = positions
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (positions[0] + i as f64 * h)).abs() <= 1e-9 * h)
            .then_some((positions[0], 1.0 / h));
        Ok(CoefficientTable {
            positions,
            nodes,
            uniform,
            fingerprint: params.fingerprint(),
            params,
            out_of_range: AtomicU64::new(0),
        })
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn interpolation_order(&self) -> usize {
        3
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.positions[0]
    }

    pub fn x_max(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }

    pub fn occupation_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n[0])
    }

    pub fn diffusion_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n[1])
    }

    pub fn damping_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n[2])
    }

    /// Largest |γ| over the nodes.
    pub fn max_abs_damping(&self) -> f64 {
        self.damping_values().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// How many lookups have been clamped since construction.
    pub fn out_of_range_count(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    #[inline]
    fn segment(&self, x: f64) -> usize {
        let last = self.positions.len() - 2;
        match self.uniform {
            Some((x_min, inv_h)) => (((x - x_min) * inv_h) as usize).min(last),
            None => self.positions.partition_point(|&p| p <= x).saturating_sub(1).min(last),
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> [f64; 3] {
        let i = self.segment(x);
        let (x0, x1) = (self.positions[i], self.positions[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = 1.0 - a;
        let c = (a * a * a - a) * h * h / 6.0;
        let d = (b * b * b - b) * h * h / 6.0;
        let (lo, hi) = (&self.nodes[i], &self.nodes[i + 1]);
        [
            a * lo[0] + b * hi[0] + c * lo[3] + d * hi[3],
            a * lo[1] + b * hi[1] + c * lo[4] + d * hi[4],
            a * lo[2] + b * hi[2] + c * lo[5] + d * hi[5],
        ]
    }

    /// Interpolated (⟨n⟩ₓ, D(x), γ(x)).
    #[inline]
    pub fn lookup(&self, x: f64) -> Lookup {
        let (xc, clamped) = if x < self.x_min() {
            (self.x_min(), true)
        } else if x > self.x_max() {
            (self.x_max(), true)
        } else {
            (x, false)
        };
        if clamped {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
        }
        let [occupation, diffusion, damping] = self.eval(xc);
        Lookup {
            occupation,
            diffusion: diffusion.max(0.0),
            damping,
            clamped,
        }
    }

    /// Interpolated γ without touching the clamp counter.
    pub fn damping_at(&self, x: f64) -> f64 {
        self.eval(x.clamp(self.x_min(), self.x_max()))[2]
    }

    /// CSV with header `x,n_excess,D,gamma` plus a JSON sidecar next to it
    /// (`<stem>.json`) holding the device parameters and fingerprint.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("x,n_excess,D,gamma\n");
        for (x, n) in self.positions.iter().zip(&self.nodes) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(*x),
                fmt_f64(n[0]),
                fmt_f64(n[1]),
                fmt_f64(n[2])
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let sidecar = TableSidecar {
            params: self.params,
            fingerprint: self.fingerprint.clone(),
            interpolation_order: self.interpolation_order(),
            n_points: self.len(),
        };
        let side_path = path.with_extension("json");
        let mut f = fs::File::create(&side_path).map_err(|e| Error::io(&side_path, e))?;
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        f.write_all(b"\n").map_err(|e| Error::io(&side_path, e))?;
        Ok(())
    }

    /// Reads a table written by [`Self::write_csv`], rejecting it if the
    /// sidecar fingerprint does not match its parameters.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let side_path = path.with_extension("json");
        let side_text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: TableSidecar = serde_json::from_str(&side_text)?;
        if sidecar.params.fingerprint() != sidecar.fingerprint {
            return Err(Error::Format {
                what: "coefficient table sidecar",
                reason: "fingerprint does not match parameters".into(),
            });
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("x,n_excess,D,gamma") {
            return Err(Error::Format {
                what: "coefficient table",
                reason: "expected header `x,n_excess,D,gamma`".into(),
            });
        }
        let mut cols: [Vec<f64>; 4] = Default::default();
        for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Format {
                    what: "coefficient table",
                    reason: format!("line {}: expected 4 fields", lineno + 2),
                });
            }
            for (col, field) in cols.iter_mut().zip(fields) {
                col.push(field.trim().parse().map_err(|_| Error::Format {
                    what: "coefficient table",
                    reason: format!("line {}: bad number `{field}`", lineno + 2),
                })?);
            }
        }
        let [x, n, d, g] = cols;
        Self::from_samples(sidecar.params, x, n, d, g)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableSidecar {
    params: DeviceParams,
    fingerprint: String,
    interpolation_order: usize,
    n_points: usize,
}

/// Evaluates the electronic coefficients on `n_points` uniform nodes over
/// [x_min, x_max], in parallel over nodes.
pub fn build_table(params: &DeviceParams, x_min: f64, x_max: f64, n_points: usize) -> Result<CoefficientTable> {
    build_table_with(&SteadyState::default(), params, x_min, x_max, n_points)
}

pub fn build_table_with(
    solver: &SteadyState,
    params: &DeviceParams,
    x_min: f64,
    x_max: f64,
    n_points: usize,
) -> Result<CoefficientTable> {
    params.validate()?;
    if n_points < MIN_NODES {
        return Err(Error::invalid("n_points", format!("need at least {MIN_NODES} nodes, got {n_points}")));
    }
    if !(x_max > x_min) {
        return Err(Error::invalid("x_max", "grid range is empty"));
    }
    let h = (x_max - x_min) / (n_points - 1) as f64;
    let positions: Vec<f64> = (0..n_points).map(|i| x_min + i as f64 * h).collect();
    let coeffs: Vec<Coefficients> = positions
        .par_iter()
        .map(|&x| solver.coefficients(x, params))
        .collect::<Result<_>>()?;
    CoefficientTable::from_samples(
        *params,
        positions,
        coeffs.iter().map(|c| c.occupation).collect(),
        coeffs.iter().map(|c| c.diffusion).collect(),
        coeffs.iter().map(|c| c.damping).collect(),
    )
}

/// Table on the default symmetric range ±30 x₀ with 640 nodes.
pub fn default_table(params: &DeviceParams) -> Result<CoefficientTable> {
    let reach = DEFAULT_HALF_WIDTH * params.x0();
    build_table(params, -reach, reach, DEFAULT_NODES)
}

/// Longest contiguous interval on which the interpolated γ is negative,
/// with endpoints refined by bisection on the spline.
pub fn find_negative_damping_interval(table: &CoefficientTable) -> Option<(f64, f64)> {
    let xs = table.positions();
    let gammas: Vec<f64> = table.damping_values().collect();
    let refine = |mut a: f64, mut b: f64| {
        // γ changes sign on [a, b]
        let sign_a = table.damping_at(a) < 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if (table.damping_at(mid) < 0.0) == sign_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < xs.len() {
        if gammas[i] >= 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < xs.len() && gammas[i + 1] < 0.0 {
            i += 1;
        }
        let lo = if start == 0 { xs[0] } else { refine(xs[start - 1], xs[start]) };
        let hi = if i + 1 == xs.len() { xs[i] } else { refine(xs[i], xs[i + 1]) };
        if best.is_none_or(|(a, b)| hi - lo > b - a) {
            best = Some((lo, hi));
        }
        i += 1;
    }
    best
}

/// Bisects on `voltage` for the onset of negative damping, assuming the
/// above-threshold set is upward closed. `make` maps a voltage to device
/// parameters. Returns `None` if the state at `lo` is already above
/// threshold or the one at `hi` is not.
pub fn find_threshold_voltage<M>(make: M, lo: f64, hi: f64, tolerance: f64, n_points: usize) -> Result<Option<f64>>
where
    M: Fn(f64) -> DeviceParams,
{
    let above = |v: f64| -> Result<bool> {
        let params = make(v);
        let reach = CORE_HALF_WIDTH * params.x0();
        let table = build_table(&params, -reach, reach, n_points)?;
        Ok(find_negative_damping_interval(&table).is_some())
    };
    if above(lo)? || !above(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tolerance {
        let mid = 0.5 * (a + b);
        if above(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}
