//! Globally adaptive Gauss–Kronrod (7/15) integration.
//!
//! Intervals are kept in a max-heap keyed on their error estimate and the
//! worst one is bisected until the summed error meets the tolerance. Semi-
//! infinite tails are mapped onto (0, 1] with x = a ± (1 − t)/t.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Failure to reach the requested tolerance within the interval budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotConverged {
    pub estimate: Estimate,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// x = origin + (1 − t)/t on t ∈ (0, 1]
    Upper(f64),
    /// x = origin − (1 − t)/t on t ∈ (0, 1]
    Lower(f64),
}

impl Map {
    #[inline]
    fn eval<F: FnMut(f64) -> f64>(self, f: &mut F, t: f64) -> f64 {
        match self {
            Map::Identity => f(t),
            Map::Upper(a) => {
                let s = (1.0 - t) / t;
                f(a + s) / (t * t)
            }
            Map::Lower(a) => {
                let s = (1.0 - t) / t;
                f(a - s) / (t * t)
            }
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    map: Map,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, map: Map, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = map.eval(f, center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = map.eval(f, center - dx);
        let f2 = map.eval(f, center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Tolerances and interval budget for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_segments: 2000,
        }
    }
}

impl Quadrature {
    /// ∫ f over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Estimate, NotConverged> {
        self.integrate_breaks(f, &[a, b])
    }

    /// ∫ f over [points[0], points[last]], with the interior points used as
    /// initial subdivision boundaries.
    pub fn integrate_breaks<F: FnMut(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<Estimate, NotConverged> {
        let pieces: Vec<(f64, f64, Map)> = points
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1], Map::Identity))
            .collect();
        self.run(f, pieces)
    }

    /// ∫ f over the whole real line. `points` (at least two, any order)
    /// mark where the integrand has structure; outside their hull the two
    /// tails are mapped onto finite intervals.
    pub fn integrate_real_line<F: FnMut(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<Estimate, NotConverged> {
        let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
        let lo = pts[0];
        let hi = pts[pts.len() - 1];
        let mut pieces = vec![(0.0, 1.0, Map::Lower(lo)), (0.0, 1.0, Map::Upper(hi))];
        pieces.extend(pts.windows(2).map(|w| (w[0], w[1], Map::Identity)));
        self.run(f, pieces)
    }

    fn run<F: FnMut(f64) -> f64>(&self, mut f: F, pieces: Vec<(f64, f64, Map)>) -> Result<Estimate, NotConverged> {
        let mut heap = BinaryHeap::with_capacity(self.max_segments + pieces.len());
        let mut evaluations = 0;
        for (a, b, map) in pieces {
            let (value, error) = kronrod(&mut f, map, a, b);
            evaluations += 15;
            heap.push(Segment { a, b, map, value, error });
        }
        loop {
            let (value, error) = heap
                .iter()
                .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
            let tolerance = self.abs_tol.max(self.rel_tol * value.abs());
            let estimate = Estimate {
                value,
                error,
                evaluations,
            };
            if error <= tolerance {
                return Ok(estimate);
            }
            if heap.len() >= self.max_segments {
                return Err(NotConverged { estimate, tolerance });
            }
            let worst = heap.pop().expect("non-empty heap");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval cannot be split further in floating point
                return Err(NotConverged { estimate, tolerance });
            }
            for (a, b) in [(worst.a, mid), (mid, worst.b)] {
                let (value, error) = kronrod(&mut f, worst.map, a, b);
                evaluations += 15;
                heap.push(Segment {
                    a,
                    b,
                    map: worst.map,
                    value,
                    error,
                });
            }
        }
    }
}

/// Nodes and weights of the 15-point Kronrod rule repeated over `panels`
/// equal panels of [a, b].
pub fn composite_kronrod(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(15 * panels);
    let mut weights = Vec::with_capacity(15 * panels);
    for k in 0..panels {
        let center = a + (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for j in 0..7 {
            nodes.push(center - half * XGK[j]);
            weights.push(half * WGK[j]);
            nodes.push(center + half * XGK[j]);
            weights.push(half * WGK[j]);
        }
        nodes.push(center);
        weights.push(half * WGK[7]);
    }
    (nodes, weights)
}
