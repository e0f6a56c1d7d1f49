//! Geometric supports, ball unions, and Monte Carlo machinery for checking
//! that sampled neighborhoods approximate a distribution's support.

mod coverage;
mod covering;
mod hausdorff;

pub use coverage::{coverage_trial, required_n, wilson_interval, CoverageReport};
pub use covering::covering_number;
pub use hausdorff::{hausdorff_distance, HausdorffEstimate};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Compact support shapes with a uniform sampling distribution and
/// analytically known standardness constants `(r0, c0)`:
/// `nu(B(x, r)) >= c0 * r^d` for all `x` in the support and `r <= r0`.
///
/// The constants come from the worst-case boundary point (corner of a box,
/// rim of a disk) and are conservative by construction.
#[derive(Debug, Clone, Serialize)]
pub enum SupportSpec {
    /// Axis-aligned cube `[0, side]^dim`, `dim` in 1..=3.
    Box { dim: usize, side: f64 },
    /// Disk of the given radius centered at the origin (2-D).
    Disk { radius: f64 },
    /// Annulus between the two radii, centered at the origin (2-D).
    Annulus { r_in: f64, r_out: f64 },
    /// Union of disjoint disks (2-D), sampled proportionally to area.
    TwoClusters {
        centers: Vec<[f64; 2]>,
        radii: Vec<f64>,
    },
}

impl SupportSpec {
    pub fn unit_square() -> Self {
        SupportSpec::Box { dim: 2, side: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SupportSpec::Box { dim, side } => {
                if !(1..=3).contains(dim) {
                    return Err(Error::invalid("box supports dims 1..=3"));
                }
                if !(*side > 0.0) {
                    return Err(Error::invalid("box side must be positive"));
                }
            }
            SupportSpec::Disk { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::invalid("disk radius must be positive"));
                }
            }
            SupportSpec::Annulus { r_in, r_out } => {
                if !(*r_in > 0.0) || !(*r_out > *r_in) {
                    return Err(Error::invalid("annulus needs 0 < r_in < r_out"));
                }
            }
            SupportSpec::TwoClusters { centers, radii } => {
                if centers.is_empty() || centers.len() != radii.len() {
                    return Err(Error::invalid("clusters need matching centers and radii"));
                }
                if radii.iter().any(|r| *r < 0.0) {
                    return Err(Error::invalid("cluster radii must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SupportSpec::Box { dim, .. } => *dim,
            _ => 2,
        }
    }

    /// Standardness scale `r0`.
    pub fn r0(&self) -> f64 {
        match self {
            SupportSpec::Box { side, .. } => side / 2.0,
            SupportSpec::Disk { radius } => *radius,
            SupportSpec::Annulus { r_in, r_out } => (r_out - r_in).min(*r_in),
            SupportSpec::TwoClusters { radii, .. } => radii
                .iter()
                .copied()
                .filter(|r| *r > 0.0)
                .fold(f64::INFINITY, f64::min)
                .min(1.0),
        }
    }

    /// Standardness constant `c0` for the uniform measure on the shape,
    /// derived from the worst-case quarter-ball (2-D) or half-interval (1-D).
    pub fn c0(&self) -> f64 {
        match self {
            SupportSpec::Box { dim, side } => {
                // Corner point: an orthant of the ball stays inside the box.
                let ball = unit_ball_volume(*dim);
                ball / (2f64.powi(*dim as i32) * side.powi(*dim as i32))
            }
            SupportSpec::Disk { radius } => 1.0 / (4.0 * radius * radius),
            SupportSpec::Annulus { r_in, r_out } => 1.0 / (4.0 * (r_out * r_out - r_in * r_in)),
            SupportSpec::TwoClusters { radii, .. } => {
                let total: f64 = radii.iter().map(|r| r * r).sum();
                if total == 0.0 {
                    // Degenerate point clusters: standardness holds vacuously at
                    // any scale for the atomic measure; report a unit constant.
                    1.0
                } else {
                    1.0 / (4.0 * total)
                }
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            SupportSpec::Box { dim, side } => (vec![0.0; *dim], vec![*side; *dim]),
            SupportSpec::Disk { radius } => (vec![-radius, -radius], vec![*radius, *radius]),
            SupportSpec::Annulus { r_out, .. } => (vec![-r_out, -r_out], vec![*r_out, *r_out]),
            SupportSpec::TwoClusters { centers, radii } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for (c, r) in centers.iter().zip(radii) {
                    for k in 0..2 {
                        lo[k] = lo[k].min(c[k] - r);
                        hi[k] = hi[k].max(c[k] + r);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) <= 0.0
    }

    /// Exact Euclidean distance from `x` to the support (0 inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            SupportSpec::Box { dim, side } => {
                let mut sq = 0.0;
                for k in 0..*dim {
                    let v = x[k];
                    let excess = if v < 0.0 {
                        -v
                    } else if v > *side {
                        v - side
                    } else {
                        0.0
                    };
                    sq += excess * excess;
                }
                sq.sqrt()
            }
            SupportSpec::Disk { radius } => (norm2(x) - radius).max(0.0),
            SupportSpec::Annulus { r_in, r_out } => {
                let n = norm2(x);
                if n < *r_in {
                    r_in - n
                } else if n > *r_out {
                    n - r_out
                } else {
                    0.0
                }
            }
            SupportSpec::TwoClusters { centers, radii } => centers
                .iter()
                .zip(radii)
                .map(|(c, r)| {
                    let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
                    (d - r).max(0.0)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// One uniform sample from the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            SupportSpec::Box { dim, side } => {
                (0..*dim).map(|_| rng.gen_range(0.0..=*side)).collect()
            }
            SupportSpec::Disk { radius } => sample_disk(&[0.0, 0.0], *radius, rng),
            SupportSpec::Annulus { r_in, r_out } => {
                let u: f64 = rng.gen_range(0.0..=1.0);
                let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                vec![r * theta.cos(), r * theta.sin()]
            }
            SupportSpec::TwoClusters { centers, radii } => {
                let weights: Vec<f64> = radii.iter().map(|r| (r * r).max(1e-300)).collect();
                let total: f64 = weights.iter().sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut idx = 0;
                for (i, w) in weights.iter().enumerate() {
                    if pick < *w {
                        idx = i;
                        break;
                    }
                    pick -= w;
                    idx = i;
                }
                sample_disk(&centers[idx], radii[idx], rng)
            }
        }
    }
}

fn sample_disk<R: Rng + ?Sized>(center: &[f64; 2], radius: f64, rng: &mut R) -> Vec<f64> {
    if radius == 0.0 {
        return vec![center[0], center[1]];
    }
    let r = radius * rng.gen_range(0.0f64..=1.0).sqrt();
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    vec![center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("box dims limited to 1..=3"),
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Union of closed balls around sampled centers.
#[derive(Debug, Clone, Serialize)]
pub struct BallUnion {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

impl BallUnion {
    /// Uniform-radius union.
    pub fn uniform(centers: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        let n = centers.len();
        BallUnion::new(centers, vec![epsilon; n])
    }

    pub fn new(centers: Vec<Vec<f64>>, radii: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("ball union needs at least one center"));
        }
        if centers.len() != radii.len() || radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("each center needs a positive radius"));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("ball centers have mixed dimensions"));
        }
        Ok(BallUnion { centers, radii })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn min_radius(&self) -> f64 {
        self.radii.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Exact distance from `x` to the union: `max(0, min_i ||x - X_i|| - r_i)`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (c, r) in self.centers.iter().zip(&self.radii) {
            let d = dist(x, c) - r;
            if d < best {
                best = d;
                if best <= 0.0 {
                    return 0.0;
                }
            }
        }
        best.max(0.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) <= 0.0
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (c, r) in self.centers.iter().zip(&self.radii) {
            for k in 0..dim {
                lo[k] = lo[k].min(c[k] - r);
                hi[k] = hi[k].max(c[k] + r);
            }
        }
        (lo, hi)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric axis grid: points `mid ± k * step` clipped to `[lo, hi]`. The
/// midpoint is always a grid point, so shapes with central symmetry keep
/// their center and (when the half-span divides evenly) their extremes.
pub(crate) fn axis_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    debug_assert!(step > 0.0);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let k_max = (half / step + 1e-9).floor() as i64;
    let mut pts = Vec::with_capacity((2 * k_max + 1) as usize);
    for k in -k_max..=k_max {
        pts.push(mid + k as f64 * step);
    }
    pts
}

/// All grid points of the support at the given step.
pub(crate) fn support_grid(support: &SupportSpec, step: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = support.bbox();
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| axis_grid(l, h, step))
        .collect();
    let mut out = Vec::new();
    let mut point = vec![0.0; axes.len()];
    cartesian(&axes, 0, &mut point, &mut |p| {
        if support.contains(p) {
            out.push(p.to_vec());
        }
    });
    out
}

pub(crate) fn cartesian(
    axes: &[Vec<f64>],
    level: usize,
    point: &mut Vec<f64>,
    visit: &mut impl FnMut(&[f64]),
) {
    if level == axes.len() {
        visit(point);
        return;
    }
    for &v in &axes[level] {
        point[level] = v;
        cartesian(axes, level + 1, point, visit);
    }
}
