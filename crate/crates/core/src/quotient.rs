//! Points of the modular quotient `SL(2,Z) \ SL(2,R)`.
//!
//! A coset `Γg` is represented by `γg` with `γg · i` in the closed standard
//! fundamental domain `|Re z| <= 1/2, |z| >= 1`. Equality is modulo `±I`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lie::GroupElement;

/// Tolerance band on the fundamental-domain boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;
/// Default cusp truncation height for Haar sampling.
pub const DEFAULT_Y_MAX: f64 = 1e3;
const MAX_REDUCTION_STEPS: usize = 10_000;

/// An element of SL(2,Z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeElement(pub [i64; 4]);

impl LatticeElement {
    pub const IDENTITY: LatticeElement = LatticeElement([1, 0, 0, 1]);

    pub fn det(&self) -> i64 {
        let [a, b, c, d] = self.0;
        a * d - b * c
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|e| e.abs()).max().unwrap_or(0)
    }

    pub fn mul(&self, other: &LatticeElement) -> LatticeElement {
        let (a, b) = (self.0, other.0);
        LatticeElement([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    pub fn to_real(&self) -> GroupElement {
        GroupElement(self.0.map(|e| e as f64))
    }

    /// `γ · g`.
    pub fn act(&self, g: &GroupElement) -> GroupElement {
        self.to_real().mul(g)
    }
}

/// A reduced point of `M = Γ \ G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointM {
    rep: GroupElement,
    height: f64,
    last_reducer: LatticeElement,
}

impl PointM {
    pub fn rep(&self) -> &GroupElement {
        &self.rep
    }

    /// `Im(rep · i)`.
    pub fn height(&self) -> f64 {
        self.height
    }

    /// The lattice element applied by the most recent reduction.
    pub fn last_reducer(&self) -> LatticeElement {
        self.last_reducer
    }

    /// The upper-half-plane point `rep · i`.
    pub fn z(&self) -> (f64, f64) {
        upper_half_plane_point(&self.rep)
    }
}

/// `g · i` as `(Re, Im)` under the Möbius action `(az + b) / (cz + d)`.
pub fn upper_half_plane_point(g: &GroupElement) -> (f64, f64) {
    let [a, b, c, d] = g.0;
    let n = c * c + d * d;
    ((a * c + b * d) / n, (a * d - b * c) / n)
}

/// Gauss reduction of `g · i` into the standard fundamental domain.
pub fn reduce(g: &GroupElement) -> Result<PointM> {
    if !g.is_finite() {
        return Err(Error::ReductionFailure { steps: 0 });
    }
    let mut cur = g.0;
    let mut gamma = [1i64, 0, 0, 1];
    for step in 0..MAX_REDUCTION_STEPS {
        let [a, b, c, d] = cur;
        let n2 = c * c + d * d;
        let x = (a * c + b * d) / n2;
        let shift = x.round();
        if shift != 0.0 {
            if shift.abs() > 1e15 {
                return Err(Error::ReductionFailure { steps: step });
            }
            let k = shift as i64;
            // T^{-k} from the left: row0 -= k * row1
            cur = [a - shift * c, b - shift * d, c, d];
            gamma = [
                gamma[0] - k * gamma[2],
                gamma[1] - k * gamma[3],
                gamma[2],
                gamma[3],
            ];
        }
        let [a, b, c, d] = cur;
        let n2 = c * c + d * d;
        let x = (a * c + b * d) / n2;
        let y = (a * d - b * c) / n2;
        if x * x + y * y < 1.0 - 1e-13 {
            // S = [[0, -1], [1, 0]] from the left
            cur = [-c, -d, a, b];
            gamma = [-gamma[2], -gamma[3], gamma[0], gamma[1]];
        } else {
            let rep = GroupElement(cur);
            return Ok(PointM {
                rep,
                height: y,
                last_reducer: LatticeElement(gamma),
            });
        }
    }
    Err(Error::ReductionFailure {
        steps: MAX_REDUCTION_STEPS,
    })
}

fn lattice_two() -> &'static [LatticeElement] {
    static CACHE: OnceLock<Vec<LatticeElement>> = OnceLock::new();
    CACHE.get_or_init(|| enumerate_lattice(2))
}

/// Equality of cosets modulo `±I`, with the boundary clause for
/// representatives on the seam of the fundamental domain.
pub fn coset_equal(p: &PointM, q: &PointM, tol: f64) -> bool {
    let close = |g: &GroupElement, h: &GroupElement| {
        g.max_diff(h) <= tol || g.max_diff(&h.neg()) <= tol
    };
    if close(&p.rep, &q.rep) {
        return true;
    }
    lattice_two()
        .iter()
        .any(|gamma| close(&gamma.act(&q.rep), &p.rep))
}

/// `Im(rep · i)` of a reduced point.
pub fn height(p: &PointM) -> f64 {
    p.height
}

/// Fraction of the Haar probability measure lost by truncating the cusp at
/// height `y_max`.
pub fn truncation_deficit(y_max: f64) -> f64 {
    3.0 / (PI * y_max)
}

/// Iwasawa assembly `n_x · a_y · k_θ`.
pub fn iwasawa(x: f64, y: f64, theta: f64) -> GroupElement {
    let sy = y.sqrt();
    let (s, c) = theta.sin_cos();
    // n_x a_y = [[sqrt(y), x/sqrt(y)], [0, 1/sqrt(y)]]
    let na = GroupElement([sy, x / sy, 0.0, 1.0 / sy]);
    na.mul(&GroupElement([c, -s, s, c]))
}

/// Samples Haar measure on `M`, truncated at height `y_max`.
///
/// On `{|x| <= 1/2, x² + y² >= 1, y <= y_max}` the density `dx dy / y²` has
/// x-marginal proportional to `1/sqrt(1 - x²) - 1/y_max`; x is drawn by
/// inverting its CDF, then y given x and θ are drawn exactly.
pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R, y_max: f64) -> Result<PointM> {
    let (x, y, theta) = haar_coordinates(rng, y_max);
    reduce(&iwasawa(x, y, theta))
}

/// The `(x, y, θ)` coordinates used by [`haar_sample`].
pub fn haar_coordinates<R: Rng + ?Sized>(rng: &mut R, y_max: f64) -> (f64, f64, f64) {
    let inv_y = 1.0 / y_max;
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();

    // x: F(x) = (asin x - x / Y + asin(1/2) - 1 / (2Y)) / Z
    let z = PI / 3.0 - inv_y;
    let target = u1 * z - (PI / 6.0 - 0.5 * inv_y);
    let mut x = (target / (1.0 - inv_y)).clamp(-0.5, 0.5);
    for _ in 0..50 {
        let f = x.asin() - x * inv_y - target;
        let df = 1.0 / (1.0 - x * x).sqrt() - inv_y;
        let next = (x - f / df).clamp(-0.5, 0.5);
        let done = (next - x).abs() < 1e-15;
        x = next;
        if done {
            break;
        }
    }

    let inv_y0 = 1.0 / (1.0 - x * x).sqrt();
    let y = 1.0 / (inv_y0 - u2 * (inv_y0 - inv_y));
    (x, y, 2.0 * PI * u3)
}

fn egcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.signum() * a, a.signum(), 0)
    } else {
        let (g, x, y) = egcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

fn ceil_div(n: i64, d: i64) -> i64 {
    -((-n).div_euclid(d))
}

/// Integer `k` with `lo <= base + k * step <= hi`, as an inclusive range.
fn k_range(base: i64, step: i64, lo: i64, hi: i64) -> Option<(i64, i64)> {
    if step == 0 {
        return (lo <= base && base <= hi).then_some((i64::MIN / 4, i64::MAX / 4));
    }
    let (mut a, mut b) = if step > 0 {
        (ceil_div(lo - base, step), (hi - base).div_euclid(step))
    } else {
        (ceil_div(base - hi, -step), (base - lo).div_euclid(-step))
    };
    if a > b {
        return None;
    }
    a = a.max(i64::MIN / 4);
    b = b.min(i64::MAX / 4);
    Some((a, b))
}

/// All `γ ∈ SL(2,Z)` with `max|entry| <= r`, in lexicographic order.
pub fn enumerate_lattice(r: i64) -> Vec<LatticeElement> {
    let mut out = Vec::new();
    if r < 1 {
        return out;
    }
    for a in -r..=r {
        for c in -r..=r {
            let (g, s, t) = egcd(a, c);
            if g != 1 {
                continue;
            }
            // a*s + c*t = 1  =>  d0 = s, b0 = -t satisfies a*d0 - b0*c = 1
            let (b0, d0) = (-t, s);
            let Some((k0, k1)) = k_range(b0, a, -r, r) else { continue };
            let Some((j0, j1)) = k_range(d0, c, -r, r) else { continue };
            let (lo, hi) = (k0.max(j0), k1.min(j1));
            for k in lo..=hi {
                out.push(LatticeElement([a, b0 + k * a, c, d0 + k * c]));
            }
        }
    }
    out.sort();
    out
}
