//! 2×2 matrix arithmetic for SL(2,R) and sl(2,R).
//!
//! Matrices are stored row-major as `[a, b, c, d]` for `[[a, b], [c, d]]`.
//!
//! Sign convention: the geodesic generator is `X = diag(-1/2, 1/2)`, so that
//! `[X, U] = -U` with `U = [[0, 1], [0, 0]]`. Under the right action this gives
//!
//! ```text
//! g · exp(rX) · exp(e^r t U) = g · exp(tU) · exp(rX)
//! ```
//!
//! The shear estimates are stated for the opposite generator, see
//! [`shear_generator`]: flipping the sign of `X` exchanges `e^r` and `e^{-r}`
//! in every shear formula.

use crate::error::{Error, Result};

/// Largest hyperbolic / trigonometric argument accepted by [`exp_algebra`].
pub const EXP_ARGUMENT_LIMIT: f64 = 700.0;

/// Products longer than this are renormalized by `1/sqrt(det)`.
pub const RENORMALIZE_AFTER: usize = 32;

#[inline]
fn mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

#[inline]
fn det(a: &[f64; 4]) -> f64 {
    a[0] * a[3] - a[1] * a[2]
}

/// An element of sl(2,R): a traceless real 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraElement(pub [f64; 4]);

/// The horocycle generator `[[0, 1], [0, 0]]`.
pub const U: AlgebraElement = AlgebraElement([0.0, 1.0, 0.0, 0.0]);
/// The geodesic generator `diag(-1/2, 1/2)`; `[X, U] = -U`.
pub const X: AlgebraElement = AlgebraElement([-0.5, 0.0, 0.0, 0.5]);
/// The opposite horocycle generator `[[0, 0], [1, 0]]`.
pub const U_T: AlgebraElement = AlgebraElement([0.0, 0.0, 1.0, 0.0]);

/// Generator of the geodesic displacement `x_r` used by the shear estimates:
/// `-X = diag(1/2, -1/2)`, the element with `[X̂, U] = +U`.
///
/// For this generator `h_t(x_r) = φ_r(h_{e^r t}(x))` in composition order and
/// `Ad(exp(-sU)) X̂ = X̂ + sU`, which is the form the change-of-variable and
/// distortion identities require.
pub fn shear_generator() -> AlgebraElement {
    X.scale(-1.0)
}

impl AlgebraElement {
    pub fn new(entries: [f64; 4]) -> Result<Self> {
        let a = AlgebraElement(entries);
        if a.trace().abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "algebra element must be traceless, trace = {}",
                a.trace()
            )));
        }
        Ok(a)
    }

    pub fn zero() -> Self {
        AlgebraElement([0.0; 4])
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[3]
    }

    pub fn det(&self) -> f64 {
        det(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        AlgebraElement(self.0.map(|e| e * s))
    }

    pub fn add(&self, other: &AlgebraElement) -> Self {
        let (a, b) = (self.0, other.0);
        AlgebraElement([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }

    pub fn sub(&self, other: &AlgebraElement) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        op_norm(&self.0)
    }
}

/// `AB - BA`.
pub fn lie_bracket(a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
    let ab = mul(&a.0, &b.0);
    let ba = mul(&b.0, &a.0);
    AlgebraElement([ab[0] - ba[0], ab[1] - ba[1], ab[2] - ba[2], ab[3] - ba[3]])
}

/// An element of SL(2,R).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement(pub [f64; 4]);

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement([1.0, 0.0, 0.0, 1.0]);

    /// Checked constructor; the determinant must be 1 within `1e-9`.
    pub fn new(entries: [f64; 4]) -> Result<Self> {
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::NumericOverflow("non-finite group element".into()));
        }
        let d = det(&entries);
        if (d - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "group element must have determinant 1, got {d}"
            )));
        }
        Ok(GroupElement(entries))
    }

    pub fn det(&self) -> f64 {
        det(&self.0)
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement(mul(&self.0, &other.0))
    }

    /// Inverse of a determinant-one matrix.
    pub fn inverse(&self) -> GroupElement {
        let [a, b, c, d] = self.0;
        GroupElement([d, -b, -c, a])
    }

    pub fn neg(&self) -> GroupElement {
        GroupElement(self.0.map(|e| -e))
    }

    /// Divides by `sqrt(det)` to pull the determinant back to 1.
    pub fn renormalized(&self) -> GroupElement {
        let d = self.det();
        if d > 0.0 && (d - 1.0).abs() > f64::EPSILON {
            let s = 1.0 / d.sqrt();
            GroupElement(self.0.map(|e| e * s))
        } else {
            *self
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// Operator norm; for determinant-one matrices this is also the norm of
    /// the inverse.
    pub fn op_norm(&self) -> f64 {
        op_norm(&self.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn max_diff(&self, other: &GroupElement) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|e| e.is_finite())
    }

    /// `g · A` for an algebra element `A` (a tangent vector at `g`).
    pub fn mul_algebra(&self, a: &AlgebraElement) -> [f64; 4] {
        mul(&self.0, &a.0)
    }
}

/// Product of a chain of group elements, renormalizing the determinant every
/// [`RENORMALIZE_AFTER`] factors.
pub fn product_chain<'a, I>(factors: I) -> GroupElement
where
    I: IntoIterator<Item = &'a GroupElement>,
{
    let mut acc = GroupElement::IDENTITY;
    for (k, g) in factors.into_iter().enumerate() {
        acc = acc.mul(g);
        if (k + 1) % RENORMALIZE_AFTER == 0 {
            acc = acc.renormalized();
        }
    }
    acc.renormalized()
}

fn op_norm(m: &[f64; 4]) -> f64 {
    // Largest singular value from the Frobenius norm and |det|.
    let f2: f64 = m.iter().map(|e| e * e).sum();
    let d = det(m).abs();
    let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
    ((f2 + disc) / 2.0).sqrt()
}

/// `exp(tA)` by the Cayley–Hamilton split on `det(A)`.
pub fn exp_algebra(a: &AlgebraElement, t: f64) -> Result<GroupElement> {
    let d = a.det();
    let m = a.0;
    let (c, s) = if d == 0.0 {
        (1.0, t)
    } else if d < 0.0 {
        let lambda = (-d).sqrt();
        let arg = lambda * t;
        if arg.abs() > EXP_ARGUMENT_LIMIT {
            return Err(Error::NumericOverflow(format!(
                "exp argument {arg} exceeds {EXP_ARGUMENT_LIMIT}"
            )));
        }
        (arg.cosh(), arg.sinh() / lambda)
    } else {
        let omega = d.sqrt();
        let arg = omega * t;
        if !arg.is_finite() {
            return Err(Error::NumericOverflow("non-finite exp argument".into()));
        }
        (arg.cos(), arg.sin() / omega)
    };
    let g = GroupElement([c + s * m[0], s * m[1], s * m[2], c + s * m[3]]);
    if !g.is_finite() {
        return Err(Error::NumericOverflow("non-finite exponential".into()));
    }
    Ok(g)
}

/// `exp(tU) = [[1, t], [0, 1]]`.
#[inline]
pub fn unipotent(t: f64) -> GroupElement {
    GroupElement([1.0, t, 0.0, 1.0])
}

/// `exp(rX) = diag(e^{-r/2}, e^{r/2})`.
pub fn geodesic(r: f64) -> Result<GroupElement> {
    exp_algebra(&X, r)
}

/// `g · exp(tU)` without reduction.
pub fn flow_unipotent_raw(g: &GroupElement, t: f64) -> Result<GroupElement> {
    if !t.is_finite() {
        return Err(Error::NumericOverflow("non-finite time".into()));
    }
    let [a, b, c, d] = g.0;
    Ok(GroupElement([a, a * t + b, c, c * t + d]))
}

/// `g · exp(rX)` without reduction.
pub fn flow_geodesic_raw(g: &GroupElement, r: f64) -> Result<GroupElement> {
    Ok(g.mul(&geodesic(r)?))
}

/// `g · exp(rV)` for an arbitrary generator.
pub fn flow_raw(g: &GroupElement, v: &AlgebraElement, r: f64) -> Result<GroupElement> {
    Ok(g.mul(&exp_algebra(v, r)?))
}

/// `Ad(exp(-sU)) A = exp(-sU) · A · exp(sU)`, by explicit conjugation.
pub fn conjugate_by_unipotent(a: &AlgebraElement, s: f64) -> AlgebraElement {
    let left = unipotent(-s).0;
    let right = unipotent(s).0;
    AlgebraElement(mul(&mul(&left, &a.0), &right))
}

/// Push-forward of the shear generator along the horocycle flow:
/// `Ad(exp(-sU)) X̂ = X̂ + sU` with `X̂` from [`shear_generator`].
pub fn pushforward_x_along_h(s: f64) -> AlgebraElement {
    conjugate_by_unipotent(&shear_generator(), s)
}
