//! Smooth compactly supported observables on `M`, realized as Poincaré sums
//!
//! ```text
//! f(Γg) = offset + amplitude · Σ_{γ ∈ SL(2,Z)} P(‖γg - p0‖²_F / δ²)
//! ```
//!
//! of the mollifier `P(q) = exp(1 - 1/(1 - q))` for `q < 1` (zero otherwise).
//! Only translates with `‖γg - p0‖_F < δ` contribute; they are located
//! exactly by integer windows around `p0 · g⁻¹`, so a sum costs a handful of
//! operations regardless of the lattice cutoff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraElement, GroupElement, U, U_T, X};
use crate::parallel::try_map_indexed;
use crate::quotient::{enumerate_lattice, haar_sample, reduce, PointM};
use crate::stats::{ratio_estimate, Estimate, MonteCarlo};
use crate::timechange::TimeChangeGenerator;

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

#[inline]
fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
fn mul4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// Visits every `γ ∈ SL(2,Z)` with entries in `[lo_k, hi_k]` until `visit`
/// returns false; returns false in that case.
fn for_each_candidate(lo: &[f64; 4], hi: &[f64; 4], mut visit: impl FnMut([i64; 4]) -> bool) -> bool {
    let win = |k: usize| (lo[k].ceil() as i64, hi[k].floor() as i64);
    let (a0, a1) = win(0);
    let (b0, b1) = win(1);
    let (c0, c1) = win(2);
    let (d0, d1) = win(3);
    if a0 > a1 || b0 > b1 || c0 > c1 || d0 > d1 {
        return true;
    }
    for a in a0..=a1 {
        for b in b0..=b1 {
            for c in c0..=c1 {
                if a != 0 {
                    let num = 1 + b * c;
                    if num % a == 0 {
                        let d = num / a;
                        if d0 <= d && d <= d1 && !visit([a, b, c, d]) {
                            return false;
                        }
                    }
                } else if b * c == -1 {
                    for d in d0..=d1 {
                        if !visit([a, b, c, d]) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

/// The mollifier and its first two derivatives in `q = s²`.
#[inline]
pub fn profile(q: f64) -> (f64, f64, f64) {
    if !(q < 1.0) {
        return (0.0, 0.0, 0.0);
    }
    let w = 1.0 / (1.0 - q);
    let p = (1.0 - w).exp();
    (p, -p * w * w, p * (w * w * w * w - 2.0 * w * w * w))
}

/// Value and derivatives of an observable along one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Serializable parameters of a [`BumpObservable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    /// Row-major base point `p0`.
    pub center: [f64; 4],
    pub radius: f64,
    pub amplitude: f64,
    pub cutoff: i64,
    #[serde(default)]
    pub offset: f64,
}

impl ObservableSpec {
    pub fn build(&self) -> Result<BumpObservable> {
        let center = GroupElement::new(self.center)?;
        Ok(BumpObservable::new(center, self.radius, self.amplitude, self.cutoff)?
            .with_offset(self.offset))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpObservable {
    center: GroupElement,
    radius: f64,
    amplitude: f64,
    cutoff: i64,
    offset: f64,
    support_height: f64,
}

impl BumpObservable {
    /// Builds the observable after certifying that the lattice cutoff misses
    /// no contributing translate at any reduced point.
    pub fn new(center: GroupElement, radius: f64, amplitude: f64, cutoff: i64) -> Result<Self> {
        if !(radius > 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidInput(format!(
                "bump radius must be positive and amplitude finite (δ = {radius}, a = {amplitude})"
            )));
        }
        let sigma_min = 1.0 / center.op_norm();
        if radius >= sigma_min {
            return Err(Error::InvalidInput(format!(
                "bump radius {radius} must be below the smallest singular value {sigma_min:.4} of the center"
            )));
        }
        let support_height = 1.0 / (sigma_min - radius).powi(2);
        let required = Self::required_cutoff(&center, radius, support_height);
        if (cutoff as f64) < required {
            return Err(Error::CutoffInsufficient { cutoff, required });
        }
        Ok(BumpObservable {
            center,
            radius,
            amplitude,
            cutoff,
            offset: 0.0,
            support_height,
        })
    }

    /// Smallest integer cutoff that passes certification.
    pub fn minimal_cutoff(center: &GroupElement, radius: f64) -> Result<i64> {
        let sigma_min = 1.0 / center.op_norm();
        if radius >= sigma_min || !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("bump radius {radius} too large")));
        }
        let support_height = 1.0 / (sigma_min - radius).powi(2);
        Ok(Self::required_cutoff(center, radius, support_height).ceil() as i64)
    }

    // Every contributing γ equals h·rep⁻¹ with ‖h‖_F <= ‖p0‖_F + δ, and a
    // reduced representative below the support height has
    // ‖rep‖²_F <= y + (x² + 1)/y with |x| <= 1/2.
    fn required_cutoff(center: &GroupElement, radius: f64, support_height: f64) -> f64 {
        let y_top = support_height.max(SQRT3_2);
        let rep_sq = (y_top + 1.25 / y_top).max(SQRT3_2 + 1.25 / SQRT3_2);
        (center.frobenius() + radius) * rep_sq.sqrt()
    }

    /// The observable with every value shifted by `offset` (replacing any
    /// previous offset).
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.amplitude *= c;
        out.offset *= c;
        out
    }

    pub fn spec(&self) -> ObservableSpec {
        ObservableSpec {
            center: self.center.0,
            radius: self.radius,
            amplitude: self.amplitude,
            cutoff: self.cutoff,
            offset: self.offset,
        }
    }

    pub fn center(&self) -> &GroupElement {
        &self.center
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Reduced points above this height are outside the support.
    pub fn support_height(&self) -> f64 {
        self.support_height
    }

    /// Calls `term(h, D, q)` for every translate `h = γg` with
    /// `q = ‖h - p0‖²/δ² < 1`, where `D = h - p0`.
    #[inline]
    fn for_each_term(&self, g: &GroupElement, mut term: impl FnMut(&[f64; 4], &[f64; 4], f64)) {
        if self.amplitude == 0.0 {
            return;
        }
        let p = &self.center.0;
        // γ = (p0 + E) g⁻¹ with ‖E‖_F < δ, so |γ_ij - (p0 g⁻¹)_ij| < δ ‖g‖
        let m = mul4(p, &g.inverse().0);
        let rho = self.radius * g.op_norm();
        let inv_r2 = 1.0 / (self.radius * self.radius);
        for_each_candidate(&m.map(|v| v - rho), &m.map(|v| v + rho), |gamma| {
            let gr = gamma.map(|e| e as f64);
            let h = mul4(&gr, &g.0);
            let dd = [h[0] - p[0], h[1] - p[1], h[2] - p[2], h[3] - p[3]];
            let q = dot(&dd, &dd) * inv_r2;
            if q < 1.0 {
                term(&h, &dd, q);
            }
            true
        });
    }

    /// True when no translate of the bump meets the horocycle segment
    /// `{g u(s) : 0 <= s <= len}`, so the observable equals its offset there.
    pub fn segment_clear(&self, g: &GroupElement, len: f64) -> bool {
        if self.amplitude == 0.0 {
            return true;
        }
        let p = &self.center.0;
        let gi = g.inverse().0;
        // p0 (g u(s))⁻¹ = p0 g⁻¹ - s p0 U g⁻¹
        let m0 = mul4(p, &gi);
        let m1 = mul4(p, &mul4(&U.0, &gi));
        let rho = self.radius * g.op_norm() * (1.0 + len);
        let mut lo = [0.0; 4];
        let mut hi = [0.0; 4];
        for k in 0..4 {
            let end = m0[k] - len * m1[k];
            lo[k] = m0[k].min(end) - rho;
            hi[k] = m0[k].max(end) + rho;
        }
        let r2 = self.radius * self.radius;
        for_each_candidate(&lo, &hi, |gamma| {
            let gr = gamma.map(|e| e as f64);
            let h = mul4(&gr, &g.0);
            // D(s) = (γg - p0) + s γgU, minimized over [0, len]
            let d0 = [h[0] - p[0], h[1] - p[1], h[2] - p[2], h[3] - p[3]];
            let d1 = [0.0, h[0], 0.0, h[2]];
            let a = dot(&d1, &d1);
            let s = if a > 0.0 { (-dot(&d0, &d1) / a).clamp(0.0, len) } else { 0.0 };
            let dist2 = dot(&d0, &d0) + 2.0 * s * dot(&d0, &d1) + s * s * a;
            dist2 >= r2
        })
    }

    /// Value at an arbitrary representative `g` (the untruncated sum, which
    /// is invariant under `g -> γg`).
    #[inline]
    pub fn eval_at(&self, g: &GroupElement) -> f64 {
        let mut s = 0.0;
        self.for_each_term(g, |_, _, q| s += profile(q).0);
        self.offset + self.amplitude * s
    }

    pub fn eval(&self, x: &PointM) -> f64 {
        self.eval_at(x.rep())
    }

    /// Value and derivatives `Vf`, `V²f` at `g`.
    pub fn jet_at(&self, g: &GroupElement, v: &AlgebraElement) -> Jet {
        let inv_r2 = 1.0 / (self.radius * self.radius);
        let mut jet = Jet::default();
        let v2 = mul4(&v.0, &v.0);
        self.for_each_term(g, |h, dd, q| {
            let (p0, p1, p2) = profile(q);
            let hv = mul4(h, &v.0);
            let hv2 = mul4(h, &v2);
            let q1 = 2.0 * dot(dd, &hv) * inv_r2;
            let q2 = 2.0 * (dot(&hv, &hv) + dot(dd, &hv2)) * inv_r2;
            jet.value += p0;
            jet.d1 += p1 * q1;
            jet.d2 += p2 * q1 * q1 + p1 * q2;
        });
        Jet {
            value: self.offset + self.amplitude * jet.value,
            d1: self.amplitude * jet.d1,
            d2: self.amplitude * jet.d2,
        }
    }

    /// `V(Wf)(g) = ∂r ∂s f(g exp(rV) exp(sW))` at `r = s = 0`.
    pub fn mixed_at(&self, g: &GroupElement, v: &AlgebraElement, w: &AlgebraElement) -> f64 {
        let inv_r2 = 1.0 / (self.radius * self.radius);
        let vw = mul4(&v.0, &w.0);
        let mut s = 0.0;
        self.for_each_term(g, |h, dd, q| {
            let (_, p1, p2) = profile(q);
            let hv = mul4(h, &v.0);
            let hw = mul4(h, &w.0);
            let hvw = mul4(h, &vw);
            let qr = 2.0 * dot(dd, &hv) * inv_r2;
            let qs = 2.0 * dot(dd, &hw) * inv_r2;
            let qrs = 2.0 * (dot(&hv, &hw) + dot(dd, &hvw)) * inv_r2;
            s += p2 * qr * qs + p1 * qrs;
        });
        self.amplitude * s
    }

    /// Analytic `d/dr f(x exp(rV))` (order 1) or its second derivative.
    pub fn directional_derivative(&self, x: &PointM, v: &AlgebraElement, order: u8) -> Result<f64> {
        let jet = self.jet_at(x.rep(), v);
        match order {
            1 => Ok(jet.d1),
            2 => Ok(jet.d2),
            _ => Err(Error::InvalidInput(format!("derivative order {order} not in {{1, 2}}"))),
        }
    }

    /// Reference evaluation through the truncated sum over
    /// `enumerate_lattice(cutoff)`; slow.
    pub fn eval_by_enumeration(&self, x: &PointM) -> f64 {
        let p = &self.center;
        let s: f64 = enumerate_lattice(self.cutoff)
            .iter()
            .map(|gamma| {
                let h = gamma.act(x.rep());
                let d = h.max_diff(p); // cheap prefilter
                if d >= self.radius {
                    return 0.0;
                }
                let dd: f64 = h.0.iter().zip(p.0.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                profile(dd / (self.radius * self.radius)).0
            })
            .sum();
        self.offset + self.amplitude * s
    }
}

/// The three sl(2) directions used by the Sobolev surrogate.
pub const SOBOLEV_DIRECTIONS: [AlgebraElement; 3] = [U, X, U_T];

/// `sqrt(Σ_w ‖w f‖²₂)` over derivative words `w` of length `<= k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevSurrogate {
    pub order: u8,
    pub value: f64,
    pub stderr: f64,
}

fn sobolev_density(f: &BumpObservable, g: &GroupElement, k: u8) -> f64 {
    let v = f.eval_at(g);
    let mut z = v * v;
    if k >= 1 {
        for d in &SOBOLEV_DIRECTIONS {
            let d1 = f.jet_at(g, d).d1;
            z += d1 * d1;
        }
    }
    if k >= 2 {
        for a in &SOBOLEV_DIRECTIONS {
            for b in &SOBOLEV_DIRECTIONS {
                let m = f.mixed_at(g, a, b);
                z += m * m;
            }
        }
    }
    z
}

pub fn sobolev_surrogate(f: &BumpObservable, k: u8, mc: &MonteCarlo) -> Result<SobolevSurrogate> {
    if k > 2 {
        return Err(Error::InvalidInput(format!("Sobolev order {k} > 2")));
    }
    let streams = mc.streams.domain("sobolev");
    let z = try_map_indexed(mc.n_samples, |i| {
        let x = haar_sample(&mut streams.stream(i as u64), mc.y_max)?;
        Ok(sobolev_density(f, x.rep(), k))
    })?;
    let sq = Estimate::from_samples(&z);
    let value = sq.mean.max(0.0).sqrt();
    let stderr = if value > 0.0 { sq.stderr / (2.0 * value) } else { sq.stderr.sqrt() };
    Ok(SobolevSurrogate { order: k, value, stderr })
}

/// An observable shifted to zero mean, with the estimated shift.
#[derive(Debug, Clone)]
pub struct Projected {
    pub observable: BumpObservable,
    pub shift: Estimate,
}

/// Subtracts the Monte Carlo mean `μ(f)`, or `μ(τf)/μ(τ)` when a time-change
/// weight is supplied.
pub fn project_zero_mean(
    f: &BumpObservable,
    weight: Option<&TimeChangeGenerator>,
    mc: &MonteCarlo,
) -> Result<Projected> {
    let streams = mc.streams.domain("project");
    let pairs = try_map_indexed(mc.n_samples, |i| {
        let x = haar_sample(&mut streams.stream(i as u64), mc.y_max)?;
        let fx = f.eval(&x);
        Ok(match weight {
            Some(tau) => {
                let w = tau.tau_eval(&x);
                (w * fx, w)
            }
            None => (fx, 1.0),
        })
    })?;
    let shift = match weight {
        Some(_) => ratio_estimate(&pairs),
        None => {
            let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            Estimate::from_samples(&v)
        }
    };
    let observable = f.clone().with_offset(f.offset() - shift.mean);
    Ok(Projected { observable, shift })
}

/// Reduces `g` and evaluates; convenience for tests and the FFI.
pub fn observable_eval(f: &BumpObservable, g: &GroupElement) -> Result<f64> {
    Ok(f.eval(&reduce(g)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{exp_algebra, flow_raw};
    use crate::quotient::{iwasawa, LatticeElement};
    use crate::rng::SampleStreams;

    pub(crate) fn reference_bump() -> BumpObservable {
        BumpObservable::new(GroupElement::IDENTITY, 0.2, 1.0, 5).unwrap()
    }

    #[test]
    fn center_value_and_support() {
        let f = reference_bump();
        let x = reduce(&GroupElement::IDENTITY).unwrap();
        assert!((f.eval(&x) - 1.0).abs() < 1e-15);
        let high = reduce(&iwasawa(0.1, f.support_height() * 1.01, 0.3)).unwrap();
        assert_eq!(f.eval(&high), 0.0);
        let zero = f.scaled(0.0);
        assert_eq!(zero.eval(&x), 0.0);
        assert_eq!(zero.directional_derivative(&x, &X, 1).unwrap(), 0.0);
    }

    #[test]
    fn certification_rejects_small_cutoff() {
        let err = BumpObservable::new(GroupElement::IDENTITY, 0.2, 1.0, 2).unwrap_err();
        assert!(matches!(err, Error::CutoffInsufficient { .. }));
        assert_eq!(BumpObservable::minimal_cutoff(&GroupElement::IDENTITY, 0.2).unwrap(), 3);
        assert!(BumpObservable::new(GroupElement::IDENTITY, 1.0, 1.0, 50).is_err());
    }

    #[test]
    fn gamma_invariance() {
        let f = reference_bump();
        let gamma = LatticeElement([2, 3, 1, 2]);
        for (i, theta) in [0.0, 0.5, 1.0, 2.0].iter().enumerate() {
            let g = iwasawa(0.02 * i as f64, 1.05, *theta);
            let a = f.eval(&reduce(&g).unwrap());
            let b = f.eval(&reduce(&gamma.act(&g)).unwrap());
            assert!((a - b).abs() < 1e-10);
            // and the unreduced representative
            assert!((f.eval_at(&gamma.act(&g)) - a).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_enumerated_sum() {
        let f = BumpObservable::new(iwasawa(0.3, 1.1, 0.7), 0.35, 1.5, 6).unwrap();
        let streams = SampleStreams::new(5);
        let mut nonzero = 0;
        for i in 0..400 {
            // points near the center so that the test is not vacuous
            let mut rng = streams.stream(i);
            let (x, y, th) = crate::quotient::haar_coordinates(&mut rng, 3.0);
            let g = if i % 2 == 0 {
                iwasawa(x, y, th)
            } else {
                iwasawa(0.3 + 0.1 * (x * 7.0).sin(), 1.1 + 0.1 * (y * 3.0).cos(), 0.7 + 0.2 * th.sin())
            };
            let p = reduce(&g).unwrap();
            let fast = f.eval(&p);
            let slow = f.eval_by_enumeration(&p);
            assert!((fast - slow).abs() < 1e-13, "{fast} vs {slow}");
            if fast != 0.0 {
                nonzero += 1;
            }
        }
        assert!(nonzero > 50);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = reference_bump();
        let g = iwasawa(0.05, 1.07, 0.06);
        for v in [U, X, U_T] {
            let jet = f.jet_at(&g, &v);
            let h = 1e-5;
            let fp = f.eval_at(&flow_raw(&g, &v, h).unwrap());
            let fm = f.eval_at(&flow_raw(&g, &v, -h).unwrap());
            let fd1 = (fp - fm) / (2.0 * h);
            assert!((jet.d1 - fd1).abs() <= 1e-6 * jet.d1.abs().max(1.0), "{} {}", jet.d1, fd1);
            // composition of first-order derivatives
            let h2 = 1e-4;
            let dp = f.jet_at(&flow_raw(&g, &v, h2).unwrap(), &v).d1;
            let dm = f.jet_at(&flow_raw(&g, &v, -h2).unwrap(), &v).d1;
            let fd2 = (dp - dm) / (2.0 * h2);
            assert!((jet.d2 - fd2).abs() <= 1e-7 * jet.d2.abs().max(1.0) * 100.0, "{} {}", jet.d2, fd2);
            assert!((f.mixed_at(&g, &v, &v) - jet.d2).abs() < 1e-9 * jet.d2.abs().max(1.0));
        }
        // at the center the first derivative vanishes
        let c = reduce(&GroupElement::IDENTITY).unwrap();
        assert_eq!(f.directional_derivative(&c, &X, 1).unwrap(), 0.0);
    }

    #[test]
    fn mixed_derivative_matches_finite_difference() {
        let f = reference_bump();
        let g = iwasawa(-0.04, 1.1, 0.08);
        let wf = |g: &GroupElement| f.jet_at(g, &X).d1;
        let cd = |h: f64| {
            let e = exp_algebra(&U, h).unwrap();
            let em = exp_algebra(&U, -h).unwrap();
            (wf(&g.mul(&e)) - wf(&g.mul(&em))) / (2.0 * h)
        };
        // Richardson: (4 D(h/2) - D(h)) / 3
        let fd = (4.0 * cd(5e-5) - cd(1e-4)) / 3.0;
        let an = f.mixed_at(&g, &U, &X);
        assert!((an - fd).abs() < 1e-6 * an.abs().max(1.0), "{an} {fd}");
    }

    #[test]
    fn segment_clear_matches_dense_scan() {
        let f = reference_bump();
        let streams = SampleStreams::new(13);
        let (mut clear, mut blocked) = (0, 0);
        for i in 0..400 {
            let mut rng = streams.stream(i);
            let x = haar_sample(&mut rng, 3.0).unwrap();
            let len = 0.05 + 0.5 * (i % 7) as f64;
            let hits = (0..=2000).any(|k| {
                let s = len * k as f64 / 2000.0;
                f.eval_at(&x.rep().mul(&crate::lie::unipotent(s))) != 0.0
            });
            if f.segment_clear(x.rep(), len) {
                assert!(!hits, "sample {i} reported clear but meets the support");
                clear += 1;
            } else {
                blocked += 1;
            }
        }
        assert!(clear > 0 && blocked > 0);
        let center = GroupElement::IDENTITY;
        assert!(!f.segment_clear(&center.mul(&crate::lie::unipotent(-0.1)), 0.2));
    }

    #[test]
    fn smooth_edge() {
        let f = reference_bump();
        // a point at Frobenius distance δ(1 - 1e-3) from the center
        let dir = AlgebraElement([0.0, 1.0, 0.0, 0.0]);
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let g = flow_raw(&GroupElement::IDENTITY, &dir, mid).unwrap();
            if g.max_diff(&GroupElement::IDENTITY) < 0.2 * (1.0 - 1e-3) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = flow_raw(&GroupElement::IDENTITY, &dir, lo).unwrap();
        for v in [U, X, U_T] {
            let j = f.jet_at(&g, &v);
            assert!(j.value.abs() < 1e-9 && j.d1.abs() < 1e-9 && j.d2.abs() < 1e-9);
        }
    }

    #[test]
    fn spec_round_trip() {
        let f = reference_bump().with_offset(0.25);
        let json = serde_json::to_string(&f.spec()).unwrap();
        let back: ObservableSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), f);
    }

    #[test]
    fn constant_projection() {
        let c = reference_bump().scaled(0.0).with_offset(0.7);
        let mc = MonteCarlo::new(SampleStreams::new(1), 200);
        let p = project_zero_mean(&c, None, &mc).unwrap();
        assert!((p.shift.mean - 0.7).abs() < 1e-15);
        assert!(p.observable.offset().abs() < 1e-15);
    }
}
