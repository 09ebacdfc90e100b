//! Admissible time-changes `τ = 1 + ε·ψ`, the cocycle `u(x,t)` and the
//! time-changed flow `h^τ_t(x) = h_{u(x,t)}(x)`.
//!
//! The cocycle solves `t = ∫_0^u τ(h_s x) ds`. It is integrated as the
//! initial-value problem `du/dw = 1/τ(h_u x)` with classical RK4 in `w`; the
//! same orbit pass accumulates a Simpson quadrature of `τ` over every RK4
//! panel `[u_n, u_{n+1}]`, and a final Newton correction on that quadrature
//! pins `|∫_0^u τ - t| <= tol`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{unipotent, AlgebraElement, GroupElement, X};
use crate::observable::{profile, BumpObservable};
use crate::parallel::map_indexed;
use crate::quotient::{enumerate_lattice, haar_sample, iwasawa, reduce, PointM};
use crate::rng::SampleStreams;
use crate::stats::{Estimate, MonteCarlo};

/// Orbit integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CocycleConfig {
    /// RK4 step in the time-changed clock.
    pub step: f64,
    /// Residual tolerance of the Newton polish.
    pub tol: f64,
    /// RK4 steps between Γ-reductions of the orbit point.
    pub reduce_every: usize,
}

impl Default for CocycleConfig {
    fn default() -> Self {
        CocycleConfig {
            step: 1.0 / 64.0,
            tol: 1e-9,
            reduce_every: 16,
        }
    }
}

impl CocycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.tol > 0.0) || self.reduce_every == 0 {
            return Err(Error::Config(format!("invalid cocycle config {self:?}")));
        }
        Ok(())
    }
}

/// Certified sup-norm bounds of a bump `ψ` and of its X-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpBounds {
    pub sup: f64,
    pub sup_x: f64,
    pub sup_xx: f64,
    /// Maximal number of translates `γg` inside the support ball at once.
    pub overlap: usize,
}

const PROFILE_GRID: usize = 20_000;
const PROFILE_MARGIN: f64 = 1.02;

/// Analytic bounds from the amplitude, the translate overlap count and
/// grid maxima of the profile derivatives (with a 2% margin).
///
/// For `h = γg` in the support, `‖h‖_F <= H := ‖p0‖_F + δ`, so with
/// `s = ‖h - p0‖/δ`:
/// `|q'| <= 2 s H ‖X‖ / δ` and `|q''| <= 2 (H²‖X‖² + s δ H ‖X²‖) / δ²`.
pub fn bump_bounds(psi: &BumpObservable) -> BumpBounds {
    let delta = psi.radius();
    let h = psi.center().frobenius() + delta;
    // two translates in the ball differ by γ with ‖γ - I‖_F <= 2δH
    let rho = 2.0 * delta * h;
    let r = (1.0 + rho).ceil() as i64;
    let overlap = enumerate_lattice(r)
        .iter()
        .filter(|g| {
            let [a, b, c, d] = g.0;
            let dist2 = ((a - 1) * (a - 1) + b * b + c * c + (d - 1) * (d - 1)) as f64;
            dist2 <= rho * rho
        })
        .count()
        .max(1);
    let xn = X.op_norm();
    let x2n = 0.25; // ‖X²‖ = ‖diag(1/4, 1/4)‖
    let mut m1: f64 = 0.0;
    let mut m2: f64 = 0.0;
    for k in 0..=PROFILE_GRID {
        let s = k as f64 / PROFILE_GRID as f64;
        let (_, p1, p2) = profile(s * s);
        let q1 = 2.0 * s * h * xn / delta;
        let q2 = 2.0 * (h * h * xn * xn + s * delta * h * x2n) / (delta * delta);
        m1 = m1.max(p1.abs() * q1);
        m2 = m2.max(p2.abs() * q1 * q1 + p1.abs() * q2);
    }
    let amp = psi.amplitude().abs() * overlap as f64;
    BumpBounds {
        sup: amp + psi.offset().abs(),
        sup_x: amp * m1 * PROFILE_MARGIN,
        sup_xx: amp * m2 * PROFILE_MARGIN,
        overlap,
    }
}

/// `τ = 1 + ε·ψ` together with certified admissibility bounds and the
/// estimated normalization `μ(τ)`.
#[derive(Debug, Clone)]
pub struct TimeChangeGenerator {
    epsilon: f64,
    psi: BumpObservable,
    bounds: [f64; 4],
    m_tau: f64,
    normalization: Estimate,
}

impl TimeChangeGenerator {
    /// Builds the generator; rejects `|ε|·‖ψ‖∞ >= 1/2`. The normalization is
    /// estimated from `mc` (exactly 1 when `ε = 0`).
    pub fn new(epsilon: f64, psi: BumpObservable, mc: &MonteCarlo) -> Result<Self> {
        let mut tau = Self::unnormalized(epsilon, psi)?;
        if epsilon != 0.0 {
            let streams = mc.streams.domain("tau-normalization");
            let vals = map_indexed(mc.n_samples, |i| {
                haar_sample(&mut streams.stream(i as u64), mc.y_max).map(|x| tau.tau_eval(&x))
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            tau.normalization = Estimate::from_samples(&vals);
        }
        Ok(tau)
    }

    /// Generator with normalization set to exactly 1.
    pub fn unnormalized(epsilon: f64, psi: BumpObservable) -> Result<Self> {
        if !epsilon.is_finite() {
            return Err(Error::NonAdmissible("non-finite ε".into()));
        }
        let b = bump_bounds(&psi);
        let e = epsilon.abs();
        if e * b.sup >= 0.5 {
            return Err(Error::NonAdmissible(format!(
                "|ε|·‖ψ‖∞ = {:.4} >= 1/2",
                e * b.sup
            )));
        }
        let bounds = [1.0 + e * b.sup, 1.0 / (1.0 - e * b.sup), e * b.sup_x, e * b.sup_xx];
        let m_tau = bounds.iter().cloned().fold(1.0, f64::max);
        Ok(TimeChangeGenerator {
            epsilon,
            psi,
            bounds,
            m_tau,
            normalization: Estimate::exact(1.0),
        })
    }

    /// `τ ≡ 1`.
    pub fn trivial() -> Self {
        let psi = BumpObservable::new(GroupElement::IDENTITY, 0.2, 0.0, 5)
            .expect("reference bump certifies");
        Self::unnormalized(0.0, psi).expect("trivial time change is admissible")
    }

    pub fn with_normalization(mut self, normalization: Estimate) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn psi(&self) -> &BumpObservable {
        &self.psi
    }
    pub fn is_trivial(&self) -> bool {
        self.epsilon == 0.0 || self.psi.amplitude() == 0.0 && self.psi.offset() == 0.0
    }

    /// `max{‖τ‖∞, ‖τ⁻¹‖∞, ‖Xτ‖∞, ‖X²τ‖∞, 1}` from certified bounds.
    pub fn m_tau(&self) -> f64 {
        self.m_tau
    }

    /// Certified bounds on `‖τ‖∞, ‖τ⁻¹‖∞, ‖Xτ‖∞, ‖X²τ‖∞`.
    pub fn certified_bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn normalization(&self) -> Estimate {
        self.normalization
    }

    #[inline]
    pub fn tau_at(&self, g: &GroupElement) -> f64 {
        if self.epsilon == 0.0 {
            return 1.0;
        }
        1.0 + self.epsilon * self.psi.eval_at(g)
    }

    /// `(τ, Vτ)` at `g`.
    #[inline]
    pub fn tau_jet_at(&self, g: &GroupElement, v: &AlgebraElement) -> (f64, f64, f64) {
        if self.epsilon == 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let j = self.psi.jet_at(g, v);
        (1.0 + self.epsilon * j.value, self.epsilon * j.d1, self.epsilon * j.d2)
    }

    pub fn tau_eval(&self, x: &PointM) -> f64 {
        self.tau_at(x.rep())
    }

    pub fn tau_x(&self, x: &PointM) -> f64 {
        self.tau_jet_at(x.rep(), &X).1
    }

    pub fn tau_xx(&self, x: &PointM) -> f64 {
        self.tau_jet_at(x.rep(), &X).2
    }

    /// Density of `μ^τ` with respect to `μ`: `τ(x) / μ(τ)`.
    pub fn invariant_measure_weight(&self, x: &PointM) -> f64 {
        self.tau_eval(x) / self.normalization.mean
    }
}

/// Witness of an empirical maximum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Witness {
    pub quantity: &'static str,
    pub certified: f64,
    pub empirical: f64,
    pub at: [f64; 4],
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub m_tau: f64,
    pub admissible: bool,
    pub witnesses: Vec<Witness>,
}

/// Certified bounds of `τ = 1 + εψ` compared against a dense empirical grid:
/// `grid_size` Haar points plus `grid_size` points inside the support ball.
pub fn admissibility_report(
    epsilon: f64,
    psi: &BumpObservable,
    grid_size: usize,
    streams: &SampleStreams,
) -> Result<AdmissibilityReport> {
    let b = bump_bounds(psi);
    let e = epsilon.abs();
    if 1.0 - e * b.sup <= 0.0 {
        return Err(Error::NonAdmissible(format!(
            "τ can reach {:.4} <= 0",
            1.0 - e * b.sup
        )));
    }
    let certified = [1.0 + e * b.sup, 1.0 / (1.0 - e * b.sup), e * b.sup_x, e * b.sup_xx];
    let names = ["tau", "tau_inv", "X_tau", "XX_tau"];
    let mut emp = [0.0f64; 4];
    let mut at = [[0.0f64; 4]; 4];
    let streams = streams.domain("admissibility");
    let delta = psi.radius();
    let points = map_indexed(2 * grid_size, |i| {
        let mut rng = streams.stream(i as u64);
        if i < grid_size {
            haar_sample(&mut rng, 1e3).map(|p| *p.rep()).unwrap_or(GroupElement::IDENTITY)
        } else {
            // p0 · k_θ-free perturbation: p0 · exp(A) with ‖A‖ ~ δ
            let (x, y, th) = crate::quotient::haar_coordinates(&mut rng, 2.0);
            let a = AlgebraElement([
                delta * (x * 2.0),
                delta * (y - 1.5) * 2.0,
                delta * (th / std::f64::consts::PI - 1.0),
                -delta * (x * 2.0),
            ]);
            psi.center().mul(&crate::lie::exp_algebra(&a, 1.0).unwrap_or(GroupElement::IDENTITY))
        }
    });
    for g in &points {
        let j = psi.jet_at(g, &X);
        let tau = 1.0 + epsilon * j.value;
        let vals = [tau.abs(), 1.0 / tau, (epsilon * j.d1).abs(), (epsilon * j.d2).abs()];
        for k in 0..4 {
            if vals[k] > emp[k] {
                emp[k] = vals[k];
                at[k] = g.0;
            }
        }
    }
    let witnesses = (0..4)
        .map(|k| Witness {
            quantity: names[k],
            certified: certified[k],
            empirical: emp[k],
            at: at[k],
        })
        .collect();
    let m_tau = certified.iter().cloned().fold(1.0, f64::max);
    Ok(AdmissibilityReport {
        m_tau,
        admissible: e * b.sup < 0.5,
        witnesses,
    })
}

/// Result of one cocycle solve.
#[derive(Debug, Clone, Copy)]
pub struct CocycleSolution {
    /// Signed unipotent time `u(x,t)`.
    pub u: f64,
    /// `∫_0^u (Vτ)(h_s x) ds` when a derivative direction was requested.
    pub integral_v: f64,
    /// `τ(h^τ_t x)`.
    pub tau_end: f64,
    /// `(Vτ)(h^τ_t x)`.
    pub v_tau_end: f64,
    /// Unreduced representative of `h^τ_t x`.
    pub end: GroupElement,
}

struct Orbit {
    base: GroupElement,
    base_u: f64,
    dir: f64,
}

impl Orbit {
    #[inline]
    fn point(&self, u: f64) -> GroupElement {
        let [a, b, c, d] = self.base.0;
        let s = self.dir * (u - self.base_u);
        GroupElement([a, a * s + b, c, c * s + d])
    }

    fn rebase(&mut self, u: f64) -> Result<()> {
        self.base = *reduce(&self.point(u))?.rep();
        self.base_u = u;
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Node {
    tau: f64,
    v_tau: f64,
}

fn node(tau: &TimeChangeGenerator, g: &GroupElement, dir: Option<&AlgebraElement>) -> Result<Node> {
    let n = match dir {
        Some(v) => {
            let (t, dt, _) = tau.tau_jet_at(g, v);
            Node { tau: t, v_tau: dt }
        }
        None => Node {
            tau: tau.tau_at(g),
            v_tau: 0.0,
        },
    };
    if !(n.tau > 0.0) {
        return Err(Error::NonAdmissible(format!("τ = {} <= 0 along the orbit", n.tau)));
    }
    Ok(n)
}

/// Simpson sub-panels per RK4 step where `τ` is not constant.
pub const QUAD_SUBPANELS: usize = 8;

impl Orbit {
    /// `Some(τ)` when `τ` is constant on the orbit between `u` and `u + len`.
    fn constant_tau(&self, tau: &TimeChangeGenerator, u: f64, len: f64) -> Option<f64> {
        let c = 1.0 + tau.epsilon * tau.psi.offset();
        if tau.epsilon == 0.0 {
            return Some(c);
        }
        let (lo, span) = if len < 0.0 { (u + len, -len) } else { (u, len) };
        let start = if self.dir > 0.0 { self.point(lo) } else { self.point(lo + span) };
        tau.psi.segment_clear(&start, span).then_some(c)
    }

    /// Composite Simpson of `τ` (and `Vτ`) over `[u, u + d]`, starting from
    /// the node at `u`; returns the end node.
    fn quadrature(
        &self,
        tau: &TimeChangeGenerator,
        u: f64,
        d: f64,
        start: Node,
        deriv: Option<&AlgebraElement>,
    ) -> Result<(f64, f64, Node)> {
        if d == 0.0 {
            return Ok((0.0, 0.0, start));
        }
        if let Some(c) = self.constant_tau(tau, u, d) {
            return Ok((c * d, 0.0, Node { tau: c, v_tau: 0.0 }));
        }
        let h = d / QUAD_SUBPANELS as f64;
        let (mut s, mut sv) = (0.0, 0.0);
        let mut left = start;
        for k in 0..QUAD_SUBPANELS {
            let a = u + k as f64 * h;
            let mid = node(tau, &self.point(a + 0.5 * h), deriv)?;
            let right = node(tau, &self.point(if k + 1 == QUAD_SUBPANELS { u + d } else { a + h }), deriv)?;
            s += h / 6.0 * (left.tau + 4.0 * mid.tau + right.tau);
            sv += h / 6.0 * (left.v_tau + 4.0 * mid.v_tau + right.v_tau);
            left = right;
        }
        Ok((s, sv, left))
    }
}

/// Solves the cocycle at every time in `times` (sorted, non-negative) along
/// a single orbit pass of `h_{dir·s}(g)`. When `deriv` is given, also
/// integrates `Vτ` along the orbit.
///
/// RK4 steps over which the orbit provably misses the support of `ψ` are
/// integrated exactly.
pub fn solve_cocycle_multi(
    tau: &TimeChangeGenerator,
    g: &GroupElement,
    times: &[f64],
    cfg: &CocycleConfig,
    backward: bool,
    deriv: Option<&AlgebraElement>,
) -> Result<Vec<CocycleSolution>> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidInput("cocycle times must be sorted and non-negative".into()));
    }
    let dir = if backward { -1.0 } else { 1.0 };
    let mut orbit = Orbit {
        base: *g,
        base_u: 0.0,
        dir,
    };
    let mut out = Vec::with_capacity(times.len());
    let max_inv = tau.bounds[1];

    let mut w = 0.0;
    let mut u = 0.0;
    let mut cum = 0.0;
    let mut cum_v = 0.0;
    let mut cur = node(tau, &orbit.point(0.0), deriv)?;
    let mut steps = 0usize;

    for &target in times {
        while w < target {
            // whole steps left before the next reduction, taken at once when
            // the orbit stays clear of the support
            let block = (cfg.reduce_every - steps % cfg.reduce_every).min(((target - w) / cfg.step) as usize);
            if block > 1 {
                let hw = block as f64 * cfg.step;
                if let Some(c) = orbit.constant_tau(tau, u, hw * max_inv) {
                    u += hw / c;
                    cum += hw;
                    cur = Node { tau: c, v_tau: 0.0 };
                    w += hw;
                    steps += block;
                    if steps.is_multiple_of(cfg.reduce_every) {
                        orbit.rebase(u)?;
                    }
                    continue;
                }
            }
            let hw = cfg.step.min(target - w);
            if let Some(c) = orbit.constant_tau(tau, u, hw * max_inv) {
                u += hw / c;
                cum += hw;
                cur = Node { tau: c, v_tau: 0.0 };
            } else {
                let k1 = 1.0 / cur.tau;
                let k2 = 1.0 / node(tau, &orbit.point(u + 0.5 * hw * k1), None)?.tau;
                let k3 = 1.0 / node(tau, &orbit.point(u + 0.5 * hw * k2), None)?.tau;
                let k4 = 1.0 / node(tau, &orbit.point(u + hw * k3), None)?.tau;
                let du = hw * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
                if !du.is_finite() || du <= 0.0 {
                    return Err(Error::Convergence(format!("RK4 stalled at u = {u}")));
                }
                let (s, sv, end) = orbit.quadrature(tau, u, du, cur, deriv)?;
                cum += s;
                cum_v += sv;
                u += du;
                cur = end;
            }
            w += hw;
            steps += 1;
            if steps.is_multiple_of(cfg.reduce_every) {
                orbit.rebase(u)?;
            }
        }
        out.push(polish(tau, &orbit, u, cur, cum, cum_v, target, cfg, deriv)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn polish(
    tau: &TimeChangeGenerator,
    orbit: &Orbit,
    u: f64,
    start: Node,
    cum: f64,
    cum_v: f64,
    target: f64,
    cfg: &CocycleConfig,
    deriv: Option<&AlgebraElement>,
) -> Result<CocycleSolution> {
    let mut d = 0.0;
    for _ in 0..60 {
        let (s, _, end) = orbit.quadrature(tau, u, d, start, deriv)?;
        let residual = cum + s - target;
        if residual == 0.0 {
            break;
        }
        let step = residual / end.tau;
        d -= step;
        if step.abs() <= 1e-15 * (1.0 + u.abs()) {
            break;
        }
    }
    let (s, sv, _) = orbit.quadrature(tau, u, d, start, deriv)?;
    let residual = cum + s - target;
    if !(residual.abs() <= cfg.tol) {
        return Err(Error::Convergence(format!(
            "Newton polish residual {residual:.3e} > tol {:.1e}",
            cfg.tol
        )));
    }
    let end = node(tau, &orbit.point(u + d), deriv)?;
    let u_final = u + d;
    Ok(CocycleSolution {
        u: orbit.dir * u_final,
        integral_v: orbit.dir * (cum_v + sv),
        tau_end: end.tau,
        v_tau_end: end.v_tau,
        end: orbit.point(u_final),
    })
}

/// `u(x,t)`; negative `t` solves forward along the reversed flow and returns
/// a negative value.
pub fn cocycle_u(tau: &TimeChangeGenerator, x: &PointM, t: f64, cfg: &CocycleConfig) -> Result<f64> {
    Ok(cocycle_solution(tau, x.rep(), t, cfg, None)?.u)
}

pub fn cocycle_solution(
    tau: &TimeChangeGenerator,
    g: &GroupElement,
    t: f64,
    cfg: &CocycleConfig,
    deriv: Option<&AlgebraElement>,
) -> Result<CocycleSolution> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("time {t} is not finite")));
    }
    let sols = solve_cocycle_multi(tau, g, &[t.abs()], cfg, t < 0.0, deriv)?;
    Ok(sols[0])
}

/// `h^τ_t(x)`.
pub fn flow_timechanged(
    tau: &TimeChangeGenerator,
    x: &PointM,
    t: f64,
    cfg: &CocycleConfig,
) -> Result<PointM> {
    if t == 0.0 {
        return Ok(*x);
    }
    reduce(&cocycle_solution(tau, x.rep(), t, cfg, None)?.end)
}

/// `h_t(x)`, reduced.
pub fn flow_unipotent(x: &PointM, t: f64) -> Result<PointM> {
    reduce(&x.rep().mul(&unipotent(t)))
}

/// Reference `τ`: `ε = 0.3` on the bump at `I` with `δ = 0.2`, amplitude 1,
/// cutoff 5.
pub fn reference_tau(mc: &MonteCarlo) -> Result<TimeChangeGenerator> {
    TimeChangeGenerator::new(0.3, reference_psi(), mc)
}

pub fn reference_psi() -> BumpObservable {
    BumpObservable::new(GroupElement::IDENTITY, 0.2, 1.0, 5).expect("reference bump certifies")
}

/// A point whose horocycle orbit crosses the support of [`reference_psi`]
/// shortly after time 0.
pub fn reference_orbit_start() -> PointM {
    reduce(&iwasawa(0.0, 1.0, 0.05).mul(&unipotent(-0.1))).expect("finite")
}
