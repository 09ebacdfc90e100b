//! Shear kinematics: the shear function `v(r,x,t)`, the change-of-variable
//! identity for `∂r (e^r u(x_r,t))`, distortion of `v` in `r`, and
//! exceedance-set statistics.
//!
//! Geodesic displacement uses the shear generator `X̂` (see
//! [`shear_generator`]): `x_r = x · exp(r X̂)`, for which
//! `Ad(exp(-sU)) X̂ = X̂ + sU`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{exp_algebra, shear_generator, GroupElement, U};
use crate::observable::BumpObservable;
use crate::parallel::try_map_indexed;
use crate::quotient::PointM;
use crate::stats::{birkhoff_multi, MonteCarlo};
use crate::timechange::{cocycle_solution, CocycleConfig, CocycleSolution, TimeChangeGenerator};

fn displaced(x: &GroupElement, r: f64) -> Result<GroupElement> {
    Ok(x.mul(&exp_algebra(&shear_generator(), r)?))
}

fn solve_displaced(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    cfg: &CocycleConfig,
) -> Result<CocycleSolution> {
    cocycle_solution(tau, &displaced(x.rep(), r)?, t, cfg, Some(&shear_generator()))
}

/// `v(r,x,t) = t - ∫_0^{u(x_r,t)} X̂τ(h_s x_r) ds`.
pub fn v_shear(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    cfg: &CocycleConfig,
) -> Result<f64> {
    Ok(t - solve_displaced(tau, x, r, t, cfg)?.integral_v)
}

/// Everything measured at one `(x, r, t)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShearSample {
    pub r: f64,
    pub t: f64,
    pub u_val: f64,
    pub v_val: f64,
    /// Central difference of `v` in `r`.
    pub dv_dr: f64,
    /// Central difference of `e^r u(x_r,t)` in `r`.
    pub lhs_derivative: f64,
    /// `e^r v / τ(h^τ_t x_r)`.
    pub rhs_formula: f64,
    /// Central difference of `u(x_r,t)` in `r`.
    pub du_dr: f64,
    /// `-(τ(h^τ_t x_r))⁻¹ (∫_0^u X̂τ(h_s x_r) ds - t) - u(x_r,t)`.
    pub du_closed: f64,
}

pub fn shear_sample(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    h: f64,
    cfg: &CocycleConfig,
) -> Result<ShearSample> {
    let mid = solve_displaced(tau, x, r, t, cfg)?;
    let lo = solve_displaced(tau, x, r - h, t, cfg)?;
    let hi = solve_displaced(tau, x, r + h, t, cfg)?;
    let v = |s: &CocycleSolution| t - s.integral_v;
    let e = |s: f64| s.exp();
    let sample = ShearSample {
        r,
        t,
        u_val: mid.u,
        v_val: v(&mid),
        dv_dr: (v(&hi) - v(&lo)) / (2.0 * h),
        lhs_derivative: (e(r + h) * hi.u - e(r - h) * lo.u) / (2.0 * h),
        rhs_formula: e(r) * v(&mid) / mid.tau_end,
        du_dr: (hi.u - lo.u) / (2.0 * h),
        du_closed: -(mid.integral_v - t) / mid.tau_end - mid.u,
    };
    let fields = [
        sample.u_val,
        sample.v_val,
        sample.dv_dr,
        sample.lhs_derivative,
        sample.rhs_formula,
    ];
    if fields.iter().any(|f| !f.is_finite()) {
        return Err(Error::NumericOverflow(format!("non-finite shear sample {sample:?}")));
    }
    Ok(sample)
}

/// `|central difference of e^r u(x_r,t) - e^r v / τ(h^τ_t x_r)|` at step `h`.
pub fn check_change_of_variable(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    h: f64,
    cfg: &CocycleConfig,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidInput(format!("difference step {h} not in [1e-6, 1e-3]")));
    }
    let s = shear_sample(tau, x, r, t, h, cfg)?;
    Ok((s.lhs_derivative - s.rhs_formula).abs())
}

/// Central difference `∂v/∂r` at step `h`.
pub fn distortion_estimate(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    h: f64,
    cfg: &CocycleConfig,
) -> Result<f64> {
    let hi = v_shear(tau, x, r + h, t, cfg)?;
    let lo = v_shear(tau, x, r - h, t, cfg)?;
    Ok((hi - lo) / (2.0 * h))
}

/// Term-by-term expansion of `∂v/∂r`:
/// `-(∂r u) X̂τ(h^τ_t x_r) - ∫_0^u ((X̂ + sU) X̂τ)(h_s x_r) ds`,
/// with `∂r u` from its closed form and the integral by an independent
/// composite Simpson rule with `panels` panels.
pub fn distortion_closed_form(
    tau: &TimeChangeGenerator,
    x: &PointM,
    r: f64,
    t: f64,
    cfg: &CocycleConfig,
    panels: usize,
) -> Result<f64> {
    let shear = shear_generator();
    let start = displaced(x.rep(), r)?;
    let sol = solve_displaced(tau, x, r, t, cfg)?;
    let du = -(sol.integral_v - t) / sol.tau_end - sol.u;
    let eps = tau.epsilon();
    let integrand = |s: f64| {
        let [a, b, c, d] = start.0;
        let g = GroupElement([a, a * s + b, c, c * s + d]);
        let (_, _, xx) = tau.tau_jet_at(&g, &shear);
        xx + s * eps * tau.psi().mixed_at(&g, &U, &shear)
    };
    let n = panels.max(1);
    let h = sol.u / n as f64;
    let mut acc = 0.0;
    let mut f0 = integrand(0.0);
    for k in 0..n {
        let s0 = k as f64 * h;
        let fm = integrand(s0 + 0.5 * h);
        let f1 = integrand(s0 + h);
        acc += h / 6.0 * (f0 + 4.0 * fm + f1);
        f0 = f1;
    }
    Ok(-(du * sol.v_tau_end) - acc)
}

/// Constants of the shear lemmas. Only `c_tau` has a closed form; the others
/// are empirical outputs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiagnosticBounds {
    pub c_v: f64,
    pub c_tau: f64,
    pub gamma: f64,
    pub b_tilde: f64,
    pub b_prime: f64,
    pub beta0: f64,
}

impl DiagnosticBounds {
    /// `C_τ = 3 m_τ² + 3 m_τ⁴`.
    pub fn c_tau(m_tau: f64) -> f64 {
        3.0 * m_tau.powi(2) + 3.0 * m_tau.powi(4)
    }

    /// `β₀ = β / (1 + β)`.
    pub fn beta0_from_beta(beta: f64) -> f64 {
        beta / (1.0 + beta)
    }

    pub fn new(m_tau: f64, gamma: f64, beta0: f64, c_v: f64, b_tilde: f64, b_prime: f64) -> Result<Self> {
        let b = DiagnosticBounds {
            c_v,
            c_tau: Self::c_tau(m_tau),
            gamma,
            b_tilde,
            b_prime,
            beta0,
        };
        let positive = [b.c_v, b.c_tau, b.b_tilde, b.b_prime].iter().all(|v| *v > 0.0);
        if !positive || !(0.0 < gamma && gamma < 1.0) || !(0.0 < beta0 && beta0 < 1.0) {
            return Err(Error::InvalidInput(format!("invalid diagnostic constants {b:?}")));
        }
        Ok(b)
    }
}

/// Log-log slope of exceedance fractions with a binomial delta-method 95%
/// interval (`Var log p = (1 - p) / (n p)`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Trend {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points_used: usize,
}

impl Trend {
    pub fn decreasing(&self) -> bool {
        self.ci_high < 0.0
    }
}

pub fn binomial_trend(points: &[(f64, f64, usize)]) -> Result<Trend> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(t, p, n)| *t > 0.0 && *p > 0.0 && *n > 0)
        .map(|&(t, p, n)| {
            let var = ((1.0 - p) / (n as f64 * p)).max(1.0 / (n as f64 * n as f64));
            (t.ln(), p.ln(), 1.0 / var)
        })
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} non-zero fractions", pts.len())));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all fractions at one level".into()));
    }
    let slope = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let half = 1.959_963_984_540_054 / sxx.sqrt();
    Ok(Trend {
        slope,
        ci_low: slope - half,
        ci_high: slope + half,
        points_used: pts.len(),
    })
}

/// Fraction of `values` strictly above `c`.
pub fn exceed_fraction(values: &[f64], c: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| **v > c).count() as f64 / values.len() as f64
}

/// Empirical `q`-quantile (nearest rank).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

/// One CSV row of the shear experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShearRow {
    pub t0: f64,
    pub t: f64,
    pub r: f64,
    pub quantile: f64,
    #[serde(rename = "C_v_fit")]
    pub c_v_fit: f64,
    pub exceed_frac: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShearExceedance {
    pub rows: Vec<ShearRow>,
    /// Per displacement `r`: trend of the exceedance fraction in `t0`.
    pub trends: Vec<(f64, Option<Trend>)>,
}

/// Displacements `{0, r_max/4, r_max/2, r_max}`.
pub fn r_grid(r_max: f64) -> [f64; 4] {
    [0.0, 0.25 * r_max, 0.5 * r_max, r_max]
}

/// Distribution of `|v(r,x,t) - t| / (r t + t^{1-γ})` over Haar points.
///
/// For every level `(t0, t)` and every `r` in [`r_grid`], `C_v_fit` is the
/// `(1 - t0^{-γ})`-quantile of the ratio and `exceed_frac` the fraction of
/// points above the candidate `C_v` fitted at the first level (same `r`).
pub fn shear_exceedance(
    tau: &TimeChangeGenerator,
    levels: &[(f64, f64)],
    r_max: f64,
    gamma: f64,
    mc: &MonteCarlo,
    cfg: &CocycleConfig,
) -> Result<ShearExceedance> {
    if !(0.0..=1.0).contains(&r_max) {
        return Err(Error::InvalidInput(format!("r_max = {r_max} not in [0, 1]")));
    }
    if levels.iter().any(|(t0, t)| !(*t0 > 1.0) || t < t0) {
        return Err(Error::InvalidInput("shear levels need t >= t0 > 1".into()));
    }
    let rs = r_grid(r_max);
    let mc = mc.domain("shear");
    // ratios[i][level][r]
    let ratios = try_map_indexed(mc.n_samples, |i| {
        let x = mc.sample(i)?;
        let mut out = vec![[0.0f64; 4]; levels.len()];
        for (k, r) in rs.iter().enumerate() {
            for (l, &(_, t)) in levels.iter().enumerate() {
                let v = v_shear(tau, &x, *r, t, cfg)
                    .map_err(|e| Error::AtSample { t, index: i, source: Box::new(e) })?;
                out[l][k] = (v - t).abs() / (r * t + t.powf(1.0 - gamma));
            }
        }
        Ok(out)
    })?;
    let column = |l: usize, k: usize| ratios.iter().map(|s| s[l][k]).collect::<Vec<f64>>();
    let mut rows = Vec::new();
    let mut trends = Vec::new();
    for (k, &r) in rs.iter().enumerate() {
        let mut reference = None;
        let mut fractions = Vec::new();
        for (l, &(t0, t)) in levels.iter().enumerate() {
            let col = column(l, k);
            let q = 1.0 - t0.powf(-gamma);
            let c_fit = quantile(&col, q);
            let c_ref = *reference.get_or_insert(c_fit);
            let frac = exceed_fraction(&col, c_ref);
            fractions.push((t0, frac, col.len()));
            rows.push(ShearRow {
                t0,
                t,
                r,
                quantile: q,
                c_v_fit: c_fit,
                exceed_frac: frac,
                n: col.len(),
                seed: mc.streams.seed(),
            });
        }
        trends.push((r, binomial_trend(&fractions).ok()));
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.r.total_cmp(&b.r)));
    Ok(ShearExceedance { rows, trends })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicExceedanceLevel {
    pub t0: f64,
    pub exceed_frac: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicExceedance {
    /// The γ whose trend is the most strongly certified decay.
    pub gamma_fit: f64,
    /// Threshold `c` in `|I_t f| > c t^{1-γ}`.
    pub c: f64,
    pub levels: Vec<ErgodicExceedanceLevel>,
    pub trend: Option<Trend>,
    pub n: usize,
}

/// Fraction of exceedances targeted at the smallest `T0`.
pub const EXCEEDANCE_CALIBRATION: f64 = 0.10;

/// Candidate exponents scanned for `γ_fit`.
pub const GAMMA_SCAN: [f64; 9] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];

/// Exceedance of `|I_t f(x)| > c t^{1-γ}` for some `t = m T0`, `m` in
/// `multipliers`, from precomputed Birkhoff integrals.
///
/// `table[i][k]` is `I_{times[k]} f(x_i)`; every `m T0` must be in `times`.
pub fn ergodic_exceedance_from_table(
    table: &[Vec<f64>],
    times: &[f64],
    t0_list: &[f64],
    multipliers: &[f64],
) -> Result<ErgodicExceedance> {
    let n = table.len();
    if t0_list.is_empty() || multipliers.is_empty() {
        return Err(Error::InvalidInput("empty T0 or multiplier list".into()));
    }
    let index_of = |t: f64| {
        times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::InvalidInput(format!("time {t} missing from the Birkhoff grid")))
    };
    let idx: Vec<Vec<usize>> = t0_list
        .iter()
        .map(|t0| multipliers.iter().map(|m| index_of(m * t0)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let scores = |gamma: f64, l: usize| -> Vec<f64> {
        table
            .iter()
            .map(|row| {
                idx[l]
                    .iter()
                    .map(|&k| row[k].abs() / times[k].powf(1.0 - gamma))
                    .fold(0.0, f64::max)
            })
            .collect()
    };

    let mut best: Option<ErgodicExceedance> = None;
    for &gamma in &GAMMA_SCAN {
        let c = quantile(&scores(gamma, 0), 1.0 - EXCEEDANCE_CALIBRATION);
        let levels: Vec<ErgodicExceedanceLevel> = (0..t0_list.len())
            .map(|l| ErgodicExceedanceLevel {
                t0: t0_list[l],
                exceed_frac: if c > 0.0 { exceed_fraction(&scores(gamma, l), c) } else { 0.0 },
            })
            .collect();
        let trend = binomial_trend(
            &levels.iter().map(|l| (l.t0, l.exceed_frac, n)).collect::<Vec<_>>(),
        )
        .ok();
        let candidate = ErgodicExceedance {
            gamma_fit: gamma,
            c,
            levels,
            trend,
            n,
        };
        let key = |e: &ErgodicExceedance| e.trend.map_or(f64::NEG_INFINITY, |t| -t.ci_high);
        if best.as_ref().is_none_or(|b| key(&candidate) > key(b)) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("γ scan is non-empty"))
}

/// Birkhoff integrals `I_t f(x_i)` on the sorted union of `m T0`.
pub fn ergodic_exceedance(
    f: &BumpObservable,
    t0_list: &[f64],
    multipliers: &[f64],
    mc: &MonteCarlo,
    step: f64,
) -> Result<ErgodicExceedance> {
    let mut times: Vec<f64> = t0_list
        .iter()
        .flat_map(|t0| multipliers.iter().map(move |m| m * t0))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mc = mc.domain("exceedance");
    let table = try_map_indexed(mc.n_samples, |i| {
        let x = mc.sample(i)?;
        birkhoff_multi(f, x.rep(), &times, step)
    })?;
    ergodic_exceedance_from_table(&table, &times, t0_list, multipliers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quotient::{iwasawa, reduce};
    use crate::rng::SampleStreams;
    use crate::timechange::{reference_orbit_start, reference_tau};

    fn mc() -> MonteCarlo {
        MonteCarlo::new(SampleStreams::new(3), 20_000)
    }

    #[test]
    fn trivial_tau_has_no_shear() {
        let tau = TimeChangeGenerator::trivial();
        let cfg = CocycleConfig::default();
        let x = reduce(&iwasawa(0.1, 1.4, 0.2)).unwrap();
        assert_eq!(v_shear(&tau, &x, 0.3, 12.0, &cfg).unwrap(), 12.0);
        let s = shear_sample(&tau, &x, 0.3, 12.0, 1e-4, &cfg).unwrap();
        assert!((s.lhs_derivative - s.rhs_formula).abs() <= 1e-8 * 12.0f64.max(1.0) * 10.0);
        assert_eq!(s.dv_dr, 0.0);
    }

    #[test]
    fn lemma_4_1_and_du_at_reference() {
        let tau = reference_tau(&mc()).unwrap();
        let cfg = CocycleConfig::default();
        let x = reference_orbit_start();
        for (r, t) in [(0.0, 1.0), (0.3, 5.0), (0.8, 20.0)] {
            let s = shear_sample(&tau, &x, r, t, 1e-4, &cfg).unwrap();
            assert!((s.lhs_derivative - s.rhs_formula).abs() <= 1e-4 * (1.0 + t), "{s:?}");
            assert!((s.du_dr - s.du_closed).abs() <= 1e-4 * (1.0 + t), "{s:?}");
        }
        // the orbit meets the bump, so v differs from t
        let v = v_shear(&tau, &x, 0.0, 1.0, &cfg).unwrap();
        assert!((v - 1.0).abs() > 1e-4);
    }

    #[test]
    fn distortion_matches_expansion() {
        let tau = reference_tau(&mc()).unwrap();
        let cfg = CocycleConfig::default();
        let x = reference_orbit_start();
        for (r, t) in [(0.0, 1.0), (0.2, 3.0)] {
            let fd = distortion_estimate(&tau, &x, r, t, 1e-4, &cfg).unwrap();
            let cf = distortion_closed_form(&tau, &x, r, t, &cfg, 4096).unwrap();
            assert!(fd.abs() > 1e-3);
            assert!((fd - cf).abs() <= 1e-3 * fd.abs(), "fd {fd} vs closed {cf}");
            let c_tau = DiagnosticBounds::c_tau(tau.m_tau());
            assert!(fd.abs() <= (c_tau + 1e-3) * t);
        }
    }

    #[test]
    fn exceedance_helpers() {
        let v = [0.1, 0.5, 0.2, 0.9, 0.4];
        assert_eq!(quantile(&v, 0.6), 0.4);
        assert_eq!(quantile(&v, 1.0), 0.9);
        assert!(exceed_fraction(&v, 0.8) <= exceed_fraction(&v, 0.4));
        assert_eq!(exceed_fraction(&[], 1.0), 0.0);
        let t = binomial_trend(&[(4.0, 0.1, 10_000), (16.0, 0.05, 10_000), (64.0, 0.025, 10_000)])
            .unwrap();
        assert!((t.slope + 0.5).abs() < 1e-12 && t.decreasing());
        assert!(DiagnosticBounds::new(1.5, 0.2, 0.5, 1.0, 1.0, 1.0).is_ok());
        assert!(DiagnosticBounds::new(1.5, 1.2, 0.5, 1.0, 1.0, 1.0).is_err());
        assert_eq!(DiagnosticBounds::c_tau(1.0), 6.0);
    }

    #[test]
    fn zero_observable_never_exceeds() {
        let f = crate::timechange::reference_psi().scaled(0.0);
        let mc = MonteCarlo::new(SampleStreams::new(2), 50);
        let e = ergodic_exceedance(&f, &[4.0, 16.0], &[1.0, 2.0], &mc, 1.0 / 16.0).unwrap();
        assert!(e.levels.iter().all(|l| l.exceed_frac == 0.0));
    }

    #[test]
    fn shear_rows_for_trivial_tau() {
        let tau = TimeChangeGenerator::trivial();
        let mc = MonteCarlo::new(SampleStreams::new(2), 20);
        let cfg = CocycleConfig::default();
        let rep = shear_exceedance(&tau, &[(2.0, 4.0), (3.0, 9.0)], 1.0, 0.25, &mc, &cfg).unwrap();
        assert_eq!(rep.rows.len(), 8);
        assert!(rep.rows.iter().all(|r| r.c_v_fit == 0.0 && r.exceed_frac == 0.0));
    }
}
