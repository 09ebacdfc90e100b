//! Ergodic integrals, correlation estimators, geodesic averages and
//! power-law fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::lie::{shear_generator, unipotent, GroupElement};
use crate::observable::BumpObservable;
use crate::parallel::try_map_indexed;
use crate::quotient::{haar_sample, reduce, PointM, DEFAULT_Y_MAX};
use crate::rng::SampleStreams;
use crate::timechange::{solve_cocycle_multi, CocycleConfig, TimeChangeGenerator};

/// Orbit panels between Γ-reductions in Birkhoff quadrature.
pub const BIRKHOFF_REDUCE_EVERY: usize = 16;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Estimate { mean, stderr: 0.0, n: 0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: 0.0, stderr: 0.0, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n }
    }
}

/// `Σa / Σb` with delta-method standard error.
pub fn ratio_estimate(pairs: &[(f64, f64)]) -> Estimate {
    let n = pairs.len();
    if n == 0 {
        return Estimate { mean: 0.0, stderr: 0.0, n };
    }
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let r = ma / mb;
    let resid: Vec<f64> = pairs.iter().map(|(a, b)| (a - r * b) / mb).collect();
    let se = Estimate::from_samples(&resid).stderr;
    Estimate { mean: r, stderr: se, n }
}

/// Haar sampling settings shared by the estimators.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarlo {
    pub streams: SampleStreams,
    pub n_samples: usize,
    pub y_max: f64,
}

impl MonteCarlo {
    pub fn new(streams: SampleStreams, n_samples: usize) -> Self {
        MonteCarlo {
            streams,
            n_samples,
            y_max: DEFAULT_Y_MAX,
        }
    }

    pub fn with_y_max(mut self, y_max: f64) -> Self {
        self.y_max = y_max;
        self
    }

    pub fn with_samples(mut self, n_samples: usize) -> Self {
        self.n_samples = n_samples;
        self
    }

    pub fn domain(&self, tag: &str) -> Self {
        MonteCarlo {
            streams: self.streams.domain(tag),
            ..*self
        }
    }

    pub fn sample(&self, index: usize) -> Result<PointM> {
        haar_sample(&mut self.streams.stream(index as u64), self.y_max)
    }
}

/// `I_t f(x)` at every checkpoint in `times` (sorted, non-negative), by
/// composite Simpson along one pass of the orbit.
pub fn birkhoff_multi(
    f: &BumpObservable,
    g: &GroupElement,
    times: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0 / 16.0) {
        return Err(Error::InvalidInput(format!("Birkhoff step {step} not in (0, 1/16]")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidInput("Birkhoff times must be sorted and non-negative".into()));
    }
    let mut base = *g;
    let mut base_s = 0.0;
    let point = |base: &GroupElement, s: f64| {
        let [a, b, c, d] = base.0;
        GroupElement([a, a * s + b, c, c * s + d])
    };
    let mut out = Vec::with_capacity(times.len());
    let mut s = 0.0;
    let mut acc = 0.0;
    let mut f0 = f.eval_at(&base);
    let mut panels = 0usize;
    for &target in times {
        while s < target {
            let block = (BIRKHOFF_REDUCE_EVERY - panels % BIRKHOFF_REDUCE_EVERY)
                .min(((target - s) / step) as usize);
            if block > 1 {
                let len = block as f64 * step;
                if f.segment_clear(&point(&base, s - base_s), len) {
                    acc += len * f.offset();
                    f0 = f.offset();
                    s += len;
                    panels += block;
                    if panels.is_multiple_of(BIRKHOFF_REDUCE_EVERY) {
                        base = *reduce(&point(&base, s - base_s))?.rep();
                        base_s = s;
                    }
                    continue;
                }
            }
            let h = step.min(target - s);
            let left = point(&base, s - base_s);
            if f.segment_clear(&left, h) {
                acc += h * f.offset();
                f0 = f.offset();
            } else {
                let fm = f.eval_at(&point(&base, s + 0.5 * h - base_s));
                let f1 = f.eval_at(&point(&base, s + h - base_s));
                acc += h / 6.0 * (f0 + 4.0 * fm + f1);
                f0 = f1;
            }
            s += h;
            panels += 1;
            if panels.is_multiple_of(BIRKHOFF_REDUCE_EVERY) {
                base = *reduce(&point(&base, s - base_s))?.rep();
                base_s = s;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// `I_t f(x) = ∫_0^t f(h_r x) dr`.
pub fn birkhoff_integral(f: &BumpObservable, x: &PointM, t: f64, step: f64) -> Result<f64> {
    if t < 0.0 {
        return Ok(-birkhoff_integral(f, &reduce(&x.rep().mul(&unipotent(t)))?, -t, step)?);
    }
    Ok(birkhoff_multi(f, x.rep(), &[t], step)?[0])
}

/// One row of an L²-growth experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct L2Point {
    pub t: f64,
    /// Estimate of `‖I_t f‖²₂`.
    pub second_moment: f64,
    pub stderr: f64,
    /// Estimate of `μ(I_t f) / t`.
    pub drift: f64,
    pub drift_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct L2Growth {
    pub points: Vec<L2Point>,
    /// Fitted slope of `log ‖I_t f‖²₂` against `log t`.
    pub slope: f64,
    pub slope_ci: (f64, f64),
    /// Set when `I_t f / t` is significantly non-zero at the largest `t`
    /// (the observable was not centered).
    pub nonzero_mean: bool,
}

/// Monte Carlo `‖I_t f‖²₂` on `t_list`, with the log-log slope fit.
pub fn l2_growth(
    f: &BumpObservable,
    t_list: &[f64],
    mc: &MonteCarlo,
    step: f64,
) -> Result<L2Growth> {
    let mc = mc.domain("l2growth");
    let rows = try_map_indexed(mc.n_samples, |i| {
        let x = mc.sample(i)?;
        birkhoff_multi(f, x.rep(), t_list, step)
    })?;
    l2_growth_from_table(&rows, t_list)
}

/// [`l2_growth`] from precomputed `rows[i][k] = I_{t_list[k]} f(x_i)`.
pub fn l2_growth_from_table(rows: &[Vec<f64>], t_list: &[f64]) -> Result<L2Growth> {
    let mut points = Vec::with_capacity(t_list.len());
    for (k, &t) in t_list.iter().enumerate() {
        let sq: Vec<f64> = rows.iter().map(|r| r[k] * r[k]).collect();
        let lin: Vec<f64> = rows.iter().map(|r| r[k] / t.max(f64::MIN_POSITIVE)).collect();
        let e = Estimate::from_samples(&sq);
        let d = Estimate::from_samples(&lin);
        points.push(L2Point {
            t,
            second_moment: e.mean,
            stderr: e.stderr,
            drift: d.mean,
            drift_stderr: d.stderr,
        });
    }
    let fit = fit_power_law(
        &points.iter().map(|p| (p.t, p.second_moment, p.stderr)).collect::<Vec<_>>(),
        2.0,
    )?;
    let nonzero_mean = points
        .last()
        .is_some_and(|p| p.drift.abs() > 3.0 * p.drift_stderr && p.drift != 0.0);
    Ok(L2Growth {
        points,
        slope: -fit.exponent,
        slope_ci: (-fit.ci_high, -fit.ci_low),
        nonzero_mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Unipotent,
    Timechanged,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Unipotent => "unipotent",
            FlowKind::Timechanged => "timechanged",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrelationEstimate {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub flow_kind: FlowKind,
    /// `(μ(f), μ(g))`, τ-weighted for the time-changed flow.
    pub means: (f64, f64),
}

/// Correlations on a whole time grid from one pass per sample.
///
/// Samples `[0, n/2)` estimate the cross term `∫ f(flow_t x) g(x) w(x)`,
/// samples `[n/2, n)` the means; `w = τ/μ(τ)` for the time-changed flow.
pub fn correlations(
    f: &BumpObservable,
    g: &BumpObservable,
    t_grid: &[f64],
    kind: FlowKind,
    tau: Option<&TimeChangeGenerator>,
    mc: &MonteCarlo,
    cfg: &CocycleConfig,
) -> Result<Vec<CorrelationEstimate>> {
    if mc.n_samples < 4 {
        return Err(Error::InvalidInput("correlation needs at least 4 samples".into()));
    }
    let tau = match (kind, tau) {
        (FlowKind::Timechanged, Some(t)) => Some(t),
        (FlowKind::Timechanged, None) => {
            return Err(Error::InvalidInput("time-changed correlation needs τ".into()))
        }
        (FlowKind::Unipotent, _) => None,
    };
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|a, b| t_grid[*a].abs().total_cmp(&t_grid[*b].abs()));
    let sorted: Vec<f64> = order.iter().map(|&k| t_grid[k].abs()).collect();
    let backward = t_grid.iter().any(|t| *t < 0.0);
    if backward && t_grid.iter().any(|t| *t > 0.0) {
        return Err(Error::InvalidInput("time grid must not mix signs".into()));
    }

    let mc = mc.domain("correlation");
    let half = mc.n_samples / 2;
    let weight = |x: &PointM| tau.map_or(1.0, |t| t.invariant_measure_weight(x));

    let cross = try_map_indexed(half, |i| {
        let x = mc.sample(i)?;
        let gx = g.eval(&x);
        let mut row = vec![0.0; t_grid.len()];
        if gx == 0.0 {
            return Ok(row);
        }
        let w = weight(&x);
        let ends: Vec<GroupElement> = match tau {
            Some(tc) => solve_cocycle_multi(tc, x.rep(), &sorted, cfg, backward, None)
                .map_err(|e| Error::AtSample {
                    t: *sorted.last().unwrap_or(&0.0),
                    index: i,
                    source: Box::new(e),
                })?
                .into_iter()
                .map(|s| s.end)
                .collect(),
            None => sorted
                .iter()
                .map(|&t| {
                    let s = if backward { -t } else { t };
                    x.rep().mul(&unipotent(s))
                })
                .collect(),
        };
        for (k, end) in order.iter().zip(ends) {
            let y = reduce(&end)?;
            row[*k] = w * f.eval(&y) * gx;
        }
        Ok(row)
    })?;
    let means = try_map_indexed(mc.n_samples - half, |j| {
        let x = mc.sample(half + j)?;
        let w = weight(&x);
        Ok((w * f.eval(&x), w * g.eval(&x)))
    })?;
    let mf = Estimate::from_samples(&means.iter().map(|m| m.0).collect::<Vec<_>>());
    let mg = Estimate::from_samples(&means.iter().map(|m| m.1).collect::<Vec<_>>());

    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let c = Estimate::from_samples(&cross.iter().map(|r| r[k]).collect::<Vec<_>>());
            let var = c.stderr.powi(2)
                + (mg.mean * mf.stderr).powi(2)
                + (mf.mean * mg.stderr).powi(2);
            CorrelationEstimate {
                t,
                value: c.mean - mf.mean * mg.mean,
                stderr: var.sqrt(),
                n_samples: mc.n_samples,
                flow_kind: kind,
                means: (mf.mean, mg.mean),
            }
        })
        .collect())
}

/// Single-time convenience wrapper around [`correlations`].
pub fn correlation(
    f: &BumpObservable,
    g: &BumpObservable,
    t: f64,
    kind: FlowKind,
    tau: Option<&TimeChangeGenerator>,
    mc: &MonteCarlo,
    cfg: &CocycleConfig,
) -> Result<CorrelationEstimate> {
    Ok(correlations(f, g, &[t], kind, tau, mc, cfg)?[0])
}

/// `A_{t,s} f(x) = ∫_0^s f(h^τ_t(x_r)) dr` by composite Simpson in `r`, with
/// `x_r` the shear-direction geodesic displacement (see
/// [`shear_generator`]).
pub fn geodesic_average_a(
    f: &BumpObservable,
    tau: &TimeChangeGenerator,
    x: &PointM,
    t: f64,
    s: f64,
    quad_step: f64,
    cfg: &CocycleConfig,
) -> Result<f64> {
    if !(s > 0.0) || !(quad_step > 0.0) {
        return Err(Error::InvalidInput("geodesic average needs s > 0 and a positive step".into()));
    }
    let panels = ((s / quad_step).ceil() as usize).max(1);
    let h = s / panels as f64;
    let shear = shear_generator();
    let integrand = |r: f64| -> Result<f64> {
        let xr = reduce(&crate::lie::flow_raw(x.rep(), &shear, r)?)?;
        let end = crate::timechange::flow_timechanged(tau, &xr, t, cfg)?;
        Ok(f.eval(&end))
    };
    let mut acc = 0.0;
    let mut f0 = integrand(0.0)?;
    for k in 0..panels {
        let r0 = k as f64 * h;
        let fm = integrand(r0 + 0.5 * h)?;
        let f1 = integrand(r0 + h)?;
        acc += h / 6.0 * (f0 + 4.0 * fm + f1);
        f0 = f1;
    }
    Ok(acc)
}

/// Fitted power law `|value| ≈ C t^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points_used: usize,
    pub noise_floor: f64,
}

impl DecayFit {
    pub fn ci95(&self) -> (f64, f64) {
        (self.ci_low, self.ci_high)
    }
}

/// Weighted least squares of `log|value|` on `log t` over `(t, value,
/// stderr)` triples with `|value| > noise_mult · stderr` and `t > 0`.
///
/// The fit window is the first run (in increasing `t`) of points above the
/// noise floor; once a series has reached the floor, later isolated
/// excursions above it are treated as noise.
///
/// Weights are `(value/stderr)²` (delta method). The 95% interval uses the
/// Student t quantile with the residual scale when the reduced χ² exceeds 1,
/// the normal quantile with the nominal weights otherwise.
pub fn fit_power_law(points: &[(f64, f64, f64)], noise_mult: f64) -> Result<DecayFit> {
    let noise_floor = points
        .iter()
        .map(|p| noise_mult * p.2)
        .fold(0.0, f64::max);
    let mut sorted: Vec<&(f64, f64, f64)> = points.iter().filter(|p| p.0 > 0.0).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let above = |(_, v, se): &&(f64, f64, f64)| v.abs() > noise_mult * se && *v != 0.0 && v.is_finite();
    let usable: Vec<(f64, f64, f64)> = sorted
        .iter()
        .skip_while(|p| !above(p))
        .take_while(|p| above(p))
        .map(|&&(t, v, se)| {
            let rel = (se / v.abs()).max(1e-12);
            (t.ln(), v.abs().ln(), 1.0 / (rel * rel))
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::AllBelowNoise {
            n: points.len(),
            noise_floor,
        });
    }
    if usable.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} usable points, need 3",
            usable.len()
        )));
    }
    let sw: f64 = usable.iter().map(|p| p.2).sum();
    let mx = usable.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = usable.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = usable.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all points at the same t".into()));
    }
    let sxy: f64 = usable.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = usable.len() - 2;
    let chi2: f64 = usable
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let red = chi2 / dof as f64;
    let (var, q) = if red > 1.0 {
        let t = StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| Error::DegenerateFit(e.to_string()))?;
        (red / sxx, t.inverse_cdf(0.975))
    } else {
        (1.0 / sxx, 1.959_963_984_540_054)
    };
    let half = q * var.sqrt();
    Ok(DecayFit {
        exponent: -slope,
        intercept,
        ci_low: -slope - half,
        ci_high: -slope + half,
        points_used: usable.len(),
        noise_floor,
    })
}

/// Decay exponent of a correlation series (see [`fit_power_law`] for the
/// noise-floor window).
pub fn fit_decay_exponent(points: &[CorrelationEstimate], noise_mult: f64) -> Result<DecayFit> {
    let triples: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.t, p.value, p.stderr)).collect();
    fit_power_law(&triples, noise_mult)
}
