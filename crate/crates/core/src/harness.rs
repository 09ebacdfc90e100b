//! Verification suite, experiment runners and result emission.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::config::{powers_of_two, ExperimentConfig};
use crate::error::{Error, Result};
use crate::lie::{
    exp_algebra, flow_raw, pushforward_x_along_h, shear_generator, unipotent, AlgebraElement,
    GroupElement, U, X,
};
use crate::observable::{project_zero_mean, BumpObservable};
use crate::parallel::{try_map_indexed, with_workers};
use crate::quotient::{coset_equal, enumerate_lattice, reduce, truncation_deficit};
use crate::rng::SampleStreams;
use crate::shear::{shear_exceedance, shear_sample, DiagnosticBounds, ShearRow};
use crate::stats::{
    birkhoff_multi, correlations, fit_power_law, l2_growth, DecayFit, FlowKind, MonteCarlo,
};
use crate::timechange::{
    admissibility_report, cocycle_u, flow_timechanged, TimeChangeGenerator,
};

/// Samples used to estimate `μ(τ)` and the zero-mean projections.
pub const NORMALIZATION_SAMPLES: usize = 200_000;

/// Outcome of one lemma-tagged check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub tag: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing_tags(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.tag).collect()
    }
}

fn check(tag: &'static str, worst: f64, limit: f64, what: &str) -> Check {
    Check {
        tag,
        passed: worst <= limit,
        detail: format!("{what}: worst {worst:.3e} (limit {limit:.1e})"),
    }
}

fn random_group<R: Rng>(rng: &mut R, scale: f64) -> GroupElement {
    let a = AlgebraElement([
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        0.0,
    ]);
    let a = AlgebraElement([a.0[0], a.0[1], a.0[2], -a.0[0]]);
    exp_algebra(&a, 1.0).expect("bounded exponent")
}

/// Builds the configured time-change with its normalization.
pub fn build_tau(cfg: &ExperimentConfig, streams: &SampleStreams) -> Result<TimeChangeGenerator> {
    let psi = cfg.build_psi()?;
    let mc = MonteCarlo::new(streams.domain("normalization"), NORMALIZATION_SAMPLES).with_y_max(cfg.y_max);
    TimeChangeGenerator::new(cfg.tau.epsilon, psi, &mc)
}

/// Runs the invariant suite for `cfg`.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    with_workers(cfg.workers, || verify_inner(cfg))?
}

fn verify_inner(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let streams = SampleStreams::new(cfg.seed).domain("verify");
    let n = cfg.verify.samples.max(1);
    let ccfg = cfg.cocycle;
    let tau = build_tau(cfg, &streams)?;
    let mut checks = Vec::new();

    // lie_core
    let geo = if cfg.verify.flip_x_sign { X.scale(-1.0) } else { X };
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = streams.domain("commutation").stream(i as u64);
        let g = random_group(&mut rng, 1.0);
        let t = rng.random_range(-10.0..10.0);
        let r = rng.random_range(-3.0..3.0);
        let lhs = flow_raw(&flow_raw(&g, &geo, r)?, &U, r.exp() * t)?.renormalized();
        let rhs = flow_raw(&flow_raw(&g, &U, t)?, &geo, r)?.renormalized();
        worst = worst.max(lhs.max_diff(&rhs));
    }
    checks.push(check("eq:commutation", worst, 1e-10, "g e^{rX} e^{e^r t U} vs g e^{tU} e^{rX}"));

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = streams.domain("exp").stream(i as u64);
        let a = AlgebraElement([rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0]);
        let a = AlgebraElement([a.0[0], a.0[1], a.0[2], -a.0[0]]);
        let (s, t) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let lhs = exp_algebra(&a, s + t)?;
        let (es, et) = (exp_algebra(&a, s)?, exp_algebra(&a, t)?);
        let rhs = es.mul(&et);
        // the product cancels from size ‖e^{sA}‖‖e^{tA}‖ when s, t differ in sign
        let scale = lhs.max_abs().max(es.max_abs() * et.max_abs()).max(1.0);
        worst = worst.max(lhs.max_diff(&rhs) / scale).max((lhs.det() - 1.0).abs() / (scale * scale));
    }
    checks.push(check("exp:one-parameter", worst, 1e-11, "exp((s+t)A) vs exp(sA)exp(tA), det"));

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let s = -1e3 + 2e3 * i as f64 / n as f64;
        let expected = shear_generator().add(&U.scale(s));
        worst = worst.max(pushforward_x_along_h(s).sub(&expected).max_abs());
    }
    checks.push(check("lemma4.1:Dh_s", worst, 1e-12, "Ad(e^{-sU}) X̂ vs X̂ + sU"));

    // modular_quotient
    let lattice = enumerate_lattice(50);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = streams.domain("reduce").stream(i as u64);
        let g = random_group(&mut rng, 3.0);
        let gamma = lattice[rng.random_range(0..lattice.len())];
        let p = reduce(&g)?;
        let ok = coset_equal(&reduce(p.rep())?, &p, 1e-9) && coset_equal(&reduce(&gamma.act(&g))?, &p, 1e-9);
        if !ok {
            worst = worst.max(1.0);
        }
    }
    checks.push(check("quotient:reduction", worst, 0.0, "idempotence and Γ-invariance (mismatch count)"));

    // observables
    let f = cfg.build_f()?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = streams.domain("obs").stream(i as u64);
        let g = f.center().mul(&random_group(&mut rng, 0.5 * f.radius()));
        let gamma = lattice[rng.random_range(0..lattice.len())];
        worst = worst.max((f.eval(&reduce(&g)?) - f.eval(&reduce(&gamma.act(&g))?)).abs());
    }
    checks.push(check("obs:gamma-invariance", worst, 1e-10, "f(reduce(γg)) vs f(reduce(g))"));

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut rng = streams.domain("fd").stream(i as u64);
        let g = f.center().mul(&random_group(&mut rng, 0.5 * f.radius()));
        let h = 1e-5;
        let fd = (f.eval_at(&flow_raw(&g, &X, h)?) - f.eval_at(&flow_raw(&g, &X, -h)?)) / (2.0 * h);
        let an = f.jet_at(&g, &X).d1;
        worst = worst.max((fd - an).abs() / an.abs().max(1.0));
    }
    checks.push(check("def2.4:Xf", worst, 1e-6, "analytic Xf vs central difference"));

    // time_change
    let rep = admissibility_report(cfg.tau.epsilon, tau.psi(), 20 * n, &streams)?;
    let excess = rep
        .witnesses
        .iter()
        .map(|w| w.empirical - w.certified)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(check("def2.4:m_tau", excess.max(0.0), 0.0, "grid maxima above certified bounds"));

    let m = tau.m_tau();
    let points = try_map_indexed(n, |i| {
        let mut rng = streams.domain("cocycle").stream(i as u64);
        let x = reduce(&random_group(&mut rng, 1.0))?;
        let t = rng.random_range(0.0..50.0);
        let r = rng.random_range(0.0..50.0);
        Ok((x, t, r))
    })?;
    let rows = try_map_indexed(n, |i| {
        let (x, t, r) = points[i];
        let u = cocycle_u(&tau, &x, t, &ccfg)?;
        let y = flow_timechanged(&tau, &x, t, &ccfg)?;
        let joined = cocycle_u(&tau, &x, t + r, &ccfg)?;
        let leg = cocycle_u(&tau, &y, r, &ccfg)?;
        let lemma = (t / m - u - ccfg.tol).max(u - m * t - ccfg.tol).max(0.0);
        Ok((lemma, (joined - u - leg).abs()))
    })?;
    let lemma = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let additive = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    checks.push(check("lemma2.5", lemma, 0.0, "violation of t/m <= u <= m t"));
    checks.push(check("eq:defin_u:additivity", additive, 1e-7, "u(x,t+r) - u(x,t) - u(h^τ_t x, r)"));

    // shear_kinematics
    let c_tau = DiagnosticBounds::c_tau(m);
    let rows = try_map_indexed(n, |i| {
        let mut rng = streams.domain("shear").stream(i as u64);
        let x = reduce(&random_group(&mut rng, 1.0))?;
        let r = rng.random_range(0.0..1.0);
        let t = rng.random_range(1.0..20.0);
        let s = shear_sample(&tau, &x, r, t, 1e-4, &ccfg)?;
        Ok((
            (s.lhs_derivative - s.rhs_formula).abs() / (1.0 + t),
            (s.du_dr - s.du_closed).abs() / (1.0 + t),
            (s.dv_dr.abs() - (c_tau + 1e-3) * t).max(0.0),
        ))
    })?;
    let fold = |k: usize| {
        rows.iter()
            .map(|r| [r.0, r.1, r.2][k])
            .fold(0.0, f64::max)
    };
    checks.push(check("lemma4.1", fold(0), 1e-4, "|∂r(e^r u) - e^r v/τ| / (1+t)"));
    checks.push(check("eq:du", fold(1), 1e-4, "|∂r u - closed form| / (1+t)"));
    checks.push(check("lemma4.3", fold(2), 0.0, "excess of |∂r v| over C_τ t"));

    // ergodic_stats
    let x0 = reduce(&unipotent(-0.3))?;
    let a = birkhoff_multi(&f, x0.rep(), &[20.0], 1.0 / 128.0)?[0];
    let b = birkhoff_multi(&f, x0.rep(), &[20.0], 1.0 / 256.0)?[0];
    checks.push(check("sec3:birkhoff", (a - b).abs() / 20.0, 1e-8, "Simpson step halving / t"));

    let fit = fit_power_law(
        &(1..=8).map(|k| {
            let t = 2f64.powi(k);
            (t, t.powf(-0.5), 1e-6 * t.powf(-0.5))
        })
        .collect::<Vec<_>>(),
        2.0,
    )?;
    checks.push(check("fit:planted", (fit.exponent - 0.5).abs(), 1e-6, "planted exponent 0.5"));

    Ok(VerifyReport { checks })
}

/// Experiment kinds of [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Correlate,
    Shear,
    L2Growth,
    Exceedance,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Correlate => "correlate",
            ExperimentKind::Shear => "shear",
            ExperimentKind::L2Growth => "l2growth",
            ExperimentKind::Exceedance => "exceedance",
        }
    }

    /// Time grid used when the configuration has none.
    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            ExperimentKind::Correlate => powers_of_two(1, 8),
            ExperimentKind::Shear => powers_of_two(2, 9),
            ExperimentKind::L2Growth => powers_of_two(3, 9),
            ExperimentKind::Exceedance => Vec::new(),
        }
    }
}

/// Paths and headline results of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub rows: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    config: &'a ExperimentConfig,
    config_text: String,
    wall_time_s: f64,
    truncation_deficit: f64,
    library_version: &'a str,
    csv: String,
    rows: usize,
    results: serde_json::Value,
}

/// Appends serialized rows to a CSV file, flushing after each row.
struct RowWriter {
    inner: csv::Writer<File>,
    rows: usize,
}

impl RowWriter {
    fn create(path: &Path) -> Result<Self> {
        Ok(RowWriter {
            inner: csv::WriterBuilder::new().has_headers(false).from_writer(File::create(path)?),
            rows: 0,
        })
    }

    fn header(&mut self, names: &[&str]) -> Result<()> {
        self.inner.write_record(names).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }

    fn row<S: Serialize>(&mut self, row: &S) -> Result<()> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        self.rows += 1;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

#[derive(Serialize)]
struct CorrelationRow<'a> {
    flow_kind: &'a str,
    t: f64,
    value: f64,
    stderr: f64,
    n: usize,
    seed: u64,
    tau_epsilon: f64,
    f_id: &'a str,
    g_id: &'a str,
}

#[derive(Serialize)]
struct L2Row<'a> {
    series: &'a str,
    t: f64,
    value: f64,
    stderr: f64,
    norm: f64,
    n: usize,
    seed: u64,
}

#[derive(Serialize)]
struct ExceedanceRow {
    t0: f64,
    exceed_frac: f64,
    gamma_fit: f64,
    c: f64,
    n: usize,
    seed: u64,
}

fn observable_id(f: &BumpObservable) -> String {
    let [a, b, c, d] = f.center().0;
    format!("bump[{a};{b};{c};{d}]r{}a{}", f.radius(), f.amplitude())
}

/// Runs one experiment and writes `<kind>.csv` and `<kind>_manifest.json`
/// into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", kind.name()));
    let manifest_path = out_dir.join(format!("{}_manifest.json", kind.name()));
    let start = Instant::now();
    let (rows, results) = with_workers(cfg.workers, || experiment_inner(cfg, kind, &csv_path))??;
    let manifest = Manifest {
        kind: kind.name(),
        config: cfg,
        config_text: cfg.to_text(),
        wall_time_s: start.elapsed().as_secs_f64(),
        truncation_deficit: truncation_deficit(cfg.y_max),
        library_version: env!("CARGO_PKG_VERSION"),
        csv: csv_path.display().to_string(),
        rows,
        results,
    };
    let mut file = File::create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    writeln!(file)?;
    Ok(RunOutput {
        csv: csv_path,
        manifest: manifest_path,
        rows,
    })
}

fn experiment_inner(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    csv_path: &Path,
) -> Result<(usize, serde_json::Value)> {
    let streams = SampleStreams::new(cfg.seed);
    let mc = MonteCarlo::new(streams.domain(kind.name()), cfg.n_samples).with_y_max(cfg.y_max);
    let proj_mc = MonteCarlo::new(streams.domain("projection"), NORMALIZATION_SAMPLES).with_y_max(cfg.y_max);
    let grid = cfg.grid_or(kind.default_grid());
    let mut out = RowWriter::create(csv_path)?;
    match kind {
        ExperimentKind::Correlate => {
            out.header(&["flow_kind", "t", "value", "stderr", "n", "seed", "tau_epsilon", "f_id", "g_id"])?;
            let tau = build_tau(cfg, &streams)?;
            let f = cfg.build_f()?;
            let g = cfg.build_g()?;
            let (fid, gid) = (observable_id(&f), observable_id(&g));
            let mut fits = serde_json::Map::new();
            for flow in [FlowKind::Unipotent, FlowKind::Timechanged] {
                let est = correlations(&f, &g, &grid, flow, Some(&tau), &mc, &cfg.cocycle)?;
                for e in &est {
                    out.row(&CorrelationRow {
                        flow_kind: flow.as_str(),
                        t: e.t,
                        value: e.value,
                        stderr: e.stderr,
                        n: e.n_samples,
                        seed: cfg.seed,
                        tau_epsilon: cfg.tau.epsilon,
                        f_id: &fid,
                        g_id: &gid,
                    })?;
                }
                fits.insert(flow.as_str().into(), fit_json(fit_power_law(
                    &est.iter().map(|e| (e.t, e.value, e.stderr)).collect::<Vec<_>>(),
                    cfg.noise_mult,
                )));
            }
            fits.insert("m_tau".into(), tau.m_tau().into());
            Ok((out.rows, serde_json::Value::Object(fits)))
        }
        ExperimentKind::L2Growth => {
            out.header(&["series", "t", "value", "stderr", "norm", "n", "seed"])?;
            let f = project_zero_mean(&cfg.build_f()?, None, &proj_mc)?;
            let control = f.observable.clone().with_offset(f.observable.offset() + cfg.control_offset);
            let mut results = serde_json::Map::new();
            results.insert("projection_shift".into(), serde_json::to_value(f.shift)?);
            for (name, obs) in [("zero_mean", &f.observable), ("control", &control)] {
                let growth = l2_growth(obs, &grid, &mc, cfg.birkhoff_step)?;
                for p in &growth.points {
                    out.row(&L2Row {
                        series: name,
                        t: p.t,
                        value: p.second_moment,
                        stderr: p.stderr,
                        norm: p.second_moment.sqrt(),
                        n: cfg.n_samples,
                        seed: cfg.seed,
                    })?;
                }
                results.insert(
                    name.into(),
                    serde_json::json!({
                        "slope": growth.slope,
                        "ci_low": growth.slope_ci.0,
                        "ci_high": growth.slope_ci.1,
                        "nonzero_mean": growth.nonzero_mean,
                    }),
                );
            }
            Ok((out.rows, serde_json::Value::Object(results)))
        }
        ExperimentKind::Exceedance => {
            out.header(&["t0", "exceed_frac", "gamma_fit", "c", "n", "seed"])?;
            let f = project_zero_mean(&cfg.build_f()?, None, &proj_mc)?;
            let rep = crate::shear::ergodic_exceedance(
                &f.observable,
                &cfg.exceedance.t0_list,
                &cfg.exceedance.multipliers,
                &mc,
                cfg.birkhoff_step,
            )?;
            for l in &rep.levels {
                out.row(&ExceedanceRow {
                    t0: l.t0,
                    exceed_frac: l.exceed_frac,
                    gamma_fit: rep.gamma_fit,
                    c: rep.c,
                    n: rep.n,
                    seed: cfg.seed,
                })?;
            }
            Ok((out.rows, serde_json::to_value(&rep)?))
        }
        ExperimentKind::Shear => {
            out.header(&["t0", "t", "r", "quantile", "C_v_fit", "exceed_frac", "n", "seed"])?;
            let tau = build_tau(cfg, &streams)?;
            let levels: Vec<(f64, f64)> = match &cfg.shear.t0_list {
                Some(t0) => t0.iter().map(|t0| (*t0, t0 * t0)).collect(),
                None => grid.iter().map(|t| (t.sqrt(), *t)).collect(),
            };
            let smc = mc.with_samples(cfg.shear.n_samples);
            let rep = shear_exceedance(&tau, &levels, cfg.shear.r_max, cfg.shear.gamma, &smc, &cfg.cocycle)?;
            for row in &rep.rows {
                out.row::<ShearRow>(row)?;
            }
            let trends = serde_json::to_value(&rep.trends)?;
            Ok((out.rows, serde_json::json!({ "trends": trends, "m_tau": tau.m_tau() })))
        }
    }
}

fn fit_json(fit: Result<DecayFit>) -> serde_json::Value {
    match fit {
        Ok(f) => serde_json::to_value(f).unwrap_or_default(),
        Err(e) => fit_error_json(&e),
    }
}

fn fit_error_json(e: &Error) -> serde_json::Value {
    match e {
        Error::AllBelowNoise { n, noise_floor } => {
            serde_json::json!({ "status": "all_below_noise", "n": n, "noise_floor": noise_floor })
        }
        other => serde_json::json!({ "status": "degenerate", "message": other.to_string() }),
    }
}

/// Outcome of fitting one series of a CSV.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum SeriesFit {
    Fit(DecayFit),
    Failed(serde_json::Value),
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub series: Vec<(String, SeriesFit)>,
    /// `α̂ / (β̂/8)` when both flows were fitted.
    pub alpha_over_beta_eighth: Option<f64>,
    #[serde(skip)]
    pub text: String,
}

impl Summary {
    /// JSON of the primary series: the time-changed fit when present.
    pub fn primary_json(&self) -> serde_json::Value {
        let pick = self
            .series
            .iter()
            .find(|(n, _)| n == "timechanged")
            .or_else(|| self.series.first());
        match pick {
            Some((_, SeriesFit::Fit(f))) => serde_json::to_value(f).unwrap_or_default(),
            Some((_, SeriesFit::Failed(v))) => v.clone(),
            None => serde_json::json!({ "status": "all_below_noise", "n": 0, "noise_floor": 0.0 }),
        }
    }
}

type Point = (f64, f64, f64);

/// Fits every series of a CSV with columns `t, value, stderr` (grouped by
/// `flow_kind` or `series` when present).
pub fn emit_summary(csv_path: &Path, noise_mult: f64) -> Result<Summary> {
    let mut reader = csv::Reader::from_path(csv_path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let group_col = col("flow_kind").or_else(|| col("series"));
    let mut groups: Vec<(String, Vec<Point>)> = Vec::new();
    if !headers.is_empty() {
        let (t, v, s) = match (col("t"), col("value"), col("stderr")) {
            (Some(t), Some(v), Some(s)) => (t, v, s),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "{}: expected columns t, value, stderr",
                    csv_path.display()
                )))
            }
        };
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_error)?;
            let num = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .and_then(|x| x.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("malformed row {}", line + 2)))
            };
            let key = group_col.and_then(|k| record.get(k)).unwrap_or("series").to_string();
            let point = (num(t)?, num(v)?, num(s)?);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push(point),
                None => groups.push((key, vec![point])),
            }
        }
    }
    if groups.is_empty() {
        groups.push(("series".into(), Vec::new()));
    }
    let mut text = String::new();
    let mut series = Vec::new();
    for (name, pts) in groups {
        let fit = match fit_power_law(&pts, noise_mult) {
            Ok(f) => {
                text += &format!(
                    "{name}: exponent {:.4} (95% CI [{:.4}, {:.4}]), {} points above noise\n",
                    f.exponent, f.ci_low, f.ci_high, f.points_used
                );
                SeriesFit::Fit(f)
            }
            Err(e @ (Error::AllBelowNoise { .. } | Error::DegenerateFit(_))) => {
                text += &format!("{name}: {e}\n");
                SeriesFit::Failed(fit_error_json(&e))
            }
            Err(e) => return Err(e),
        };
        series.push((name, fit));
    }
    let exponent = |n: &str| {
        series.iter().find_map(|(k, f)| match f {
            SeriesFit::Fit(d) if k == n => Some(d.exponent),
            _ => None,
        })
    };
    let ratio = match (exponent("timechanged"), exponent("unipotent")) {
        (Some(a), Some(b)) if b != 0.0 => {
            text += &format!(
                "alpha vs beta/8: alpha = {a:.4}, beta/8 = {:.4}, ratio {:.3} (reported, not asserted)\n",
                b / 8.0,
                a / (b / 8.0)
            );
            Some(a / (b / 8.0))
        }
        _ => {
            text += "alpha vs beta/8: not available (needs fitted unipotent and time-changed series)\n";
            None
        }
    };
    Ok(Summary {
        series,
        alpha_over_beta_eighth: ratio,
        text,
    })
}
