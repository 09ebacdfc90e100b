//! Experiment configuration: flat `key = value` text with dotted keys.
//!
//! Lines starting with `#` are comments; lists are comma separated. Every
//! key is optional and unknown keys are rejected. See [`KEYS`].

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::observable::{BumpObservable, ObservableSpec};
use crate::quotient::DEFAULT_Y_MAX;
use crate::timechange::CocycleConfig;

/// Documented keys with their meaning, shown by `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed (u64)"),
    ("n_samples", "Haar samples per estimate"),
    ("t_grid", "comma list of times, strictly increasing (per-command default when absent)"),
    ("y_max", "cusp truncation height of the Haar sampler"),
    ("workers", "worker threads"),
    ("noise_mult", "decay fits keep points with |value| > noise_mult * stderr"),
    ("birkhoff.step", "Simpson step of ergodic integrals (<= 1/16)"),
    ("tau.epsilon", "time-change strength: tau = 1 + epsilon * psi"),
    ("tau.psi.*", "bump of the time-change (same fields as f.*)"),
    ("f.center", "four comma-separated entries a11,a12,a21,a22 (or f.center.a11 ...)"),
    ("f.radius", "Frobenius support radius"),
    ("f.amplitude", "peak value"),
    ("f.cutoff", "certified lattice cutoff R"),
    ("f.offset", "constant added to the bump"),
    ("g.*", "second observable (same fields as f.*)"),
    ("cocycle.step", "RK4 step of the cocycle solver"),
    ("cocycle.tol", "residual tolerance of the cocycle solver"),
    ("cocycle.reduce_every", "RK4 steps between orbit reductions"),
    ("l2growth.control_offset", "mean added to f for the coherent-growth control"),
    ("shear.n_samples", "Haar samples of the shear experiment"),
    ("shear.r_max", "largest geodesic displacement (<= 1)"),
    ("shear.gamma", "exponent gamma in r t + t^(1-gamma)"),
    ("shear.t0_list", "levels t0 with t = t0^2 (default: t0 = sqrt(t) over t_grid)"),
    ("exceedance.t0_list", "levels T0"),
    ("exceedance.multipliers", "t = m * T0 for each multiplier m"),
    ("verify.samples", "random cases per verification check"),
    ("verify.flip_x_sign", "mutation test: use +diag(1/2,-1/2) as X"),
];

#[derive(Debug, Clone, Serialize)]
pub struct TauSpec {
    pub epsilon: f64,
    pub psi: ObservableSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShearSettings {
    pub n_samples: usize,
    pub r_max: f64,
    pub gamma: f64,
    pub t0_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceSettings {
    pub t0_list: Vec<f64>,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySettings {
    pub samples: usize,
    pub flip_x_sign: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub t_grid: Option<Vec<f64>>,
    pub y_max: f64,
    pub workers: usize,
    pub noise_mult: f64,
    pub birkhoff_step: f64,
    pub tau: TauSpec,
    pub f: ObservableSpec,
    pub g: ObservableSpec,
    pub cocycle: CocycleConfig,
    pub control_offset: f64,
    pub shear: ShearSettings,
    pub exceedance: ExceedanceSettings,
    pub verify: VerifySettings,
}

const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

/// The bump of the reference time-change.
pub fn reference_psi_spec() -> ObservableSpec {
    ObservableSpec {
        center: IDENTITY,
        radius: 0.2,
        amplitude: 1.0,
        cutoff: 5,
        offset: 0.0,
    }
}

/// Reference `f`: a wide bump at the identity.
pub fn reference_f_spec() -> ObservableSpec {
    ObservableSpec {
        center: IDENTITY,
        radius: 0.5,
        amplitude: 1.0,
        cutoff: 5,
        offset: 0.0,
    }
}

/// Reference `g`: a wide bump at `[[1, 1/4], [0, 1]]`.
pub fn reference_g_spec() -> ObservableSpec {
    ObservableSpec {
        center: [1.0, 0.25, 0.0, 1.0],
        radius: 0.5,
        amplitude: 1.0,
        cutoff: 6,
        offset: 0.0,
    }
}

pub fn powers_of_two(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n_samples: 10_000,
            t_grid: None,
            y_max: DEFAULT_Y_MAX,
            workers: 1,
            noise_mult: 2.0,
            birkhoff_step: 1.0 / 32.0,
            tau: TauSpec {
                epsilon: 0.3,
                psi: reference_psi_spec(),
            },
            f: reference_f_spec(),
            g: reference_g_spec(),
            cocycle: CocycleConfig::default(),
            control_offset: 0.25,
            shear: ShearSettings {
                n_samples: 256,
                r_max: 1.0,
                gamma: 0.25,
                t0_list: None,
            },
            exceedance: ExceedanceSettings {
                t0_list: vec![4.0, 16.0, 64.0],
                multipliers: vec![1.0, 2.0, 4.0, 8.0],
            },
            verify: VerifySettings {
                samples: 200,
                flip_x_sign: false,
            },
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

fn set_observable(spec: &mut ObservableSpec, key: &str, field: &str, v: &str) -> Result<()> {
    let entry = |name: &str| match name {
        "a11" => Some(0),
        "a12" => Some(1),
        "a21" => Some(2),
        "a22" => Some(3),
        _ => None,
    };
    match field {
        "center" => {
            let xs = parse_list(key, v)?;
            spec.center = xs
                .try_into()
                .map_err(|_| Error::Config(format!("{key}: expected 4 entries")))?;
        }
        "radius" => spec.radius = parse_f64(key, v)?,
        "amplitude" => spec.amplitude = parse_f64(key, v)?,
        "cutoff" => spec.cutoff = parse_int(key, v)?,
        "offset" => spec.offset = parse_f64(key, v)?,
        _ => match field.strip_prefix("center.").and_then(entry) {
            Some(i) => spec.center[i] = parse_f64(key, v)?,
            None => return Err(Error::Config(format!("unknown key {key:?}"))),
        },
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_int(key, v)?,
            "n_samples" => self.n_samples = parse_int(key, v)?,
            "t_grid" => self.t_grid = Some(parse_list(key, v)?),
            "y_max" => self.y_max = parse_f64(key, v)?,
            "workers" => self.workers = parse_int(key, v)?,
            "noise_mult" => self.noise_mult = parse_f64(key, v)?,
            "birkhoff.step" => self.birkhoff_step = parse_f64(key, v)?,
            "tau.epsilon" => self.tau.epsilon = parse_f64(key, v)?,
            "cocycle.step" => self.cocycle.step = parse_f64(key, v)?,
            "cocycle.tol" => self.cocycle.tol = parse_f64(key, v)?,
            "cocycle.reduce_every" => self.cocycle.reduce_every = parse_int(key, v)?,
            "l2growth.control_offset" => self.control_offset = parse_f64(key, v)?,
            "shear.n_samples" => self.shear.n_samples = parse_int(key, v)?,
            "shear.r_max" => self.shear.r_max = parse_f64(key, v)?,
            "shear.gamma" => self.shear.gamma = parse_f64(key, v)?,
            "shear.t0_list" => self.shear.t0_list = Some(parse_list(key, v)?),
            "exceedance.t0_list" => self.exceedance.t0_list = parse_list(key, v)?,
            "exceedance.multipliers" => self.exceedance.multipliers = parse_list(key, v)?,
            "verify.samples" => self.verify.samples = parse_int(key, v)?,
            "verify.flip_x_sign" => self.verify.flip_x_sign = parse_bool(key, v)?,
            _ => {
                if let Some(field) = key.strip_prefix("tau.psi.") {
                    set_observable(&mut self.tau.psi, key, field, v)?
                } else if let Some(field) = key.strip_prefix("f.") {
                    set_observable(&mut self.f, key, field, v)?
                } else if let Some(field) = key.strip_prefix("g.") {
                    set_observable(&mut self.g, key, field, v)?
                } else {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.n_samples < 4 || self.shear.n_samples < 1 {
            return bad("sample counts must be at least 4 (shear: 1)");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if !(self.y_max >= 2.0) {
            return bad("y_max must be at least 2");
        }
        if !(self.noise_mult > 0.0) {
            return bad("noise_mult must be positive");
        }
        if !(self.birkhoff_step > 0.0 && self.birkhoff_step <= 1.0 / 16.0) {
            return bad("birkhoff.step must be in (0, 1/16]");
        }
        if let Some(grid) = &self.t_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return bad("t_grid must be non-empty, finite and non-negative");
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return bad("t_grid must be strictly increasing");
            }
        }
        if !(0.0..=1.0).contains(&self.shear.r_max) || !(self.shear.gamma > 0.0 && self.shear.gamma < 1.0) {
            return bad("shear.r_max must be in [0, 1] and shear.gamma in (0, 1)");
        }
        let positive = |xs: &[f64]| !xs.is_empty() && xs.iter().all(|v| *v > 0.0);
        if !positive(&self.exceedance.t0_list) || !positive(&self.exceedance.multipliers) {
            return bad("exceedance lists must be non-empty and positive");
        }
        if let Some(t0) = &self.shear.t0_list {
            if !t0.iter().all(|v| *v > 1.0) {
                return bad("shear.t0_list entries must exceed 1");
            }
        }
        self.cocycle.validate()
    }

    /// The time grid, or `default` when none was configured.
    pub fn grid_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.t_grid.clone().unwrap_or(default)
    }

    pub fn build_f(&self) -> Result<BumpObservable> {
        self.f.build()
    }
    pub fn build_g(&self) -> Result<BumpObservable> {
        self.g.build()
    }
    pub fn build_psi(&self) -> Result<BumpObservable> {
        self.tau.psi.build()
    }

    /// `key = value` text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let obs = |p: &str, s: &ObservableSpec| {
            format!(
                "{p}.center = {}\n{p}.radius = {:?}\n{p}.amplitude = {:?}\n{p}.cutoff = {}\n{p}.offset = {:?}\n",
                list(&s.center),
                s.radius,
                s.amplitude,
                s.cutoff,
                s.offset
            )
        };
        let mut out = format!(
            "seed = {}\nn_samples = {}\ny_max = {:?}\nworkers = {}\nnoise_mult = {:?}\nbirkhoff.step = {:?}\n",
            self.seed, self.n_samples, self.y_max, self.workers, self.noise_mult, self.birkhoff_step
        );
        if let Some(g) = &self.t_grid {
            out += &format!("t_grid = {}\n", list(g));
        }
        out += &format!("tau.epsilon = {:?}\n", self.tau.epsilon);
        out += &obs("tau.psi", &self.tau.psi);
        out += &obs("f", &self.f);
        out += &obs("g", &self.g);
        out += &format!(
            "cocycle.step = {:?}\ncocycle.tol = {:?}\ncocycle.reduce_every = {}\n",
            self.cocycle.step, self.cocycle.tol, self.cocycle.reduce_every
        );
        out += &format!("l2growth.control_offset = {:?}\n", self.control_offset);
        out += &format!(
            "shear.n_samples = {}\nshear.r_max = {:?}\nshear.gamma = {:?}\n",
            self.shear.n_samples, self.shear.r_max, self.shear.gamma
        );
        if let Some(t0) = &self.shear.t0_list {
            out += &format!("shear.t0_list = {}\n", list(t0));
        }
        out += &format!(
            "exceedance.t0_list = {}\nexceedance.multipliers = {}\n",
            list(&self.exceedance.t0_list),
            list(&self.exceedance.multipliers)
        );
        out += &format!(
            "verify.samples = {}\nverify.flip_x_sign = {}\n",
            self.verify.samples, self.verify.flip_x_sign
        );
        out
    }
}
