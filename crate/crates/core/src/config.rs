//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, unknown keys are errors. Vectors
//! are comma separated (`x0 = 2, 0, 0, 0`). Built-in defaults are the
//! reference vehicle and controller parameters.

use std::f64::consts::FRAC_PI_6;
use std::path::Path;
use std::sync::Mutex;

use nalgebra::Matrix4;

use crate::cost::{BarrierParams, ConstraintBounds, CostWeights};
use crate::error::{Error, Result};
use crate::lqr::LqrDesign;
use crate::mpi::{build_augmented, HorizonCache, MpiResult};
use crate::sim::ScenarioConfig;
use crate::solver::{Controller, Mode};
use crate::vehicle::{LinearModel, StateVec, VehicleParams};

/// Every recognised key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "dt", "vx", "mass", "iz", "lf", "lr", "caf", "car", "q", "r", "s", "m", "ql1", "ql2",
    "qs1", "qs2", "delta_max", "delta_rate_max", "heading_max", "heading_rate_max",
    "steer_max", "N", "eps_max", "mode", "max_outer", "cost_tol", "reg_init", "reg_min",
    "reg_max", "warm", "x0", "sigma", "steps", "seed", "disturbance", "n_max", "burn_in",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub weights: CostWeights,
    /// `[q_l1, q_l2, q_s1, q_s2]`.
    pub shape: [f64; 4],
    pub bounds: ConstraintBounds,
    pub scenario: ScenarioConfig,
    /// Cap on the determination-index search.
    pub n_max: usize,
    pub burn_in: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bounds = ConstraintBounds {
            steer_max: FRAC_PI_6,
            ..ConstraintBounds::default()
        };
        Self {
            vehicle: VehicleParams::default(),
            weights: CostWeights::default(),
            shape: BarrierParams::DEFAULT_SHAPE,
            bounds,
            scenario: ScenarioConfig::default(),
            n_max: 200,
            burn_in: 0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    let parsed = match v {
        "pi/6" => Ok(FRAC_PI_6),
        "pi/2" => Ok(std::f64::consts::FRAC_PI_2),
        _ => v.parse::<f64>(),
    };
    parsed.map_err(|_| Error::Config(format!("`{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: `{}` is not a non-negative integer", v.trim())))
}

fn parse_vec4(key: &str, v: &str) -> Result<[f64; 4]> {
    let parts: Vec<_> = v.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Config(format!("`{key}` needs 4 comma-separated values")));
    }
    let mut out = [0.0; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p)?;
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("`{key}`: `{other}` is not a boolean"))),
    }
}

impl RunConfig {
    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| parse_f64(key, v);
        let sc = &mut self.scenario;
        match key {
            "dt" => self.vehicle.dt = f(value)?,
            "vx" => self.vehicle.vx = f(value)?,
            "mass" => self.vehicle.mass = f(value)?,
            "iz" => self.vehicle.iz = f(value)?,
            "lf" => self.vehicle.lf = f(value)?,
            "lr" => self.vehicle.lr = f(value)?,
            "caf" => self.vehicle.caf = f(value)?,
            "car" => self.vehicle.car = f(value)?,
            "q" => {
                let d = parse_vec4(key, value)?;
                self.weights.q = Matrix4::from_diagonal(&d.into());
            }
            "r" | "R" => self.weights.r = f(value)?,
            "s" | "S" => self.weights.s = f(value)?,
            "m" | "M" => self.weights.m = f(value)?,
            "ql1" => self.shape[0] = f(value)?,
            "ql2" => self.shape[1] = f(value)?,
            "qs1" => self.shape[2] = f(value)?,
            "qs2" => self.shape[3] = f(value)?,
            "delta_max" => self.bounds.delta_max = f(value)?,
            "delta_rate_max" => self.bounds.delta_rate_max = f(value)?,
            "heading_max" => self.bounds.heading_max = f(value)?,
            "heading_rate_max" => self.bounds.heading_rate_max = f(value)?,
            "steer_max" => self.bounds.steer_max = f(value)?,
            "N" => sc.solver.horizon = parse_usize(key, value)?,
            "eps_max" => sc.solver.eps_max = f(value)?,
            "mode" => sc.solver.mode = value.trim().parse::<Mode>()?,
            "max_outer" => sc.solver.max_outer = parse_usize(key, value)?,
            "cost_tol" => sc.solver.cost_tol = f(value)?,
            "reg_init" => sc.solver.reg_init = f(value)?,
            "reg_min" => sc.solver.reg_min = f(value)?,
            "reg_max" => sc.solver.reg_max = f(value)?,
            "warm" => sc.solver.warm_start = parse_bool(key, value)?,
            "x0" => sc.x0 = StateVec::from(parse_vec4(key, value)?),
            "sigma" => sc.sigma = f(value)?,
            "steps" => sc.steps = parse_usize(key, value)?,
            "seed" => {
                sc.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`seed`: `{}` is not a u64", value.trim())))?
            }
            "disturbance" => sc.bounds.b = parse_vec4(key, value)?,
            "n_max" => self.n_max = parse_usize(key, value)?,
            "burn_in" => self.burn_in = parse_usize(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses file text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its current value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let v = &self.vehicle;
        let sc = &self.scenario;
        let s = &sc.solver;
        let b = &self.bounds;
        let q = self.weights.q.diagonal();
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut lines = vec![
            format!("dt = {:?}", v.dt),
            format!("vx = {:?}", v.vx),
            format!("mass = {:?}", v.mass),
            format!("iz = {:?}", v.iz),
            format!("lf = {:?}", v.lf),
            format!("lr = {:?}", v.lr),
            format!("caf = {:?}", v.caf),
            format!("car = {:?}", v.car),
            format!("q = {}", join(q.as_slice())),
            format!("r = {:?}", self.weights.r),
            format!("s = {:?}", self.weights.s),
            format!("m = {:?}", self.weights.m),
            format!("ql1 = {:?}", self.shape[0]),
            format!("ql2 = {:?}", self.shape[1]),
            format!("qs1 = {:?}", self.shape[2]),
            format!("qs2 = {:?}", self.shape[3]),
            format!("delta_max = {:?}", b.delta_max),
            format!("delta_rate_max = {:?}", b.delta_rate_max),
            format!("heading_max = {:?}", b.heading_max),
            format!("heading_rate_max = {:?}", b.heading_rate_max),
            format!("steer_max = {:?}", b.steer_max),
            format!("N = {}", s.horizon),
            format!("eps_max = {:?}", s.eps_max),
            format!("mode = {}", s.mode),
            format!("max_outer = {}", s.max_outer),
            format!("cost_tol = {:?}", s.cost_tol),
            format!("reg_init = {:?}", s.reg_init),
            format!("reg_min = {:?}", s.reg_min),
            format!("reg_max = {:?}", s.reg_max),
            format!("warm = {}", s.warm_start),
            format!("x0 = {}", join(sc.x0.as_slice())),
            format!("sigma = {:?}", sc.sigma),
            format!("steps = {}", sc.steps),
            format!("seed = {}", sc.seed),
            format!("disturbance = {}", join(&sc.bounds.b)),
            format!("n_max = {}", self.n_max),
            format!("burn_in = {}", self.burn_in),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn model(&self) -> Result<LinearModel> {
        LinearModel::new(&self.vehicle)
    }

    pub fn lqr(&self, model: &LinearModel) -> Result<LqrDesign> {
        self.weights.validate()?;
        LqrDesign::new(&model.a, &model.b, &self.weights.q, self.weights.r)
    }

    /// Determination index for a given `ε̄`, looked up in or added to `cache`.
    pub fn horizon_bound(
        &self,
        model: &LinearModel,
        lqr: &LqrDesign,
        eps_max: f64,
        cache: &Mutex<HorizonCache>,
    ) -> Result<MpiResult> {
        let aug = build_augmented(model, &lqr.k, &self.bounds, self.weights.m, eps_max)?;
        if let Some(hit) = cache.lock().unwrap().get(&aug) {
            return Ok(MpiResult {
                n_nu: hit,
                n_bar_offset: hit + 1,
                rows_checked: crate::mpi::N_ROWS,
            });
        }
        // Computed outside the lock so parallel sweeps do not serialize.
        let result = crate::mpi::compute_horizon_bound(&aug, self.n_max)?;
        cache.lock().unwrap().insert(&aug, result.n_nu)?;
        Ok(result)
    }

    /// Model, LQR design, horizon bound and barriers for `scenario`, wired
    /// into a controller. Hard mode shares the soft problem's terminal window.
    pub fn controller(&self, scenario: &ScenarioConfig, cache: &Mutex<HorizonCache>) -> Result<Controller> {
        scenario.validate()?;
        let model = self.model()?;
        let lqr = self.lqr(&model)?;
        let mut solver = scenario.solver.clone();
        solver.n_nu = self.horizon_bound(&model, &lqr, solver.eps_max, cache)?.n_nu;
        let barriers = match solver.mode {
            Mode::Soft => BarrierParams::soft(&self.bounds, solver.eps_max, self.shape)?,
            Mode::Hard => BarrierParams::hard(&self.bounds, self.shape)?,
        };
        Controller::new(model, self.weights, barriers, &lqr, solver)
    }
}
