//! Closed-loop experiments: seeded disturbances, receding-horizon rollout,
//! per-step records, metrics and parameter sweeps.

use std::fmt::Write as _;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::solver::{clip_control, Controller, SolverConfig};
use crate::vehicle::{Disturbance, StateVec};

pub const CSV_HEADER: &str = "t,delta,delta_dot,theta,theta_dot,steer_cmd,eps_l,eps_s,cost,solve_ms";
pub const SUMMARY_HEADER: &str = "param,value,mae_delta,mae_theta,rms_steer,sd_delta,min_delta";

/// Per-component bound on the uniform disturbance before scaling by `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceBounds {
    pub b: [f64; 4],
}

impl Default for DisturbanceBounds {
    fn default() -> Self {
        Self {
            b: [0.013, 0.325, 0.010, 0.170],
        }
    }
}

impl DisturbanceBounds {
    pub fn validate(&self) -> Result<()> {
        if self.b.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("disturbance bounds", format!("must be > 0, got {:?}", self.b)));
        }
        Ok(())
    }
}

/// Draws `w` with `wᵢ ~ U[−bᵢ, bᵢ]`. Scaling by `σ` happens at the plant.
pub fn sample_disturbance(rng: &mut ChaCha8Rng, bounds: &DisturbanceBounds) -> Disturbance {
    Disturbance::from_fn(|i, _| {
        let b = bounds.b[i];
        rng.random_range(-b..=b)
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub x0: StateVec,
    pub sigma: f64,
    pub steps: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub bounds: DisturbanceBounds,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            x0: StateVec::new(2.0, 0.0, 0.0, 0.0),
            sigma: 0.0,
            steps: 1000,
            seed: 0,
            solver: SolverConfig::default(),
            bounds: DisturbanceBounds::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps", "must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "must be finite"));
        }
        self.bounds.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRecord {
    pub t: usize,
    /// State after the step, disturbance included.
    pub x: StateVec,
    /// Applied steering after clipping.
    pub steer_cmd: f64,
    /// First slack pair `(ε_l, ε_s)` of the solution.
    pub eps: [f64; 2],
    pub cost: f64,
    pub solve_ms: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub records: Vec<SimRecord>,
    /// Steps whose solve hit the iteration cap or stalled.
    pub unconverged: Vec<usize>,
}

impl SimRun {
    pub fn all_converged(&self) -> bool {
        self.unconverged.is_empty()
    }

    pub fn mean_solve_ms(&self) -> f64 {
        self.records.iter().map(|r| r.solve_ms).sum::<f64>() / self.records.len() as f64
    }
}

/// Receding-horizon loop: solve from the current state (cold start unless the
/// solver config asks for warm starts), apply the clipped first control, step
/// the plant with `σ w_t`.
pub fn run_closed_loop(scenario: &ScenarioConfig, controller: &Controller) -> Result<SimRun> {
    run_closed_loop_partial(scenario, controller).map_err(|p| p.error)
}

/// A run that stopped early, with every step recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRun {
    pub run: SimRun,
    pub error: Error,
}

/// [`run_closed_loop`], keeping the completed steps when a solve fails.
pub fn run_closed_loop_partial(
    scenario: &ScenarioConfig,
    controller: &Controller,
) -> std::result::Result<SimRun, PartialRun> {
    let mut run = SimRun {
        records: Vec::with_capacity(scenario.steps),
        unconverged: Vec::new(),
    };
    match drive(scenario, controller, &mut run) {
        Ok(()) => Ok(run),
        Err(error) => Err(PartialRun { run, error }),
    }
}

fn drive(scenario: &ScenarioConfig, controller: &Controller, run: &mut SimRun) -> Result<()> {
    scenario.validate()?;
    let steer_max = controller.objective.barriers.steer_limit;
    let mut rng = rng_from_seed(scenario.seed);
    let mut x = scenario.x0;
    let mut previous: Option<crate::solver::Trajectory> = None;

    for t in 1..=scenario.steps {
        let report = match (&previous, controller.config.warm_start) {
            (Some(prev), true) => controller.solve_from(shift(prev, &x, controller))?,
            _ => controller.solve(&x)?,
        };
        if !report.converged {
            run.unconverged.push(t);
        }
        let steer = clip_control(report.traj.u[0], steer_max);
        let w = sample_disturbance(&mut rng, &scenario.bounds);
        x = controller.model.step_disturbed(&x, steer, &w, scenario.sigma);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("state diverged at step {t}")));
        }
        let e = report.traj.e[0];
        run.records.push(SimRecord {
            t,
            x,
            steer_cmd: steer,
            eps: [e[0], e[1]],
            cost: report.cost,
            solve_ms: report.solve_ms,
            converged: report.converged,
        });
        previous = Some(report.traj);
    }
    Ok(())
}

/// Previous solution advanced one step, last control repeated.
fn shift(
    prev: &crate::solver::Trajectory,
    x0: &StateVec,
    controller: &Controller,
) -> crate::solver::Trajectory {
    let mut u: Vec<f64> = prev.u[1..].to_vec();
    u.push(*prev.u.last().unwrap());
    let mut e = prev.e[1..].to_vec();
    e.push(*prev.e.last().unwrap());
    crate::solver::Trajectory {
        x: controller.model.rollout(x0, &u),
        u,
        e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae_delta: f64,
    pub mae_theta: f64,
    pub rms_steer: f64,
    pub sd_delta: f64,
    /// Over the full record regardless of burn-in.
    pub min_delta: f64,
    pub max_abs_delta: f64,
}

pub fn compute_metrics(records: &[SimRecord], burn_in: usize) -> Result<Metrics> {
    if records.is_empty() {
        return Err(invalid("records", "empty"));
    }
    if burn_in >= records.len() {
        return Err(invalid(
            "burn_in",
            format!("{burn_in} leaves no samples out of {}", records.len()),
        ));
    }
    let tail = &records[burn_in..];
    let n = tail.len() as f64;
    let mean = |f: &dyn Fn(&SimRecord) -> f64| tail.iter().map(f).sum::<f64>() / n;
    let mean_delta = mean(&|r| r.x[0]);
    let var = mean(&|r| (r.x[0] - mean_delta).powi(2));
    Ok(Metrics {
        mae_delta: mean(&|r| r.x[0].abs()),
        mae_theta: mean(&|r| r.x[2].abs()),
        rms_steer: mean(&|r| r.steer_cmd * r.steer_cmd).sqrt(),
        sd_delta: var.sqrt(),
        min_delta: records.iter().map(|r| r.x[0]).fold(f64::INFINITY, f64::min),
        max_abs_delta: records.iter().map(|r| r.x[0].abs()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Horizon,
    EpsMax,
    Sigma,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(Self::Horizon),
            "eps_max" => Ok(Self::EpsMax),
            "sigma" => Ok(Self::Sigma),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected N|eps_max|sigma)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Horizon => "N",
            Self::EpsMax => "eps_max",
            Self::Sigma => "sigma",
        })
    }
}

impl SweepParam {
    /// `base` with this parameter set to `value` and the seed `base.seed ⊕ index`.
    pub fn apply(self, base: &ScenarioConfig, value: f64, index: usize) -> Result<ScenarioConfig> {
        let mut s = base.clone();
        s.seed = base.seed ^ index as u64;
        match self {
            Self::Horizon => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(invalid("N", format!("must be a positive integer, got {value}")));
                }
                s.solver.horizon = value as usize;
            }
            Self::EpsMax => s.solver.eps_max = value,
            Self::Sigma => s.sigma = value,
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: Metrics,
    pub run: SimRun,
}

/// One independent run per value, in parallel, ordered as given. `build`
/// turns each derived scenario into a controller.
pub fn sweep<F>(
    base: &ScenarioConfig,
    param: SweepParam,
    values: &[f64],
    burn_in: usize,
    build: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&ScenarioConfig) -> Result<Controller> + Sync,
{
    values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let run_once = || -> Result<SweepRow> {
                let scenario = param.apply(base, value, i)?;
                let controller = build(&scenario)?;
                let run = run_closed_loop(&scenario, &controller)?;
                let metrics = compute_metrics(&run.records, burn_in)?;
                Ok(SweepRow { value, metrics, run })
            };
            run_once().map_err(|e| Error::Config(format!("sweep {param} = {value}: {e}")))
        })
        .collect()
}

/// `%.9g`-style formatting.
pub fn fmt_sig9(v: f64) -> String {
    fmt_sig(v, 9)
}

/// `%.{digits}g`-style formatting: shortest of fixed or exponent notation,
/// trailing zeros removed.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.prec$e}", prec = digits - 1);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}

/// Writes the per-step CSV. With `timing == false` the `solve_ms` column is
/// written as 0 so that the bytes depend only on the inputs.
pub fn write_csv<W: io::Write>(out: &mut W, records: &[SimRecord], timing: bool) -> io::Result<()> {
    let mut buf = String::with_capacity(records.len() * 120);
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for r in records {
        let ms = if timing { r.solve_ms } else { 0.0 };
        let _ = write!(buf, "{}", r.t);
        for v in [
            r.x[0], r.x[1], r.x[2], r.x[3], r.steer_cmd, r.eps[0], r.eps[1], r.cost, ms,
        ] {
            buf.push(',');
            buf.push_str(&fmt_sig9(v));
        }
        buf.push('\n');
    }
    out.write_all(buf.as_bytes())
}

pub fn write_summary<W: io::Write>(out: &mut W, param: SweepParam, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for row in rows {
        let m = &row.metrics;
        writeln!(
            out,
            "{param},{},{},{},{},{},{}",
            fmt_sig9(row.value),
            fmt_sig9(m.mae_delta),
            fmt_sig9(m.mae_theta),
            fmt_sig9(m.rms_steer),
            fmt_sig9(m.sd_delta),
            fmt_sig9(m.min_delta)
        )?;
    }
    Ok(())
}

/// Index of the first record with `|Δ| < threshold`.
pub fn first_passage(records: &[SimRecord], threshold: f64) -> Option<usize> {
    records.iter().position(|r| r.x[0].abs() < threshold)
}
