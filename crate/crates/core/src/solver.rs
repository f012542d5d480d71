//! Iterative LQR over the state/control sequence with Newton updates of the
//! slack sequence.
//!
//! One outer iteration is: derivatives at the current trajectory, a backward
//! pass producing feedback/feedforward gains, a backtracking forward pass,
//! then (soft mode only) one safeguarded Newton step on every slack pair.

use std::time::Instant;

use nalgebra::RowVector4;

use crate::cost::{check_slack_hessian, Objective, SlackPair, StepDerivatives};
use crate::error::{invalid, Error, Result};
use crate::lqr::{terminal_weights, LqrDesign, TerminalWeights};
use crate::vehicle::{ControlInput, LinearModel, StateVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Constraints enforced by barriers only; slacks frozen at zero.
    Hard,
    /// Lateral and steering constraints relaxed by optimized slacks.
    Soft,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(Mode::Hard),
            "soft" => Ok(Mode::Soft),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected hard|soft)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Hard => "hard",
            Mode::Soft => "soft",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stage horizon `N`.
    pub horizon: usize,
    pub eps_max: f64,
    pub mode: Mode,
    pub max_outer: usize,
    /// Stop once an outer iteration lowers the cost by less than this fraction.
    pub cost_tol: f64,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    pub ls_alphas: Vec<f64>,
    /// Determination index of the terminal invariant set; the terminal window
    /// spans `n_nu + 1` steps.
    pub n_nu: usize,
    /// Seed each solve with the previous solution shifted by one step.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            eps_max: 49.0,
            mode: Mode::Soft,
            max_outer: 50,
            cost_tol: 1e-7,
            reg_init: 1e-6,
            reg_min: 1e-6,
            reg_max: 1e6,
            ls_alphas: vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125],
            n_nu: 0,
            warm_start: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(invalid("N", format!("must be >= 2, got {}", self.horizon)));
        }
        if !(self.eps_max > 0.0 && self.eps_max.is_finite()) {
            return Err(invalid("eps_max", format!("must be > 0, got {}", self.eps_max)));
        }
        if self.max_outer == 0 {
            return Err(invalid("max_outer", "must be positive"));
        }
        if !(self.cost_tol > 0.0) {
            return Err(invalid("cost_tol", "must be positive"));
        }
        if !(0.0 <= self.reg_min && self.reg_min <= self.reg_init && self.reg_init <= self.reg_max) {
            return Err(invalid("reg", "need 0 <= reg_min <= reg_init <= reg_max"));
        }
        if self.ls_alphas.is_empty()
            || self.ls_alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0))
            || self.ls_alphas.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(invalid("ls_alphas", "must be strictly descending in (0, 1]"));
        }
        Ok(())
    }
}

/// States `x[0..=N]`, controls `u[0..N]`, slacks `e[0..=N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<StateVec>,
    pub u: Vec<ControlInput>,
    pub e: Vec<SlackPair>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.u.len();
        if self.x.len() != n + 1 || self.e.len() != n + 1 || n == 0 {
            return Err(Error::Dimension(format!(
                "trajectory with {} states, {} controls, {} slacks",
                self.x.len(),
                n,
                self.e.len()
            )));
        }
        Ok(())
    }

    /// Largest `‖x[i+1] − f(x[i], u[i])‖∞`.
    pub fn max_defect(&self, model: &LinearModel) -> f64 {
        (0..self.horizon())
            .map(|i| (self.x[i + 1] - model.step(&self.x[i], self.u[i])).amax())
            .fold(0.0, f64::max)
    }
}

/// Zero controls and slacks, states rolled out from `x0`.
pub fn init_trajectory(x0: &StateVec, horizon: usize, model: &LinearModel) -> Trajectory {
    let u = vec![0.0; horizon];
    Trajectory {
        x: model.rollout(x0, &u),
        u,
        e: vec![SlackPair::zeros(); horizon + 1],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub feedback: Vec<RowVector4<f64>>,
    pub feedforward: Vec<f64>,
    /// Predicted cost change is `α·expected[0] + α²·expected[1]`.
    pub expected: [f64; 2],
}

impl GainSchedule {
    fn expected_decrease(&self, alpha: f64) -> f64 {
        -(alpha * self.expected[0] + alpha * alpha * self.expected[1])
    }
}

/// LQ value recursion with linear dynamics. `derivs` holds `N` stage entries
/// followed by the terminal entry.
pub fn backward_pass(
    model: &LinearModel,
    derivs: &[StepDerivatives],
    reg: f64,
) -> Option<GainSchedule> {
    let n = derivs.len() - 1;
    let (a, b) = (&model.a, &model.b);
    let at = a.transpose();
    let mut vx = derivs[n].lx;
    let mut vxx = derivs[n].lxx;
    let mut feedback = vec![RowVector4::zeros(); n];
    let mut feedforward = vec![0.0; n];
    let mut expected = [0.0; 2];

    for i in (0..n).rev() {
        let d = &derivs[i];
        let vxx_b = vxx * b;
        let qx = d.lx + at * vx;
        let qu = d.lu + b.dot(&vx);
        let qxx = d.lxx + at * vxx * a;
        let quu = d.luu + b.dot(&vxx_b) + reg;
        let qux = d.lux + vxx_b.transpose() * a;
        if !(quu > 0.0) || !quu.is_finite() {
            return None;
        }
        let k = -qu / quu;
        let kk = -qux / quu;

        expected[0] += k * qu;
        expected[1] += 0.5 * k * k * quu;

        vx = qx + kk.transpose() * (quu * k) + kk.transpose() * qu + qux.transpose() * k;
        vxx = qxx + kk.transpose() * (kk * quu) + kk.transpose() * qux + qux.transpose() * kk;
        vxx = (vxx + vxx.transpose()) * 0.5;

        feedback[i] = kk;
        feedforward[i] = k;
    }
    Some(GainSchedule {
        feedback,
        feedforward,
        expected,
    })
}

/// `û_i = u_i + α k̃_i + K̃_i (x̂_i − x_i)`, `x̂_{i+1} = f(x̂_i, û_i)`.
/// Slacks are carried over unchanged. Returns `None` on a non-finite rollout.
pub fn forward_pass(
    traj: &Trajectory,
    gains: &GainSchedule,
    alpha: f64,
    model: &LinearModel,
) -> Option<Trajectory> {
    let n = traj.horizon();
    let mut x = Vec::with_capacity(n + 1);
    let mut u = Vec::with_capacity(n);
    x.push(traj.x[0]);
    for i in 0..n {
        let dx = x[i] - traj.x[i];
        let ui = traj.u[i] + alpha * gains.feedforward[i] + gains.feedback[i].dot(&dx.transpose());
        let next = model.step(&x[i], ui);
        if !ui.is_finite() || !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        u.push(ui);
        x.push(next);
    }
    Some(Trajectory {
        x,
        u,
        e: traj.e.clone(),
    })
}

const SLACK_BACKTRACKS: usize = 20;

/// Independent Newton step on each slack pair, clamped to `[0, ε̄]`.
///
/// The step is halved until the step's cost does not increase, so the outer
/// loop stays monotone.
pub fn slack_update(
    traj: &Trajectory,
    derivs: &[StepDerivatives],
    objective: &Objective,
) -> Result<Vec<SlackPair>> {
    let eps_max = objective.barriers.eps_max;
    let mut out = Vec::with_capacity(traj.e.len());
    for (i, (e, d)) in traj.e.iter().zip(derivs).enumerate() {
        check_slack_hessian(&d.he, i)?;
        let step = d.he.try_inverse().ok_or(Error::SlackHessian(i))? * d.ge;
        let before = objective.step_cost_with_slack(traj, i, e);
        let mut t = 1.0;
        let mut chosen = *e;
        for _ in 0..SLACK_BACKTRACKS {
            let cand = (e - step * t).map(|v| v.clamp(0.0, eps_max));
            if objective.step_cost_with_slack(traj, i, &cand) <= before {
                chosen = cand;
                break;
            }
            t *= 0.5;
        }
        out.push(chosen);
    }
    Ok(out)
}

/// `min(max(δ, −δ_max), δ_max)`.
#[inline]
pub fn clip_control(delta: f64, delta_max: f64) -> f64 {
    delta.clamp(-delta_max, delta_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub traj: Trajectory,
    pub cost: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub solve_ms: f64,
    /// Cost after initialization and after every outer iteration.
    pub cost_history: Vec<f64>,
}

/// A configured receding-horizon controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub model: LinearModel,
    pub objective: Objective,
    pub config: SolverConfig,
}

impl Controller {
    /// Terminal weights are built from the LQR design over `n_nu + 1` steps.
    pub fn new(
        model: LinearModel,
        weights: crate::cost::CostWeights,
        barriers: crate::cost::BarrierParams,
        lqr: &LqrDesign,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        let terminal: TerminalWeights<4> = terminal_weights(
            &model.a,
            &model.b,
            &lqr.k,
            &lqr.p,
            weights.m,
            weights.t(),
            config.n_nu + 1,
        )?;
        Ok(Self {
            model,
            objective: Objective {
                weights,
                barriers,
                terminal,
            },
            config,
        })
    }

    pub fn solve(&self, x0: &StateVec) -> Result<SolveReport> {
        self.solve_from(init_trajectory(x0, self.config.horizon, &self.model))
    }

    /// Optimizes starting from `init` (its `x[0]` is the initial state; the
    /// states are re-rolled from the controls).
    pub fn solve_from(&self, init: Trajectory) -> Result<SolveReport> {
        let started = Instant::now();
        let cfg = &self.config;
        init.check_dims()?;
        let mut traj = init;
        traj.x = self.model.rollout(&traj.x[0], &traj.u);
        if cfg.mode == Mode::Hard {
            traj.e.iter_mut().for_each(|e| *e = SlackPair::zeros());
        }
        let mut cost = self.objective.total_cost(&traj)?;
        if !cost.is_finite() {
            return Err(Error::Numerical(format!(
                "initial cost is {cost} at state {:?}",
                traj.x[0].as_slice()
            )));
        }
        let mut history = vec![cost];
        let mut reg = cfg.reg_init;
        let mut converged = false;
        let mut iters = 0;

        while iters < cfg.max_outer {
            iters += 1;
            let start_cost = cost;
            let derivs = self.objective.derivatives(&traj);

            let mut stalled = false;
            loop {
                let Some(gains) = backward_pass(&self.model, &derivs, reg) else {
                    reg *= 10.0;
                    if reg > cfg.reg_max {
                        stalled = true;
                        break;
                    }
                    continue;
                };
                let mut accepted = None;
                for &alpha in &cfg.ls_alphas {
                    if let Some(cand) = forward_pass(&traj, &gains, alpha, &self.model) {
                        let c = self.objective.total_cost(&cand)?;
                        if c < cost {
                            accepted = Some((cand, c));
                            break;
                        }
                    }
                }
                match accepted {
                    Some((cand, c)) => {
                        traj = cand;
                        cost = c;
                        reg = (reg / 10.0).max(cfg.reg_min);
                        break;
                    }
                    None => {
                        if gains.expected_decrease(1.0) <= cfg.cost_tol * cost.abs() {
                            // Already stationary in (X, U).
                            break;
                        }
                        reg *= 10.0;
                        if reg > cfg.reg_max {
                            stalled = true;
                            break;
                        }
                    }
                }
            }

            if cfg.mode == Mode::Soft {
                let derivs = self.objective.derivatives(&traj);
                traj.e = slack_update(&traj, &derivs, &self.objective)?;
                cost = self.objective.total_cost(&traj)?;
            }
            history.push(cost);

            if stalled {
                break;
            }
            if start_cost - cost <= cfg.cost_tol * start_cost.abs() {
                converged = true;
                break;
            }
        }

        Ok(SolveReport {
            traj,
            cost,
            outer_iters: iters,
            converged,
            solve_ms: started.elapsed().as_secs_f64() * 1e3,
            cost_history: history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{BarrierParams, ConstraintBounds, CostWeights};
    use crate::vehicle::VehicleParams;

    fn controller(mode: Mode, eps_max: f64, horizon: usize) -> Controller {
        let model = LinearModel::new(&VehicleParams::default()).unwrap();
        let weights = CostWeights::default();
        let lqr = LqrDesign::new(&model.a, &model.b, &weights.q, weights.r).unwrap();
        let bounds = ConstraintBounds::default();
        let barriers = match mode {
            Mode::Soft => BarrierParams::soft(&bounds, eps_max, BarrierParams::DEFAULT_SHAPE).unwrap(),
            Mode::Hard => BarrierParams::hard(&bounds, BarrierParams::DEFAULT_SHAPE).unwrap(),
        };
        let config = SolverConfig {
            horizon,
            eps_max,
            mode,
            n_nu: 42,
            ..SolverConfig::default()
        };
        Controller::new(model, weights, barriers, &lqr, config).unwrap()
    }

    #[test]
    fn equilibrium_is_held() {
        let ctl = controller(Mode::Soft, 49.0, 40);
        let rep = ctl.solve(&StateVec::zeros()).unwrap();
        assert!(rep.converged);
        assert!(rep.traj.u.iter().all(|u| u.abs() < 1e-6), "{:?}", &rep.traj.u[..3]);
    }

    #[test]
    fn steers_back_towards_the_lane() {
        let ctl = controller(Mode::Soft, 49.0, 40);
        let rep = ctl.solve(&StateVec::new(2.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(rep.converged);
        assert!(rep.traj.u[0] < 0.0);
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]), "{:?}", rep.cost_history);
        assert!(rep.traj.max_defect(&ctl.model) < 1e-12);
        assert!(rep
            .traj
            .e
            .iter()
            .all(|e| e.iter().all(|&v| (0.0..=49.0).contains(&v))));
    }

    #[test]
    fn mirrored_state_mirrors_control() {
        let ctl = controller(Mode::Soft, 49.0, 30);
        let x = StateVec::new(0.7, -0.2, 0.05, 0.01);
        let a = ctl.solve(&x).unwrap();
        let b = ctl.solve(&(-x)).unwrap();
        for (ua, ub) in a.traj.u.iter().zip(&b.traj.u) {
            assert!((ua + ub).abs() < 1e-6, "{ua} {ub}");
        }
    }

    #[test]
    fn hard_mode_keeps_slacks_at_zero() {
        let ctl = controller(Mode::Hard, 49.0, 40);
        let rep = ctl.solve(&StateVec::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(rep.traj.e.iter().all(|e| *e == SlackPair::zeros()));
        assert!(rep.traj.u[0] < 0.0);
    }

    #[test]
    fn soft_with_vanishing_slack_range_matches_hard() {
        let hard = controller(Mode::Hard, 49.0, 40);
        let soft = controller(Mode::Soft, 1e-9, 40);
        let x = StateVec::new(0.5, 0.1, -0.02, 0.0);
        let h = hard.solve(&x).unwrap();
        let s = soft.solve(&x).unwrap();
        for (uh, us) in h.traj.u.iter().zip(&s.traj.u) {
            assert!((uh - us).abs() < 1e-6, "{uh} {us}");
        }
    }

    #[test]
    fn zero_gradients_give_zero_feedforward() {
        let ctl = controller(Mode::Soft, 49.0, 10);
        let traj = init_trajectory(&StateVec::zeros(), 10, &ctl.model);
        let mut derivs = ctl.objective.derivatives(&traj);
        for d in &mut derivs {
            d.lx = StateVec::zeros();
            d.lu = 0.0;
        }
        let g = backward_pass(&ctl.model, &derivs, 1e-6).unwrap();
        assert!(g.feedforward.iter().all(|k| *k == 0.0));
        assert_eq!(g.expected, [0.0, 0.0]);
    }

    #[test]
    fn heavy_regularization_shrinks_gains() {
        let ctl = controller(Mode::Soft, 49.0, 10);
        let traj = init_trajectory(&StateVec::new(1.0, 0.0, 0.0, 0.0), 10, &ctl.model);
        let derivs = ctl.objective.derivatives(&traj);
        let light = backward_pass(&ctl.model, &derivs, 1e-6).unwrap();
        let heavy = backward_pass(&ctl.model, &derivs, 1e12).unwrap();
        assert!(heavy.feedforward[0].abs() < 1e-6 * light.feedforward[0].abs().max(1.0));
        assert!(heavy.feedback[0].amax() < 1e-6);
        assert!(backward_pass(&ctl.model, &derivs, -1e9).is_none());
    }

    #[test]
    fn quadratic_slack_cost_is_solved_in_one_newton_step() {
        let mut ctl = controller(Mode::Soft, 49.0, 8);
        ctl.objective.barriers = ctl.objective.barriers.disabled();
        let mut traj = init_trajectory(&StateVec::zeros(), 8, &ctl.model);
        traj.e.iter_mut().for_each(|e| *e = SlackPair::new(3.0, 7.0));
        let derivs = ctl.objective.derivatives(&traj);
        let e = slack_update(&traj, &derivs, &ctl.objective).unwrap();
        assert!(e.iter().all(|e| e.amax() < 1e-12), "{:?}", e[0]);
    }

    #[test]
    fn slack_update_never_raises_step_cost() {
        let ctl = controller(Mode::Soft, 49.0, 12);
        let mut traj = init_trajectory(&StateVec::new(1.5, 0.3, 0.0, 0.0), 12, &ctl.model);
        traj.e.iter_mut().enumerate().for_each(|(i, e)| *e = SlackPair::new(i as f64 * 3.0, 40.0));
        let derivs = ctl.objective.derivatives(&traj);
        let e = slack_update(&traj, &derivs, &ctl.objective).unwrap();
        for i in 0..traj.e.len() {
            let before = ctl.objective.step_cost_with_slack(&traj, i, &traj.e[i]);
            let after = ctl.objective.step_cost_with_slack(&traj, i, &e[i]);
            assert!(after <= before, "step {i}: {before} -> {after}");
        }
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SolverConfig { horizon: 1, ..ok.clone() },
            SolverConfig { eps_max: 0.0, ..ok.clone() },
            SolverConfig { max_outer: 0, ..ok.clone() },
            SolverConfig { reg_init: 1e9, ..ok.clone() },
            SolverConfig { ls_alphas: vec![0.5, 1.0], ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert_eq!("soft".parse::<Mode>().unwrap(), Mode::Soft);
        assert!("medium".parse::<Mode>().is_err());
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_control(1.0, 0.5), 0.5);
        assert_eq!(clip_control(-1.0, 0.5), -0.5);
        assert_eq!(clip_control(0.1, 0.5), 0.1);
    }

    #[test]
    fn rejects_mismatched_trajectory() {
        let ctl = controller(Mode::Soft, 49.0, 5);
        let mut t = init_trajectory(&StateVec::zeros(), 5, &ctl.model);
        t.e.pop();
        assert!(ctl.solve_from(t).is_err());
    }

    #[test]
    fn overflowing_state_is_a_numerical_failure() {
        let ctl = controller(Mode::Soft, 49.0, 5);
        let err = ctl.solve(&StateVec::new(1e300, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err:?}");
    }
}
