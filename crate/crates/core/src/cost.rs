//! Barrier-augmented objective of the soft-constrained problem.
//!
//! Per step the cost is the LQR quadratic plus exponential barriers on the
//! slacks, the lateral offset, the steering angle and the three remaining
//! state bounds. The lateral and steering barriers are relaxed by the slacks:
//! their bounds are `Δ̄(1 + ε_l)` and `δ̄(1 + ε_s)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use nalgebra::{Matrix2, Matrix4, RowVector4, Vector2, Vector3, Vector4};

use crate::error::{invalid, Error, Result};
use crate::lqr::TerminalWeights;
use crate::solver::Trajectory;
use crate::vehicle::{ControlInput, StateVec};

/// Exponent arguments are clamped here before `exp`.
pub const EXP_CLAMP: f64 = 50.0;

/// `[ε_l, ε_s]`.
pub type SlackPair = Vector2<f64>;

#[inline]
fn sat_exp(z: f64) -> f64 {
    z.min(EXP_CLAMP).exp()
}

/// Physical limits on the state and steering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintBounds {
    pub delta_max: f64,
    pub delta_rate_max: f64,
    pub heading_max: f64,
    pub heading_rate_max: f64,
    pub steer_max: f64,
}

impl Default for ConstraintBounds {
    fn default() -> Self {
        Self {
            delta_max: 2.0,
            delta_rate_max: 5.0,
            heading_max: FRAC_PI_2,
            heading_rate_max: 0.5,
            steer_max: FRAC_PI_6,
        }
    }
}

impl ConstraintBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_max", self.delta_max),
            ("delta_rate_max", self.delta_rate_max),
            ("heading_max", self.heading_max),
            ("heading_rate_max", self.heading_rate_max),
            ("steer_max", self.steer_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Quadratic weights. `S`, `T` and `M` act as multiples of `I₂` on the slacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub q: Matrix4<f64>,
    pub r: f64,
    pub s: f64,
    /// Terminal slack decay `e⁺ = M e`.
    pub m: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::new(20.0, 1.0, 20.0, 1.0)),
            r: 60.0,
            s: 0.01,
            m: 0.9,
        }
    }
}

impl CostWeights {
    /// `T = S / (1 − M²)`.
    pub fn t(&self) -> f64 {
        self.s / (1.0 - self.m * self.m)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.q - self.q.transpose()).amax() > 0.0 {
            return Err(invalid("Q", "must be symmetric"));
        }
        if !self.q.symmetric_eigenvalues().iter().all(|&l| l > 0.0) {
            return Err(invalid("Q", "must be positive definite"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(invalid("R", format!("must be > 0, got {}", self.r)));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(invalid("S", format!("must be >= 0, got {}", self.s)));
        }
        if !(0.0..1.0).contains(&self.m) {
            return Err(invalid("M", format!("must lie in [0, 1), got {}", self.m)));
        }
        Ok(())
    }
}

/// Barrier shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub ql1: f64,
    pub ql2: f64,
    pub qs1: f64,
    pub qs2: f64,
    /// Nominal lateral bound `Δ̄`.
    pub delta_bar: f64,
    /// Nominal steering bound `δ̄`.
    pub steer_bar: f64,
    /// Shared slack upper bound `ε̄`.
    pub eps_max: f64,
    /// `(Δ̇_max, θ_max, θ̇_max)`.
    pub xmax: Vector3<f64>,
    /// Weight on the slack barriers; 1 in the standard problem.
    pub slack_weight: f64,
    /// Weight on the `(Δ̇, θ, θ̇)` barriers; 1 in the standard problem.
    pub state_weight: f64,
    /// Physical steering limit `δ_max`, used to clip the applied control.
    pub steer_limit: f64,
}

impl BarrierParams {
    /// Default barrier shapes `(q_l1, q_l2) = (5, 1)`, `(q_s1, q_s2) = (80, 1)`.
    pub const DEFAULT_SHAPE: [f64; 4] = [5.0, 1.0, 80.0, 1.0];

    /// Relaxed barriers with `Δ̄ = Δ_max/(1+ε̄)` and `δ̄ = δ_max/(1+ε̄)`.
    pub fn soft(bounds: &ConstraintBounds, eps_max: f64, shape: [f64; 4]) -> Result<Self> {
        bounds.validate()?;
        if !(eps_max > 0.0 && eps_max.is_finite()) {
            return Err(invalid("eps_max", format!("must be > 0, got {eps_max}")));
        }
        Ok(Self::with_eps(bounds, eps_max, shape))
    }

    /// Unrelaxed barriers at the physical limits; slacks stay at zero.
    pub fn hard(bounds: &ConstraintBounds, shape: [f64; 4]) -> Result<Self> {
        bounds.validate()?;
        Ok(Self::with_eps(bounds, 0.0, shape))
    }

    fn with_eps(b: &ConstraintBounds, eps_max: f64, [ql1, ql2, qs1, qs2]: [f64; 4]) -> Self {
        Self {
            ql1,
            ql2,
            qs1,
            qs2,
            delta_bar: b.delta_max / (1.0 + eps_max),
            steer_bar: b.steer_max / (1.0 + eps_max),
            eps_max,
            xmax: Vector3::new(b.delta_rate_max, b.heading_max, b.heading_rate_max),
            slack_weight: 1.0,
            state_weight: 1.0,
            steer_limit: b.steer_max,
        }
    }

    /// Same geometry with every barrier switched off.
    pub fn disabled(mut self) -> Self {
        self.ql1 = 0.0;
        self.qs1 = 0.0;
        self.slack_weight = 0.0;
        self.state_weight = 0.0;
        self
    }
}

/// Value and derivatives of `q1 [exp(q2(−w − v)) + exp(q2(v − w))]`
/// with respect to the variable `v` and the bound `w`.
#[derive(Debug, Clone, Copy)]
struct TwoSided {
    f: f64,
    dv: f64,
    dvv: f64,
    dw: f64,
    dww: f64,
}

#[inline]
fn two_sided(q1: f64, q2: f64, v: f64, w: f64) -> TwoSided {
    if q1 == 0.0 {
        return TwoSided { f: 0.0, dv: 0.0, dvv: 0.0, dw: 0.0, dww: 0.0 };
    }
    let lo = sat_exp(q2 * (-w - v));
    let hi = sat_exp(q2 * (v - w));
    let sum = lo + hi;
    TwoSided {
        f: q1 * sum,
        dv: q1 * q2 * (hi - lo),
        dvv: q1 * q2 * q2 * sum,
        dw: -q1 * q2 * sum,
        dww: q1 * q2 * q2 * sum,
    }
}

/// `exp(−ε) + exp(ε − ε̄)`: (value, first, second derivative).
#[inline]
fn slack_barrier(weight: f64, eps: f64, eps_max: f64) -> (f64, f64, f64) {
    let lo = sat_exp(-eps);
    let hi = sat_exp(eps - eps_max);
    (weight * (lo + hi), weight * (hi - lo), weight * (lo + hi))
}

/// Value plus gradients/Hessians of one step's cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDerivatives {
    pub l: f64,
    pub lx: Vector4<f64>,
    pub lu: f64,
    pub lxx: Matrix4<f64>,
    pub luu: f64,
    /// Always zero: no term couples the state and the steering.
    pub lux: RowVector4<f64>,
    pub ge: Vector2<f64>,
    pub he: Matrix2<f64>,
}

/// Stage- or terminal-step evaluation. `steer = None` marks the terminal step,
/// which carries no steering barrier.
fn evaluate(
    x: &StateVec,
    steer: Option<ControlInput>,
    e: &SlackPair,
    q: &Matrix4<f64>,
    r: f64,
    slack_quad: f64,
    b: &BarrierParams,
) -> StepDerivatives {
    let qx = q * x;
    let mut l = x.dot(&qx) + slack_quad * e.norm_squared();
    let mut lx = qx * 2.0;
    let mut lxx = q * 2.0;
    let mut ge = e * (2.0 * slack_quad);
    let mut he = Matrix2::identity() * (2.0 * slack_quad);
    let (mut lu, mut luu) = (0.0, 0.0);

    for k in 0..2 {
        let (f, d1, d2) = slack_barrier(b.slack_weight, e[k], b.eps_max);
        l += f;
        ge[k] += d1;
        he[(k, k)] += d2;
    }

    let lat = two_sided(b.ql1, b.ql2, x[0], b.delta_bar * (1.0 + e[0]));
    l += lat.f;
    lx[0] += lat.dv;
    lxx[(0, 0)] += lat.dvv;
    ge[0] += lat.dw * b.delta_bar;
    he[(0, 0)] += lat.dww * b.delta_bar * b.delta_bar;

    for k in 0..3 {
        let h = two_sided(b.state_weight, 1.0, x[k + 1], b.xmax[k]);
        l += h.f;
        lx[k + 1] += h.dv;
        lxx[(k + 1, k + 1)] += h.dvv;
    }

    if let Some(u) = steer {
        l += r * u * u;
        lu = 2.0 * r * u;
        luu = 2.0 * r;
        let st = two_sided(b.qs1, b.qs2, u, b.steer_bar * (1.0 + e[1]));
        l += st.f;
        lu += st.dv;
        luu += st.dvv;
        ge[1] += st.dw * b.steer_bar;
        he[(1, 1)] += st.dww * b.steer_bar * b.steer_bar;
    }

    StepDerivatives {
        l,
        lx,
        lu,
        lxx,
        luu,
        lux: RowVector4::zeros(),
        ge,
        he,
    }
}

/// One stage step (`i < N`).
pub fn stage_cost(
    x: &StateVec,
    u: ControlInput,
    e: &SlackPair,
    w: &CostWeights,
    b: &BarrierParams,
) -> f64 {
    step_derivatives(x, u, e, w, b).l
}

pub fn step_derivatives(
    x: &StateVec,
    u: ControlInput,
    e: &SlackPair,
    w: &CostWeights,
    b: &BarrierParams,
) -> StepDerivatives {
    evaluate(x, Some(u), e, &w.q, w.r, w.s, b)
}

/// Terminal step (`i = N`): collapsed terminal-window quadratic plus the
/// barriers whose sums include the last index.
pub fn terminal_cost(
    x: &StateVec,
    e: &SlackPair,
    tw: &TerminalWeights<4>,
    b: &BarrierParams,
) -> f64 {
    terminal_derivatives(x, e, tw, b).l
}

pub fn terminal_derivatives(
    x: &StateVec,
    e: &SlackPair,
    tw: &TerminalWeights<4>,
    b: &BarrierParams,
) -> StepDerivatives {
    evaluate(x, None, e, &tw.p_term, 0.0, tw.t_term, b)
}

/// Everything that defines the objective for one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub weights: CostWeights,
    pub barriers: BarrierParams,
    pub terminal: TerminalWeights<4>,
}

impl Objective {
    pub fn total_cost(&self, traj: &Trajectory) -> Result<f64> {
        total_cost(traj, &self.weights, &self.barriers, &self.terminal)
    }

    /// Derivatives at every step; the last entry is the terminal step.
    pub fn derivatives(&self, traj: &Trajectory) -> Vec<StepDerivatives> {
        let n = traj.horizon();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            out.push(step_derivatives(
                &traj.x[i],
                traj.u[i],
                &traj.e[i],
                &self.weights,
                &self.barriers,
            ));
        }
        out.push(terminal_derivatives(
            &traj.x[n],
            &traj.e[n],
            &self.terminal,
            &self.barriers,
        ));
        out
    }

    /// Cost of step `i` as a function of its slack pair only (other terms are
    /// held fixed, so they cancel in comparisons).
    pub(crate) fn step_cost_with_slack(&self, traj: &Trajectory, i: usize, e: &SlackPair) -> f64 {
        if i < traj.horizon() {
            step_derivatives(&traj.x[i], traj.u[i], e, &self.weights, &self.barriers).l
        } else {
            terminal_derivatives(&traj.x[i], e, &self.terminal, &self.barriers).l
        }
    }
}

/// Sum of stage costs over `i = 0..N−1` plus the terminal cost at `N`.
pub fn total_cost(
    traj: &Trajectory,
    w: &CostWeights,
    b: &BarrierParams,
    tw: &TerminalWeights<4>,
) -> Result<f64> {
    traj.check_dims()?;
    let n = traj.horizon();
    let stages: f64 = (0..n)
        .map(|i| stage_cost(&traj.x[i], traj.u[i], &traj.e[i], w, b))
        .sum();
    Ok(stages + terminal_cost(&traj.x[n], &traj.e[n], tw, b))
}

/// Pure quadratic part of [`total_cost`].
pub fn quadratic_cost(traj: &Trajectory, w: &CostWeights, tw: &TerminalWeights<4>) -> Result<f64> {
    traj.check_dims()?;
    let n = traj.horizon();
    let mut c = 0.0;
    for i in 0..n {
        let x = &traj.x[i];
        c += x.dot(&(w.q * x)) + w.r * traj.u[i] * traj.u[i] + w.s * traj.e[i].norm_squared();
    }
    let x = &traj.x[n];
    c += x.dot(&(tw.p_term * x)) + tw.t_term * traj.e[n].norm_squared();
    Ok(c)
}

pub(crate) fn check_slack_hessian(he: &Matrix2<f64>, step: usize) -> Result<()> {
    if he[(0, 0)] > 0.0 && he[(1, 1)] > 0.0 && he.determinant() > 0.0 {
        Ok(())
    } else {
        Err(Error::SlackHessian(step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn soft49() -> BarrierParams {
        BarrierParams::soft(&ConstraintBounds::default(), 49.0, BarrierParams::DEFAULT_SHAPE).unwrap()
    }

    fn zero() -> (StateVec, SlackPair) {
        (StateVec::zeros(), SlackPair::zeros())
    }

    #[test]
    fn nominal_bounds_follow_eps_max() {
        let b = soft49();
        assert_abs_diff_eq!(b.delta_bar, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(b.steer_bar, FRAC_PI_6 / 50.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.steer_bar, 0.010_472_0, epsilon = 1e-7);
        let h = BarrierParams::hard(&ConstraintBounds::default(), BarrierParams::DEFAULT_SHAPE).unwrap();
        assert_eq!(h.delta_bar, 2.0);
        assert_eq!(h.steer_bar, FRAC_PI_6);
        assert!(BarrierParams::soft(&ConstraintBounds::default(), 0.0, BarrierParams::DEFAULT_SHAPE).is_err());
    }

    #[test]
    fn zero_state_stage_cost_closed_form() {
        let (x, e) = zero();
        let b = soft49();
        let lateral = 2.0 * 5.0 * (-0.04f64).exp();
        let steering = 2.0 * 80.0 * (-b.steer_bar).exp();
        let slack = 2.0 * (1.0 + (-49f64).exp());
        let hard = 2.0 * (-5f64).exp() + 2.0 * (-FRAC_PI_2).exp() + 2.0 * (-0.5f64).exp();
        assert_abs_diff_eq!(lateral, 9.607_894, epsilon = 1e-5);
        assert_abs_diff_eq!(steering, 158.33, epsilon = 1e-2);
        let c = stage_cost(&x, 0.0, &e, &CostWeights::default(), &b);
        assert_abs_diff_eq!(c, lateral + steering + slack + hard, epsilon = 1e-10);
    }

    #[test]
    fn mid_slack_cost() {
        let x = StateVec::zeros();
        let e = SlackPair::new(24.5, 24.5);
        let w = CostWeights::default();
        let b = soft49().disabled();
        let b = BarrierParams { slack_weight: 1.0, ..b };
        let c = stage_cost(&x, 0.0, &e, &w, &b);
        let expected = 2.0 * ((-24.5f64).exp() + (-24.5f64).exp()) + w.s * 24.5 * 24.5 * 2.0;
        assert_abs_diff_eq!(c, expected, epsilon = 1e-12);
    }

    #[test]
    fn lateral_barrier_decreases_with_wider_bound() {
        let (x, e) = zero();
        let b = soft49();
        let wide = BarrierParams { delta_bar: 2.0 * b.delta_bar, ..b };
        let w = CostWeights::default();
        assert!(stage_cost(&x, 0.0, &e, &w, &wide) < stage_cost(&x, 0.0, &e, &w, &b));
    }

    #[test]
    fn centred_gradients() {
        let (x, e) = zero();
        let b = soft49();
        let d = step_derivatives(&x, 0.0, &e, &CostWeights::default(), &b);
        assert_abs_diff_eq!(d.lu, 0.0, epsilon = 1e-14);
        assert_eq!(d.lux, RowVector4::zeros());
        let expected = -1.0 + (-49f64).exp() - 5.0 * 0.04 * 2.0 * (-0.04f64).exp();
        assert_abs_diff_eq!(d.ge[0], expected, epsilon = 1e-12);
        assert!(d.ge[0] < 0.0);
        assert_eq!(d.he[(0, 1)], 0.0);
    }

    #[test]
    fn terminal_floor_and_single_term_identity() {
        let (x, e) = zero();
        let b = soft49();
        let w = CostWeights::default();
        let tw = TerminalWeights { p_term: w.q, t_term: w.s };
        let steer_part = 2.0 * 80.0 * (-b.steer_bar).exp();
        assert_abs_diff_eq!(
            terminal_cost(&x, &e, &tw, &b),
            stage_cost(&x, 0.0, &e, &w, &b) - steer_part,
            epsilon = 1e-10
        );
        let x = StateVec::new(0.3, -0.2, 0.05, 0.01);
        let e = SlackPair::new(3.0, 7.0);
        let stage_no_steer = stage_cost(&x, 0.0, &e, &w, &b) - steer_part_at(&b, 0.0, e[1]);
        assert_abs_diff_eq!(terminal_cost(&x, &e, &tw, &b), stage_no_steer, epsilon = 1e-10);
    }

    fn steer_part_at(b: &BarrierParams, u: f64, eps_s: f64) -> f64 {
        let w = b.steer_bar * (1.0 + eps_s);
        b.qs1 * ((b.qs2 * (-w - u)).exp() + (b.qs2 * (u - w)).exp())
    }

    #[test]
    fn saturation_keeps_cost_finite() {
        let b = soft49();
        let x = StateVec::new(500.0, 0.0, 0.0, 0.0);
        let c = stage_cost(&x, 0.0, &SlackPair::zeros(), &CostWeights::default(), &b);
        assert!(c.is_finite());
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::default().validate().is_ok());
        assert_abs_diff_eq!(CostWeights::default().t(), 0.01 / 0.19, epsilon = 1e-15);
        assert!(CostWeights { m: 1.0, ..Default::default() }.validate().is_err());
        assert!(CostWeights { r: 0.0, ..Default::default() }.validate().is_err());
        assert!(CostWeights { s: -1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn slack_hessian_is_pd(d0 in -2.0..2.0f64, u in -0.5..0.5f64, el in 0.0..49.0f64, es in 0.0..49.0f64) {
            let x = StateVec::new(d0, 0.0, 0.0, 0.0);
            let d = step_derivatives(&x, u, &SlackPair::new(el, es), &CostWeights::default(), &soft49());
            prop_assert!(check_slack_hessian(&d.he, 0).is_ok());
        }

        #[test]
        fn barriers_are_positive(d0 in -3.0..3.0f64, d1 in -5.0..5.0f64, th in -1.5..1.5f64, u in -0.5..0.5f64,
                                 el in 0.0..49.0f64, es in 0.0..49.0f64) {
            let x = StateVec::new(d0, d1, th, 0.1);
            let e = SlackPair::new(el, es);
            let w = CostWeights::default();
            let b = soft49();
            let quad = x.dot(&(w.q * x)) + w.r * u * u + w.s * e.norm_squared();
            prop_assert!(stage_cost(&x, u, &e, &w, &b) > quad);
        }

        #[test]
        fn lateral_barrier_monotone_outside(el in 0.0..10.0f64, extra in 0.0..1.0f64, step in 1e-3..0.5f64) {
            let b = soft49();
            let w = CostWeights::default();
            let e = SlackPair::new(el, 0.0);
            let edge = b.delta_bar * (1.0 + el);
            let near = StateVec::new(edge + extra, 0.0, 0.0, 0.0);
            let far = StateVec::new(edge + extra + step, 0.0, 0.0, 0.0);
            prop_assert!(stage_cost(&far, 0.0, &e, &w, &b) > stage_cost(&near, 0.0, &e, &w, &b));
        }
    }
}
