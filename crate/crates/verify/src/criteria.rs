//! The acceptance checks. Each returns a [`Check`] carrying the measured
//! value next to the bound it was held to.

use std::f64::consts::FRAC_PI_6;
use std::fmt;
use std::sync::Mutex;

use nalgebra::{DVector, Matrix4, RowVector4, SMatrix, Vector2, Vector4};
use rand::Rng;

use softcilqr::config::RunConfig;
use softcilqr::cost::{
    step_derivatives, terminal_derivatives, BarrierParams, SlackPair, StepDerivatives,
};
use softcilqr::linprog::{solve_lp, LpOutcome, LpProblem, LpStatus};
use softcilqr::mpi::{build_augmented, mpi_contains, AugState, HorizonCache};
use softcilqr::sim::{
    compute_metrics, first_passage, fmt_sig, rng_from_seed, run_closed_loop, sweep, write_csv,
    ScenarioConfig, SimRecord, SimRun, SweepParam,
};
use softcilqr::solver::{backward_pass, Controller, Mode};
use softcilqr::vehicle::StateVec;
use softcilqr::Result;

use crate::oracle;

/// Minimum lateral offsets for the horizon sweep at `ε̄ = 49`.
pub const HORIZON_SWEEP: [(usize, f64); 6] = [
    (25, -0.0440),
    (40, -0.0668),
    (45, -0.0809),
    (50, -0.0796),
    (55, -0.0772),
    (60, -0.0763),
];

/// Minimum lateral offsets for the slack-range sweep at `N = 40`.
pub const SLACK_SWEEP: [(f64, f64); 5] = [
    (19.0, -0.0635),
    (39.0, -0.0662),
    (59.0, -0.0671),
    (79.0, -0.0676),
    (99.0, -0.0678),
];

pub const HORIZON_EPS: [f64; 7] = [19.0, 29.0, 39.0, 49.0, 59.0, 79.0, 99.0];

/// Every bound the checks are held to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub horizon_sweep_abs: f64,
    pub slack_sweep_abs: f64,
    pub regulation: f64,
    pub arrival_threshold: f64,
    pub r2_min: f64,
    pub membership: f64,
    pub riccati_residual: f64,
    pub derivative_rel: f64,
    pub derivative_floor: f64,
    pub lq_rel: f64,
    pub gain_limit: f64,
    pub lp_value: f64,
    pub noise_max_delta: f64,
    pub solve_ms: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            horizon_sweep_abs: 0.015,
            slack_sweep_abs: 0.010,
            regulation: 1e-3,
            arrival_threshold: 0.1,
            r2_min: 0.98,
            membership: 1e-9,
            riccati_residual: 1e-8,
            derivative_rel: 1e-4,
            derivative_floor: 1e-6,
            lq_rel: 1e-8,
            gain_limit: 1e-6,
            lp_value: 1e-6,
            noise_max_delta: 2.0,
            solve_ms: 10.0,
        }
    }
}

impl Tolerances {
    /// Every tolerance multiplied by `factor`; `R²` moves towards 1 by the
    /// same factor. Factors below 1 make the suite stricter.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            horizon_sweep_abs: self.horizon_sweep_abs * factor,
            slack_sweep_abs: self.slack_sweep_abs * factor,
            regulation: self.regulation * factor,
            arrival_threshold: self.arrival_threshold,
            r2_min: 1.0 - (1.0 - self.r2_min) * factor,
            membership: self.membership * factor,
            riccati_residual: self.riccati_residual * factor,
            derivative_rel: self.derivative_rel * factor,
            derivative_floor: self.derivative_floor,
            lq_rel: self.lq_rel * factor,
            gain_limit: self.gain_limit * factor,
            lp_value: self.lp_value * factor,
            noise_max_delta: self.noise_max_delta * factor,
            solve_ms: self.solve_ms * factor,
        }
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub measured: String,
    pub tolerance: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] C{:<2} {}: measured {}; required {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

/// Shared inputs: the base configuration and an in-memory horizon cache.
pub struct Suite {
    pub config: RunConfig,
    pub tol: Tolerances,
    cache: Mutex<HorizonCache>,
}

pub const ALL: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

impl Suite {
    pub fn new(config: RunConfig, tol: Tolerances) -> Self {
        Self {
            config,
            tol,
            cache: Mutex::new(HorizonCache::in_memory()),
        }
    }

    pub fn run(&self, id: u8) -> Result<Check> {
        match id {
            1 => self.horizon_sweep(),
            2 => self.slack_sweep(),
            3 => self.regulation(),
            4 => self.horizon_bound(),
            5 => self.riccati(),
            6 => self.derivatives(),
            7 => self.lq_equivalence(),
            8 => self.lp_equivalence(),
            9 => self.noise_robustness(),
            10 => self.solve_time(),
            11 => self.out_of_scope(),
            other => Err(softcilqr::Error::Config(format!(
                "no acceptance criterion {other} (expected 1..=11)"
            ))),
        }
    }

    /// Noise-free step response from `Δ = 2` under the base solver settings.
    fn step_response(&self) -> ScenarioConfig {
        let mut s = self.config.scenario.clone();
        s.x0 = StateVec::new(2.0, 0.0, 0.0, 0.0);
        s.sigma = 0.0;
        s.steps = 1000;
        s.solver.mode = Mode::Soft;
        s.solver.warm_start = false;
        s
    }

    fn controller(&self, s: &ScenarioConfig) -> Result<Controller> {
        self.config.controller(s, &self.cache)
    }

    fn sweep_minima(&self, base: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<Vec<f64>> {
        let rows = sweep(base, param, values, 0, |s| self.controller(s))?;
        Ok(rows.iter().map(|r| r.metrics.min_delta).collect())
    }

    pub fn horizon_sweep(&self) -> Result<Check> {
        let mut base = self.step_response();
        base.solver.eps_max = 49.0;
        let values: Vec<f64> = HORIZON_SWEEP.iter().map(|p| p.0 as f64).collect();
        let got = self.sweep_minima(&base, SweepParam::Horizon, &values)?;
        let worst = worst_gap(&got, HORIZON_SWEEP.iter().map(|p| p.1));
        let mag: Vec<f64> = got.iter().map(|v| v.abs()).collect();
        let pattern = mag[0] < mag[1] && mag[1] < mag[2] && mag[3] > mag[4] && mag[4] > mag[5];
        Ok(Check {
            id: 1,
            name: "min lateral offset over N in {25,40,45,50,55,60}",
            measured: format!("min delta {} (worst gap {worst:.4}), pattern {}", list(&got), ok(pattern)),
            tolerance: format!(
                "each within {} of {}, |min| rising to N=45 and falling from N=50",
                self.tol.horizon_sweep_abs,
                list(&HORIZON_SWEEP.map(|p| p.1))
            ),
            pass: worst <= self.tol.horizon_sweep_abs && pattern,
        })
    }

    pub fn slack_sweep(&self) -> Result<Check> {
        let mut base = self.step_response();
        base.solver.horizon = 40;
        let values = SLACK_SWEEP.map(|p| p.0);
        let got = self.sweep_minima(&base, SweepParam::EpsMax, &values)?;
        let worst = worst_gap(&got, SLACK_SWEEP.iter().map(|p| p.1));
        let monotone = got.windows(2).all(|w| w[1].abs() >= w[0].abs());
        Ok(Check {
            id: 2,
            name: "min lateral offset over eps_max in {19,39,59,79,99}",
            measured: format!("min delta {} (worst gap {worst:.4}), |min| nondecreasing {}", list(&got), ok(monotone)),
            tolerance: format!(
                "each within {} of {}, |min| nondecreasing",
                self.tol.slack_sweep_abs,
                list(&SLACK_SWEEP.map(|p| p.1))
            ),
            pass: worst <= self.tol.slack_sweep_abs && monotone,
        })
    }

    pub fn regulation(&self) -> Result<Check> {
        let soft = self.step_response();
        let mut hard = soft.clone();
        hard.solver.mode = Mode::Hard;
        let soft_run = run_closed_loop(&soft, &self.controller(&soft)?)?;
        let hard_run = run_closed_loop(&hard, &self.controller(&hard)?)?;
        let settled = |run: &SimRun| {
            let last = run.records.last().expect("runs have records");
            last.x[0].abs().max(last.x[2].abs())
        };
        let (s_end, h_end) = (settled(&soft_run), settled(&hard_run));
        let thr = self.tol.arrival_threshold;
        let s_first = first_passage(&soft_run.records, thr);
        let h_first = first_passage(&hard_run.records, thr);
        let earlier = match (s_first, h_first) {
            (Some(s), Some(h)) => s <= h,
            (Some(_), None) => true,
            _ => false,
        };
        Ok(Check {
            id: 3,
            name: "regulation to the lane centre, soft vs hard arrival",
            measured: format!(
                "final max(|delta|,|theta|) soft {s_end:.2e} hard {h_end:.2e}; first |delta|<{thr} soft {} hard {}",
                step(s_first),
                step(h_first)
            ),
            tolerance: format!("both < {:e}; soft arrival <= hard arrival", self.tol.regulation),
            pass: s_end < self.tol.regulation && h_end < self.tol.regulation && earlier,
        })
    }

    pub fn horizon_bound(&self) -> Result<Check> {
        let model = self.config.model()?;
        let lqr = self.config.lqr(&model)?;
        let mut points = Vec::with_capacity(HORIZON_EPS.len());
        let mut violations = 0;
        let mut cross_check = 0;
        let mut rng = rng_from_seed(0x4d50_4953);
        for &eps in &HORIZON_EPS {
            let n_nu = self.config.horizon_bound(&model, &lqr, eps, &self.cache)?.n_nu;
            points.push((eps, n_nu as f64));
            let aug = build_augmented(&model, &lqr.k, &self.config.bounds, self.config.weights.m, eps)?;
            let sampler = oracle::InvariantSampler::new(&aug, n_nu, self.tol.membership);
            for _ in 0..1000 {
                let z = sampler.sample(&mut rng);
                if !mpi_contains(&aug, n_nu, &AugState::from_iterator(z.iter().copied())) {
                    cross_check += 1;
                }
                violations += sampler.violations(&z, 2 * (n_nu + 1));
            }
        }
        let monotone = points.windows(2).all(|w| w[1].1 >= w[0].1);
        let r2 = oracle::linear_r2(&points);
        let horizons: Vec<usize> = points.iter().map(|p| p.1 as usize).collect();
        Ok(Check {
            id: 4,
            name: "invariant-set horizon bound over eps_max",
            measured: format!(
                "N_nu {horizons:?}, nondecreasing {}, R^2 {r2:.4}, {violations} orbit violations, {cross_check} membership disagreements",
                ok(monotone)
            ),
            tolerance: format!(
                "nondecreasing, R^2 >= {}, zero violations at {:e} over 7x1000 samples",
                self.tol.r2_min, self.tol.membership
            ),
            pass: monotone && r2 >= self.tol.r2_min && violations == 0 && cross_check == 0,
        })
    }

    pub fn riccati(&self) -> Result<Check> {
        let model = self.config.model()?;
        let lqr = self.config.lqr(&model)?;
        let bound = self.tol.riccati_residual;
        Ok(Check {
            id: 5,
            name: "Riccati and Lyapunov residuals, closed-loop stability",
            measured: format!(
                "DARE {:.2e}, Lyapunov {:.2e}, spectral radius {:.6}",
                lqr.dare_residual, lqr.lyapunov_residual, lqr.closed_loop_radius
            ),
            tolerance: format!("residuals < {bound:e}, radius < 1"),
            pass: lqr.dare_residual < bound
                && lqr.lyapunov_residual < bound
                && lqr.closed_loop_radius < 1.0,
        })
    }

    pub fn derivatives(&self) -> Result<Check> {
        let scenario = &self.config.scenario;
        let barriers = BarrierParams::soft(&self.config.bounds, scenario.solver.eps_max, self.config.shape)?;
        let terminal = self.controller(scenario)?.objective.terminal;
        let weights = self.config.weights;
        let b = &self.config.bounds;
        let mut rng = rng_from_seed(0x4644);
        let floor = self.tol.derivative_floor;
        let mut worst: f64 = 0.0;
        let mut he_pd = true;

        for k in 0..1000 {
            let x = StateVec::new(
                rng.random_range(-b.delta_max..b.delta_max),
                rng.random_range(-b.delta_rate_max..b.delta_rate_max),
                rng.random_range(-b.heading_max..b.heading_max),
                rng.random_range(-b.heading_rate_max..b.heading_rate_max),
            );
            let u = rng.random_range(-b.steer_max..b.steer_max);
            let e = SlackPair::new(
                rng.random_range(0.0..barriers.eps_max),
                rng.random_range(0.0..barriers.eps_max),
            );
            let terminal_step = k % 4 == 3;
            // z = [x; u; e]
            let eval = |z: &SMatrix<f64, 7, 1>| -> StepDerivatives {
                let x = Vector4::new(z[0], z[1], z[2], z[3]);
                let e = Vector2::new(z[5], z[6]);
                if terminal_step {
                    terminal_derivatives(&x, &e, &terminal, &barriers)
                } else {
                    step_derivatives(&x, z[4], &e, &weights, &barriers)
                }
            };
            let grad = |d: &StepDerivatives| -> SMatrix<f64, 7, 1> {
                SMatrix::<f64, 7, 1>::from_column_slice(&[
                    d.lx[0], d.lx[1], d.lx[2], d.lx[3], d.lu, d.ge[0], d.ge[1],
                ])
            };
            let z = SMatrix::<f64, 7, 1>::from_column_slice(&[x[0], x[1], x[2], x[3], u, e[0], e[1]]);
            let d = eval(&z);
            let fd_grad = oracle::central_gradient(|v| eval(v).l, &z);
            let fd_hess = oracle::central_jacobian(|v| grad(&eval(v)), &z);

            let analytic_grad = grad(&d);
            for i in 0..7 {
                worst = worst.max(oracle::relative_error(analytic_grad[i], fd_grad[i], floor));
            }
            // lxx, luu, lux and He blocks; the x/e and u/e couplings carry no
            // analytic counterpart and are not part of the check.
            let mut analytic_hess = SMatrix::<f64, 7, 7>::zeros();
            analytic_hess.fixed_view_mut::<4, 4>(0, 0).copy_from(&d.lxx);
            analytic_hess[(4, 4)] = d.luu;
            for c in 0..4 {
                analytic_hess[(4, c)] = d.lux[c];
                analytic_hess[(c, 4)] = d.lux[c];
            }
            analytic_hess.fixed_view_mut::<2, 2>(5, 5).copy_from(&d.he);
            for (r, c) in (0..5).flat_map(|r| (0..5).map(move |c| (r, c))).chain([(5, 5), (5, 6), (6, 5), (6, 6)]) {
                worst = worst.max(oracle::relative_error(analytic_hess[(r, c)], fd_hess[(r, c)], floor));
            }
            let he = d.he;
            he_pd &= he[(0, 0)] > 0.0 && he.determinant() > 0.0;
        }
        Ok(Check {
            id: 6,
            name: "analytic cost derivatives vs central differences",
            measured: format!("max relative error {worst:.2e} over 1000 points, He PD {}", ok(he_pd)),
            tolerance: format!("< {:e} (floor {floor:e}), He PD everywhere", self.tol.derivative_rel),
            pass: worst < self.tol.derivative_rel && he_pd,
        })
    }

    pub fn lq_equivalence(&self) -> Result<Check> {
        let model = self.config.model()?;
        let lqr = self.config.lqr(&model)?;
        let w = self.config.weights;
        let x0 = StateVec::new(2.0, 0.0, 0.0, 0.0);
        let mut worst_rel: f64 = 0.0;
        for horizon in [5, 40] {
            let mut solver = self.config.scenario.solver.clone();
            solver.horizon = horizon;
            solver.mode = Mode::Hard;
            solver.max_outer = 1;
            solver.n_nu = self.config.horizon_bound(&model, &lqr, solver.eps_max, &self.cache)?.n_nu;
            let barriers = BarrierParams::hard(&self.config.bounds, self.config.shape)?.disabled();
            let controller = Controller::new(model, w, barriers, &lqr, solver)?;
            let report = controller.solve(&x0)?;
            let p_n = controller.objective.terminal.p_term;
            let (_, optimum) = oracle::dense_lq(&model.a, &model.b, &w.q, w.r, &p_n, &x0, horizon);
            worst_rel = worst_rel.max((report.cost - optimum).abs() / optimum.abs());
        }

        // First-step gain of the LQ backward pass as the horizon grows.
        let zero_terminal = Matrix4::zeros();
        let lq_step = |lxx: Matrix4<f64>, luu: f64| StepDerivatives {
            l: 0.0,
            lx: Vector4::zeros(),
            lu: 0.0,
            lxx,
            luu,
            lux: RowVector4::zeros(),
            ge: Vector2::zeros(),
            he: nalgebra::Matrix2::identity(),
        };
        let mut gaps = Vec::new();
        let mut recursion_gap: f64 = 0.0;
        for horizon in [25, 50, 100, 200, 400] {
            let mut derivs = vec![lq_step(w.q * 2.0, 2.0 * w.r); horizon];
            derivs.push(lq_step(zero_terminal, 0.0));
            let gains = backward_pass(&model, &derivs, 0.0).expect("LQ backward pass succeeds");
            gaps.push((gains.feedback[0] - lqr.k).amax());
            let textbook = oracle::riccati_gains(&model.a, &model.b, &w.q, w.r, &zero_terminal, horizon);
            recursion_gap = recursion_gap.max((gains.feedback[0] - textbook[0]).amax());
        }
        let last = *gaps.last().unwrap();
        let shrinking = gaps.windows(2).all(|g| g[1] <= g[0]);
        Ok(Check {
            id: 7,
            name: "one ILQR iteration vs dense LQ optimum, gain limit",
            measured: format!(
                "worst relative cost gap {worst_rel:.2e} (N=5,40); |K0 - K| {} for N=25..400, recursion vs textbook {recursion_gap:.1e}",
                gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join(",")
            ),
            tolerance: format!(
                "cost gap < {:e}; |K0 - K| nonincreasing and < {:e} at N=400",
                self.tol.lq_rel, self.tol.gain_limit
            ),
            pass: worst_rel < self.tol.lq_rel
                && shrinking
                && last < self.tol.gain_limit
                && recursion_gap < self.tol.gain_limit,
        })
    }

    pub fn lp_equivalence(&self) -> Result<Check> {
        let mut rng = rng_from_seed(0x4c50);
        let mut worst: f64 = 0.0;
        let mut mismatched = 0;
        for k in 0..200 {
            let n = 1 + k % 6;
            // Keep the vertex count tractable: at most 30 rows overall and at
            // most C(17, 6) bases for the largest instances.
            let max_extra = match n {
                1..=3 => 30 - 2 * n,
                4 => 16,
                5 => 8,
                _ => 5,
            };
            let extra = rng.random_range(1..=max_extra);
            let (c, a, b) = oracle::random_lp(&mut rng, n, extra);
            let reference = oracle::lp_by_vertices(&c, &a, &b, 1e-9);
            let outcome = solve_lp(&LpProblem::new(c, a, b)?)?;
            match (outcome.value(), reference) {
                (Some(v), Some(r)) => worst = worst.max((v - r).abs()),
                _ => mismatched += 1,
            }
        }
        let classified = hand_built_lps()
            .into_iter()
            .filter(|(p, want)| solve_lp(p).map(|o| classify(p, &o) == *want).unwrap_or(false))
            .count();
        let hand = hand_built_lps().len();
        Ok(Check {
            id: 8,
            name: "simplex LP vs vertex enumeration",
            measured: format!(
                "max value gap {worst:.2e} over 200 instances, {mismatched} status mismatches, {classified}/{hand} hand-built instances classified"
            ),
            tolerance: format!("gap < {:e}, all statuses correct", self.tol.lp_value),
            pass: worst < self.tol.lp_value && mismatched == 0 && classified == hand,
        })
    }

    pub fn noise_robustness(&self) -> Result<Check> {
        // The runs start on the lane bound, so the first step's noise alone can
        // cross it; the maximum over later steps is reported alongside.
        const LATE: usize = 1;
        let mut worst_delta: f64 = 0.0;
        let mut late_delta: f64 = 0.0;
        let mut worst_steer: f64 = 0.0;
        let mut identical = true;
        for sigma in [1.0, 2.0] {
            for seed in [1, 2, 3] {
                let mut s = self.step_response();
                s.sigma = sigma;
                s.seed = seed;
                let controller = self.controller(&s)?;
                let first = run_closed_loop(&s, &controller)?;
                let again = run_closed_loop(&s, &controller)?;
                identical &= csv_bytes(&first.records) == csv_bytes(&again.records);
                let m = compute_metrics(&first.records, 0)?;
                worst_delta = worst_delta.max(m.max_abs_delta);
                late_delta = first.records[LATE..].iter().map(|r| r.x[0].abs()).fold(late_delta, f64::max);
                worst_steer = first.records.iter().map(|r| r.steer_cmd.abs()).fold(worst_steer, f64::max);
            }
        }
        Ok(Check {
            id: 9,
            name: "bounded response under disturbances, reproducible output",
            measured: format!(
                "max |delta| {worst_delta:.4} (after step {LATE}: {late_delta:.4}), max |steer| {worst_steer:.6}, repeated seeds byte-identical {}",
                ok(identical)
            ),
            tolerance: format!("max |delta| < {}, |steer| <= pi/6, identical bytes", self.tol.noise_max_delta),
            pass: worst_delta < self.tol.noise_max_delta && worst_steer <= FRAC_PI_6 && identical,
        })
    }

    pub fn solve_time(&self) -> Result<Check> {
        let mut s = self.step_response();
        s.solver.horizon = 40;
        let run = run_closed_loop(&s, &self.controller(&s)?)?;
        let mean = run.mean_solve_ms();
        Ok(Check {
            id: 10,
            name: "mean per-step solve time, N = 40 soft",
            measured: format!("{mean:.3} ms over {} steps", run.records.len()),
            tolerance: format!("< {} ms", self.tol.solve_ms),
            pass: mean < self.tol.solve_ms,
        })
    }

    /// Camera-driven tracking results need an external driving simulator and
    /// are out of scope; only the metric definitions are checked.
    pub fn out_of_scope(&self) -> Result<Check> {
        let rec = |t, delta: f64, steer: f64| SimRecord {
            t,
            x: StateVec::new(delta, 0.0, 0.0, 0.0),
            steer_cmd: steer,
            eps: [0.0; 2],
            cost: 0.0,
            solve_ms: 0.0,
            converged: true,
        };
        let m = compute_metrics(&[rec(0, 1.0, 0.5), rec(1, -1.0, 0.5)], 0)?;
        let exact = m.mae_delta == 1.0 && m.rms_steer == 0.5 && m.mae_theta == 0.0 && m.sd_delta == 1.0;
        Ok(Check {
            id: 11,
            name: "perception-driven results out of scope; metric definitions",
            measured: format!(
                "out of scope; mae_delta {}, rms_steer {}, sd_delta {}",
                m.mae_delta, m.rms_steer, m.sd_delta
            ),
            tolerance: "metrics exact on the hand example (1, 0.5, 1)".into(),
            pass: exact,
        })
    }
}

fn worst_gap(got: &[f64], want: impl Iterator<Item = f64>) -> f64 {
    got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_sig(x, 4)).collect();
    format!("[{}]", items.join(", "))
}

fn ok(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn step(s: Option<usize>) -> String {
    s.map_or_else(|| "never".into(), |v| v.to_string())
}

fn csv_bytes(records: &[SimRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&mut out, records, false).expect("writing to memory");
    out
}

fn lp(c: &[f64], rows: &[&[f64]], b: &[f64]) -> LpProblem {
    LpProblem::new(c.to_vec(), rows.iter().map(|r| r.to_vec()).collect(), b.to_vec())
        .expect("hand-built LP is well formed")
}

fn hand_built_lps() -> Vec<(LpProblem, LpStatus)> {
    vec![
        (lp(&[1.0], &[&[1.0], &[-1.0]], &[1.0, -2.0]), LpStatus::Infeasible),
        (
            lp(&[0.0, 1.0], &[&[1.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]], &[1.0, -1.0, -1.0]),
            LpStatus::Infeasible,
        ),
        (
            lp(&[1.0, 1.0, 1.0], &[&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], &[0.0, 1.0, 1.0], &[0.0, -1.0, -1.0]], &[1.0, 1.0, 2.0, -3.0]),
            LpStatus::Infeasible,
        ),
        (lp(&[1.0, 1.0], &[&[1.0, 0.0]], &[1.0]), LpStatus::Unbounded),
        (lp(&[1.0], &[&[-1.0]], &[0.0]), LpStatus::Unbounded),
        (
            lp(&[1.0, 2.0, 0.0], &[&[1.0, -1.0, 0.0], &[-1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]], &[1.0, 0.0, 1.0, 1.0]),
            LpStatus::Unbounded,
        ),
        (lp(&[1.0, 1.0], &[&[1.0, 0.0], &[0.0, 1.0]], &[2.0, 3.0]), LpStatus::Optimal),
    ]
}

/// Status, accepted only if an unbounded ray is genuine.
fn classify(p: &LpProblem, o: &LpOutcome) -> LpStatus {
    if let LpOutcome::Unbounded { ray } = o {
        let r = DVector::from_column_slice(ray);
        let improves = p.c.iter().zip(ray).map(|(c, d)| c * d).sum::<f64>() > 0.0;
        let recedes = p.a_ub.iter().all(|row| DVector::from_column_slice(row).dot(&r) <= 1e-9);
        if !(improves && recedes) {
            return LpStatus::Optimal;
        }
    }
    o.status()
}
