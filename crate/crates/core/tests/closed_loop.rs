use std::f64::consts::FRAC_PI_6;
use std::sync::Mutex;

use softcilqr::config::RunConfig;
use softcilqr::mpi::HorizonCache;
use softcilqr::sim::{
    compute_metrics, run_closed_loop, run_closed_loop_partial, sweep, write_csv, ScenarioConfig,
    SimRun, SweepParam, CSV_HEADER,
};
use softcilqr::solver::Mode;
use softcilqr::vehicle::StateVec;
use softcilqr::Error;

fn setup(steps: usize) -> (RunConfig, Mutex<HorizonCache>) {
    let mut cfg = RunConfig::default();
    cfg.scenario.steps = steps;
    (cfg, Mutex::new(HorizonCache::in_memory()))
}

fn simulate(cfg: &RunConfig, cache: &Mutex<HorizonCache>, s: &ScenarioConfig) -> SimRun {
    run_closed_loop(s, &cfg.controller(s, cache).unwrap()).unwrap()
}

fn csv(run: &SimRun) -> String {
    let mut out = Vec::new();
    write_csv(&mut out, &run.records, false).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn equilibrium_stays_at_rest() {
    let (mut cfg, cache) = setup(50);
    cfg.scenario.x0 = StateVec::zeros();
    let run = simulate(&cfg, &cache, &cfg.scenario);
    for r in &run.records {
        assert_eq!(r.x, StateVec::zeros());
        assert_eq!(r.steer_cmd, 0.0);
    }
}

#[test]
fn step_response_converges_and_respects_the_steering_limit() {
    let (cfg, cache) = setup(400);
    let run = simulate(&cfg, &cache, &cfg.scenario);
    let last = run.records.last().unwrap();
    assert!(last.x[0].abs() < 1e-2, "{:?}", last.x);
    assert!(run.records.iter().all(|r| r.steer_cmd.abs() <= FRAC_PI_6));
    // Starting 2 m off centre the first commands sit on the limit.
    assert_eq!(run.records[0].steer_cmd, -FRAC_PI_6);
    assert!(run
        .records
        .iter()
        .all(|r| (0.0..=cfg.scenario.solver.eps_max).contains(&r.eps[0])
            && (0.0..=cfg.scenario.solver.eps_max).contains(&r.eps[1])));
}

#[test]
fn hard_mode_records_zero_slack() {
    let (mut cfg, cache) = setup(100);
    cfg.scenario.solver.mode = Mode::Hard;
    let run = simulate(&cfg, &cache, &cfg.scenario);
    assert!(run.records.iter().all(|r| r.eps == [0.0, 0.0]));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (mut cfg, cache) = setup(150);
    cfg.scenario.sigma = 2.0;
    cfg.scenario.seed = 7;
    let a = csv(&simulate(&cfg, &cache, &cfg.scenario));
    let b = csv(&simulate(&cfg, &cache, &cfg.scenario));
    assert_eq!(a, b);
    assert!(a.starts_with(CSV_HEADER));
    assert!(!a.contains('\r'));

    cfg.scenario.seed = 8;
    assert_ne!(a, csv(&simulate(&cfg, &cache, &cfg.scenario)));
}

#[test]
fn noisy_runs_stay_bounded() {
    let (mut cfg, cache) = setup(300);
    cfg.scenario.sigma = 2.0;
    cfg.scenario.seed = 1;
    let run = simulate(&cfg, &cache, &cfg.scenario);
    let m = compute_metrics(&run.records, 0).unwrap();
    assert!(m.max_abs_delta < 2.5, "{m:?}");
    assert!(m.min_delta < 0.0);
}

#[test]
fn singleton_sweep_equals_a_direct_run() {
    let (mut cfg, cache) = setup(120);
    cfg.scenario.sigma = 1.0;
    cfg.scenario.seed = 11;
    let rows = sweep(&cfg.scenario, SweepParam::Horizon, &[30.0], 0, |s| {
        cfg.controller(s, &cache)
    })
    .unwrap();
    let mut direct = cfg.scenario.clone();
    direct.solver.horizon = 30;
    // Index 0, so the derived seed is the base seed.
    let run = simulate(&cfg, &cache, &direct);
    assert_eq!(csv(&rows[0].run), csv(&run));
    assert_eq!(rows[0].metrics, compute_metrics(&run.records, 0).unwrap());
}

#[test]
fn parallel_sweep_matches_serial_runs() {
    let (cfg, cache) = setup(80);
    let values = [19.0, 49.0, 99.0];
    let rows = sweep(&cfg.scenario, SweepParam::EpsMax, &values, 0, |s| {
        cfg.controller(s, &cache)
    })
    .unwrap();
    for (i, (row, &v)) in rows.iter().zip(&values).enumerate() {
        let s = SweepParam::EpsMax.apply(&cfg.scenario, v, i).unwrap();
        assert_eq!(row.value, v);
        assert_eq!(csv(&row.run), csv(&simulate(&cfg, &cache, &s)));
    }
}

#[test]
fn metrics_match_a_recomputation_from_the_csv() {
    let (cfg, cache) = setup(300);
    let run = simulate(&cfg, &cache, &cfg.scenario);
    let text = csv(&run);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let n = rows.len() as f64;
    let mae_delta = rows.iter().map(|r| r[1].abs()).sum::<f64>() / n;
    let mae_theta = rows.iter().map(|r| r[3].abs()).sum::<f64>() / n;
    let rms_steer = (rows.iter().map(|r| r[5] * r[5]).sum::<f64>() / n).sqrt();
    let mean = rows.iter().map(|r| r[1]).sum::<f64>() / n;
    let sd = (rows.iter().map(|r| (r[1] - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);

    let m = compute_metrics(&run.records, 0).unwrap();
    // The CSV carries nine significant digits.
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * (1.0 + b.abs());
    assert!(close(m.mae_delta, mae_delta));
    assert!(close(m.mae_theta, mae_theta));
    assert!(close(m.rms_steer, rms_steer));
    assert!(close(m.sd_delta, sd));
    assert!(close(m.min_delta, min));
}

#[test]
fn a_diverging_run_keeps_its_completed_steps() {
    let (mut cfg, cache) = setup(50);
    cfg.scenario.sigma = 1e305;
    let controller = cfg.controller(&cfg.scenario, &cache).unwrap();
    let partial = run_closed_loop_partial(&cfg.scenario, &controller).unwrap_err();
    assert!(matches!(partial.error, Error::Numerical(_)), "{:?}", partial.error);
    assert!(partial.run.records.len() < 50);
    assert!(partial
        .run
        .records
        .iter()
        .all(|r| r.x.iter().all(|v| v.is_finite())));
}
