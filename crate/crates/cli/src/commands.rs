use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use nalgebra::{Matrix1, Vector1};

use softcilqr::config::RunConfig;
use softcilqr::lqr::{feedback_gain, lyapunov_residual, solve_dare, spectral_radius, DARE_MAX_ITER, DARE_TOL};
use softcilqr::mpi::HorizonCache;
use softcilqr::sim::{
    compute_metrics, run_closed_loop_partial, write_csv, write_summary, SimRun, SweepParam,
};
use softcilqr_verify::{Suite, Tolerances, ALL};

use crate::report::{matrix, rows_of, sig6};
use crate::Failure;

/// Residual bound for `gain`.
const RESIDUAL_LIMIT: f64 = 1e-8;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_failure(e: io::Error) -> Failure {
    Failure::Usage(format!("write failed: {e}"))
}

fn cache(path: Option<&Path>) -> Mutex<HorizonCache> {
    Mutex::new(path.map_or_else(HorizonCache::in_memory, HorizonCache::open))
}

pub fn model(cfg: &RunConfig) -> Result<(), Failure> {
    let m = cfg.model()?;
    print!("{}", matrix("A", rows_of(&m.a)));
    print!("{}", matrix("B", rows_of(&m.b)));
    Ok(())
}

fn check_residuals(dare: f64, lyap: f64) -> Result<(), Failure> {
    if dare < RESIDUAL_LIMIT && lyap < RESIDUAL_LIMIT {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "residuals above {RESIDUAL_LIMIT:e}: DARE {dare:.3e}, Lyapunov {lyap:.3e}"
        )))
    }
}

pub fn gain(cfg: &RunConfig, scalar: bool) -> Result<(), Failure> {
    if scalar {
        let one = Matrix1::new(1.0);
        let b = Vector1::new(1.0);
        let sol = solve_dare(&one, &b, &one, 1.0, DARE_TOL, DARE_MAX_ITER)?;
        let k = feedback_gain(&one, &b, &sol.p, 1.0)?;
        let lyap = lyapunov_residual(&one, &b, &k, &sol.p, &one, 1.0);
        println!("P = {}", sig6(sol.p[0]));
        println!("K = {}", sig6(k[0]));
        println!("dare_residual = {:.3e}", sol.residual);
        println!("lyapunov_residual = {lyap:.3e}");
        return check_residuals(sol.residual, lyap);
    }
    let m = cfg.model()?;
    let lqr = cfg.lqr(&m)?;
    print!("{}", matrix("P", rows_of(&lqr.p)));
    print!("{}", matrix("K", rows_of(&lqr.k)));
    println!("dare_residual = {:.3e}", lqr.dare_residual);
    println!("lyapunov_residual = {:.3e}", lqr.lyapunov_residual);
    println!(
        "spectral_radius = {}",
        sig6(spectral_radius(&(m.a + m.b * lqr.k)))
    );
    check_residuals(lqr.dare_residual, lqr.lyapunov_residual)
}

pub fn mpi(cfg: &RunConfig, eps: &[f64], cache_path: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let m = cfg.model()?;
    let lqr = cfg.lqr(&m)?;
    let cache = cache(cache_path);
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        rows.push((e, cfg.horizon_bound(&m, &lqr, e, &cache)?.n_nu));
    }
    let mut w = output(out)?;
    writeln!(w, "eps_max,n_nu").map_err(io_failure)?;
    for (e, n) in rows {
        writeln!(w, "{},{n}", softcilqr::sim::fmt_sig9(e)).map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)
}

fn summary_line(run: &SimRun) -> String {
    match compute_metrics(&run.records, 0) {
        Ok(m) => format!(
            "steps={} min_delta={} mae_delta={} mae_theta={} rms_steer={} unconverged={} mean_solve_ms={:.3}",
            run.records.len(),
            sig6(m.min_delta),
            sig6(m.mae_delta),
            sig6(m.mae_theta),
            sig6(m.rms_steer),
            run.unconverged.len(),
            run.mean_solve_ms()
        ),
        Err(_) => "steps=0".into(),
    }
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>, timing: bool, cache_path: Option<&Path>) -> Result<(), Failure> {
    let controller = cfg.controller(&cfg.scenario, &cache(cache_path))?;
    let outcome = run_closed_loop_partial(&cfg.scenario, &controller);
    let (run, error) = match outcome {
        Ok(run) => (run, None),
        Err(p) => (p.run, Some(p.error)),
    };
    let mut w = output(out)?;
    write_csv(&mut w, &run.records, timing).map_err(io_failure)?;
    w.flush().map_err(io_failure)?;
    eprintln!("{}", summary_line(&run));
    match error {
        None => Ok(()),
        Some(e) => Err(Failure::Numerical(format!(
            "{e} (after {} steps; partial CSV written)",
            run.records.len()
        ))),
    }
}

pub fn sweep(
    cfg: &RunConfig,
    param: &str,
    values: &[f64],
    out: Option<&Path>,
    cache_path: Option<&Path>,
) -> Result<(), Failure> {
    let param: SweepParam = param.parse()?;
    let cache = cache(cache_path);
    let rows = softcilqr::sim::sweep(&cfg.scenario, param, values, cfg.burn_in, |s| {
        cfg.controller(s, &cache)
    })?;
    let mut w = output(out)?;
    write_summary(&mut w, param, &rows).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

pub fn verify(cfg: RunConfig, tighten: f64, only: &[u8]) -> Result<(), Failure> {
    if !(tighten > 0.0 && tighten.is_finite()) {
        return Err(Failure::Usage(format!("--tighten must be positive, got {tighten}")));
    }
    let ids: Vec<u8> = if only.is_empty() { ALL.to_vec() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|id| !ALL.contains(id)) {
        return Err(Failure::Usage(format!("no acceptance criterion {bad} (expected 1..=11)")));
    }
    let suite = Suite::new(cfg, Tolerances::default().scaled(tighten));
    let mut failed = 0;
    for id in &ids {
        let check = suite.run(*id)?;
        println!("{check}");
        if !check.pass {
            failed += 1;
        }
    }
    println!("{}/{} criteria passed", ids.len() - failed, ids.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Acceptance(failed))
    }
}
