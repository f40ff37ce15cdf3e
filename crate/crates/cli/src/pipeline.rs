//! Verification, simulation and sweep drivers over scenarios.

use std::path::Path;

use phem_core::contraction::{coupled_damping_sweep, EpsPolicy, Region};
use phem_core::controller::ClosedLoopShape;
use phem_core::error::{Error, Result};
use phem_core::matrix::Matrix;
use phem_core::metrics::{compute_metrics, Metrics};
use phem_core::plant::State;
use phem_core::sim::{simulate, LoopSpec, SimRecord};
use phem_core::verify::{verify_law, CertificateGrade, ConditionReport, VerifyOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output;
use crate::scenario::Scenario;

pub struct VerifyOutcome {
    pub report: ConditionReport,
    pub min_grade: CertificateGrade,
    pub certified: bool,
}

/// Run the base-configuration verification of a scenario.
pub fn run_verify(scenario: &Scenario) -> Result<VerifyOutcome> {
    let plant = scenario.build_plant()?;
    let ctrl = scenario.build_controller(&plant)?;
    let region = scenario.build_region(&ctrl.target)?;
    let report = verify_law(&ctrl, &region, &VerifyOptions::default())?;
    let min_grade = scenario.min_grade()?;
    let certified = report.certified(min_grade);
    Ok(VerifyOutcome { report, min_grade, certified })
}

pub struct CaseOutcome {
    pub label: String,
    pub record: SimRecord,
    pub metrics: Metrics,
}

pub struct SimulateOutcome {
    pub verify: VerifyOutcome,
    pub cases: Vec<CaseOutcome>,
}

/// Simulate every case of the scenario (gated on base verification unless
/// `force`), writing traces, metrics, the reference and the plot script under
/// `out_dir/<scenario name>/`.
pub fn run_simulate(
    scenario: &Scenario,
    out_dir: &Path,
    force: bool,
    seed_ics: Option<u64>,
    jobs: usize,
) -> Result<SimulateOutcome> {
    let verify = run_verify(scenario)?;
    if !verify.certified && !force {
        return Err(Error::Config(format!(
            "scenario '{}' is not certified at grade '{}' (failed: {}); pass --force to simulate anyway",
            scenario.name,
            verify.min_grade.name(),
            verify.report.failed_names().join(", ")
        )));
    }

    let mut cases = scenario.cases()?;
    // seeded initial conditions: sample the starting state uniformly from the
    // verification region box around the nominal start
    if let Some(seed) = seed_ics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, sc) in &mut cases {
            let plant = sc.build_plant()?;
            let ctrl = sc.build_controller(&plant)?;
            let region = sc.build_region(&ctrl.target)?;
            let base = ctrl.target.state(0.0)?.to_vec();
            let sampled: Vec<f64> = match &region {
                Region::Box { bounds, .. } => bounds
                    .iter()
                    .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                    .collect(),
                Region::Tube { half_widths, .. } => base
                    .iter()
                    .zip(half_widths)
                    .map(|(b, h)| b + h * (2.0 * rng.gen::<f64>() - 1.0))
                    .collect(),
            };
            let st = State::from_flat(plant.n_m(), plant.n_e(), &sampled);
            sc.initial_state.q = st.q;
            sc.initial_state.p = st.p;
            sc.initial_state.x_e = st.x_e;
        }
    }

    let outcomes = run_cases_parallel(&cases, jobs)?;

    // artifacts
    let dir = output::scenario_dir(out_dir, &scenario.name);
    let plant = scenario.build_plant()?;
    let ctrl = scenario.build_controller(&plant)?;
    let sample_times: Vec<f64> = {
        let cfg = scenario.build_integrator()?;
        (0..=cfg.samples).map(|k| cfg.horizon * (k as f64) / (cfg.samples as f64)).collect()
    };
    output::write_atomic(
        &dir.join("reference.csv"),
        &output::reference_csv(&ctrl.target, &sample_times)?,
    )?;
    output::write_atomic(
        &dir.join("report.json"),
        &output::report_json(&verify.report, verify.min_grade),
    )?;
    output::write_atomic(&dir.join("plot.py"), output::plot_script())?;
    output::write_atomic(&dir.join("scenario.json"), &scenario.to_json())?;
    for c in &outcomes {
        let case_dir = dir.join(&c.label);
        output::write_atomic(&case_dir.join("trace.csv"), &output::trace_csv(&c.record))?;
        output::write_atomic(
            &case_dir.join("metrics.json"),
            &output::metrics_json(&c.metrics, &c.record),
        )?;
    }
    Ok(SimulateOutcome { verify, cases: outcomes })
}

fn run_single_case(label: &str, sc: &Scenario) -> Result<CaseOutcome> {
    let plant = sc.build_plant()?;
    let ctrl = sc.build_controller(&plant)?;
    let cfg = sc.build_integrator()?;
    let eta0 = sc.build_initial_state();
    let record = simulate(&plant, &LoopSpec::Closed(&ctrl), &eta0, &cfg, None)?;
    let metrics = compute_metrics(&record, &ctrl.target)?;
    Ok(CaseOutcome { label: label.to_string(), record, metrics })
}

fn run_cases_parallel(cases: &[(String, Scenario)], jobs: usize) -> Result<Vec<CaseOutcome>> {
    let jobs = jobs.max(1);
    if jobs == 1 || cases.len() == 1 {
        return cases.iter().map(|(l, sc)| run_single_case(l, sc)).collect();
    }
    let mut results: Vec<Option<Result<CaseOutcome>>> = Vec::new();
    results.resize_with(cases.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results_mx = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(cases.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= cases.len() {
                    break;
                }
                let (label, sc) = &cases[i];
                let out = run_single_case(label, sc);
                results_mx.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results.into_iter().map(|r| r.expect("case completed")).collect()
}

pub struct SweepRowOut {
    pub d_d: f64,
    pub ph_ok: bool,
    pub hurwitz_ok: bool,
    pub sigma: Option<f64>,
    pub xi_sym_max: Option<f64>,
    pub eps: Option<f64>,
    pub metrics: Option<Metrics>,
}

/// Sweep the coupled damping (or another declared gain) over a grid: rate
/// study rows plus per-point simulation metrics, written as one CSV.
pub fn run_sweep(
    scenario: &Scenario,
    parameter: &str,
    grid: &[f64],
    gamma: f64,
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<SweepRowOut>> {
    if grid.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    // validate the key once up front
    {
        let mut probe = scenario.clone();
        probe.apply_override(parameter, &serde_json::json!(grid[0]))?;
    }
    let plant = scenario.build_plant()?;
    let ctrl = scenario.build_controller(&plant)?;
    let region = scenario.build_region(&ctrl.target)?;
    let grid_pts = region.sample(Some(&ctrl.target))?;
    let center = region.center(Some(&ctrl.target))?;
    let energy = ctrl.energy();
    let hess = |pt: &[f64], t: f64| -> Result<Matrix> {
        energy.hessian(&State::from_flat(plant.n_m(), plant.n_e(), pt), t)
    };

    // rate-study rows only apply when sweeping the coupled damping
    let rate_rows = if parameter == "controller.d_d" {
        let f_d_of = |v: f64| -> Matrix {
            let shape = ClosedLoopShape::new(
                &plant,
                ctrl.shape.gamma.clone(),
                Matrix::scalar(v),
                ctrl.shape.k_e.clone(),
            )
            .expect("shape rebuild");
            shape.f_d(&plant)
        };
        let d_of = |v: f64| Matrix::scalar(v);
        Some(coupled_damping_sweep(
            &f_d_of,
            &d_of,
            &plant.r_m,
            &ctrl.shape.r_e_bar,
            &hess,
            &grid_pts,
            (&center.0, center.1),
            grid,
            gamma,
            EpsPolicy::SweepBest,
        )?)
    } else {
        None
    };

    // per-point simulations
    let cases: Vec<(String, Scenario)> = grid
        .iter()
        .map(|v| {
            let mut sc = scenario.clone();
            sc.sweep.clear();
            sc.apply_override(parameter, &serde_json::json!(v))?;
            Ok((format!("{v:e}"), sc))
        })
        .collect::<Result<_>>()?;
    let sims = run_cases_parallel(&cases, jobs)?;

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &v) in grid.iter().enumerate() {
        let rr = rate_rows.as_ref().map(|r| &r[i]);
        rows.push(SweepRowOut {
            d_d: v,
            ph_ok: rr.map(|r| r.ph_structure_ok).unwrap_or(false),
            hurwitz_ok: rr.map(|r| r.hurwitz_ok).unwrap_or(false),
            sigma: rr.and_then(|r| r.sigma),
            xi_sym_max: rr.and_then(|r| r.xi_sym_max),
            eps: rr.and_then(|r| r.eps_used),
            metrics: Some(sims[i].metrics.clone()),
        });
    }

    let mut csv = String::from(
        "d_d,ph_ok,hurwitz_ok,sigma,xi_sym_max,eps,final_error,zero_crossings,l2_final,fitted_rate\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &rows {
        let m = r.metrics.as_ref();
        csv.push_str(&format!(
            "{:e},{},{},{},{},{},{},{},{},{}\n",
            r.d_d,
            r.ph_ok,
            r.hurwitz_ok,
            opt(r.sigma),
            opt(r.xi_sym_max),
            opt(r.eps),
            m.map(|m| format!("{:e}", m.final_error)).unwrap_or_default(),
            m.map(|m| m.zero_crossings.to_string()).unwrap_or_default(),
            m.map(|m| format!("{:e}", m.l2_final)).unwrap_or_default(),
            m.and_then(|m| m.fitted_rate).map(|x| format!("{x:e}")).unwrap_or_default(),
        ));
    }
    let dir = output::scenario_dir(out_dir, &scenario.name);
    output::write_atomic(&dir.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// Parse a sweep grid: either `start:stop:count` or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config("grid ranges use start:stop:count".into()));
        }
        let (a, b) = (parse(parts[0])?, parse(parts[1])?);
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad count '{}': {e}", parts[2])))?;
        if n < 2 {
            return Err(Error::Config("grid count must be at least 2".into()));
        }
        return Ok((0..n).map(|i| a + (b - a) * (i as f64) / ((n - 1) as f64)).collect());
    }
    let vals: Result<Vec<f64>> = text.split(',').filter(|s| !s.trim().is_empty()).map(parse).collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    Ok(vals)
}
