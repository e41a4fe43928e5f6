use std::path::Path;

use fracvol::fbm::{fbm_cov, CholeskySampler, FbmSampler, Hurst, WoodChanSampler};
use fracvol::pricing::{bs_reference_price, mean_and_stderr, price_many, Estimator, MCConfig, OptionKind, Payoff};
use fracvol::simulate::{Model, PhysicalPath};
use fracvol::viability::{BoundingBox, CheckMode, CheckOptions, ConditionReport};
use fracvol::{Coefficients, Scenario, TimeGrid};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::output::{ensure_dir, numbered, path_file, read_file, write_json, Csv};
use crate::{CheckArgs, EstimatorArg, FbmArgs, Method, Mode, PayoffKind, PriceArgs, ReproduceArgs, SimulateArgs};

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read_file(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn fbm(a: FbmArgs) -> Result<(), CliError> {
    let hurst = Hurst::new(a.hurst)?;
    let grid = TimeGrid::new(a.horizon, a.steps)?;
    if a.dims == 0 {
        return Err(CliError::Usage("--dims must be at least 1".into()));
    }
    let sampler: Box<dyn FbmSampler> = match a.method {
        Method::Woodchan => Box::new(WoodChanSampler::new(grid, hurst)?),
        Method::Cholesky => Box::new(CholeskySampler::new(grid, hurst)?),
    };
    ensure_dir(&a.out)?;
    let header: Vec<String> = std::iter::once("t".to_string()).chain(numbered("b", a.dims)).collect();
    for p in 0..a.paths {
        let path = sampler.sample_path(a.dims, a.seed, p as u64);
        let mut csv = Csv::new(&header);
        for (i, row) in path.rows().enumerate() {
            csv.row(std::iter::once(grid.time(i)).chain(row.iter().copied()));
        }
        csv.write(&path_file(&a.out, p))?;
    }

    // Covariance of component 0 at a few evenly spaced grid times.
    let points = a.summary_points.clamp(1, a.steps);
    let idx: Vec<usize> = (1..=points).map(|m| (m * a.steps + points / 2) / points).collect();
    let samples: Vec<Vec<f64>> = (0..a.summary_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = fracvol::RandomSource::for_stream(a.seed, p, 0);
            let path = sampler.sample_component(&mut rng);
            idx.iter().map(|&i| path[i]).collect()
        })
        .collect();
    let mut csv = Csv::new(&["t", "s", "empirical", "theoretical", "stderr", "z"]);
    let mut worst = 0.0f64;
    for (ii, &i) in idx.iter().enumerate() {
        for (jj, &j) in idx.iter().enumerate().skip(ii) {
            let products: Vec<f64> = samples.iter().map(|x| x[ii] * x[jj]).collect();
            let (emp, se) = mean_and_stderr(&products);
            let (t, s) = (grid.time(i), grid.time(j));
            let theo = fbm_cov(t, s, hurst.value())?;
            let z = if se > 0.0 { (emp - theo) / se } else { 0.0 };
            worst = worst.max(z.abs());
            csv.row([t, s, emp, theo, se, z]);
        }
    }
    csv.write(&a.out.join("summary.csv"))?;
    println!(
        "wrote {} path file(s) and summary.csv to {}; max |z| = {worst:.3} over {} summary paths",
        a.paths,
        a.out.display(),
        a.summary_paths
    );
    Ok(())
}

fn check_mode(m: Mode) -> CheckMode {
    match m {
        Mode::Cone => CheckMode::Cone,
        Mode::Hyperplane => CheckMode::Hyperplane,
    }
}

pub fn check_viability(a: CheckArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&a.scenario)?;
    let mode = check_mode(a.mode);
    let d = scenario.coefficients.dim();
    let opts = CheckOptions {
        samples_per_face: a.samples,
        bbox: BoundingBox::cube(d, a.box_radius)?,
        tol: a.tol,
        seed: scenario.seed,
    };
    let reports: Vec<ConditionReport> = match a.xi {
        Some(xi) => vec![fracvol::viability::check_viability_conditions(
            &scenario.coefficients,
            &scenario.polyhedron(xi)?,
            xi,
            mode,
            &opts,
        )?],
        None => scenario.check_conditions(mode, &opts)?,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("report serializes"));
    } else {
        for r in &reports {
            println!("{}", r.to_table());
        }
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("xi = {}", r.xi))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "{mode}-mode conditions fail at {}",
            failed.join(", ")
        )))
    }
}

fn path_csv(p: &PhysicalPath) -> Csv {
    let (du, dv, ds) = (p.u.dims(), p.v.dims(), p.s.dims());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("u", du))
        .chain(numbered("v", dv))
        .chain(numbered("s", ds))
        .chain(std::iter::once("margin".to_string()))
        .collect();
    let mut csv = Csv::new(&header);
    let grid = p.u.grid();
    for i in 0..grid.len() {
        csv.row(
            std::iter::once(grid.time(i))
                .chain(p.u.row(i).iter().copied())
                .chain(p.v.row(i).iter().copied())
                .chain(p.s.row(i).iter().copied())
                .chain(std::iter::once(p.margin[i])),
        );
    }
    csv
}

#[derive(Serialize)]
struct PathSummary {
    path: usize,
    xi: f64,
    min_margin: f64,
    /// `min_{t, k} V_k(t) - xi`.
    min_v_minus_xi: f64,
}

fn summarize(index: usize, p: &PhysicalPath) -> PathSummary {
    let min_v = p.v.values().iter().copied().fold(f64::INFINITY, f64::min);
    PathSummary {
        path: index,
        xi: p.xi,
        min_margin: p.min_margin(),
        min_v_minus_xi: min_v - p.xi,
    }
}

fn simulate_paths(model: &Model, seed: u64, paths: usize, project: bool) -> Result<Vec<PhysicalPath>, CliError> {
    Ok((0..paths as u64)
        .into_par_iter()
        .map(|p| model.physical_path(seed, p, project))
        .collect::<fracvol::Result<Vec<_>>>()?)
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(n) = a.steps {
        scenario.grid = TimeGrid::new(scenario.grid.horizon(), n)?;
    }
    scenario.solve_config()?;
    let seed = scenario.seed;
    let model = Model::new(scenario)?;
    let paths = simulate_paths(&model, seed, a.paths, a.project)?;
    ensure_dir(&a.out)?;
    for (i, p) in paths.iter().enumerate() {
        path_csv(p).write(&path_file(&a.out, i))?;
    }
    let summaries: Vec<PathSummary> = paths.iter().enumerate().map(|(i, p)| summarize(i, p)).collect();
    let s = model.scenario();
    write_json(
        &a.out.join("report.json"),
        &json!({
            "seed": seed,
            "paths": a.paths,
            "project": a.project,
            "hurst": s.hurst.value(),
            "horizon": s.grid.horizon(),
            "steps": s.grid.steps(),
            "summary": summaries,
        }),
    )?;
    println!("wrote {} path file(s) and report.json to {}", a.paths, a.out.display());
    Ok(())
}

fn build_payoff(a: &PriceArgs, scenario: &Scenario) -> Result<Payoff, CliError> {
    let s0 = &scenario.market.initial_prices;
    let spot = || s0.get(a.asset).copied().unwrap_or(f64::NAN);
    let payoff = match a.payoff {
        PayoffKind::Call => Payoff::Call {
            asset: a.asset,
            strike: a.strike.unwrap_or_else(spot),
        },
        PayoffKind::Put => Payoff::Put {
            asset: a.asset,
            strike: a.strike.unwrap_or_else(spot),
        },
        PayoffKind::Bond => Payoff::Bond,
        PayoffKind::Asset => Payoff::Asset { asset: a.asset },
        PayoffKind::Basket => {
            if a.weights.len() != s0.len() {
                return Err(CliError::Usage(format!("--weights needs {} values", s0.len())));
            }
            let value = a.weights.iter().zip(s0).map(|(w, s)| w * s).sum();
            Payoff::Basket {
                weights: a.weights.clone(),
                strike: a.strike.unwrap_or(value),
            }
        }
    };
    payoff.validate(s0.len())?;
    Ok(payoff)
}

/// Closed-form value where one exists for this scenario and payoff.
fn reference_price(payoff: &Payoff, scenario: &Scenario) -> Result<Option<f64>, CliError> {
    let m = &scenario.market;
    let t = scenario.grid.horizon();
    let df = (-m.rate * t).exp();
    Ok(match payoff {
        Payoff::Bond => Some(df),
        Payoff::Asset { asset } => Some(m.initial_prices[*asset] / m.riskfree_initial),
        Payoff::Call { asset, strike } | Payoff::Put { asset, strike } => {
            match scenario.static_volatility() {
                Some(v) if v[*asset] > 0.0 => {
                    let kind = if matches!(payoff, Payoff::Call { .. }) {
                        OptionKind::Call
                    } else {
                        OptionKind::Put
                    };
                    Some(bs_reference_price(m.initial_prices[*asset], *strike, m.rate, v[*asset], t, kind)?)
                }
                _ => None,
            }
        }
        _ => None,
    })
}

fn payoff_json(p: &Payoff) -> serde_json::Value {
    match p {
        Payoff::Call { asset, strike } => json!({"kind": "call", "asset": asset, "strike": strike}),
        Payoff::Put { asset, strike } => json!({"kind": "put", "asset": asset, "strike": strike}),
        Payoff::Basket { weights, strike } => json!({"kind": "basket", "weights": weights, "strike": strike}),
        Payoff::Asset { asset } => json!({"kind": "asset", "asset": asset}),
        Payoff::Bond => json!({"kind": "bond"}),
        Payoff::Custom(_) => json!({"kind": "custom"}),
    }
}

pub fn price(a: PriceArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    if let Some(n) = a.steps {
        scenario.grid = TimeGrid::new(scenario.grid.horizon(), n)?;
    }
    scenario.solve_config()?;
    let payoff = build_payoff(&a, &scenario)?;
    let reference = reference_price(&payoff, &scenario)?;
    let cfg = MCConfig {
        project: !a.no_project,
        max_breach_rate: a.max_breach_rate,
        ..MCConfig::new(a.paths, scenario.seed)
    };
    let model = Model::new(scenario)?;
    let one = |e: Estimator| price_many(std::slice::from_ref(&payoff), &model, &cfg, e).map(|mut r| r.remove(0));
    let out = if a.both {
        let p = one(Estimator::Physical)?;
        let q = one(Estimator::RiskNeutral)?;
        json!({
            "payoff": payoff_json(&payoff),
            "physical": p,
            "risk_neutral": q,
            "z_score": p.z_score(&q),
            "reference": reference,
            "project": cfg.project,
        })
    } else {
        let est = match a.estimator {
            EstimatorArg::Physical => Estimator::Physical,
            EstimatorArg::RiskNeutral => Estimator::RiskNeutral,
        };
        let r = one(est)?;
        let mut v = serde_json::to_value(&r).expect("result serializes");
        v["payoff"] = payoff_json(&payoff);
        v["reference"] = json!(reference);
        v["project"] = json!(cfg.project);
        v
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("result serializes"));
    Ok(())
}

#[derive(Serialize)]
struct ReproduceReport {
    normalizer: f64,
    assumptions: serde_json::Value,
    seed: u64,
    paths: usize,
    project: bool,
    /// Tolerance used for the `viable` flag: `1e-2 dt^H`.
    epsilon: f64,
    cone_conditions_pass: bool,
    hyperplane_conditions_pass: bool,
    viable_paths: usize,
    summary: Vec<ReproduceSummary>,
}

#[derive(Serialize)]
struct ReproduceSummary {
    #[serde(flatten)]
    path: PathSummary,
    viable: bool,
}

pub fn reproduce(a: ReproduceArgs) -> Result<(), CliError> {
    let mut scenario = Scenario::reference_example();
    scenario.seed = a.seed;
    scenario.market.rate = a.rate;
    scenario.grid = TimeGrid::new(scenario.grid.horizon(), a.steps)?;
    scenario.validate()?;

    let opts = scenario.check_options()?;
    let cone = scenario.check_conditions(CheckMode::Cone, &opts)?;
    let hyper = scenario.check_conditions(CheckMode::Hyperplane, &opts)?;

    let model = Model::new(scenario)?;
    let normalizer = model.xi_distribution().normalizer().expect("reference law has a density");
    let paths = simulate_paths(&model, a.seed, a.paths, a.project)?;

    ensure_dir(&a.out)?;
    crate::output::write_file(&a.out.join("scenario.json"), &(model.scenario().to_json() + "\n"))?;
    for (i, p) in paths.iter().enumerate() {
        path_csv(p).write(&path_file(&a.out, i))?;
    }
    write_json(&a.out.join("viability.json"), &json!({"cone": cone, "hyperplane": hyper}))?;

    let s = model.scenario();
    let epsilon = 1e-2 * s.grid.dt().powf(s.hurst.value());
    let summary: Vec<ReproduceSummary> = paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = summarize(i, p);
            ReproduceSummary {
                viable: path.min_v_minus_xi >= -epsilon,
                path,
            }
        })
        .collect();
    let report = ReproduceReport {
        normalizer,
        assumptions: json!({
            "horizon": s.grid.horizon(),
            "steps": s.grid.steps(),
            "rate": s.market.rate,
            "riskfree_initial": s.market.riskfree_initial,
            "brownian_components": "independent",
        }),
        seed: a.seed,
        paths: a.paths,
        project: a.project,
        epsilon,
        cone_conditions_pass: cone.iter().all(ConditionReport::passed),
        hyperplane_conditions_pass: hyper.iter().all(ConditionReport::passed),
        viable_paths: summary.iter().filter(|p| p.viable).count(),
        summary,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!("normalizer {normalizer}");
    println!(
        "cone conditions {}; hyperplane conditions {}",
        if report.cone_conditions_pass { "pass" } else { "FAIL" },
        if report.hyperplane_conditions_pass { "pass" } else { "FAIL" }
    );
    println!(
        "{} of {} paths keep V >= xi - {:.3e}; output in {}",
        report.viable_paths,
        a.paths,
        epsilon,
        a.out.display()
    );
    Ok(())
}
