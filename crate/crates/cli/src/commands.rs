use std::collections::BTreeSet;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use diffsamp_core::cost::CostReport;
use diffsamp_core::scenario::{Issue, Severity};
use diffsamp_core::sim::{run_monte_carlo, MonteCarloOptions};
use diffsamp_core::theory::{self, ModelMatrices, SteadyState, Stability, TheoryCurve};
use diffsamp_core::{ScenarioConfig, ScenarioSpec, SimulationResult};
use serde::Serialize;

use crate::output::{count, csv, sig6, write_file};
use crate::{CostArgs, Failure, Overrides, RunArgs, Source, SweepArgs, SweepMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Sim,
    Exact,
    Approx,
    Closed,
}

pub fn parse_models(list: &str) -> Result<BTreeSet<Model>, Failure> {
    let mut set = BTreeSet::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "sim" => {
                set.insert(Model::Sim);
            }
            "exact" => {
                set.insert(Model::Exact);
            }
            "approx" => {
                set.insert(Model::Approx);
            }
            "closed" => {
                set.insert(Model::Closed);
            }
            "all" => set.extend([Model::Sim, Model::Exact, Model::Approx, Model::Closed]),
            "theory-only" => set.extend([Model::Exact, Model::Approx, Model::Closed]),
            other => {
                return Err(Failure::Config(format!(
                    "unknown model {other:?}; expected sim, exact, approx, closed, all or theory-only"
                )))
            }
        }
    }
    if set.is_empty() {
        return Err(Failure::Config("--models selects nothing".into()));
    }
    Ok(set)
}

pub fn parse_grid(list: &str) -> Result<Vec<f64>, Failure> {
    let grid = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::Config(format!("grid value {s:?} is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        return Err(Failure::Config("invalid argument: empty p_zeta grid".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Failure::Config(format!("invalid argument: p_zeta {p} outside [0, 1]")));
    }
    Ok(grid)
}

fn load_spec(source: &Source, overrides: Option<&Overrides>) -> Result<(ScenarioSpec, String), Failure> {
    let (mut cfg, label) = source.load()?;
    if let Some(o) = overrides {
        o.apply(&mut cfg);
    }
    let spec = cfg.resolve()?;
    spec.validate()?;
    Ok((spec, label))
}

/// Steady state of the closed form that applies to this scenario: isolated
/// nodes for the non-cooperative rule, `K_V` for cooperative rules on a
/// complete graph.
fn closed_form_steady_state(spec: &ScenarioSpec) -> Option<SteadyState> {
    let v = spec.node_count();
    if !spec.rule.is_cooperative() {
        return theory::noncoop_closed_form(spec, 0).ok().and_then(|c| c.steady_state);
    }
    if spec.topology.edge_count() == v * (v - 1) / 2 {
        return theory::kv_closed_form(v, spec.mu, spec.p_zeta, spec.sigma_u2, spec.filter_length, &spec.noise_variances)
            .ok();
    }
    None
}

fn simulate(spec: &ScenarioSpec, workers: Option<usize>) -> Result<SimulationResult, Failure> {
    Ok(run_monte_carlo(spec, &MonteCarloOptions { workers, per_node: false })?)
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

const TOOL: Tool = Tool {
    name: "diffsamp",
    version: env!("CARGO_PKG_VERSION"),
};

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Serialize)]
struct SteadyStates {
    sim: Option<f64>,
    exact: Option<f64>,
    approx: Option<f64>,
    closed_form: Option<f64>,
}

#[derive(Serialize)]
struct SimulationSummary {
    realizations: usize,
    diverged: usize,
    diverged_fraction: f64,
}

#[derive(Serialize)]
struct RunSummary {
    tool: Tool,
    generated_at_unix: u64,
    label: String,
    models: Vec<Model>,
    master_seed: u64,
    rng: &'static str,
    /// Fully resolved scenario, also written as `scenario.toml`.
    scenario: ScenarioConfig,
    spectral_radius: f64,
    stability: &'static str,
    mean_stability_bound: f64,
    steady_state_db: SteadyStates,
    simulation: Option<SimulationSummary>,
    cost: CostReport,
}

fn curve_cell(curve: Option<&[f64]>, n: usize) -> String {
    sig6(curve.and_then(|c| c.get(n).copied()))
}

pub fn run_scenario(args: &RunArgs, workers: Option<usize>) -> Result<(), Failure> {
    let (spec, label) = load_spec(&args.source, Some(&args.overrides))?;
    let models = parse_models(&args.models)?;
    let horizon = spec.horizon;

    let rho = ModelMatrices::new(&spec).spectral_radius()?;
    let stability = Stability::classify(rho);

    let exact = models
        .contains(&Model::Exact)
        .then(|| theory::exact_nmsd_curve(&spec, horizon))
        .transpose()?;
    let approx = models
        .contains(&Model::Approx)
        .then(|| theory::approx_nmsd_curve(&spec, horizon))
        .transpose()?;
    let closed: Option<TheoryCurve> = if models.contains(&Model::Closed) && !spec.rule.is_cooperative() {
        theory::noncoop_closed_form(&spec, horizon).ok()
    } else {
        None
    };
    let closed_ss = models
        .contains(&Model::Closed)
        .then(|| closed_form_steady_state(&spec))
        .flatten();
    let sim = models.contains(&Model::Sim).then(|| simulate(&spec, workers)).transpose()?;

    let rows = (0..=horizon).map(|n| {
        vec![
            n.to_string(),
            curve_cell(sim.as_ref().map(|r| r.nmsd_db.as_slice()), n),
            curve_cell(exact.as_ref().map(|c| c.nmsd_db.as_slice()), n),
            curve_cell(approx.as_ref().map(|c| c.nmsd_db.as_slice()), n),
            curve_cell(closed.as_ref().map(|c| c.nmsd_db.as_slice()), n),
        ]
    });
    let table = csv(
        &["iteration", "nmsd_db_sim", "nmsd_db_exact", "nmsd_db_approx", "nmsd_db_closed_form"],
        rows,
    );

    let mut cost = CostReport::new(&spec.topology, spec.filter_length, spec.p_zeta);
    if let Some(r) = &sim {
        cost = cost.with_tally(&r.tally);
    }
    let summary = RunSummary {
        tool: TOOL,
        generated_at_unix: unix_time(),
        label: label.clone(),
        models: models.iter().copied().collect(),
        master_seed: spec.master_seed,
        rng: spec.rng.as_str(),
        scenario: ScenarioConfig::from_spec(&spec, Some(label.clone())),
        spectral_radius: rho,
        stability: stability.as_str(),
        mean_stability_bound: theory::mean_stability_bound(spec.sigma_u2, spec.filter_length),
        steady_state_db: SteadyStates {
            sim: sim.as_ref().and_then(|r| r.steady_state_db),
            exact: exact.as_ref().and_then(|c| c.steady_state).map(|s| s.db),
            approx: approx.as_ref().and_then(|c| c.steady_state).map(|s| s.db),
            closed_form: closed_ss.map(|s| s.db),
        },
        simulation: sim.as_ref().map(|r| SimulationSummary {
            realizations: r.realizations,
            diverged: r.diverged,
            diverged_fraction: r.diverged_fraction,
        }),
        cost,
    };

    write_file(&args.out.join("curves.csv"), &table)?;
    write_file(&args.out.join("scenario.toml"), &summary.scenario.to_toml_string())?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Config(e.to_string()))?;
    write_file(&args.out.join("summary.json"), &(json + "\n"))?;

    println!(
        "{label}: rho(Phi) = {} ({}), wrote {}",
        sig6(Some(rho)),
        stability.as_str(),
        args.out.display()
    );
    if args.require_stable && stability != Stability::Stable {
        return Err(Failure::Unstable(format!(
            "{label} is not mean-square stable: spectral radius {rho}"
        )));
    }
    Ok(())
}

fn emit(out: Option<&Path>, file: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => write_file(&dir.join(file), text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn sweep_pzeta(args: &SweepArgs, workers: Option<usize>) -> Result<(), Failure> {
    let (spec, label) = load_spec(&args.source, Some(&args.overrides))?;
    let models = parse_models(&args.models)?;
    let grid = parse_grid(&args.pzeta_grid)?;
    let radii = theory::stability_sweep(&spec, &grid)?;

    let mut rows = Vec::with_capacity(grid.len());
    let mut unstable = Vec::new();
    for (p, rho) in radii {
        let point = spec.clone().with_p_zeta(p);
        let stability = Stability::classify(rho);
        if stability != Stability::Stable {
            unstable.push(p);
        }
        let theory_cells = |m: Model| -> Result<Option<f64>, Failure> {
            if args.mode != SweepMode::SteadyState || !models.contains(&m) {
                return Ok(None);
            }
            let value = match m {
                Model::Exact => steady(theory::exact_steady_state(&point))?,
                Model::Approx => steady(theory::approx_steady_state(&point))?,
                Model::Closed => closed_form_steady_state(&point),
                Model::Sim => None,
            };
            Ok(value.map(|s| s.db))
        };
        let (sim_db, diverged) = if models.contains(&Model::Sim) {
            let r = simulate(&point, workers)?;
            (r.steady_state_db, Some(r.diverged_fraction))
        } else {
            (None, None)
        };
        rows.push(vec![
            sig6(Some(p)),
            sig6(Some(rho)),
            stability.as_str().to_string(),
            sig6(theory_cells(Model::Exact)?),
            sig6(theory_cells(Model::Approx)?),
            sig6(theory_cells(Model::Closed)?),
            sig6(sim_db),
            sig6(diverged),
        ]);
    }
    let table = csv(
        &[
            "p_zeta",
            "spectral_radius",
            "stability",
            "ss_db_exact",
            "ss_db_approx",
            "ss_db_closed_form",
            "ss_db_sim",
            "diverged_fraction",
        ],
        rows,
    );
    emit(args.out.as_deref(), "sweep.csv", &table)?;
    if args.require_stable && !unstable.is_empty() {
        return Err(Failure::Unstable(format!(
            "{label}: not mean-square stable at p_zeta = {unstable:?}"
        )));
    }
    Ok(())
}

/// Instability of a single point is a table entry, not an error.
fn steady(result: diffsamp_core::Result<SteadyState>) -> Result<Option<SteadyState>, Failure> {
    match result {
        Ok(s) => Ok(Some(s)),
        Err(diffsamp_core::Error::NotStable { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn cost_report(args: &CostArgs) -> Result<(), Failure> {
    let (spec, _) = load_spec(&args.source, None)?;
    let grid = parse_grid(&args.pzeta_grid)?;
    let rows = grid.iter().map(|&p| {
        let r = CostReport::new(&spec.topology, spec.filter_length, p);
        vec![
            sig6(Some(p)),
            count(r.network_expected),
            count(r.savings_expected),
            count(r.savings_closed_form),
        ]
    });
    let table = csv(&["p_zeta", "mult_total", "mult_saved", "mult_saved_closed_form"], rows);
    emit(args.out.as_deref(), "cost.csv", &table)
}

pub fn validate_config(source: &Source) -> Result<(), Failure> {
    let (cfg, label) = source.load()?;
    let issues: Vec<Issue> = cfg.check();
    if issues.is_empty() {
        println!("{label}: ok");
        return Ok(());
    }
    for issue in &issues {
        println!("{label}: {issue}");
    }
    let errors = issues.iter().filter(|i| i.severity == Severity::Error).count();
    if errors > 0 {
        return Err(Failure::Config(format!("{label}: {errors} error(s)")));
    }
    Ok(())
}
