//! Implementations behind the CLI subcommands.

use crate::config::{self, ScenarioDoc};
use crate::csvio;
use crate::summary::{
    self, EnergySummary, GenerationShares, PortfolioSummary, ReliabilitySummary, RunSummary,
    RuntimeSummary, YearReliability,
};
use crate::{AppError, AppResult};
use anyhow::{anyhow, Context};
use gridopt_core::calendar::MEAN_HOURS_PER_YEAR;
use gridopt_core::demand::ProfileSet;
use gridopt_core::dispatch::{
    reliability, simulate_ctx, DispatchResult, Portfolio, SimContext, SimOptions,
};
use gridopt_core::optimizer::{
    de_optimize, evaluate, evaluate_detailed, sensitivity_sweep, Checkpoint, CostParameter,
    DecisionLayout, Fitness, Termination,
};
use gridopt_core::scenario::validate_scenario;
use gridopt_core::trace::TraceSet;
use std::path::{Path, PathBuf};

/// Loaded-and-validated run environment shared by the commands.
pub struct RunEnv {
    pub doc: ScenarioDoc,
    pub traces: TraceSet,
    pub profiles: ProfileSet,
    pub inputs_hash: String,
}

pub fn load_env(scenario_arg: &str) -> AppResult<RunEnv> {
    let path = config::resolve_scenario_path(scenario_arg).map_err(AppError::usage)?;
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("read {}", path.display()))
        .map_err(AppError::runtime)?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let doc = config::parse_scenario(&text, &base_dir).map_err(AppError::validation)?;
    let (traces, trace_report) = doc.load_traces().map_err(AppError::runtime)?;
    for (id, count) in &trace_report.clamped {
        eprintln!("warning: trace '{id}': {count} capacity-factor values clamped to 1.0");
    }
    let (profiles, profile_files) = doc.load_profiles().map_err(AppError::runtime)?;
    let mut files = trace_report.files;
    files.extend(profile_files);
    let inputs_hash = config::content_hash(text.as_bytes(), &files).map_err(AppError::runtime)?;
    Ok(RunEnv {
        doc,
        traces,
        profiles,
        inputs_hash,
    })
}

/// `validate`: parse, assemble and report violations.
pub fn cmd_validate(scenario_arg: &str, check_traces: bool) -> AppResult<()> {
    let path = config::resolve_scenario_path(scenario_arg).map_err(AppError::usage)?;
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("read {}", path.display()))
        .map_err(AppError::runtime)?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let doc = config::parse_scenario_lenient(&text, &base_dir).map_err(AppError::validation)?;
    let violations = validate_scenario(&doc.scenario);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation [{}]: {}", v.code, v.message);
        }
        return Err(AppError::validation(anyhow!(
            "{} violation(s)",
            violations.len()
        )));
    }
    if check_traces {
        let (_, report) = doc.load_traces().map_err(AppError::runtime)?;
        for (id, count) in &report.clamped {
            eprintln!("warning: trace '{id}': {count} capacity-factor values clamped to 1.0");
        }
    }
    println!("scenario '{}' is valid", doc.scenario.id);
    Ok(())
}

fn build_ctx<'a>(env: &'a RunEnv) -> AppResult<SimContext<'a>> {
    SimContext::new(&env.doc.scenario, &env.traces, &env.profiles)
        .map_err(|e| AppError::runtime(anyhow!(e)))
}

#[allow(clippy::too_many_arguments)]
fn dispatch_to_summary(
    env: &RunEnv,
    command: &str,
    seed: u64,
    portfolio: &Portfolio,
    fitness: &Fitness,
    breakdown: &gridopt_core::cost::CostBreakdown,
    dispatch: &DispatchResult,
    runtime: RuntimeSummary,
) -> RunSummary {
    let scenario = &env.doc.scenario;
    let rel = reliability(dispatch);
    let years = dispatch.accounted_hours / MEAN_HOURS_PER_YEAR;
    let per_yr = |gwh: f64| gwh / 1e3 / years;
    let gen_total =
        dispatch.totals.pv_gwh + dispatch.totals.wind_gwh + dispatch.totals.hydro_bio_gwh;
    let share = |x: f64| if gen_total > 0.0 { x / gen_total } else { 0.0 };
    let pf = config::portfolio_to_file(portfolio, scenario);
    RunSummary {
        schema_version: 1,
        scenario_id: scenario.id.clone(),
        command: command.to_string(),
        seed,
        inputs_hash: env.inputs_hash.clone(),
        portfolio: PortfolioSummary {
            pv_gw: pf.pv_gw,
            wind_gw: pf.wind_gw,
            storage_power_gw: pf.storage_power_gw,
            storage_energy_gwh: pf.storage_energy_gwh,
            link_capacity_gw: pf.link_capacity_gw,
        },
        storage_total_gw: portfolio.storage_power_gw.iter().sum(),
        storage_total_gwh: portfolio.storage_energy_gwh.iter().sum(),
        cost: breakdown.into(),
        breakdown_identity_residual: breakdown.identity_residual(),
        reliability: ReliabilitySummary {
            unserved_fraction: fitness.unserved_fraction,
            worst_interval_gw: rel.worst_interval_gw,
            per_year: rel
                .per_year
                .iter()
                .map(|&(year, f)| YearReliability {
                    year,
                    unserved_fraction: f,
                })
                .collect(),
        },
        generation_shares: GenerationShares {
            pv: share(dispatch.totals.pv_gwh),
            wind: share(dispatch.totals.wind_gwh),
            hydro_bio: share(dispatch.totals.hydro_bio_gwh),
        },
        energy: EnergySummary {
            demand_twh_per_yr: per_yr(dispatch.totals.demand_gwh + dispatch.totals.ev_charge_gwh),
            delivered_twh_per_yr: per_yr(dispatch.totals.delivered_gwh()),
            unserved_twh_per_yr: per_yr(dispatch.totals.unserved_gwh),
            spill_twh_per_yr: per_yr(dispatch.totals.spill_gwh),
            storage_discharge_twh_per_yr: per_yr(dispatch.totals.storage_discharge_gwh),
            ev_charge_twh_per_yr: per_yr(dispatch.totals.ev_charge_gwh),
            line_loss_twh_per_yr: per_yr(dispatch.totals.line_loss_gwh),
        },
        runtime,
    }
}

pub struct SimulateArgs {
    pub scenario: String,
    pub portfolio: PathBuf,
    pub out: Option<PathBuf>,
    pub dispatch_csv: Option<PathBuf>,
    pub window: Option<(usize, usize)>,
    pub burn_in_years: u32,
}

/// `simulate`: one chronological run of a fixed portfolio.
pub fn cmd_simulate(args: &SimulateArgs) -> AppResult<()> {
    let env = load_env(&args.scenario)?;
    let text = std::fs::read_to_string(&args.portfolio)
        .with_context(|| format!("read {}", args.portfolio.display()))
        .map_err(AppError::runtime)?;
    let portfolio =
        config::parse_portfolio(&text, &env.doc.scenario).map_err(AppError::validation)?;
    let violations = portfolio.validate(&env.doc.scenario);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation [{}]: {}", v.code, v.message);
        }
        return Err(AppError::validation(anyhow!("invalid portfolio")));
    }

    let ctx = build_ctx(&env)?;
    let opts = SimOptions {
        record_intervals: args.dispatch_csv.is_some(),
        burn_in_years: args.burn_in_years,
    };
    let dispatch =
        simulate_ctx(&ctx, &portfolio, &opts).map_err(|e| AppError::runtime(anyhow!(e)))?;
    let annualized =
        gridopt_core::cost::annualize_portfolio(&portfolio, &env.doc.scenario, &ctx.topo);
    let breakdown = gridopt_core::cost::lcoe_breakdown(&annualized, &env.doc.scenario, &dispatch)
        .map_err(|e| AppError::runtime(anyhow!(e)))?;
    let rel = reliability(&dispatch);
    let fitness = Fitness {
        lcoe: breakdown.lcoe,
        unserved_fraction: rel.overall_fraction,
        penalty: 0.0,
        total: breakdown.lcoe,
    };

    if let Some(csv_path) = &args.dispatch_csv {
        let window = args.window.unwrap_or((0, dispatch.horizon));
        csvio::write_dispatch_csv(&dispatch, &ctx.topo, env.traces.start(), window, csv_path)
            .map_err(AppError::runtime)?;
        eprintln!("dispatch ledger written to {}", csv_path.display());
    }

    let runtime = RuntimeSummary::for_simulate(dispatch.horizon);
    let summary = dispatch_to_summary(
        &env, "simulate", 0, &portfolio, &fitness, &breakdown, &dispatch, runtime,
    );
    emit_summary(&summary, args.out.as_deref())
}

pub struct OptimizeArgs {
    pub scenario: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub generations: Option<usize>,
    pub burn_in_years: u32,
    pub history: Option<PathBuf>,
    pub quiet: bool,
}

/// `optimize`: Differential Evolution over the scenario's decision space.
pub fn cmd_optimize(args: &OptimizeArgs) -> AppResult<()> {
    let env = load_env(&args.scenario)?;
    let (mut de_config, bounds) = env
        .doc
        .optimizer_config(args.seed)
        .map_err(AppError::validation)?;
    if let Some(g) = args.generations {
        de_config.max_generations = g;
    }
    let ctx = build_ctx(&env)?;
    let layout = DecisionLayout::of(&env.doc.scenario);
    let sim_opts = SimOptions {
        record_intervals: false,
        burn_in_years: args.burn_in_years,
    };

    let resume: Option<Checkpoint> = match &args.checkpoint {
        Some(path) if path.is_file() => {
            let text = std::fs::read_to_string(path).map_err(|e| AppError::runtime(anyhow!(e)))?;
            let cp: Checkpoint = serde_json::from_str(&text)
                .with_context(|| format!("parse checkpoint {}", path.display()))
                .map_err(AppError::runtime)?;
            eprintln!("resuming from checkpoint at generation {}", cp.generation);
            Some(cp)
        }
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| AppError::runtime(anyhow!(e)))?;

    let penalty_weight = de_config.penalty_weight;
    let eval_batch = |batch: &[Vec<f64>]| -> Vec<Fitness> {
        use rayon::prelude::*;
        pool.install(|| {
            batch
                .par_iter()
                .map(|x| {
                    let portfolio = layout.decode(x);
                    evaluate(&ctx, &portfolio, penalty_weight, &sim_opts)
                        .expect("evaluation failed on an in-bounds portfolio")
                })
                .collect()
        })
    };

    let checkpoint_path = args.checkpoint.clone();
    let quiet = args.quiet;
    let result = de_optimize(
        &de_config,
        &bounds,
        eval_batch,
        resume,
        |generation, best, cp| {
            if !quiet && (generation % 10 == 0 || generation == 1) {
                eprintln!("generation {generation:4}: best total {best:.4} $/MWh");
            }
            if let Some(path) = &checkpoint_path {
                if let Ok(json) = serde_json::to_string(cp) {
                    let _ = std::fs::write(path, json);
                }
            }
        },
    )
    .map_err(|e| AppError::validation(anyhow!(e)))?;

    let best_portfolio = layout.decode(&result.best);
    let (fitness, breakdown, dispatch) =
        evaluate_detailed(&ctx, &best_portfolio, penalty_weight, &sim_opts)
            .map_err(|e| AppError::runtime(anyhow!(e)))?;

    if let Some(path) = &args.history {
        let mut w = csv::Writer::from_path(path).map_err(|e| AppError::runtime(anyhow!(e)))?;
        w.write_record(["generation", "best_total"]).ok();
        for (g, best) in result.history.iter().enumerate() {
            w.write_record([g.to_string(), format!("{best}")]).ok();
        }
        w.flush().ok();
    }

    let termination = match result.termination {
        Termination::MaxGenerations => "max_generations",
        Termination::Converged => "converged",
        Termination::Stagnated => "stagnated",
    };
    let runtime = RuntimeSummary::for_optimize(
        result.generations,
        result.evaluations,
        dispatch.horizon * result.evaluations,
        termination,
        &fitness,
    );
    let summary = dispatch_to_summary(
        &env,
        "optimize",
        de_config.seed,
        &best_portfolio,
        &fitness,
        &breakdown,
        &dispatch,
        runtime,
    );
    emit_summary(&summary, args.out.as_deref())
}

pub struct SensitivityArgs {
    pub scenario: String,
    pub portfolio: PathBuf,
    pub steps: usize,
    pub parameters: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub reoptimize: bool,
}

/// `sensitivity`: LCOE under ±25% single-parameter cost scaling.
pub fn cmd_sensitivity(args: &SensitivityArgs) -> AppResult<()> {
    let env = load_env(&args.scenario)?;
    let text = std::fs::read_to_string(&args.portfolio)
        .with_context(|| format!("read {}", args.portfolio.display()))
        .map_err(AppError::runtime)?;
    let portfolio =
        config::parse_portfolio(&text, &env.doc.scenario).map_err(AppError::validation)?;

    let parameters: Vec<CostParameter> = match &args.parameters {
        None => CostParameter::ALL.to_vec(),
        Some(labels) => labels
            .iter()
            .map(|l| {
                CostParameter::from_label(l)
                    .ok_or_else(|| AppError::usage(anyhow!("unknown sensitivity parameter '{l}'")))
            })
            .collect::<AppResult<_>>()?,
    };

    let rows = if args.reoptimize {
        let (config, bounds) = env
            .doc
            .optimizer_config(None)
            .map_err(AppError::validation)?;
        gridopt_core::optimizer::sensitivity_sweep_reoptimized(
            &env.doc.scenario,
            &env.traces,
            &env.profiles,
            &parameters,
            args.steps,
            &config,
            &bounds,
        )
        .map_err(|e| AppError::runtime(anyhow!(e)))?
    } else {
        let ctx = build_ctx(&env)?;
        sensitivity_sweep(&ctx, &portfolio, &parameters, args.steps)
            .map_err(|e| AppError::runtime(anyhow!(e)))?
    };

    let mut out: Box<dyn std::io::Write> = match &args.out {
        Some(path) => {
            Box::new(std::fs::File::create(path).map_err(|e| AppError::runtime(anyhow!(e)))?)
        }
        None => Box::new(std::io::stdout()),
    };
    writeln!(out, "parameter,multiplier,lcoe").map_err(|e| AppError::runtime(anyhow!(e)))?;
    for row in &rows {
        writeln!(
            out,
            "{},{},{}",
            row.parameter,
            row.multiplier,
            summary::format_sig6(row.lcoe)
        )
        .map_err(|e| AppError::runtime(anyhow!(e)))?;
    }
    Ok(())
}

/// `report`: human-readable rendering of a summary, with an optional
/// balance-identity check over a dispatch ledger.
pub fn cmd_report(summary_path: &Path, dispatch_csv: Option<&Path>) -> AppResult<()> {
    let s = summary::read_summary(summary_path).map_err(AppError::runtime)?;
    println!("scenario        : {}", s.scenario_id);
    println!("command         : {} (seed {})", s.command, s.seed);
    println!("inputs hash     : {}", s.inputs_hash);
    println!("lcoe            : {:>10.2} $/MWh", s.cost.lcoe);
    println!("  lcog          : {:>10.2} $/MWh", s.cost.lcog);
    println!("  lcob storage  : {:>10.2} $/MWh", s.cost.lcob_storage);
    println!(
        "  lcob transmission: {:>7.2} $/MWh",
        s.cost.lcob_transmission
    );
    println!("  lcob spill&loss: {:>9.2} $/MWh", s.cost.lcob_spill_loss);
    println!(
        "storage         : {:.2} GW / {:.2} GWh",
        s.storage_total_gw, s.storage_total_gwh
    );
    println!(
        "unserved        : {:.6}% of demand",
        s.reliability.unserved_fraction * 100.0
    );
    println!(
        "generation mix  : pv {:.1}% / wind {:.1}% / hydro+bio {:.1}%",
        s.generation_shares.pv * 100.0,
        s.generation_shares.wind * 100.0,
        s.generation_shares.hydro_bio * 100.0
    );
    println!(
        "demand          : {:.2} TWh/yr (delivered {:.2})",
        s.energy.demand_twh_per_yr, s.energy.delivered_twh_per_yr
    );
    let residual = s.breakdown_identity_residual;
    if residual.abs() > 1e-6 {
        return Err(AppError::validation(anyhow!(
            "breakdown identity residual {residual} exceeds 1e-6"
        )));
    }
    if let Some(csv_path) = dispatch_csv {
        let rows = csvio::verify_dispatch_csv(csv_path, 1e-6).map_err(AppError::validation)?;
        println!("dispatch ledger : balance identity holds on {rows} rows");
    }
    Ok(())
}

fn emit_summary(summary: &RunSummary, out: Option<&Path>) -> AppResult<()> {
    let json = summary::summary_to_json(summary).map_err(AppError::runtime)?;
    match out {
        Some(path) => {
            std::fs::write(path, &json).map_err(|e| AppError::runtime(anyhow!(e)))?;
            eprintln!("summary written to {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

/// Built-in desk-scale scenario presets.
pub const PRESETS: [(&str, &str); 3] = [
    ("7grids", include_str!("../../../presets/7grids.toml")),
    ("supergrid", include_str!("../../../presets/supergrid.toml")),
    ("smartgrid", include_str!("../../../presets/smartgrid.toml")),
];

/// `preset`: list presets or write one to a file/stdout.
pub fn cmd_preset(name: Option<&str>, out: Option<&Path>) -> AppResult<()> {
    match name {
        None => {
            for (n, _) in PRESETS {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => {
            let Some((_, text)) = PRESETS.iter().find(|(p, _)| *p == n) else {
                return Err(AppError::usage(anyhow!(
                    "unknown preset '{n}' (available: {})",
                    PRESETS
                        .iter()
                        .map(|(p, _)| *p)
                        .collect::<Vec<_>>()
                        .join(", ")
                )));
            };
            match out {
                Some(path) => {
                    std::fs::write(path, text).map_err(|e| AppError::runtime(anyhow!(e)))?;
                    eprintln!("preset '{n}' written to {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
