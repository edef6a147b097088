//! Differential Evolution search over portfolio space, the simulation-backed
//! fitness evaluation, and the cost-parameter sensitivity sweep.

use crate::cost::{annualize_portfolio, lcoe_breakdown, CostBreakdown};
use crate::dispatch::{reliability, simulate_ctx, Portfolio, SimContext, SimOptions};
use crate::error::CoreError;
use crate::scenario::{Scenario, TechnologyCosts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DIFFERENTIAL_WEIGHT: f64 = 0.8;
pub const DEFAULT_CROSSOVER_RATE: f64 = 0.9;
pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e6;

/// DE/rand/1/bin configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population_size: usize,
    pub max_generations: usize,
    /// Differential weight F.
    pub differential_weight: f64,
    /// Crossover rate CR.
    pub crossover_rate: f64,
    pub seed: u64,
    /// Stop when the best total improves by less than
    /// `convergence_tolerance` over this many generations (0 disables).
    pub convergence_window: usize,
    pub convergence_tolerance: f64,
    /// $/MWh per unit of unserved fraction above the reliability limit.
    pub penalty_weight: f64,
}

impl DeConfig {
    pub fn for_dimension(dim: usize, seed: u64) -> Self {
        DeConfig {
            population_size: (10 * dim).max(16),
            max_generations: 200,
            differential_weight: DEFAULT_DIFFERENTIAL_WEIGHT,
            crossover_rate: DEFAULT_CROSSOVER_RATE,
            seed,
            convergence_window: 40,
            convergence_tolerance: 1e-4,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), CoreError> {
        if self.population_size < 4 {
            return Err(CoreError::InvalidOptimizerConfig(
                "population must be at least 4 (three distinct donors plus the target)".into(),
            ));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(CoreError::InvalidOptimizerConfig(
                "differential weight must be in (0, 2]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(CoreError::InvalidOptimizerConfig(
                "crossover rate must be in [0, 1]".into(),
            ));
        }
        if dim == 0 {
            return Err(CoreError::InvalidOptimizerConfig(
                "decision vector is empty".into(),
            ));
        }
        Ok(())
    }
}

/// Fitness of one portfolio: levelised cost plus a continuous reliability
/// penalty. `penalty` is zero exactly when the unserved fraction is within
/// the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub lcoe: f64,
    pub unserved_fraction: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Continuous reliability penalty: zero exactly when the unserved fraction
/// is within the limit, then linear in the excess (no feasibility cliff).
pub fn reliability_penalty(unserved_fraction: f64, reliability_limit: f64, weight: f64) -> f64 {
    weight * (unserved_fraction - reliability_limit).max(0.0)
}

/// Runs the full evaluation pipeline (simulate → cost breakdown →
/// reliability → penalty) for one portfolio.
pub fn evaluate(
    ctx: &SimContext,
    portfolio: &Portfolio,
    penalty_weight: f64,
    opts: &SimOptions,
) -> Result<Fitness, CoreError> {
    let dispatch = simulate_ctx(ctx, portfolio, opts)?;
    let rel = reliability(&dispatch);
    let annualized = annualize_portfolio(portfolio, ctx.scenario, &ctx.topo);
    let lcoe = match lcoe_breakdown(&annualized, ctx.scenario, &dispatch) {
        Ok(b) => b.lcoe,
        Err(CoreError::ZeroDeliveredEnergy) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let penalty = reliability_penalty(
        rel.overall_fraction,
        ctx.scenario.reliability_limit,
        penalty_weight,
    );
    Ok(Fitness {
        lcoe,
        unserved_fraction: rel.overall_fraction,
        penalty,
        total: lcoe + penalty,
    })
}

/// Full evaluation detail for reporting a final portfolio.
pub fn evaluate_detailed(
    ctx: &SimContext,
    portfolio: &Portfolio,
    penalty_weight: f64,
    opts: &SimOptions,
) -> Result<(Fitness, CostBreakdown, crate::dispatch::DispatchResult), CoreError> {
    let dispatch = simulate_ctx(ctx, portfolio, opts)?;
    let rel = reliability(&dispatch);
    let annualized = annualize_portfolio(portfolio, ctx.scenario, &ctx.topo);
    let breakdown = lcoe_breakdown(&annualized, ctx.scenario, &dispatch)?;
    let penalty = reliability_penalty(
        rel.overall_fraction,
        ctx.scenario.reliability_limit,
        penalty_weight,
    );
    let fitness = Fitness {
        lcoe: breakdown.lcoe,
        unserved_fraction: rel.overall_fraction,
        penalty,
        total: breakdown.lcoe + penalty,
    };
    Ok((fitness, breakdown, dispatch))
}

/// Maps the flat decision vector onto a portfolio:
/// `[pv per zone..., wind per zone..., storage power per region...,
/// storage energy per region..., link capacities...]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionLayout {
    pub zones: usize,
    pub regions: usize,
    pub links: usize,
}

impl DecisionLayout {
    pub fn of(scenario: &Scenario) -> Self {
        DecisionLayout {
            zones: scenario.zone_count(),
            regions: scenario.regions.len(),
            links: scenario.interconnectors.len(),
        }
    }

    pub fn dimension(&self) -> usize {
        2 * self.zones + 2 * self.regions + self.links
    }

    /// Decodes a decision vector. Storage energy is lifted to at least one
    /// interval's worth of the chosen power so every decoded portfolio is
    /// feasible.
    pub fn decode(&self, x: &[f64]) -> Portfolio {
        let (z, r) = (self.zones, self.regions);
        let pv_gw = x[0..z].to_vec();
        let wind_gw = x[z..2 * z].to_vec();
        let storage_power_gw = x[2 * z..2 * z + r].to_vec();
        let mut storage_energy_gwh = x[2 * z + r..2 * z + 2 * r].to_vec();
        for (e, p) in storage_energy_gwh.iter_mut().zip(&storage_power_gw) {
            *e = e.max(p * crate::calendar::HOURS_PER_INTERVAL);
        }
        let link_capacity_gw = x[2 * z + 2 * r..].to_vec();
        Portfolio {
            pv_gw,
            wind_gw,
            storage_power_gw,
            storage_energy_gwh,
            link_capacity_gw,
        }
    }

    pub fn encode(&self, p: &Portfolio) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dimension());
        x.extend_from_slice(&p.pv_gw);
        x.extend_from_slice(&p.wind_gw);
        x.extend_from_slice(&p.storage_power_gw);
        x.extend_from_slice(&p.storage_energy_gwh);
        x.extend_from_slice(&p.link_capacity_gw);
        x
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxGenerations,
    Converged,
    /// The population collapsed to a single point; rand/1 mutation can no
    /// longer move it.
    Stagnated,
}

/// Resumable optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub generation: usize,
    pub evaluations: usize,
    pub rng: ChaCha8Rng,
    pub population: Vec<Vec<f64>>,
    pub fitness: Vec<Fitness>,
    pub history: Vec<f64>,
}

/// Result of a DE run.
#[derive(Debug, Clone)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_fitness: Fitness,
    /// Best total after each generation (including the initial population),
    /// non-increasing.
    pub history: Vec<f64>,
    pub generations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub final_state: Checkpoint,
}

/// Classic DE/rand/1/bin with reflective bound handling and greedy
/// selection, deterministic for a fixed seed under any batch-evaluation
/// parallelism (all random draws happen on one sequential stream; batches
/// are reduced in index order).
///
/// `eval_batch` receives the candidate vectors of one generation and must
/// return one fitness per candidate, in order.
pub fn de_optimize<E>(
    config: &DeConfig,
    bounds: &[(f64, f64)],
    mut eval_batch: E,
    resume: Option<Checkpoint>,
    mut on_generation: impl FnMut(usize, f64, &Checkpoint),
) -> Result<DeResult, CoreError>
where
    E: FnMut(&[Vec<f64>]) -> Vec<Fitness>,
{
    let dim = bounds.len();
    config.validate(dim)?;
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(CoreError::InvalidOptimizerConfig(format!(
                "bad bounds for variable {i}: [{lo}, {hi}]"
            )));
        }
    }
    let np = config.population_size;

    let (mut rng, mut population, mut fitness, mut history, start_gen, mut evaluations) =
        match resume {
            Some(cp) => (
                cp.rng,
                cp.population,
                cp.fitness,
                cp.history,
                cp.generation,
                cp.evaluations,
            ),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let population: Vec<Vec<f64>> = (0..np)
                    .map(|_| {
                        bounds
                            .iter()
                            .map(|&(lo, hi)| {
                                if lo == hi {
                                    lo
                                } else {
                                    rng.random_range(lo..hi)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let fitness = eval_batch(&population);
                debug_assert_eq!(fitness.len(), np);
                let best = fitness
                    .iter()
                    .map(|f| f.total)
                    .fold(f64::INFINITY, f64::min);
                (rng, population, fitness, vec![best], 0, np)
            }
        };

    let mut termination = Termination::MaxGenerations;
    let mut generation = start_gen;
    let mut trials: Vec<Vec<f64>> = Vec::with_capacity(np);

    while generation < config.max_generations {
        // Degenerate population: every member identical.
        let collapsed = population.iter().all(|m| m == &population[0]);
        if collapsed {
            termination = Termination::Stagnated;
            break;
        }

        trials.clear();
        for target in 0..np {
            let (a, b, c) = pick_distinct(&mut rng, np, target);
            let forced_gene = rng.random_range(0..dim);
            let mut trial = Vec::with_capacity(dim);
            for j in 0..dim {
                let cross = rng.random_range(0.0..1.0) < config.crossover_rate || j == forced_gene;
                let gene = if cross {
                    let v = population[a][j]
                        + config.differential_weight * (population[b][j] - population[c][j]);
                    reflect_into(v, bounds[j].0, bounds[j].1)
                } else {
                    population[target][j]
                };
                trial.push(gene);
            }
            trials.push(trial);
        }

        let trial_fitness = eval_batch(&trials);
        debug_assert_eq!(trial_fitness.len(), np);
        evaluations += np;

        for i in 0..np {
            if trial_fitness[i].total <= fitness[i].total {
                population[i] = trials[i].clone();
                fitness[i] = trial_fitness[i];
            }
        }
        generation += 1;

        let best = fitness
            .iter()
            .map(|f| f.total)
            .fold(f64::INFINITY, f64::min);
        history.push(best);

        let checkpoint = Checkpoint {
            generation,
            evaluations,
            rng: rng.clone(),
            population: population.clone(),
            fitness: fitness.clone(),
            history: history.clone(),
        };
        on_generation(generation, best, &checkpoint);

        if config.convergence_window > 0 && history.len() > config.convergence_window {
            let then = history[history.len() - 1 - config.convergence_window];
            if then - best < config.convergence_tolerance {
                termination = Termination::Converged;
                break;
            }
        }
    }

    let best_idx = (0..np)
        .min_by(|&i, &j| fitness[i].total.partial_cmp(&fitness[j].total).unwrap())
        .unwrap();
    Ok(DeResult {
        best: population[best_idx].clone(),
        best_fitness: fitness[best_idx],
        history: history.clone(),
        generations: generation,
        evaluations,
        termination,
        final_state: Checkpoint {
            generation,
            evaluations,
            rng,
            population,
            fitness,
            history,
        },
    })
}

fn pick_distinct(rng: &mut ChaCha8Rng, np: usize, target: usize) -> (usize, usize, usize) {
    let mut pick = |exclude: &[usize]| loop {
        let k = rng.random_range(0..np);
        if !exclude.contains(&k) {
            return k;
        }
    };
    let a = pick(&[target]);
    let b = pick(&[target, a]);
    let c = pick(&[target, a, b]);
    (a, b, c)
}

// Reflects an out-of-bounds gene back into [lo, hi]; falls back to clamping
// after repeated overshoot.
fn reflect_into(mut v: f64, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    for _ in 0..8 {
        if v < lo {
            v = lo + (lo - v);
        } else if v > hi {
            v = hi - (v - hi);
        } else {
            return v;
        }
    }
    v.clamp(lo, hi)
}

/// Scalable cost assumptions for the sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostParameter {
    PvCapital,
    WindCapital,
    StoragePowerCapital,
    StorageEnergyCapital,
    HvdcCost,
    HvacCost,
    DiscountRate,
    HydroBioPrice,
}

impl CostParameter {
    pub const ALL: [CostParameter; 8] = [
        CostParameter::PvCapital,
        CostParameter::WindCapital,
        CostParameter::StoragePowerCapital,
        CostParameter::StorageEnergyCapital,
        CostParameter::HvdcCost,
        CostParameter::HvacCost,
        CostParameter::DiscountRate,
        CostParameter::HydroBioPrice,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CostParameter::PvCapital => "pv_capital",
            CostParameter::WindCapital => "wind_capital",
            CostParameter::StoragePowerCapital => "storage_power_capital",
            CostParameter::StorageEnergyCapital => "storage_energy_capital",
            CostParameter::HvdcCost => "hvdc_cost",
            CostParameter::HvacCost => "hvac_cost",
            CostParameter::DiscountRate => "discount_rate",
            CostParameter::HydroBioPrice => "hydro_bio_price",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.label() == label)
    }

    /// Returns the cost table with this parameter scaled by `multiplier`.
    pub fn apply(&self, costs: &TechnologyCosts, multiplier: f64) -> TechnologyCosts {
        let mut c = costs.clone();
        match self {
            CostParameter::PvCapital => c.pv.capital_per_kw *= multiplier,
            CostParameter::WindCapital => c.wind.capital_per_kw *= multiplier,
            CostParameter::StoragePowerCapital => c.storage.power_per_kw *= multiplier,
            CostParameter::StorageEnergyCapital => c.storage.energy_per_kwh *= multiplier,
            CostParameter::HvdcCost => {
                c.hvdc.overhead_per_mw_km *= multiplier;
                c.hvdc.overhead_converter_per_mw *= multiplier;
                c.hvdc.submarine_per_kw *= multiplier;
            }
            CostParameter::HvacCost => c.hvac.per_kw *= multiplier,
            CostParameter::DiscountRate => c.discount_rate_real *= multiplier,
            CostParameter::HydroBioPrice => c.hydro_bio_price_per_mwh *= multiplier,
        }
        c
    }
}

/// One sensitivity observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub parameter: &'static str,
    pub multiplier: f64,
    pub lcoe: f64,
}

fn multipliers(steps: usize) -> Vec<f64> {
    let steps = steps.max(2);
    (0..steps)
        .map(|i| 0.75 + 0.5 * i as f64 / (steps - 1) as f64)
        .collect()
}

// Tornado order: parameters sorted by their LCOE range, widest first.
fn tornado_order(mut groups: Vec<(f64, Vec<SensitivityRow>)>) -> Vec<SensitivityRow> {
    groups.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    groups.into_iter().flat_map(|(_, rows)| rows).collect()
}

/// Re-evaluates the LCOE of a fixed portfolio with each cost parameter
/// scaled across `steps` multipliers covering [0.75, 1.25]. Rows come back
/// tornado-ordered.
///
/// Dispatch is cost-independent, so the simulation runs once.
pub fn sensitivity_sweep(
    ctx: &SimContext,
    portfolio: &Portfolio,
    parameters: &[CostParameter],
    steps: usize,
) -> Result<Vec<SensitivityRow>, CoreError> {
    let dispatch = simulate_ctx(ctx, portfolio, &SimOptions::default())?;
    let mut groups: Vec<(f64, Vec<SensitivityRow>)> = Vec::new();
    for &param in parameters {
        let mut rows = Vec::new();
        for m in multipliers(steps) {
            let mut scenario = ctx.scenario.clone();
            scenario.costs = param.apply(&ctx.scenario.costs, m);
            let annualized = annualize_portfolio(portfolio, &scenario, &ctx.topo);
            let breakdown = lcoe_breakdown(&annualized, &scenario, &dispatch)?;
            rows.push(SensitivityRow {
                parameter: param.label(),
                multiplier: m,
                lcoe: breakdown.lcoe,
            });
        }
        let lo = rows.iter().map(|r| r.lcoe).fold(f64::INFINITY, f64::min);
        let hi = rows
            .iter()
            .map(|r| r.lcoe)
            .fold(f64::NEG_INFINITY, f64::max);
        groups.push((hi - lo, rows));
    }
    Ok(tornado_order(groups))
}

/// Sensitivity sweep that re-optimizes the portfolio for every scaled cost
/// table instead of holding it fixed. Each cell runs the configured DE from
/// scratch with the same seed.
pub fn sensitivity_sweep_reoptimized(
    scenario: &Scenario,
    traces: &crate::trace::TraceSet,
    profiles: &crate::demand::ProfileSet,
    parameters: &[CostParameter],
    steps: usize,
    config: &DeConfig,
    bounds: &[(f64, f64)],
) -> Result<Vec<SensitivityRow>, CoreError> {
    let layout = DecisionLayout::of(scenario);
    let mut groups: Vec<(f64, Vec<SensitivityRow>)> = Vec::new();
    for &param in parameters {
        let mut rows = Vec::new();
        for m in multipliers(steps) {
            let mut scaled = scenario.clone();
            scaled.costs = param.apply(&scenario.costs, m);
            let ctx = SimContext::new(&scaled, traces, profiles)?;
            let opts = SimOptions::default();
            let result = de_optimize(
                config,
                bounds,
                |batch| {
                    batch
                        .iter()
                        .map(|x| {
                            evaluate(&ctx, &layout.decode(x), config.penalty_weight, &opts)
                                .expect("evaluation failed on an in-bounds portfolio")
                        })
                        .collect()
                },
                None,
                |_, _, _| {},
            )?;
            rows.push(SensitivityRow {
                parameter: param.label(),
                multiplier: m,
                lcoe: result.best_fitness.lcoe,
            });
        }
        let lo = rows.iter().map(|r| r.lcoe).fold(f64::INFINITY, f64::min);
        let hi = rows
            .iter()
            .map(|r| r.lcoe)
            .fold(f64::NEG_INFINITY, f64::max);
        groups.push((hi - lo, rows));
    }
    Ok(tornado_order(groups))
}
