//! Round-by-round market simulation.
//!
//! One iteration is one complete trade: every SU picks a channel and bids,
//! the channels are matched, both sides are rewarded and update their
//! tables, and the PUs choose the prices for the next round.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{pu_update_pair, LearningParams, PriceDirection, PuAgent, SuAgent};
use crate::error::{Error, Result};
use crate::market::{
    form_bid, match_bids, payoff_gaps, DemandDistribution, MarketConfig, PriceVector, PuId,
    SuSelection, TradeOutcome,
};
use crate::metrics::relative_entropy;

/// Default convergence window.
pub const DEFAULT_WINDOW: usize = 100;
/// Default relative convergence tolerance.
pub const DEFAULT_TOLERANCE: f64 = 0.01;
/// Minimum number of trailing iterations averaged into [`FinalMeans`].
pub const TAIL_LENGTH: usize = 200;

/// Per-iteration log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub pu1_reward: f64,
    pub pu2_reward: f64,
    pub total_pu_reward: f64,
    pub mean_su_reward: f64,
    /// Price levels played this round.
    pub pu1_level: usize,
    pub pu2_level: usize,
    /// `(M1, M2)`.
    pub sale_counts: (usize, usize),
    /// Mean over SUs of `KL(true demand || estimate)` after this round's updates.
    pub kl_mean: f64,
}

/// Tail-averaged rewards of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FinalMeans {
    pub pu1: f64,
    pub pu2: f64,
    pub su: f64,
}

impl FinalMeans {
    pub fn total_pu(&self) -> f64 {
        self.pu1 + self.pu2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: MarketConfig,
    pub records: Vec<IterationRecord>,
    pub converged_at: Option<usize>,
    pub final_means: FinalMeans,
}

impl RunResult {
    pub fn total_pu_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_pu_reward).collect()
    }
}

/// How [`run_episode_with`] decides convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriteria {
    pub window: usize,
    pub tolerance: f64,
    /// Stop as soon as convergence is detected.
    pub early_stop: bool,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria {
            window: DEFAULT_WINDOW,
            tolerance: DEFAULT_TOLERANCE,
            early_stop: false,
        }
    }
}

/// Full mutable state of one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: MarketConfig,
    params: LearningParams,
    sus: Vec<SuAgent>,
    pu1: PuAgent,
    pu2: PuAgent,
    directions: (PriceDirection, PriceDirection),
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Simulation {
    /// Seeds the rng from `config.seed`, draws every SU's demand from the flat
    /// Dirichlet, and picks both opening prices uniformly.
    pub fn new(config: MarketConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.total_channels();
        let sus = (0..config.num_sus)
            .map(|id| Ok(SuAgent::new(id, DemandDistribution::sample_uniform(n, &mut rng)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut pu1 = PuAgent::new(PuId::One, config.price_levels, 0)?;
        let mut pu2 = PuAgent::new(PuId::Two, config.price_levels, 0)?;
        // Q starts flat, so a free choice is a uniform draw.
        pu1.select_price(PriceDirection::Free, 0, config.temperature, &mut rng)?;
        pu2.select_price(PriceDirection::Free, 0, config.temperature, &mut rng)?;
        Self::from_parts(config, sus, pu1, pu2, rng)
    }

    /// Assembles a simulation from explicit agents, e.g. for hand-built scenarios.
    pub fn from_parts(
        config: MarketConfig,
        sus: Vec<SuAgent>,
        pu1: PuAgent,
        pu2: PuAgent,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let params = LearningParams::new(config.learning_rate, config.temperature)?;
        if sus.len() != config.num_sus {
            return Err(Error::invalid(format!(
                "{} SU agents for num_sus = {}",
                sus.len(),
                config.num_sus
            )));
        }
        let n = config.total_channels();
        if let Some(su) = sus.iter().find(|s| s.q.len() != n || s.true_demand.len() != n) {
            return Err(Error::invalid(format!("SU {} is not sized for {n} channels", su.id)));
        }
        if pu1.id != PuId::One || pu2.id != PuId::Two {
            return Err(Error::invalid("PU agents must be (PU1, PU2)"));
        }
        if pu1.levels() != config.price_levels || pu2.levels() != config.price_levels {
            return Err(Error::invalid("PU price grids do not match price_levels"));
        }
        Ok(Simulation {
            config,
            params,
            sus,
            pu1,
            pu2,
            directions: (PriceDirection::Free, PriceDirection::Free),
            rng,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn sus(&self) -> &[SuAgent] {
        &self.sus
    }

    pub fn pus(&self) -> (&PuAgent, &PuAgent) {
        (&self.pu1, &self.pu2)
    }

    pub fn directions(&self) -> (PriceDirection, PriceDirection) {
        self.directions
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn price_vectors(&self) -> Result<(PriceVector, PriceVector)> {
        let c = self.config.channels_per_pu;
        Ok((
            PriceVector::flat(PuId::One, self.pu1.price(), c)?,
            PriceVector::flat(PuId::Two, self.pu2.price(), c)?,
        ))
    }

    /// Runs one trading round.
    ///
    /// Order: SU choices and bids, matching, rewards, SU updates, PU updates
    /// and directions, next PU prices, KL logging.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let tau = self.params.temperature;
        let alpha = self.params.learning_rate;

        let mut selections = Vec::with_capacity(self.sus.len());
        for su in &mut self.sus {
            let channel = su.select_action(tau, &mut self.rng)?;
            let bid = form_bid(&su.true_demand, channel, self.config.bid_levels)?;
            selections.push(SuSelection {
                su_id: su.id,
                channel,
                bid,
            });
        }

        let (prices1, prices2) = self.price_vectors()?;
        let allocation = match_bids(&selections, &prices1, &prices2, &mut self.rng)?;
        let gaps = payoff_gaps(&allocation.top_bids, &prices1, &prices2)?;
        let outcome = TradeOutcome::settle(
            allocation,
            &selections,
            &prices1,
            &prices2,
            self.config.num_sus,
            self.config.marginal_utility,
            self.config.seller_cost,
        )?;

        for su in &mut self.sus {
            su.update(outcome.su_rewards[&su.id], alpha)?;
        }

        let played = (self.pu1.current_level, self.pu2.current_level);
        let update = pu_update_pair(&mut self.pu1, &mut self.pu2, &outcome, &gaps, alpha)?;
        self.directions = update.directions;
        self.pu1
            .select_price(self.directions.0, played.1, tau, &mut self.rng)?;
        self.pu2
            .select_price(self.directions.1, played.0, tau, &mut self.rng)?;

        let kl_mean = self.mean_kl()?;
        self.iteration += 1;
        Ok(IterationRecord {
            iteration: self.iteration,
            pu1_reward: outcome.pu1_reward,
            pu2_reward: outcome.pu2_reward,
            total_pu_reward: outcome.total_pu_reward,
            mean_su_reward: outcome.mean_su_reward(),
            pu1_level: played.0,
            pu2_level: played.1,
            sale_counts: (
                outcome.allocation.sale_count_pu1,
                outcome.allocation.sale_count_pu2,
            ),
            kl_mean,
        })
    }

    /// Mean over SUs of the divergence between true and estimated demand.
    pub fn mean_kl(&self) -> Result<f64> {
        let tau = self.params.temperature;
        let mut total = 0.0;
        for su in &self.sus {
            let estimate = su.estimate_demand(tau)?;
            total += relative_entropy(su.true_demand.weights(), estimate.weights())?;
        }
        Ok(total / self.sus.len() as f64)
    }
}

/// First `t >= 2W` at which the means of `series[t-W..t]` and
/// `series[t-2W..t-W]` differ by less than `tolerance * max(1, |recent mean|)`.
///
/// Panics if `window < 2` or `tolerance <= 0`.
pub fn detect_convergence(series: &[f64], window: usize, tolerance: f64) -> Option<usize> {
    assert!(window >= 2, "convergence window must be at least 2");
    assert!(tolerance > 0.0, "convergence tolerance must be positive");
    let w = window as f64;
    (2 * window..=series.len()).find(|&t| {
        let recent = series[t - window..t].iter().sum::<f64>() / w;
        let earlier = series[t - 2 * window..t - window].iter().sum::<f64>() / w;
        (recent - earlier).abs() < tolerance * recent.abs().max(1.0)
    })
}

fn tail_means(records: &[IterationRecord], converged_at: Option<usize>) -> FinalMeans {
    if records.is_empty() {
        return FinalMeans::default();
    }
    let start = match converged_at {
        Some(c) if records.len() - c > TAIL_LENGTH => c,
        _ => records.len().saturating_sub(TAIL_LENGTH),
    };
    let tail = &records[start..];
    let n = tail.len() as f64;
    FinalMeans {
        pu1: tail.iter().map(|r| r.pu1_reward).sum::<f64>() / n,
        pu2: tail.iter().map(|r| r.pu2_reward).sum::<f64>() / n,
        su: tail.iter().map(|r| r.mean_su_reward).sum::<f64>() / n,
    }
}

/// Runs `config.max_iterations` rounds with default convergence settings.
pub fn run_episode(config: &MarketConfig) -> Result<RunResult> {
    run_episode_with(config, &ConvergenceCriteria::default())
}

/// Runs an episode; convergence is judged on the total PU reward series.
pub fn run_episode_with(config: &MarketConfig, criteria: &ConvergenceCriteria) -> Result<RunResult> {
    let mut sim = Simulation::new(config.clone())?;
    let mut records = Vec::with_capacity(config.max_iterations);
    let mut series = Vec::with_capacity(config.max_iterations);
    let mut converged_at = None;
    for _ in 0..config.max_iterations {
        let record = sim.step()?;
        series.push(record.total_pu_reward);
        records.push(record);
        if criteria.early_stop {
            converged_at = detect_convergence(&series, criteria.window, criteria.tolerance);
            if converged_at.is_some() {
                break;
            }
        }
    }
    if !criteria.early_stop {
        converged_at = detect_convergence(&series, criteria.window, criteria.tolerance);
    }
    let final_means = tail_means(&records, converged_at);
    Ok(RunResult {
        config: config.clone(),
        records,
        converged_at,
        final_means,
    })
}
