//! Market domain: configuration, bids, matching and rewards.
//!
//! Channels are indexed `0..2C`. Indices `0..C` belong to PU1 and `C..2C` to
//! PU2; a [`PriceVector`] holds one owner's `C` prices in local order.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Counts, economics and learning hyperparameters for one market instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Number of SUs (`M`).
    pub num_sus: usize,
    /// Subchannels owned by each PU (`C`).
    pub channels_per_pu: usize,
    /// Value an SU gets from a won channel, constant over a run.
    pub marginal_utility: f64,
    /// Per-channel seller cost subtracted from the PU margin.
    pub seller_cost: f64,
    /// Number of uniform bid levels in `[0, 1]`.
    pub bid_levels: usize,
    /// Number of uniform price levels in `[0, 1]`.
    pub price_levels: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            num_sus: 10,
            channels_per_pu: 25,
            marginal_utility: 1.0,
            seller_cost: 0.0,
            bid_levels: 21,
            price_levels: 11,
            learning_rate: 0.1,
            temperature: 0.5,
            max_iterations: 2000,
            seed: 1,
        }
    }
}

impl MarketConfig {
    /// Total number of channels across both PUs.
    pub fn total_channels(&self) -> usize {
        2 * self.channels_per_pu
    }

    /// Checks every range constraint, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        if self.num_sus == 0 {
            return Err(Error::config("num_sus", "must be at least 1"));
        }
        if self.channels_per_pu == 0 {
            return Err(Error::config("channels_per_pu", "must be at least 1"));
        }
        if !(self.marginal_utility > 0.0 && self.marginal_utility <= 1.5) {
            return Err(Error::config(
                "marginal_utility",
                format!("{} is outside (0, 1.5]", self.marginal_utility),
            ));
        }
        if !(self.seller_cost >= 0.0 && self.seller_cost.is_finite()) {
            return Err(Error::config(
                "seller_cost",
                format!("{} must be finite and >= 0", self.seller_cost),
            ));
        }
        // A grid needs both endpoints of [0, 1].
        if self.bid_levels < 2 {
            return Err(Error::config("bid_levels", "must be at least 2"));
        }
        if self.price_levels < 2 {
            return Err(Error::config("price_levels", "must be at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(
                "learning_rate",
                format!("{} is outside (0, 1]", self.learning_rate),
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(
                "temperature",
                format!("{} must be finite and > 0", self.temperature),
            ));
        }
        Ok(())
    }

    /// PU that owns a global channel index.
    pub fn owner_of(&self, channel: usize) -> PuId {
        if channel < self.channels_per_pu {
            PuId::One
        } else {
            PuId::Two
        }
    }
}

/// One of the two sellers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PuId {
    One,
    Two,
}

impl PuId {
    pub fn other(self) -> PuId {
        match self {
            PuId::One => PuId::Two,
            PuId::Two => PuId::One,
        }
    }
}

impl fmt::Display for PuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PuId::One => f.write_str("PU1"),
            PuId::Two => f.write_str("PU2"),
        }
    }
}

/// An SU's true willingness-to-pay simplex over all `2C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandDistribution {
    weights: Vec<f64>,
}

impl DemandDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("demand distribution is empty"));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::invalid(format!("demand weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("demand weights sum to {sum}, not 1")));
        }
        Ok(DemandDistribution { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("demand distribution is empty"));
        }
        Self::new(vec![1.0 / len as f64; len])
    }

    /// Draws a point uniformly from the simplex (flat Dirichlet) by
    /// normalising independent unit exponentials.
    pub fn sample_uniform<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("demand distribution is empty"));
        }
        let draws: Vec<f64> = (0..len).map(|_| rng.sample(rand_distr::Exp1)).collect();
        let total: f64 = draws.iter().sum();
        Self::new(draws.into_iter().map(|x| x / total).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A PU's prices for its own `C` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector {
    owner: PuId,
    prices: Vec<f64>,
}

impl PriceVector {
    pub fn new(owner: PuId, prices: Vec<f64>) -> Result<Self> {
        if let Some(p) = prices.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!(
                "{owner} price {p} outside [0, 1]"
            )));
        }
        Ok(PriceVector { owner, prices })
    }

    /// The same price on all `channels` channels.
    pub fn flat(owner: PuId, price: f64, channels: usize) -> Result<Self> {
        Self::new(owner, vec![price; channels])
    }

    pub fn owner(&self) -> PuId {
        self.owner
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// One SU's channel choice and quantised bid for a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuSelection {
    pub su_id: usize,
    pub channel: usize,
    pub bid: f64,
}

/// Rounds `x` to the nearest point of a `levels`-point uniform grid on `[0, 1]`.
pub fn quantize(x: f64, levels: usize) -> f64 {
    let steps = (levels - 1) as f64;
    (x.clamp(0.0, 1.0) * steps).round() / steps
}

/// Bid an SU with demand `demand` places on `channel`.
///
/// The demand weight is rescaled by `2C / 2` so that a uniform demand bids
/// one half, clamped to 1, then snapped to the bid grid.
pub fn form_bid(demand: &DemandDistribution, channel: usize, bid_levels: usize) -> Result<f64> {
    let n = demand.len();
    let weight = *demand.weights().get(channel).ok_or_else(|| {
        Error::invalid(format!("channel {channel} out of range for {n} channels"))
    })?;
    if bid_levels < 2 {
        return Err(Error::invalid("bid grid needs at least 2 levels"));
    }
    let raw = (weight * n as f64 * 0.5).min(1.0);
    Ok(quantize(raw, bid_levels))
}

/// Turns each SU's channel choice into a [`SuSelection`]; SU `i` is
/// `choices[i]` with demand `demands[i]`.
pub fn collect_bids(
    choices: &[usize],
    demands: &[DemandDistribution],
    bid_levels: usize,
) -> Result<Vec<SuSelection>> {
    if choices.len() != demands.len() {
        return Err(Error::invalid(format!(
            "{} choices for {} demand distributions",
            choices.len(),
            demands.len()
        )));
    }
    choices
        .iter()
        .zip(demands)
        .enumerate()
        .map(|(su_id, (&channel, demand))| {
            Ok(SuSelection {
                su_id,
                channel,
                bid: form_bid(demand, channel, bid_levels)?,
            })
        })
        .collect()
}

/// Result of one round of matching.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation {
    /// Channel to winning SU.
    pub winners: BTreeMap<usize, usize>,
    /// Channel to the winning bid.
    pub winning_bids: BTreeMap<usize, f64>,
    /// Channel to the highest bid it received, sold or not.
    pub top_bids: BTreeMap<usize, f64>,
    /// Channels sold by PU1 (`M1`).
    pub sale_count_pu1: usize,
    /// Channels sold by PU2 (`M2`).
    pub sale_count_pu2: usize,
}

impl Allocation {
    pub fn is_winner(&self, su_id: usize) -> bool {
        self.winners.values().any(|&s| s == su_id)
    }
}

fn price_of(channel: usize, pu1: &PriceVector, pu2: &PriceVector) -> f64 {
    let c = pu1.len();
    if channel < c {
        pu1.prices()[channel]
    } else {
        pu2.prices()[channel - c]
    }
}

fn check_prices(pu1: &PriceVector, pu2: &PriceVector) -> Result<()> {
    if pu1.owner() != PuId::One || pu2.owner() != PuId::Two {
        return Err(Error::invalid("price vectors must be ordered (PU1, PU2)"));
    }
    if pu1.len() != pu2.len() || pu1.is_empty() {
        return Err(Error::invalid(format!(
            "price vectors have lengths {} and {}; both must equal C >= 1",
            pu1.len(),
            pu2.len()
        )));
    }
    Ok(())
}

/// Sells each channel to its highest bidder when that bid strictly exceeds
/// the channel's price. Equal top bids are resolved uniformly with `rng`,
/// which is only consumed when a tie actually occurs.
pub fn match_bids<R: Rng + ?Sized>(
    selections: &[SuSelection],
    pu1: &PriceVector,
    pu2: &PriceVector,
    rng: &mut R,
) -> Result<Allocation> {
    check_prices(pu1, pu2)?;
    let total = 2 * pu1.len();
    let mut by_channel: BTreeMap<usize, Vec<&SuSelection>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for sel in selections {
        if sel.channel >= total {
            return Err(Error::invalid(format!(
                "SU {} chose channel {} of {total}",
                sel.su_id, sel.channel
            )));
        }
        if !(0.0..=1.0).contains(&sel.bid) {
            return Err(Error::invalid(format!("SU {} bid {} outside [0, 1]", sel.su_id, sel.bid)));
        }
        if !seen.insert(sel.su_id) {
            return Err(Error::invalid(format!("SU {} selected twice", sel.su_id)));
        }
        by_channel.entry(sel.channel).or_default().push(sel);
    }

    let mut allocation = Allocation::default();
    for (&channel, bidders) in &by_channel {
        let top = bidders.iter().map(|s| s.bid).fold(f64::NEG_INFINITY, f64::max);
        allocation.top_bids.insert(channel, top);
        if top <= price_of(channel, pu1, pu2) {
            continue;
        }
        let tied: Vec<&SuSelection> = bidders.iter().copied().filter(|s| s.bid == top).collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        allocation.winners.insert(channel, winner.su_id);
        allocation.winning_bids.insert(channel, top);
        if channel < pu1.len() {
            allocation.sale_count_pu1 += 1;
        } else {
            allocation.sale_count_pu2 += 1;
        }
    }
    Ok(allocation)
}

/// SU payoff: `U - bid` when the bid won, `-bid` otherwise.
pub fn su_reward(won: bool, bid: f64, marginal_utility: f64) -> f64 {
    if won {
        marginal_utility - bid
    } else {
        -bid
    }
}

/// Per-PU rewards and their sum. Each sold channel contributes
/// `max(bid - price - cost, 0)` to its owner.
pub fn pu_rewards(
    allocation: &Allocation,
    pu1: &PriceVector,
    pu2: &PriceVector,
    seller_cost: f64,
) -> Result<(f64, f64, f64)> {
    check_prices(pu1, pu2)?;
    let c = pu1.len();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for (&channel, &bid) in &allocation.winning_bids {
        if channel >= 2 * c {
            return Err(Error::invalid(format!("allocation names channel {channel} of {}", 2 * c)));
        }
        let margin = (bid - price_of(channel, pu1, pu2) - seller_cost).max(0.0);
        if channel < c {
            r1 += margin;
        } else {
            r2 += margin;
        }
    }
    Ok((r1, r2, r1 + r2))
}

/// Sign label of a payoff gap; zero counts as negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapSign {
    Plus,
    Minus,
}

impl GapSign {
    pub fn of(gap: f64) -> GapSign {
        if gap > 0.0 {
            GapSign::Plus
        } else {
            GapSign::Minus
        }
    }
}

impl fmt::Display for GapSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapSign::Plus => f.write_str("+"),
            GapSign::Minus => f.write_str("-"),
        }
    }
}

/// Aggregate bid-minus-price gap for each PU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffGaps {
    pub pu1: f64,
    pub pu2: f64,
}

impl PayoffGaps {
    pub fn sign1(&self) -> GapSign {
        GapSign::of(self.pu1)
    }

    pub fn sign2(&self) -> GapSign {
        GapSign::of(self.pu2)
    }
}

/// Sums `top_bid - price` over every channel that received at least one bid,
/// separately for each owner.
pub fn payoff_gaps(
    top_bids: &BTreeMap<usize, f64>,
    pu1: &PriceVector,
    pu2: &PriceVector,
) -> Result<PayoffGaps> {
    check_prices(pu1, pu2)?;
    let c = pu1.len();
    let mut gaps = PayoffGaps { pu1: 0.0, pu2: 0.0 };
    for (&channel, &bid) in top_bids {
        if channel >= 2 * c {
            return Err(Error::invalid(format!("bid on channel {channel} of {}", 2 * c)));
        }
        let gap = bid - price_of(channel, pu1, pu2);
        if channel < c {
            gaps.pu1 += gap;
        } else {
            gaps.pu2 += gap;
        }
    }
    Ok(gaps)
}

/// Everything both sides learn from after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeOutcome {
    pub allocation: Allocation,
    pub su_rewards: BTreeMap<usize, f64>,
    pub pu1_reward: f64,
    pub pu2_reward: f64,
    pub total_pu_reward: f64,
    /// `M1 / M`.
    pub share1: f64,
    /// `M2 / M`.
    pub share2: f64,
}

impl TradeOutcome {
    /// Scores a matched round for both sides. `num_sus` is the market's `M`.
    pub fn settle(
        allocation: Allocation,
        selections: &[SuSelection],
        pu1: &PriceVector,
        pu2: &PriceVector,
        num_sus: usize,
        marginal_utility: f64,
        seller_cost: f64,
    ) -> Result<Self> {
        if num_sus == 0 {
            return Err(Error::invalid("market has no SUs"));
        }
        let (pu1_reward, pu2_reward, total_pu_reward) =
            pu_rewards(&allocation, pu1, pu2, seller_cost)?;
        let su_rewards = selections
            .iter()
            .map(|s| {
                let won = allocation.winners.get(&s.channel) == Some(&s.su_id);
                (s.su_id, su_reward(won, s.bid, marginal_utility))
            })
            .collect();
        let m = num_sus as f64;
        Ok(TradeOutcome {
            share1: allocation.sale_count_pu1 as f64 / m,
            share2: allocation.sale_count_pu2 as f64 / m,
            allocation,
            su_rewards,
            pu1_reward,
            pu2_reward,
            total_pu_reward,
        })
    }

    pub fn mean_su_reward(&self) -> f64 {
        if self.su_rewards.is_empty() {
            0.0
        } else {
            self.su_rewards.values().sum::<f64>() / self.su_rewards.len() as f64
        }
    }
}
