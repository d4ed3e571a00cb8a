//! Learning agents.
//!
//! Both sides use stateless Q-learning, `Q <- Q + alpha (r - Q)`. SUs keep one
//! value per channel and act through a Boltzmann distribution over those
//! values; the same distribution doubles as the SU's demand estimate. PUs pick
//! a single price level for all their channels and keep two `L x L` tables
//! over joint levels: their own, and a model of the opponent's.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::market::{DemandDistribution, GapSign, PayoffGaps, PuId, TradeOutcome};

/// Learning rate and Boltzmann temperature shared by all agents of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub learning_rate: f64,
    pub temperature: f64,
}

impl LearningParams {
    pub fn new(learning_rate: f64, temperature: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::invalid(format!("learning rate {learning_rate} outside (0, 1]")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
        }
        Ok(LearningParams {
            learning_rate,
            temperature,
        })
    }
}

/// Softmax of `q / temperature`, computed after subtracting the maximum.
pub fn boltzmann_normalize(q: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature {temperature} must be > 0")));
    }
    if q.is_empty() {
        return Err(Error::invalid("cannot normalize an empty Q vector"));
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = q.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::invalid(format!("bad action distribution: {e}")))?;
    Ok(rng.sample(dist))
}

/// One stateless Q step toward `target`, written as a convex combination so
/// that a unit learning rate lands on `target` exactly.
#[inline]
pub fn q_step(value: &mut f64, target: f64, learning_rate: f64) {
    *value = (1.0 - learning_rate) * *value + learning_rate * target;
}

/// Secondary user: bids for one channel per round.
#[derive(Debug, Clone, PartialEq)]
pub struct SuAgent {
    pub id: usize,
    /// One value per channel action, `2C` entries.
    pub q: Vec<f64>,
    pub true_demand: DemandDistribution,
    pub last_action: Option<usize>,
    pub last_reward: f64,
}

impl SuAgent {
    /// Fresh agent with an all-zero Q vector.
    pub fn new(id: usize, true_demand: DemandDistribution) -> Self {
        SuAgent {
            id,
            q: vec![0.0; true_demand.len()],
            true_demand,
            last_action: None,
            last_reward: 0.0,
        }
    }

    /// Samples a channel from the Boltzmann policy and remembers it.
    pub fn select_action<R: Rng + ?Sized>(&mut self, temperature: f64, rng: &mut R) -> Result<usize> {
        let probs = boltzmann_normalize(&self.q, temperature)?;
        let action = sample_index(&probs, rng)?;
        self.last_action = Some(action);
        Ok(action)
    }

    /// Moves the value of the last action toward `reward`.
    pub fn update(&mut self, reward: f64, learning_rate: f64) -> Result<()> {
        let action = self
            .last_action
            .ok_or_else(|| Error::State(format!("SU {} updated before acting", self.id)))?;
        q_step(&mut self.q[action], reward, learning_rate);
        self.last_reward = reward;
        Ok(())
    }

    /// The Boltzmann distribution over channels, read as a demand estimate.
    pub fn estimate_demand(&self, temperature: f64) -> Result<DemandDistribution> {
        DemandDistribution::new(boltzmann_normalize(&self.q, temperature)?)
    }
}

/// Constraint on a PU's next price level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceDirection {
    /// Stay or move up.
    Raise,
    /// Stay or move down.
    Lower,
    /// Any level.
    Free,
}

/// Dense `L x L` table indexed by `(own_level, other_level)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    levels: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(levels: usize) -> Self {
        QTable {
            levels,
            values: vec![0.0; levels * levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, own: usize, other: usize) -> f64 {
        self.values[own * self.levels + other]
    }

    pub fn get_mut(&mut self, own: usize, other: usize) -> &mut f64 {
        &mut self.values[own * self.levels + other]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Primary user: posts one price level for all of its channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PuAgent {
    pub id: PuId,
    pub own_q: QTable,
    /// Model of the opponent's table, from this agent's point of view.
    pub other_q: QTable,
    pub current_level: usize,
}

impl PuAgent {
    pub fn new(id: PuId, levels: usize, current_level: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid("price grid needs at least 2 levels"));
        }
        if current_level >= levels {
            return Err(Error::invalid(format!("level {current_level} of {levels}")));
        }
        Ok(PuAgent {
            id,
            own_q: QTable::zeros(levels),
            other_q: QTable::zeros(levels),
            current_level,
        })
    }

    pub fn levels(&self) -> usize {
        self.own_q.levels()
    }

    /// Price of level `k` on the uniform grid over `[0, 1]`.
    pub fn level_price(&self, level: usize) -> f64 {
        level as f64 / (self.levels() - 1) as f64
    }

    pub fn price(&self) -> f64 {
        self.level_price(self.current_level)
    }

    /// Samples the next level from a Boltzmann distribution over the
    /// `own_q` column for `opponent_last_level`, restricted by `direction`.
    pub fn select_price<R: Rng + ?Sized>(
        &mut self,
        direction: PriceDirection,
        opponent_last_level: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let levels = self.levels();
        if opponent_last_level >= levels {
            return Err(Error::invalid(format!(
                "opponent level {opponent_last_level} of {levels}"
            )));
        }
        let candidates = match direction {
            PriceDirection::Raise => self.current_level..levels,
            PriceDirection::Lower => 0..self.current_level + 1,
            PriceDirection::Free => 0..levels,
        };
        let values: Vec<f64> = candidates
            .clone()
            .map(|own| self.own_q.get(own, opponent_last_level))
            .collect();
        let probs = boltzmann_normalize(&values, temperature)?;
        self.current_level = candidates.start + sample_index(&probs, rng)?;
        Ok(self.current_level)
    }
}

/// Which PU won the larger market share this round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareBranch {
    /// `M1/M >= M2/M`: PU1 keeps its reward, PU2 is charged it.
    Pu1Leads,
    /// `M1/M < M2/M`: PU2 keeps its reward, PU1 is charged it.
    Pu2Leads,
}

/// What [`pu_update_pair`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairUpdate {
    pub branch: ShareBranch,
    /// Next-round constraints for (PU1, PU2).
    pub directions: (PriceDirection, PriceDirection),
    /// Gap labels for (PU1, PU2) observed this round.
    pub signs: (GapSign, GapSign),
}

/// Sign-conditioned joint update of both PU tables at the joint level the
/// two agents just played.
///
/// The leader by market share learns from its own reward and is told to
/// raise; the trailer learns from its negated reward and is told to lower.
/// Each agent's opponent model receives the same step as the opponent's own
/// table.
pub fn pu_update_pair(
    pu1: &mut PuAgent,
    pu2: &mut PuAgent,
    outcome: &TradeOutcome,
    gaps: &PayoffGaps,
    learning_rate: f64,
) -> Result<PairUpdate> {
    if pu1.id != PuId::One || pu2.id != PuId::Two {
        return Err(Error::invalid("PU pair must be ordered (PU1, PU2)"));
    }
    if pu1.levels() != pu2.levels() {
        return Err(Error::invalid("PU price grids differ"));
    }
    let (l1, l2) = (pu1.current_level, pu2.current_level);
    let (branch, target1, target2, directions) = if outcome.share1 >= outcome.share2 {
        (
            ShareBranch::Pu1Leads,
            outcome.pu1_reward,
            -outcome.pu2_reward,
            (PriceDirection::Raise, PriceDirection::Lower),
        )
    } else {
        (
            ShareBranch::Pu2Leads,
            -outcome.pu1_reward,
            outcome.pu2_reward,
            (PriceDirection::Lower, PriceDirection::Raise),
        )
    };
    q_step(pu1.own_q.get_mut(l1, l2), target1, learning_rate);
    q_step(pu2.own_q.get_mut(l2, l1), target2, learning_rate);
    q_step(pu1.other_q.get_mut(l1, l2), target2, learning_rate);
    q_step(pu2.other_q.get_mut(l2, l1), target1, learning_rate);
    Ok(PairUpdate {
        branch,
        directions,
        signs: (gaps.sign1(), gaps.sign2()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Allocation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn boltzmann_uniform_for_equal_values() {
        for tau in [0.01, 0.5, 3.0] {
            let p = boltzmann_normalize(&[1.0, 1.0, 1.0], tau).unwrap();
            for x in p {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn boltzmann_log_two_gap() {
        let p = boltzmann_normalize(&[0.0, 0.693147], 1.0).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-5);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn boltzmann_cold_limit() {
        let p = boltzmann_normalize(&[0.0, 1.0], 0.01).unwrap();
        assert!(p[1] > 0.999);
    }

    #[test]
    fn boltzmann_rejects_bad_temperature() {
        assert!(boltzmann_normalize(&[0.0], 0.0).is_err());
        assert!(boltzmann_normalize(&[0.0], -1.0).is_err());
        assert!(boltzmann_normalize(&[], 1.0).is_err());
        assert!(boltzmann_normalize(&[1e308, -1e308], 1e-3).is_ok());
    }

    fn agent_with_q(q: Vec<f64>) -> SuAgent {
        let mut a = SuAgent::new(0, DemandDistribution::uniform(q.len()).unwrap());
        a.q = q;
        a
    }

    #[test]
    fn dominant_action_is_chosen() {
        let mut q = vec![-50.0; 6];
        q[4] = 50.0;
        let mut agent = agent_with_q(q);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..10_000)
            .filter(|_| agent.select_action(1.0, &mut rng).unwrap() == 4)
            .count();
        assert!(hits as f64 / 1e4 > 0.999);
        assert_eq!(agent.last_action, Some(4));
    }

    #[test]
    fn uniform_q_gives_uniform_choices() {
        let k = 8;
        let n = 100_000;
        let mut agent = agent_with_q(vec![0.0; k]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            counts[agent.select_action(0.5, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / k as f64;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn selection_is_seed_deterministic() {
        let draw = |seed| {
            let mut agent = agent_with_q(vec![0.1, 0.4, -0.2, 0.0]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| agent.select_action(0.5, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
    }

    #[test]
    fn su_update_examples() {
        let mut a = agent_with_q(vec![0.0; 3]);
        a.last_action = Some(1);
        a.update(1.0, 0.1).unwrap();
        assert!((a.q[1] - 0.1).abs() < 1e-15);
        assert_eq!(a.q[0], 0.0);
        assert_eq!(a.q[2], 0.0);
        a.update(-0.3, 1.0).unwrap();
        assert_eq!(a.q[1], -0.3);
        assert_eq!(a.last_reward, -0.3);
    }

    #[test]
    fn su_update_converges_to_constant_reward() {
        let mut a = agent_with_q(vec![0.0; 2]);
        a.last_action = Some(0);
        for _ in 0..200 {
            a.update(0.7, 0.1).unwrap();
        }
        assert!((a.q[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn su_update_before_action_fails() {
        let mut a = agent_with_q(vec![0.0; 2]);
        assert!(matches!(a.update(1.0, 0.1), Err(Error::State(_))));
    }

    #[test]
    fn demand_estimate_follows_q() {
        let a = agent_with_q(vec![0.0; 5]);
        let d = a.estimate_demand(0.5).unwrap();
        assert!(d.weights().iter().all(|&w| (w - 0.2).abs() < 1e-15));

        let a = agent_with_q(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = a.estimate_demand(0.01).unwrap();
        assert!(d.weights()[2] > 0.99);
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn pu(id: PuId, level: usize) -> PuAgent {
        PuAgent::new(id, 11, level).unwrap()
    }

    #[test]
    fn raise_at_top_stays_put() {
        let mut a = pu(PuId::One, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(a.select_price(PriceDirection::Raise, 3, 0.5, &mut rng).unwrap(), 10);
        }
        assert_eq!(a.price(), 1.0);
    }

    #[test]
    fn free_choice_is_uniform_over_flat_row() {
        let mut a = pu(PuId::Two, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 55_000;
        let mut counts = [0usize; 11];
        for _ in 0..n {
            counts[a.select_price(PriceDirection::Free, 0, 0.5, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 11.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn lower_respects_ceiling_and_prefers_high_q() {
        let tau = 0.5;
        let opp = 7;
        let mut base = pu(PuId::One, 5);
        *base.own_q.get_mut(2, opp) = 1.0;
        *base.own_q.get_mut(4, opp) = 0.3;
        *base.own_q.get_mut(8, opp) = 5.0; // above the ceiling, must be ignored

        // restricted Boltzmann oracle over levels 0..=5
        let weights: Vec<f64> = (0..=5).map(|l| (base.own_q.get(l, opp) / tau).exp()).collect();
        let z: f64 = weights.iter().sum();
        let expected2 = weights[2] / z;

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let mut counts = [0usize; 11];
        for _ in 0..n {
            let mut a = base.clone();
            let l = a.select_price(PriceDirection::Lower, opp, tau, &mut rng).unwrap();
            assert!(l <= 5);
            counts[l] += 1;
        }
        let most = (0..11).max_by_key(|&l| counts[l]).unwrap();
        assert_eq!(most, 2);
        let freq2 = counts[2] as f64 / n as f64;
        let sigma = (expected2 * (1.0 - expected2) / n as f64).sqrt();
        assert!((freq2 - expected2).abs() < 4.0 * sigma, "{freq2} vs {expected2}");
    }

    fn outcome(share1: f64, share2: f64, r1: f64, r2: f64) -> TradeOutcome {
        TradeOutcome {
            allocation: Allocation::default(),
            su_rewards: BTreeMap::new(),
            pu1_reward: r1,
            pu2_reward: r2,
            total_pu_reward: r1 + r2,
            share1,
            share2,
        }
    }

    const GAPS: PayoffGaps = PayoffGaps { pu1: 0.2, pu2: -0.1 };

    #[test]
    fn leader_branch_updates() {
        let mut p1 = pu(PuId::One, 3);
        let mut p2 = pu(PuId::Two, 6);
        let up = pu_update_pair(&mut p1, &mut p2, &outcome(0.6, 0.3, 0.5, 0.5), &GAPS, 0.1).unwrap();
        assert_eq!(up.branch, ShareBranch::Pu1Leads);
        assert_eq!(up.directions, (PriceDirection::Raise, PriceDirection::Lower));
        assert_eq!(up.signs, (GapSign::Plus, GapSign::Minus));
        assert!((p1.own_q.get(3, 6) - 0.05).abs() < 1e-15);
        assert!((p2.own_q.get(6, 3) + 0.05).abs() < 1e-15);
        assert!((p1.other_q.get(3, 6) + 0.05).abs() < 1e-15);
        assert!((p2.other_q.get(6, 3) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn trailer_branch_flips_signs() {
        let mut p1 = pu(PuId::One, 3);
        let mut p2 = pu(PuId::Two, 6);
        let up = pu_update_pair(&mut p1, &mut p2, &outcome(0.2, 0.3, 0.5, 0.5), &GAPS, 0.1).unwrap();
        assert_eq!(up.branch, ShareBranch::Pu2Leads);
        assert_eq!(up.directions, (PriceDirection::Lower, PriceDirection::Raise));
        assert!((p1.own_q.get(3, 6) + 0.05).abs() < 1e-15);
        assert!((p2.own_q.get(6, 3) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn equal_shares_favour_pu1() {
        let mut p1 = pu(PuId::One, 0);
        let mut p2 = pu(PuId::Two, 0);
        let up = pu_update_pair(&mut p1, &mut p2, &outcome(0.0, 0.0, 0.0, 0.0), &GAPS, 0.1).unwrap();
        assert_eq!(up.branch, ShareBranch::Pu1Leads);
    }

    #[test]
    fn pair_update_rejects_swapped_agents() {
        let mut p1 = pu(PuId::One, 0);
        let mut p2 = pu(PuId::Two, 0);
        assert!(pu_update_pair(&mut p2, &mut p1, &outcome(0.0, 0.0, 0.0, 0.0), &GAPS, 0.1).is_err());
    }
}
