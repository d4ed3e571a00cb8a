//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qpml::market::SuSelection;

/// Every allocation (channel -> SU) consistent with the matching rule, found by
/// enumerating all ways of giving each channel to nobody or to any one SU.
///
/// An assignment is kept when each SU holds at most one channel, only bids on
/// the channel it chose, and every channel whose best bid beats its price goes
/// to one of its highest bidders while all other channels stay unsold.
pub fn brute_force_allocations(
    selections: &[SuSelection],
    prices: &[f64],
) -> Vec<BTreeMap<usize, usize>> {
    let channels = prices.len();
    let options = selections.len() + 1;
    let total = options.pow(channels as u32);
    let mut valid = Vec::new();
    for code in 0..total {
        let mut digits = code;
        let mut assignment = BTreeMap::new();
        let mut holders = vec![0usize; selections.len()];
        let mut ok = true;
        for ch in 0..channels {
            let pick = digits % options;
            digits /= options;
            if pick == 0 {
                continue;
            }
            let idx = pick - 1;
            holders[idx] += 1;
            assignment.insert(ch, selections[idx].su_id);
            if selections[idx].channel != ch {
                ok = false;
            }
        }
        if !ok || holders.iter().any(|&h| h > 1) {
            continue;
        }
        let follows_rule = (0..channels).all(|ch| {
            let bids: Vec<f64> = selections
                .iter()
                .filter(|s| s.channel == ch)
                .map(|s| s.bid)
                .collect();
            let best = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match assignment.get(&ch) {
                None => bids.is_empty() || best <= prices[ch],
                Some(su) => {
                    let sel = selections.iter().find(|s| s.su_id == *su).unwrap();
                    best > prices[ch] && sel.bid == best
                }
            }
        });
        if follows_rule {
            valid.push(assignment);
        }
    }
    valid
}

/// KL divergence summed term by term as `p (ln p - ln q)`.
pub fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
