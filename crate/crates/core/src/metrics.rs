//! Episode scoring and aggregate reporting.
//!
//! Every metric treats an (episode, agent) pair as one scored unit. SPL is
//! computed in two variants: the standard definition with the optimal
//! distance in the numerator, and a literal variant with the traversed
//! distance in the numerator. Significance between two paired runs uses a
//! two-sided sign-flip permutation test on per-unit success indicators.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::EpisodeResult;

/// One scored (episode, agent) unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEpisode {
    pub episode_id: String,
    pub agent_id: u32,
    pub success: bool,
    /// Distance actually traversed over the whole episode.
    pub traversed_len: f64,
    /// Distance traversed along the final active plan.
    pub traversed_final_plan: f64,
    /// Total length of the final active plan.
    pub final_plan_len: f64,
    /// Shortest-path distance from start to goal.
    pub d_opt: f64,
    pub turns_used: u32,
    pub n_agents: usize,
}

/// Flattens simulator output against the optimal distances of its episode.
pub fn score_episode(res: &EpisodeResult, d_opt: &[f64]) -> Vec<ScoredEpisode> {
    res.agents
        .iter()
        .enumerate()
        .map(|(i, a)| ScoredEpisode {
            episode_id: res.episode_id.clone(),
            agent_id: a.agent_id,
            success: a.success,
            traversed_len: a.traversed_len,
            traversed_final_plan: a.traversed_final_plan,
            final_plan_len: a.final_plan_len,
            d_opt: d_opt.get(i).copied().unwrap_or(f64::NAN),
            turns_used: a.turns_used,
            n_agents: res.agents.len(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplVariant {
    /// I * d_opt / max(d_traversed, d_opt); the conventional definition.
    Standard,
    /// I * d_traversed / max(d_traversed, d_opt).
    Literal,
}

pub fn success_rate(units: &[ScoredEpisode]) -> f64 {
    if units.is_empty() {
        return 0.0;
    }
    units.iter().filter(|u| u.success).count() as f64 / units.len() as f64
}

pub fn spl(units: &[ScoredEpisode], variant: SplVariant) -> f64 {
    if units.is_empty() {
        return 0.0;
    }
    let sum: f64 = units
        .iter()
        .map(|u| {
            if !u.success {
                return 0.0;
            }
            let denom = u.traversed_len.max(u.d_opt);
            if denom == 0.0 {
                return 1.0;
            }
            match variant {
                SplVariant::Standard => u.d_opt / denom,
                SplVariant::Literal => u.traversed_len / denom,
            }
        })
        .sum();
    sum / units.len() as f64
}

/// Fraction of the final plan actually covered, clamped to 1; success
/// always counts as full completion.
pub fn completion_rate(units: &[ScoredEpisode]) -> f64 {
    if units.is_empty() {
        return 0.0;
    }
    let sum: f64 = units
        .iter()
        .map(|u| {
            if u.success {
                return 1.0;
            }
            if u.final_plan_len <= 0.0 {
                return 0.0;
            }
            (u.traversed_final_plan / u.final_plan_len).min(1.0)
        })
        .sum();
    sum / units.len() as f64
}

/// Success rate with each unit weighted by its optimal distance, so long
/// routes count more than short ones.
pub fn weighted_success_rate(units: &[ScoredEpisode]) -> f64 {
    let total: f64 = units.iter().map(|u| u.d_opt).sum();
    if total == 0.0 {
        return 0.0;
    }
    units
        .iter()
        .filter(|u| u.success)
        .map(|u| u.d_opt)
        .sum::<f64>()
        / total
}

/// Two-sided paired sign-flip permutation test on success indicators.
///
/// Ties (pairs with equal outcomes) never change the statistic, so the test
/// enumerates sign flips over the discordant pairs only: exact enumeration up
/// to 20 discordant pairs, a fixed-seed Monte Carlo estimate with 100_000
/// resamples beyond that. Returns the p-value for the observed mean
/// difference.
pub fn paired_test(a: &[bool], b: &[bool]) -> Result<f64, MetricsError> {
    let xa: Vec<f64> = a.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let xb: Vec<f64> = b.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    paired_test_real(&xa, &xb)
}

/// Same test over real-valued paired scores.
pub fn paired_test_real(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(1.0);
    }
    let n = a.len() as f64;
    let observed = diffs.iter().sum::<f64>().abs() / n;
    let tol = 1e-12;

    let k = nonzero.len();
    if k <= 20 {
        // Exact: every sign assignment over the discordant diffs.
        let mut extreme: u64 = 0;
        let total: u64 = 1u64 << k;
        for mask in 0..total {
            let mut s = 0.0;
            for (i, d) in nonzero.iter().enumerate() {
                s += if mask >> i & 1 == 1 { -d } else { *d };
            }
            if s.abs() / n >= observed - tol {
                extreme += 1;
            }
        }
        Ok(extreme as f64 / total as f64)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5141_77E5);
        let resamples = 100_000u32;
        let mut extreme = 0u32;
        for _ in 0..resamples {
            let mut s = 0.0;
            for d in &nonzero {
                s += if rng.gen::<bool>() { -d } else { *d };
            }
            if s.abs() / n >= observed - tol {
                extreme += 1;
            }
        }
        Ok(extreme as f64 / resamples as f64)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("no paired samples")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_units: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub spl_literal: f64,
    pub completion_rate: f64,
    pub weighted_success_rate: f64,
}

fn summarize(units: &[ScoredEpisode]) -> MetricsSummary {
    MetricsSummary {
        n_units: units.len(),
        success_rate: success_rate(units),
        spl: spl(units, SplVariant::Standard),
        spl_literal: spl(units, SplVariant::Literal),
        completion_rate: completion_rate(units),
        weighted_success_rate: weighted_success_rate(units),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: MetricsSummary,
    /// Keyed by the number of planning turns the agent consumed.
    pub by_turns: BTreeMap<u32, MetricsSummary>,
    /// Keyed by episode agent count.
    pub by_agent_count: BTreeMap<usize, MetricsSummary>,
}

pub fn aggregate(units: &[ScoredEpisode]) -> MetricsReport {
    let mut by_turns: BTreeMap<u32, Vec<ScoredEpisode>> = BTreeMap::new();
    let mut by_agent_count: BTreeMap<usize, Vec<ScoredEpisode>> = BTreeMap::new();
    for u in units {
        by_turns.entry(u.turns_used).or_default().push(u.clone());
        by_agent_count.entry(u.n_agents).or_default().push(u.clone());
    }
    MetricsReport {
        overall: summarize(units),
        by_turns: by_turns.into_iter().map(|(k, v)| (k, summarize(&v))).collect(),
        by_agent_count: by_agent_count
            .into_iter()
            .map(|(k, v)| (k, summarize(&v)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(success: bool, traversed: f64, d_opt: f64) -> ScoredEpisode {
        ScoredEpisode {
            episode_id: "e".into(),
            agent_id: 0,
            success,
            traversed_len: traversed,
            traversed_final_plan: traversed,
            final_plan_len: traversed.max(1.0),
            d_opt,
            turns_used: 1,
            n_agents: 1,
        }
    }

    #[test]
    fn success_rate_is_the_mean_indicator() {
        let units = vec![unit(true, 5.0, 5.0), unit(false, 2.0, 5.0), unit(true, 6.0, 5.0)];
        assert!((success_rate(&units) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(success_rate(&[]), 0.0);
    }

    #[test]
    fn spl_standard_penalizes_detours() {
        // Optimal 5, traversed 10: contribution 0.5.
        let units = vec![unit(true, 10.0, 5.0)];
        assert!((spl(&units, SplVariant::Standard) - 0.5).abs() < 1e-12);
        // Traversed shorter than d_opt cannot exceed 1.
        let units = vec![unit(true, 4.0, 5.0)];
        assert!((spl(&units, SplVariant::Standard) - 1.0).abs() < 1e-12);
        // Failures contribute zero.
        let units = vec![unit(false, 5.0, 5.0)];
        assert_eq!(spl(&units, SplVariant::Standard), 0.0);
    }

    #[test]
    fn spl_literal_equals_one_on_any_success_with_detour() {
        // d / max(d, d_opt) = 1 whenever d >= d_opt.
        let units = vec![unit(true, 10.0, 5.0)];
        assert!((spl(&units, SplVariant::Literal) - 1.0).abs() < 1e-12);
        // Shorter-than-optimal traversal (goal_eps arrival): d / d_opt < 1.
        let units = vec![unit(true, 4.0, 5.0)];
        assert!((spl(&units, SplVariant::Literal) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn completion_rate_partial_credit() {
        let mut u = unit(false, 3.0, 10.0);
        u.final_plan_len = 10.0;
        u.traversed_final_plan = 3.0;
        assert!((completion_rate(&[u.clone()]) - 0.3).abs() < 1e-12);
        // Success forces full credit even with a short traversal.
        u.success = true;
        assert!((completion_rate(&[u]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_success_rate_weights_by_optimal_distance() {
        let units = vec![unit(true, 10.0, 10.0), unit(false, 1.0, 30.0)];
        assert!((weighted_success_rate(&units) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn paired_test_exact_known_value() {
        // 10 pairs, all discordant in the same direction: the only sign
        // assignments at least as extreme are all-plus and all-minus.
        let a = vec![true; 10];
        let b = vec![false; 10];
        let p = paired_test(&a, &b).unwrap();
        assert!((p - 2.0 / 1024.0).abs() < 1e-15, "p = {p}");
    }

    #[test]
    fn paired_test_identical_sequences_p_is_one() {
        let a = vec![true, false, true, true];
        let p = paired_test(&a, &a).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn paired_test_balanced_discordance_is_insignificant() {
        // Two discordant pairs in opposite directions: observed diff 0.
        let a = vec![true, false, true, false];
        let b = vec![false, true, true, false];
        let p = paired_test(&a, &b).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn paired_test_monte_carlo_close_to_exact() {
        // 25 discordant pairs; compare MC against the analytic binomial tail.
        let n = 25;
        let a = vec![true; n];
        let mut b = vec![false; n];
        // Flip 5 pairs the other way by making them ties instead would reduce
        // k; keep all discordant, 20 positive : 5 negative.
        for item in b.iter_mut().take(5) {
            *item = true;
        }
        let mut a2 = a.clone();
        for item in a2.iter_mut().take(5) {
            *item = false;
        }
        // a2 vs b: pairs 0..5 are (false, true) => diff -1; 5..25 (true, false) => +1.
        let p = paired_test(&a2, &b).unwrap();
        // Observed |sum| = |20 - 5| = 15 over 25 signs; P(|S| >= 15) where
        // S = sum of 25 Rademacher variables: S >= 15 iff #plus >= 20.
        // P = 2 * sum_{k=20..25} C(25,k) / 2^25.
        let mut tail = 0.0f64;
        for k in 20..=25u64 {
            let mut c = 1.0f64;
            for i in 0..k {
                c = c * (25 - i) as f64 / (i + 1) as f64;
            }
            tail += c;
        }
        let exact = 2.0 * tail / (1u64 << 25) as f64;
        assert!((p - exact).abs() < 0.002, "p = {p}, exact = {exact}");
    }

    #[test]
    fn paired_test_rejects_mismatched_lengths() {
        assert!(paired_test(&[true], &[true, false]).is_err());
        assert!(paired_test(&[], &[]).is_err());
    }

    #[test]
    fn aggregate_breaks_down_by_turns_and_agent_count() {
        let mut u1 = unit(true, 5.0, 5.0);
        u1.turns_used = 1;
        u1.n_agents = 1;
        let mut u2 = unit(false, 2.0, 5.0);
        u2.turns_used = 3;
        u2.n_agents = 2;
        let report = aggregate(&[u1, u2]);
        assert_eq!(report.overall.n_units, 2);
        assert_eq!(report.by_turns[&1].n_units, 1);
        assert_eq!(report.by_turns[&3].n_units, 1);
        assert!((report.by_turns[&1].success_rate - 1.0).abs() < 1e-12);
        assert_eq!(report.by_agent_count[&2].n_units, 1);
    }
}
