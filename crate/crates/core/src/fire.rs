//! Trustor-side FIRE-style trust and reputation: bounded rating histories,
//! the four trust components (interaction trust, role-based trust, witness
//! reputation, certified reputation), their reliability-weighted composite,
//! and provider selection.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::RngExt;

use crate::population::{Consumer, UG_MAX};
use crate::world::distance_sq;
use crate::{ConsumerId, ProviderId, SimRng};

/// One piece of evidence: the utility an evaluator gained from a target in a
/// given round. Rating values always equal the received UG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub evaluator: ConsumerId,
    pub target: ProviderId,
    pub round: u64,
    pub value: f64,
}

/// A trust estimate paired with the reliability of the evidence behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustScore {
    pub value: f64,
    /// Always in [0, 1].
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireParams {
    /// Local rating history size H.
    pub history_size: usize,
    /// Recency scaling factor λ (rounds); weight halves every `λ·ln 2` rounds.
    pub lambda: f64,
    /// Referral branching factor n_BF.
    pub branching_factor: usize,
    /// Referral length threshold n_RL.
    pub referral_length: usize,
    pub w_it: f64,
    pub w_rt: f64,
    pub w_wr: f64,
    pub w_cr: f64,
    pub gamma_it: f64,
    pub gamma_rt: f64,
    pub gamma_wr: f64,
    pub gamma_cr: f64,
    /// Certified store capacity C_max.
    pub certified_capacity: usize,
    /// Probability of exploring an unknown candidate during selection.
    pub exploration: f64,
    /// Probability that a visited witness shares its ratings when asked.
    /// Witnesses always forward referrals; many keep their private judgments
    /// to themselves.
    pub witness_response: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        let gamma = -(0.5f64.ln());
        Self {
            history_size: 10,
            lambda: -5.0 / 0.5f64.ln(),
            branching_factor: 2,
            referral_length: 5,
            w_it: 2.0,
            w_rt: 2.0,
            w_wr: 1.0,
            w_cr: 0.5,
            gamma_it: gamma,
            gamma_rt: gamma,
            gamma_wr: gamma,
            gamma_cr: gamma,
            certified_capacity: 10,
            exploration: 0.2,
            witness_response: 0.25,
        }
    }
}

/// Witnesses willing to share ratings this query: an independent
/// `witness_response` draw per visited witness.
pub fn responding_witnesses(
    witnesses: &[usize],
    response_rate: f64,
    rng: &mut SimRng,
) -> Vec<usize> {
    if response_rate >= 1.0 {
        return witnesses.to_vec();
    }
    witnesses
        .iter()
        .copied()
        .filter(|_| rng.random_bool(response_rate))
        .collect()
}

/// All evaluators' local rating histories, bounded to `capacity` ratings per
/// (evaluator, target) pair with oldest-first eviction.
#[derive(Debug, Clone)]
pub struct RatingHistories {
    map: BTreeMap<(ConsumerId, ProviderId), VecDeque<Rating>>,
    capacity: usize,
}

impl RatingHistories {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: BTreeMap::new(),
            capacity,
        }
    }

    pub fn record(&mut self, rating: Rating) {
        let list = self.map.entry((rating.evaluator, rating.target)).or_default();
        list.push_back(rating);
        while list.len() > self.capacity {
            list.pop_front();
        }
    }

    pub fn ratings(&self, evaluator: ConsumerId, target: ProviderId) -> impl Iterator<Item = &Rating> {
        self.map.get(&(evaluator, target)).into_iter().flatten()
    }

    pub fn history_len(&self, evaluator: ConsumerId, target: ProviderId) -> usize {
        self.map.get(&(evaluator, target)).map_or(0, VecDeque::len)
    }

    /// A departed consumer takes its opinions with it.
    pub fn remove_evaluator(&mut self, evaluator: ConsumerId) {
        self.map.retain(|(e, _), _| *e != evaluator);
    }

    pub fn evaluator_ids(&self) -> impl Iterator<Item = ConsumerId> + '_ {
        self.map.keys().map(|(e, _)| *e)
    }
}

/// References a provider retains about itself, presented on demand. When
/// full, the lowest-valued entry is displaced by a strictly better one, so
/// the store always holds the best `capacity` ratings seen.
#[derive(Debug, Clone)]
pub struct CertifiedStore {
    ratings: Vec<Rating>,
    capacity: usize,
}

impl CertifiedStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            ratings: Vec::new(),
            capacity,
        }
    }

    pub fn offer(&mut self, rating: Rating) {
        if self.capacity == 0 {
            return;
        }
        if self.ratings.len() < self.capacity {
            self.ratings.push(rating);
            return;
        }
        let (min_idx, min_value) = self
            .ratings
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.value))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if rating.value > min_value {
            self.ratings[min_idx] = rating;
        }
    }

    pub fn presented(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Recency-weighted trust over a set of ratings.
///
/// With weights `ω_k = exp(−age_k/λ)`: the value is `Σ ω v / Σ ω`, rating
/// reliability is `1 − exp(−γ Σ ω)`, and deviation reliability is
/// `1 − MAD_ω/10` where `MAD_ω` is the weighted mean absolute deviation
/// around the value. Returns `None` on empty evidence.
pub fn component_trust<'a, I>(ratings: I, now: u64, lambda: f64, gamma: f64) -> Option<TrustScore>
where
    I: IntoIterator<Item = &'a Rating>,
{
    let mut weighted: Vec<(f64, f64)> = Vec::new();
    let mut sum_w = 0.0;
    let mut sum_wv = 0.0;
    for r in ratings {
        let age = now.saturating_sub(r.round) as f64;
        let w = (-age / lambda).exp();
        weighted.push((w, r.value));
        sum_w += w;
        sum_wv += w * r.value;
    }
    if weighted.is_empty() {
        return None;
    }
    let value = sum_wv / sum_w;
    let mad = weighted.iter().map(|(w, v)| w * (v - value).abs()).sum::<f64>() / sum_w;
    let rho_rating = 1.0 - (-gamma * sum_w).exp();
    let rho_deviation = (1.0 - mad / UG_MAX).clamp(0.0, 1.0);
    Some(TrustScore {
        value,
        reliability: rho_rating * rho_deviation,
    })
}

/// Interaction trust: the evaluator's own history with the target.
pub fn interaction_trust(
    histories: &RatingHistories,
    evaluator: ConsumerId,
    target: ProviderId,
    now: u64,
    params: &FireParams,
) -> Option<TrustScore> {
    component_trust(histories.ratings(evaluator, target), now, params.lambda, params.gamma_it)
}

/// A role-based trust rule. The testbed defines no role differentiation, so a
/// configured rule applies to every provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleRule {
    pub value: f64,
    pub reliability: f64,
}

/// Rule table for role-based trust; ships empty.
#[derive(Debug, Clone, Default)]
pub struct RoleRules(pub Vec<RoleRule>);

/// Role-based trust: none without rules; multiple matching rules combine as a
/// reliability-weighted mean with averaged reliability.
pub fn role_based_trust(rules: &RoleRules) -> Option<TrustScore> {
    if rules.0.is_empty() {
        return None;
    }
    let sum_rho: f64 = rules.0.iter().map(|r| r.reliability).sum();
    let value = if sum_rho > 0.0 {
        rules.0.iter().map(|r| r.reliability * r.value).sum::<f64>() / sum_rho
    } else {
        rules.0.iter().map(|r| r.value).sum::<f64>() / rules.0.len() as f64
    };
    Some(TrustScore {
        value,
        reliability: sum_rho / rules.0.len() as f64,
    })
}

/// Certified reputation: trust over the references the target presents.
pub fn certified_reputation(store: &CertifiedStore, now: u64, params: &FireParams) -> Option<TrustScore> {
    component_trust(store.presented().iter(), now, params.lambda, params.gamma_cr)
}

/// Consumer adjacency by radius of operation, kept as sorted index lists.
/// Row `i` holds every consumer within `i`'s radius.
#[derive(Debug, Clone)]
pub struct AcquaintanceGraph {
    adj: Vec<Vec<usize>>,
}

impl AcquaintanceGraph {
    pub fn build(consumers: &[Consumer]) -> Self {
        let mut adj = vec![Vec::new(); consumers.len()];
        for (i, c) in consumers.iter().enumerate() {
            let r_sq = c.radius_of_operation * c.radius_of_operation;
            for (j, other) in consumers.iter().enumerate() {
                if i != j && distance_sq(&c.loc, &other.loc) <= r_sq {
                    adj[i].push(j);
                }
            }
        }
        Self { adj }
    }

    /// Recomputes row `slot` and `slot`'s membership in every other row after
    /// the consumer at that slot moved or was replaced.
    pub fn refresh(&mut self, slot: usize, consumers: &[Consumer]) {
        let moved = &consumers[slot];
        let r_sq = moved.radius_of_operation * moved.radius_of_operation;
        let mut row = Vec::new();
        for (j, other) in consumers.iter().enumerate() {
            if j == slot {
                continue;
            }
            let d_sq = distance_sq(&moved.loc, &other.loc);
            if d_sq <= r_sq {
                row.push(j);
            }
            let other_r_sq = other.radius_of_operation * other.radius_of_operation;
            let should_contain = d_sq <= other_r_sq;
            match (self.adj[j].binary_search(&slot), should_contain) {
                (Ok(pos), false) => {
                    self.adj[j].remove(pos);
                }
                (Err(pos), true) => {
                    self.adj[j].insert(pos, slot);
                }
                _ => {}
            }
        }
        self.adj[slot] = row;
    }

    pub fn neighbors(&self, slot: usize) -> &[usize] {
        &self.adj[slot]
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }
}

/// Breadth-limited referral search: starting from `evaluator`, each visited
/// node forwards to at most `branching_factor` unvisited acquaintances up to
/// chain depth `referral_length`. Consumers hold no ratings about other
/// consumers, so forwarding order is random. Returns the visited witnesses
/// (the evaluator itself excluded) in visit order.
pub fn referral_witnesses(
    graph: &AcquaintanceGraph,
    evaluator: usize,
    params: &FireParams,
    rng: &mut SimRng,
) -> Vec<usize> {
    let mut visited = vec![false; graph.len()];
    visited[evaluator] = true;
    let mut witnesses = Vec::new();
    let mut frontier: VecDeque<(usize, usize)> = VecDeque::new();
    frontier.push_back((evaluator, 0));
    while let Some((node, depth)) = frontier.pop_front() {
        if depth == params.referral_length {
            continue;
        }
        let mut next: Vec<usize> = graph
            .neighbors(node)
            .iter()
            .copied()
            .filter(|&n| !visited[n])
            .collect();
        next.shuffle(rng);
        for &n in next.iter().take(params.branching_factor) {
            visited[n] = true;
            witnesses.push(n);
            frontier.push_back((n, depth + 1));
        }
    }
    witnesses
}

/// Witness reputation: trust over every rating about `target` held by the
/// given witnesses. The evaluator's own ratings are never included because
/// the evaluator is not a witness to itself.
pub fn witness_reputation(
    histories: &RatingHistories,
    witnesses: &[ConsumerId],
    target: ProviderId,
    now: u64,
    params: &FireParams,
) -> Option<TrustScore> {
    component_trust(
        witnesses.iter().flat_map(|w| histories.ratings(*w, target)),
        now,
        params.lambda,
        params.gamma_wr,
    )
}

/// Composite trust over the available components:
/// `Σ W_K ρ_K T_K / Σ W_K ρ_K` over components that produced a score.
pub fn overall_trust(components: &[(Option<TrustScore>, f64)]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut values = Vec::new();
    for (component, weight) in components {
        if let Some(score) = component {
            num += weight * score.reliability * score.value;
            den += weight * score.reliability;
            values.push(score.value);
        }
    }
    if values.is_empty() {
        None
    } else if den > 0.0 {
        Some(num / den)
    } else {
        // All reliabilities are zero: no basis for weighting, average plainly.
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// The consumer found no provider within its radius this round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no nearby providers")]
pub struct NoNearbyProviders;

/// Provider selection: with probability `epsilon` explore — a uniformly
/// random unknown candidate when any exist, otherwise a uniformly random
/// candidate — and exploit the known candidate with maximal composite trust
/// the rest of the time, breaking ties uniformly. Exploration never shuts
/// off: providers change, so an occasional blind pick keeps estimates honest.
pub fn select_provider<T: Copy>(
    candidates: &[(T, Option<f64>)],
    epsilon: f64,
    rng: &mut SimRng,
) -> Result<T, NoNearbyProviders> {
    if candidates.is_empty() {
        return Err(NoNearbyProviders);
    }
    let known: Vec<(T, f64)> = candidates
        .iter()
        .filter_map(|(c, t)| t.map(|t| (*c, t)))
        .collect();
    let unknown: Vec<T> = candidates
        .iter()
        .filter(|(_, t)| t.is_none())
        .map(|(c, _)| *c)
        .collect();
    if known.is_empty() {
        return Ok(unknown[rng.random_range(0..unknown.len())]);
    }
    if epsilon > 0.0 && rng.random_bool(epsilon) {
        if !unknown.is_empty() {
            return Ok(unknown[rng.random_range(0..unknown.len())]);
        }
        return Ok(candidates[rng.random_range(0..candidates.len())].0);
    }
    let best = known.iter().map(|(_, t)| *t).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<T> = known.iter().filter(|(_, t)| *t == best).map(|(c, _)| *c).collect();
    if tied.len() == 1 {
        Ok(tied[0])
    } else {
        Ok(tied[rng.random_range(0..tied.len())])
    }
}
