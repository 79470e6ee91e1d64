//! Agent creation, provider performance sampling with distance degradation,
//! and the per-round dynamic mutations: drift, profile switching and
//! proportion-preserving replacement.

use rand::RngExt;
use rand_distr::StandardNormal;

use crate::world::{self, Location, WorldParams};
use crate::{ConsumerId, ProviderId, SimRng};

/// Utility-gain bounds; every delivered performance is clamped into them.
pub const UG_MIN: f64 = -10.0;
pub const UG_MAX: f64 = 10.0;

/// Consumer activity levels are drawn uniformly from this range.
pub const ACTIVITY_RANGE: (f64, f64) = (0.25, 1.0);

/// Service quality levels, ordered `WORST < BAD < OK < GOOD < PERFECT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PerformanceLevel {
    Worst,
    Bad,
    Ok,
    Good,
    Perfect,
}

impl PerformanceLevel {
    /// Wave order used by CA consumers: highest requirement first.
    pub const DESCENDING: [PerformanceLevel; 5] = [
        PerformanceLevel::Perfect,
        PerformanceLevel::Good,
        PerformanceLevel::Ok,
        PerformanceLevel::Bad,
        PerformanceLevel::Worst,
    ];

    /// Utility gained when a service is delivered exactly at this level.
    pub fn utility(self) -> f64 {
        match self {
            PerformanceLevel::Perfect => 10.0,
            PerformanceLevel::Good => 5.0,
            PerformanceLevel::Ok => 0.0,
            PerformanceLevel::Bad => -5.0,
            PerformanceLevel::Worst => -10.0,
        }
    }
}

/// Provider behavior profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    Good,
    Ordinary,
    Bad,
    Intermittent,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::Good,
        ProfileKind::Ordinary,
        ProfileKind::Bad,
        ProfileKind::Intermittent,
    ];

    /// Range the mean performance is drawn from; intermittent providers have
    /// no mean (they perform uniformly per interaction).
    pub fn mu_range(self) -> Option<(f64, f64)> {
        match self {
            ProfileKind::Good => Some((PerformanceLevel::Good.utility(), PerformanceLevel::Perfect.utility())),
            ProfileKind::Ordinary => Some((PerformanceLevel::Ok.utility(), PerformanceLevel::Good.utility())),
            ProfileKind::Bad => Some((PerformanceLevel::Worst.utility(), PerformanceLevel::Ok.utility())),
            ProfileKind::Intermittent => None,
        }
    }

    pub fn sigma(self) -> Option<f64> {
        match self {
            ProfileKind::Good => Some(1.0),
            ProfileKind::Ordinary | ProfileKind::Bad => Some(2.0),
            ProfileKind::Intermittent => None,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ProfileKind::Good => "good",
            ProfileKind::Ordinary => "ordinary",
            ProfileKind::Bad => "bad",
            ProfileKind::Intermittent => "intermittent",
        }
    }
}

/// The three consumer populations under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConsumerGroup {
    NoTrustModel,
    Fire,
    Ca,
}

impl ConsumerGroup {
    pub const ALL: [ConsumerGroup; 3] = [ConsumerGroup::NoTrustModel, ConsumerGroup::Fire, ConsumerGroup::Ca];

    pub fn index(self) -> usize {
        match self {
            ConsumerGroup::NoTrustModel => 0,
            ConsumerGroup::Fire => 1,
            ConsumerGroup::Ca => 2,
        }
    }

    /// Column key used in emitted CSV headers.
    pub fn key(self) -> &'static str {
        match self {
            ConsumerGroup::NoTrustModel => "notrust",
            ConsumerGroup::Fire => "fire",
            ConsumerGroup::Ca => "ca",
        }
    }
}

/// Initial population composition. Replacement and profile switching both
/// preserve it, keeping the provider mix half beneficial, half harmful.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationCounts {
    pub good: u32,
    pub ordinary: u32,
    pub intermittent: u32,
    pub bad: u32,
    pub consumers: u32,
}

impl Default for PopulationCounts {
    fn default() -> Self {
        Self {
            good: 10,
            ordinary: 40,
            intermittent: 5,
            bad: 45,
            consumers: 500,
        }
    }
}

impl PopulationCounts {
    pub fn providers_total(&self) -> u32 {
        self.good + self.ordinary + self.intermittent + self.bad
    }

    pub fn count_of(&self, kind: ProfileKind) -> u32 {
        match kind {
            ProfileKind::Good => self.good,
            ProfileKind::Ordinary => self.ordinary,
            ProfileKind::Bad => self.bad,
            ProfileKind::Intermittent => self.intermittent,
        }
    }

    /// Even split across the three groups; remainders go to the first groups
    /// in `[NoTrustModel, Fire, Ca]` order.
    pub fn group_split(&self) -> [u32; 3] {
        let base = self.consumers / 3;
        let rem = self.consumers % 3;
        [base + u32::from(rem > 0), base + u32::from(rem > 1), base]
    }
}

/// A service provider (trustee).
#[derive(Debug, Clone, PartialEq)]
pub struct Provider {
    pub id: ProviderId,
    pub loc: Location,
    /// Interaction range, also the undegraded delivery range.
    pub radius_of_operation: f64,
    pub kind: ProfileKind,
    /// Mean performance; absent for intermittent providers.
    pub mu: Option<f64>,
}

/// A service consumer (trustor).
#[derive(Debug, Clone, PartialEq)]
pub struct Consumer {
    pub id: ConsumerId,
    pub loc: Location,
    pub radius_of_operation: f64,
    /// Immutable for the consumer's lifetime.
    pub group: ConsumerGroup,
    /// Probability of requesting the service in a round.
    pub activity: f64,
    pub interaction_count: u32,
}

/// Creates a provider at a random location with `mu` drawn uniformly from the
/// profile range.
pub fn spawn_provider(id: ProviderId, kind: ProfileKind, world: &WorldParams, rng: &mut SimRng) -> Provider {
    let loc = world::random_location(rng);
    let mu = kind.mu_range().map(|(lo, hi)| rng.random_range(lo..=hi));
    Provider {
        id,
        loc,
        radius_of_operation: world.radius_of_operation,
        kind,
        mu,
    }
}

/// Creates a consumer at a random location with a uniform activity level.
pub fn spawn_consumer(id: ConsumerId, group: ConsumerGroup, world: &WorldParams, rng: &mut SimRng) -> Consumer {
    let loc = world::random_location(rng);
    let activity = rng.random_range(ACTIVITY_RANGE.0..=ACTIVITY_RANGE.1);
    Consumer {
        id,
        loc,
        radius_of_operation: world.radius_of_operation,
        group,
        activity,
        interaction_count: 0,
    }
}

/// Raw performance before distance degradation: normal around the provider
/// mean, or uniform in `[BAD, GOOD]` for intermittent providers.
pub fn base_performance(p: &Provider, rng: &mut SimRng) -> f64 {
    match (p.mu, p.kind.sigma()) {
        (Some(mu), Some(sigma)) => {
            let z: f64 = rng.sample(StandardNormal);
            mu + sigma * z
        }
        _ => rng.random_range(PerformanceLevel::Bad.utility()..=PerformanceLevel::Good.utility()),
    }
}

/// Applies linear degradation beyond the provider's range and clamps the
/// result into `[UG_MIN, UG_MAX]`.
pub fn delivered_performance(base: f64, dist: f64, range: f64, slope: f64) -> f64 {
    let degraded = if dist > range {
        base - slope * (dist - range)
    } else {
        base
    };
    degraded.clamp(UG_MIN, UG_MAX)
}

/// Samples the utility a consumer at `consumer_loc` gains from `p`.
pub fn sample_performance(p: &Provider, consumer_loc: &Location, degradation_slope: f64, rng: &mut SimRng) -> f64 {
    let base = base_performance(p, rng);
    let dist = world::distance(&p.loc, consumer_loc);
    delivered_performance(base, dist, p.radius_of_operation, degradation_slope)
}

/// Shifts the provider mean by a uniform amount in `[-magnitude, +magnitude]`,
/// clamped to the UG bounds. No-op for intermittent providers.
pub fn drift_performance(p: &mut Provider, magnitude: f64, rng: &mut SimRng) {
    assert!(magnitude >= 0.0, "drift magnitude must be non-negative");
    if let Some(mu) = p.mu {
        let delta = rng.random_range(-magnitude..=magnitude);
        p.mu = Some(apply_drift(mu, delta));
    }
}

/// Pure drift step; exposed separately so the clamp is directly testable.
pub fn apply_drift(mu: f64, delta: f64) -> f64 {
    (mu + delta).clamp(UG_MIN, UG_MAX)
}

/// Switches to a different profile kind and resamples the mean from the new
/// profile's range. Identity, location and any learned state held elsewhere
/// are untouched.
///
/// The new kind is drawn from the configured population proportions with the
/// current kind excluded. A uniform draw over the other kinds would slowly
/// push the population toward an even mix, losing the half-beneficial,
/// half-harmful backdrop the whole testbed assumes.
pub fn switch_profile(p: &mut Provider, mix: &PopulationCounts, rng: &mut SimRng) {
    let choices: Vec<(ProfileKind, u32)> = ProfileKind::ALL
        .iter()
        .copied()
        .filter(|k| *k != p.kind)
        .map(|k| (k, mix.count_of(k)))
        .collect();
    let total: u32 = choices.iter().map(|(_, w)| w).sum();
    let kind = if total == 0 {
        choices[rng.random_range(0..choices.len())].0
    } else {
        let mut pick = rng.random_range(0..total);
        let mut chosen = choices[0].0;
        for (k, w) in choices {
            if pick < w {
                chosen = k;
                break;
            }
            pick -= w;
        }
        chosen
    };
    p.kind = kind;
    p.mu = kind.mu_range().map(|(lo, hi)| rng.random_range(lo..=hi));
}

/// Replaces a random number of agents, bounded by `p_limit` of the
/// population. The count is drawn uniformly from `{0..floor(p_limit * n)}`,
/// victims are picked uniformly, and each newcomer takes its predecessor's
/// kind so per-kind counts are preserved exactly.
///
/// Returns the removed agents together with the slots they occupied;
/// newcomers sit in those same slots.
pub fn replace_population<A, K>(
    agents: &mut [A],
    p_limit: f64,
    kind_of: impl Fn(&A) -> K,
    mut spawn: impl FnMut(K, &mut SimRng) -> A,
    rng: &mut SimRng,
) -> Vec<(usize, A)> {
    assert!((0.0..=1.0).contains(&p_limit), "replacement limit must be a fraction");
    let max = (p_limit * agents.len() as f64).floor() as usize;
    if max == 0 {
        return Vec::new();
    }
    let count = rng.random_range(0..=max);
    let slots = rand::seq::index::sample(rng, agents.len(), count);
    let mut removed = Vec::with_capacity(count);
    for slot in slots {
        let newcomer = spawn(kind_of(&agents[slot]), rng);
        removed.push((slot, std::mem::replace(&mut agents[slot], newcomer)));
    }
    removed
}
