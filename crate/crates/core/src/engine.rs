//! The round-based simulation loop: activity draws, direct service for the
//! NoTrustModel and FIRE groups, the descending-wave broadcast protocol for
//! CA consumers, and the population dynamics applied between rounds.
//!
//! A run is strictly single-threaded and fully determined by its seed.
//! Independent runs (distinct seeds) share no mutable state and may execute
//! in parallel.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};

use crate::ca::{self, CaParams, Decision, RequestMessage, Task, TrusteeState};
use crate::fire::{self, AcquaintanceGraph, CertifiedStore, FireParams, Rating, RatingHistories, RoleRules};
use crate::population::{
    self, Consumer, ConsumerGroup, PerformanceLevel, PopulationCounts, ProfileKind, Provider,
};
use crate::world::{self, WorldParams};
use crate::{ConsumerId, Error, ProviderId, SimRng};

/// Per-round dynamic factors. All probabilities default to zero (the static
/// setting); the waiting time between CA waves is recorded for fidelity but
/// the waves are synchronous barriers, so it has no logical effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    /// Provider population change limit per round.
    pub p_ppc: f64,
    /// Consumer population change limit per round.
    pub p_cpc: f64,
    /// Per-provider location change probability.
    pub p_plc: f64,
    /// Per-consumer location change probability.
    pub p_clc: f64,
    /// Angular jitter bound (radians) for location changes.
    pub delta_phi_max: f64,
    /// Per-provider performance drift probability.
    pub p_mu_c: f64,
    /// Drift magnitude M (UG units).
    pub drift_magnitude: f64,
    /// Per-provider profile switch probability.
    pub p_profile_switch: f64,
    /// Stage waiting time (informational only).
    pub waiting_time_ms: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            p_ppc: 0.0,
            p_cpc: 0.0,
            p_plc: 0.0,
            p_clc: 0.0,
            delta_phi_max: std::f64::consts::FRAC_PI_4,
            p_mu_c: 0.0,
            drift_magnitude: 0.0,
            p_profile_switch: 0.0,
            waiting_time_ms: 1000,
        }
    }
}

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub rounds: u64,
    pub counts: PopulationCounts,
    pub world: WorldParams,
    pub dynamics: DynamicsConfig,
    pub ca: CaParams,
    pub fire: FireParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rounds: 500,
            counts: PopulationCounts::default(),
            world: WorldParams::default(),
            dynamics: DynamicsConfig::default(),
            ca: CaParams::default(),
            fire: FireParams::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if self.counts.providers_total() == 0 {
            problems.push("provider count must be positive".to_string());
        }
        if self.counts.consumers == 0 {
            problems.push("consumer count must be positive".to_string());
        }
        for (name, p) in [
            ("p_ppc", self.dynamics.p_ppc),
            ("p_cpc", self.dynamics.p_cpc),
            ("p_plc", self.dynamics.p_plc),
            ("p_clc", self.dynamics.p_clc),
            ("p_mu_c", self.dynamics.p_mu_c),
            ("p_profile_switch", self.dynamics.p_profile_switch),
            ("ca_threshold", self.ca.threshold),
            ("fire_exploration", self.fire.exploration),
            ("fire_witness_response", self.fire.witness_response),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} = {p} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("delta_phi_max", self.dynamics.delta_phi_max),
            ("drift_magnitude", self.dynamics.drift_magnitude),
            ("radius_of_operation", self.world.radius_of_operation),
            ("degradation_slope", self.world.degradation_slope),
        ] {
            if !(v >= 0.0) {
                problems.push(format!("{name} = {v} must be non-negative"));
            }
        }
        for (name, v) in [
            ("ca_alpha", self.ca.alpha),
            ("ca_beta", self.ca.beta),
            ("fire_lambda", self.fire.lambda),
            ("fire_gamma_it", self.fire.gamma_it),
            ("fire_gamma_rt", self.fire.gamma_rt),
            ("fire_gamma_wr", self.fire.gamma_wr),
            ("fire_gamma_cr", self.fire.gamma_cr),
        ] {
            if !(v > 0.0) {
                problems.push(format!("{name} = {v} must be positive"));
            }
        }
        if self.fire.history_size == 0 {
            problems.push("fire_history_size must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// One service interaction as logged by the testbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionRecord {
    pub run_id: u32,
    pub group: ConsumerGroup,
    pub consumer: ConsumerId,
    /// Per-consumer ordinal, gapless from 1 over the consumer's lifetime.
    pub interaction_index: u32,
    pub round: u64,
    pub ug: f64,
}

/// Per-round service accounting, indexed by [`ConsumerGroup::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundStats {
    pub round: u64,
    pub active: [u32; 3],
    pub served: [u32; 3],
    /// Active consumers with zero nearby providers.
    pub isolated: [u32; 3],
    /// Active CA consumers left without service after the WORST wave.
    pub ca_unserved: u32,
}

/// Why an active CA consumer ended a sampled round unserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaAuditEntry {
    pub round: u64,
    pub consumer: ConsumerId,
    pub nearby_providers: u32,
    /// Highest weight any nearby provider holds for any of the consumer's
    /// broadcast tasks; `None` when the consumer is isolated.
    pub max_relevant_weight: Option<f64>,
    /// True when no nearby provider holds a supra-threshold weight for any
    /// of the consumer's tasks (vacuously true for isolated consumers).
    pub all_sub_threshold: bool,
}

/// Everything a single seeded run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: u32,
    pub seed: u64,
    pub records: Vec<InteractionRecord>,
    pub round_stats: Vec<RoundStats>,
    pub ca_audit: Vec<CaAuditEntry>,
}

/// One seeded simulation run over the configured population.
pub struct Simulation {
    cfg: SimulationConfig,
    run_id: u32,
    seed: u64,
    rng: SimRng,
    round: u64,
    providers: Vec<Provider>,
    trustees: Vec<TrusteeState>,
    certified: Vec<CertifiedStore>,
    consumers: Vec<Consumer>,
    consumer_slot: BTreeMap<ConsumerId, usize>,
    histories: RatingHistories,
    graph: AcquaintanceGraph,
    role_rules: RoleRules,
    next_provider_id: u64,
    next_consumer_id: u64,
    audit_rounds: BTreeSet<u64>,
    records: Vec<InteractionRecord>,
    round_stats: Vec<RoundStats>,
    ca_audit: Vec<CaAuditEntry>,
}

impl Simulation {
    pub fn new(cfg: SimulationConfig, seed: u64, run_id: u32, audit_rounds: &[u64]) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut providers = Vec::with_capacity(cfg.counts.providers_total() as usize);
        let mut next_provider_id = 0u64;
        for (kind, count) in [
            (ProfileKind::Good, cfg.counts.good),
            (ProfileKind::Ordinary, cfg.counts.ordinary),
            (ProfileKind::Intermittent, cfg.counts.intermittent),
            (ProfileKind::Bad, cfg.counts.bad),
        ] {
            for _ in 0..count {
                providers.push(population::spawn_provider(
                    ProviderId(next_provider_id),
                    kind,
                    &cfg.world,
                    &mut rng,
                ));
                next_provider_id += 1;
            }
        }
        let mut consumers = Vec::with_capacity(cfg.counts.consumers as usize);
        let mut next_consumer_id = 0u64;
        for (group, count) in ConsumerGroup::ALL.iter().zip(cfg.counts.group_split()) {
            for _ in 0..count {
                consumers.push(population::spawn_consumer(
                    ConsumerId(next_consumer_id),
                    *group,
                    &cfg.world,
                    &mut rng,
                ));
                next_consumer_id += 1;
            }
        }
        let consumer_slot = consumers.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let trustees = vec![TrusteeState::new(); providers.len()];
        let certified = vec![CertifiedStore::new(cfg.fire.certified_capacity); providers.len()];
        let graph = AcquaintanceGraph::build(&consumers);
        let histories = RatingHistories::new(cfg.fire.history_size);
        Self {
            cfg,
            run_id,
            seed,
            rng,
            round: 1,
            providers,
            trustees,
            certified,
            consumers,
            consumer_slot,
            histories,
            graph,
            role_rules: RoleRules::default(),
            next_provider_id,
            next_consumer_id,
            audit_rounds: audit_rounds.iter().copied().collect(),
            records: Vec::new(),
            round_stats: Vec::new(),
            ca_audit: Vec::new(),
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput {
            run_id: self.run_id,
            seed: self.seed,
            records: self.records,
            round_stats: self.round_stats,
            ca_audit: self.ca_audit,
        }
    }

    /// Executes one full round: activity draws, direct service, CA waves,
    /// dynamics, round increment.
    pub fn run_round(&mut self) {
        let round = self.round;
        let mut stats = RoundStats {
            round,
            ..RoundStats::default()
        };

        let active: Vec<bool> = (0..self.consumers.len())
            .map(|i| {
                let a = self.consumers[i].activity;
                self.rng.random_bool(a)
            })
            .collect();
        let provider_locs: Vec<world::Location> = self.providers.iter().map(|p| p.loc).collect();

        // Direct service for NoTrustModel and FIRE consumers, in slot order.
        for ci in 0..self.consumers.len() {
            let group = self.consumers[ci].group;
            if !active[ci] || group == ConsumerGroup::Ca {
                continue;
            }
            stats.active[group.index()] += 1;
            match self.serve_direct(ci, round, &provider_locs) {
                Some(_) => stats.served[group.index()] += 1,
                None => stats.isolated[group.index()] += 1,
            }
        }

        // CA broadcast waves.
        let active_ca: Vec<usize> = (0..self.consumers.len())
            .filter(|&ci| active[ci] && self.consumers[ci].group == ConsumerGroup::Ca)
            .collect();
        stats.active[ConsumerGroup::Ca.index()] = active_ca.len() as u32;
        self.ca_waves(&active_ca, round, &provider_locs, &mut stats);

        self.apply_dynamics();
        self.round += 1;
        self.round_stats.push(stats);
    }

    pub fn run_to_completion(&mut self) {
        for _ in 0..self.cfg.rounds {
            self.run_round();
        }
    }

    /// Serves one active non-CA consumer. Returns the UG, or None when no
    /// provider is nearby (the consumer skips the round).
    fn serve_direct(&mut self, ci: usize, round: u64, provider_locs: &[world::Location]) -> Option<f64> {
        let consumer = &self.consumers[ci];
        let candidates = world::nearby_indices(
            &consumer.loc,
            provider_locs,
            consumer.radius_of_operation,
            None,
        );
        if candidates.is_empty() {
            return None;
        }
        let group = consumer.group;
        let consumer_id = consumer.id;
        let pi = match group {
            ConsumerGroup::NoTrustModel => candidates[self.rng.random_range(0..candidates.len())],
            ConsumerGroup::Fire => {
                let visited = fire::referral_witnesses(&self.graph, ci, &self.cfg.fire, &mut self.rng);
                let witnesses: Vec<ConsumerId> =
                    fire::responding_witnesses(&visited, self.cfg.fire.witness_response, &mut self.rng)
                        .into_iter()
                        .map(|slot| self.consumers[slot].id)
                        .collect();
                let fp = &self.cfg.fire;
                let scored: Vec<(usize, Option<f64>)> = candidates
                    .iter()
                    .map(|&pi| {
                        let target = self.providers[pi].id;
                        let it = fire::interaction_trust(&self.histories, consumer_id, target, round, fp);
                        let rt = fire::role_based_trust(&self.role_rules);
                        let wr = fire::witness_reputation(&self.histories, &witnesses, target, round, fp);
                        let cr = fire::certified_reputation(&self.certified[pi], round, fp);
                        let overall = fire::overall_trust(&[
                            (it, fp.w_it),
                            (rt, fp.w_rt),
                            (wr, fp.w_wr),
                            (cr, fp.w_cr),
                        ]);
                        (pi, overall)
                    })
                    .collect();
                fire::select_provider(&scored, self.cfg.fire.exploration, &mut self.rng)
                    .expect("candidate set checked non-empty")
            }
            ConsumerGroup::Ca => unreachable!("CA consumers are served by waves"),
        };
        let ug = population::sample_performance(
            &self.providers[pi],
            &self.consumers[ci].loc,
            self.cfg.world.degradation_slope,
            &mut self.rng,
        );
        self.emit_record(ci, round, ug);
        if group == ConsumerGroup::Fire {
            let rating = Rating {
                evaluator: consumer_id,
                target: self.providers[pi].id,
                round,
                value: ug,
            };
            self.histories.record(rating);
            // The provider keeps the rating as possible future evidence.
            self.certified[pi].offer(rating);
        }
        Some(ug)
    }

    /// The CA protocol: five broadcast waves at descending requirement
    /// levels. Per wave every still-unserved consumer broadcasts to its
    /// nearby providers, then providers in fresh random order run their
    /// processing loop until the pending list empties: select the
    /// max-weight message, gate on the threshold and the task state,
    /// execute, delete. A wave is long enough for every accepted request
    /// to be worked off, so one provider may serve several consumers in a
    /// single wave.
    fn ca_waves(
        &mut self,
        active_ca: &[usize],
        round: u64,
        provider_locs: &[world::Location],
        stats: &mut RoundStats,
    ) {
        let ca_params = self.cfg.ca;
        let nearby: BTreeMap<usize, Vec<usize>> = active_ca
            .iter()
            .map(|&ci| {
                let c = &self.consumers[ci];
                (
                    ci,
                    world::nearby_indices(&c.loc, provider_locs, c.radius_of_operation, None),
                )
            })
            .collect();
        stats.isolated[ConsumerGroup::Ca.index()] =
            nearby.values().filter(|v| v.is_empty()).count() as u32;

        let mut done: BTreeSet<ConsumerId> = BTreeSet::new();
        let mut unserved: Vec<usize> = active_ca.to_vec();
        for level in PerformanceLevel::DESCENDING {
            let task = Task::new(level);
            for &ci in &unserved {
                let msg = RequestMessage {
                    trustor: self.consumers[ci].id,
                    task,
                    round,
                };
                for &pi in &nearby[&ci] {
                    self.trustees[pi].handle_request(msg);
                }
            }
            let mut order: Vec<usize> = (0..self.providers.len()).collect();
            order.shuffle(&mut self.rng);
            for pi in order {
                while let Some(msg) = self.trustees[pi].take_best_request() {
                    let decision = self.trustees[pi].attempt_task(
                        &msg,
                        done.contains(&msg.trustor),
                        &ca_params,
                    );
                    if decision != Decision::Attempt {
                        continue;
                    }
                    let ci = self.consumer_slot[&msg.trustor];
                    let ug = population::sample_performance(
                        &self.providers[pi],
                        &self.consumers[ci].loc,
                        self.cfg.world.degradation_slope,
                        &mut self.rng,
                    );
                    done.insert(msg.trustor);
                    let success = ug >= ca::min_successful_performance(msg.task);
                    self.trustees[pi].apply_outcome(msg.trustor, msg.task, success, &ca_params);
                    self.trustees[pi].promote_harder_tasks(msg.trustor, msg.task, ug, &ca_params);
                    self.emit_record(ci, round, ug);
                    stats.served[ConsumerGroup::Ca.index()] += 1;
                }
            }
            unserved.retain(|&ci| !done.contains(&self.consumers[ci].id));
        }
        stats.ca_unserved = unserved.len() as u32;

        if self.audit_rounds.contains(&round) {
            for &ci in &unserved {
                let consumer_id = self.consumers[ci].id;
                let near = &nearby[&ci];
                let mut max_weight: Option<f64> = None;
                for &pi in near {
                    for level in PerformanceLevel::DESCENDING {
                        if let Some(w) = self.trustees[pi].weight(consumer_id, Task::new(level)) {
                            max_weight = Some(max_weight.map_or(w, |m: f64| m.max(w)));
                        }
                    }
                }
                self.ca_audit.push(CaAuditEntry {
                    round,
                    consumer: consumer_id,
                    nearby_providers: near.len() as u32,
                    max_relevant_weight: max_weight,
                    all_sub_threshold: max_weight.map_or(true, |w| w < ca_params.threshold),
                });
            }
        }

        // Unserved requests expire at round end.
        for t in &mut self.trustees {
            t.clear_pending();
        }
    }

    fn emit_record(&mut self, ci: usize, round: u64, ug: f64) {
        let consumer = &mut self.consumers[ci];
        consumer.interaction_count += 1;
        self.records.push(InteractionRecord {
            run_id: self.run_id,
            group: consumer.group,
            consumer: consumer.id,
            interaction_index: consumer.interaction_count,
            round,
            ug,
        });
    }

    /// Population dynamics in fixed order: provider replacement, consumer
    /// replacement, provider jitter, consumer jitter, performance drift,
    /// profile switch.
    fn apply_dynamics(&mut self) {
        let d = self.cfg.dynamics;
        let world = self.cfg.world;

        if d.p_ppc > 0.0 {
            let next_id = &mut self.next_provider_id;
            let removed = population::replace_population(
                &mut self.providers,
                d.p_ppc,
                |p| p.kind,
                |kind, rng| {
                    let id = ProviderId(*next_id);
                    *next_id += 1;
                    population::spawn_provider(id, kind, &world, rng)
                },
                &mut self.rng,
            );
            for (slot, _old) in removed {
                // A newcomer knows nothing and retains nothing.
                self.trustees[slot] = TrusteeState::new();
                self.certified[slot] = CertifiedStore::new(self.cfg.fire.certified_capacity);
            }
        }

        if d.p_cpc > 0.0 {
            let next_id = &mut self.next_consumer_id;
            let removed = population::replace_population(
                &mut self.consumers,
                d.p_cpc,
                |c| c.group,
                |group, rng| {
                    let id = ConsumerId(*next_id);
                    *next_id += 1;
                    population::spawn_consumer(id, group, &world, rng)
                },
                &mut self.rng,
            );
            for (slot, old) in &removed {
                self.histories.remove_evaluator(old.id);
                for t in &mut self.trustees {
                    t.remove_trustor(old.id);
                }
                self.consumer_slot.remove(&old.id);
                self.consumer_slot.insert(self.consumers[*slot].id, *slot);
            }
            for (slot, _) in &removed {
                self.graph.refresh(*slot, &self.consumers);
            }
        }

        if d.p_plc > 0.0 {
            for p in &mut self.providers {
                if self.rng.random_bool(d.p_plc) {
                    p.loc = world::apply_angular_jitter(&p.loc, d.delta_phi_max, &mut self.rng);
                }
            }
        }

        if d.p_clc > 0.0 {
            let mut moved = Vec::new();
            for (slot, c) in self.consumers.iter_mut().enumerate() {
                if self.rng.random_bool(d.p_clc) {
                    c.loc = world::apply_angular_jitter(&c.loc, d.delta_phi_max, &mut self.rng);
                    moved.push(slot);
                }
            }
            for slot in moved {
                self.graph.refresh(slot, &self.consumers);
            }
        }

        if d.p_mu_c > 0.0 {
            for p in &mut self.providers {
                if self.rng.random_bool(d.p_mu_c) {
                    population::drift_performance(p, d.drift_magnitude, &mut self.rng);
                }
            }
        }

        if d.p_profile_switch > 0.0 {
            let mix = self.cfg.counts;
            for p in &mut self.providers {
                if self.rng.random_bool(d.p_profile_switch) {
                    population::switch_profile(p, &mix, &mut self.rng);
                }
            }
        }
    }
}

/// Runs one full simulation after validating the configuration.
pub fn run_simulation(
    cfg: &SimulationConfig,
    seed: u64,
    run_id: u32,
    audit_rounds: &[u64],
) -> Result<RunOutput, Error> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg.clone(), seed, run_id, audit_rounds);
    sim.run_to_completion();
    Ok(sim.into_output())
}
