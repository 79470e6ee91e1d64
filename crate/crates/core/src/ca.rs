//! Trustee-side CA trust model: per-trustor connections with plastic weights,
//! threshold-gated task acceptance, and promotion of harder tasks after a
//! strong delivery.
//!
//! Each provider owns one [`TrusteeState`]; no state is ever shared between
//! trustees — decentralization is structural.

use std::collections::BTreeMap;

use crate::population::PerformanceLevel;
use crate::ConsumerId;

/// The single service category used by this testbed.
pub const DEFAULT_CATEGORY: u16 = 0;

/// Weight assigned to a first-ever connection when no same-task evidence
/// exists. Equal to the default threshold, which makes fresh trustees attempt
/// anything once (newcomer optimism).
pub const INITIAL_WEIGHT: f64 = 0.5;

/// A requested piece of work: category plus required performance level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Task {
    pub category: u16,
    pub requirement: PerformanceLevel,
}

impl Task {
    pub fn new(requirement: PerformanceLevel) -> Self {
        Self {
            category: DEFAULT_CATEGORY,
            requirement,
        }
    }
}

/// Lowest delivered performance that still counts as success for `task`.
pub fn min_successful_performance(task: Task) -> f64 {
    task.requirement.utility()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaParams {
    /// A task is attempted only when the connection weight reaches this gate.
    pub threshold: f64,
    /// Strengthening rate on success.
    pub alpha: f64,
    /// Weakening rate on failure.
    pub beta: f64,
}

impl Default for CaParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            alpha: 0.1,
            beta: 0.1,
        }
    }
}

/// A pending service request as stored in the trustee's list `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestMessage {
    pub trustor: ConsumerId,
    pub task: Task,
    pub round: u64,
}

/// Outcome of processing the selected request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Attempt,
    /// The task was already completed by another trustee this round.
    DeclineDone,
    /// The connection weight sits below the threshold.
    DeclineSubThreshold,
}

/// Weight update after an execution: `min(1, w + α(1−w))` on success,
/// `max(0, w − β(1−w))` on failure.
pub fn update_weight(w: f64, success: bool, params: &CaParams) -> f64 {
    if success {
        (w + params.alpha * (1.0 - w)).min(1.0)
    } else {
        (w - params.beta * (1.0 - w)).max(0.0)
    }
}

/// One provider's connection store and pending request list.
#[derive(Debug, Clone, Default)]
pub struct TrusteeState {
    /// At most one connection per (trustor, task); weights stay in [0, 1].
    connections: BTreeMap<(ConsumerId, Task), f64>,
    pending: Vec<RequestMessage>,
}

impl TrusteeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weight(&self, trustor: ConsumerId, task: Task) -> Option<f64> {
        self.connections.get(&(trustor, task)).copied()
    }

    pub fn connection_count(&self) -> usize {
        self.connections.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Stores the message and, when the (trustor, task) pair is new, creates
    /// the connection via [`TrusteeState::init_weight`]. Duplicates are kept:
    /// `M` is a list, not a set.
    pub fn handle_request(&mut self, m: RequestMessage) {
        let key = (m.trustor, m.task);
        if !self.connections.contains_key(&key) {
            let w = self.init_weight(m.trustor, m.task);
            self.connections.insert(key, w);
        }
        self.pending.push(m);
    }

    /// Initial weight for a new connection: the arithmetic mean of this
    /// trustee's weights toward *other* trustors for the same task when any
    /// exist, otherwise [`INITIAL_WEIGHT`].
    pub fn init_weight(&self, trustor: ConsumerId, task: Task) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for ((j, t), w) in &self.connections {
            if *t == task && *j != trustor {
                sum += *w;
                n += 1;
            }
        }
        if n == 0 {
            INITIAL_WEIGHT
        } else {
            sum / n as f64
        }
    }

    /// The pending message whose connection weight is maximal. Ties break on
    /// the lowest (round, trustor) and then on arrival order.
    pub fn select_best_request(&self) -> Option<&RequestMessage> {
        self.best_pending_index().map(|i| &self.pending[i])
    }

    /// Removes and returns the best pending message.
    pub fn take_best_request(&mut self) -> Option<RequestMessage> {
        self.best_pending_index().map(|i| self.pending.remove(i))
    }

    fn best_pending_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64, (u64, ConsumerId))> = None;
        for (i, m) in self.pending.iter().enumerate() {
            let w = self
                .weight(m.trustor, m.task)
                .expect("pending message without a connection");
            let key = (m.round, m.trustor);
            let better = match &best {
                None => true,
                Some((_, bw, bk)) => w > *bw || (w == *bw && key < *bk),
            };
            if better {
                best = Some((i, w, key));
            }
        }
        best.map(|(i, _, _)| i)
    }

    /// Alg. 1 gate for an already-taken message: decline when the task is
    /// done or the weight is below the threshold, attempt otherwise. The
    /// caller removed the message from `M` via [`TrusteeState::take_best_request`],
    /// so the deletion happens in every branch.
    pub fn attempt_task(&self, m: &RequestMessage, task_done: bool, params: &CaParams) -> Decision {
        if task_done {
            return Decision::DeclineDone;
        }
        let w = self
            .weight(m.trustor, m.task)
            .expect("attempted message without a connection");
        if w >= params.threshold {
            Decision::Attempt
        } else {
            Decision::DeclineSubThreshold
        }
    }

    /// Applies the post-execution weight update to the executed connection.
    pub fn apply_outcome(&mut self, trustor: ConsumerId, task: Task, success: bool, params: &CaParams) {
        let w = self
            .connections
            .get_mut(&(trustor, task))
            .expect("executed task without a connection");
        *w = update_weight(*w, success, params);
    }

    /// After executing a task for `trustor`, gives the same trustor's harder
    /// same-category tasks another chance: every connection below the
    /// threshold whose requirement the delivered performance would have
    /// satisfied is raised back to the threshold.
    pub fn promote_harder_tasks(&mut self, trustor: ConsumerId, executed: Task, performance: f64, params: &CaParams) {
        for ((j, t), w) in self.connections.iter_mut() {
            if *j == trustor
                && t.category == executed.category
                && t.requirement.utility() > executed.requirement.utility()
                && *w < params.threshold
                && performance >= min_successful_performance(*t)
            {
                *w = params.threshold;
            }
        }
    }

    /// Unserved requests expire at the end of every round.
    pub fn clear_pending(&mut self) {
        self.pending.clear();
    }

    /// Drops every connection owned by a departed trustor.
    pub fn remove_trustor(&mut self, trustor: ConsumerId) {
        self.connections.retain(|(j, _), _| *j != trustor);
    }

    #[cfg(test)]
    pub(crate) fn set_weight(&mut self, trustor: ConsumerId, task: Task, w: f64) {
        self.connections.insert((trustor, task), w);
    }
}
