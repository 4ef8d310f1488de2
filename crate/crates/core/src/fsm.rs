//! Interaction state machines: each interaction compiles to an FSM whose
//! states track progress through the policy sequence. One-off policies
//! consume one packet per direction; periodic and transient policies hold
//! an active state that accepts matching traffic until the next policy
//! fires or, for transients, a duration/count limit expires.

use std::collections::HashMap;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::matcher::{
    eval_policy, transient_within, Admission, Direction, MatchEffects, MatchEnv, MatchOutcome,
    RateBucket, TransientCounters, TransientState,
};
use crate::packet::{Packet, Timestamp};
use crate::profile::{Interaction, Policy, PolicyKind};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("interaction `{0}` has no policies")]
    Empty(String),
    #[error("interaction `{0}`: a periodic policy cannot be last")]
    TrailingPeriodic(String),
    #[error("interaction `{0}`: state {1} unreachable")]
    Unreachable(String, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpectDir {
    Forward,
    Backward,
    Both,
}

impl ExpectDir {
    fn directions(self) -> &'static [Direction] {
        match self {
            ExpectDir::Forward => &[Direction::Forward],
            ExpectDir::Backward => &[Direction::Backward],
            ExpectDir::Both => &[Direction::Forward, Direction::Backward],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExpectDir::Forward => "fwd",
            ExpectDir::Backward => "bwd",
            ExpectDir::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRole {
    /// Awaiting the policy's first packet (state 0, or a one-off await).
    AwaitFirst,
    /// Awaiting the reverse packet of a bidirectional one-off.
    AwaitSecond,
    /// A periodic or transient policy is active here.
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateDesc {
    pub policy: usize,
    pub dir: ExpectDir,
    pub kind: PolicyKind,
    pub role: StateRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Guard {
    NextMatch,
    SecondDirection,
    Expiry,
}

impl Guard {
    pub fn label(self) -> &'static str {
        match self {
            Guard::NextMatch => "next-match",
            Guard::SecondDirection => "second-direction",
            Guard::Expiry => "expiry",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: usize,
    pub policy: usize,
    pub dir: ExpectDir,
    pub guard: Guard,
    pub to: usize,
}

/// Compiled machine; state 0 is the idle/initial state.
#[derive(Debug, Clone)]
pub struct InteractionFsm {
    pub interaction: Interaction,
    pub states: Vec<StateDesc>,
    pub transitions: Vec<Transition>,
}

/// First direction a policy can be entered with: one-offs always start
/// forward, active policies accept both directions when bidirectional.
fn entry_dir(policy: &Policy) -> ExpectDir {
    match policy.kind {
        PolicyKind::OneOff => ExpectDir::Forward,
        _ if policy.bidirectional => ExpectDir::Both,
        _ => ExpectDir::Forward,
    }
}

/// Deterministic construction over the policy sequence. Each one-off
/// contributes its await state(s); each periodic/transient contributes an
/// active state entered by the previous policy's completion (or by its
/// own first matching packet when it opens the interaction).
pub fn compile_interaction(interaction: &Interaction) -> Result<InteractionFsm, CompileError> {
    let policies = &interaction.policies;
    if policies.is_empty() {
        return Err(CompileError::Empty(interaction.name.clone()));
    }
    if policies.last().unwrap().kind == PolicyKind::Periodic {
        return Err(CompileError::TrailingPeriodic(interaction.name.clone()));
    }
    let n = policies.len();

    let mut states: Vec<StateDesc> = vec![StateDesc {
        policy: 0,
        dir: entry_dir(&policies[0]),
        kind: policies[0].kind,
        role: StateRole::AwaitFirst,
    }];
    // home[j]: where policy j's matching lives (await state for one-offs,
    // active state for periodic/transient). A one-off following an active
    // policy has no await state: its packet fires from the active state.
    let mut home: Vec<Option<usize>> = vec![None; n];
    let mut mid: Vec<Option<usize>> = vec![None; n];

    for j in 0..n {
        let p = &policies[j];
        match p.kind {
            PolicyKind::OneOff => {
                if j == 0 {
                    home[j] = Some(0);
                } else if policies[j - 1].kind == PolicyKind::OneOff {
                    states.push(StateDesc {
                        policy: j,
                        dir: ExpectDir::Forward,
                        kind: p.kind,
                        role: StateRole::AwaitFirst,
                    });
                    home[j] = Some(states.len() - 1);
                }
                if p.bidirectional {
                    states.push(StateDesc {
                        policy: j,
                        dir: ExpectDir::Backward,
                        kind: p.kind,
                        role: StateRole::AwaitSecond,
                    });
                    mid[j] = Some(states.len() - 1);
                }
            }
            PolicyKind::Periodic | PolicyKind::Transient => {
                states.push(StateDesc {
                    policy: j,
                    dir: entry_dir(p),
                    kind: p.kind,
                    role: StateRole::Active,
                });
                home[j] = Some(states.len() - 1);
            }
        }
    }

    // Landing state of policy j's first packet.
    let first_landing = |j: usize, home: &[Option<usize>], mid: &[Option<usize>]| -> usize {
        let p = &policies[j];
        match p.kind {
            PolicyKind::OneOff if p.bidirectional => mid[j].unwrap(),
            PolicyKind::OneOff => {
                // Unidirectional one-off: consumed outright.
                if j + 1 == n {
                    0
                } else {
                    home[j + 1].unwrap_or(0)
                }
            }
            _ => home[j].unwrap(),
        }
    };
    // State after policy j has fully completed.
    let after = |j: usize, home: &[Option<usize>]| -> usize {
        if j + 1 == n {
            0
        } else {
            home[j + 1].unwrap_or(0)
        }
    };

    let mut transitions: Vec<Transition> = Vec::new();
    for j in 0..n {
        let p = &policies[j];
        match p.kind {
            PolicyKind::OneOff => {
                if let Some(src) = home[j] {
                    transitions.push(Transition {
                        from: src,
                        policy: j,
                        dir: ExpectDir::Forward,
                        guard: Guard::NextMatch,
                        to: first_landing(j, &home, &mid),
                    });
                }
                if let Some(m) = mid[j] {
                    transitions.push(Transition {
                        from: m,
                        policy: j,
                        dir: ExpectDir::Backward,
                        guard: Guard::SecondDirection,
                        to: after(j, &home),
                    });
                }
            }
            PolicyKind::Periodic | PolicyKind::Transient => {
                let active = home[j].unwrap();
                if j == 0 {
                    transitions.push(Transition {
                        from: 0,
                        policy: 0,
                        dir: entry_dir(p),
                        guard: Guard::NextMatch,
                        to: active,
                    });
                }
                transitions.push(Transition {
                    from: active,
                    policy: j,
                    dir: entry_dir(p),
                    guard: Guard::NextMatch,
                    to: active,
                });
                if j + 1 < n {
                    let next = &policies[j + 1];
                    transitions.push(Transition {
                        from: active,
                        policy: j + 1,
                        dir: entry_dir(next),
                        guard: Guard::NextMatch,
                        to: first_landing(j + 1, &home, &mid),
                    });
                }
            }
        }
    }
    // Expiry exits: back to idle, plus shortcuts mirroring the idle
    // state's entry triggers for the packet that caused the exit.
    let idle_edges: Vec<Transition> = transitions.iter().filter(|t| t.from == 0).copied().collect();
    for j in 0..n {
        if policies[j].kind != PolicyKind::Transient {
            continue;
        }
        let active = home[j].unwrap();
        transitions.push(Transition {
            from: active,
            policy: j,
            dir: entry_dir(&policies[j]),
            guard: Guard::Expiry,
            to: 0,
        });
        for edge in &idle_edges {
            transitions.push(Transition {
                from: active,
                policy: edge.policy,
                dir: edge.dir,
                guard: Guard::Expiry,
                to: edge.to,
            });
        }
    }

    let fsm = InteractionFsm {
        interaction: interaction.clone(),
        states,
        transitions,
    };
    if let Some(state) = fsm.unreachable_state() {
        return Err(CompileError::Unreachable(interaction.name.clone(), state));
    }
    Ok(fsm)
}

impl InteractionFsm {
    fn unreachable_state(&self) -> Option<usize> {
        let mut seen = vec![false; self.states.len()];
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(s) = stack.pop() {
            for t in self.transitions.iter().filter(|t| t.from == s) {
                if !seen[t.to] {
                    seen[t.to] = true;
                    stack.push(t.to);
                }
            }
        }
        seen.iter().position(|&v| !v)
    }

    pub fn to_json(&self) -> Value {
        let states: Vec<Value> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                json!({
                    "id": i,
                    "initial": i == 0,
                    "policy": self.interaction.policies[s.policy].name,
                    "direction": s.dir.label(),
                    "kind": self.interaction.policies[s.policy].kind.to_string(),
                })
            })
            .collect();
        let transitions: Vec<Value> = self
            .transitions
            .iter()
            .map(|t| {
                json!({
                    "from": t.from,
                    "policy": self.interaction.policies[t.policy].name,
                    "direction": t.dir.label(),
                    "guard": t.guard.label(),
                    "to": t.to,
                })
            })
            .collect();
        json!({
            "v": 1,
            "interaction": self.interaction.name,
            "states": states,
            "transitions": transitions,
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("digraph \"{}\" {{\n", self.interaction.name));
        out.push_str("  rankdir=LR;\n  node [shape=circle];\n");
        out.push_str("  start [shape=point];\n  start -> s0;\n");
        for (i, _) in self.states.iter().enumerate() {
            out.push_str(&format!("  s{i} [label=\"{i}\"];\n"));
        }
        for t in &self.transitions {
            let label = format!(
                "{}, {} ({})",
                self.interaction.policies[t.policy].name,
                t.dir.label(),
                t.guard.label()
            );
            out.push_str(&format!("  s{} -> s{} [label=\"{label}\"];\n", t.from, t.to));
        }
        out.push_str("}\n");
        out
    }
}

// ---------------------------------------------------------------------------
// Runtime
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepResult {
    MatchAccept {
        policy: usize,
        state_before: usize,
        state_after: usize,
    },
    NoMatch {
        /// A matching periodic policy was over its rate.
        rate_exceeded: bool,
        /// Some policy failed only because a domain name is unresolved.
        unresolved: bool,
    },
}

impl StepResult {
    pub fn accepted(&self) -> bool {
        matches!(self, StepResult::MatchAccept { .. })
    }
}

/// Planned effect of one packet on a runtime; committed only when the
/// engine's global verdict admits the packet.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub result: StepResult,
    pub effects: MatchEffects,
    new_current: Option<usize>,
    bucket_updates: Vec<(usize, RateBucket)>,
    counter_updates: Vec<(usize, TransientCounters)>,
}

/// Mutable per-interaction state: current FSM state, one rate bucket per
/// periodic policy, and counters per transient state.
#[derive(Debug, Clone)]
pub struct FsmRuntime {
    pub fsm: Arc<InteractionFsm>,
    current: usize,
    buckets: HashMap<usize, RateBucket>,
    counters: HashMap<usize, TransientCounters>,
}

impl FsmRuntime {
    pub fn new(fsm: Arc<InteractionFsm>) -> Self {
        let buckets = fsm
            .interaction
            .policies
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match (&p.kind, &p.stats) {
                (PolicyKind::Periodic, Some(stats)) => {
                    stats.rate.as_ref().map(|r| (i, RateBucket::from_rate(r)))
                }
                _ => None,
            })
            .collect();
        FsmRuntime {
            fsm,
            current: 0,
            buckets,
            counters: HashMap::new(),
        }
    }

    pub fn current_state(&self) -> usize {
        self.current
    }

    pub fn counters(&self, state: usize) -> Option<&TransientCounters> {
        self.counters.get(&state)
    }

    pub fn bucket(&self, policy: usize) -> Option<&RateBucket> {
        self.buckets.get(&policy)
    }

    /// Evaluate one packet without mutating anything.
    pub fn plan(&self, pkt: &Packet, env: &MatchEnv) -> StepPlan {
        let ts = pkt.timestamp;
        let mut ctx = PlanCtx {
            runtime: self,
            pkt,
            env,
            ts,
            rate_exceeded: false,
            unresolved: false,
            effects: MatchEffects::default(),
        };
        match ctx.eval_state(self.current, true) {
            Some(hit) => StepPlan {
                result: StepResult::MatchAccept {
                    policy: hit.policy,
                    state_before: self.current,
                    state_after: hit.to,
                },
                effects: ctx.effects,
                new_current: Some(hit.to),
                bucket_updates: hit.bucket_updates,
                counter_updates: hit.counter_updates,
            },
            None => StepPlan {
                result: StepResult::NoMatch {
                    rate_exceeded: ctx.rate_exceeded,
                    unresolved: ctx.unresolved,
                },
                effects: ctx.effects,
                new_current: None,
                bucket_updates: Vec::new(),
                counter_updates: Vec::new(),
            },
        }
    }

    /// Apply a plan; a rejected packet leaves the runtime untouched.
    /// Bucket time advances lazily inside admission checks, so identical
    /// accepted-packet histories yield bit-identical bucket state.
    pub fn commit(&mut self, plan: &StepPlan, accepted: bool) {
        if !accepted {
            return;
        }
        for (policy, bucket) in &plan.bucket_updates {
            self.buckets.insert(*policy, bucket.clone());
        }
        for (state, counters) in &plan.counter_updates {
            self.counters.insert(*state, *counters);
        }
        if let Some(next) = plan.new_current {
            self.current = next;
        }
    }

    /// Single-runtime convenience: plan and commit in one call.
    pub fn step(&mut self, pkt: &Packet, env: &MatchEnv) -> StepResult {
        let plan = self.plan(pkt, env);
        let accepted = plan.result.accepted();
        self.commit(&plan, accepted);
        plan.result
    }
}

struct EdgeHit {
    policy: usize,
    to: usize,
    bucket_updates: Vec<(usize, RateBucket)>,
    counter_updates: Vec<(usize, TransientCounters)>,
}

struct PlanCtx<'a> {
    runtime: &'a FsmRuntime,
    pkt: &'a Packet,
    env: &'a MatchEnv<'a>,
    ts: Timestamp,
    rate_exceeded: bool,
    unresolved: bool,
    effects: MatchEffects,
}

impl PlanCtx<'_> {
    /// Evaluation order within a state: next-policy triggers first, then
    /// transient expiry (exit and re-evaluate from idle), then the
    /// state's own policy.
    fn eval_state(&mut self, state: usize, allow_expiry: bool) -> Option<EdgeHit> {
        let fsm = &self.runtime.fsm;
        let desc = fsm.states[state];
        let own: Vec<Transition> = fsm
            .transitions
            .iter()
            .filter(|t| t.from == state && t.guard != Guard::Expiry && t.policy == desc.policy)
            .copied()
            .collect();
        let exits: Vec<Transition> = fsm
            .transitions
            .iter()
            .filter(|t| t.from == state && t.guard != Guard::Expiry && t.policy != desc.policy)
            .copied()
            .collect();

        for edge in exits {
            if let Some(hit) = self.try_edge(&edge) {
                return Some(hit);
            }
        }

        if desc.role == StateRole::Active && desc.kind == PolicyKind::Transient && allow_expiry {
            let counters = self
                .runtime
                .counters
                .get(&state)
                .copied()
                .unwrap_or_default();
            let policy = &fsm.interaction.policies[desc.policy];
            if transient_within(policy, &counters, self.ts) == TransientState::Expired {
                // Lazy expiry: leave the state and re-run from idle. The
                // exit itself is only committed when the packet is
                // accepted in the new state.
                return self.eval_state(0, false);
            }
        }

        for edge in own {
            if let Some(hit) = self.try_edge(&edge) {
                return Some(hit);
            }
        }
        None
    }

    fn try_edge(&mut self, edge: &Transition) -> Option<EdgeHit> {
        let fsm = &self.runtime.fsm;
        let policy = &fsm.interaction.policies[edge.policy];
        for &dir in edge.dir.directions() {
            let eval = eval_policy(policy, self.pkt, dir, self.env);
            self.effects.merge(eval.effects);
            match eval.outcome {
                MatchOutcome::NoMatch => continue,
                MatchOutcome::Unresolved => {
                    self.unresolved = true;
                    continue;
                }
                MatchOutcome::Match => {}
            }

            let mut bucket_updates = Vec::new();
            if policy.kind == PolicyKind::Periodic {
                if let Some(bucket) = self.runtime.buckets.get(&edge.policy) {
                    let mut bucket = bucket.clone();
                    match bucket.admit_clamped(self.ts) {
                        Admission::Admit => bucket_updates.push((edge.policy, bucket)),
                        Admission::Exceed => {
                            self.rate_exceeded = true;
                            continue;
                        }
                    }
                }
            }

            let mut counter_updates = Vec::new();
            let to_desc = fsm.states[edge.to];
            if to_desc.role == StateRole::Active && to_desc.kind == PolicyKind::Transient {
                let entering = edge.from != edge.to || self.runtime.current != edge.to;
                let counters = if entering {
                    TransientCounters {
                        packets_matched: u64::from(edge.policy == to_desc.policy),
                        started_at: Some(self.ts),
                    }
                } else {
                    let mut c = self
                        .runtime
                        .counters
                        .get(&edge.to)
                        .copied()
                        .unwrap_or_default();
                    c.packets_matched += 1;
                    if c.started_at.is_none() {
                        c.started_at = Some(self.ts);
                    }
                    c
                };
                counter_updates.push((edge.to, counters));
            }

            return Some(EdgeHit {
                policy: edge.policy,
                to: edge.to,
                bucket_updates,
                counter_updates,
            });
        }
        None
    }
}
