//! The firewall core: compiled profiles for every supervised device, the
//! DNS table, and per-device interaction runtimes. Produces one verdict
//! per packet; a packet is admitted only when every involved device has a
//! runtime accepting it, and dropped packets never advance any machine.

use std::collections::{BTreeMap, HashSet};
use std::net::IpAddr;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dns::DnsTable;
use crate::fsm::{compile_interaction, CompileError, FsmRuntime, StepPlan, StepResult};
use crate::matcher::{eval_policy, Direction, IpPrefix, MatchEffects, MatchEnv, MatchOutcome};
use crate::packet::{AppData, Packet, Timestamp, Trace};
use crate::profile::{MacAddr, Profile};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("device `{0}` is already registered")]
    DuplicateDevice(String),
    #[error("profile `{0}` failed validation")]
    InvalidProfile(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("clock regression at packet {index}: {now} is before {prev}")]
    ClockRegression {
        index: usize,
        now: Timestamp,
        prev: Timestamp,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accept,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Matched,
    DefaultAccept,
    NoPolicyMatch,
    RateExceeded,
    WrongState,
    UnresolvedName,
}

/// Per-packet decision with its structured cause.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub idx: usize,
    pub ts: f64,
    pub decision: Decision,
    pub device: String,
    pub interaction: Option<String>,
    pub policy: Option<String>,
    pub state_before: Option<usize>,
    pub state_after: Option<usize>,
    pub reason: Reason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Replay,
    Live,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub lan_prefixes: Vec<IpPrefix>,
    pub gateway_addrs: Vec<IpAddr>,
    pub default_unprofiled: Decision,
    pub clock_mode: ClockMode,
    /// Live mode only: ignore DNS entries older than this many seconds.
    pub dns_max_age: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            lan_prefixes: Vec::new(),
            gateway_addrs: Vec::new(),
            default_unprofiled: Decision::Accept,
            clock_mode: ClockMode::Replay,
            dns_max_age: None,
        }
    }
}

struct DeviceRuntime {
    profile: Profile,
    runtimes: Vec<FsmRuntime>,
}

pub struct Engine {
    config: EngineConfig,
    devices: Vec<DeviceRuntime>,
    dns: DnsTable,
    profiled_addrs: HashSet<IpAddr>,
    profiled_macs: HashSet<MacAddr>,
    last_ts: Option<Timestamp>,
}

/// Latency-category accounting for one processed packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffortCategory {
    /// Decided by link/IP/transport matching alone.
    A,
    /// Application-layer string comparison.
    B,
    /// DNS-table lookup.
    C,
    /// Both string comparison and DNS lookup.
    D,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine {
            config,
            devices: Vec::new(),
            dns: DnsTable::new(),
            profiled_addrs: HashSet::new(),
            profiled_macs: HashSet::new(),
            last_ts: None,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn dns(&self) -> &DnsTable {
        &self.dns
    }

    pub fn device_names(&self) -> Vec<&str> {
        self.devices.iter().map(|d| d.profile.device_info.name.as_str()).collect()
    }

    /// Compile every interaction of the profile and start its runtimes in
    /// the idle state.
    pub fn register_profile(&mut self, profile: Profile) -> Result<(), EngineError> {
        let diags = crate::profile::validate_profile(&profile);
        if !diags.is_empty() {
            return Err(EngineError::InvalidProfile(profile.device_info.name.clone()));
        }
        let info = &profile.device_info;
        let dup_name = self.devices.iter().any(|d| d.profile.device_info.name == info.name);
        let dup_mac = self.profiled_macs.contains(&info.mac);
        let dup_ip = info.ipv4.map(|v4| self.profiled_addrs.contains(&IpAddr::V4(v4))).unwrap_or(false)
            || info.ipv6.map(|v6| self.profiled_addrs.contains(&IpAddr::V6(v6))).unwrap_or(false);
        if dup_name || dup_mac || dup_ip {
            return Err(EngineError::DuplicateDevice(info.name.clone()));
        }

        let mut runtimes = Vec::with_capacity(profile.interactions.len());
        for interaction in &profile.interactions {
            let fsm = compile_interaction(interaction)?;
            runtimes.push(FsmRuntime::new(Arc::new(fsm)));
        }
        self.profiled_macs.insert(info.mac);
        if let Some(v4) = info.ipv4 {
            self.profiled_addrs.insert(IpAddr::V4(v4));
        }
        if let Some(v6) = info.ipv6 {
            self.profiled_addrs.insert(IpAddr::V6(v6));
        }
        self.devices.push(DeviceRuntime { profile, runtimes });
        Ok(())
    }

    /// Addresses a packet is from/to, including the ARP body addresses.
    fn packet_addrs(pkt: &Packet) -> (Vec<MacAddr>, Vec<IpAddr>) {
        let mut macs = vec![pkt.link.src, pkt.link.dst];
        let mut ips = Vec::new();
        if let Some(ip) = pkt.ip() {
            ips.push(ip.src());
            ips.push(ip.dst());
        }
        if let Some(arp) = pkt.arp() {
            macs.push(arp.sender_hw);
            macs.push(arp.target_hw);
            ips.push(IpAddr::V4(arp.sender_ip));
            ips.push(IpAddr::V4(arp.target_ip));
        }
        (macs, ips)
    }

    fn involved_devices(&self, pkt: &Packet) -> Vec<usize> {
        let (macs, ips) = Self::packet_addrs(pkt);
        let multicast = pkt.link.dst.octets()[0] & 1 == 1;
        self.devices
            .iter()
            .enumerate()
            .filter(|(i, d)| {
                let info = &d.profile.device_info;
                if macs.contains(&info.mac) || ips.iter().any(|ip| info.owns_ip(ip)) {
                    return true;
                }
                // Multicast and broadcast frames carry no per-device
                // address; a device whose policies speak about the
                // packet supervises it (mirrors per-rule dispatch).
                multicast && self.stateless_sweep(*i, pkt, pkt.timestamp).0
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn match_env<'a>(&'a self, device: usize, now: Timestamp) -> MatchEnv<'a> {
        MatchEnv {
            device: &self.devices[device].profile.device_info,
            lan_prefixes: &self.config.lan_prefixes,
            gateway_addrs: &self.config.gateway_addrs,
            profiled_addrs: &self.profiled_addrs,
            dns: &self.dns,
            now,
            dns_max_age: match self.config.clock_mode {
                ClockMode::Live => self.config.dns_max_age,
                ClockMode::Replay => None,
            },
        }
    }

    pub fn process_packet(&mut self, pkt: &Packet) -> Result<Verdict, EngineError> {
        let (verdict, _) = self.process_packet_with_effects(pkt, 0)?;
        Ok(verdict)
    }

    /// Process one packet; the verdict plus the effort category that
    /// produced it.
    pub fn process_packet_with_effects(
        &mut self,
        pkt: &Packet,
        idx: usize,
    ) -> Result<(Verdict, EffortCategory), EngineError> {
        let ts = pkt.timestamp;
        if self.config.clock_mode == ClockMode::Replay {
            if let Some(prev) = self.last_ts {
                if ts < prev {
                    return Err(EngineError::ClockRegression {
                        index: idx,
                        now: ts,
                        prev,
                    });
                }
            }
        }
        self.last_ts = Some(self.last_ts.map_or(ts, |prev| prev.max(ts)));

        let involved = self.involved_devices(pkt);
        let mut effects = MatchEffects::default();

        if involved.is_empty() {
            let decision = self.config.default_unprofiled;
            let verdict = Verdict {
                idx,
                ts: ts.as_secs_f64(),
                decision,
                device: "unprofiled".to_string(),
                interaction: None,
                policy: None,
                state_before: None,
                state_after: None,
                reason: match decision {
                    Decision::Accept => Reason::DefaultAccept,
                    Decision::Drop => Reason::NoPolicyMatch,
                },
            };
            if decision == Decision::Accept {
                self.observe_dns(pkt);
            }
            return Ok((verdict, category(effects)));
        }

        // Plan every runtime of every involved device without mutating.
        let mut plans: Vec<(usize, Vec<StepPlan>)> = Vec::with_capacity(involved.len());
        for &device in &involved {
            let env = self.match_env(device, ts);
            let device_plans: Vec<StepPlan> = self.devices[device]
                .runtimes
                .iter()
                .map(|rt| rt.plan(pkt, &env))
                .collect();
            plans.push((device, device_plans));
        }
        for (_, device_plans) in &plans {
            for plan in device_plans {
                effects.merge(plan.effects);
            }
        }

        let accept = plans
            .iter()
            .all(|(_, device_plans)| device_plans.iter().any(|p| p.result.accepted()));

        // A rejected packet rolls back every would-be advance; rate
        // buckets still see time pass.
        for (device, device_plans) in &plans {
            let runtime = &mut self.devices[*device].runtimes;
            for (rt, plan) in runtime.iter_mut().zip(device_plans) {
                rt.commit(plan, accept && plan.result.accepted());
            }
        }

        let verdict = if accept {
            let (device, plan) = plans
                .iter()
                .find_map(|(device, device_plans)| {
                    device_plans
                        .iter()
                        .find(|p| p.result.accepted())
                        .map(|p| (*device, p))
                })
                .expect("an accepting runtime exists");
            let runtime_idx = plans
                .iter()
                .find(|(d, _)| *d == device)
                .map(|(_, ps)| ps.iter().position(|p| p.result.accepted()).unwrap())
                .unwrap();
            let profile = &self.devices[device].profile;
            let interaction = &profile.interactions[runtime_idx];
            match plan.result {
                StepResult::MatchAccept {
                    policy,
                    state_before,
                    state_after,
                } => Verdict {
                    idx,
                    ts: ts.as_secs_f64(),
                    decision: Decision::Accept,
                    device: profile.device_info.name.clone(),
                    interaction: Some(interaction.name.clone()),
                    policy: Some(interaction.policies[policy].name.clone()),
                    state_before: Some(state_before),
                    state_after: Some(state_after),
                    reason: Reason::Matched,
                },
                StepResult::NoMatch { .. } => unreachable!("accepted plan"),
            }
        } else {
            // First device with no accepting runtime names the verdict.
            let (device, device_plans) = plans
                .iter()
                .find(|(_, ps)| !ps.iter().any(|p| p.result.accepted()))
                .expect("a rejecting device exists");
            let mut rate_exceeded = false;
            let mut unresolved = false;
            for plan in device_plans {
                if let StepResult::NoMatch {
                    rate_exceeded: r,
                    unresolved: u,
                } = plan.result
                {
                    rate_exceeded |= r;
                    unresolved |= u;
                }
            }
            let reason = if rate_exceeded {
                Reason::RateExceeded
            } else {
                // Distinguish out-of-state traffic from unknown traffic.
                let (matches_some, sweep_unresolved, sweep_effects) =
                    self.stateless_sweep(*device, pkt, ts);
                effects.merge(sweep_effects);
                if unresolved || sweep_unresolved {
                    Reason::UnresolvedName
                } else if matches_some {
                    Reason::WrongState
                } else {
                    Reason::NoPolicyMatch
                }
            };
            Verdict {
                idx,
                ts: ts.as_secs_f64(),
                decision: Decision::Drop,
                device: self.devices[*device].profile.device_info.name.clone(),
                interaction: None,
                policy: None,
                state_before: None,
                state_after: None,
                reason,
            }
        };

        if verdict.decision == Decision::Accept {
            self.observe_dns(pkt);
        }
        Ok((verdict, category(effects)))
    }

    /// Does the packet match any policy of the device, state ignored?
    fn stateless_sweep(
        &self,
        device: usize,
        pkt: &Packet,
        ts: Timestamp,
    ) -> (bool, bool, MatchEffects) {
        let env = self.match_env(device, ts);
        let mut unresolved = false;
        let mut effects = MatchEffects::default();
        for interaction in &self.devices[device].profile.interactions {
            for policy in &interaction.policies {
                let dirs: &[Direction] = if policy.bidirectional {
                    &[Direction::Forward, Direction::Backward]
                } else {
                    &[Direction::Forward]
                };
                for &dir in dirs {
                    let eval = eval_policy(policy, pkt, dir, &env);
                    effects.merge(eval.effects);
                    match eval.outcome {
                        MatchOutcome::Match => return (true, unresolved, effects),
                        MatchOutcome::Unresolved => unresolved = true,
                        MatchOutcome::NoMatch => {}
                    }
                }
            }
        }
        (false, unresolved, effects)
    }

    /// Cache A/AAAA answers of an accepted DNS or mDNS response.
    pub fn observe_dns(&mut self, pkt: &Packet) {
        if let Some(AppData::Dns(m) | AppData::Mdns(m)) = pkt.app() {
            if m.is_response() {
                self.dns.observe_response(m, pkt.timestamp);
            }
        }
    }

    /// Replay a trace; one verdict per packet, never aborting mid-trace.
    pub fn run_replay(&mut self, trace: &Trace) -> ReplayReport {
        let mut verdicts = Vec::with_capacity(trace.len());
        let mut latencies = Vec::with_capacity(trace.len());
        let mut categories = CategoryCounts::default();
        let mut diagnostics = Vec::new();

        for (idx, pkt) in trace.packets.iter().enumerate() {
            let started = Instant::now();
            match self.process_packet_with_effects(pkt, idx) {
                Ok((verdict, cat)) => {
                    categories.bump(cat);
                    verdicts.push(verdict);
                }
                Err(err) => {
                    diagnostics.push(format!("packet {idx}: {err}"));
                    categories.bump(EffortCategory::A);
                    verdicts.push(Verdict {
                        idx,
                        ts: pkt.timestamp.as_secs_f64(),
                        decision: Decision::Drop,
                        device: "unprofiled".to_string(),
                        interaction: None,
                        policy: None,
                        state_before: None,
                        state_after: None,
                        reason: Reason::NoPolicyMatch,
                    });
                }
            }
            latencies.push(started.elapsed().as_secs_f64() * 1e6);
        }

        ReplayReport::new(verdicts, latencies, categories, diagnostics)
    }

    /// Deterministic snapshot of all mutable state, with rate buckets
    /// normalized to `at` so equal traffic histories compare equal.
    pub fn fingerprint(&self, at: Timestamp) -> Value {
        let mut devices = BTreeMap::new();
        for device in &self.devices {
            let mut interactions = BTreeMap::new();
            for (i, rt) in device.runtimes.iter().enumerate() {
                let interaction = &device.profile.interactions[i];
                let counters: BTreeMap<String, Value> = (0..rt.fsm.states.len())
                    .filter_map(|s| {
                        rt.counters(s).map(|c| {
                            (
                                s.to_string(),
                                json!({
                                    "matched": c.packets_matched,
                                    "started": c.started_at.map(|t| t.as_secs_f64()),
                                }),
                            )
                        })
                    })
                    .collect();
                let buckets: BTreeMap<String, Value> = (0..interaction.policies.len())
                    .filter_map(|p| {
                        rt.bucket(p).map(|b| {
                            let tokens = (b.tokens_at(at) * 1e6).round() / 1e6;
                            (p.to_string(), json!(tokens))
                        })
                    })
                    .collect();
                interactions.insert(
                    interaction.name.clone(),
                    json!({
                        "state": rt.current_state(),
                        "counters": counters,
                        "buckets": buckets,
                    }),
                );
            }
            devices.insert(device.profile.device_info.name.clone(), json!(interactions));
        }
        json!({
            "devices": devices,
            "dns": self.dns.snapshot(),
        })
    }
}

fn category(effects: MatchEffects) -> EffortCategory {
    match (effects.string_cmp, effects.dns_lookup) {
        (false, false) => EffortCategory::A,
        (true, false) => EffortCategory::B,
        (false, true) => EffortCategory::C,
        (true, true) => EffortCategory::D,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CategoryCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl CategoryCounts {
    fn bump(&mut self, cat: EffortCategory) {
        match cat {
            EffortCategory::A => self.a += 1,
            EffortCategory::B => self.b += 1,
            EffortCategory::C => self.c += 1,
            EffortCategory::D => self.d += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceCounters {
    pub accepted: u64,
    pub dropped: u64,
}

/// Summary of one replay: the verdict log plus aggregate counters.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub v: u32,
    pub accepted: u64,
    pub dropped: u64,
    pub per_reason: BTreeMap<String, u64>,
    pub per_device: BTreeMap<String, DeviceCounters>,
    pub latency_us: LatencyStats,
    pub categories: CategoryCounts,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub verdicts: Vec<Verdict>,
}

impl ReplayReport {
    fn new(
        verdicts: Vec<Verdict>,
        latencies: Vec<f64>,
        categories: CategoryCounts,
        diagnostics: Vec<String>,
    ) -> Self {
        let mut accepted = 0;
        let mut dropped = 0;
        let mut per_reason: BTreeMap<String, u64> = BTreeMap::new();
        let mut per_device: BTreeMap<String, DeviceCounters> = BTreeMap::new();
        for v in &verdicts {
            let reason = serde_json::to_value(v.reason).unwrap();
            *per_reason.entry(reason.as_str().unwrap().to_string()).or_default() += 1;
            let dev = per_device.entry(v.device.clone()).or_insert(DeviceCounters {
                accepted: 0,
                dropped: 0,
            });
            match v.decision {
                Decision::Accept => {
                    accepted += 1;
                    dev.accepted += 1;
                }
                Decision::Drop => {
                    dropped += 1;
                    dev.dropped += 1;
                }
            }
        }
        ReplayReport {
            v: 1,
            accepted,
            dropped,
            per_reason,
            per_device,
            latency_us: latency_stats(latencies),
            categories,
            diagnostics,
            verdicts,
        }
    }

    /// One JSON object per packet, newline separated.
    pub fn verdict_log_jsonl(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            out.push_str(&serde_json::to_string(v).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn decisions(&self) -> Vec<Decision> {
        self.verdicts.iter().map(|v| v.decision).collect()
    }
}

fn latency_stats(mut latencies: Vec<f64>) -> LatencyStats {
    if latencies.is_empty() {
        return LatencyStats {
            mean: 0.0,
            p2_5: 0.0,
            p97_5: 0.0,
        };
    }
    let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
    latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let pos = (q * (latencies.len() - 1) as f64).round() as usize;
        latencies[pos.min(latencies.len() - 1)]
    };
    LatencyStats {
        mean,
        p2_5: pick(0.025),
        p97_5: pick(0.975),
    }
}
