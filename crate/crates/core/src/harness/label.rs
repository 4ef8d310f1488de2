//! Reference labeler: computes the expected verdict for every packet of
//! a trace by walking the interaction definitions directly. Deliberately
//! independent of the compiled state machines and the engine — it shares
//! only the profile model and the matcher predicates — so replay results
//! can be checked against it.

use std::collections::HashSet;
use std::net::IpAddr;

use crate::dns::{normalize_name, DnsTable};
use crate::engine::{Decision, EngineConfig};
use crate::matcher::{
    eval_policy, transient_within, Admission, Direction, MatchEnv, MatchOutcome, RateBucket,
    TransientCounters, TransientState,
};
use crate::packet::{AppData, DnsRdata, Packet, Timestamp, Trace};
use crate::profile::{MacAddr, Policy, PolicyKind, Profile};

use super::fuzz::EditLog;

/// A trace with its expected per-packet verdicts.
#[derive(Debug, Clone)]
pub struct LabeledTrace {
    pub trace: Trace,
    pub expected: Vec<Decision>,
    pub edit_log: Option<EditLog>,
}

impl LabeledTrace {
    pub fn sidecar_json(&self) -> serde_json::Value {
        let expected: Vec<&'static str> = self
            .expected
            .iter()
            .map(|d| match d {
                Decision::Accept => "ACCEPT",
                Decision::Drop => "DROP",
            })
            .collect();
        serde_json::json!({
            "v": 1,
            "expected": expected,
            "edits": self.edit_log.as_ref().map(|l| l.to_json()),
        })
    }
}

/// Where an interaction currently stands in its policy sequence.
#[derive(Debug, Clone, PartialEq)]
enum Position {
    /// Waiting for policy `i`'s first packet.
    AwaitFirst(usize),
    /// Waiting for the reverse leg of bidirectional one-off `i`.
    AwaitSecond(usize),
    /// Periodic or transient policy `i` is active.
    Active(usize, TransientCounters),
}

#[derive(Debug, Clone)]
struct InteractionWalk {
    position: Position,
    buckets: Vec<Option<RateBucket>>,
}

impl InteractionWalk {
    fn new(policies: &[Policy]) -> Self {
        let buckets = policies
            .iter()
            .map(|p| match (&p.kind, &p.stats) {
                (PolicyKind::Periodic, Some(s)) => s.rate.as_ref().map(RateBucket::from_rate),
                _ => None,
            })
            .collect();
        InteractionWalk {
            position: Position::AwaitFirst(0),
            buckets,
        }
    }
}

fn policy_dirs(policy: &Policy, first_leg: bool) -> &'static [Direction] {
    match policy.kind {
        PolicyKind::OneOff => {
            if first_leg {
                &[Direction::Forward]
            } else {
                &[Direction::Backward]
            }
        }
        _ if policy.bidirectional => &[Direction::Forward, Direction::Backward],
        _ => &[Direction::Forward],
    }
}

struct WalkHit {
    position: Position,
    bucket: Option<(usize, RateBucket)>,
}

/// Try policy `i`'s first packet from the current position; on match the
/// interaction lands where that policy puts it.
fn try_first(
    walk: &InteractionWalk,
    policies: &[Policy],
    i: usize,
    pkt: &Packet,
    env: &MatchEnv,
    ts: Timestamp,
) -> Result<Option<WalkHit>, MatchOutcome> {
    let policy = &policies[i];
    let mut saw_unresolved = false;
    for &dir in policy_dirs(policy, true) {
        match eval_policy(policy, pkt, dir, env).outcome {
            MatchOutcome::NoMatch => continue,
            MatchOutcome::Unresolved => {
                saw_unresolved = true;
                continue;
            }
            MatchOutcome::Match => {
                let mut bucket_update = None;
                if policy.kind == PolicyKind::Periodic {
                    let mut bucket = walk.buckets[i].clone().expect("periodic has a bucket");
                    match bucket.admit_clamped(ts) {
                        Admission::Admit => bucket_update = Some((i, bucket)),
                        Admission::Exceed => return Err(MatchOutcome::NoMatch),
                    }
                }
                let position = match policy.kind {
                    PolicyKind::OneOff if policy.bidirectional => Position::AwaitSecond(i),
                    PolicyKind::OneOff => wrap_position(policies, i + 1, ts),
                    _ => Position::Active(
                        i,
                        TransientCounters {
                            packets_matched: 1,
                            started_at: Some(ts),
                        },
                    ),
                };
                return Ok(Some(WalkHit {
                    position,
                    bucket: bucket_update,
                }));
            }
        }
    }
    if saw_unresolved {
        Err(MatchOutcome::Unresolved)
    } else {
        Ok(None)
    }
}

/// Position after policy `done` has fully completed.
fn wrap_position(policies: &[Policy], next: usize, ts: Timestamp) -> Position {
    if next >= policies.len() {
        return Position::AwaitFirst(0);
    }
    match policies[next].kind {
        PolicyKind::OneOff => Position::AwaitFirst(next),
        _ => Position::Active(
            next,
            TransientCounters {
                packets_matched: 0,
                started_at: Some(ts),
            },
        ),
    }
}

/// One packet against one interaction; `Ok(Some)` carries the committed
/// next position on acceptance.
fn walk_packet(
    walk: &InteractionWalk,
    policies: &[Policy],
    pkt: &Packet,
    env: &MatchEnv,
    ts: Timestamp,
) -> Option<WalkHit> {
    match &walk.position {
        Position::AwaitFirst(i) => try_first(walk, policies, *i, pkt, env, ts).ok().flatten(),
        Position::AwaitSecond(i) => {
            let policy = &policies[*i];
            for &dir in policy_dirs(policy, false) {
                if let MatchOutcome::Match = eval_policy(policy, pkt, dir, env).outcome {
                    return Some(WalkHit {
                        position: wrap_position(policies, *i + 1, ts),
                        bucket: None,
                    });
                }
            }
            None
        }
        Position::Active(i, counters) => {
            // The next policy's first packet takes precedence.
            if *i + 1 < policies.len() {
                if let Ok(Some(hit)) = try_first(walk, policies, *i + 1, pkt, env, ts) {
                    return Some(hit);
                }
            }
            let policy = &policies[*i];
            // Lazy expiry: an expired transient re-evaluates from idle.
            if policy.kind == PolicyKind::Transient
                && transient_within(policy, counters, ts) == TransientState::Expired
            {
                let idle = InteractionWalk {
                    position: Position::AwaitFirst(0),
                    buckets: walk.buckets.clone(),
                };
                return walk_packet(&idle, policies, pkt, env, ts);
            }
            for &dir in policy_dirs(policy, true) {
                match eval_policy(policy, pkt, dir, env).outcome {
                    MatchOutcome::Match => {
                        let mut bucket = None;
                        if policy.kind == PolicyKind::Periodic {
                            let mut b = walk.buckets[*i].clone().expect("periodic bucket");
                            match b.admit_clamped(ts) {
                                Admission::Admit => bucket = Some((*i, b)),
                                Admission::Exceed => return None,
                            }
                        }
                        let mut counters = *counters;
                        counters.packets_matched += 1;
                        if counters.started_at.is_none() {
                            counters.started_at = Some(ts);
                        }
                        return Some(WalkHit {
                            position: Position::Active(*i, counters),
                            bucket,
                        });
                    }
                    _ => continue,
                }
            }
            None
        }
    }
}

struct DeviceWalk {
    profile: Profile,
    interactions: Vec<InteractionWalk>,
}

/// Compute the expected verdict for every packet by direct interpretation
/// of the profiles. Cascade drops fall out naturally: a dropped packet
/// commits nothing, so later packets of its interaction find the walk
/// where the drop left it.
pub fn label_trace(
    trace: &Trace,
    profiles: &[Profile],
    config: &EngineConfig,
    edit_log: Option<EditLog>,
) -> LabeledTrace {
    let mut devices: Vec<DeviceWalk> = profiles
        .iter()
        .map(|p| DeviceWalk {
            profile: p.clone(),
            interactions: p
                .interactions
                .iter()
                .map(|i| InteractionWalk::new(&i.policies))
                .collect(),
        })
        .collect();
    let mut profiled_addrs: HashSet<IpAddr> = HashSet::new();
    let mut profiled_macs: HashSet<MacAddr> = HashSet::new();
    for p in profiles {
        profiled_macs.insert(p.device_info.mac);
        if let Some(v4) = p.device_info.ipv4 {
            profiled_addrs.insert(IpAddr::V4(v4));
        }
        if let Some(v6) = p.device_info.ipv6 {
            profiled_addrs.insert(IpAddr::V6(v6));
        }
    }
    let mut dns = DnsTable::new();

    let mut expected = Vec::with_capacity(trace.len());
    for pkt in &trace.packets {
        let ts = pkt.timestamp;
        let involved: Vec<usize> = devices
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                packet_involves(pkt, &d.profile)
                    || (pkt.link.dst.octets()[0] & 1 == 1
                        && multicast_policy_match(pkt, &d.profile, config, &profiled_addrs, &dns, ts))
            })
            .map(|(i, _)| i)
            .collect();

        let decision = if involved.is_empty() {
            config.default_unprofiled
        } else {
            let mut all_accept = true;
            let mut commits: Vec<(usize, usize, WalkHit)> = Vec::new();
            for &d in &involved {
                let device = &devices[d];
                let env = MatchEnv {
                    device: &device.profile.device_info,
                    lan_prefixes: &config.lan_prefixes,
                    gateway_addrs: &config.gateway_addrs,
                    profiled_addrs: &profiled_addrs,
                    dns: &dns,
                    now: ts,
                    dns_max_age: None,
                };
                let mut device_accepts = false;
                for (k, walk) in device.interactions.iter().enumerate() {
                    if let Some(hit) =
                        walk_packet(walk, &device.profile.interactions[k].policies, pkt, &env, ts)
                    {
                        device_accepts = true;
                        commits.push((d, k, hit));
                    }
                }
                all_accept &= device_accepts;
            }
            if all_accept {
                for (d, k, hit) in commits {
                    let walk = &mut devices[d].interactions[k];
                    walk.position = hit.position;
                    if let Some((i, bucket)) = hit.bucket {
                        walk.buckets[i] = Some(bucket);
                    }
                }
                Decision::Accept
            } else {
                Decision::Drop
            }
        };

        if decision == Decision::Accept {
            observe_dns_independent(&mut dns, pkt, ts);
        }
        expected.push(decision);
    }

    LabeledTrace {
        trace: trace.clone(),
        expected,
        edit_log,
    }
}

/// For multicast/broadcast frames: does any policy of the device match
/// the packet outright (state ignored)?
fn multicast_policy_match(
    pkt: &Packet,
    profile: &Profile,
    config: &EngineConfig,
    profiled_addrs: &HashSet<IpAddr>,
    dns: &DnsTable,
    ts: Timestamp,
) -> bool {
    let env = MatchEnv {
        device: &profile.device_info,
        lan_prefixes: &config.lan_prefixes,
        gateway_addrs: &config.gateway_addrs,
        profiled_addrs,
        dns,
        now: ts,
        dns_max_age: None,
    };
    profile.interactions.iter().any(|interaction| {
        interaction.policies.iter().any(|policy| {
            let dirs: &[Direction] = if policy.bidirectional {
                &[Direction::Forward, Direction::Backward]
            } else {
                &[Direction::Forward]
            };
            dirs.iter()
                .any(|&dir| eval_policy(policy, pkt, dir, &env).outcome == MatchOutcome::Match)
        })
    })
}

fn packet_involves(pkt: &Packet, profile: &Profile) -> bool {
    let info = &profile.device_info;
    if pkt.link.src == info.mac || pkt.link.dst == info.mac {
        return true;
    }
    if let Some(ip) = pkt.ip() {
        if info.owns_ip(&ip.src()) || info.owns_ip(&ip.dst()) {
            return true;
        }
    }
    if let Some(arp) = pkt.arp() {
        if arp.sender_hw == info.mac
            || arp.target_hw == info.mac
            || info.owns_ip(&IpAddr::V4(arp.sender_ip))
            || info.owns_ip(&IpAddr::V4(arp.target_ip))
        {
            return true;
        }
    }
    false
}

/// The labeler's own DNS observation: A/AAAA answers plus a hand-rolled
/// CNAME walk, kept separate from the engine's implementation.
fn observe_dns_independent(dns: &mut DnsTable, pkt: &Packet, ts: Timestamp) {
    let message = match pkt.app() {
        Some(AppData::Dns(m)) | Some(AppData::Mdns(m)) if m.is_response() => m,
        _ => return,
    };
    let records: Vec<_> = message.answers.iter().chain(&message.additionals).collect();
    for record in &records {
        let name = normalize_name(&record.name);
        let mut targets = vec![name];
        // Names whose CNAME chain passes through this record also own its
        // addresses.
        loop {
            let mut grew = false;
            for r in &records {
                if let DnsRdata::Cname(target) = &r.rdata {
                    let target = normalize_name(target);
                    let alias = normalize_name(&r.name);
                    if targets.contains(&target) && !targets.contains(&alias) {
                        targets.push(alias);
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        let addr = match &record.rdata {
            DnsRdata::A(a) => Some(IpAddr::V4(*a)),
            DnsRdata::Aaaa(a) => Some(IpAddr::V6(*a)),
            _ => None,
        };
        if let Some(addr) = addr {
            for name in targets {
                dns.insert(&name, addr, ts);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::packet::{arp_packet, tcp_flags, tcp_packet, Timestamp};

    fn tcp9999(ms: u64) -> crate::packet::Packet {
        tcp_packet(
            Timestamp::from_millis(ms),
            &fixtures::phone(),
            &fixtures::plug(),
            40000,
            9999,
            tcp_flags::ACK,
            b"",
        )
    }

    #[test]
    fn unedited_happy_path_labels_all_accept() {
        let profile = fixtures::tplink_plug_arp();
        let packets = vec![
            arp_packet(Timestamp::from_millis(0), 1, &fixtures::phone(), &fixtures::plug()),
            arp_packet(Timestamp::from_millis(5), 2, &fixtures::plug(), &fixtures::phone()),
            tcp9999(10),
            tcp9999(20),
        ];
        let trace = Trace::new(packets).unwrap();
        let labeled = label_trace(&trace, &[profile], &fixtures::lan_config(), None);
        assert_eq!(labeled.expected, vec![Decision::Accept; 4]);
    }

    #[test]
    fn missing_arp_reply_cascades_drops() {
        let profile = fixtures::tplink_plug_arp();
        let packets = vec![
            arp_packet(Timestamp::from_millis(0), 1, &fixtures::phone(), &fixtures::plug()),
            tcp9999(10),
            tcp9999(20),
        ];
        let trace = Trace::new(packets).unwrap();
        let labeled = label_trace(&trace, &[profile], &fixtures::lan_config(), None);
        assert_eq!(
            labeled.expected,
            vec![Decision::Accept, Decision::Drop, Decision::Drop]
        );
    }

    #[test]
    fn periodic_mid_stream_drop_does_not_leave_the_state() {
        // Plug profile: tcp-9999 is periodic; a wrong-port packet in the
        // middle drops alone, later in-pattern packets still pass.
        let profile = fixtures::tplink_plug();
        let mut packets = vec![tcp9999(0), tcp9999(100)];
        packets.push(tcp_packet(
            Timestamp::from_millis(150),
            &fixtures::phone(),
            &fixtures::plug(),
            40000,
            8888,
            tcp_flags::ACK,
            b"",
        ));
        packets.push(tcp9999(200));
        packets.push(tcp9999(300));
        let trace = Trace::new(packets).unwrap();
        let labeled = label_trace(&trace, &[profile], &fixtures::lan_config(), None);
        assert_eq!(
            labeled.expected,
            vec![
                Decision::Accept,
                Decision::Accept,
                Decision::Drop,
                Decision::Accept,
                Decision::Accept
            ]
        );
    }
}
