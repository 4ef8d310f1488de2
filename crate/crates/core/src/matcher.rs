//! Packet-against-policy matching: symbolic endpoint resolution, DNS-name
//! endpoints, direction inversion, and the rate/duration bookkeeping
//! primitives used by interaction state machines.

use std::collections::HashSet;
use std::net::IpAddr;
use std::str::FromStr;

use thiserror::Error;

use crate::dns::DnsTable;
use crate::packet::{AppData, Packet, Timestamp};
use crate::profile::{
    AppMatch, ArpOperation, DeviceInfo, DnsQr, EndpointExpr, MacExpr, MatchSpec, Policy, Rate,
    TransportProtocol,
};
use crate::{names, profile};

/// An IP network prefix, e.g. `192.168.1.0/24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpPrefix {
    pub addr: IpAddr,
    pub len: u8,
}

impl IpPrefix {
    pub fn contains(&self, other: &IpAddr) -> bool {
        match (self.addr, other) {
            (IpAddr::V4(net), IpAddr::V4(ip)) => {
                if self.len == 0 {
                    return true;
                }
                let mask = u32::MAX << (32 - self.len.min(32));
                (u32::from(net) & mask) == (u32::from(*ip) & mask)
            }
            (IpAddr::V6(net), IpAddr::V6(ip)) => {
                if self.len == 0 {
                    return true;
                }
                let mask = u128::MAX << (128 - self.len.min(128) as u32);
                (u128::from(net) & mask) == (u128::from(*ip) & mask)
            }
            _ => false,
        }
    }
}

impl FromStr for IpPrefix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s.split_once('/').ok_or_else(|| format!("invalid prefix `{s}`"))?;
        let addr: IpAddr = addr.parse().map_err(|_| format!("invalid prefix `{s}`"))?;
        let len: u8 = len.parse().map_err(|_| format!("invalid prefix `{s}`"))?;
        let max = if addr.is_ipv4() { 32 } else { 128 };
        if len > max {
            return Err(format!("prefix length {len} out of range"));
        }
        Ok(IpPrefix { addr, len })
    }
}

impl std::fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

/// Context a policy is matched in: the profiled device, the symbolic
/// referent resolution data, the DNS table, and the current virtual time.
pub struct MatchEnv<'a> {
    pub device: &'a DeviceInfo,
    pub lan_prefixes: &'a [IpPrefix],
    pub gateway_addrs: &'a [IpAddr],
    /// Addresses of every profiled device; `phone` excludes these.
    pub profiled_addrs: &'a HashSet<IpAddr>,
    pub dns: &'a DnsTable,
    pub now: Timestamp,
    /// Entries older than this many seconds are ignored (live mode).
    pub dns_max_age: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    Match,
    NoMatch,
    /// A domain-name endpoint had no usable DNS entry; the packet cannot
    /// match until the name is resolved.
    Unresolved,
}

impl MatchOutcome {
    fn combine(self, other: MatchOutcome) -> MatchOutcome {
        use MatchOutcome::*;
        match (self, other) {
            (NoMatch, _) | (_, NoMatch) => NoMatch,
            (Unresolved, _) | (_, Unresolved) => Unresolved,
            _ => Match,
        }
    }
}

/// What the evaluation had to do, for latency-category accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchEffects {
    pub string_cmp: bool,
    pub dns_lookup: bool,
}

impl MatchEffects {
    pub fn merge(&mut self, other: MatchEffects) {
        self.string_cmp |= other.string_cmp;
        self.dns_lookup |= other.dns_lookup;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyEval {
    pub outcome: MatchOutcome,
    pub effects: MatchEffects,
}

#[derive(Debug, Error)]
#[error("unresolved domain name")]
pub struct UnresolvedName;

/// True iff every present layer block of the (possibly inverted) match
/// spec matches the packet. Absent blocks are wildcards. Pure.
pub fn match_policy(
    policy: &Policy,
    pkt: &Packet,
    dir: Direction,
    env: &MatchEnv,
) -> Result<bool, UnresolvedName> {
    match eval_policy(policy, pkt, dir, env).outcome {
        MatchOutcome::Match => Ok(true),
        MatchOutcome::NoMatch => Ok(false),
        MatchOutcome::Unresolved => Err(UnresolvedName),
    }
}

/// [`match_policy`] with effect accounting; the workhorse used by the
/// state machines and the engine.
pub fn eval_policy(policy: &Policy, pkt: &Packet, dir: Direction, env: &MatchEnv) -> PolicyEval {
    let spec;
    let ms = match dir {
        Direction::Forward => &policy.match_spec,
        Direction::Backward => {
            spec = invert_direction(&policy.match_spec);
            &spec
        }
    };
    eval_spec(ms, pkt, env)
}

fn eval_spec(ms: &MatchSpec, pkt: &Packet, env: &MatchEnv) -> PolicyEval {
    let mut outcome = MatchOutcome::Match;
    let mut effects = MatchEffects::default();

    if let Some(link) = &ms.link {
        let mut r = MatchOutcome::Match;
        if let Some(src) = &link.src_mac {
            r = r.combine(bool_outcome(mac_matches(src, &pkt.link.src, env)));
        }
        if let Some(dst) = &link.dst_mac {
            r = r.combine(bool_outcome(mac_matches(dst, &pkt.link.dst, env)));
        }
        if let Some(t) = link.eth_type {
            r = r.combine(bool_outcome(t == pkt.link.ethertype));
        }
        outcome = outcome.combine(r);
    }

    if let Some(arp) = &ms.arp {
        match pkt.arp() {
            None => outcome = MatchOutcome::NoMatch,
            Some(a) => {
                let mut r = MatchOutcome::Match;
                if let Some(op) = arp.operation {
                    let want = match op {
                        ArpOperation::Request => 1,
                        ArpOperation::Reply => 2,
                    };
                    r = r.combine(bool_outcome(a.operation == want));
                }
                if let Some(hw) = &arp.sender_hw {
                    r = r.combine(bool_outcome(mac_matches(hw, &a.sender_hw, env)));
                }
                if let Some(hw) = &arp.target_hw {
                    r = r.combine(bool_outcome(mac_matches(hw, &a.target_hw, env)));
                }
                if let Some(ip) = &arp.sender_ip {
                    r = r.combine(endpoint_matches(ip, IpAddr::V4(a.sender_ip), env, &mut effects));
                }
                if let Some(ip) = &arp.target_ip {
                    r = r.combine(endpoint_matches(ip, IpAddr::V4(a.target_ip), env, &mut effects));
                }
                outcome = outcome.combine(r);
            }
        }
    }

    if let Some(ipm) = &ms.ip {
        match pkt.ip() {
            None => outcome = MatchOutcome::NoMatch,
            Some(ip) => {
                let version_ok = match ipm.version {
                    profile::IpVersion::V4 => !ip.is_v6(),
                    profile::IpVersion::V6 => ip.is_v6(),
                };
                let mut r = bool_outcome(version_ok);
                if let Some(src) = &ipm.src {
                    r = r.combine(endpoint_matches(src, ip.src(), env, &mut effects));
                }
                if let Some(dst) = &ipm.dst {
                    r = r.combine(endpoint_matches(dst, ip.dst(), env, &mut effects));
                }
                outcome = outcome.combine(r);
            }
        }
    }

    if let Some(icmp) = &ms.icmp {
        match pkt.icmp() {
            None => outcome = MatchOutcome::NoMatch,
            Some(i) => {
                let want = names::icmp_type_number(i.v6, &icmp.type_name);
                outcome = outcome.combine(bool_outcome(want == Some(i.icmp_type)));
            }
        }
    }

    if let Some(tm) = &ms.transport {
        match pkt.transport() {
            None => outcome = MatchOutcome::NoMatch,
            Some(t) => {
                let proto_ok = match tm.protocol {
                    TransportProtocol::Tcp => t.is_tcp(),
                    TransportProtocol::Udp => !t.is_tcp(),
                };
                let mut r = bool_outcome(proto_ok);
                if let Some(p) = tm.src_port {
                    r = r.combine(bool_outcome(t.src_port() == p));
                }
                if let Some(p) = tm.dst_port {
                    r = r.combine(bool_outcome(t.dst_port() == p));
                }
                outcome = outcome.combine(r);
            }
        }
    }

    if let Some(app) = &ms.app {
        outcome = outcome.combine(eval_app(app, pkt, &mut effects));
    }

    PolicyEval { outcome, effects }
}

fn eval_app(app: &AppMatch, pkt: &Packet, effects: &mut MatchEffects) -> MatchOutcome {
    match (app, pkt.app()) {
        (AppMatch::Dns(m), Some(AppData::Dns(d)))
        | (AppMatch::Mdns(m), Some(AppData::Mdns(d))) => {
            let mut r = MatchOutcome::Match;
            if let Some(qr) = m.qr {
                let want_response = qr == DnsQr::Response;
                r = r.combine(bool_outcome(d.is_response() == want_response));
            }
            if let Some(qtype) = &m.qtype {
                let want = names::dns_qtype_number(qtype);
                r = r.combine(bool_outcome(
                    d.questions.iter().any(|q| Some(q.qtype) == want),
                ));
            }
            if let Some(name) = &m.domain_name {
                effects.string_cmp = true;
                let normalized = crate::dns::normalize_name(name);
                r = r.combine(bool_outcome(d.questions.iter().any(|q| {
                    crate::dns::normalize_name(&q.name) == normalized
                })));
            }
            r
        }
        (AppMatch::Dhcp(m), Some(AppData::Dhcp(d))) => {
            let want = names::dhcp_message_type_number(&m.message_type);
            bool_outcome(want.is_some() && d.message_type() == want)
        }
        (AppMatch::Http(m), Some(AppData::Http(h))) => {
            let mut r = MatchOutcome::Match;
            if let Some(method) = &m.method {
                effects.string_cmp = true;
                r = r.combine(bool_outcome(h.method() == Some(method.as_str())));
            }
            if let Some(prefix) = &m.uri_prefix {
                effects.string_cmp = true;
                r = r.combine(bool_outcome(
                    h.uri().is_some_and(|u| u.starts_with(prefix)),
                ));
            }
            r
        }
        (AppMatch::Ssdp(m), Some(AppData::Ssdp(s))) => {
            let mut r = MatchOutcome::Match;
            if let Some(method) = &m.method {
                effects.string_cmp = true;
                r = r.combine(bool_outcome(s.method() == Some(method.as_str())));
            }
            if let Some(st) = &m.st {
                effects.string_cmp = true;
                r = r.combine(bool_outcome(s.st() == Some(st.as_str())));
            }
            r
        }
        (AppMatch::Coap(m), Some(AppData::Coap(c))) => {
            let mut r = MatchOutcome::Match;
            if let Some(t) = &m.msg_type {
                r = r.combine(bool_outcome(c.type_name() == Some(t.as_str())));
            }
            if let Some(method) = &m.method {
                r = r.combine(bool_outcome(c.method_name() == Some(method.as_str())));
            }
            if let Some(path) = &m.uri_path {
                effects.string_cmp = true;
                r = r.combine(bool_outcome(&c.uri_path() == path));
            }
            r
        }
        (AppMatch::Igmp(m), Some(AppData::Igmp(g))) => {
            let mut r = MatchOutcome::Match;
            if let Some(t) = &m.type_name {
                r = r.combine(bool_outcome(g.type_name() == Some(t.as_str())));
            }
            if let Some(group) = m.group {
                r = r.combine(bool_outcome(g.group == group));
            }
            r
        }
        _ => MatchOutcome::NoMatch,
    }
}

fn bool_outcome(b: bool) -> MatchOutcome {
    if b {
        MatchOutcome::Match
    } else {
        MatchOutcome::NoMatch
    }
}

fn mac_matches(expr: &MacExpr, mac: &crate::profile::MacAddr, env: &MatchEnv) -> bool {
    match expr {
        MacExpr::Literal(m) => m == mac,
        MacExpr::SelfDevice => env.device.mac == *mac,
    }
}

fn endpoint_matches(
    expr: &EndpointExpr,
    addr: IpAddr,
    env: &MatchEnv,
    effects: &mut MatchEffects,
) -> MatchOutcome {
    match expr {
        EndpointExpr::Any => MatchOutcome::Match,
        EndpointExpr::Addr(a) => bool_outcome(*a == addr),
        EndpointExpr::SelfDevice => bool_outcome(env.device.owns_ip(&addr)),
        EndpointExpr::Local => bool_outcome(env.lan_prefixes.iter().any(|p| p.contains(&addr))),
        EndpointExpr::Gateway => bool_outcome(env.gateway_addrs.contains(&addr)),
        EndpointExpr::Phone => bool_outcome(
            env.lan_prefixes.iter().any(|p| p.contains(&addr))
                && !env.profiled_addrs.contains(&addr),
        ),
        EndpointExpr::Domain(name) => {
            effects.dns_lookup = true;
            match env.dns.entry(name) {
                None => MatchOutcome::Unresolved,
                Some(entry) => {
                    if let Some(max_age) = env.dns_max_age {
                        if env.now.seconds_since(entry.inserted_at) > max_age {
                            return MatchOutcome::Unresolved;
                        }
                    }
                    if entry.addresses.is_empty() {
                        MatchOutcome::Unresolved
                    } else {
                        bool_outcome(entry.addresses.contains(&addr))
                    }
                }
            }
        }
    }
}

/// Swap the direction-relevant fields of a match spec: MAC and IP
/// endpoints, ports, DNS query/response, ICMP echo pair, and ARP
/// request/reply with sender/target swapped. Involutive.
pub fn invert_direction(ms: &MatchSpec) -> MatchSpec {
    let mut out = ms.clone();
    if let Some(link) = &mut out.link {
        std::mem::swap(&mut link.src_mac, &mut link.dst_mac);
    }
    if let Some(arp) = &mut out.arp {
        arp.operation = arp.operation.map(|op| match op {
            ArpOperation::Request => ArpOperation::Reply,
            ArpOperation::Reply => ArpOperation::Request,
        });
        std::mem::swap(&mut arp.sender_hw, &mut arp.target_hw);
        std::mem::swap(&mut arp.sender_ip, &mut arp.target_ip);
    }
    if let Some(ip) = &mut out.ip {
        std::mem::swap(&mut ip.src, &mut ip.dst);
    }
    if let Some(icmp) = &mut out.icmp {
        icmp.type_name = match icmp.type_name.as_str() {
            "echo-request" => "echo-reply".to_string(),
            "echo-reply" => "echo-request".to_string(),
            other => other.to_string(),
        };
    }
    if let Some(t) = &mut out.transport {
        std::mem::swap(&mut t.src_port, &mut t.dst_port);
    }
    if let Some(AppMatch::Dns(d) | AppMatch::Mdns(d)) = &mut out.app {
        d.qr = d.qr.map(|qr| match qr {
            DnsQr::Query => DnsQr::Response,
            DnsQr::Response => DnsQr::Query,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Rate and duration bookkeeping
// ---------------------------------------------------------------------------

/// Token bucket; one per periodic policy instance. Starts full.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBucket {
    pub capacity: f64,
    pub tokens: f64,
    pub fill_rate: f64,
    pub last_refill: Timestamp,
}

impl RateBucket {
    /// Capacity is the burst when given, otherwise ceil(rate).
    pub fn from_rate(rate: &Rate) -> Self {
        let capacity = rate
            .burst
            .map(|b| b as f64)
            .unwrap_or_else(|| rate.packets_per_second.ceil().max(1.0));
        RateBucket {
            capacity,
            tokens: capacity,
            fill_rate: rate.packets_per_second,
            last_refill: Timestamp::ZERO,
        }
    }

    /// Advance time without consuming a token.
    pub fn refill(&mut self, ts: Timestamp) {
        let dt = ts.seconds_since(self.last_refill);
        if dt <= 0.0 {
            return;
        }
        self.tokens = (self.tokens + self.fill_rate * dt).min(self.capacity);
        self.last_refill = ts;
    }

    /// Tokens available after refilling to `ts`, for state fingerprints.
    pub fn tokens_at(&self, ts: Timestamp) -> f64 {
        let dt = ts.seconds_since(self.last_refill).max(0.0);
        (self.tokens + self.fill_rate * dt).min(self.capacity)
    }

    /// Refill to `ts` (an earlier `ts` is clamped: live-clock mode) and
    /// admit one packet if a whole token is available.
    pub fn admit_clamped(&mut self, ts: Timestamp) -> Admission {
        self.refill(ts);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Admission::Admit
        } else {
            Admission::Exceed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Exceed,
}

#[derive(Debug, Error)]
#[error("clock regression: {now} is before {last}")]
pub struct ClockRegression {
    pub now: Timestamp,
    pub last: Timestamp,
}

/// Refill by elapsed time (capped at capacity), then admit one packet if
/// a whole token is available. Exceeding packets leave the refill in
/// place but consume nothing. Replay callers treat a regressing clock as
/// an error; live callers clamp via [`RateBucket::admit_clamped`].
pub fn rate_admit(bucket: &mut RateBucket, ts: Timestamp) -> Result<Admission, ClockRegression> {
    if ts < bucket.last_refill {
        return Err(ClockRegression {
            now: ts,
            last: bucket.last_refill,
        });
    }
    Ok(bucket.admit_clamped(ts))
}

/// Per-activation counters of a transient policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransientCounters {
    pub packets_matched: u64,
    pub started_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransientState {
    Within,
    Expired,
}

/// Expired when either limit is hit: the packet count has been reached,
/// or more than the maximum duration has passed since activation.
pub fn transient_within(policy: &Policy, c: &TransientCounters, ts: Timestamp) -> TransientState {
    let stats = match &policy.stats {
        Some(s) => s,
        None => return TransientState::Within,
    };
    if let Some(max) = stats.max_packets {
        if c.packets_matched >= max {
            return TransientState::Expired;
        }
    }
    if let (Some(max), Some(started)) = (stats.max_duration, c.started_at) {
        if ts.seconds_since(started) > max {
            return TransientState::Expired;
        }
    }
    TransientState::Within
}
