//! In-memory representation of a device profile: device identity, the
//! ordered interactions with their policies, packet match specifications,
//! and traffic statistics bounds.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// 6-octet hardware address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("invalid MAC address `{s}`"));
        }
        let mut octets = [0u8; 6];
        for (i, part) in parts.iter().enumerate() {
            octets[i] =
                u8::from_str_radix(part, 16).map_err(|_| format!("invalid MAC address `{s}`"))?;
        }
        Ok(MacAddr(octets))
    }
}

impl TryFrom<String> for MacAddr {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<MacAddr> for String {
    fn from(m: MacAddr) -> String {
        m.to_string()
    }
}

/// Device identity: name, hardware address, and at least one IP address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub name: String,
    pub mac: MacAddr,
    pub ipv4: Option<Ipv4Addr>,
    pub ipv6: Option<Ipv6Addr>,
}

impl DeviceInfo {
    pub fn owns_ip(&self, addr: &IpAddr) -> bool {
        match addr {
            IpAddr::V4(v4) => self.ipv4.as_ref() == Some(v4),
            IpAddr::V6(v6) => self.ipv6.as_ref() == Some(v6),
        }
    }
}

/// A validated device profile. Includes and pattern references are fully
/// inlined during parsing, so the profile is self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub device_info: DeviceInfo,
    pub interactions: Vec<Interaction>,
}

impl Profile {
    pub fn interaction(&self, name: &str) -> Option<&Interaction> {
        self.interactions.iter().find(|i| i.name == name)
    }
}

/// An ordered sequence of policies; the order is the interaction sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub name: String,
    pub policies: Vec<Policy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    OneOff,
    Transient,
    Periodic,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::OneOff => "one-off",
            PolicyKind::Transient => "transient",
            PolicyKind::Periodic => "periodic",
        })
    }
}

/// One matchable traffic unit: a packet signature plus optional statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub kind: PolicyKind,
    pub bidirectional: bool,
    pub match_spec: MatchSpec,
    pub stats: Option<Stats>,
}

/// Statistics bounds: a packet rate (periodic) or duration/count limits
/// (transient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub rate: Option<Rate>,
    pub max_packets: Option<u64>,
    /// Seconds; fractional with millisecond resolution.
    pub max_duration: Option<f64>,
}

impl Stats {
    pub fn is_empty(&self) -> bool {
        self.rate.is_none() && self.max_packets.is_none() && self.max_duration.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub packets_per_second: f64,
    /// Bucket size in packets; defaults to ceil(rate) when unset.
    pub burst: Option<u64>,
}

/// Per-layer matchers; an absent block is a wildcard.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSpec {
    pub link: Option<LinkMatch>,
    pub arp: Option<ArpMatch>,
    pub ip: Option<IpMatch>,
    pub icmp: Option<IcmpMatch>,
    pub transport: Option<TransportMatch>,
    pub app: Option<AppMatch>,
}

impl MatchSpec {
    pub fn is_empty(&self) -> bool {
        self.link.is_none()
            && self.arp.is_none()
            && self.ip.is_none()
            && self.icmp.is_none()
            && self.transport.is_none()
            && self.app.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkMatch {
    pub src_mac: Option<MacExpr>,
    pub dst_mac: Option<MacExpr>,
    pub eth_type: Option<u16>,
}

/// Hardware-address expression: a literal or the profiled device itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MacExpr {
    Literal(MacAddr),
    SelfDevice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArpOperation {
    Request,
    Reply,
}

impl fmt::Display for ArpOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArpOperation::Request => "request",
            ArpOperation::Reply => "reply",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArpMatch {
    pub operation: Option<ArpOperation>,
    pub sender_hw: Option<MacExpr>,
    pub sender_ip: Option<EndpointExpr>,
    pub target_hw: Option<MacExpr>,
    pub target_ip: Option<EndpointExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IpVersion {
    V4,
    V6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpMatch {
    pub version: IpVersion,
    pub src: Option<EndpointExpr>,
    pub dst: Option<EndpointExpr>,
}

/// Endpoint expression: a literal address, a domain name resolved through
/// the DNS table, or a symbolic referent resolved from engine configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EndpointExpr {
    Addr(IpAddr),
    Domain(String),
    SelfDevice,
    Local,
    Gateway,
    Phone,
    Any,
}

impl EndpointExpr {
    /// Parse an endpoint written in a profile. Symbolic names take
    /// precedence; anything with a dot that is not an address is a domain.
    pub fn parse(text: &str) -> Result<EndpointExpr, String> {
        match text {
            "self" => return Ok(EndpointExpr::SelfDevice),
            "local" => return Ok(EndpointExpr::Local),
            "gateway" => return Ok(EndpointExpr::Gateway),
            "phone" => return Ok(EndpointExpr::Phone),
            "any" | "*" => return Ok(EndpointExpr::Any),
            _ => {}
        }
        if let Ok(addr) = text.parse::<IpAddr>() {
            return Ok(EndpointExpr::Addr(addr));
        }
        if text.contains('.') || text.contains(':') {
            Ok(EndpointExpr::Domain(text.trim_end_matches('.').to_ascii_lowercase()))
        } else {
            Err(format!("unrecognized endpoint `{text}`"))
        }
    }

    pub fn to_profile_string(&self) -> String {
        match self {
            EndpointExpr::Addr(a) => a.to_string(),
            EndpointExpr::Domain(d) => d.clone(),
            EndpointExpr::SelfDevice => "self".to_string(),
            EndpointExpr::Local => "local".to_string(),
            EndpointExpr::Gateway => "gateway".to_string(),
            EndpointExpr::Phone => "phone".to_string(),
            EndpointExpr::Any => "any".to_string(),
        }
    }
}

pub const ICMP_TYPE_NAMES: &[&str] = &[
    "echo-request",
    "echo-reply",
    "destination-unreachable",
    "redirect",
    "router-advertisement",
    "router-solicitation",
    "time-exceeded",
    "neighbor-solicitation",
    "neighbor-advertisement",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmpMatch {
    pub type_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportProtocol {
    Tcp,
    Udp,
}

impl fmt::Display for TransportProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportProtocol::Tcp => "tcp",
            TransportProtocol::Udp => "udp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMatch {
    pub protocol: TransportProtocol,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
}

/// Exactly one application-layer matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AppMatch {
    Dns(DnsMatch),
    Mdns(DnsMatch),
    Dhcp(DhcpMatch),
    Http(HttpMatch),
    Ssdp(SsdpMatch),
    Coap(CoapMatch),
    Igmp(IgmpMatch),
}

impl AppMatch {
    pub fn protocol_key(&self) -> &'static str {
        match self {
            AppMatch::Dns(_) => "dns",
            AppMatch::Mdns(_) => "mdns",
            AppMatch::Dhcp(_) => "dhcp",
            AppMatch::Http(_) => "http",
            AppMatch::Ssdp(_) => "ssdp",
            AppMatch::Coap(_) => "coap",
            AppMatch::Igmp(_) => "igmp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DnsQr {
    Query,
    Response,
}

impl fmt::Display for DnsQr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DnsQr::Query => "query",
            DnsQr::Response => "response",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DnsMatch {
    pub qr: Option<DnsQr>,
    /// Record type name, e.g. `A`, `AAAA`, `PTR`, `SRV`.
    pub qtype: Option<String>,
    pub domain_name: Option<String>,
}

pub const DHCP_MESSAGE_TYPES: &[&str] = &[
    "discover", "offer", "request", "decline", "ack", "nak", "release", "inform",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhcpMatch {
    pub message_type: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HttpMatch {
    pub method: Option<String>,
    /// Prefix match against the request URI.
    pub uri_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SsdpMatch {
    /// `M-SEARCH` or `NOTIFY`.
    pub method: Option<String>,
    /// Search target (`ST` header, or `NT` for NOTIFY).
    pub st: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoapMatch {
    /// `CON`, `NON`, `ACK` or `RST`.
    pub msg_type: Option<String>,
    /// `GET`, `POST`, `PUT` or `DELETE`.
    pub method: Option<String>,
    pub uri_path: Option<String>,
}

pub const IGMP_TYPE_NAMES: &[&str] = &[
    "membership-query",
    "v1-membership-report",
    "membership-report",
    "leave-group",
    "v3-membership-report",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IgmpMatch {
    pub type_name: Option<String>,
    pub group: Option<Ipv4Addr>,
}

/// One validation finding with the path of the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Check every structural invariant; returns one diagnostic per violation,
/// in deterministic document order. An empty result means the profile is
/// well formed.
pub fn validate_profile(profile: &Profile) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if profile.device_info.ipv4.is_none() && profile.device_info.ipv6.is_none() {
        push_diag(
            &mut out,
            "device-info".to_string(),
            "device requires at least one of ipv4/ipv6",
        );
    }
    if profile.device_info.name.is_empty() {
        push_diag(&mut out, "device-info.name".to_string(), "device name is empty");
    }

    for (i, interaction) in profile.interactions.iter().enumerate() {
        let ipath = format!("interactions.{}", interaction.name);
        if profile.interactions[..i]
            .iter()
            .any(|other| other.name == interaction.name)
        {
            push_diag(&mut out, ipath.clone(), "duplicate interaction name");
        }
        if interaction.policies.is_empty() {
            push_diag(&mut out, ipath.clone(), "interaction requires at least one policy");
            continue;
        }
        let last = interaction.policies.len() - 1;
        for (j, policy) in interaction.policies.iter().enumerate() {
            let ppath = format!("{ipath}.{}", policy.name);
            if interaction.policies[..j]
                .iter()
                .any(|other| other.name == policy.name)
            {
                push_diag(&mut out, ppath.clone(), "duplicate policy name within interaction");
            }
            if j == last && policy.kind == PolicyKind::Periodic {
                push_diag(
                    &mut out,
                    ppath.clone(),
                    "a periodic policy cannot terminate an interaction (nothing would deactivate it)",
                );
            }
            validate_policy(policy, &ppath, &mut out);
        }
    }
    out
}

fn push_diag(out: &mut Vec<Diagnostic>, path: String, message: impl Into<String>) {
    out.push(Diagnostic {
        path,
        message: message.into(),
    });
}

fn validate_policy(policy: &Policy, path: &str, out: &mut Vec<Diagnostic>) {
    let stats_path = format!("{path}.stats");
    match policy.kind {
        PolicyKind::Transient => match &policy.stats {
            Some(s) if s.max_packets.is_some() || s.max_duration.is_some() => {
                if s.max_duration.is_some_and(|d| d <= 0.0) {
                    push_diag(out, stats_path.clone(), "max duration must be positive");
                }
                if s.max_packets == Some(0) {
                    push_diag(out, stats_path.clone(), "max packet count must be positive");
                }
            }
            _ => push_diag(
                out,
                stats_path.clone(),
                "transient policy requires max_duration or max_packets",
            ),
        },
        PolicyKind::Periodic => match policy.stats.as_ref().and_then(|s| s.rate.as_ref()) {
            Some(rate) => {
                if rate.packets_per_second <= 0.0 {
                    push_diag(out, stats_path.clone(), "packet rate must be positive");
                }
                if rate.burst == Some(0) {
                    push_diag(out, stats_path.clone(), "burst must be positive");
                }
            }
            None => push_diag(out, stats_path.clone(), "periodic policy requires a rate"),
        },
        PolicyKind::OneOff => {
            if policy.stats.as_ref().is_some_and(|s| !s.is_empty()) {
                push_diag(out, stats_path.clone(), "one-off policy takes no stats");
            }
        }
    }
    if let Some(stats) = &policy.stats {
        if stats.rate.is_some() && (stats.max_packets.is_some() || stats.max_duration.is_some()) {
            push_diag(
                out,
                stats_path,
                "stats mixes a rate with duration/count limits; a policy is either periodic or transient",
            );
        }
    }

    let ms = &policy.match_spec;
    if ms.is_empty() {
        push_diag(
            out,
            format!("{path}.protocols"),
            "policy matches nothing: no layer block present",
        );
    }
    if let Some(app) = &ms.app {
        if matches!(app, AppMatch::Igmp(_)) {
            if ms.transport.is_some() {
                push_diag(
                    out,
                    format!("{path}.protocols.igmp"),
                    "igmp rides directly on IP; transport block not allowed",
                );
            }
        } else if ms.transport.is_none() {
            push_diag(
                out,
                format!("{path}.protocols.{}", app.protocol_key()),
                "application-layer matcher requires a transport block",
            );
        }
    }
    if let Some(icmp) = &ms.icmp {
        if !ICMP_TYPE_NAMES.contains(&icmp.type_name.as_str()) {
            push_diag(
                out,
                format!("{path}.protocols.icmp"),
                format!("unknown icmp type name `{}`", icmp.type_name),
            );
        }
    }
    if let Some(AppMatch::Dhcp(d)) = &ms.app {
        if !DHCP_MESSAGE_TYPES.contains(&d.message_type.as_str()) {
            push_diag(
                out,
                format!("{path}.protocols.dhcp"),
                format!("unknown dhcp message type `{}`", d.message_type),
            );
        }
    }
    if let Some(AppMatch::Igmp(g)) = &ms.app {
        if let Some(name) = &g.type_name {
            if !IGMP_TYPE_NAMES.contains(&name.as_str()) {
                push_diag(
                    out,
                    format!("{path}.protocols.igmp"),
                    format!("unknown igmp type name `{name}`"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;

    fn profile_with(policies: Vec<Policy>) -> Profile {
        Profile {
            device_info: plug_device(),
            interactions: vec![Interaction {
                name: "x".into(),
                policies,
            }],
        }
    }

    #[test]
    fn transient_without_limits_gets_one_diagnostic() {
        let mut p = tcp_policy("policy-y", 443);
        p.kind = PolicyKind::Transient;
        p.stats = Some(Stats {
            rate: None,
            max_packets: None,
            max_duration: None,
        });
        let diags = validate_profile(&profile_with(vec![p]));
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].path, "interactions.x.policy-y.stats");
        assert!(diags[0].message.contains("max_duration or max_packets"));
    }

    #[test]
    fn well_formed_minimal_profile_is_clean() {
        // DNS exchange then a bounded server session.
        let dns = bidir(Policy {
            name: "dns-server".into(),
            kind: PolicyKind::OneOff,
            bidirectional: false,
            match_spec: MatchSpec {
                ip: Some(IpMatch {
                    version: IpVersion::V4,
                    src: Some(EndpointExpr::SelfDevice),
                    dst: Some(EndpointExpr::Gateway),
                }),
                transport: Some(TransportMatch {
                    protocol: TransportProtocol::Udp,
                    src_port: None,
                    dst_port: Some(53),
                }),
                app: Some(AppMatch::Dns(DnsMatch {
                    qr: Some(DnsQr::Query),
                    qtype: Some("A".into()),
                    domain_name: Some("srv.example".into()),
                })),
                ..MatchSpec::default()
            },
            stats: None,
        });
        let https = transient(bidir(tcp_policy("https-server", 443)), None, Some(60.0));
        assert_eq!(validate_profile(&profile_with(vec![dns, https])), vec![]);
    }

    #[test]
    fn periodic_with_rate_and_burst_is_clean() {
        let p = periodic(tcp_policy("flood-guard", 443), 10.0, Some(100));
        let end = tcp_policy("end", 80);
        assert_eq!(validate_profile(&profile_with(vec![p, end])), vec![]);
    }

    #[test]
    fn trailing_periodic_is_rejected_even_alone() {
        let p = periodic(tcp_policy("p", 443), 10.0, None);
        let diags = validate_profile(&profile_with(vec![p]));
        assert!(diags.iter().any(|d| d.message.contains("periodic")), "{diags:?}");
    }

    #[test]
    fn diagnostics_are_deterministic_and_ordered() {
        let mut bad1 = tcp_policy("a", 1);
        bad1.kind = PolicyKind::Transient;
        bad1.stats = None;
        let mut bad2 = tcp_policy("b", 2);
        bad2.match_spec = MatchSpec::default();
        let profile = profile_with(vec![bad1, bad2]);
        let first = validate_profile(&profile);
        let second = validate_profile(&profile);
        assert_eq!(first, second);
        assert!(first[0].path.contains(".a."));
        assert!(first[1].path.contains(".b."));
    }

    #[test]
    fn device_requires_an_address() {
        let mut profile = profile_with(vec![tcp_policy("p", 1)]);
        profile.device_info.ipv4 = None;
        profile.device_info.ipv6 = None;
        let diags = validate_profile(&profile);
        assert!(diags.iter().any(|d| d.path == "device-info"));
    }

    #[test]
    fn igmp_must_not_carry_transport() {
        let mut p = tcp_policy("g", 1);
        p.match_spec.app = Some(AppMatch::Igmp(IgmpMatch {
            type_name: Some("membership-report".into()),
            group: None,
        }));
        let diags = validate_profile(&profile_with(vec![p]));
        assert!(diags.iter().any(|d| d.message.contains("rides directly")), "{diags:?}");
    }
}
