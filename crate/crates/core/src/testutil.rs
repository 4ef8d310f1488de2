//! Shared fixtures for unit tests: a small LAN with a profiled plug, a
//! phone, a gateway, and policy builders over simple TCP signatures.

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr};

use crate::dns::DnsTable;
use crate::matcher::{IpPrefix, MatchEnv};
use crate::packet::{Host, Timestamp};
use crate::profile::{
    DeviceInfo, EndpointExpr, IpMatch, IpVersion, MacAddr, MatchSpec, Policy, PolicyKind, Rate,
    Stats, TransportMatch, TransportProtocol,
};

pub fn plug_host() -> Host {
    Host::v4(MacAddr([0x50, 0xc7, 0xbf, 0, 0, 1]), Ipv4Addr::new(192, 168, 1, 135))
}

pub fn phone_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x10]), Ipv4Addr::new(192, 168, 1, 20))
}

pub fn gateway_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x01]), Ipv4Addr::new(192, 168, 1, 1))
}

pub fn plug_device() -> DeviceInfo {
    DeviceInfo {
        name: "plug".into(),
        mac: plug_host().mac,
        ipv4: Some(Ipv4Addr::new(192, 168, 1, 135)),
        ipv6: None,
    }
}

pub struct TestEnv {
    pub device: DeviceInfo,
    pub prefixes: Vec<IpPrefix>,
    pub gateway: Vec<IpAddr>,
    pub profiled: HashSet<IpAddr>,
    pub dns: DnsTable,
    pub now: Timestamp,
}

impl TestEnv {
    pub fn new() -> Self {
        let device = plug_device();
        let mut profiled = HashSet::new();
        profiled.insert(IpAddr::V4(device.ipv4.unwrap()));
        TestEnv {
            device,
            prefixes: vec!["192.168.1.0/24".parse().unwrap()],
            gateway: vec![gateway_host().ip],
            profiled,
            dns: DnsTable::new(),
            now: Timestamp::ZERO,
        }
    }

    pub fn env(&self) -> MatchEnv<'_> {
        MatchEnv {
            device: &self.device,
            lan_prefixes: &self.prefixes,
            gateway_addrs: &self.gateway,
            profiled_addrs: &self.profiled,
            dns: &self.dns,
            now: self.now,
            dns_max_age: None,
        }
    }
}

/// Policy matching TCP to the given destination port on the device.
pub fn tcp_policy(name: &str, dst_port: u16) -> Policy {
    Policy {
        name: name.into(),
        kind: PolicyKind::OneOff,
        bidirectional: false,
        match_spec: MatchSpec {
            ip: Some(IpMatch {
                version: IpVersion::V4,
                src: Some(EndpointExpr::Phone),
                dst: Some(EndpointExpr::SelfDevice),
            }),
            transport: Some(TransportMatch {
                protocol: TransportProtocol::Tcp,
                src_port: None,
                dst_port: Some(dst_port),
            }),
            ..MatchSpec::default()
        },
        stats: None,
    }
}

pub fn bidir(mut policy: Policy) -> Policy {
    policy.bidirectional = true;
    policy
}

pub fn periodic(mut policy: Policy, pps: f64, burst: Option<u64>) -> Policy {
    policy.kind = PolicyKind::Periodic;
    policy.stats = Some(Stats {
        rate: Some(Rate {
            packets_per_second: pps,
            burst,
        }),
        max_packets: None,
        max_duration: None,
    });
    policy
}

pub fn transient(mut policy: Policy, max_packets: Option<u64>, max_duration: Option<f64>) -> Policy {
    policy.kind = PolicyKind::Transient;
    policy.stats = Some(Stats {
        rate: None,
        max_packets,
        max_duration,
    });
    policy
}
