//! Trace fuzzing: pick a fraction of the packets and flip one field of
//! each packet's highest parsed layer to a different valid value, then
//! re-serialize. Deterministic for a given seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::names;
use crate::packet::{
    packet_from_fields, AppData, DnsRdata, HttpStart, IpData, Layer, Packet, SsdpStart, Trace,
    TransportData,
};

#[derive(Debug, Clone, Serialize)]
pub struct Edit {
    pub packet: usize,
    pub layer: String,
    pub field: String,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EditLog {
    pub seed: u64,
    pub edits: Vec<Edit>,
}

impl EditLog {
    pub fn edited_indices(&self) -> Vec<usize> {
        self.edits.iter().map(|e| e.packet).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"v": 1, "seed": self.seed, "edits": self.edits})
    }
}

/// Mutate ceil(fraction * N) distinct packets chosen uniformly.
pub fn fuzz_trace(trace: &Trace, seed: u64, edit_fraction: f64) -> (Trace, EditLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = trace.len();
    let count = ((edit_fraction * n as f64).ceil() as usize).clamp(usize::from(n > 0), n);

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    indices.truncate(count);
    indices.sort_unstable();

    let mut packets = trace.packets.clone();
    let mut edits = Vec::with_capacity(count);
    for idx in indices {
        if let Some(edit) = mutate_packet(&mut packets[idx], idx, &mut rng) {
            edits.push(edit);
        }
    }
    let fuzzed = Trace {
        packets,
        linktype: trace.linktype,
    };
    (fuzzed, EditLog { seed, edits })
}

fn different_port(rng: &mut ChaCha8Rng, old: u16) -> u16 {
    loop {
        let p = rng.gen_range(1024..u16::MAX);
        if p != old {
            return p;
        }
    }
}

fn pick<'v, T>(rng: &mut ChaCha8Rng, options: &'v [T]) -> &'v T {
    &options[rng.gen_range(0..options.len())]
}

/// Mutate one field of the packet's highest parsed layer; returns the
/// edit record, or None for a packet with nothing mutable (bare frame).
fn mutate_packet(packet: &mut Packet, idx: usize, rng: &mut ChaCha8Rng) -> Option<Edit> {
    let mut layers = packet.layers.clone();
    let (layer, field, old, new) = match layers.last_mut()? {
        Layer::App(app) => mutate_app(app, rng),
        Layer::Transport(TransportData::Tcp(tcp)) => {
            if rng.gen_bool(0.5) {
                let old = tcp.dst_port;
                tcp.dst_port = different_port(rng, old);
                ("tcp", "dst-port", old.to_string(), tcp.dst_port.to_string())
            } else {
                let old = tcp.src_port;
                tcp.src_port = different_port(rng, old);
                ("tcp", "src-port", old.to_string(), tcp.src_port.to_string())
            }
        }
        Layer::Transport(TransportData::Udp(udp)) => {
            if rng.gen_bool(0.5) {
                let old = udp.dst_port;
                udp.dst_port = different_port(rng, old);
                ("udp", "dst-port", old.to_string(), udp.dst_port.to_string())
            } else {
                let old = udp.src_port;
                udp.src_port = different_port(rng, old);
                ("udp", "src-port", old.to_string(), udp.src_port.to_string())
            }
        }
        Layer::Icmp(icmp) => {
            let table = if icmp.v6 { names::ICMPV6_TYPES } else { names::ICMPV4_TYPES };
            let old = icmp.icmp_type;
            let choices: Vec<u8> = table.iter().map(|(_, v)| *v).filter(|v| *v != old).collect();
            icmp.icmp_type = *pick(rng, &choices);
            icmp.checksum = None;
            ("icmp", "type", old.to_string(), icmp.icmp_type.to_string())
        }
        Layer::Arp(arp) => {
            if rng.gen_bool(0.5) {
                let old = arp.operation;
                arp.operation = if old == 1 { 2 } else { 1 };
                ("arp", "operation", old.to_string(), arp.operation.to_string())
            } else {
                let old = arp.target_ip;
                let mut octets = old.octets();
                octets[3] = octets[3].wrapping_add(rng.gen_range(1..=254));
                arp.target_ip = octets.into();
                ("arp", "target-ip", old.to_string(), arp.target_ip.to_string())
            }
        }
        Layer::Ip(ip) => match ip {
            IpData::V4(v4) => {
                let old = v4.dst;
                let mut octets = old.octets();
                octets[3] = octets[3].wrapping_add(rng.gen_range(1..=254));
                v4.dst = octets.into();
                v4.checksum = None;
                ("ip", "dst", old.to_string(), v4.dst.to_string())
            }
            IpData::V6(v6) => {
                let old = v6.dst;
                let mut octets = old.octets();
                octets[15] = octets[15].wrapping_add(rng.gen_range(1..=254));
                v6.dst = octets.into();
                ("ip", "dst", old.to_string(), v6.dst.to_string())
            }
        },
    };

    // Stored checksums are stale after a field edit; recompute on rebuild.
    for layer in layers.iter_mut() {
        match layer {
            Layer::Ip(IpData::V4(v4)) => v4.checksum = None,
            Layer::Icmp(icmp) => icmp.checksum = None,
            Layer::Transport(TransportData::Tcp(tcp)) => tcp.checksum = None,
            Layer::Transport(TransportData::Udp(udp)) => udp.checksum = None,
            Layer::App(AppData::Igmp(igmp)) => igmp.checksum = None,
            _ => {}
        }
    }

    let iface = packet.iface.clone();
    *packet = packet_from_fields(packet.timestamp, packet.link, layers);
    packet.iface = iface;
    Some(Edit {
        packet: idx,
        layer: layer.to_string(),
        field: field.to_string(),
        old,
        new,
    })
}

fn random_label(rng: &mut ChaCha8Rng) -> String {
    let mut label = String::from("fz-");
    for _ in 0..8 {
        let c = b"abcdefghijklmnopqrstuvwxyz0123456789"[rng.gen_range(0..36)];
        label.push(c as char);
    }
    label
}

fn mutate_app(
    app: &mut AppData,
    rng: &mut ChaCha8Rng,
) -> (&'static str, &'static str, String, String) {
    let is_mdns = matches!(app, AppData::Mdns(_));
    match app {
        AppData::Dns(m) | AppData::Mdns(m) => {
            let layer = if is_mdns { "mdns" } else { "dns" };
            let question = m.questions.first().cloned();
            match (rng.gen_range(0..2), question) {
                (0, Some(q)) => {
                    let new = format!("{}.invalid", random_label(rng));
                    let old = q.name.clone();
                    for question in &mut m.questions {
                        question.name = new.clone();
                    }
                    // Keep answers consistent with the rewritten question.
                    for answer in &mut m.answers {
                        if answer.name == old {
                            answer.name = new.clone();
                        }
                        if let DnsRdata::Cname(c) | DnsRdata::Ptr(c) = &mut answer.rdata {
                            if *c == old {
                                *c = new.clone();
                            }
                        }
                    }
                    (layer, "domain-name", old, new)
                }
                (_, Some(q)) => {
                    let choices: Vec<u16> =
                        [1u16, 12, 16, 28, 33].into_iter().filter(|t| *t != q.qtype).collect();
                    let new = *pick(rng, &choices);
                    let old = q.qtype;
                    for question in &mut m.questions {
                        question.qtype = new;
                    }
                    (
                        layer,
                        "qtype",
                        names::dns_qtype_name(old).unwrap_or("?").to_string(),
                        names::dns_qtype_name(new).unwrap_or("?").to_string(),
                    )
                }
                (_, None) => {
                    let old = m.id;
                    m.id = old.wrapping_add(1);
                    (layer, "id", old.to_string(), m.id.to_string())
                }
            }
        }
        AppData::Dhcp(d) => {
            let old = d.message_type().unwrap_or(1);
            let choices: Vec<u8> = (1..=8).filter(|t| *t != old).collect();
            let new = *pick(rng, &choices);
            let mut replaced = false;
            for (code, value) in d.options.iter_mut() {
                if *code == 53 {
                    *value = vec![new];
                    replaced = true;
                }
            }
            if !replaced {
                d.options.push((53, vec![new]));
            }
            (
                "dhcp",
                "message-type",
                names::dhcp_message_type_name(old).unwrap_or("?").to_string(),
                names::dhcp_message_type_name(new).unwrap_or("?").to_string(),
            )
        }
        AppData::Http(h) => match &mut h.start {
            HttpStart::Request { method, uri, .. } => {
                if rng.gen_bool(0.5) {
                    let choices: Vec<&str> = ["GET", "POST", "PUT", "DELETE", "HEAD"]
                        .into_iter()
                        .filter(|m| m != method)
                        .collect();
                    let new = pick(rng, &choices).to_string();
                    let old = std::mem::replace(method, new.clone());
                    ("http", "method", old, new)
                } else {
                    let new = format!("/{}", random_label(rng));
                    let old = std::mem::replace(uri, new.clone());
                    ("http", "uri", old, new)
                }
            }
            HttpStart::Response { status, .. } => {
                let old = *status;
                *status = if old == 200 { 404 } else { 200 };
                ("http", "status", old.to_string(), status.to_string())
            }
        },
        AppData::Ssdp(s) => {
            if rng.gen_bool(0.5) {
                if let SsdpStart::Request { method, .. } = &mut s.start {
                    let new = if method == "M-SEARCH" { "NOTIFY" } else { "M-SEARCH" }.to_string();
                    let old = std::mem::replace(method, new.clone());
                    return ("ssdp", "method", old, new);
                }
            }
            let new = format!("urn:{}", random_label(rng));
            let mut old = String::new();
            let mut found = false;
            for (name, value) in s.headers.iter_mut() {
                if name.eq_ignore_ascii_case("ST") || name.eq_ignore_ascii_case("NT") {
                    old = value.clone();
                    *value = new.clone();
                    found = true;
                    break;
                }
            }
            if !found {
                s.headers.push(("ST".to_string(), new.clone()));
            }
            ("ssdp", "st", old, new)
        }
        AppData::Coap(c) => {
            if rng.gen_bool(0.5) {
                let old = c.code;
                let choices: Vec<u8> = (1..=4).filter(|m| *m != old).collect();
                c.code = *pick(rng, &choices);
                (
                    "coap",
                    "method",
                    names::coap_method_name(old).unwrap_or("?").to_string(),
                    names::coap_method_name(c.code).unwrap_or("?").to_string(),
                )
            } else {
                let old = c.uri_path();
                let new = random_label(rng);
                c.options.retain(|(n, _)| *n != 11);
                c.options.push((11, new.clone().into_bytes()));
                c.options.sort_by_key(|(n, _)| *n);
                ("coap", "uri-path", old, new)
            }
        }
        AppData::Igmp(g) => {
            let old = g.igmp_type;
            let choices: Vec<u8> =
                names::IGMP_TYPES.iter().map(|(_, v)| *v).filter(|v| *v != old).collect();
            g.igmp_type = *pick(rng, &choices);
            g.checksum = None;
            (
                "igmp",
                "type",
                names::igmp_type_name(old).unwrap_or("?").to_string(),
                names::igmp_type_name(g.igmp_type).unwrap_or("?").to_string(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{dns_query, tcp_packet, tcp_flags, Host, Timestamp, Trace};
    use crate::profile::MacAddr;
    use std::net::Ipv4Addr;

    fn sample_trace() -> Trace {
        let a = Host::v4(MacAddr([2, 0, 0, 0, 0, 1]), Ipv4Addr::new(10, 0, 0, 1));
        let b = Host::v4(MacAddr([2, 0, 0, 0, 0, 2]), Ipv4Addr::new(10, 0, 0, 2));
        let mut packets = Vec::new();
        for i in 0..10u64 {
            if i % 2 == 0 {
                packets.push(dns_query(Timestamp::from_millis(i * 10), &a, &b, i as u16, "example.com", 1));
            } else {
                packets.push(tcp_packet(
                    Timestamp::from_millis(i * 10),
                    &a,
                    &b,
                    1000,
                    443,
                    tcp_flags::ACK,
                    b"x",
                ));
            }
        }
        Trace::new(packets).unwrap()
    }

    #[test]
    fn one_packet_trace_gets_exactly_one_edit() {
        let trace = Trace::new(vec![sample_trace().packets[0].clone()]).unwrap();
        let (_, log) = fuzz_trace(&trace, 1, 0.0001);
        assert_eq!(log.edits.len(), 1);
    }

    #[test]
    fn dns_packets_are_edited_at_the_dns_layer() {
        let trace = sample_trace();
        for seed in 0..20 {
            let (_, log) = fuzz_trace(&trace, seed, 1.0);
            for edit in &log.edits {
                if edit.packet % 2 == 0 {
                    assert_eq!(edit.layer, "dns", "edit: {edit:?}");
                } else {
                    assert_eq!(edit.layer, "tcp");
                }
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let trace = sample_trace();
        let (a, log_a) = fuzz_trace(&trace, 7, 0.5);
        let (b, log_b) = fuzz_trace(&trace, 7, 0.5);
        assert_eq!(log_a.edits.len(), log_b.edits.len());
        for (x, y) in a.packets.iter().zip(&b.packets) {
            assert_eq!(x.raw, y.raw);
        }
        // A different seed produces a different selection or values.
        let (c, _) = fuzz_trace(&trace, 8, 0.5);
        assert!(a.packets.iter().zip(&c.packets).any(|(x, y)| x.raw != y.raw));
    }

    #[test]
    fn edit_indices_are_strictly_increasing() {
        let (_, log) = fuzz_trace(&sample_trace(), 3, 0.8);
        let idxs = log.edited_indices();
        assert!(idxs.windows(2).all(|w| w[0] < w[1]));
    }

    /// Every mutated packet must stop matching the policy its original
    /// matched: the fixture pins every field the fuzzer can touch.
    #[test]
    fn mutations_break_the_matched_policy() {
        use crate::harness::fixtures;
        use crate::matcher::{eval_policy, Direction, MatchEnv, MatchOutcome};
        use crate::packet::{
            arp_packet, coap_request, dhcp_packet, http_request, icmp_echo, igmp_packet,
            ssdp_msearch, udp_packet,
        };
        use std::collections::HashSet;
        use std::net::IpAddr;

        const STRICT_YAML: &str = "\
device-info:
  name: strict
  mac: \"02:00:00:00:00:71\"
  ipv4: 192.168.1.71
interactions:
  t-tcp:
    p:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          src-port: 40000
          dst-port: 9999
  t-udp:
    p:
      protocols:
        ipv4:
          src: phone
          dst: self
        udp:
          src-port: 40001
          dst-port: 9998
  t-dns:
    p:
      protocols:
        ipv4:
          src: self
          dst: gateway
        udp:
          dst-port: 53
        dns:
          qr: query
          qtype: A
          domain-name: pin.example
  t-dhcp:
    p:
      protocols:
        ethernet:
          src-mac: self
        udp:
          dst-port: 67
        dhcp:
          message-type: discover
  t-http:
    p:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          dst-port: 80
        http:
          method: GET
          uri: /api
  t-ssdp:
    p:
      protocols:
        ipv4:
          src: phone
          dst: 239.255.255.250
        udp:
          dst-port: 1900
        ssdp:
          method: M-SEARCH
          st: \"urn:pin:1\"
  t-coap:
    p:
      protocols:
        ipv4:
          src: phone
          dst: self
        udp:
          dst-port: 5683
        coap:
          type: CON
          method: GET
          uri-path: pinned
  t-icmp:
    p:
      protocols:
        ipv4:
          src: phone
          dst: self
        icmp:
          type: echo-request
  t-arp:
    p:
      protocols:
        arp:
          operation: request
          sender-ip: phone
          target-ip: self
  t-igmp:
    p:
      protocols:
        ipv4:
          src: self
          dst: 224.1.2.3
        igmp:
          type: membership-report
          group: 224.1.2.3
";
        let profile = crate::parser::parse_profile(STRICT_YAML, &fixtures::loader()).unwrap();

        let device = Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x71]), Ipv4Addr::new(192, 168, 1, 71));
        let device_boot = device; // static address, also used for dhcp
        let phone = fixtures::phone();
        let gw = fixtures::gateway();
        let mcast_ssdp = Host::v4(
            MacAddr([0x01, 0x00, 0x5e, 0x7f, 0xff, 0xfa]),
            Ipv4Addr::new(239, 255, 255, 250),
        );
        let mcast_igmp = Host::v4(
            MacAddr([0x01, 0x00, 0x5e, 0x01, 0x02, 0x03]),
            Ipv4Addr::new(224, 1, 2, 3),
        );
        let broadcast = Host::v4(MacAddr::BROADCAST, Ipv4Addr::new(255, 255, 255, 255));
        let t = Timestamp::from_millis;
        let packets = vec![
            tcp_packet(t(0), &phone, &device, 40000, 9999, tcp_flags::ACK, b""),
            udp_packet(t(10), &phone, &device, 40001, 9998, b"x"),
            dns_query(t(20), &device, &gw, 3, "pin.example", 1),
            dhcp_packet(t(30), &device_boot, &broadcast, 1, 7),
            http_request(t(40), &phone, &device, 50080, "GET", "/api/x"),
            ssdp_msearch(t(50), &phone, &mcast_ssdp, "urn:pin:1"),
            coap_request(t(60), &phone, &device, 0, 1, "pinned", 9),
            icmp_echo(t(70), &phone, &device, true),
            arp_packet(t(80), 1, &phone, &device),
            igmp_packet(t(90), &device, &mcast_igmp, 0x16, Ipv4Addr::new(224, 1, 2, 3)),
        ];
        let trace = Trace::new(packets).unwrap();

        let config = fixtures::lan_config();
        let profiled: HashSet<IpAddr> = [device.ip].into_iter().collect();
        let dns_table = crate::dns::DnsTable::new();
        let env = |now: Timestamp| MatchEnv {
            device: &profile.device_info,
            lan_prefixes: &config.lan_prefixes,
            gateway_addrs: &config.gateway_addrs,
            profiled_addrs: &profiled,
            dns: &dns_table,
            now,
            dns_max_age: None,
        };

        // Every fixture packet matches exactly its paired policy.
        for (i, pkt) in trace.packets.iter().enumerate() {
            let policy = &profile.interactions[i].policies[0];
            assert_eq!(
                eval_policy(policy, pkt, Direction::Forward, &env(pkt.timestamp)).outcome,
                MatchOutcome::Match,
                "fixture packet {i} must match its policy"
            );
        }

        for seed in 0..25u64 {
            let (fuzzed, log) = fuzz_trace(&trace, seed, 1.0);
            assert_eq!(log.edits.len(), trace.len());
            for edit in &log.edits {
                let pkt = &fuzzed.packets[edit.packet];
                let policy = &profile.interactions[edit.packet].policies[0];
                let outcome = eval_policy(policy, pkt, Direction::Forward, &env(pkt.timestamp)).outcome;
                assert_ne!(
                    outcome,
                    MatchOutcome::Match,
                    "seed {seed}: edit {edit:?} left the packet matching"
                );
            }
        }
    }

    #[test]
    fn mutated_packets_reparse_to_the_mutated_fields() {
        let trace = sample_trace();
        let (fuzzed, log) = fuzz_trace(&trace, 11, 1.0);
        for edit in &log.edits {
            let packet = &fuzzed.packets[edit.packet];
            let re = crate::packet::dissect(&packet.raw, packet.timestamp).unwrap();
            assert!(packet.fields_eq(&re), "packet {} reparses", edit.packet);
        }
    }
}
