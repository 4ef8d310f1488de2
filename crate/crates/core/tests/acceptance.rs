//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured result. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines).

use std::collections::HashSet;
use std::net::{IpAddr, Ipv4Addr};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homewall_core::engine::{Decision, Engine, EngineConfig, Reason};
use homewall_core::fsm::{compile_interaction, FsmRuntime};
use homewall_core::harness::{
    fuzz_trace, gen_attack, label_trace, token_bucket_oracle, AttackParams, AttackScenario,
};
use homewall_core::harness::fixtures::{
    self, acl_camera, bridge, cloud, gateway, hue_bridge, lan_config, mud_acl, phone, plug,
    tplink_plug_arp,
};
use homewall_core::matcher::{eval_policy, Direction, MatchEnv, MatchOutcome};
use homewall_core::packet::{
    arp_packet, coap_message, coap_request, dissect, dns_query, dns_response, http_request,
    icmp_echo, igmp_packet, mdns_query, a_record, ssdp_msearch, ssdp_notify, ssdp_response,
    tcp_flags, tcp_packet, udp_packet, write_pcap, read_pcap, Host, Packet, Timestamp, Trace,
};
use homewall_core::parser::parse_profile;
use homewall_core::profile::{MacAddr, Profile};

fn engine_with(profiles: &[Profile], config: &EngineConfig) -> Engine {
    let mut engine = Engine::new(config.clone());
    for profile in profiles {
        engine.register_profile(profile.clone()).expect("profile registers");
    }
    engine
}

fn ms(n: u64) -> Timestamp {
    Timestamp::from_millis(n)
}

// ---------------------------------------------------------------------------
// Base interaction fixtures for the fuzz campaign: five devices covering
// one-off (uni- and bidirectional), periodic, and transient policies over
// ARP, TCP, UDP, DNS/mDNS, DHCP, HTTP, SSDP, CoAP, ICMP, and IGMP.
// ---------------------------------------------------------------------------

struct BaseCase {
    name: &'static str,
    profiles: Vec<Profile>,
    config: EngineConfig,
    trace: Trace,
}

fn multicast_host(ip: [u8; 4]) -> Host {
    Host::v4(
        MacAddr([0x01, 0x00, 0x5e, ip[1] & 0x7f, ip[2], ip[3]]),
        Ipv4Addr::from(ip),
    )
}

fn laptop() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x60]), Ipv4Addr::new(192, 168, 1, 60))
}

fn wan_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x01]), Ipv4Addr::new(198, 51, 100, 7))
}

/// ARP pair gating a transient TCP command stream, plus unprofiled noise.
fn base_plug_arp() -> BaseCase {
    let mut packets = Vec::new();
    for cycle in 0..60u64 {
        let t0 = cycle * 61_000;
        packets.push(arp_packet(ms(t0), 1, &phone(), &plug()));
        packets.push(arp_packet(ms(t0 + 20), 2, &plug(), &phone()));
        for i in 0..4u64 {
            packets.push(tcp_packet(
                ms(t0 + 100 + i * 100),
                &phone(),
                &plug(),
                40000,
                9999,
                tcp_flags::PSH | tcp_flags::ACK,
                b"{\"relay\":1}",
            ));
        }
        // Unprofiled chatter passes through on the default.
        packets.push(tcp_packet(
            ms(t0 + 700),
            &laptop(),
            &wan_host(),
            55000,
            443,
            tcp_flags::ACK,
            b"\x17\x03\x03\x00\x02ok",
        ));
    }
    BaseCase {
        name: "plug-arp",
        profiles: vec![tplink_plug_arp()],
        config: lan_config(),
        trace: Trace::new(packets).unwrap(),
    }
}

/// Rate-limited HTTPS command stream with an mDNS side channel.
fn base_hue() -> BaseCase {
    let mdns_group = multicast_host([224, 0, 0, 251]);
    let mut packets = Vec::new();
    for cycle in 0..30u64 {
        let t0 = cycle * 3_000;
        packets.push(mdns_query(ms(t0), &bridge(), &mdns_group, "_hue._tcp.local", 12));
        for i in 0..12u64 {
            let (src, dst, sport, dport) = if i % 3 == 2 {
                (bridge(), phone(), 443, 52000)
            } else {
                (phone(), bridge(), 52000, 443)
            };
            packets.push(tcp_packet(
                ms(t0 + 100 + i * 100),
                &src,
                &dst,
                sport,
                dport,
                tcp_flags::PSH | tcp_flags::ACK,
                b"\x17\x03\x03\x00\x05hello",
            ));
        }
        packets.push(udp_packet(ms(t0 + 1400), &phone(), &bridge(), 50001, 5354, b"bye"));
    }
    BaseCase {
        name: "hue-https",
        profiles: vec![hue_bridge()],
        config: lan_config(),
        trace: Trace::new(packets).unwrap(),
    }
}

const COAP_HUB_YAML: &str = "\
device-info:
  name: coap-hub
  mac: \"02:00:00:00:00:21\"
  ipv4: 192.168.1.21
interactions:
  status-stream:
    coap-poll:
      protocols:
        ipv4:
          src: phone
          dst: self
        udp:
          dst-port: 5683
        coap:
          type: CON
          method: GET
          uri-path: status
    coap-notify:
      protocols:
        ipv4:
          src: phone
          dst: self
        udp:
          dst-port: 5683
        coap:
          type: NON
          uri-path: status
      bidirectional: true
      stats:
        packet-count: 20
";

fn coap_hub_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x21]), Ipv4Addr::new(192, 168, 1, 21))
}

/// One-off CoAP poll answered by a count-limited notification stream.
fn base_coap() -> BaseCase {
    let hub = coap_hub_host();
    let profile = parse_profile(COAP_HUB_YAML, &fixtures::loader()).unwrap();
    let mut packets = Vec::new();
    for cycle in 0..20u64 {
        let t0 = cycle * 5_000;
        packets.push(coap_request(ms(t0), &phone(), &hub, 0, 1, "status", cycle as u16 + 1));
        for i in 0..20u64 {
            // 2.05 Content notifications from the hub.
            packets.push(coap_message(
                ms(t0 + 50 + i * 40),
                &hub,
                &phone(),
                5683,
                50683,
                1,
                0x45,
                "status",
                (cycle * 100 + i) as u16,
            ));
        }
    }
    BaseCase {
        name: "coap-hub",
        profiles: vec![profile],
        config: lan_config(),
        trace: Trace::new(packets).unwrap(),
    }
}

const SENSOR_YAML: &str = "\
device-info:
  name: zigbee-sensor
  mac: \"02:00:00:00:00:31\"
  ipv4: 192.168.1.31
interactions:
  lease:
    discover:
      protocols:
        ethernet:
          src-mac: self
        udp:
          dst-port: 67
        dhcp:
          message-type: discover
    offer:
      protocols:
        ethernet:
          dst-mac: self
        udp:
          dst-port: 68
        dhcp:
          message-type: offer
    request:
      protocols:
        ethernet:
          src-mac: self
        udp:
          dst-port: 67
        dhcp:
          message-type: request
    lease-ack:
      protocols:
        ethernet:
          dst-mac: self
        udp:
          dst-port: 68
        dhcp:
          message-type: ack
  reachability:
    echo:
      protocols:
        ipv4:
          src: phone
          dst: self
        icmp:
          type: echo-request
      bidirectional: true
  multicast-join:
    report:
      protocols:
        ipv4:
          src: self
          dst: 224.1.2.3
        igmp:
          type: membership-report
          group: 224.1.2.3
";

fn sensor_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x31]), Ipv4Addr::new(192, 168, 1, 31))
}

/// DHCP lease sequence, ICMP reachability pair, and an IGMP join.
fn base_sensor() -> BaseCase {
    let sensor = sensor_host();
    let sensor_boot = Host::v4(sensor.mac, Ipv4Addr::UNSPECIFIED);
    let broadcast = Host::v4(MacAddr::BROADCAST, Ipv4Addr::new(255, 255, 255, 255));
    let igmp_group = multicast_host([224, 1, 2, 3]);
    let profile = parse_profile(SENSOR_YAML, &fixtures::loader()).unwrap();
    let mut packets = Vec::new();
    for cycle in 0..60u64 {
        let t0 = cycle * 2_000;
        let xid = 0x1000 + cycle as u32;
        packets.push(homewall_core::packet::dhcp_packet(ms(t0), &sensor_boot, &broadcast, 1, xid));
        packets.push(homewall_core::packet::dhcp_packet(ms(t0 + 30), &gateway(), &sensor, 2, xid));
        packets.push(homewall_core::packet::dhcp_packet(ms(t0 + 60), &sensor_boot, &broadcast, 3, xid));
        packets.push(homewall_core::packet::dhcp_packet(ms(t0 + 90), &gateway(), &sensor, 5, xid));
        packets.push(icmp_echo(ms(t0 + 200), &phone(), &sensor, true));
        packets.push(icmp_echo(ms(t0 + 230), &sensor, &phone(), false));
        packets.push(igmp_packet(ms(t0 + 400), &sensor, &igmp_group, 0x16, Ipv4Addr::new(224, 1, 2, 3)));
    }
    BaseCase {
        name: "dhcp-sensor",
        profiles: vec![profile],
        config: lan_config(),
        trace: Trace::new(packets).unwrap(),
    }
}

const TV_YAML: &str = "\
device-info:
  name: smart-tv
  mac: \"02:00:00:00:00:41\"
  ipv4: 192.168.1.41
interactions:
  discovery:
    msearch:
      protocols:
        ipv4:
          src: phone
          dst: 239.255.255.250
        udp:
          dst-port: 1900
        ssdp:
          method: M-SEARCH
          st: urn:smart-tv:1
    probe-reply:
      protocols:
        ipv4:
          src: self
          dst: phone
        udp:
          src-port: 1900
        ssdp:
          st: urn:smart-tv:1
  announce-control:
    notify:
      protocols:
        ipv4:
          src: self
          dst: 239.255.255.250
        udp:
          dst-port: 1900
        ssdp:
          method: NOTIFY
          st: urn:smart-tv:1
      stats:
        rate: 5/second
    control:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          dst-port: 80
        http:
          method: GET
          uri: /api
      stats:
        packet-count: 3
";

fn tv_host() -> Host {
    Host::v4(MacAddr([0x02, 0, 0, 0, 0, 0x41]), Ipv4Addr::new(192, 168, 1, 41))
}

/// SSDP discovery and periodic announcements closing into a short HTTP
/// control burst.
fn base_tv() -> BaseCase {
    let tv = tv_host();
    let ssdp_group = multicast_host([239, 255, 255, 250]);
    let profile = parse_profile(TV_YAML, &fixtures::loader()).unwrap();
    let mut packets = Vec::new();
    for cycle in 0..40u64 {
        let t0 = cycle * 4_000;
        packets.push(ssdp_msearch(ms(t0), &phone(), &ssdp_group, "urn:smart-tv:1"));
        packets.push(ssdp_response(ms(t0 + 50), &tv, &phone(), "urn:smart-tv:1"));
        for i in 0..6u64 {
            packets.push(ssdp_notify(ms(t0 + 200 + i * 500), &tv, &ssdp_group, "urn:smart-tv:1"));
        }
        for i in 0..3u64 {
            packets.push(http_request(
                ms(t0 + 3_300 + i * 100),
                &phone(),
                &tv,
                50080,
                "GET",
                "/api/power",
            ));
        }
    }
    BaseCase {
        name: "ssdp-tv",
        profiles: vec![profile],
        config: lan_config(),
        trace: Trace::new(packets).unwrap(),
    }
}

fn base_cases() -> Vec<BaseCase> {
    vec![base_plug_arp(), base_hue(), base_coap(), base_sensor(), base_tv()]
}

// ---------------------------------------------------------------------------
// Criterion 1: fuzz-oracle agreement
// ---------------------------------------------------------------------------

#[test]
fn c01_fuzz_oracle_agreement() {
    let started = Instant::now();
    let cases = base_cases();
    let mut total_packets = 0usize;
    let mut total_drop = 0usize;

    for case in &cases {
        // The unfuzzed base must be fully accepted by engine and labeler.
        let mut engine = engine_with(&case.profiles, &case.config);
        let base_report = engine.run_replay(&case.trace);
        assert_eq!(
            base_report.dropped, 0,
            "{}: base trace must be clean, verdicts {:?}",
            case.name,
            base_report
                .verdicts
                .iter()
                .filter(|v| v.decision == Decision::Drop)
                .take(3)
                .collect::<Vec<_>>()
        );
        let base_labels = label_trace(&case.trace, &case.profiles, &case.config, None);
        assert!(base_labels.expected.iter().all(|d| *d == Decision::Accept));

        for seed in 0..5u64 {
            let (fuzzed, edit_log) = fuzz_trace(&case.trace, seed, 0.3);
            let labeled = label_trace(&fuzzed, &case.profiles, &case.config, Some(edit_log));
            let mut engine = engine_with(&case.profiles, &case.config);
            let report = engine.run_replay(&fuzzed);
            let got = report.decisions();
            assert_eq!(got.len(), labeled.expected.len());
            for (i, (g, e)) in got.iter().zip(&labeled.expected).enumerate() {
                assert_eq!(
                    g, e,
                    "{} seed {seed}: verdict mismatch at packet {i}: {:?}",
                    case.name, report.verdicts[i]
                );
            }
            total_packets += got.len();
            total_drop += got.iter().filter(|d| **d == Decision::Drop).count();
        }
    }

    assert!(
        total_packets >= 10_000,
        "need at least 10k fuzzed packets, got {total_packets}"
    );
    assert!(total_drop > 0, "fuzzing must produce drops");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "fuzz campaign took {elapsed:?}");
    println!(
        "[PASS] C1 fuzz-oracle agreement: {total_packets} packets across {} fixtures x 5 seeds \
         ({total_drop} expected drops), engine == labeler on all, in {elapsed:?}",
        cases.len()
    );
}

/// Long-running variant of the fuzz campaign: many seeds and several
/// edit fractions. Run with `cargo test --test acceptance -- --ignored`.
#[test]
#[ignore = "deep stress run; the default campaign covers the criterion"]
fn fuzz_oracle_agreement_stress() {
    let mut total = 0usize;
    for case in base_cases() {
        for seed in 0..50u64 {
            for fraction in [0.05, 0.3, 0.6, 1.0] {
                let (fuzzed, edit_log) = fuzz_trace(&case.trace, seed, fraction);
                let labeled = label_trace(&fuzzed, &case.profiles, &case.config, Some(edit_log));
                let mut engine = engine_with(&case.profiles, &case.config);
                let report = engine.run_replay(&fuzzed);
                for (i, (g, e)) in report.decisions().iter().zip(&labeled.expected).enumerate() {
                    assert_eq!(
                        g, e,
                        "{} seed {seed} fraction {fraction}: mismatch at packet {i}: {:?}",
                        case.name, report.verdicts[i]
                    );
                }
                total += fuzzed.len();
            }
        }
    }
    println!("[PASS] stress: {total} packets, engine == labeler on all");
}

// ---------------------------------------------------------------------------
// Criteria 2-5: attack scenarios
// ---------------------------------------------------------------------------

#[test]
fn c02_attack_a1_https_flood() {
    let case = gen_attack(AttackScenario::A1HttpsFlood, &AttackParams::default()).unwrap();
    assert_eq!(case.labeled.trace.len(), 1000);

    // Independent oracle over the same arrivals.
    let stamps: Vec<Timestamp> = case.labeled.trace.packets.iter().map(|p| p.timestamp).collect();
    let rate = case.profile.interactions[0].policies[0]
        .stats
        .as_ref()
        .unwrap()
        .rate
        .clone()
        .unwrap();
    let oracle = token_bucket_oracle(&stamps, &rate);
    let oracle_accepts = oracle.iter().filter(|a| **a).count();

    let mut engine = engine_with(std::slice::from_ref(&case.profile), &lan_config());
    let report = engine.run_replay(&case.labeled.trace);
    assert_eq!(report.accepted as usize, oracle_accepts, "engine == token-bucket oracle");
    // A full bucket of 100 plus the refill earned across the 1-second
    // train; the tenth refill token lands exactly at t = 1.0 s, one
    // millisecond after the last packet.
    assert_eq!(oracle_accepts, 109);
    for (i, v) in report.verdicts.iter().enumerate() {
        if v.decision == Decision::Drop {
            assert_eq!(v.reason, Reason::RateExceeded, "packet {i}");
        }
        assert_eq!(v.decision == Decision::Accept, oracle[i], "packet {i}");
    }
    println!(
        "[PASS] C2 attack A1: flood of 1000 pps for 1 s against rate 10/s burst 100 -> \
         {oracle_accepts} accepted (== oracle), {} dropped RATE_EXCEEDED",
        report.dropped
    );
}

#[test]
fn c03_attack_a2_tcp_flood_and_boundary() {
    // Flood: drops begin exactly when the bucket exhausts.
    let case = gen_attack(AttackScenario::A2TcpFlood, &AttackParams::default()).unwrap();
    let mut engine = engine_with(std::slice::from_ref(&case.profile), &lan_config());
    let report = engine.run_replay(&case.labeled.trace);
    assert_eq!(report.decisions(), case.labeled.expected);
    let first_drop = report
        .verdicts
        .iter()
        .position(|v| v.decision == Decision::Drop)
        .expect("flood must exceed the rate");
    assert_eq!(first_drop, 20, "capacity 20 admits exactly the first 20 packets");
    assert!(report
        .verdicts
        .iter()
        .filter(|v| v.decision == Decision::Drop)
        .all(|v| v.reason == Reason::RateExceeded));

    // Boundary: steady traffic exactly at the limit is fully accepted.
    let steady = gen_attack(
        AttackScenario::A2TcpFlood,
        &AttackParams {
            pps: 20.0,
            duration: 5.0,
            with_precondition: false,
        },
    )
    .unwrap();
    let mut engine = engine_with(std::slice::from_ref(&steady.profile), &lan_config());
    let steady_report = engine.run_replay(&steady.labeled.trace);
    assert_eq!(steady_report.accepted, 100);
    assert_eq!(steady_report.dropped, 0);
    println!(
        "[PASS] C3 attack A2: 1000 pps flood first drop at packet {first_drop}; \
         steady 20 pps fully accepted (100/100)"
    );
}

#[test]
fn c04_attack_a3_arp_gate() {
    let bare = gen_attack(AttackScenario::A3TcpWithoutArp, &AttackParams::default()).unwrap();
    let mut engine = engine_with(std::slice::from_ref(&bare.profile), &lan_config());
    let report = engine.run_replay(&bare.labeled.trace);
    assert_eq!(report.dropped, 5);
    assert_eq!(report.accepted, 0);
    assert!(report.verdicts.iter().all(|v| v.reason == Reason::WrongState));

    let control = gen_attack(
        AttackScenario::A3TcpWithoutArp,
        &AttackParams {
            with_precondition: true,
            ..AttackParams::default()
        },
    )
    .unwrap();
    let mut engine = engine_with(std::slice::from_ref(&control.profile), &lan_config());
    let control_report = engine.run_replay(&control.labeled.trace);
    assert_eq!(control_report.dropped, 0);
    assert_eq!(control_report.accepted, 7);
    println!(
        "[PASS] C4 attack A3: 5/5 TCP:9999 dropped WRONG_STATE without the ARP pair; \
         7/7 accepted with it prepended"
    );
}

#[test]
fn c05_attack_a4_dns_gate() {
    let bare = gen_attack(AttackScenario::A4HttpsWithoutDns, &AttackParams::default()).unwrap();
    let mut engine = engine_with(std::slice::from_ref(&bare.profile), &lan_config());
    let report = engine.run_replay(&bare.labeled.trace);
    assert_eq!(report.accepted, 0);
    assert!(report
        .verdicts
        .iter()
        .all(|v| v.reason == Reason::UnresolvedName), "drops name the unresolved domain");

    let control = gen_attack(
        AttackScenario::A4HttpsWithoutDns,
        &AttackParams {
            with_precondition: true,
            ..AttackParams::default()
        },
    )
    .unwrap();
    let mut engine = engine_with(std::slice::from_ref(&control.profile), &lan_config());
    let control_report = engine.run_replay(&control.labeled.trace);
    assert_eq!(control_report.dropped, 0);
    println!(
        "[PASS] C5 attack A4: {}/{} HTTPS-from-cloud dropped UNRESOLVED_NAME without DNS; \
         all accepted after the DNS exchange",
        report.dropped,
        report.dropped
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: golden state machine
// ---------------------------------------------------------------------------

const GOLDEN_YAML: &str = "\
device-info:
  name: golden
  mac: \"02:00:00:00:00:51\"
  ipv4: 192.168.1.51
interactions:
  abc:
    a:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          dst-port: 1111
      bidirectional: true
    b:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          dst-port: 2222
      stats:
        rate: 100/second
    c:
      protocols:
        ipv4:
          src: phone
          dst: self
        tcp:
          dst-port: 3333
      stats:
        packet-count: 3
";

#[test]
fn c06_fsm_golden_three_policy_machine() {
    let profile = parse_profile(GOLDEN_YAML, &fixtures::loader()).unwrap();
    let fsm = compile_interaction(&profile.interactions[0]).unwrap();
    assert_eq!(fsm.states.len(), 4, "one-off bidir + periodic + transient = 4 states");

    let got: HashSet<(usize, &str, &str, &str, usize)> = fsm
        .transitions
        .iter()
        .map(|t| {
            (
                t.from,
                fsm.interaction.policies[t.policy].name.as_str(),
                t.dir.label(),
                t.guard.label(),
                t.to,
            )
        })
        .collect();
    let expected: HashSet<(usize, &str, &str, &str, usize)> = [
        (0, "a", "fwd", "next-match", 1),
        (1, "a", "bwd", "second-direction", 2),
        (2, "b", "fwd", "next-match", 2),
        (2, "c", "fwd", "next-match", 3),
        (3, "c", "fwd", "next-match", 3),
        (3, "c", "fwd", "expiry", 0),
        (3, "a", "fwd", "expiry", 1),
    ]
    .into_iter()
    .collect();
    assert_eq!(got, expected, "transition set equality, order-insensitive");
    println!(
        "[PASS] C6 FSM golden: bidirectional one-off + periodic + transient compiles to \
         4 states / {} transitions matching the reference edge set",
        fsm.transitions.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism and atomicity
// ---------------------------------------------------------------------------

#[test]
fn c07_determinism_and_atomicity() {
    let mut fixtures_checked = 0;
    let mut cases: Vec<(String, Vec<Profile>, EngineConfig, Trace)> = Vec::new();
    for case in base_cases() {
        let (fuzzed, _) = fuzz_trace(&case.trace, 0, 0.3);
        cases.push((
            format!("{}-base", case.name),
            case.profiles.clone(),
            case.config.clone(),
            case.trace,
        ));
        cases.push((format!("{}-fuzzed", case.name), case.profiles, case.config, fuzzed));
    }
    for scenario in [
        AttackScenario::A1HttpsFlood,
        AttackScenario::A2TcpFlood,
        AttackScenario::A3TcpWithoutArp,
        AttackScenario::A4HttpsWithoutDns,
    ] {
        let case = gen_attack(scenario, &AttackParams::default()).unwrap();
        cases.push((
            format!("attack-{}", case.scenario.name()),
            vec![case.profile],
            lan_config(),
            case.labeled.trace,
        ));
    }

    for (name, profiles, config, trace) in cases {
        // Determinism: byte-identical verdict logs.
        let mut first = engine_with(&profiles, &config);
        let report_a = first.run_replay(&trace);
        let mut second = engine_with(&profiles, &config);
        let report_b = second.run_replay(&trace);
        assert_eq!(
            report_a.verdict_log_jsonl(),
            report_b.verdict_log_jsonl(),
            "{name}: identical inputs must give identical logs"
        );

        // Atomicity: the accepted subsequence alone reproduces the state.
        let accepted: Vec<Packet> = trace
            .packets
            .iter()
            .zip(&report_a.verdicts)
            .filter(|(_, v)| v.decision == Decision::Accept)
            .map(|(p, _)| p.clone())
            .collect();
        let mut partial = engine_with(&profiles, &config);
        for pkt in &accepted {
            let verdict = partial.process_packet(pkt).expect("replayable");
            assert_eq!(
                verdict.decision,
                Decision::Accept,
                "{name}: accepted packets must accept again"
            );
        }
        let at = trace
            .packets
            .last()
            .map(|p| p.timestamp)
            .unwrap_or(Timestamp::ZERO);
        assert_eq!(
            first.fingerprint(at),
            partial.fingerprint(at),
            "{name}: accepted-only replay must reproduce engine state"
        );
        fixtures_checked += 1;
    }
    println!(
        "[PASS] C7 determinism & atomicity: byte-identical logs and accepted-subsequence \
         state equality on {fixtures_checked} fixtures"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: stateless ACL equivalence
// ---------------------------------------------------------------------------

#[test]
fn c08_mud_acl_equivalence() {
    let profile = mud_acl();
    let config = lan_config();
    let camera = acl_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(0xac1);

    let hosts = [camera, gateway(), phone(), cloud(), laptop(), wan_host()];
    let ports: [u16; 6] = [53, 123, 443, 554, 80, 9000];
    let mut packets = Vec::new();
    for i in 0..1000u64 {
        let src = hosts[rng.gen_range(0..hosts.len())];
        let mut dst = hosts[rng.gen_range(0..hosts.len())];
        while dst.ip == src.ip {
            dst = hosts[rng.gen_range(0..hosts.len())];
        }
        let sport = if rng.gen_bool(0.5) {
            ports[rng.gen_range(0..ports.len())]
        } else {
            rng.gen_range(1024..65000)
        };
        let dport = if rng.gen_bool(0.5) {
            ports[rng.gen_range(0..ports.len())]
        } else {
            rng.gen_range(1024..65000)
        };
        let pkt = if rng.gen_bool(0.5) {
            tcp_packet(ms(i * 10), &src, &dst, sport, dport, tcp_flags::ACK, b"")
        } else {
            udp_packet(ms(i * 10), &src, &dst, sport, dport, b"x")
        };
        packets.push(pkt);
    }
    let trace = Trace::new(packets).unwrap();

    // Stateless oracle: accept iff any single-policy ACL matches, with
    // the unprofiled default for packets not involving the camera.
    let profiled: HashSet<IpAddr> = [camera.ip].into_iter().collect();
    let dns = homewall_core::dns::DnsTable::new();
    let oracle: Vec<Decision> = trace
        .packets
        .iter()
        .map(|pkt| {
            let involves = pkt.link.src == camera.mac
                || pkt.link.dst == camera.mac
                || pkt
                    .ip()
                    .map(|ip| ip.src() == camera.ip || ip.dst() == camera.ip)
                    .unwrap_or(false);
            if !involves {
                return config.default_unprofiled;
            }
            let env = MatchEnv {
                device: &profile.device_info,
                lan_prefixes: &config.lan_prefixes,
                gateway_addrs: &config.gateway_addrs,
                profiled_addrs: &profiled,
                dns: &dns,
                now: pkt.timestamp,
                dns_max_age: None,
            };
            let hit = profile.interactions.iter().any(|interaction| {
                eval_policy(&interaction.policies[0], pkt, Direction::Forward, &env).outcome
                    == MatchOutcome::Match
            });
            if hit {
                Decision::Accept
            } else {
                Decision::Drop
            }
        })
        .collect();

    let mut engine = engine_with(std::slice::from_ref(&profile), &config);
    let report = engine.run_replay(&trace);
    assert_eq!(report.decisions(), oracle, "engine == stateless ACL oracle");
    let accepts = oracle.iter().filter(|d| **d == Decision::Accept).count();
    assert!(accepts > 100 && accepts < 1000, "mix has both outcomes ({accepts} accepts)");
    println!(
        "[PASS] C8 ACL equivalence: 1000 random packets, engine verdicts identical to the \
         stateless ACL oracle ({accepts} accepted)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: decision-time bound on a mixed trace
// ---------------------------------------------------------------------------

#[test]
fn c09_per_packet_decision_time() {
    // A 30k-packet mixed trace over three devices plus background noise.
    let mut packets = Vec::new();
    let mdns_group = multicast_host([224, 0, 0, 251]);
    let mut t = 0u64;
    while packets.len() < 30_000 {
        packets.push(arp_packet(ms(t), 1, &phone(), &plug()));
        packets.push(arp_packet(ms(t + 10), 2, &plug(), &phone()));
        for i in 0..10u64 {
            packets.push(tcp_packet(
                ms(t + 20 + i * 20),
                &phone(),
                &plug(),
                40000,
                9999,
                tcp_flags::ACK,
                b"{\"relay\":0}",
            ));
        }
        packets.push(mdns_query(ms(t + 240), &bridge(), &mdns_group, "_hue._tcp.local", 12));
        for i in 0..10u64 {
            let (src, dst, sport, dport) = if i % 3 == 2 {
                (bridge(), phone(), 443, 52000)
            } else {
                (phone(), bridge(), 52000, 443)
            };
            packets.push(tcp_packet(
                ms(t + 300 + i * 100),
                &src,
                &dst,
                sport,
                dport,
                tcp_flags::ACK,
                b"\x17\x03\x03\x00\x01x",
            ));
        }
        packets.push(udp_packet(ms(t + 1400), &phone(), &bridge(), 50001, 5354, b"bye"));
        for i in 0..6u64 {
            packets.push(tcp_packet(
                ms(t + 1500 + i * 10),
                &laptop(),
                &wan_host(),
                55000,
                443,
                tcp_flags::ACK,
                b"",
            ));
        }
        t += 61_000;
    }
    packets.truncate(30_000);
    let trace = Trace::new(packets).unwrap();

    let mut engine = engine_with(&[tplink_plug_arp(), hue_bridge()], &lan_config());
    let report = engine.run_replay(&trace);
    assert_eq!(report.accepted + report.dropped, 30_000);
    let mean = report.latency_us.mean;
    let p97_5 = report.latency_us.p97_5;
    assert!(mean < 1000.0, "mean decision time {mean:.1}us must stay under 1ms");
    assert!(p97_5 < 1000.0, "p97.5 decision time {p97_5:.1}us must stay under 1ms");
    println!(
        "[PASS] C9 decision time: 30k-packet mixed trace, mean {mean:.1}us, \
         p2.5 {:.1}us, p97.5 {p97_5:.1}us (< 1 ms)",
        report.latency_us.p2_5
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: serialization round-trip and dissection totality
// ---------------------------------------------------------------------------

#[test]
fn c10_roundtrip_and_totality() {
    // Round-trip: dissect(serialize(fields)) restores the fields for every
    // supported layer, over randomized field values.
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    let hosts = [phone(), plug(), bridge(), gateway(), cloud(), laptop()];
    let mut roundtrips = 0;
    for i in 0..2_000u64 {
        let src = hosts[rng.gen_range(0..hosts.len())];
        let mut dst = hosts[rng.gen_range(0..hosts.len())];
        while dst.ip == src.ip {
            dst = hosts[rng.gen_range(0..hosts.len())];
        }
        let ts = ms(i);
        let pkt = match rng.gen_range(0..12) {
            0 => arp_packet(ts, rng.gen_range(1..3), &src, &dst),
            1 => icmp_echo(ts, &src, &dst, rng.gen_bool(0.5)),
            2 => tcp_packet(
                ts,
                &src,
                &dst,
                rng.gen_range(1..65535),
                rng.gen_range(1..65535),
                rng.gen_range(0..64),
                &vec![rng.gen::<u8>(); rng.gen_range(0..64)],
            ),
            3 => udp_packet(
                ts,
                &src,
                &dst,
                rng.gen_range(1..65535),
                rng.gen_range(1..65535),
                &vec![rng.gen::<u8>(); rng.gen_range(0..64)],
            ),
            4 => dns_query(ts, &src, &dst, rng.gen(), "a.b-c.example", 1),
            5 => dns_response(
                ts,
                &src,
                &dst,
                rng.gen(),
                "svc.example",
                1,
                vec![a_record("svc.example", rng.gen_range(1..3600), Ipv4Addr::from(rng.gen::<[u8; 4]>()))],
            ),
            6 => mdns_query(ts, &src, &multicast_host([224, 0, 0, 251]), "_x._tcp.local", 12),
            7 => homewall_core::packet::dhcp_packet(ts, &src, &dst, rng.gen_range(1..9), rng.gen()),
            8 => http_request(ts, &src, &dst, rng.gen_range(1024..65535), "GET", "/index"),
            9 => ssdp_msearch(ts, &src, &multicast_host([239, 255, 255, 250]), "ssdp:all"),
            10 => coap_request(ts, &src, &dst, rng.gen_range(0..2), rng.gen_range(1..5), "a/b", rng.gen()),
            _ => igmp_packet(
                ts,
                &src,
                &multicast_host([224, 1, 1, 1]),
                0x16,
                Ipv4Addr::new(224, 1, 1, 1),
            ),
        };
        let re = dissect(&pkt.raw, pkt.timestamp).expect("built packets dissect");
        assert!(
            pkt.fields_eq(&re),
            "round-trip mismatch for case {i}: {:#?} vs {:#?}",
            pkt.layers,
            re.layers
        );
        roundtrips += 1;
    }

    // Byte-exactness: re-serializing an unmodified packet equals raw.
    let pkt = dns_query(ms(0), &hosts[0], &hosts[1], 1, "x.example", 1);
    assert_eq!(pkt.to_bytes(), pkt.raw);
    assert_eq!(pkt.canonical_bytes(), pkt.raw);

    // Totality: random byte blobs never panic, and junk behind a valid
    // Ethernet header always yields a packet.
    let mut blobs = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..600);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let _ = dissect(&bytes, Timestamp::ZERO);
        // Bias some blobs toward plausible structure.
        if bytes.len() >= 34 {
            bytes[12] = 0x08;
            bytes[13] = if rng.gen_bool(0.5) { 0x00 } else { 0x06 };
            let result = dissect(&bytes, Timestamp::ZERO);
            assert!(result.is_ok(), "ethernet-framed junk must dissect");
        }
        blobs += 1;
    }

    // Corrupted real packets stress the app-layer parsers.
    for i in 0..2_000u64 {
        let mut bytes = dns_response(
            ms(i),
            &hosts[0],
            &hosts[1],
            7,
            "x.example",
            1,
            vec![a_record("x.example", 60, Ipv4Addr::new(1, 2, 3, 4))],
        )
        .raw;
        for _ in 0..4 {
            let pos = rng.gen_range(0..bytes.len());
            bytes[pos] = rng.gen();
        }
        let _ = dissect(&bytes, Timestamp::ZERO);
    }

    // Wire formats survive a pcap round-trip byte-exactly.
    let trace = Trace::new(vec![
        dns_query(ms(0), &hosts[0], &hosts[1], 1, "x.example", 1),
        coap_request(ms(1), &hosts[0], &hosts[1], 0, 1, "s", 2),
    ])
    .unwrap();
    let again = read_pcap(&write_pcap(&trace)).unwrap();
    assert_eq!(again.packets[0].raw, trace.packets[0].raw);
    assert_eq!(again.packets[1].raw, trace.packets[1].raw);

    println!(
        "[PASS] C10 round-trip & totality: {roundtrips} randomized field round-trips exact; \
         {blobs} random blobs dissected without panic"
    );
}

// ---------------------------------------------------------------------------
// Supporting checks: step/match consistency on random traffic
// ---------------------------------------------------------------------------

#[test]
fn step_accepts_only_matching_packets() {
    use homewall_core::matcher::match_policy;

    let profile = tplink_plug_arp();
    let interaction = &profile.interactions[0];
    let fsm = Arc::new(compile_interaction(interaction).unwrap());
    let mut rt = FsmRuntime::new(fsm);
    let config = lan_config();
    let profiled: HashSet<IpAddr> = [plug().ip].into_iter().collect();
    let dns = homewall_core::dns::DnsTable::new();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..2_000u64 {
        let pkt = match rng.gen_range(0..4) {
            0 => arp_packet(ms(i * 10), rng.gen_range(1..3), &phone(), &plug()),
            1 => arp_packet(ms(i * 10), rng.gen_range(1..3), &plug(), &phone()),
            2 => tcp_packet(ms(i * 10), &phone(), &plug(), 40000, 9999, tcp_flags::ACK, b""),
            _ => tcp_packet(
                ms(i * 10),
                &phone(),
                &plug(),
                40000,
                rng.gen_range(1..65535),
                tcp_flags::ACK,
                b"",
            ),
        };
        let env = MatchEnv {
            device: &profile.device_info,
            lan_prefixes: &config.lan_prefixes,
            gateway_addrs: &config.gateway_addrs,
            profiled_addrs: &profiled,
            dns: &dns,
            now: pkt.timestamp,
            dns_max_age: None,
        };
        if let homewall_core::fsm::StepResult::MatchAccept { policy, .. } = rt.step(&pkt, &env) {
            let p = &interaction.policies[policy];
            let fwd = match_policy(p, &pkt, Direction::Forward, &env).unwrap_or(false);
            let bwd = match_policy(p, &pkt, Direction::Backward, &env).unwrap_or(false);
            assert!(fwd || bwd, "accepted packet must match the accepting policy");
        }
    }
}
