//! Generators for the four attack scenarios, each annotated with the
//! verdicts the firewall is expected to issue.

use thiserror::Error;

use crate::engine::Decision;
use crate::matcher::RateBucket;
use crate::packet::{
    a_record, arp_packet, dns_query, dns_response, tcp_flags, tcp_packet, Packet, Timestamp,
    Trace,
};
use crate::profile::{Profile, Rate};

use super::fixtures;
use super::label::LabeledTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackScenario {
    /// HTTPS flood against the bridge's rate-limited command policy.
    A1HttpsFlood,
    /// TCP port 9999 flood against the plug's rate-limited policy.
    A2TcpFlood,
    /// TCP commands without the gating ARP request/reply pair.
    A3TcpWithoutArp,
    /// HTTPS from the cloud address without a prior DNS exchange.
    A4HttpsWithoutDns,
}

impl AttackScenario {
    pub fn parse(name: &str) -> Option<AttackScenario> {
        match name.to_ascii_uppercase().as_str() {
            "A1" => Some(AttackScenario::A1HttpsFlood),
            "A2" => Some(AttackScenario::A2TcpFlood),
            "A3" => Some(AttackScenario::A3TcpWithoutArp),
            "A4" => Some(AttackScenario::A4HttpsWithoutDns),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackScenario::A1HttpsFlood => "A1",
            AttackScenario::A2TcpFlood => "A2",
            AttackScenario::A3TcpWithoutArp => "A3",
            AttackScenario::A4HttpsWithoutDns => "A4",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackParams {
    /// Flood rate in packets per second (A1/A2).
    pub pps: f64,
    /// Flood duration in seconds (A1/A2).
    pub duration: f64,
    /// Prepend the legitimate preamble (ARP pair or DNS exchange), making
    /// the trace the negative control that must be fully accepted.
    pub with_precondition: bool,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            pps: 1000.0,
            duration: 1.0,
            with_precondition: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BadParams {
    #[error("rate and duration must be positive")]
    NonPositive,
    #[error("flood would be empty")]
    Empty,
}

/// An attack trace with the profile it targets and the expected verdicts.
#[derive(Debug, Clone)]
pub struct AttackCase {
    pub scenario: AttackScenario,
    pub profile: Profile,
    pub labeled: LabeledTrace,
}

/// Discrete token-bucket simulation: the oracle for which flood packets a
/// rate-limited policy admits.
pub fn token_bucket_oracle(timestamps: &[Timestamp], rate: &Rate) -> Vec<bool> {
    let mut bucket = RateBucket::from_rate(rate);
    timestamps
        .iter()
        .map(|&ts| {
            let dt = ts.seconds_since(bucket.last_refill);
            bucket.tokens = (bucket.tokens + bucket.fill_rate * dt).min(bucket.capacity);
            bucket.last_refill = ts;
            if bucket.tokens >= 1.0 {
                bucket.tokens -= 1.0;
                true
            } else {
                false
            }
        })
        .collect()
}

fn flood_timestamps(params: &AttackParams, start_ms: u64) -> Result<Vec<Timestamp>, BadParams> {
    if params.pps <= 0.0 || params.duration <= 0.0 {
        return Err(BadParams::NonPositive);
    }
    let n = (params.pps * params.duration).round() as usize;
    if n == 0 {
        return Err(BadParams::Empty);
    }
    let step_ns = (1e9 / params.pps) as u64;
    Ok((0..n)
        .map(|i| {
            let ns = start_ms * 1_000_000 + i as u64 * step_ns;
            Timestamp::new(ns / 1_000_000_000, (ns % 1_000_000_000) as u32)
        })
        .collect())
}

pub fn gen_attack(scenario: AttackScenario, params: &AttackParams) -> Result<AttackCase, BadParams> {
    match scenario {
        AttackScenario::A1HttpsFlood => {
            let profile = fixtures::hue_bridge();
            let rate = profile
                .interaction("phone-control")
                .and_then(|i| i.policies[0].stats.as_ref())
                .and_then(|s| s.rate.clone())
                .expect("bridge https policy is rate limited");
            let timestamps = flood_timestamps(params, 0)?;
            let admitted = token_bucket_oracle(&timestamps, &rate);
            let packets: Vec<Packet> = timestamps
                .iter()
                .map(|&ts| {
                    tcp_packet(
                        ts,
                        &fixtures::phone(),
                        &fixtures::bridge(),
                        52000,
                        443,
                        tcp_flags::PSH | tcp_flags::ACK,
                        b"\x17\x03\x03\x00\x08command!",
                    )
                })
                .collect();
            let expected = admitted
                .iter()
                .map(|&a| if a { Decision::Accept } else { Decision::Drop })
                .collect();
            Ok(AttackCase {
                scenario,
                profile,
                labeled: LabeledTrace {
                    trace: Trace::new(packets).expect("monotone flood"),
                    expected,
                    edit_log: None,
                },
            })
        }
        AttackScenario::A2TcpFlood => {
            let profile = fixtures::tplink_plug();
            let rate = profile
                .interaction("local-command")
                .and_then(|i| i.policies[0].stats.as_ref())
                .and_then(|s| s.rate.clone())
                .expect("plug tcp policy is rate limited");
            let timestamps = flood_timestamps(params, 0)?;
            let admitted = token_bucket_oracle(&timestamps, &rate);
            let packets: Vec<Packet> = timestamps
                .iter()
                .map(|&ts| {
                    tcp_packet(
                        ts,
                        &fixtures::phone(),
                        &fixtures::plug(),
                        53000,
                        9999,
                        tcp_flags::PSH | tcp_flags::ACK,
                        b"{\"system\":{\"set_relay_state\":{\"state\":1}}}",
                    )
                })
                .collect();
            let expected = admitted
                .iter()
                .map(|&a| if a { Decision::Accept } else { Decision::Drop })
                .collect();
            Ok(AttackCase {
                scenario,
                profile,
                labeled: LabeledTrace {
                    trace: Trace::new(packets).expect("monotone flood"),
                    expected,
                    edit_log: None,
                },
            })
        }
        AttackScenario::A3TcpWithoutArp => {
            let profile = fixtures::tplink_plug_arp();
            let mut packets = Vec::new();
            let mut expected = Vec::new();
            if params.with_precondition {
                packets.push(arp_packet(
                    Timestamp::from_millis(0),
                    1,
                    &fixtures::phone(),
                    &fixtures::plug(),
                ));
                packets.push(arp_packet(
                    Timestamp::from_millis(5),
                    2,
                    &fixtures::plug(),
                    &fixtures::phone(),
                ));
                expected.extend([Decision::Accept, Decision::Accept]);
            }
            // Five command packets: enough to exercise the gate without
            // flooding the device.
            for i in 0..5u64 {
                packets.push(tcp_packet(
                    Timestamp::from_millis(100 + i * 50),
                    &fixtures::phone(),
                    &fixtures::plug(),
                    53000,
                    9999,
                    tcp_flags::PSH | tcp_flags::ACK,
                    b"{\"system\":{\"set_relay_state\":{\"state\":0}}}",
                ));
                expected.push(if params.with_precondition {
                    Decision::Accept
                } else {
                    Decision::Drop
                });
            }
            Ok(AttackCase {
                scenario,
                profile,
                labeled: LabeledTrace {
                    trace: Trace::new(packets).expect("monotone trace"),
                    expected,
                    edit_log: None,
                },
            })
        }
        AttackScenario::A4HttpsWithoutDns => {
            let profile = fixtures::tplink_plug();
            let domain = fixtures::CLOUD_DOMAIN;
            let mut packets = Vec::new();
            let mut expected = Vec::new();
            if params.with_precondition {
                packets.push(dns_query(
                    Timestamp::from_millis(0),
                    &fixtures::plug(),
                    &fixtures::gateway(),
                    0x3344,
                    domain,
                    1,
                ));
                packets.push(dns_response(
                    Timestamp::from_millis(20),
                    &fixtures::gateway(),
                    &fixtures::plug(),
                    0x3344,
                    domain,
                    1,
                    vec![a_record(domain, 300, match fixtures::cloud().ip {
                        std::net::IpAddr::V4(v4) => v4,
                        std::net::IpAddr::V6(_) => unreachable!("cloud fixture is v4"),
                    })],
                ));
                expected.extend([Decision::Accept, Decision::Accept]);
            }
            for i in 0..8u64 {
                packets.push(tcp_packet(
                    Timestamp::from_millis(100 + i * 40),
                    &fixtures::cloud(),
                    &fixtures::plug(),
                    443,
                    54000,
                    tcp_flags::PSH | tcp_flags::ACK,
                    b"\x17\x03\x03\x00\x08response",
                ));
                expected.push(if params.with_precondition {
                    Decision::Accept
                } else {
                    Decision::Drop
                });
            }
            Ok(AttackCase {
                scenario,
                profile,
                labeled: LabeledTrace {
                    trace: Trace::new(packets).expect("monotone trace"),
                    expected,
                    edit_log: None,
                },
            })
        }
    }
}
