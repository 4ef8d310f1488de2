//! Canonical device fixtures shared by the attack generators, the CLI,
//! and the validation suites. The profile sources live under `profiles/`
//! at the repository root.

use std::net::{IpAddr, Ipv4Addr};

use crate::engine::{ClockMode, Decision, EngineConfig};
use crate::packet::Host;
use crate::parser::{parse_profile, MemLoader};
use crate::profile::{MacAddr, Profile};

pub const PATTERNS_YAML: &str = include_str!("../../../../profiles/patterns.yaml");
pub const TPLINK_PLUG_YAML: &str = include_str!("../../../../profiles/tplink-plug.yaml");
pub const TPLINK_PLUG_ARP_YAML: &str = include_str!("../../../../profiles/tplink-plug-arp.yaml");
pub const HUE_BRIDGE_YAML: &str = include_str!("../../../../profiles/hue-bridge.yaml");
pub const MUD_ACL_YAML: &str = include_str!("../../../../profiles/mud-acl.yaml");

pub fn loader() -> MemLoader {
    MemLoader::default().with("patterns.yaml", PATTERNS_YAML)
}

pub fn tplink_plug() -> Profile {
    parse_profile(TPLINK_PLUG_YAML, &loader()).expect("plug fixture parses")
}

pub fn tplink_plug_arp() -> Profile {
    parse_profile(TPLINK_PLUG_ARP_YAML, &loader()).expect("arp plug fixture parses")
}

pub fn hue_bridge() -> Profile {
    parse_profile(HUE_BRIDGE_YAML, &loader()).expect("hue fixture parses")
}

pub fn mud_acl() -> Profile {
    parse_profile(MUD_ACL_YAML, &loader()).expect("acl fixture parses")
}

pub const CLOUD_DOMAIN: &str = "cloud.tplink.example";

pub fn phone() -> Host {
    Host::v4(MacAddr([0x02, 0x00, 0x00, 0x00, 0x00, 0x10]), Ipv4Addr::new(192, 168, 1, 20))
}

pub fn gateway() -> Host {
    Host::v4(MacAddr([0x02, 0x00, 0x00, 0x00, 0x00, 0x01]), Ipv4Addr::new(192, 168, 1, 1))
}

pub fn cloud() -> Host {
    Host::v4(MacAddr([0x02, 0x00, 0x00, 0x00, 0x00, 0x01]), Ipv4Addr::new(203, 0, 113, 10))
}

pub fn plug() -> Host {
    Host::v4(MacAddr([0x50, 0xc7, 0xbf, 0x00, 0x00, 0x01]), Ipv4Addr::new(192, 168, 1, 135))
}

pub fn bridge() -> Host {
    Host::v4(MacAddr([0x00, 0x17, 0x88, 0x00, 0x00, 0x02]), Ipv4Addr::new(192, 168, 1, 130))
}

pub fn acl_camera() -> Host {
    Host::v4(MacAddr([0x02, 0xac, 0x10, 0x00, 0x00, 0x05]), Ipv4Addr::new(192, 168, 1, 77))
}

/// LAN configuration matching the fixture addresses.
pub fn lan_config() -> EngineConfig {
    EngineConfig {
        lan_prefixes: vec!["192.168.1.0/24".parse().unwrap()],
        gateway_addrs: vec![IpAddr::V4(Ipv4Addr::new(192, 168, 1, 1))],
        default_unprofiled: Decision::Accept,
        clock_mode: ClockMode::Replay,
        dns_max_age: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::PolicyKind;

    #[test]
    fn fixtures_parse_and_validate() {
        assert_eq!(tplink_plug().interactions.len(), 2);
        assert_eq!(tplink_plug_arp().interactions.len(), 1);
        assert_eq!(hue_bridge().interactions.len(), 2);
    }

    #[test]
    fn include_fills_the_cloud_domain() {
        let profile = tplink_plug();
        let cloud = profile.interaction("cloud-command").unwrap();
        match &cloud.policies[0].match_spec.app {
            Some(crate::profile::AppMatch::Dns(d)) => {
                assert_eq!(d.domain_name.as_deref(), Some(CLOUD_DOMAIN));
            }
            other => panic!("expected dns match, got {other:?}"),
        }
        assert!(cloud.policies[0].bidirectional, "pattern carries bidirectional");
    }

    #[test]
    fn canonical_emission_round_trips_every_fixture() {
        for profile in [tplink_plug(), tplink_plug_arp(), hue_bridge(), mud_acl()] {
            let emitted = crate::parser::to_canonical_yaml(&profile);
            let reparsed =
                crate::parser::parse_profile(&emitted, &crate::parser::NoFiles).unwrap();
            assert_eq!(profile, reparsed, "{} must round-trip", profile.device_info.name);
        }
    }

    #[test]
    fn acl_profile_is_stateless_shaped() {
        let profile = mud_acl();
        assert!(profile.interactions.len() >= 5);
        for interaction in &profile.interactions {
            assert_eq!(interaction.policies.len(), 1);
            let p = &interaction.policies[0];
            assert_eq!(p.kind, PolicyKind::OneOff);
            assert!(!p.bidirectional);
            assert!(p.stats.is_none());
        }
    }
}
