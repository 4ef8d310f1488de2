//! Cache of observed DNS resolutions, populated from accepted DNS/mDNS
//! responses. Domain-name endpoints in policies match against this table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::IpAddr;

use serde::Serialize;

use crate::packet::{DnsMessage, DnsRdata, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DnsEntry {
    pub addresses: BTreeSet<IpAddr>,
    pub inserted_at: Timestamp,
}

/// Map from normalized FQDN (lowercase, no trailing dot) to the address
/// set observed for it. Lookups on absent names yield the empty set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DnsTable {
    entries: HashMap<String, DnsEntry>,
}

pub fn normalize_name(name: &str) -> String {
    name.trim_end_matches('.').to_ascii_lowercase()
}

impl DnsTable {
    pub fn new() -> Self {
        DnsTable::default()
    }

    pub fn entry(&self, name: &str) -> Option<&DnsEntry> {
        self.entries.get(&normalize_name(name))
    }

    /// Addresses known for `name`; empty when the name was never resolved.
    pub fn lookup(&self, name: &str) -> BTreeSet<IpAddr> {
        self.entry(name)
            .map(|e| e.addresses.clone())
            .unwrap_or_default()
    }

    pub fn insert(&mut self, name: &str, addr: IpAddr, at: Timestamp) {
        let entry = self
            .entries
            .entry(normalize_name(name))
            .or_insert_with(|| DnsEntry {
                addresses: BTreeSet::new(),
                inserted_at: at,
            });
        entry.addresses.insert(addr);
        entry.inserted_at = at;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Record every A/AAAA answer of a response, following CNAME chains
    /// within the same message so aliases resolve to the chain's
    /// addresses. Malformed records are skipped.
    pub fn observe_response(&mut self, message: &DnsMessage, at: Timestamp) {
        if !message.is_response() {
            return;
        }
        let mut direct: HashMap<String, BTreeSet<IpAddr>> = HashMap::new();
        let mut cname: HashMap<String, String> = HashMap::new();
        for record in message.answers.iter().chain(&message.additionals) {
            let name = normalize_name(&record.name);
            match &record.rdata {
                DnsRdata::A(a) => {
                    direct.entry(name).or_default().insert(IpAddr::V4(*a));
                }
                DnsRdata::Aaaa(a) => {
                    direct.entry(name).or_default().insert(IpAddr::V6(*a));
                }
                DnsRdata::Cname(target) => {
                    cname.insert(name, normalize_name(target));
                }
                _ => {}
            }
        }
        let names: Vec<String> = direct.keys().chain(cname.keys()).cloned().collect();
        for name in names {
            let mut addresses: BTreeSet<IpAddr> =
                direct.get(&name).cloned().unwrap_or_default();
            let mut cursor = name.clone();
            for _ in 0..64 {
                match cname.get(&cursor) {
                    Some(target) => {
                        if let Some(addrs) = direct.get(target) {
                            addresses.extend(addrs.iter().copied());
                        }
                        cursor = target.clone();
                    }
                    None => break,
                }
            }
            for addr in addresses {
                self.insert(&name, addr, at);
            }
        }
    }

    /// Deterministic snapshot for reports and state fingerprints.
    pub fn snapshot(&self) -> BTreeMap<String, BTreeSet<IpAddr>> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), v.addresses.clone()))
            .collect()
    }
}
