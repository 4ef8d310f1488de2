//! Profile parsing: YAML source to a validated [`Profile`], with
//! `!include` resolution across files and override substitution.

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::names;
use crate::profile::{
    validate_profile, AppMatch, ArpMatch, ArpOperation, CoapMatch, DeviceInfo, DhcpMatch,
    Diagnostic, DnsMatch, DnsQr, EndpointExpr, HttpMatch, IcmpMatch, IgmpMatch, Interaction,
    IpMatch, IpVersion, LinkMatch, MacExpr, MatchSpec, Policy, PolicyKind, Profile, Rate,
    SsdpMatch, Stats, TransportMatch, TransportProtocol,
};
use crate::yaml::{self, IncludeRef, Mapping, Node, SyntaxError};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("profile is invalid:\n{}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Source of referenced documents for file-qualified includes.
pub trait FileLoader {
    fn load(&self, name: &str) -> Result<String, String>;
}

/// Loader that refuses every file; fine for self-contained profiles.
pub struct NoFiles;

impl FileLoader for NoFiles {
    fn load(&self, name: &str) -> Result<String, String> {
        Err(format!("no loader configured, cannot load `{name}`"))
    }
}

/// Loads referenced documents from a directory.
pub struct DirLoader {
    base: PathBuf,
}

impl DirLoader {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        DirLoader { base: base.into() }
    }
}

impl FileLoader for DirLoader {
    fn load(&self, name: &str) -> Result<String, String> {
        if name.contains("..") || name.starts_with('/') {
            return Err(format!("refusing include path `{name}`"));
        }
        std::fs::read_to_string(self.base.join(name)).map_err(|e| format!("{name}: {e}"))
    }
}

/// In-memory loader, mostly for tests and embedded fixtures.
#[derive(Default)]
pub struct MemLoader {
    files: HashMap<String, String>,
}

impl MemLoader {
    pub fn with(mut self, name: &str, content: &str) -> Self {
        self.files.insert(name.to_string(), content.to_string());
        self
    }
}

impl FileLoader for MemLoader {
    fn load(&self, name: &str) -> Result<String, String> {
        self.files
            .get(name)
            .cloned()
            .ok_or_else(|| format!("no such file `{name}`"))
    }
}

/// Parse profile source into a validated [`Profile`]. All includes,
/// anchors, and pattern references are inlined; the result passes
/// [`validate_profile`] with no diagnostics.
pub fn parse_profile(source: &str, loader: &dyn FileLoader) -> Result<Profile, ParseError> {
    let root = yaml::parse(source)?;
    let mut resolver = Resolver {
        loader,
        docs: HashMap::new(),
    };
    resolver.docs.insert(ROOT_DOC.to_string(), root.clone());
    let mut stack = Vec::new();
    let resolved = resolver.resolve_node(&root, ROOT_DOC, &mut stack)?;
    debug_assert!(resolved.is_fully_inlined());

    let mut diags = Vec::new();
    let profile = build_profile(&resolved, &mut diags);
    match profile {
        Some(profile) => {
            diags.extend(validate_profile(&profile));
            if diags.is_empty() {
                Ok(profile)
            } else {
                Err(ParseError::Validation(diags))
            }
        }
        None => Err(ParseError::Validation(diags)),
    }
}

const ROOT_DOC: &str = "<root>";

struct Resolver<'a> {
    loader: &'a dyn FileLoader,
    docs: HashMap<String, Node>,
}

impl Resolver<'_> {
    fn document(&mut self, file: &str) -> Result<Node, ParseError> {
        if let Some(doc) = self.docs.get(file) {
            return Ok(doc.clone());
        }
        let text = self
            .loader
            .load(file)
            .map_err(ParseError::Resolution)?;
        let node = yaml::parse(&text)?;
        self.docs.insert(file.to_string(), node.clone());
        Ok(node)
    }

    fn resolve_node(
        &mut self,
        node: &Node,
        current_file: &str,
        stack: &mut Vec<String>,
    ) -> Result<Node, ParseError> {
        match node {
            Node::Scalar(_) => Ok(node.clone()),
            Node::Sequence(items) => {
                let resolved: Result<Vec<Node>, ParseError> = items
                    .iter()
                    .map(|n| self.resolve_node(n, current_file, stack))
                    .collect();
                Ok(Node::Sequence(resolved?))
            }
            Node::Mapping(m) => match &m.include {
                None => {
                    let mut entries = Vec::with_capacity(m.entries.len());
                    for (k, v) in &m.entries {
                        entries.push((k.clone(), self.resolve_node(v, current_file, stack)?));
                    }
                    Ok(Node::Mapping(Mapping {
                        entries,
                        include: None,
                    }))
                }
                Some(include) => self.resolve_include(include, &m.entries, current_file, stack),
            },
        }
    }

    /// Deep-copy the include target, inline its own includes, then apply
    /// the sibling entries as path overrides.
    fn resolve_include(
        &mut self,
        include: &IncludeRef,
        overrides: &[(String, Node)],
        current_file: &str,
        stack: &mut Vec<String>,
    ) -> Result<Node, ParseError> {
        let target_file = include.file.clone().unwrap_or_else(|| current_file.to_string());
        let key = format!("{}:{}", target_file, include.path.join("."));
        if stack.contains(&key) {
            let mut chain: Vec<&str> = stack.iter().map(String::as_str).collect();
            chain.push(&key);
            return Err(ParseError::Resolution(format!(
                "include cycle: {}",
                chain.join(" -> ")
            )));
        }

        let doc = self.document(&target_file)?;
        let fragment = navigate(&doc, &include.path).ok_or_else(|| {
            ParseError::Resolution(format!(
                "include target `{}` not found at {}",
                key, include.pos
            ))
        })?;
        if fragment.as_mapping().is_none() {
            return Err(ParseError::Resolution(format!(
                "include target `{key}` is not a mapping"
            )));
        }

        stack.push(key);
        let mut resolved = self.resolve_node(&fragment.clone(), &target_file, stack)?;
        stack.pop();

        for (path, value) in overrides {
            let value = self.resolve_node(value, current_file, stack)?;
            apply_override(&mut resolved, path, value)?;
        }
        Ok(resolved)
    }
}

fn navigate<'n>(node: &'n Node, path: &[String]) -> Option<&'n Node> {
    let mut cur = node;
    for segment in path {
        cur = cur.as_mapping()?.get(segment)?;
    }
    Some(cur)
}

/// Set a field of the fragment. The override key is either a dotted path
/// from the fragment root, or a bare name matched against the unique field
/// with that name anywhere in the fragment.
fn apply_override(fragment: &mut Node, key: &str, value: Node) -> Result<(), ParseError> {
    let segments: Vec<&str> = key.split('.').collect();
    if segments.len() > 1 {
        if set_by_path(fragment, &segments, &value) {
            return Ok(());
        }
        return Err(ParseError::Resolution(format!(
            "override path `{key}` does not exist in the included fragment"
        )));
    }
    let mut hits = 0usize;
    replace_named(fragment, key, &value, &mut hits);
    match hits {
        1 => Ok(()),
        0 => Err(ParseError::Resolution(format!(
            "override field `{key}` does not exist in the included fragment"
        ))),
        _ => Err(ParseError::Resolution(format!(
            "override field `{key}` is ambiguous in the included fragment ({hits} occurrences)"
        ))),
    }
}

fn set_by_path(node: &mut Node, segments: &[&str], value: &Node) -> bool {
    match node {
        Node::Mapping(m) => {
            for (k, v) in m.entries.iter_mut() {
                if k == segments[0] {
                    if segments.len() == 1 {
                        *v = value.clone();
                        return true;
                    }
                    return set_by_path(v, &segments[1..], value);
                }
            }
            false
        }
        _ => false,
    }
}

fn replace_named(node: &mut Node, name: &str, value: &Node, hits: &mut usize) {
    if let Node::Mapping(m) = node {
        for (k, v) in m.entries.iter_mut() {
            if k == name {
                *hits += 1;
                *v = value.clone();
            } else {
                replace_named(v, name, value, hits);
            }
        }
    }
}

/// Resolve a single include reference against a set of named documents.
/// The entry point used by [`parse_profile`]; exposed for targeted tests
/// of fragment substitution.
pub fn resolve_include(
    include: &IncludeRef,
    overrides: &[(String, Node)],
    loader: &dyn FileLoader,
    root_doc: &Node,
) -> Result<Node, ParseError> {
    let mut resolver = Resolver {
        loader,
        docs: HashMap::new(),
    };
    resolver.docs.insert(ROOT_DOC.to_string(), root_doc.clone());
    let mut stack = Vec::new();
    resolver.resolve_include(include, overrides, ROOT_DOC, &mut stack)
}

// ---------------------------------------------------------------------------
// Node -> Profile construction
// ---------------------------------------------------------------------------

fn build_profile(root: &Node, diags: &mut Vec<Diagnostic>) -> Option<Profile> {
    let mapping = match root.as_mapping() {
        Some(m) => m,
        None => {
            diags.push(Diagnostic {
                path: String::new(),
                message: "profile root must be a mapping".to_string(),
            });
            return None;
        }
    };
    for (key, _) in &mapping.entries {
        if !matches!(key.as_str(), "device-info" | "patterns" | "interactions") {
            diags.push(Diagnostic {
                path: key.clone(),
                message: "unknown top-level section".to_string(),
            });
        }
    }

    let device_info = match mapping.get("device-info") {
        Some(node) => build_device_info(node, diags),
        None => {
            diags.push(Diagnostic {
                path: "device-info".to_string(),
                message: "missing device-info section".to_string(),
            });
            None
        }
    };

    let mut interactions = Vec::new();
    match mapping.get("interactions") {
        Some(Node::Mapping(imap)) => {
            for (iname, inode) in &imap.entries {
                interactions.push(build_interaction(iname, inode, diags));
            }
        }
        Some(_) => diags.push(Diagnostic {
            path: "interactions".to_string(),
            message: "interactions must be a mapping".to_string(),
        }),
        None => diags.push(Diagnostic {
            path: "interactions".to_string(),
            message: "missing interactions section".to_string(),
        }),
    }

    Some(Profile {
        device_info: device_info?,
        interactions,
    })
}

fn build_device_info(node: &Node, diags: &mut Vec<Diagnostic>) -> Option<DeviceInfo> {
    let m = expect_mapping(node, "device-info", diags)?;
    check_keys(m, "device-info", &["name", "mac", "ipv4", "ipv6"], diags);
    let name = req_str(m, "device-info", "name", diags);
    let mac = req_str(m, "device-info", "mac", diags).and_then(|s| {
        s.parse()
            .map_err(|e: String| {
                diags.push(Diagnostic {
                    path: "device-info.mac".to_string(),
                    message: e,
                })
            })
            .ok()
    });
    let ipv4 = opt_parse(m, "device-info", "ipv4", diags);
    let ipv6 = opt_parse(m, "device-info", "ipv6", diags);
    Some(DeviceInfo {
        name: name?,
        mac: mac?,
        ipv4,
        ipv6,
    })
}

fn build_interaction(name: &str, node: &Node, diags: &mut Vec<Diagnostic>) -> Interaction {
    let path = format!("interactions.{name}");
    let mut policies = Vec::new();
    match node.as_mapping() {
        Some(m) => {
            for (pname, pnode) in &m.entries {
                if let Some(policy) = build_policy(pname, pnode, &path, diags) {
                    policies.push(policy);
                }
            }
        }
        None => diags.push(Diagnostic {
            path: path.clone(),
            message: "interaction must be a mapping of policies".to_string(),
        }),
    }
    Interaction {
        name: name.to_string(),
        policies,
    }
}

fn build_policy(
    name: &str,
    node: &Node,
    parent: &str,
    diags: &mut Vec<Diagnostic>,
) -> Option<Policy> {
    let path = format!("{parent}.{name}");
    let m = expect_mapping(node, &path, diags)?;
    check_keys(m, &path, &["protocols", "bidirectional", "stats"], diags);

    let bidirectional = match m.get("bidirectional") {
        None => false,
        Some(node) => match node.as_str() {
            Some("true") => true,
            Some("false") => false,
            _ => {
                diags.push(Diagnostic {
                    path: format!("{path}.bidirectional"),
                    message: "expected true or false".to_string(),
                });
                false
            }
        },
    };

    let match_spec = match m.get("protocols") {
        Some(pnode) => build_match_spec(pnode, &path, diags),
        None => {
            diags.push(Diagnostic {
                path: format!("{path}.protocols"),
                message: "policy requires a protocols block".to_string(),
            });
            MatchSpec::default()
        }
    };

    let stats = m
        .get("stats")
        .and_then(|s| build_stats(s, &path, diags))
        .filter(|s| !s.is_empty());
    let kind = match &stats {
        None => PolicyKind::OneOff,
        Some(s) if s.is_empty() => PolicyKind::OneOff,
        Some(s) if s.rate.is_some() && s.max_packets.is_none() && s.max_duration.is_none() => {
            PolicyKind::Periodic
        }
        _ => PolicyKind::Transient,
    };

    Some(Policy {
        name: name.to_string(),
        kind,
        bidirectional,
        match_spec,
        stats,
    })
}

fn build_stats(node: &Node, parent: &str, diags: &mut Vec<Diagnostic>) -> Option<Stats> {
    let path = format!("{parent}.stats");
    let m = expect_mapping(node, &path, diags)?;
    check_keys(m, &path, &["rate", "packet-count", "duration"], diags);
    let rate = m.get("rate").and_then(|n| match n.as_str() {
        Some(text) => parse_rate(text)
            .map_err(|e| {
                diags.push(Diagnostic {
                    path: format!("{path}.rate"),
                    message: e,
                })
            })
            .ok(),
        None => {
            diags.push(Diagnostic {
                path: format!("{path}.rate"),
                message: "rate must be a string like `10/second burst 100 packets`".to_string(),
            });
            None
        }
    });
    let max_packets = opt_parse(m, &path, "packet-count", diags);
    let max_duration = opt_parse(m, &path, "duration", diags);
    Some(Stats {
        rate,
        max_packets,
        max_duration,
    })
}

/// Rate grammar: `<pps>/second` with optional `burst <n> packets`.
pub fn parse_rate(text: &str) -> Result<Rate, String> {
    let mut tokens = text.split_whitespace();
    let head = tokens.next().ok_or("empty rate")?;
    let (num, unit) = head
        .split_once('/')
        .ok_or_else(|| format!("rate `{text}` must look like `10/second`"))?;
    if !matches!(unit, "second" | "s") {
        return Err(format!("unsupported rate unit `{unit}` (use /second)"));
    }
    let packets_per_second: f64 = num
        .parse()
        .map_err(|_| format!("invalid rate value `{num}`"))?;
    let burst = match tokens.next() {
        None => None,
        Some("burst") => {
            let n: u64 = tokens
                .next()
                .ok_or("burst requires a packet count")?
                .parse()
                .map_err(|_| "invalid burst count".to_string())?;
            match tokens.next() {
                Some("packets") | None => {}
                Some(other) => return Err(format!("unexpected token `{other}` in rate")),
            }
            Some(n)
        }
        Some(other) => return Err(format!("unexpected token `{other}` in rate")),
    };
    if tokens.next().is_some() {
        return Err(format!("trailing tokens in rate `{text}`"));
    }
    Ok(Rate {
        packets_per_second,
        burst,
    })
}

const PROTOCOL_KEYS: &[&str] = &[
    "ethernet", "arp", "ipv4", "ipv6", "icmp", "tcp", "udp", "dns", "mdns", "dhcp", "http",
    "ssdp", "coap", "igmp",
];

fn build_match_spec(node: &Node, parent: &str, diags: &mut Vec<Diagnostic>) -> MatchSpec {
    let path = format!("{parent}.protocols");
    let mut spec = MatchSpec::default();
    let m = match expect_mapping(node, &path, diags) {
        Some(m) => m,
        None => return spec,
    };
    check_keys(m, &path, PROTOCOL_KEYS, diags);

    for (key, value) in &m.entries {
        let kpath = format!("{path}.{key}");
        let vm = match expect_mapping(value, &kpath, diags) {
            Some(vm) => vm,
            None => continue,
        };
        match key.as_str() {
            "ethernet" => {
                check_keys(vm, &kpath, &["src-mac", "dst-mac", "eth-type"], diags);
                spec.link = Some(LinkMatch {
                    src_mac: opt_mac_expr(vm, &kpath, "src-mac", diags),
                    dst_mac: opt_mac_expr(vm, &kpath, "dst-mac", diags),
                    eth_type: vm.get("eth-type").and_then(|n| parse_eth_type(n, &kpath, diags)),
                });
            }
            "arp" => {
                check_keys(
                    vm,
                    &kpath,
                    &["operation", "sender-hw", "sender-ip", "target-hw", "target-ip"],
                    diags,
                );
                let operation = vm.get("operation").and_then(|n| match n.as_str() {
                    Some("request") => Some(ArpOperation::Request),
                    Some("reply") => Some(ArpOperation::Reply),
                    _ => {
                        diags.push(Diagnostic {
                            path: format!("{kpath}.operation"),
                            message: "expected request or reply".to_string(),
                        });
                        None
                    }
                });
                spec.arp = Some(ArpMatch {
                    operation,
                    sender_hw: opt_mac_expr(vm, &kpath, "sender-hw", diags),
                    sender_ip: opt_endpoint(vm, &kpath, "sender-ip", diags),
                    target_hw: opt_mac_expr(vm, &kpath, "target-hw", diags),
                    target_ip: opt_endpoint(vm, &kpath, "target-ip", diags),
                });
            }
            "ipv4" | "ipv6" => {
                check_keys(vm, &kpath, &["src", "dst"], diags);
                spec.ip = Some(IpMatch {
                    version: if key == "ipv4" { IpVersion::V4 } else { IpVersion::V6 },
                    src: opt_endpoint(vm, &kpath, "src", diags),
                    dst: opt_endpoint(vm, &kpath, "dst", diags),
                });
            }
            "icmp" => {
                check_keys(vm, &kpath, &["type"], diags);
                match vm.get("type").and_then(Node::as_str) {
                    Some(t) => spec.icmp = Some(IcmpMatch { type_name: t.to_string() }),
                    None => diags.push(Diagnostic {
                        path: kpath.clone(),
                        message: "icmp block requires a type".to_string(),
                    }),
                }
            }
            "tcp" | "udp" => {
                check_keys(vm, &kpath, &["src-port", "dst-port"], diags);
                spec.transport = Some(TransportMatch {
                    protocol: if key == "tcp" {
                        TransportProtocol::Tcp
                    } else {
                        TransportProtocol::Udp
                    },
                    src_port: opt_parse(vm, &kpath, "src-port", diags),
                    dst_port: opt_parse(vm, &kpath, "dst-port", diags),
                });
            }
            "dns" | "mdns" => {
                check_keys(vm, &kpath, &["qr", "qtype", "domain-name"], diags);
                let qr = vm.get("qr").and_then(|n| match n.as_str() {
                    Some("query") => Some(DnsQr::Query),
                    Some("response") => Some(DnsQr::Response),
                    _ => {
                        diags.push(Diagnostic {
                            path: format!("{kpath}.qr"),
                            message: "expected query or response".to_string(),
                        });
                        None
                    }
                });
                let qtype = vm.get("qtype").and_then(Node::as_str).map(|s| {
                    let upper = s.to_ascii_uppercase();
                    if names::dns_qtype_number(&upper).is_none() {
                        diags.push(Diagnostic {
                            path: format!("{kpath}.qtype"),
                            message: format!("unknown record type `{s}`"),
                        });
                    }
                    upper
                });
                let domain_name = vm
                    .get("domain-name")
                    .and_then(Node::as_str)
                    .map(|s| s.trim_end_matches('.').to_ascii_lowercase());
                let dm = DnsMatch { qr, qtype, domain_name };
                spec.app = Some(if key == "dns" {
                    AppMatch::Dns(dm)
                } else {
                    AppMatch::Mdns(dm)
                });
            }
            "dhcp" => {
                check_keys(vm, &kpath, &["message-type"], diags);
                match vm.get("message-type").and_then(Node::as_str) {
                    Some(t) => {
                        spec.app = Some(AppMatch::Dhcp(DhcpMatch {
                            message_type: t.to_string(),
                        }))
                    }
                    None => diags.push(Diagnostic {
                        path: kpath.clone(),
                        message: "dhcp block requires message-type".to_string(),
                    }),
                }
            }
            "http" => {
                check_keys(vm, &kpath, &["method", "uri"], diags);
                spec.app = Some(AppMatch::Http(HttpMatch {
                    method: vm.get("method").and_then(Node::as_str).map(str::to_string),
                    uri_prefix: vm.get("uri").and_then(Node::as_str).map(str::to_string),
                }));
            }
            "ssdp" => {
                check_keys(vm, &kpath, &["method", "st"], diags);
                spec.app = Some(AppMatch::Ssdp(SsdpMatch {
                    method: vm.get("method").and_then(Node::as_str).map(str::to_string),
                    st: vm.get("st").and_then(Node::as_str).map(str::to_string),
                }));
            }
            "coap" => {
                check_keys(vm, &kpath, &["type", "method", "uri-path"], diags);
                spec.app = Some(AppMatch::Coap(CoapMatch {
                    msg_type: vm.get("type").and_then(Node::as_str).map(|s| s.to_ascii_uppercase()),
                    method: vm.get("method").and_then(Node::as_str).map(|s| s.to_ascii_uppercase()),
                    uri_path: vm.get("uri-path").and_then(Node::as_str).map(str::to_string),
                }));
            }
            "igmp" => {
                check_keys(vm, &kpath, &["type", "group"], diags);
                spec.app = Some(AppMatch::Igmp(IgmpMatch {
                    type_name: vm.get("type").and_then(Node::as_str).map(str::to_string),
                    group: opt_parse(vm, &kpath, "group", diags),
                }));
            }
            _ => {}
        }
    }
    spec
}

fn parse_eth_type(node: &Node, kpath: &str, diags: &mut Vec<Diagnostic>) -> Option<u16> {
    let text = node.as_str()?;
    let parsed = match text {
        "ipv4" => Some(0x0800),
        "ipv6" => Some(0x86dd),
        "arp" => Some(0x0806),
        t if t.starts_with("0x") => u16::from_str_radix(&t[2..], 16).ok(),
        t => t.parse().ok(),
    };
    if parsed.is_none() {
        diags.push(Diagnostic {
            path: format!("{kpath}.eth-type"),
            message: format!("invalid ethertype `{text}`"),
        });
    }
    parsed
}

fn expect_mapping<'n>(node: &'n Node, path: &str, diags: &mut Vec<Diagnostic>) -> Option<&'n Mapping> {
    match node.as_mapping() {
        Some(m) => Some(m),
        None => {
            diags.push(Diagnostic {
                path: path.to_string(),
                message: "expected a mapping".to_string(),
            });
            None
        }
    }
}

fn check_keys(m: &Mapping, path: &str, allowed: &[&str], diags: &mut Vec<Diagnostic>) {
    for (key, _) in &m.entries {
        if !allowed.contains(&key.as_str()) {
            diags.push(Diagnostic {
                path: format!("{path}.{key}"),
                message: "unknown key".to_string(),
            });
        }
    }
}

fn req_str(m: &Mapping, path: &str, key: &str, diags: &mut Vec<Diagnostic>) -> Option<String> {
    match m.get(key).and_then(Node::as_str) {
        Some(s) => Some(s.to_string()),
        None => {
            diags.push(Diagnostic {
                path: format!("{path}.{key}"),
                message: format!("missing or empty `{key}`"),
            });
            None
        }
    }
}

fn opt_parse<T: std::str::FromStr>(
    m: &Mapping,
    path: &str,
    key: &str,
    diags: &mut Vec<Diagnostic>,
) -> Option<T> {
    let node = m.get(key)?;
    let text = node.as_str()?;
    match text.parse() {
        Ok(v) => Some(v),
        Err(_) => {
            diags.push(Diagnostic {
                path: format!("{path}.{key}"),
                message: format!("invalid value `{text}`"),
            });
            None
        }
    }
}

fn opt_mac_expr(m: &Mapping, path: &str, key: &str, diags: &mut Vec<Diagnostic>) -> Option<MacExpr> {
    let text = m.get(key)?.as_str()?;
    if text == "self" {
        return Some(MacExpr::SelfDevice);
    }
    match text.parse() {
        Ok(mac) => Some(MacExpr::Literal(mac)),
        Err(e) => {
            diags.push(Diagnostic {
                path: format!("{path}.{key}"),
                message: e,
            });
            None
        }
    }
}

fn opt_endpoint(m: &Mapping, path: &str, key: &str, diags: &mut Vec<Diagnostic>) -> Option<EndpointExpr> {
    let text = m.get(key)?.as_str()?;
    match EndpointExpr::parse(text) {
        Ok(e) => Some(e),
        Err(msg) => {
            diags.push(Diagnostic {
                path: format!("{path}.{key}"),
                message: msg,
            });
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical emission
// ---------------------------------------------------------------------------

/// Write a profile back as canonical, fully-inlined YAML. Parsing the
/// result yields a structurally equal profile.
pub fn to_canonical_yaml(profile: &Profile) -> String {
    let mut out = String::new();
    let d = &profile.device_info;
    out.push_str("device-info:\n");
    out.push_str(&format!("  name: {}\n", d.name));
    out.push_str(&format!("  mac: \"{}\"\n", d.mac));
    if let Some(v4) = d.ipv4 {
        out.push_str(&format!("  ipv4: {v4}\n"));
    }
    if let Some(v6) = d.ipv6 {
        out.push_str(&format!("  ipv6: \"{v6}\"\n"));
    }
    out.push_str("interactions:\n");
    for interaction in &profile.interactions {
        out.push_str(&format!("  {}:\n", interaction.name));
        for policy in &interaction.policies {
            emit_policy(&mut out, policy);
        }
    }
    out
}

fn emit_policy(out: &mut String, policy: &Policy) {
    out.push_str(&format!("    {}:\n", policy.name));
    out.push_str("      protocols:\n");
    let ms = &policy.match_spec;
    if let Some(link) = &ms.link {
        out.push_str("        ethernet:\n");
        emit_mac_expr(out, "src-mac", &link.src_mac);
        emit_mac_expr(out, "dst-mac", &link.dst_mac);
        if let Some(t) = link.eth_type {
            out.push_str(&format!("          eth-type: \"0x{t:04x}\"\n"));
        }
    }
    if let Some(arp) = &ms.arp {
        out.push_str("        arp:\n");
        if let Some(op) = arp.operation {
            out.push_str(&format!("          operation: {op}\n"));
        }
        emit_mac_expr(out, "sender-hw", &arp.sender_hw);
        emit_endpoint(out, "sender-ip", &arp.sender_ip);
        emit_mac_expr(out, "target-hw", &arp.target_hw);
        emit_endpoint(out, "target-ip", &arp.target_ip);
    }
    if let Some(ip) = &ms.ip {
        out.push_str(match ip.version {
            IpVersion::V4 => "        ipv4:\n",
            IpVersion::V6 => "        ipv6:\n",
        });
        emit_endpoint(out, "src", &ip.src);
        emit_endpoint(out, "dst", &ip.dst);
    }
    if let Some(icmp) = &ms.icmp {
        out.push_str("        icmp:\n");
        out.push_str(&format!("          type: {}\n", icmp.type_name));
    }
    if let Some(t) = &ms.transport {
        out.push_str(&format!("        {}:\n", t.protocol));
        if let Some(p) = t.src_port {
            out.push_str(&format!("          src-port: {p}\n"));
        }
        if let Some(p) = t.dst_port {
            out.push_str(&format!("          dst-port: {p}\n"));
        }
    }
    if let Some(app) = &ms.app {
        match app {
            AppMatch::Dns(d) | AppMatch::Mdns(d) => {
                out.push_str(&format!("        {}:\n", app.protocol_key()));
                if let Some(qr) = d.qr {
                    out.push_str(&format!("          qr: {qr}\n"));
                }
                if let Some(qtype) = &d.qtype {
                    out.push_str(&format!("          qtype: {qtype}\n"));
                }
                if let Some(name) = &d.domain_name {
                    out.push_str(&format!("          domain-name: {name}\n"));
                }
            }
            AppMatch::Dhcp(d) => {
                out.push_str("        dhcp:\n");
                out.push_str(&format!("          message-type: {}\n", d.message_type));
            }
            AppMatch::Http(h) => {
                out.push_str("        http:\n");
                if let Some(m) = &h.method {
                    out.push_str(&format!("          method: {m}\n"));
                }
                if let Some(u) = &h.uri_prefix {
                    out.push_str(&format!("          uri: {u}\n"));
                }
            }
            AppMatch::Ssdp(s) => {
                out.push_str("        ssdp:\n");
                if let Some(m) = &s.method {
                    out.push_str(&format!("          method: {m}\n"));
                }
                if let Some(st) = &s.st {
                    out.push_str(&format!("          st: {st}\n"));
                }
            }
            AppMatch::Coap(c) => {
                out.push_str("        coap:\n");
                if let Some(t) = &c.msg_type {
                    out.push_str(&format!("          type: {t}\n"));
                }
                if let Some(m) = &c.method {
                    out.push_str(&format!("          method: {m}\n"));
                }
                if let Some(u) = &c.uri_path {
                    out.push_str(&format!("          uri-path: {u}\n"));
                }
            }
            AppMatch::Igmp(g) => {
                out.push_str("        igmp:\n");
                if let Some(t) = &g.type_name {
                    out.push_str(&format!("          type: {t}\n"));
                }
                if let Some(group) = g.group {
                    out.push_str(&format!("          group: {group}\n"));
                }
            }
        }
    }
    if policy.bidirectional {
        out.push_str("      bidirectional: true\n");
    }
    if let Some(stats) = &policy.stats {
        if !stats.is_empty() {
            out.push_str("      stats:\n");
            if let Some(rate) = &stats.rate {
                let mut line = format!("        rate: {}/second", trim_float(rate.packets_per_second));
                if let Some(burst) = rate.burst {
                    line.push_str(&format!(" burst {burst} packets"));
                }
                line.push('\n');
                out.push_str(&line);
            }
            if let Some(n) = stats.max_packets {
                out.push_str(&format!("        packet-count: {n}\n"));
            }
            if let Some(d) = stats.max_duration {
                out.push_str(&format!("        duration: {}\n", trim_float(d)));
            }
        }
    }
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn emit_mac_expr(out: &mut String, key: &str, expr: &Option<MacExpr>) {
    if let Some(expr) = expr {
        match expr {
            MacExpr::SelfDevice => out.push_str(&format!("          {key}: self\n")),
            MacExpr::Literal(mac) => out.push_str(&format!("          {key}: \"{mac}\"\n")),
        }
    }
}

fn emit_endpoint(out: &mut String, key: &str, expr: &Option<EndpointExpr>) {
    if let Some(expr) = expr {
        out.push_str(&format!("          {key}: {}\n", expr.to_profile_string()));
    }
}
