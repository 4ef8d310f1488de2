//! JSONL packet traces: one JSON object per line, schema version 1.
//! When `raw` is present it is authoritative; otherwise the frame bytes
//! are synthesized canonically from the fields.

use std::net::{Ipv4Addr, Ipv6Addr};

use serde_json::{json, Map, Value};

use super::*;
use crate::names;
use crate::profile::MacAddr;

pub fn hex_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn hex_decode(text: &str) -> Option<Vec<u8>> {
    if !text.len().is_multiple_of(2) {
        return None;
    }
    (0..text.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&text[i..i + 2], 16).ok())
        .collect()
}

/// Read a JSONL trace; one packet per non-empty line.
pub fn read_jsonl(text: &str) -> Result<Trace, FormatError> {
    let mut packets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| FormatError::Jsonl {
            line: line_no,
            message: e.to_string(),
        })?;
        let packet = packet_from_json(&value).map_err(|message| FormatError::Jsonl {
            line: line_no,
            message,
        })?;
        if let Some(prev) = packets.last() {
            let prev: &Packet = prev;
            if packet.timestamp < prev.timestamp {
                return Err(FormatError::Jsonl {
                    line: line_no,
                    message: "timestamps must be non-decreasing".to_string(),
                });
            }
        }
        packets.push(packet);
    }
    Trace::new(packets)
}

/// Write a trace as JSONL (fields only, no raw bytes).
pub fn write_jsonl(trace: &Trace) -> String {
    let mut out = String::new();
    for packet in &trace.packets {
        out.push_str(&packet_to_json(packet).to_string());
        out.push('\n');
    }
    out
}

fn packet_from_json(value: &Value) -> Result<Packet, String> {
    let obj = value.as_object().ok_or("packet line must be an object")?;
    let ts = obj
        .get("ts")
        .and_then(Value::as_f64)
        .ok_or("missing numeric `ts`")?;
    let timestamp = Timestamp::from_secs_f64(ts);
    let iface = obj.get("iface").and_then(Value::as_str).map(str::to_string);

    if let Some(raw) = obj.get("raw").and_then(Value::as_str) {
        let bytes = hex_decode(raw).ok_or("invalid hex in `raw`")?;
        let mut packet = dissect(&bytes, timestamp).map_err(|e| e.to_string())?;
        packet.iface = iface;
        return Ok(packet);
    }

    let mut layers = Vec::new();

    // Application layer first so the IP protocol number can be derived.
    let app = parse_app_json(obj)?;
    let transport = parse_transport_json(obj, app.is_some())?;

    let protocol = match (&app, &transport) {
        (Some(AppData::Igmp(_)), _) => 2,
        (_, Some(TransportData::Tcp(_))) => 6,
        (_, Some(TransportData::Udp(_))) => 17,
        _ => 0,
    };

    if let Some(arp) = obj.get("arp") {
        layers.push(Layer::Arp(parse_arp_json(arp)?));
    }
    let mut icmp = None;
    if let Some(ip_value) = obj.get("ip") {
        let (ip, is_v6) = parse_ip_json(ip_value, protocol, obj)?;
        if let Some(icmp_value) = obj.get("icmp") {
            icmp = Some(parse_icmp_json(icmp_value, is_v6)?);
        }
        let mut ip = ip;
        if icmp.is_some() {
            set_ip_protocol(&mut ip, if is_v6 { 58 } else { 1 });
        }
        layers.push(Layer::Ip(ip));
    } else if obj.get("icmp").is_some() || transport.is_some() || app.is_some() {
        return Err("packet has upper layers but no `ip` object".to_string());
    }
    if let Some(icmp) = icmp {
        layers.push(Layer::Icmp(icmp));
    }
    if let Some(t) = transport {
        layers.push(Layer::Transport(t));
    }
    if let Some(a) = app {
        layers.push(Layer::App(a));
    }

    let ethertype_default = match layers.first() {
        Some(Layer::Arp(_)) => ETHERTYPE_ARP,
        Some(Layer::Ip(IpData::V6(_))) => ETHERTYPE_IPV6,
        _ => ETHERTYPE_IPV4,
    };
    let link = parse_eth_json(obj.get("eth"), ethertype_default)?;

    let mut packet = packet_from_fields(timestamp, link, layers);
    packet.iface = iface;
    Ok(packet)
}

fn set_ip_protocol(ip: &mut IpData, protocol: u8) {
    match ip {
        IpData::V4(v4) => v4.protocol = protocol,
        IpData::V6(v6) => v6.next_header = protocol,
    }
}

fn parse_eth_json(value: Option<&Value>, ethertype_default: u16) -> Result<EthernetHeader, String> {
    let mut src = MacAddr([0; 6]);
    let mut dst = MacAddr([0; 6]);
    let mut ethertype = ethertype_default;
    if let Some(obj) = value.and_then(Value::as_object) {
        if let Some(s) = obj.get("src").and_then(Value::as_str) {
            src = s.parse()?;
        }
        if let Some(d) = obj.get("dst").and_then(Value::as_str) {
            dst = d.parse()?;
        }
        if let Some(t) = obj.get("type") {
            ethertype = parse_u16_maybe_hex(t).ok_or("invalid eth.type")?;
        }
    }
    Ok(EthernetHeader { dst, src, ethertype })
}

fn parse_u16_maybe_hex(value: &Value) -> Option<u16> {
    match value {
        Value::Number(n) => n.as_u64().and_then(|v| u16::try_from(v).ok()),
        Value::String(s) => {
            if let Some(hex) = s.strip_prefix("0x") {
                u16::from_str_radix(hex, 16).ok()
            } else {
                s.parse().ok()
            }
        }
        _ => None,
    }
}

fn get_str<'v>(obj: &'v Map<String, Value>, key: &str) -> Option<&'v str> {
    obj.get(key).and_then(Value::as_str)
}

fn parse_arp_json(value: &Value) -> Result<ArpData, String> {
    let obj = value.as_object().ok_or("`arp` must be an object")?;
    let operation = match obj.get("op") {
        Some(Value::String(s)) if s == "request" => 1,
        Some(Value::String(s)) if s == "reply" => 2,
        Some(Value::Number(n)) => n.as_u64().unwrap_or(1) as u16,
        _ => return Err("arp.op must be request/reply".to_string()),
    };
    let mac = |key: &str| -> Result<MacAddr, String> {
        match get_str(obj, key) {
            Some(s) => s.parse(),
            None => Ok(MacAddr([0; 6])),
        }
    };
    let ip = |key: &str| -> Result<Ipv4Addr, String> {
        match get_str(obj, key) {
            Some(s) => s.parse().map_err(|_| format!("invalid arp.{key}")),
            None => Ok(Ipv4Addr::UNSPECIFIED),
        }
    };
    Ok(ArpData {
        operation,
        sender_hw: mac("sender-hw")?,
        sender_ip: ip("sender-ip")?,
        target_hw: mac("target-hw")?,
        target_ip: ip("target-ip")?,
        rest: Vec::new(),
    })
}

fn parse_ip_json(
    value: &Value,
    protocol: u8,
    packet_obj: &Map<String, Value>,
) -> Result<(IpData, bool), String> {
    let obj = value.as_object().ok_or("`ip` must be an object")?;
    let src = get_str(obj, "src").ok_or("missing ip.src")?;
    let dst = get_str(obj, "dst").ok_or("missing ip.dst")?;
    let version = obj.get("v").and_then(Value::as_u64).unwrap_or(4);
    let ttl = obj.get("ttl").and_then(Value::as_u64).unwrap_or(64) as u8;
    let explicit_proto = obj.get("proto").and_then(Value::as_u64).map(|p| p as u8);
    let rest = match packet_obj.get("payload").and_then(Value::as_str) {
        // Payload attaches to the transport layer when one exists.
        Some(hex) if packet_obj.get("tcp").is_none() && packet_obj.get("udp").is_none() => {
            hex_decode(hex).ok_or("invalid hex in `payload`")?
        }
        _ => Vec::new(),
    };
    match version {
        4 => {
            let src: Ipv4Addr = src.parse().map_err(|_| "invalid ip.src")?;
            let dst: Ipv4Addr = dst.parse().map_err(|_| "invalid ip.dst")?;
            Ok((
                IpData::V4(Ipv4Data {
                    tos: 0,
                    identification: 0,
                    flags_fragment: 0x4000,
                    ttl,
                    protocol: explicit_proto.unwrap_or(protocol),
                    checksum: None,
                    options: Vec::new(),
                    src,
                    dst,
                    rest,
                }),
                false,
            ))
        }
        6 => {
            let src: Ipv6Addr = src.parse().map_err(|_| "invalid ip.src")?;
            let dst: Ipv6Addr = dst.parse().map_err(|_| "invalid ip.dst")?;
            Ok((
                IpData::V6(Ipv6Data {
                    traffic_class: 0,
                    flow_label: 0,
                    next_header: explicit_proto.unwrap_or(protocol),
                    hop_limit: ttl,
                    src,
                    dst,
                    rest,
                }),
                true,
            ))
        }
        v => Err(format!("unsupported ip version {v}")),
    }
}

fn parse_icmp_json(value: &Value, v6: bool) -> Result<IcmpData, String> {
    let obj = value.as_object().ok_or("`icmp` must be an object")?;
    let icmp_type = match obj.get("type") {
        Some(Value::String(name)) => {
            names::icmp_type_number(v6, name).ok_or_else(|| format!("unknown icmp type `{name}`"))?
        }
        Some(Value::Number(n)) => n.as_u64().unwrap_or(0) as u8,
        _ => return Err("icmp.type required".to_string()),
    };
    Ok(IcmpData {
        v6,
        icmp_type,
        code: obj.get("code").and_then(Value::as_u64).unwrap_or(0) as u8,
        checksum: None,
        rest: vec![0, 1, 0, 1],
    })
}

fn parse_transport_json(
    obj: &Map<String, Value>,
    has_app: bool,
) -> Result<Option<TransportData>, String> {
    let payload = if has_app {
        Vec::new()
    } else {
        match obj.get("payload").and_then(Value::as_str) {
            Some(hex) => hex_decode(hex).ok_or("invalid hex in `payload`")?,
            None => Vec::new(),
        }
    };
    if let Some(tcp) = obj.get("tcp").and_then(Value::as_object) {
        let get = |key: &str| tcp.get(key).and_then(Value::as_u64);
        return Ok(Some(TransportData::Tcp(TcpData {
            src_port: get("src").ok_or("missing tcp.src")? as u16,
            dst_port: get("dst").ok_or("missing tcp.dst")? as u16,
            seq: get("seq").unwrap_or(0) as u32,
            ack: get("ack").unwrap_or(0) as u32,
            flags: get("flags").unwrap_or(tcp_flags::ACK as u64) as u8,
            window: 65535,
            checksum: None,
            urgent: 0,
            options: Vec::new(),
            payload,
        })));
    }
    if let Some(udp) = obj.get("udp").and_then(Value::as_object) {
        let get = |key: &str| udp.get(key).and_then(Value::as_u64);
        return Ok(Some(TransportData::Udp(UdpData {
            src_port: get("src").ok_or("missing udp.src")? as u16,
            dst_port: get("dst").ok_or("missing udp.dst")? as u16,
            checksum: None,
            payload,
        })));
    }
    Ok(None)
}

fn parse_app_json(obj: &Map<String, Value>) -> Result<Option<AppData>, String> {
    for key in ["dns", "mdns"] {
        if let Some(dns) = obj.get(key).and_then(Value::as_object) {
            let message = parse_dns_json(dns)?;
            return Ok(Some(if key == "dns" {
                AppData::Dns(message)
            } else {
                AppData::Mdns(message)
            }));
        }
    }
    if let Some(dhcp) = obj.get("dhcp").and_then(Value::as_object) {
        let name = get_str(dhcp, "message-type").ok_or("missing dhcp.message-type")?;
        let message_type =
            names::dhcp_message_type_number(name).ok_or_else(|| format!("unknown dhcp type `{name}`"))?;
        let xid = dhcp.get("xid").and_then(Value::as_u64).unwrap_or(1) as u32;
        let mut data = DhcpData {
            op: if matches!(message_type, 1 | 3 | 4 | 7 | 8) { 1 } else { 2 },
            htype: 1,
            hlen: 6,
            hops: 0,
            xid,
            secs: 0,
            flags: 0,
            ciaddr: Ipv4Addr::UNSPECIFIED,
            yiaddr: Ipv4Addr::UNSPECIFIED,
            siaddr: Ipv4Addr::UNSPECIFIED,
            giaddr: Ipv4Addr::UNSPECIFIED,
            chaddr: [0; 16],
            sname: Vec::new(),
            file: Vec::new(),
            options: vec![(53, vec![message_type])],
            trailing: Vec::new(),
        };
        if let Some(mac) = get_str(dhcp, "chaddr") {
            let mac: MacAddr = mac.parse()?;
            data.chaddr[..6].copy_from_slice(&mac.octets());
        }
        return Ok(Some(AppData::Dhcp(data)));
    }
    if let Some(http) = obj.get("http").and_then(Value::as_object) {
        let start = if let Some(status) = http.get("status").and_then(Value::as_u64) {
            HttpStart::Response {
                version: "HTTP/1.1".to_string(),
                status: status as u16,
                reason: get_str(http, "reason").unwrap_or("OK").to_string(),
            }
        } else {
            HttpStart::Request {
                method: get_str(http, "method").ok_or("missing http.method")?.to_string(),
                uri: get_str(http, "uri").unwrap_or("/").to_string(),
                version: "HTTP/1.1".to_string(),
            }
        };
        return Ok(Some(AppData::Http(HttpData {
            start,
            rest: b"\r\n".to_vec(),
        })));
    }
    if let Some(ssdp) = obj.get("ssdp").and_then(Value::as_object) {
        let method = get_str(ssdp, "method").ok_or("missing ssdp.method")?.to_string();
        let st = get_str(ssdp, "st").unwrap_or("ssdp:all").to_string();
        let header_name = if method == "NOTIFY" { "NT" } else { "ST" };
        return Ok(Some(AppData::Ssdp(SsdpData {
            start: SsdpStart::Request {
                method,
                target: "*".to_string(),
                version: "HTTP/1.1".to_string(),
            },
            headers: vec![
                ("HOST".to_string(), "239.255.255.250:1900".to_string()),
                (header_name.to_string(), st),
            ],
            trailing: Vec::new(),
        })));
    }
    if let Some(coap) = obj.get("coap").and_then(Value::as_object) {
        let type_name = get_str(coap, "type").unwrap_or("CON");
        let msg_type = names::COAP_MSG_TYPES
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(type_name))
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("unknown coap type `{type_name}`"))?;
        let method = get_str(coap, "method").unwrap_or("GET");
        let code = names::coap_method_code(method).ok_or_else(|| format!("unknown coap method `{method}`"))?;
        let uri_path = get_str(coap, "uri-path").unwrap_or("");
        let options = uri_path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| (11u16, s.as_bytes().to_vec()))
            .collect();
        return Ok(Some(AppData::Coap(CoapData {
            msg_type,
            code,
            message_id: coap.get("mid").and_then(Value::as_u64).unwrap_or(1) as u16,
            token: Vec::new(),
            options,
            payload: Vec::new(),
        })));
    }
    if let Some(igmp) = obj.get("igmp").and_then(Value::as_object) {
        let type_name = get_str(igmp, "type").ok_or("missing igmp.type")?;
        let igmp_type =
            names::igmp_type_number(type_name).ok_or_else(|| format!("unknown igmp type `{type_name}`"))?;
        let group: Ipv4Addr = get_str(igmp, "group")
            .unwrap_or("0.0.0.0")
            .parse()
            .map_err(|_| "invalid igmp.group")?;
        return Ok(Some(AppData::Igmp(IgmpData {
            igmp_type,
            max_resp: 0,
            checksum: None,
            group,
            rest: Vec::new(),
        })));
    }
    Ok(None)
}

fn parse_dns_json(obj: &Map<String, Value>) -> Result<DnsMessage, String> {
    let qr_response = match get_str(obj, "qr") {
        Some("query") | None => false,
        Some("response") => true,
        Some(other) => return Err(format!("invalid qr `{other}`")),
    };
    let id = obj.get("id").and_then(Value::as_u64).unwrap_or(0) as u16;
    let flags = obj
        .get("flags")
        .and_then(Value::as_u64)
        .map(|f| f as u16)
        .unwrap_or(if qr_response { 0x8180 } else { 0x0100 });
    let qtype = match obj.get("qtype") {
        Some(Value::String(name)) => {
            names::dns_qtype_number(name).ok_or_else(|| format!("unknown qtype `{name}`"))?
        }
        Some(Value::Number(n)) => n.as_u64().unwrap_or(1) as u16,
        _ => 1,
    };
    let name = get_str(obj, "domain-name").unwrap_or("").to_string();
    let mut answers = Vec::new();
    if let Some(list) = obj.get("answers").and_then(Value::as_array) {
        for item in list {
            let a = item.as_object().ok_or("answer must be an object")?;
            let rname = get_str(a, "name").unwrap_or(&name).to_string();
            let rtype_name = get_str(a, "type").unwrap_or("A");
            let rtype =
                names::dns_qtype_number(rtype_name).ok_or_else(|| format!("unknown rtype `{rtype_name}`"))?;
            let ttl = a.get("ttl").and_then(Value::as_u64).unwrap_or(60) as u32;
            let data = get_str(a, "data").ok_or("answer requires `data`")?;
            let rdata = match rtype {
                1 => DnsRdata::A(data.parse().map_err(|_| "invalid A data")?),
                28 => DnsRdata::Aaaa(data.parse().map_err(|_| "invalid AAAA data")?),
                5 => DnsRdata::Cname(data.to_string()),
                12 => DnsRdata::Ptr(data.to_string()),
                _ => DnsRdata::Other(hex_decode(data).ok_or("invalid hex answer data")?),
            };
            answers.push(DnsRecord {
                name: rname,
                rtype,
                class: 1,
                ttl,
                rdata,
            });
        }
    }
    Ok(DnsMessage {
        id,
        flags: if qr_response { flags | 0x8000 } else { flags & !0x8000 },
        questions: vec![DnsQuestion {
            name,
            qtype,
            qclass: 1,
        }],
        answers,
        authorities: Vec::new(),
        additionals: Vec::new(),
        trailing: Vec::new(),
    })
}

fn packet_to_json(packet: &Packet) -> Value {
    let mut obj = Map::new();
    obj.insert("v".to_string(), json!(1));
    obj.insert("ts".to_string(), json!(packet.timestamp.as_secs_f64()));
    if let Some(iface) = &packet.iface {
        obj.insert("iface".to_string(), json!(iface));
    }
    obj.insert(
        "eth".to_string(),
        json!({
            "src": packet.link.src.to_string(),
            "dst": packet.link.dst.to_string(),
            "type": format!("0x{:04x}", packet.link.ethertype),
        }),
    );
    for layer in &packet.layers {
        match layer {
            Layer::Arp(arp) => {
                obj.insert(
                    "arp".to_string(),
                    json!({
                        "op": if arp.is_request() { "request" } else { "reply" },
                        "sender-hw": arp.sender_hw.to_string(),
                        "sender-ip": arp.sender_ip.to_string(),
                        "target-hw": arp.target_hw.to_string(),
                        "target-ip": arp.target_ip.to_string(),
                    }),
                );
            }
            Layer::Ip(ip) => {
                let (v, ttl): (u64, u8) = match ip {
                    IpData::V4(v4) => (4, v4.ttl),
                    IpData::V6(v6) => (6, v6.hop_limit),
                };
                obj.insert(
                    "ip".to_string(),
                    json!({
                        "v": v,
                        "src": ip.src().to_string(),
                        "dst": ip.dst().to_string(),
                        "ttl": ttl,
                    }),
                );
                let rest = match ip {
                    IpData::V4(v4) => &v4.rest,
                    IpData::V6(v6) => &v6.rest,
                };
                if !rest.is_empty() {
                    obj.insert("payload".to_string(), json!(hex_encode(rest)));
                }
            }
            Layer::Icmp(icmp) => {
                let type_value = match icmp.type_name() {
                    Some(name) => json!(name),
                    None => json!(icmp.icmp_type),
                };
                obj.insert("icmp".to_string(), json!({"type": type_value, "code": icmp.code}));
            }
            Layer::Transport(TransportData::Tcp(tcp)) => {
                obj.insert(
                    "tcp".to_string(),
                    json!({"src": tcp.src_port, "dst": tcp.dst_port, "flags": tcp.flags, "seq": tcp.seq, "ack": tcp.ack}),
                );
                if !tcp.payload.is_empty() {
                    obj.insert("payload".to_string(), json!(hex_encode(&tcp.payload)));
                }
            }
            Layer::Transport(TransportData::Udp(udp)) => {
                obj.insert(
                    "udp".to_string(),
                    json!({"src": udp.src_port, "dst": udp.dst_port}),
                );
                if !udp.payload.is_empty() {
                    obj.insert("payload".to_string(), json!(hex_encode(&udp.payload)));
                }
            }
            Layer::App(app) => {
                let (key, value) = app_to_json(app);
                obj.insert(key.to_string(), value);
            }
        }
    }
    Value::Object(obj)
}

fn app_to_json(app: &AppData) -> (&'static str, Value) {
    match app {
        AppData::Dns(m) | AppData::Mdns(m) => {
            let mut dns = Map::new();
            dns.insert(
                "qr".to_string(),
                json!(if m.is_response() { "response" } else { "query" }),
            );
            dns.insert("id".to_string(), json!(m.id));
            dns.insert("flags".to_string(), json!(m.flags));
            if let Some(q) = m.first_question() {
                let qtype = match names::dns_qtype_name(q.qtype) {
                    Some(name) => json!(name),
                    None => json!(q.qtype),
                };
                dns.insert("qtype".to_string(), qtype);
                dns.insert("domain-name".to_string(), json!(q.name));
            }
            if !m.answers.is_empty() {
                let answers: Vec<Value> = m
                    .answers
                    .iter()
                    .map(|r| {
                        let (rtype, data) = match &r.rdata {
                            DnsRdata::A(a) => ("A", a.to_string()),
                            DnsRdata::Aaaa(a) => ("AAAA", a.to_string()),
                            DnsRdata::Cname(c) => ("CNAME", c.clone()),
                            DnsRdata::Ptr(p) => ("PTR", p.clone()),
                            DnsRdata::Other(bytes) => ("TXT", hex_encode(bytes)),
                        };
                        json!({"name": r.name, "type": rtype, "ttl": r.ttl, "data": data})
                    })
                    .collect();
                dns.insert("answers".to_string(), json!(answers));
            }
            (app.protocol_key_static(), Value::Object(dns))
        }
        AppData::Dhcp(d) => (
            "dhcp",
            json!({
                "message-type": d.message_type_name().unwrap_or("unknown"),
                "xid": d.xid,
            }),
        ),
        AppData::Http(h) => match &h.start {
            HttpStart::Request { method, uri, .. } => {
                ("http", json!({"method": method, "uri": uri}))
            }
            HttpStart::Response { status, reason, .. } => {
                ("http", json!({"status": status, "reason": reason}))
            }
        },
        AppData::Ssdp(s) => {
            let mut v = Map::new();
            if let Some(m) = s.method() {
                v.insert("method".to_string(), json!(m));
            }
            if let Some(st) = s.st() {
                v.insert("st".to_string(), json!(st));
            }
            ("ssdp", Value::Object(v))
        }
        AppData::Coap(c) => (
            "coap",
            json!({
                "type": c.type_name().unwrap_or("CON"),
                "method": c.method_name().unwrap_or("GET"),
                "uri-path": c.uri_path(),
                "mid": c.message_id,
            }),
        ),
        AppData::Igmp(g) => (
            "igmp",
            json!({
                "type": g.type_name().unwrap_or("membership-report"),
                "group": g.group.to_string(),
            }),
        ),
    }
}

impl AppData {
    fn protocol_key_static(&self) -> &'static str {
        match self {
            AppData::Mdns(_) => "mdns",
            _ => "dns",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_mdns_line_parses() {
        let line = r#"{"v":1,"ts":0,"eth":{"src":"02:00:00:00:00:01","dst":"01:00:5e:00:00:fb"},"ip":{"v":4,"src":"192.168.1.10","dst":"224.0.0.251"},"udp":{"src":5353,"dst":5353},"mdns":{"qr":"query","qtype":"PTR","domain-name":"_hue._tcp.local"}}"#;
        let trace = read_jsonl(line).unwrap();
        assert_eq!(trace.len(), 1);
        let packet = &trace.packets[0];
        match packet.app() {
            Some(AppData::Mdns(m)) => {
                assert_eq!(m.questions[0].name, "_hue._tcp.local");
                assert_eq!(m.questions[0].qtype, 12);
            }
            other => panic!("expected mdns, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert_eq!(read_jsonl("").unwrap().len(), 0);
        assert_eq!(read_jsonl("\n\n").unwrap().len(), 0);
    }

    #[test]
    fn out_of_order_timestamps_error() {
        let lines = r#"{"v":1,"ts":2,"eth":{"src":"02:00:00:00:00:01","dst":"02:00:00:00:00:02"},"ip":{"v":4,"src":"10.0.0.1","dst":"10.0.0.2"},"udp":{"src":1,"dst":2}}
{"v":1,"ts":1,"eth":{"src":"02:00:00:00:00:01","dst":"02:00:00:00:00:02"},"ip":{"v":4,"src":"10.0.0.1","dst":"10.0.0.2"},"udp":{"src":1,"dst":2}}"#;
        let err = read_jsonl(lines).unwrap_err();
        match err {
            FormatError::Jsonl { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-decreasing"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn synthesize_then_dissect_preserves_fields() {
        let line = r#"{"v":1,"ts":1.25,"eth":{"src":"02:00:00:00:00:01","dst":"02:00:00:00:00:02"},"ip":{"v":4,"src":"192.168.1.2","dst":"192.168.1.1"},"udp":{"src":5000,"dst":53},"dns":{"qr":"response","id":9,"qtype":"A","domain-name":"cloud.example.com","answers":[{"name":"cloud.example.com","type":"A","ttl":60,"data":"1.2.3.4"}]}}"#;
        let trace = read_jsonl(line).unwrap();
        let packet = &trace.packets[0];
        let re = dissect(&packet.raw, packet.timestamp).unwrap();
        assert!(packet.fields_eq(&re));
        // Writing and re-reading preserves the fields too.
        let text = write_jsonl(&trace);
        let again = read_jsonl(&text).unwrap();
        assert!(again.packets[0].fields_eq(packet));
    }

    #[test]
    fn write_read_write_is_a_fixpoint_across_protocols() {
        use crate::packet::*;
        use crate::profile::MacAddr;
        let a = Host::v4(MacAddr([2, 0, 0, 0, 0, 1]), Ipv4Addr::new(192, 168, 1, 2));
        let b = Host::v4(MacAddr([2, 0, 0, 0, 0, 2]), Ipv4Addr::new(192, 168, 1, 1));
        let mcast = Host::v4(MacAddr([1, 0, 0x5e, 0, 0, 0xfb]), Ipv4Addr::new(224, 0, 0, 251));
        let t = Timestamp::from_millis;
        let trace = Trace::new(vec![
            arp_packet(t(0), 1, &a, &b),
            icmp_echo(t(1), &a, &b, true),
            tcp_packet(t(2), &a, &b, 1, 2, tcp_flags::SYN, b"zz"),
            udp_packet(t(3), &a, &b, 3, 4, b"yy"),
            dns_query(t(4), &a, &b, 9, "q.example", 1),
            mdns_query(t(5), &a, &mcast, "_s._tcp.local", 12),
            dhcp_packet(t(6), &a, &b, 1, 42),
            http_request(t(7), &a, &b, 5000, "GET", "/z"),
            ssdp_msearch(t(8), &a, &mcast, "ssdp:all"),
            coap_request(t(9), &a, &b, 0, 1, "s", 2),
            igmp_packet(t(10), &a, &mcast, 0x16, Ipv4Addr::new(224, 0, 0, 251)),
        ])
        .unwrap();
        let once = write_jsonl(&trace);
        let twice = write_jsonl(&read_jsonl(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn raw_bytes_are_authoritative_when_present() {
        let built = crate::packet::dns_query(
            Timestamp::from_secs_f64(2.5),
            &crate::packet::Host::v4(
                crate::profile::MacAddr([2, 0, 0, 0, 0, 1]),
                Ipv4Addr::new(10, 0, 0, 1),
            ),
            &crate::packet::Host::v4(
                crate::profile::MacAddr([2, 0, 0, 0, 0, 2]),
                Ipv4Addr::new(10, 0, 0, 2),
            ),
            5,
            "x.example",
            1,
        );
        let line = format!(
            r#"{{"v":1,"ts":2.5,"iface":"wlan0","raw":"{}"}}"#,
            hex_encode(&built.raw)
        );
        let trace = read_jsonl(&line).unwrap();
        let pkt = &trace.packets[0];
        assert_eq!(pkt.raw, built.raw);
        assert_eq!(pkt.iface.as_deref(), Some("wlan0"));
        assert_eq!(pkt.dns().unwrap().questions[0].name, "x.example");
    }

    #[test]
    fn bad_line_reports_line_number() {
        let err = read_jsonl("{not json}").unwrap_err();
        match err {
            FormatError::Jsonl { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other}"),
        }
    }
}
