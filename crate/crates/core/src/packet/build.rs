//! Canonical packet serialization and fixture-friendly constructors.
//!
//! Serialization is the inverse of dissection on parsed fields: length
//! fields are recomputed from content and stored checksums are written
//! verbatim (`None` means compute a correct one).

use std::net::{IpAddr, Ipv4Addr};

use super::*;
use crate::profile::MacAddr;

/// Serialize a packet from its parsed fields.
pub fn serialize_fields(
    link: &EthernetHeader,
    layers: &[Layer],
    link_payload: &[u8],
    link_trailer: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&link.dst.octets());
    out.extend_from_slice(&link.src.octets());
    out.extend_from_slice(&link.ethertype.to_be_bytes());

    for (idx, layer) in layers.iter().enumerate() {
        match layer {
            Layer::Arp(arp) => out.extend_from_slice(&arp_bytes(arp)),
            Layer::Ip(ip) => {
                let upper = upper_bytes(ip, &layers[idx + 1..]);
                out.extend_from_slice(&ip_bytes(ip, &upper));
                break;
            }
            _ => {}
        }
    }
    out.extend_from_slice(link_payload);
    out.extend_from_slice(link_trailer);
    out
}

/// Build a packet from fields; `raw` is the canonical serialization and
/// the stored layers are normalized by re-dissecting it, so computed
/// checksums and derived lengths land back in the fields.
pub fn packet_from_fields(
    timestamp: Timestamp,
    link: EthernetHeader,
    layers: Vec<Layer>,
) -> Packet {
    let raw = serialize_fields(&link, &layers, &[], &[]);
    match super::dissect(&raw, timestamp) {
        Ok(packet) => packet,
        Err(_) => Packet {
            timestamp,
            link,
            layers,
            link_payload: Vec::new(),
            link_trailer: Vec::new(),
            raw,
            iface: None,
        },
    }
}

fn arp_bytes(arp: &ArpData) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + arp.rest.len());
    out.extend_from_slice(&[0, 1, 0x08, 0x00, 6, 4]);
    out.extend_from_slice(&arp.operation.to_be_bytes());
    out.extend_from_slice(&arp.sender_hw.octets());
    out.extend_from_slice(&arp.sender_ip.octets());
    out.extend_from_slice(&arp.target_hw.octets());
    out.extend_from_slice(&arp.target_ip.octets());
    out.extend_from_slice(&arp.rest);
    out
}

/// Serialize everything above the IP layer, checksummed against it.
fn upper_bytes(ip: &IpData, upper: &[Layer]) -> Vec<u8> {
    let mut app_bytes: Vec<u8> = Vec::new();
    let mut have_app = false;
    for layer in upper {
        if let Layer::App(app) = layer {
            app_bytes = app_payload_bytes(app);
            have_app = true;
        }
    }

    for layer in upper {
        match layer {
            Layer::Icmp(icmp) => {
                let mut body = Vec::with_capacity(4 + icmp.rest.len());
                body.push(icmp.icmp_type);
                body.push(icmp.code);
                body.extend_from_slice(&[0, 0]);
                body.extend_from_slice(&icmp.rest);
                let sum = icmp.checksum.unwrap_or_else(|| {
                    if icmp.v6 {
                        pseudo_checksum(ip, 58, &body)
                    } else {
                        internet_checksum(&body)
                    }
                });
                body[2..4].copy_from_slice(&sum.to_be_bytes());
                return body;
            }
            Layer::Transport(TransportData::Tcp(tcp)) => {
                let payload = if have_app { &app_bytes } else { &tcp.payload };
                return tcp_bytes(ip, tcp, payload);
            }
            Layer::Transport(TransportData::Udp(udp)) => {
                let payload = if have_app { &app_bytes } else { &udp.payload };
                return udp_bytes(ip, udp, payload);
            }
            Layer::App(AppData::Igmp(igmp)) => {
                let mut body = Vec::with_capacity(8 + igmp.rest.len());
                body.push(igmp.igmp_type);
                body.push(igmp.max_resp);
                body.extend_from_slice(&[0, 0]);
                body.extend_from_slice(&igmp.group.octets());
                body.extend_from_slice(&igmp.rest);
                let sum = igmp.checksum.unwrap_or_else(|| internet_checksum(&body));
                body[2..4].copy_from_slice(&sum.to_be_bytes());
                return body;
            }
            _ => {}
        }
    }
    match ip {
        IpData::V4(v4) => v4.rest.clone(),
        IpData::V6(v6) => v6.rest.clone(),
    }
}

fn ip_bytes(ip: &IpData, payload: &[u8]) -> Vec<u8> {
    match ip {
        IpData::V4(v4) => {
            let ihl = 20 + v4.options.len();
            let total_len = (ihl + payload.len()) as u16;
            let mut out = Vec::with_capacity(ihl + payload.len());
            out.push(0x40 | ((ihl / 4) as u8));
            out.push(v4.tos);
            out.extend_from_slice(&total_len.to_be_bytes());
            out.extend_from_slice(&v4.identification.to_be_bytes());
            out.extend_from_slice(&v4.flags_fragment.to_be_bytes());
            out.push(v4.ttl);
            out.push(v4.protocol);
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&v4.src.octets());
            out.extend_from_slice(&v4.dst.octets());
            out.extend_from_slice(&v4.options);
            let sum = v4.checksum.unwrap_or_else(|| internet_checksum(&out));
            out[10..12].copy_from_slice(&sum.to_be_bytes());
            out.extend_from_slice(payload);
            out
        }
        IpData::V6(v6) => {
            let mut out = Vec::with_capacity(40 + payload.len());
            out.push(0x60 | (v6.traffic_class >> 4));
            out.push(((v6.traffic_class & 0x0f) << 4) | ((v6.flow_label >> 16) as u8 & 0x0f));
            out.extend_from_slice(&((v6.flow_label >> 8) as u8).to_be_bytes());
            out.push(v6.flow_label as u8);
            out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
            out.push(v6.next_header);
            out.push(v6.hop_limit);
            out.extend_from_slice(&v6.src.octets());
            out.extend_from_slice(&v6.dst.octets());
            out.extend_from_slice(payload);
            out
        }
    }
}

fn tcp_bytes(ip: &IpData, tcp: &TcpData, payload: &[u8]) -> Vec<u8> {
    let offset = 20 + tcp.options.len();
    let mut out = Vec::with_capacity(offset + payload.len());
    out.extend_from_slice(&tcp.src_port.to_be_bytes());
    out.extend_from_slice(&tcp.dst_port.to_be_bytes());
    out.extend_from_slice(&tcp.seq.to_be_bytes());
    out.extend_from_slice(&tcp.ack.to_be_bytes());
    out.push(((offset / 4) as u8) << 4);
    out.push(tcp.flags);
    out.extend_from_slice(&tcp.window.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&tcp.urgent.to_be_bytes());
    out.extend_from_slice(&tcp.options);
    out.extend_from_slice(payload);
    let sum = tcp.checksum.unwrap_or_else(|| pseudo_checksum(ip, 6, &out));
    out[16..18].copy_from_slice(&sum.to_be_bytes());
    out
}

fn udp_bytes(ip: &IpData, udp: &UdpData, payload: &[u8]) -> Vec<u8> {
    let len = (8 + payload.len()) as u16;
    let mut out = Vec::with_capacity(len as usize);
    out.extend_from_slice(&udp.src_port.to_be_bytes());
    out.extend_from_slice(&udp.dst_port.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(payload);
    let sum = udp.checksum.unwrap_or_else(|| pseudo_checksum(ip, 17, &out));
    out[6..8].copy_from_slice(&sum.to_be_bytes());
    out
}

fn app_payload_bytes(app: &AppData) -> Vec<u8> {
    match app {
        AppData::Dns(m) | AppData::Mdns(m) => dns_bytes(m),
        AppData::Dhcp(d) => dhcp_bytes(d),
        AppData::Http(h) => http_bytes(h),
        AppData::Ssdp(s) => ssdp_bytes(s),
        AppData::Coap(c) => coap_bytes(c),
        AppData::Igmp(_) => Vec::new(), // serialized at the IP level
    }
}

fn write_dns_name(out: &mut Vec<u8>, name: &str) {
    if !name.is_empty() {
        for label in name.split('.') {
            let bytes = label.as_bytes();
            out.push(bytes.len().min(63) as u8);
            out.extend_from_slice(&bytes[..bytes.len().min(63)]);
        }
    }
    out.push(0);
}

fn dns_bytes(m: &DnsMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&m.id.to_be_bytes());
    out.extend_from_slice(&m.flags.to_be_bytes());
    out.extend_from_slice(&(m.questions.len() as u16).to_be_bytes());
    out.extend_from_slice(&(m.answers.len() as u16).to_be_bytes());
    out.extend_from_slice(&(m.authorities.len() as u16).to_be_bytes());
    out.extend_from_slice(&(m.additionals.len() as u16).to_be_bytes());
    for q in &m.questions {
        write_dns_name(&mut out, &q.name);
        out.extend_from_slice(&q.qtype.to_be_bytes());
        out.extend_from_slice(&q.qclass.to_be_bytes());
    }
    for record in m.answers.iter().chain(&m.authorities).chain(&m.additionals) {
        write_dns_name(&mut out, &record.name);
        out.extend_from_slice(&record.rtype.to_be_bytes());
        out.extend_from_slice(&record.class.to_be_bytes());
        out.extend_from_slice(&record.ttl.to_be_bytes());
        let rdata = match &record.rdata {
            DnsRdata::A(a) => a.octets().to_vec(),
            DnsRdata::Aaaa(a) => a.octets().to_vec(),
            DnsRdata::Cname(n) | DnsRdata::Ptr(n) => {
                let mut buf = Vec::new();
                write_dns_name(&mut buf, n);
                buf
            }
            DnsRdata::Other(bytes) => bytes.clone(),
        };
        out.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        out.extend_from_slice(&rdata);
    }
    out.extend_from_slice(&m.trailing);
    out
}

fn dhcp_bytes(d: &DhcpData) -> Vec<u8> {
    let mut out = Vec::with_capacity(300);
    out.push(d.op);
    out.push(d.htype);
    out.push(d.hlen);
    out.push(d.hops);
    out.extend_from_slice(&d.xid.to_be_bytes());
    out.extend_from_slice(&d.secs.to_be_bytes());
    out.extend_from_slice(&d.flags.to_be_bytes());
    out.extend_from_slice(&d.ciaddr.octets());
    out.extend_from_slice(&d.yiaddr.octets());
    out.extend_from_slice(&d.siaddr.octets());
    out.extend_from_slice(&d.giaddr.octets());
    out.extend_from_slice(&d.chaddr);
    let mut sname = d.sname.clone();
    sname.resize(64, 0);
    out.extend_from_slice(&sname);
    let mut file = d.file.clone();
    file.resize(128, 0);
    out.extend_from_slice(&file);
    out.extend_from_slice(&[0x63, 0x82, 0x53, 0x63]);
    for (code, value) in &d.options {
        out.push(*code);
        out.push(value.len().min(255) as u8);
        out.extend_from_slice(&value[..value.len().min(255)]);
    }
    out.push(255);
    out.extend_from_slice(&d.trailing);
    out
}

fn http_bytes(h: &HttpData) -> Vec<u8> {
    let mut out = Vec::new();
    match &h.start {
        HttpStart::Request { method, uri, version } => {
            out.extend_from_slice(format!("{method} {uri} {version}\r\n").as_bytes());
        }
        HttpStart::Response { version, status, reason } => {
            out.extend_from_slice(format!("{version} {status} {reason}\r\n").as_bytes());
        }
    }
    out.extend_from_slice(&h.rest);
    out
}

fn ssdp_bytes(s: &SsdpData) -> Vec<u8> {
    let mut out = Vec::new();
    match &s.start {
        SsdpStart::Request { method, target, version } => {
            out.extend_from_slice(format!("{method} {target} {version}\r\n").as_bytes());
        }
        SsdpStart::Response { version, status, reason } => {
            out.extend_from_slice(format!("{version} {status} {reason}\r\n").as_bytes());
        }
    }
    for (name, value) in &s.headers {
        out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(&s.trailing);
    out
}

fn coap_bytes(c: &CoapData) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.push(0x40 | ((c.msg_type & 0x03) << 4) | (c.token.len().min(8) as u8));
    out.push(c.code);
    out.extend_from_slice(&c.message_id.to_be_bytes());
    out.extend_from_slice(&c.token[..c.token.len().min(8)]);
    let mut prev = 0u16;
    for (number, value) in &c.options {
        let delta = number.saturating_sub(prev);
        prev = *number;
        let (dn, dext) = coap_nibble(delta);
        let (ln, lext) = coap_nibble(value.len() as u16);
        out.push((dn << 4) | ln);
        out.extend_from_slice(&dext);
        out.extend_from_slice(&lext);
        out.extend_from_slice(value);
    }
    if !c.payload.is_empty() {
        out.push(0xff);
        out.extend_from_slice(&c.payload);
    }
    out
}

fn coap_nibble(value: u16) -> (u8, Vec<u8>) {
    match value {
        0..=12 => (value as u8, Vec::new()),
        13..=268 => (13, vec![(value - 13) as u8]),
        _ => (14, (value - 269).to_be_bytes().to_vec()),
    }
}

fn internet_checksum(bytes: &[u8]) -> u16 {
    let mut sum = 0u32;
    let mut chunks = bytes.chunks_exact(2);
    for chunk in &mut chunks {
        sum += u32::from(u16::from_be_bytes([chunk[0], chunk[1]]));
    }
    if let Some(&last) = chunks.remainder().first() {
        sum += u32::from(u16::from_be_bytes([last, 0]));
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn pseudo_checksum(ip: &IpData, protocol: u8, segment: &[u8]) -> u16 {
    let mut pseudo = Vec::with_capacity(40 + segment.len());
    match ip {
        IpData::V4(v4) => {
            pseudo.extend_from_slice(&v4.src.octets());
            pseudo.extend_from_slice(&v4.dst.octets());
            pseudo.push(0);
            pseudo.push(protocol);
            pseudo.extend_from_slice(&(segment.len() as u16).to_be_bytes());
        }
        IpData::V6(v6) => {
            pseudo.extend_from_slice(&v6.src.octets());
            pseudo.extend_from_slice(&v6.dst.octets());
            pseudo.extend_from_slice(&(segment.len() as u32).to_be_bytes());
            pseudo.extend_from_slice(&[0, 0, 0]);
            pseudo.push(protocol);
        }
    }
    pseudo.extend_from_slice(segment);
    internet_checksum(&pseudo)
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Pairs a host's MAC and IP for fixture construction.
#[derive(Debug, Clone, Copy)]
pub struct Host {
    pub mac: MacAddr,
    pub ip: IpAddr,
}

impl Host {
    pub fn new(mac: MacAddr, ip: IpAddr) -> Self {
        Host { mac, ip }
    }

    pub fn v4(mac: MacAddr, ip: Ipv4Addr) -> Self {
        Host {
            mac,
            ip: IpAddr::V4(ip),
        }
    }
}

fn ip_layer(src: &Host, dst: &Host, protocol: u8) -> IpData {
    match (src.ip, dst.ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => IpData::V4(Ipv4Data {
            tos: 0,
            identification: 0,
            flags_fragment: 0x4000, // don't fragment
            ttl: 64,
            protocol,
            checksum: None,
            options: Vec::new(),
            src: s,
            dst: d,
            rest: Vec::new(),
        }),
        _ => {
            let v6 = |ip: IpAddr| match ip {
                IpAddr::V6(v6) => v6,
                IpAddr::V4(v4) => v4.to_ipv6_mapped(),
            };
            IpData::V6(Ipv6Data {
                traffic_class: 0,
                flow_label: 0,
                next_header: protocol,
                hop_limit: 64,
                src: v6(src.ip),
                dst: v6(dst.ip),
                rest: Vec::new(),
            })
        }
    }
}

fn eth(src: &Host, dst: &Host, ethertype: u16) -> EthernetHeader {
    EthernetHeader {
        dst: dst.mac,
        src: src.mac,
        ethertype,
    }
}

fn ethertype_for(src: &Host, dst: &Host) -> u16 {
    match (src.ip, dst.ip) {
        (IpAddr::V4(_), IpAddr::V4(_)) => ETHERTYPE_IPV4,
        _ => ETHERTYPE_IPV6,
    }
}

pub fn tcp_packet(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    src_port: u16,
    dst_port: u16,
    flags: u8,
    payload: &[u8],
) -> Packet {
    let tcp = TcpData {
        src_port,
        dst_port,
        seq: 0,
        ack: 0,
        flags,
        window: 65535,
        checksum: None,
        urgent: 0,
        options: Vec::new(),
        payload: payload.to_vec(),
    };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![
            Layer::Ip(ip_layer(src, dst, 6)),
            Layer::Transport(TransportData::Tcp(tcp)),
        ],
    )
}

pub fn udp_packet(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    src_port: u16,
    dst_port: u16,
    payload: &[u8],
) -> Packet {
    let udp = UdpData {
        src_port,
        dst_port,
        checksum: None,
        payload: payload.to_vec(),
    };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![
            Layer::Ip(ip_layer(src, dst, 17)),
            Layer::Transport(TransportData::Udp(udp)),
        ],
    )
}

fn udp_app_packet(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    src_port: u16,
    dst_port: u16,
    app: AppData,
) -> Packet {
    let udp = UdpData {
        src_port,
        dst_port,
        checksum: None,
        payload: Vec::new(),
    };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![
            Layer::Ip(ip_layer(src, dst, 17)),
            Layer::Transport(TransportData::Udp(udp)),
            Layer::App(app),
        ],
    )
}

pub fn dns_query(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    id: u16,
    qname: &str,
    qtype: u16,
) -> Packet {
    let msg = DnsMessage {
        id,
        flags: 0x0100, // recursion desired
        questions: vec![DnsQuestion {
            name: qname.to_string(),
            qtype,
            qclass: 1,
        }],
        answers: Vec::new(),
        authorities: Vec::new(),
        additionals: Vec::new(),
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 40000 + (id % 20000), 53, AppData::Dns(msg))
}

pub fn dns_response(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    id: u16,
    qname: &str,
    qtype: u16,
    answers: Vec<DnsRecord>,
) -> Packet {
    let msg = DnsMessage {
        id,
        flags: 0x8180, // response, recursion available
        questions: vec![DnsQuestion {
            name: qname.to_string(),
            qtype,
            qclass: 1,
        }],
        answers,
        authorities: Vec::new(),
        additionals: Vec::new(),
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 53, 40000 + (id % 20000), AppData::Dns(msg))
}

pub fn a_record(name: &str, ttl: u32, addr: Ipv4Addr) -> DnsRecord {
    DnsRecord {
        name: name.to_string(),
        rtype: 1,
        class: 1,
        ttl,
        rdata: DnsRdata::A(addr),
    }
}

pub fn cname_record(name: &str, ttl: u32, target: &str) -> DnsRecord {
    DnsRecord {
        name: name.to_string(),
        rtype: 5,
        class: 1,
        ttl,
        rdata: DnsRdata::Cname(target.to_string()),
    }
}

pub fn mdns_query(ts: Timestamp, src: &Host, dst: &Host, qname: &str, qtype: u16) -> Packet {
    let msg = DnsMessage {
        id: 0,
        flags: 0,
        questions: vec![DnsQuestion {
            name: qname.to_string(),
            qtype,
            qclass: 1,
        }],
        answers: Vec::new(),
        authorities: Vec::new(),
        additionals: Vec::new(),
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 5353, 5353, AppData::Mdns(msg))
}

pub fn arp_packet(
    ts: Timestamp,
    operation: u16,
    sender: &Host,
    target: &Host,
) -> Packet {
    let v4 = |ip: IpAddr| match ip {
        IpAddr::V4(v4) => v4,
        IpAddr::V6(_) => Ipv4Addr::UNSPECIFIED,
    };
    let arp = ArpData {
        operation,
        sender_hw: sender.mac,
        sender_ip: v4(sender.ip),
        target_hw: if operation == 1 { MacAddr([0; 6]) } else { target.mac },
        target_ip: v4(target.ip),
        rest: Vec::new(),
    };
    let dst_mac = if operation == 1 { MacAddr::BROADCAST } else { target.mac };
    packet_from_fields(
        ts,
        EthernetHeader {
            dst: dst_mac,
            src: sender.mac,
            ethertype: ETHERTYPE_ARP,
        },
        vec![Layer::Arp(arp)],
    )
}

pub fn icmp_echo(ts: Timestamp, src: &Host, dst: &Host, request: bool) -> Packet {
    let v6 = !matches!((src.ip, dst.ip), (IpAddr::V4(_), IpAddr::V4(_)));
    let icmp_type = match (v6, request) {
        (false, true) => 8,
        (false, false) => 0,
        (true, true) => 128,
        (true, false) => 129,
    };
    let icmp = IcmpData {
        v6,
        icmp_type,
        code: 0,
        checksum: None,
        rest: vec![0, 1, 0, 1], // id 1, seq 1
    };
    let protocol = if v6 { 58 } else { 1 };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![Layer::Ip(ip_layer(src, dst, protocol)), Layer::Icmp(icmp)],
    )
}

pub fn http_request(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    src_port: u16,
    method: &str,
    uri: &str,
) -> Packet {
    let http = HttpData {
        start: HttpStart::Request {
            method: method.to_string(),
            uri: uri.to_string(),
            version: "HTTP/1.1".to_string(),
        },
        rest: b"Host: device\r\n\r\n".to_vec(),
    };
    let tcp = TcpData {
        src_port,
        dst_port: 80,
        seq: 1,
        ack: 1,
        flags: tcp_flags::PSH | tcp_flags::ACK,
        window: 65535,
        checksum: None,
        urgent: 0,
        options: Vec::new(),
        payload: Vec::new(),
    };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![
            Layer::Ip(ip_layer(src, dst, 6)),
            Layer::Transport(TransportData::Tcp(tcp)),
            Layer::App(AppData::Http(http)),
        ],
    )
}

pub fn ssdp_msearch(ts: Timestamp, src: &Host, dst: &Host, st: &str) -> Packet {
    let ssdp = SsdpData {
        start: SsdpStart::Request {
            method: "M-SEARCH".to_string(),
            target: "*".to_string(),
            version: "HTTP/1.1".to_string(),
        },
        headers: vec![
            ("HOST".to_string(), "239.255.255.250:1900".to_string()),
            ("MAN".to_string(), "\"ssdp:discover\"".to_string()),
            ("MX".to_string(), "1".to_string()),
            ("ST".to_string(), st.to_string()),
        ],
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 50000, 1900, AppData::Ssdp(ssdp))
}

pub fn ssdp_response(ts: Timestamp, src: &Host, dst: &Host, st: &str) -> Packet {
    let ssdp = SsdpData {
        start: SsdpStart::Response {
            version: "HTTP/1.1".to_string(),
            status: 200,
            reason: "OK".to_string(),
        },
        headers: vec![
            ("ST".to_string(), st.to_string()),
            ("USN".to_string(), format!("uuid:0::{st}")),
        ],
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 1900, 50000, AppData::Ssdp(ssdp))
}

pub fn ssdp_notify(ts: Timestamp, src: &Host, dst: &Host, nt: &str) -> Packet {
    let ssdp = SsdpData {
        start: SsdpStart::Request {
            method: "NOTIFY".to_string(),
            target: "*".to_string(),
            version: "HTTP/1.1".to_string(),
        },
        headers: vec![
            ("HOST".to_string(), "239.255.255.250:1900".to_string()),
            ("NT".to_string(), nt.to_string()),
            ("NTS".to_string(), "ssdp:alive".to_string()),
        ],
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, 50000, 1900, AppData::Ssdp(ssdp))
}

pub fn coap_request(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    msg_type: u8,
    method_code: u8,
    uri_path: &str,
    message_id: u16,
) -> Packet {
    coap_message(ts, src, dst, 50683, 5683, msg_type, method_code, uri_path, message_id)
}

#[allow(clippy::too_many_arguments)]
pub fn coap_message(
    ts: Timestamp,
    src: &Host,
    dst: &Host,
    src_port: u16,
    dst_port: u16,
    msg_type: u8,
    code: u8,
    uri_path: &str,
    message_id: u16,
) -> Packet {
    let options = uri_path
        .split('/')
        .filter(|s| !s.is_empty())
        .map(|segment| (11u16, segment.as_bytes().to_vec()))
        .collect();
    let coap = CoapData {
        msg_type,
        code,
        message_id,
        token: Vec::new(),
        options,
        payload: Vec::new(),
    };
    udp_app_packet(ts, src, dst, src_port, dst_port, AppData::Coap(coap))
}

pub fn dhcp_packet(ts: Timestamp, src: &Host, dst: &Host, message_type: u8, xid: u32) -> Packet {
    let client_ports = message_type == 1 || message_type == 3; // discover/request
    let (src_port, dst_port) = if client_ports { (68, 67) } else { (67, 68) };
    let mut chaddr = [0u8; 16];
    chaddr[..6].copy_from_slice(&src.mac.octets());
    let dhcp = DhcpData {
        op: if client_ports { 1 } else { 2 },
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
        chaddr,
        sname: Vec::new(),
        file: Vec::new(),
        options: vec![(53, vec![message_type])],
        trailing: Vec::new(),
    };
    udp_app_packet(ts, src, dst, src_port, dst_port, AppData::Dhcp(dhcp))
}

pub fn igmp_packet(ts: Timestamp, src: &Host, dst: &Host, igmp_type: u8, group: Ipv4Addr) -> Packet {
    let igmp = IgmpData {
        igmp_type,
        max_resp: 0,
        checksum: None,
        group,
        rest: Vec::new(),
    };
    packet_from_fields(
        ts,
        eth(src, dst, ethertype_for(src, dst)),
        vec![Layer::Ip(ip_layer(src, dst, 2)), Layer::App(AppData::Igmp(igmp))],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::dissect;

    fn host(last: u8) -> Host {
        Host::v4(
            MacAddr([0x02, 0, 0, 0, 0, last]),
            Ipv4Addr::new(192, 168, 1, last),
        )
    }

    #[test]
    fn dissect_of_built_tcp_packet_restores_fields() {
        let pkt = tcp_packet(
            Timestamp::from_millis(1500),
            &host(10),
            &host(20),
            12345,
            443,
            tcp_flags::SYN,
            b"",
        );
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(pkt.fields_eq(&again), "\n{:#?}\nvs\n{:#?}", pkt.layers, again.layers);
    }

    #[test]
    fn dissect_of_built_dns_query_restores_fields() {
        let pkt = dns_query(Timestamp::ZERO, &host(10), &host(1), 7, "example.com", 1);
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(pkt.fields_eq(&again));
        let dns = again.dns().unwrap();
        assert_eq!(dns.questions[0].name, "example.com");
        assert!(!dns.is_response());
    }

    #[test]
    fn dissect_of_built_coap_restores_fields() {
        let pkt = coap_request(Timestamp::ZERO, &host(10), &host(20), 0, 1, "status", 9);
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(pkt.fields_eq(&again));
        match again.app() {
            Some(AppData::Coap(c)) => {
                assert_eq!(c.uri_path(), "status");
                assert_eq!(c.method_name(), Some("GET"));
            }
            other => panic!("expected coap, got {other:?}"),
        }
    }

    #[test]
    fn coap_long_uri_segments_use_extended_option_lengths() {
        let path = "verylongsegmentname/short/anotherquitelongsegment";
        let pkt = coap_request(Timestamp::ZERO, &host(10), &host(20), 0, 3, path, 77);
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(pkt.fields_eq(&again));
        match again.app() {
            Some(AppData::Coap(c)) => assert_eq!(c.uri_path(), path),
            other => panic!("expected coap, got {other:?}"),
        }
    }

    #[test]
    fn https_payload_stays_opaque() {
        let pkt = tcp_packet(
            Timestamp::ZERO,
            &host(10),
            &host(20),
            5000,
            443,
            tcp_flags::PSH | tcp_flags::ACK,
            &[0x17, 0x03, 0x03, 0x00, 0x10, 1, 2, 3],
        );
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(again.app().is_none(), "HTTPS payload must stay opaque");
        assert_eq!(again.transport().unwrap().dst_port(), 443);
    }
}
