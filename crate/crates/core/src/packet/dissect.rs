//! Best-effort frame dissection. Anything the dissector cannot interpret
//! stays in the nearest layer's remainder; only a truncated Ethernet
//! header is an error.

use std::net::{Ipv4Addr, Ipv6Addr};

use super::*;
use crate::profile::MacAddr;

const IPPROTO_ICMP: u8 = 1;
const IPPROTO_IGMP: u8 = 2;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;
const IPPROTO_ICMPV6: u8 = 58;

/// Dissect one Ethernet frame.
pub fn dissect(raw: &[u8], timestamp: Timestamp) -> Result<Packet, FormatError> {
    if raw.len() < 14 {
        return Err(FormatError::Truncated("ethernet header"));
    }
    let link = EthernetHeader {
        dst: MacAddr([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]),
        src: MacAddr([raw[6], raw[7], raw[8], raw[9], raw[10], raw[11]]),
        ethertype: u16::from_be_bytes([raw[12], raw[13]]),
    };
    let payload = &raw[14..];
    let mut layers = Vec::new();
    let mut link_payload = Vec::new();
    let mut link_trailer = Vec::new();

    match link.ethertype {
        ETHERTYPE_ARP => {
            if let Some((arp, trailer)) = parse_arp(payload) {
                layers.push(Layer::Arp(arp));
                link_trailer = trailer;
            } else {
                link_payload = payload.to_vec();
            }
        }
        ETHERTYPE_IPV4 => {
            if !parse_ipv4(payload, &mut layers, &mut link_trailer) {
                link_payload = payload.to_vec();
            }
        }
        ETHERTYPE_IPV6 => {
            if !parse_ipv6(payload, &mut layers, &mut link_trailer) {
                link_payload = payload.to_vec();
            }
        }
        _ => link_payload = payload.to_vec(),
    }

    Ok(Packet {
        timestamp,
        link,
        layers,
        link_payload,
        link_trailer,
        raw: raw.to_vec(),
        iface: None,
    })
}

fn parse_arp(bytes: &[u8]) -> Option<(ArpData, Vec<u8>)> {
    if bytes.len() < 28 {
        return None;
    }
    let htype = u16::from_be_bytes([bytes[0], bytes[1]]);
    let ptype = u16::from_be_bytes([bytes[2], bytes[3]]);
    let hlen = bytes[4];
    let plen = bytes[5];
    if htype != 1 || ptype != ETHERTYPE_IPV4 || hlen != 6 || plen != 4 {
        return None;
    }
    let operation = u16::from_be_bytes([bytes[6], bytes[7]]);
    let mac = |o: usize| MacAddr([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3], bytes[o + 4], bytes[o + 5]]);
    let ip = |o: usize| Ipv4Addr::new(bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]);
    Some((
        ArpData {
            operation,
            sender_hw: mac(8),
            sender_ip: ip(14),
            target_hw: mac(18),
            target_ip: ip(24),
            rest: Vec::new(),
        },
        bytes[28..].to_vec(),
    ))
}

fn parse_ipv4(bytes: &[u8], layers: &mut Vec<Layer>, trailer: &mut Vec<u8>) -> bool {
    if bytes.len() < 20 {
        return false;
    }
    let version = bytes[0] >> 4;
    let ihl = (bytes[0] & 0x0f) as usize * 4;
    if version != 4 || ihl < 20 || bytes.len() < ihl {
        return false;
    }
    let total_len = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
    let end = total_len.clamp(ihl, bytes.len());
    *trailer = bytes[end..].to_vec();

    let flags_fragment = u16::from_be_bytes([bytes[6], bytes[7]]);
    let protocol = bytes[9];
    let mut ip = Ipv4Data {
        tos: bytes[1],
        identification: u16::from_be_bytes([bytes[4], bytes[5]]),
        flags_fragment,
        ttl: bytes[8],
        protocol,
        checksum: Some(u16::from_be_bytes([bytes[10], bytes[11]])),
        options: bytes[20..ihl].to_vec(),
        src: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
        dst: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
        rest: Vec::new(),
    };
    let payload = &bytes[ihl..end];
    let fragment_offset = flags_fragment & 0x1fff;

    let mut upper = Vec::new();
    // Non-first fragments carry no transport header.
    if fragment_offset == 0 {
        parse_ip_payload(protocol, false, payload, &mut upper);
    }
    if upper.is_empty() {
        ip.rest = payload.to_vec();
    }
    layers.push(Layer::Ip(IpData::V4(ip)));
    layers.append(&mut upper);
    true
}

fn parse_ipv6(bytes: &[u8], layers: &mut Vec<Layer>, trailer: &mut Vec<u8>) -> bool {
    if bytes.len() < 40 {
        return false;
    }
    let version = bytes[0] >> 4;
    if version != 6 {
        return false;
    }
    let payload_len = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
    let end = (40 + payload_len).min(bytes.len());
    *trailer = bytes[end..].to_vec();

    let next_header = bytes[6];
    let mut v6 = Ipv6Data {
        traffic_class: ((bytes[0] & 0x0f) << 4) | (bytes[1] >> 4),
        flow_label: u32::from_be_bytes([0, bytes[1] & 0x0f, bytes[2], bytes[3]]),
        next_header,
        hop_limit: bytes[7],
        src: read_v6(&bytes[8..24]),
        dst: read_v6(&bytes[24..40]),
        rest: Vec::new(),
    };
    let payload = &bytes[40..end];

    let mut upper = Vec::new();
    parse_ip_payload(next_header, true, payload, &mut upper);
    if upper.is_empty() {
        v6.rest = payload.to_vec();
    }
    layers.push(Layer::Ip(IpData::V6(v6)));
    layers.append(&mut upper);
    true
}

fn read_v6(bytes: &[u8]) -> Ipv6Addr {
    let mut octets = [0u8; 16];
    octets.copy_from_slice(&bytes[..16]);
    Ipv6Addr::from(octets)
}

fn parse_ip_payload(protocol: u8, v6: bool, payload: &[u8], out: &mut Vec<Layer>) {
    match protocol {
        IPPROTO_ICMP if !v6 => {
            if let Some(icmp) = parse_icmp(payload, false) {
                out.push(Layer::Icmp(icmp));
            }
        }
        IPPROTO_ICMPV6 if v6 => {
            if let Some(icmp) = parse_icmp(payload, true) {
                out.push(Layer::Icmp(icmp));
            }
        }
        IPPROTO_IGMP if !v6 => {
            if let Some(igmp) = parse_igmp(payload) {
                out.push(Layer::App(AppData::Igmp(igmp)));
            }
        }
        IPPROTO_TCP => {
            if let Some((mut tcp, body)) = parse_tcp(payload) {
                let app = classify_tcp_app(&tcp, &body);
                if app.is_none() {
                    tcp.payload = body;
                }
                out.push(Layer::Transport(TransportData::Tcp(tcp)));
                if let Some(app) = app {
                    out.push(Layer::App(app));
                }
            }
        }
        IPPROTO_UDP => {
            if let Some((mut udp, body)) = parse_udp(payload) {
                let app = classify_udp_app(&udp, &body);
                if app.is_none() {
                    udp.payload = body;
                }
                out.push(Layer::Transport(TransportData::Udp(udp)));
                if let Some(app) = app {
                    out.push(Layer::App(app));
                }
            }
        }
        _ => {}
    }
}

fn parse_icmp(bytes: &[u8], v6: bool) -> Option<IcmpData> {
    if bytes.len() < 4 {
        return None;
    }
    Some(IcmpData {
        v6,
        icmp_type: bytes[0],
        code: bytes[1],
        checksum: Some(u16::from_be_bytes([bytes[2], bytes[3]])),
        rest: bytes[4..].to_vec(),
    })
}

fn parse_igmp(bytes: &[u8]) -> Option<IgmpData> {
    if bytes.len() < 8 {
        return None;
    }
    Some(IgmpData {
        igmp_type: bytes[0],
        max_resp: bytes[1],
        checksum: Some(u16::from_be_bytes([bytes[2], bytes[3]])),
        group: Ipv4Addr::new(bytes[4], bytes[5], bytes[6], bytes[7]),
        rest: bytes[8..].to_vec(),
    })
}

fn parse_tcp(bytes: &[u8]) -> Option<(TcpData, Vec<u8>)> {
    if bytes.len() < 20 {
        return None;
    }
    let offset = (bytes[12] >> 4) as usize * 4;
    if offset < 20 || bytes.len() < offset {
        return None;
    }
    Some((
        TcpData {
            src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
            dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
            seq: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
            ack: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
            flags: bytes[13],
            window: u16::from_be_bytes([bytes[14], bytes[15]]),
            checksum: Some(u16::from_be_bytes([bytes[16], bytes[17]])),
            urgent: u16::from_be_bytes([bytes[18], bytes[19]]),
            options: bytes[20..offset].to_vec(),
            payload: Vec::new(),
        },
        bytes[offset..].to_vec(),
    ))
}

fn parse_udp(bytes: &[u8]) -> Option<(UdpData, Vec<u8>)> {
    if bytes.len() < 8 {
        return None;
    }
    Some((
        UdpData {
            src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
            dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
            checksum: Some(u16::from_be_bytes([bytes[6], bytes[7]])),
            payload: Vec::new(),
        },
        bytes[8..].to_vec(),
    ))
}

const HTTP_METHODS: &[&str] = &[
    "GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "CONNECT", "TRACE",
];

fn looks_like_http(body: &[u8]) -> bool {
    if body.starts_with(b"HTTP/") {
        return true;
    }
    HTTP_METHODS.iter().any(|m| {
        body.len() > m.len() && body.starts_with(m.as_bytes()) && body[m.len()] == b' '
    })
}

fn classify_tcp_app(tcp: &TcpData, body: &[u8]) -> Option<AppData> {
    if body.is_empty() {
        return None;
    }
    if tcp.src_port == 80 || tcp.dst_port == 80 || looks_like_http(body) {
        return parse_http(body).map(AppData::Http);
    }
    None
}

fn classify_udp_app(udp: &UdpData, body: &[u8]) -> Option<AppData> {
    if body.is_empty() {
        return None;
    }
    let port = |p: u16| udp.src_port == p || udp.dst_port == p;
    if port(53) {
        return parse_dns(body).map(AppData::Dns);
    }
    if port(5353) {
        return parse_dns(body).map(AppData::Mdns);
    }
    if port(67) || port(68) {
        return parse_dhcp(body).map(AppData::Dhcp);
    }
    if port(5683) {
        return parse_coap(body).map(AppData::Coap);
    }
    if port(1900) {
        return parse_ssdp(body).map(AppData::Ssdp);
    }
    None
}

// --- DNS ---

fn parse_dns(bytes: &[u8]) -> Option<DnsMessage> {
    if bytes.len() < 12 {
        return None;
    }
    let id = u16::from_be_bytes([bytes[0], bytes[1]]);
    let flags = u16::from_be_bytes([bytes[2], bytes[3]]);
    let qdcount = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
    let ancount = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
    let nscount = u16::from_be_bytes([bytes[8], bytes[9]]) as usize;
    let arcount = u16::from_be_bytes([bytes[10], bytes[11]]) as usize;
    if qdcount + ancount + nscount + arcount > 512 {
        return None;
    }

    let mut pos = 12usize;
    let mut questions = Vec::with_capacity(qdcount);
    for _ in 0..qdcount {
        let (name, next) = parse_dns_name(bytes, pos)?;
        if next + 4 > bytes.len() {
            return None;
        }
        questions.push(DnsQuestion {
            name,
            qtype: u16::from_be_bytes([bytes[next], bytes[next + 1]]),
            qclass: u16::from_be_bytes([bytes[next + 2], bytes[next + 3]]),
        });
        pos = next + 4;
    }

    let mut sections = [Vec::new(), Vec::new(), Vec::new()];
    for (i, count) in [ancount, nscount, arcount].into_iter().enumerate() {
        for _ in 0..count {
            let (record, next) = parse_dns_record(bytes, pos)?;
            sections[i].push(record);
            pos = next;
        }
    }
    let [answers, authorities, additionals] = sections;

    Some(DnsMessage {
        id,
        flags,
        questions,
        answers,
        authorities,
        additionals,
        trailing: bytes[pos..].to_vec(),
    })
}

fn parse_dns_record(bytes: &[u8], pos: usize) -> Option<(DnsRecord, usize)> {
    let (name, next) = parse_dns_name(bytes, pos)?;
    if next + 10 > bytes.len() {
        return None;
    }
    let rtype = u16::from_be_bytes([bytes[next], bytes[next + 1]]);
    let class = u16::from_be_bytes([bytes[next + 2], bytes[next + 3]]);
    let ttl = u32::from_be_bytes([bytes[next + 4], bytes[next + 5], bytes[next + 6], bytes[next + 7]]);
    let rdlen = u16::from_be_bytes([bytes[next + 8], bytes[next + 9]]) as usize;
    let rd_start = next + 10;
    if rd_start + rdlen > bytes.len() {
        return None;
    }
    let rd = &bytes[rd_start..rd_start + rdlen];
    let rdata = match rtype {
        1 if rdlen == 4 => DnsRdata::A(Ipv4Addr::new(rd[0], rd[1], rd[2], rd[3])),
        28 if rdlen == 16 => DnsRdata::Aaaa(read_v6(rd)),
        5 => DnsRdata::Cname(parse_dns_name(bytes, rd_start)?.0),
        12 => DnsRdata::Ptr(parse_dns_name(bytes, rd_start)?.0),
        _ => DnsRdata::Other(rd.to_vec()),
    };
    Some((
        DnsRecord {
            name,
            rtype,
            class,
            ttl,
            rdata,
        },
        rd_start + rdlen,
    ))
}

/// Decompress a DNS name starting at `pos`; returns the dotted name and
/// the offset just past it (pointer jumps do not advance the offset).
fn parse_dns_name(bytes: &[u8], mut pos: usize) -> Option<(String, usize)> {
    let mut labels: Vec<String> = Vec::new();
    let mut end: Option<usize> = None;
    let mut jumps = 0;
    loop {
        let len = *bytes.get(pos)? as usize;
        if len == 0 {
            let end = end.unwrap_or(pos + 1);
            return Some((labels.join("."), end));
        }
        if len & 0xc0 == 0xc0 {
            let lo = *bytes.get(pos + 1)? as usize;
            if end.is_none() {
                end = Some(pos + 2);
            }
            pos = ((len & 0x3f) << 8) | lo;
            jumps += 1;
            if jumps > 64 {
                return None;
            }
            continue;
        }
        if len > 63 {
            return None;
        }
        let label = bytes.get(pos + 1..pos + 1 + len)?;
        labels.push(String::from_utf8_lossy(label).into_owned());
        if labels.len() > 128 {
            return None;
        }
        pos += 1 + len;
    }
}

// --- DHCP ---

fn parse_dhcp(bytes: &[u8]) -> Option<DhcpData> {
    if bytes.len() < 240 {
        return None;
    }
    if bytes[236..240] != [0x63, 0x82, 0x53, 0x63] {
        return None;
    }
    let ip = |o: usize| Ipv4Addr::new(bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]);
    let mut chaddr = [0u8; 16];
    chaddr.copy_from_slice(&bytes[28..44]);

    let mut options = Vec::new();
    let mut pos = 240usize;
    let mut trailing = Vec::new();
    while pos < bytes.len() {
        let code = bytes[pos];
        match code {
            0 => pos += 1,
            255 => {
                trailing = bytes[pos + 1..].to_vec();
                break;
            }
            _ => {
                let len = *bytes.get(pos + 1)? as usize;
                let value = bytes.get(pos + 2..pos + 2 + len)?;
                options.push((code, value.to_vec()));
                pos += 2 + len;
            }
        }
    }

    Some(DhcpData {
        op: bytes[0],
        htype: bytes[1],
        hlen: bytes[2],
        hops: bytes[3],
        xid: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        secs: u16::from_be_bytes([bytes[8], bytes[9]]),
        flags: u16::from_be_bytes([bytes[10], bytes[11]]),
        ciaddr: ip(12),
        yiaddr: ip(16),
        siaddr: ip(20),
        giaddr: ip(24),
        chaddr,
        sname: bytes[44..108].to_vec(),
        file: bytes[108..236].to_vec(),
        options,
        trailing,
    })
}

// --- HTTP / SSDP ---

fn split_start_line(body: &[u8]) -> Option<(String, Vec<u8>)> {
    let nl = body.iter().position(|&b| b == b'\n')?;
    let mut line_end = nl;
    if line_end > 0 && body[line_end - 1] == b'\r' {
        line_end -= 1;
    }
    let line = std::str::from_utf8(&body[..line_end]).ok()?;
    Some((line.to_string(), body[nl + 1..].to_vec()))
}

fn parse_http(body: &[u8]) -> Option<HttpData> {
    let (line, rest) = split_start_line(body)?;
    let start = parse_start_line(&line)?;
    let start = match start {
        StartLine::Request { method, target, version } => {
            if !HTTP_METHODS.contains(&method.as_str()) {
                return None;
            }
            HttpStart::Request { method, uri: target, version }
        }
        StartLine::Response { version, status, reason } => {
            HttpStart::Response { version, status, reason }
        }
    };
    Some(HttpData { start, rest })
}

fn parse_ssdp(body: &[u8]) -> Option<SsdpData> {
    let (line, rest) = split_start_line(body)?;
    let start = match parse_start_line(&line)? {
        StartLine::Request { method, target, version } => SsdpStart::Request { method, target, version },
        StartLine::Response { version, status, reason } => SsdpStart::Response { version, status, reason },
    };
    // Header block ends at the first empty line.
    let mut headers = Vec::new();
    let mut pos = 0usize;
    let mut trailing = Vec::new();
    while pos < rest.len() {
        let nl = match rest[pos..].iter().position(|&b| b == b'\n') {
            Some(n) => pos + n,
            None => rest.len().saturating_sub(1),
        };
        let mut line_end = nl;
        if line_end > pos && rest[line_end - 1] == b'\r' {
            line_end -= 1;
        }
        if line_end <= pos {
            trailing = rest[(nl + 1).min(rest.len())..].to_vec();
            break;
        }
        let line = String::from_utf8_lossy(&rest[pos..line_end]);
        if let Some((name, value)) = line.split_once(':') {
            headers.push((name.trim().to_string(), value.trim().to_string()));
        }
        pos = nl + 1;
    }
    Some(SsdpData {
        start,
        headers,
        trailing,
    })
}

enum StartLine {
    Request { method: String, target: String, version: String },
    Response { version: String, status: u16, reason: String },
}

fn parse_start_line(line: &str) -> Option<StartLine> {
    if let Some(rest) = line.strip_prefix("HTTP/") {
        let mut parts = rest.splitn(3, ' ');
        let version = format!("HTTP/{}", parts.next()?);
        let status: u16 = parts.next()?.parse().ok()?;
        let reason = parts.next().unwrap_or("").to_string();
        return Some(StartLine::Response { version, status, reason });
    }
    let mut parts = line.splitn(3, ' ');
    let method = parts.next()?.to_string();
    let target = parts.next()?.to_string();
    let version = parts.next()?.to_string();
    if !version.starts_with("HTTP/") {
        return None;
    }
    Some(StartLine::Request { method, target, version })
}

// --- CoAP ---

fn parse_coap(bytes: &[u8]) -> Option<CoapData> {
    if bytes.len() < 4 {
        return None;
    }
    let version = bytes[0] >> 6;
    if version != 1 {
        return None;
    }
    let msg_type = (bytes[0] >> 4) & 0x03;
    let tkl = (bytes[0] & 0x0f) as usize;
    if tkl > 8 || bytes.len() < 4 + tkl {
        return None;
    }
    let code = bytes[1];
    let message_id = u16::from_be_bytes([bytes[2], bytes[3]]);
    let token = bytes[4..4 + tkl].to_vec();

    let mut options = Vec::new();
    let mut pos = 4 + tkl;
    let mut number = 0u16;
    let mut payload = Vec::new();
    while pos < bytes.len() {
        let byte = bytes[pos];
        if byte == 0xff {
            payload = bytes[pos + 1..].to_vec();
            break;
        }
        pos += 1;
        let (delta, p) = coap_extended(byte >> 4, bytes, pos)?;
        pos = p;
        let (len, p) = coap_extended(byte & 0x0f, bytes, pos)?;
        pos = p;
        number = number.checked_add(delta)?;
        let value = bytes.get(pos..pos + len as usize)?;
        options.push((number, value.to_vec()));
        pos += len as usize;
    }

    Some(CoapData {
        msg_type,
        code,
        message_id,
        token,
        options,
        payload,
    })
}

fn coap_extended(nibble: u8, bytes: &[u8], pos: usize) -> Option<(u16, usize)> {
    match nibble {
        0..=12 => Some((nibble as u16, pos)),
        13 => Some((*bytes.get(pos)? as u16 + 13, pos + 1)),
        14 => {
            let hi = *bytes.get(pos)? as u16;
            let lo = *bytes.get(pos + 1)? as u16;
            Some(((hi << 8 | lo).checked_add(269)?, pos + 2))
        }
        _ => None,
    }
}


#[cfg(test)]
mod more_tests {
    use super::*;
    use crate::packet::{tcp_packet, Host};
    use crate::profile::MacAddr;
    use std::net::Ipv6Addr;

    fn v6_host(last: u16) -> Host {
        Host::new(
            MacAddr([0x02, 0, 0, 0, 0, last as u8]),
            std::net::IpAddr::V6(Ipv6Addr::new(0xfd00, 0, 0, 0, 0, 0, 0, last)),
        )
    }

    #[test]
    fn ipv6_tcp_round_trips() {
        let pkt = tcp_packet(Timestamp::ZERO, &v6_host(1), &v6_host(2), 50000, 443, 0x10, b"abc");
        assert_eq!(pkt.link.ethertype, super::ETHERTYPE_IPV6);
        let again = dissect(&pkt.raw, pkt.timestamp).unwrap();
        assert!(pkt.fields_eq(&again));
        match again.ip().unwrap() {
            IpData::V6(v6) => {
                assert_eq!(v6.next_header, 6);
                assert_eq!(v6.src.segments()[7], 1);
            }
            other => panic!("expected v6, got {other:?}"),
        }
        assert_eq!(again.transport().unwrap().dst_port(), 443);
    }

    #[test]
    fn non_first_fragment_stops_at_ip() {
        let pkt = tcp_packet(
            Timestamp::ZERO,
            &Host::v4(MacAddr([2, 0, 0, 0, 0, 1]), Ipv4Addr::new(10, 0, 0, 1)),
            &Host::v4(MacAddr([2, 0, 0, 0, 0, 2]), Ipv4Addr::new(10, 0, 0, 2)),
            1000,
            2000,
            0,
            b"payload",
        );
        let mut raw = pkt.raw.clone();
        // Fragment offset 8 inside the IPv4 header, fix the checksum.
        raw[14 + 6] = 0x00;
        raw[14 + 7] = 0x08;
        raw[14 + 10] = 0;
        raw[14 + 11] = 0;
        let frag = dissect(&raw, Timestamp::ZERO).unwrap();
        assert!(frag.transport().is_none(), "fragments are not parsed above IP");
        match frag.ip().unwrap() {
            IpData::V4(v4) => assert!(!v4.rest.is_empty()),
            other => panic!("expected v4, got {other:?}"),
        }
    }
}
