//! Packet traces: reading classic pcap and JSONL captures, dissecting
//! frames into layered records, and serializing packets back to bytes.

mod build;
mod dissect;
mod jsonl;
mod pcap;

pub use build::*;
pub use dissect::dissect;
pub use jsonl::{read_jsonl, write_jsonl};
pub use pcap::{read_pcap, write_pcap, LINKTYPE_ETHERNET};

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::names;
use crate::profile::MacAddr;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad pcap magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported linktype {0} (only Ethernet is supported)")]
    BadLinkType(u32),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("timestamps must be non-decreasing (packet {index})")]
    NonMonotonic { index: usize },
}

/// Packet time: integer seconds since the epoch plus nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub secs: u64,
    pub nanos: u32,
}

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp { secs: 0, nanos: 0 };

    pub fn new(secs: u64, nanos: u32) -> Self {
        Timestamp {
            secs: secs + (nanos / 1_000_000_000) as u64,
            nanos: nanos % 1_000_000_000,
        }
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        let whole = secs.max(0.0).floor();
        let nanos = ((secs - whole) * 1e9).round() as u32;
        Timestamp::new(whole as u64, nanos)
    }

    pub fn from_millis(ms: u64) -> Self {
        Timestamp::new(ms / 1000, ((ms % 1000) * 1_000_000) as u32)
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.secs as f64 + self.nanos as f64 * 1e-9
    }

    /// Seconds elapsed since `earlier`; negative when this is earlier.
    pub fn seconds_since(&self, earlier: Timestamp) -> f64 {
        self.as_secs_f64() - earlier.as_secs_f64()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.secs, self.nanos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EthernetHeader {
    pub dst: MacAddr,
    pub src: MacAddr,
    pub ethertype: u16,
}

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;

/// A parsed layer. Layers are ordered bottom-up; each retains the bytes
/// it did not interpret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Arp(ArpData),
    Ip(IpData),
    Icmp(IcmpData),
    Transport(TransportData),
    App(AppData),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArpData {
    /// 1 = request, 2 = reply.
    pub operation: u16,
    pub sender_hw: MacAddr,
    pub sender_ip: Ipv4Addr,
    pub target_hw: MacAddr,
    pub target_ip: Ipv4Addr,
    pub rest: Vec<u8>,
}

impl ArpData {
    pub fn is_request(&self) -> bool {
        self.operation == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IpData {
    V4(Ipv4Data),
    V6(Ipv6Data),
}

impl IpData {
    pub fn src(&self) -> std::net::IpAddr {
        match self {
            IpData::V4(v4) => v4.src.into(),
            IpData::V6(v6) => v6.src.into(),
        }
    }

    pub fn dst(&self) -> std::net::IpAddr {
        match self {
            IpData::V4(v4) => v4.dst.into(),
            IpData::V6(v6) => v6.dst.into(),
        }
    }

    pub fn is_v6(&self) -> bool {
        matches!(self, IpData::V6(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv4Data {
    pub tos: u8,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    /// Stored header checksum; `None` means compute on serialization.
    pub checksum: Option<u16>,
    pub options: Vec<u8>,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    /// Payload bytes when no higher layer was parsed.
    pub rest: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipv6Data {
    pub traffic_class: u8,
    pub flow_label: u32,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub rest: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcmpData {
    pub v6: bool,
    pub icmp_type: u8,
    pub code: u8,
    pub checksum: Option<u16>,
    pub rest: Vec<u8>,
}

impl IcmpData {
    pub fn type_name(&self) -> Option<&'static str> {
        names::icmp_type_name(self.v6, self.icmp_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportData {
    Tcp(TcpData),
    Udp(UdpData),
}

impl TransportData {
    pub fn src_port(&self) -> u16 {
        match self {
            TransportData::Tcp(t) => t.src_port,
            TransportData::Udp(u) => u.src_port,
        }
    }

    pub fn dst_port(&self) -> u16 {
        match self {
            TransportData::Tcp(t) => t.dst_port,
            TransportData::Udp(u) => u.dst_port,
        }
    }

    pub fn is_tcp(&self) -> bool {
        matches!(self, TransportData::Tcp(_))
    }
}

pub mod tcp_flags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
    pub const URG: u8 = 0x20;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpData {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub checksum: Option<u16>,
    pub urgent: u16,
    pub options: Vec<u8>,
    /// Payload bytes when no application layer was parsed.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UdpData {
    pub src_port: u16,
    pub dst_port: u16,
    pub checksum: Option<u16>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AppData {
    Dns(DnsMessage),
    Mdns(DnsMessage),
    Dhcp(DhcpData),
    Http(HttpData),
    Ssdp(SsdpData),
    Coap(CoapData),
    Igmp(IgmpData),
}

impl AppData {
    pub fn protocol_key(&self) -> &'static str {
        match self {
            AppData::Dns(_) => "dns",
            AppData::Mdns(_) => "mdns",
            AppData::Dhcp(_) => "dhcp",
            AppData::Http(_) => "http",
            AppData::Ssdp(_) => "ssdp",
            AppData::Coap(_) => "coap",
            AppData::Igmp(_) => "igmp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsQuestion {
    pub name: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DnsRdata {
    A(Ipv4Addr),
    Aaaa(Ipv6Addr),
    Cname(String),
    Ptr(String),
    Other(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsRecord {
    pub name: String,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub rdata: DnsRdata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnsMessage {
    pub id: u16,
    /// Raw flags word; bit 15 is QR.
    pub flags: u16,
    pub questions: Vec<DnsQuestion>,
    pub answers: Vec<DnsRecord>,
    pub authorities: Vec<DnsRecord>,
    pub additionals: Vec<DnsRecord>,
    pub trailing: Vec<u8>,
}

impl DnsMessage {
    pub fn is_response(&self) -> bool {
        self.flags & 0x8000 != 0
    }

    pub fn first_question(&self) -> Option<&DnsQuestion> {
        self.questions.first()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhcpData {
    pub op: u8,
    pub htype: u8,
    pub hlen: u8,
    pub hops: u8,
    pub xid: u32,
    pub secs: u16,
    pub flags: u16,
    pub ciaddr: Ipv4Addr,
    pub yiaddr: Ipv4Addr,
    pub siaddr: Ipv4Addr,
    pub giaddr: Ipv4Addr,
    pub chaddr: [u8; 16],
    pub sname: Vec<u8>,
    pub file: Vec<u8>,
    pub options: Vec<(u8, Vec<u8>)>,
    pub trailing: Vec<u8>,
}

impl DhcpData {
    /// DHCP message type from option 53.
    pub fn message_type(&self) -> Option<u8> {
        self.options
            .iter()
            .find(|(code, _)| *code == 53)
            .and_then(|(_, v)| v.first().copied())
    }

    pub fn message_type_name(&self) -> Option<&'static str> {
        self.message_type().and_then(names::dhcp_message_type_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpStart {
    Request {
        method: String,
        uri: String,
        version: String,
    },
    Response {
        version: String,
        status: u16,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpData {
    pub start: HttpStart,
    /// Everything after the start line, headers included.
    pub rest: Vec<u8>,
}

impl HttpData {
    pub fn method(&self) -> Option<&str> {
        match &self.start {
            HttpStart::Request { method, .. } => Some(method),
            HttpStart::Response { .. } => None,
        }
    }

    pub fn uri(&self) -> Option<&str> {
        match &self.start {
            HttpStart::Request { uri, .. } => Some(uri),
            HttpStart::Response { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SsdpStart {
    Request {
        method: String,
        target: String,
        version: String,
    },
    Response {
        version: String,
        status: u16,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsdpData {
    pub start: SsdpStart,
    pub headers: Vec<(String, String)>,
    pub trailing: Vec<u8>,
}

impl SsdpData {
    pub fn method(&self) -> Option<&str> {
        match &self.start {
            SsdpStart::Request { method, .. } => Some(method),
            SsdpStart::Response { .. } => None,
        }
    }

    /// Search target: the `ST` header, falling back to `NT` for NOTIFY.
    pub fn st(&self) -> Option<&str> {
        self.header("ST").or_else(|| self.header("NT"))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoapData {
    /// 0 = CON, 1 = NON, 2 = ACK, 3 = RST.
    pub msg_type: u8,
    pub code: u8,
    pub message_id: u16,
    pub token: Vec<u8>,
    pub options: Vec<(u16, Vec<u8>)>,
    pub payload: Vec<u8>,
}

impl CoapData {
    pub fn type_name(&self) -> Option<&'static str> {
        names::coap_msg_type_name(self.msg_type)
    }

    pub fn method_name(&self) -> Option<&'static str> {
        names::coap_method_name(self.code)
    }

    /// Uri-Path option segments joined with `/`.
    pub fn uri_path(&self) -> String {
        let segments: Vec<String> = self
            .options
            .iter()
            .filter(|(n, _)| *n == 11)
            .map(|(_, v)| String::from_utf8_lossy(v).into_owned())
            .collect();
        segments.join("/")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IgmpData {
    pub igmp_type: u8,
    pub max_resp: u8,
    pub checksum: Option<u16>,
    pub group: Ipv4Addr,
    pub rest: Vec<u8>,
}

impl IgmpData {
    pub fn type_name(&self) -> Option<&'static str> {
        names::igmp_type_name(self.igmp_type)
    }
}

/// A timestamped, layer-dissected packet. `raw` always holds the exact
/// original frame bytes; field edits require rebuilding via
/// [`Packet::from_fields`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub timestamp: Timestamp,
    pub link: EthernetHeader,
    pub layers: Vec<Layer>,
    /// Bytes after the Ethernet header that no layer represents.
    pub link_payload: Vec<u8>,
    /// Frame padding beyond the IP total length.
    pub link_trailer: Vec<u8>,
    pub raw: Vec<u8>,
    pub iface: Option<String>,
}

impl Packet {
    pub fn arp(&self) -> Option<&ArpData> {
        self.layers.iter().find_map(|l| match l {
            Layer::Arp(a) => Some(a),
            _ => None,
        })
    }

    pub fn ip(&self) -> Option<&IpData> {
        self.layers.iter().find_map(|l| match l {
            Layer::Ip(ip) => Some(ip),
            _ => None,
        })
    }

    pub fn icmp(&self) -> Option<&IcmpData> {
        self.layers.iter().find_map(|l| match l {
            Layer::Icmp(i) => Some(i),
            _ => None,
        })
    }

    pub fn transport(&self) -> Option<&TransportData> {
        self.layers.iter().find_map(|l| match l {
            Layer::Transport(t) => Some(t),
            _ => None,
        })
    }

    pub fn app(&self) -> Option<&AppData> {
        self.layers.iter().find_map(|l| match l {
            Layer::App(a) => Some(a),
            _ => None,
        })
    }

    pub fn dns(&self) -> Option<&DnsMessage> {
        match self.app() {
            Some(AppData::Dns(m)) | Some(AppData::Mdns(m)) => Some(m),
            _ => None,
        }
    }

    /// Original frame bytes, byte-exact.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.raw.clone()
    }

    /// Re-serialize from parsed fields. Equal to `raw` for packets built
    /// by [`Packet::from_fields`]; for dissected packets it is the
    /// canonical form (e.g. DNS names are written uncompressed).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        build::serialize_fields(&self.link, &self.layers, &self.link_payload, &self.link_trailer)
    }

    /// True when the structural fields (everything except `raw`, the
    /// timestamp, and the interface tag) equal those of `other`.
    pub fn fields_eq(&self, other: &Packet) -> bool {
        self.link == other.link
            && self.layers == other.layers
            && self.link_payload == other.link_payload
            && self.link_trailer == other.link_trailer
    }
}

/// A timestamp-ordered packet sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub packets: Vec<Packet>,
    pub linktype: u32,
}

impl Trace {
    pub fn new(packets: Vec<Packet>) -> Result<Trace, FormatError> {
        for i in 1..packets.len() {
            if packets[i].timestamp < packets[i - 1].timestamp {
                return Err(FormatError::NonMonotonic { index: i });
            }
        }
        Ok(Trace {
            packets,
            linktype: LINKTYPE_ETHERNET,
        })
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}
