//! Protocol name tables shared between the profile language and the
//! packet dissector.

/// DNS record type names used in profiles and the JSONL schema.
pub const DNS_QTYPES: &[(&str, u16)] = &[
    ("A", 1),
    ("NS", 2),
    ("CNAME", 5),
    ("SOA", 6),
    ("PTR", 12),
    ("MX", 15),
    ("TXT", 16),
    ("AAAA", 28),
    ("SRV", 33),
    ("OPT", 41),
    ("ANY", 255),
];

pub fn dns_qtype_number(name: &str) -> Option<u16> {
    let upper = name.to_ascii_uppercase();
    DNS_QTYPES.iter().find(|(n, _)| *n == upper).map(|(_, v)| *v)
}

pub fn dns_qtype_name(number: u16) -> Option<&'static str> {
    DNS_QTYPES.iter().find(|(_, v)| *v == number).map(|(n, _)| *n)
}

pub const ICMPV4_TYPES: &[(&str, u8)] = &[
    ("echo-reply", 0),
    ("destination-unreachable", 3),
    ("redirect", 5),
    ("echo-request", 8),
    ("router-advertisement", 9),
    ("router-solicitation", 10),
    ("time-exceeded", 11),
];

pub const ICMPV6_TYPES: &[(&str, u8)] = &[
    ("destination-unreachable", 1),
    ("time-exceeded", 3),
    ("echo-request", 128),
    ("echo-reply", 129),
    ("router-solicitation", 133),
    ("router-advertisement", 134),
    ("neighbor-solicitation", 135),
    ("neighbor-advertisement", 136),
    ("redirect", 137),
];

pub fn icmp_type_name(v6: bool, number: u8) -> Option<&'static str> {
    let table = if v6 { ICMPV6_TYPES } else { ICMPV4_TYPES };
    table.iter().find(|(_, v)| *v == number).map(|(n, _)| *n)
}

pub fn icmp_type_number(v6: bool, name: &str) -> Option<u8> {
    let table = if v6 { ICMPV6_TYPES } else { ICMPV4_TYPES };
    table.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

pub const DHCP_MESSAGE_TYPES: &[(&str, u8)] = &[
    ("discover", 1),
    ("offer", 2),
    ("request", 3),
    ("decline", 4),
    ("ack", 5),
    ("nak", 6),
    ("release", 7),
    ("inform", 8),
];

pub fn dhcp_message_type_name(number: u8) -> Option<&'static str> {
    DHCP_MESSAGE_TYPES.iter().find(|(_, v)| *v == number).map(|(n, _)| *n)
}

pub fn dhcp_message_type_number(name: &str) -> Option<u8> {
    DHCP_MESSAGE_TYPES.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

pub const IGMP_TYPES: &[(&str, u8)] = &[
    ("membership-query", 0x11),
    ("v1-membership-report", 0x12),
    ("membership-report", 0x16),
    ("leave-group", 0x17),
    ("v3-membership-report", 0x22),
];

pub fn igmp_type_name(number: u8) -> Option<&'static str> {
    IGMP_TYPES.iter().find(|(_, v)| *v == number).map(|(n, _)| *n)
}

pub fn igmp_type_number(name: &str) -> Option<u8> {
    IGMP_TYPES.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

pub const COAP_MSG_TYPES: &[(&str, u8)] = &[("CON", 0), ("NON", 1), ("ACK", 2), ("RST", 3)];

pub fn coap_msg_type_name(number: u8) -> Option<&'static str> {
    COAP_MSG_TYPES.iter().find(|(_, v)| *v == number).map(|(n, _)| *n)
}

pub const COAP_METHODS: &[(&str, u8)] = &[("GET", 1), ("POST", 2), ("PUT", 3), ("DELETE", 4)];

pub fn coap_method_name(code: u8) -> Option<&'static str> {
    COAP_METHODS.iter().find(|(_, v)| *v == code).map(|(n, _)| *n)
}

pub fn coap_method_code(name: &str) -> Option<u8> {
    let upper = name.to_ascii_uppercase();
    COAP_METHODS.iter().find(|(n, _)| *n == upper).map(|(_, v)| *v)
}
