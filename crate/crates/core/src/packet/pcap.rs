//! Classic pcap reading and writing. Both byte orders and both the
//! microsecond and nanosecond magics are accepted; only Ethernet link
//! type is supported.

use super::{dissect, FormatError, Timestamp, Trace};

pub const LINKTYPE_ETHERNET: u32 = 1;

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    swapped: bool,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or(FormatError::Truncated(what))?;
        self.pos += 4;
        let v = u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        Ok(if self.swapped { v.swap_bytes() } else { v })
    }

    fn skip(&mut self, n: usize, what: &'static str) -> Result<(), FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated(what));
        }
        self.pos += n;
        Ok(())
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(FormatError::Truncated(what))?;
        self.pos += n;
        Ok(chunk)
    }
}

/// Read a classic pcap capture into a trace.
pub fn read_pcap(bytes: &[u8]) -> Result<Trace, FormatError> {
    if bytes.len() < 24 {
        return Err(FormatError::Truncated("pcap header"));
    }
    let magic_be = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (swapped, nanos) = match magic_be {
        MAGIC_USEC => (false, false),
        MAGIC_NSEC => (false, true),
        m if m.swap_bytes() == MAGIC_USEC => (true, false),
        m if m.swap_bytes() == MAGIC_NSEC => (true, true),
        m => return Err(FormatError::BadMagic(m)),
    };

    let mut r = Reader {
        bytes,
        pos: 4,
        swapped,
    };
    r.skip(4, "pcap header")?; // version
    r.skip(8, "pcap header")?; // thiszone + sigfigs
    r.skip(4, "pcap header")?; // snaplen
    let linktype = r.u32("pcap header")? & 0x0fff_ffff;
    if linktype != LINKTYPE_ETHERNET {
        return Err(FormatError::BadLinkType(linktype));
    }

    let mut packets = Vec::new();
    while r.pos < bytes.len() {
        let ts_sec = r.u32("record header")?;
        let ts_frac = r.u32("record header")?;
        let incl_len = r.u32("record header")? as usize;
        let _orig_len = r.u32("record header")?;
        let data = r.take(incl_len, "record data")?;
        let nanos = if nanos { ts_frac } else { ts_frac.saturating_mul(1000) };
        let ts = Timestamp::new(ts_sec as u64, nanos);
        packets.push(dissect(data, ts)?);
    }
    Trace::new(packets)
}

/// Write a trace as classic pcap (big-endian, microsecond timestamps,
/// nanosecond magic when any packet needs sub-microsecond precision).
pub fn write_pcap(trace: &Trace) -> Vec<u8> {
    let nanos = trace.packets.iter().any(|p| p.timestamp.nanos % 1000 != 0);
    let magic = if nanos { MAGIC_NSEC } else { MAGIC_USEC };
    let mut out = Vec::with_capacity(24 + trace.packets.len() * 64);
    out.extend_from_slice(&magic.to_be_bytes());
    out.extend_from_slice(&2u16.to_be_bytes());
    out.extend_from_slice(&4u16.to_be_bytes());
    out.extend_from_slice(&[0; 8]);
    out.extend_from_slice(&262_144u32.to_be_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_be_bytes());
    for packet in &trace.packets {
        let frac = if nanos {
            packet.timestamp.nanos
        } else {
            packet.timestamp.nanos / 1000
        };
        out.extend_from_slice(&(packet.timestamp.secs as u32).to_be_bytes());
        out.extend_from_slice(&frac.to_be_bytes());
        out.extend_from_slice(&(packet.raw.len() as u32).to_be_bytes());
        out.extend_from_slice(&(packet.raw.len() as u32).to_be_bytes());
        out.extend_from_slice(&packet.raw);
    }
    out
}
