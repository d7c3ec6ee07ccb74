//! Node addressing and the minimal IPv6/UDP codec carried over the serial
//! bridge.

use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use thiserror::Error;

/// UDP port the gateway's control process listens on.
pub const SAMPLE_PORT: u16 = 5000;
/// Source port used by the motes' UDP process.
pub const MOTE_PORT: u16 = 8765;
pub const DEFAULT_HOP_LIMIT: u8 = 64;

/// Interface identifier family for motes: `0212:4b00:0000:<node id>`.
pub const MOTE_IID_BASE: u64 = 0x0212_4b00_0000_0000;
/// Interface identifier of the gateway host on the tun side.
pub const GATEWAY_IID: u64 = 0x0000_0000_0000_0001;

const IPV6_HEADER_LEN: usize = 40;
const UDP_HEADER_LEN: usize = 8;
const NEXT_HEADER_UDP: u8 = 17;

/// 16-bit radio node identifier. Also the low 16 bits of a mote's address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A /64 routing prefix (the upper half of an IPv6 address).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix(pub u64);

impl Prefix {
    pub fn with_iid(self, iid: u64) -> Ipv6Addr {
        Ipv6Addr::from((u128::from(self.0) << 64) | u128::from(iid))
    }

    pub fn of(addr: &Ipv6Addr) -> Prefix {
        Prefix((u128::from(*addr) >> 64) as u64)
    }

    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(b: [u8; 8]) -> Prefix {
        Prefix(u64::from_be_bytes(b))
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/64", self.with_iid(0))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid /64 prefix `{0}`")]
pub struct PrefixParseError(String);

impl FromStr for Prefix {
    type Err = PrefixParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let addr = s.strip_suffix("/64").unwrap_or(s);
        let ip: Ipv6Addr = addr.parse().map_err(|_| PrefixParseError(s.to_string()))?;
        if u128::from(ip) as u64 != 0 {
            return Err(PrefixParseError(s.to_string()));
        }
        Ok(Prefix::of(&ip))
    }
}

pub fn mote_address(prefix: Prefix, node: NodeId) -> Ipv6Addr {
    prefix.with_iid(MOTE_IID_BASE | u64::from(node.0))
}

pub fn gateway_address(prefix: Prefix) -> Ipv6Addr {
    prefix.with_iid(GATEWAY_IID)
}

pub fn iid_of(addr: &Ipv6Addr) -> u64 {
    u128::from(*addr) as u64
}

/// Mote identity as seen by the gateway: the 16-bit address suffix.
pub fn mote_id_of(addr: &Ipv6Addr) -> u16 {
    u128::from(*addr) as u16
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IpError {
    #[error("packet truncated ({0} bytes)")]
    Truncated(usize),
    #[error("not an IPv6 packet (version {0})")]
    Version(u8),
    #[error("next header {0} is not UDP")]
    NotUdp(u8),
    #[error("length fields disagree with packet size")]
    Length,
    #[error("UDP checksum mismatch")]
    Checksum,
}

/// A UDP datagram with its IPv6 envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub hop_limit: u8,
    pub payload: Vec<u8>,
}

fn udp_checksum(src: &Ipv6Addr, dst: &Ipv6Addr, udp: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut add = |bytes: &[u8]| {
        for chunk in bytes.chunks(2) {
            let word = if chunk.len() == 2 {
                u16::from_be_bytes([chunk[0], chunk[1]])
            } else {
                u16::from_be_bytes([chunk[0], 0])
            };
            sum += u32::from(word);
        }
    };
    add(&src.octets());
    add(&dst.octets());
    add(&(udp.len() as u32).to_be_bytes());
    add(&[0, 0, 0, NEXT_HEADER_UDP]);
    add(udp);
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    match !(sum as u16) {
        0 => 0xffff,
        c => c,
    }
}

impl UdpDatagram {
    pub fn wire_len(&self) -> usize {
        IPV6_HEADER_LEN + UDP_HEADER_LEN + self.payload.len()
    }

    /// Full IPv6 + UDP packet, as written to the tun side of the bridge.
    pub fn to_ipv6_bytes(&self) -> Vec<u8> {
        let udp_len = UDP_HEADER_LEN + self.payload.len();
        let mut out = Vec::with_capacity(IPV6_HEADER_LEN + udp_len);
        out.extend_from_slice(&[0x60, 0, 0, 0]);
        out.extend_from_slice(&(udp_len as u16).to_be_bytes());
        out.push(NEXT_HEADER_UDP);
        out.push(self.hop_limit);
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());

        let mut udp = Vec::with_capacity(udp_len);
        udp.extend_from_slice(&self.src_port.to_be_bytes());
        udp.extend_from_slice(&self.dst_port.to_be_bytes());
        udp.extend_from_slice(&(udp_len as u16).to_be_bytes());
        udp.extend_from_slice(&[0, 0]);
        udp.extend_from_slice(&self.payload);
        let csum = udp_checksum(&self.src, &self.dst, &udp);
        udp[6..8].copy_from_slice(&csum.to_be_bytes());
        out.extend_from_slice(&udp);
        out
    }

    pub fn from_ipv6_bytes(bytes: &[u8]) -> Result<Self, IpError> {
        if bytes.len() < IPV6_HEADER_LEN + UDP_HEADER_LEN {
            return Err(IpError::Truncated(bytes.len()));
        }
        let version = bytes[0] >> 4;
        if version != 6 {
            return Err(IpError::Version(version));
        }
        if bytes[6] != NEXT_HEADER_UDP {
            return Err(IpError::NotUdp(bytes[6]));
        }
        let payload_len = usize::from(u16::from_be_bytes([bytes[4], bytes[5]]));
        if payload_len != bytes.len() - IPV6_HEADER_LEN {
            return Err(IpError::Length);
        }
        let hop_limit = bytes[7];
        let src = Ipv6Addr::from(<[u8; 16]>::try_from(&bytes[8..24]).expect("16 bytes"));
        let dst = Ipv6Addr::from(<[u8; 16]>::try_from(&bytes[24..40]).expect("16 bytes"));
        let udp = &bytes[IPV6_HEADER_LEN..];
        let udp_len = usize::from(u16::from_be_bytes([udp[4], udp[5]]));
        if udp_len != udp.len() {
            return Err(IpError::Length);
        }
        let mut zeroed = udp.to_vec();
        zeroed[6] = 0;
        zeroed[7] = 0;
        let expect = udp_checksum(&src, &dst, &zeroed);
        if u16::from_be_bytes([udp[6], udp[7]]) != expect {
            return Err(IpError::Checksum);
        }
        Ok(UdpDatagram {
            src,
            dst,
            src_port: u16::from_be_bytes([udp[0], udp[1]]),
            dst_port: u16::from_be_bytes([udp[2], udp[3]]),
            hop_limit,
            payload: udp[UDP_HEADER_LEN..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> UdpDatagram {
        let p: Prefix = "fd00::".parse().unwrap();
        UdpDatagram {
            src: mote_address(p, NodeId(7)),
            dst: gateway_address(p),
            src_port: MOTE_PORT,
            dst_port: SAMPLE_PORT,
            hop_limit: 62,
            payload: (0u8..20).collect(),
        }
    }

    #[test]
    fn prefix_parsing() {
        let p: Prefix = "fd00::/64".parse().unwrap();
        assert_eq!(p, Prefix(0xfd00_0000_0000_0000));
        assert_eq!(p.to_string(), "fd00::/64");
        assert!("fd00::1".parse::<Prefix>().is_err());
        assert!("nonsense".parse::<Prefix>().is_err());
    }

    #[test]
    fn addresses_carry_node_suffix() {
        let p = Prefix(0xaaaa_0000_0000_0000);
        let a = mote_address(p, NodeId(0x1234));
        assert_eq!(a.to_string(), "aaaa::212:4b00:0:1234");
        assert_eq!(mote_id_of(&a), 0x1234);
        assert_eq!(gateway_address(p).to_string(), "aaaa::1");
        assert_eq!(Prefix::of(&a), p);
    }

    #[test]
    fn ipv6_udp_roundtrip() {
        let d = sample();
        let bytes = d.to_ipv6_bytes();
        assert_eq!(bytes.len(), 68);
        assert_eq!(d.wire_len(), 68);
        assert_eq!(bytes[0], 0x60);
        assert_eq!(&bytes[42..44], &SAMPLE_PORT.to_be_bytes());
        assert_eq!(UdpDatagram::from_ipv6_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let mut bytes = sample().to_ipv6_bytes();
        bytes[60] ^= 0x40;
        assert_eq!(UdpDatagram::from_ipv6_bytes(&bytes), Err(IpError::Checksum));
        let short = &sample().to_ipv6_bytes()[..30];
        assert_eq!(UdpDatagram::from_ipv6_bytes(short), Err(IpError::Truncated(30)));
    }
}
