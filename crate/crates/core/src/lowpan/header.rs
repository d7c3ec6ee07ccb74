//! Fixed-size stand-in for IPHC/NHC-compressed IPv6 + UDP headers.
//!
//! Addresses are elided against the mesh prefix (context 0) and carried as a
//! family bit plus a 16-bit suffix, so every compressed datagram costs
//! exactly [`COMPRESSED_HEADER_LEN`] bytes of overhead.
//!
//! ```text
//!  0      1      2      3..5       5..7       7      8..10      10..12     12
//! +------+------+------+----------+----------+------+----------+----------+-----+
//! | 0x7B | flags| hops | src sfx  | dst sfx  | 0xF0 | src port | dst port | ctx |
//! +------+------+------+----------+----------+------+----------+----------+-----+
//! ```

use std::net::Ipv6Addr;

use thiserror::Error;

use crate::ip::{iid_of, Prefix, UdpDatagram, GATEWAY_IID, MOTE_IID_BASE};

pub const COMPRESSED_HEADER_LEN: usize = 13;
pub const IPHC_DISPATCH: u8 = 0x7B;
const NHC_UDP: u8 = 0xF0;
const FLAG_SRC_MOTE: u8 = 0x01;
const FLAG_DST_MOTE: u8 = 0x02;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompressError {
    #[error("address {0} is outside the mesh prefix")]
    ForeignPrefix(Ipv6Addr),
    #[error("interface identifier of {0} is not compressible")]
    Iid(Ipv6Addr),
    #[error("not a compressed datagram")]
    Dispatch,
    #[error("compressed datagram truncated")]
    Truncated,
}

fn compress_addr(addr: &Ipv6Addr, prefix: Prefix) -> Result<(bool, u16), CompressError> {
    if Prefix::of(addr) != prefix {
        return Err(CompressError::ForeignPrefix(*addr));
    }
    let iid = iid_of(addr);
    if iid & !0xffff == MOTE_IID_BASE {
        Ok((true, iid as u16))
    } else if iid & !0xffff == GATEWAY_IID & !0xffff {
        Ok((false, iid as u16))
    } else {
        Err(CompressError::Iid(*addr))
    }
}

fn expand_addr(mote: bool, suffix: u16, prefix: Prefix) -> Ipv6Addr {
    let base = if mote { MOTE_IID_BASE } else { 0 };
    prefix.with_iid(base | u64::from(suffix))
}

/// Compress `d` for transmission inside the mesh.
pub fn compress(d: &UdpDatagram, prefix: Prefix) -> Result<Vec<u8>, CompressError> {
    let (src_mote, src) = compress_addr(&d.src, prefix)?;
    let (dst_mote, dst) = compress_addr(&d.dst, prefix)?;
    let mut flags = 0;
    if src_mote {
        flags |= FLAG_SRC_MOTE;
    }
    if dst_mote {
        flags |= FLAG_DST_MOTE;
    }
    let mut out = Vec::with_capacity(COMPRESSED_HEADER_LEN + d.payload.len());
    out.extend_from_slice(&[IPHC_DISPATCH, flags, d.hop_limit]);
    out.extend_from_slice(&src.to_be_bytes());
    out.extend_from_slice(&dst.to_be_bytes());
    out.push(NHC_UDP);
    out.extend_from_slice(&d.src_port.to_be_bytes());
    out.extend_from_slice(&d.dst_port.to_be_bytes());
    out.push(0);
    out.extend_from_slice(&d.payload);
    Ok(out)
}

pub fn decompress(bytes: &[u8], prefix: Prefix) -> Result<UdpDatagram, CompressError> {
    if bytes.first() != Some(&IPHC_DISPATCH) {
        return Err(CompressError::Dispatch);
    }
    if bytes.len() < COMPRESSED_HEADER_LEN || bytes[7] != NHC_UDP {
        return Err(CompressError::Truncated);
    }
    let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
    let flags = bytes[1];
    Ok(UdpDatagram {
        src: expand_addr(flags & FLAG_SRC_MOTE != 0, u16_at(3), prefix),
        dst: expand_addr(flags & FLAG_DST_MOTE != 0, u16_at(5), prefix),
        src_port: u16_at(8),
        dst_port: u16_at(10),
        hop_limit: bytes[2],
        payload: bytes[COMPRESSED_HEADER_LEN..].to_vec(),
    })
}

/// Source suffix of a compressed datagram, without full decompression.
pub fn origin_suffix(bytes: &[u8]) -> Option<u16> {
    if bytes.len() >= COMPRESSED_HEADER_LEN && bytes[0] == IPHC_DISPATCH {
        Some(u16::from_be_bytes([bytes[3], bytes[4]]))
    } else {
        None
    }
}

/// Decrement the hop limit in place; returns the new value.
pub fn decrement_hop_limit(bytes: &mut [u8]) -> Option<u8> {
    if bytes.first() != Some(&IPHC_DISPATCH) || bytes.len() < COMPRESSED_HEADER_LEN {
        return None;
    }
    bytes[2] = bytes[2].saturating_sub(1);
    Some(bytes[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ip::{gateway_address, mote_address, NodeId};

    const P: Prefix = Prefix(0xfd00_0000_0000_0000);

    fn datagram() -> UdpDatagram {
        UdpDatagram {
            src: mote_address(P, NodeId(12)),
            dst: gateway_address(P),
            src_port: 8765,
            dst_port: 5000,
            hop_limit: 64,
            payload: vec![0xAB; 20],
        }
    }

    #[test]
    fn nominal_sample_is_33_bytes() {
        let c = compress(&datagram(), P).unwrap();
        assert_eq!(c.len(), 33);
        assert_eq!(origin_suffix(&c), Some(12));
        assert_eq!(decompress(&c, P).unwrap(), datagram());
    }

    #[test]
    fn hop_limit_decrements() {
        let mut c = compress(&datagram(), P).unwrap();
        assert_eq!(decrement_hop_limit(&mut c), Some(63));
        assert_eq!(decompress(&c, P).unwrap().hop_limit, 63);
    }

    #[test]
    fn foreign_prefix_rejected() {
        let mut d = datagram();
        d.dst = "2001:db8::1".parse().unwrap();
        assert!(matches!(compress(&d, P), Err(CompressError::ForeignPrefix(_))));
        assert_eq!(decompress(&[0x41, 0, 0], P), Err(CompressError::Dispatch));
        assert_eq!(decompress(&[IPHC_DISPATCH, 0, 0], P), Err(CompressError::Truncated));
    }
}
