use thiserror::Error;

use super::adc::{ADC_CHANNELS, ADC_MAX_CODE};

/// Serialized size of one sample.
pub const SAMPLE_WIRE_LEN: usize = 20;

/// ADC channels the two gas sensors are wired to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorChannelMap {
    pub no2_we: u8,
    pub no2_ae: u8,
    pub o3_we: u8,
    pub o3_ae: u8,
}

impl Default for SensorChannelMap {
    fn default() -> Self {
        SensorChannelMap {
            no2_we: 1,
            no2_ae: 2,
            o3_we: 4,
            o3_ae: 5,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelMapError {
    #[error("channel {0} outside 0..8")]
    OutOfRange(u8),
    #[error("channel {0} assigned twice")]
    Duplicate(u8),
}

impl SensorChannelMap {
    /// Channels in wire order: NO2 WE, NO2 AE, O3 WE, O3 AE.
    pub fn channels(&self) -> [u8; 4] {
        [self.no2_we, self.no2_ae, self.o3_we, self.o3_ae]
    }

    pub fn validate(&self) -> Result<(), ChannelMapError> {
        let ch = self.channels();
        for (i, &c) in ch.iter().enumerate() {
            if c >= ADC_CHANNELS {
                return Err(ChannelMapError::OutOfRange(c));
            }
            if ch[..i].contains(&c) {
                return Err(ChannelMapError::Duplicate(c));
            }
        }
        Ok(())
    }
}

/// One four-channel sample as it travels from mote to cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRecord {
    pub counter: u32,
    pub no2_we: u32,
    pub no2_ae: u32,
    pub o3_we: u32,
    pub o3_ae: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("sample payload is {0} bytes, expected 20")]
    Length(usize),
    #[error("channel value {0} exceeds the 12-bit range")]
    ChannelRange(u32),
}

impl SampleRecord {
    pub fn new(counter: u32, channels: [u32; 4]) -> Self {
        let [no2_we, no2_ae, o3_we, o3_ae] = channels;
        SampleRecord {
            counter,
            no2_we,
            no2_ae,
            o3_we,
            o3_ae,
        }
    }

    pub fn channels(&self) -> [u32; 4] {
        [self.no2_we, self.no2_ae, self.o3_we, self.o3_ae]
    }

    /// Counter then the four channels, each a big-endian `u32`.
    pub fn to_bytes(&self) -> [u8; SAMPLE_WIRE_LEN] {
        let mut out = [0u8; SAMPLE_WIRE_LEN];
        out[..4].copy_from_slice(&self.counter.to_be_bytes());
        for (i, v) in self.channels().iter().enumerate() {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RecordError> {
        if bytes.len() != SAMPLE_WIRE_LEN {
            return Err(RecordError::Length(bytes.len()));
        }
        let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let channels = [word(1), word(2), word(3), word(4)];
        if let Some(&bad) = channels.iter().find(|&&v| v > ADC_MAX_CODE) {
            return Err(RecordError::ChannelRange(bad));
        }
        Ok(SampleRecord::new(word(0), channels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_record_is_twenty_zero_bytes() {
        assert_eq!(SampleRecord::new(0, [0; 4]).to_bytes(), [0u8; 20]);
    }

    #[test]
    fn full_scale_layout() {
        let bytes = SampleRecord::new(1, [4095; 4]).to_bytes();
        let mut expect = vec![0x00, 0x00, 0x00, 0x01];
        for _ in 0..4 {
            expect.extend_from_slice(&[0x00, 0x00, 0x0F, 0xFF]);
        }
        assert_eq!(bytes.to_vec(), expect);
    }

    #[test]
    fn wrong_length_or_range_rejected() {
        assert_eq!(SampleRecord::from_bytes(&[0; 19]), Err(RecordError::Length(19)));
        let mut bytes = SampleRecord::new(3, [1, 2, 3, 4]).to_bytes();
        bytes[19] = 0xff;
        bytes[18] = 0xff;
        assert_eq!(SampleRecord::from_bytes(&bytes), Err(RecordError::ChannelRange(0xffff)));
    }

    #[test]
    fn default_channel_map() {
        let map = SensorChannelMap::default();
        assert_eq!(map.channels(), [1, 2, 4, 5]);
        assert_eq!(map.validate(), Ok(()));
        let dup = SensorChannelMap { o3_ae: 1, ..map };
        assert_eq!(dup.validate(), Err(ChannelMapError::Duplicate(1)));
        let bad = SensorChannelMap { no2_we: 9, ..map };
        assert_eq!(bad.validate(), Err(ChannelMapError::OutOfRange(9)));
    }

    proptest! {
        #[test]
        fn roundtrip(counter in any::<u32>(), ch in prop::array::uniform4(0u32..=4095)) {
            let r = SampleRecord::new(counter, ch);
            let bytes = r.to_bytes();
            prop_assert_eq!(bytes.len(), SAMPLE_WIRE_LEN);
            prop_assert_eq!(SampleRecord::from_bytes(&bytes).unwrap(), r);
        }
    }
}
