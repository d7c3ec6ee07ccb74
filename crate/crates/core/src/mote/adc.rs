//! 12-bit, 8-channel ADC with a 3300 mV reference.
//!
//! The conversion is generic over the scalar so the same code runs on `f64`
//! for the simulator, `f32` for constrained targets, and exact rationals
//! when the result has to be compared without rounding.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};
use thiserror::Error;

pub const ADC_CHANNELS: u8 = 8;
pub const ADC_MAX_CODE: u32 = 4095;
pub const ADC_REFERENCE_MV: u32 = 3300;

/// Scalar type the ADC can convert into.
pub trait AdcScalar: Num + FromPrimitive + PartialOrd + Clone + Debug {
    /// Round to the nearest integer, halves away from zero. `None` when the
    /// value is negative or does not fit.
    fn round_to_u32(&self) -> Option<u32>;
}

impl AdcScalar for f64 {
    fn round_to_u32(&self) -> Option<u32> {
        self.round().to_u32()
    }
}

impl AdcScalar for f32 {
    fn round_to_u32(&self) -> Option<u32> {
        self.round().to_u32()
    }
}

impl AdcScalar for Ratio<i64> {
    fn round_to_u32(&self) -> Option<u32> {
        self.round().to_integer().to_u32()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdcError {
    #[error("digital code {0} outside 0..=4095")]
    CodeOutOfRange(u32),
    #[error("ADC channel {0} outside 0..8")]
    ChannelOutOfRange(u8),
}

/// One converted channel read.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcReading<T> {
    pub channel: u8,
    pub digital: u32,
    pub millivolts: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdcModel<T> {
    reference_mv: T,
    max_code: T,
}

impl<T: AdcScalar> Default for AdcModel<T> {
    fn default() -> Self {
        Self::twelve_bit()
    }
}

impl<T: AdcScalar> AdcModel<T> {
    pub fn twelve_bit() -> Self {
        AdcModel {
            reference_mv: T::from_u32(ADC_REFERENCE_MV).expect("3300 is representable"),
            max_code: T::from_u32(ADC_MAX_CODE).expect("4095 is representable"),
        }
    }

    pub fn reference_mv(&self) -> &T {
        &self.reference_mv
    }

    /// `digital × 3300 / 4095` millivolts.
    pub fn convert(&self, digital: u32) -> Result<T, AdcError> {
        if digital > ADC_MAX_CODE {
            return Err(AdcError::CodeOutOfRange(digital));
        }
        let d = T::from_u32(digital).expect("12-bit code is representable");
        Ok(d * self.reference_mv.clone() / self.max_code.clone())
    }

    /// Clamp to `[0, 3300]` mV and round to the nearest code.
    pub fn quantize(&self, millivolts: T) -> u32 {
        let zero = T::zero();
        let clamped = if millivolts < zero {
            zero
        } else if millivolts > self.reference_mv {
            self.reference_mv.clone()
        } else {
            millivolts
        };
        let scaled = clamped * self.max_code.clone() / self.reference_mv.clone();
        scaled.round_to_u32().unwrap_or(0).min(ADC_MAX_CODE)
    }

    pub fn read(&self, channel: u8, digital: u32) -> Result<AdcReading<T>, AdcError> {
        if channel >= ADC_CHANNELS {
            return Err(AdcError::ChannelOutOfRange(channel));
        }
        Ok(AdcReading {
            channel,
            digital,
            millivolts: self.convert(digital)?,
        })
    }
}

/// Convert with the default `f64` model.
pub fn adc_convert(digital: u32) -> Result<f64, AdcError> {
    AdcModel::<f64>::twelve_bit().convert(digital)
}

/// Quantize with the default `f64` model.
pub fn adc_quantize(millivolts: f64) -> u32 {
    AdcModel::<f64>::twelve_bit().quantize(millivolts)
}
