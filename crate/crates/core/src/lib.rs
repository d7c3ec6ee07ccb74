//! Deterministic discrete-event simulator for an air-quality sensor mesh.
//!
//! Gas-sensor motes sample four ADC channels every 4 s and send a 20-byte
//! record over an RPL/6LoWPAN mesh to a border router. The border router
//! bridges to a gateway host over SLIP; the gateway journals every record,
//! buffers it in a bounded producer/consumer queue and uploads to a cloud
//! ingest service that deduplicates on `(mote, counter)`.

pub mod border_router;
pub mod cloud;
pub mod gateway;
pub mod ip;
pub mod kernel;
pub mod lowpan;
pub mod mote;
pub mod network;
pub mod rpl;
pub mod scenario;
pub mod slip;

pub use ip::{NodeId, Prefix};
pub use kernel::{EntityId, Kernel, SimTime};
pub use mote::record::SampleRecord;

/// Millivolt scalar used throughout the simulator.
pub type Millivolts = f64;
/// ADC conversion on `f64`.
pub type Adc = mote::adc::AdcModel<f64>;
/// ADC conversion on `f32`.
pub type Adc32 = mote::adc::AdcModel<f32>;
/// ADC conversion on exact rationals.
pub type ExactAdc = mote::adc::AdcModel<num_rational::Ratio<i64>>;
