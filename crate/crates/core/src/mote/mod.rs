//! Sensor mote: gas-sensor channels, ADC, and the two cooperating processes
//! (ADC sampler and UDP server) that turn a sample into a datagram.

pub mod adc;
pub mod process;
pub mod record;
pub mod signal;

use std::net::Ipv6Addr;

use rand::Rng;

use crate::ip::{NodeId, UdpDatagram, DEFAULT_HOP_LIMIT, MOTE_PORT, SAMPLE_PORT};
use crate::kernel::SimTime;
use adc::AdcModel;
use process::{ProcessError, ProcessKernel, ADC_PROCESS, UDP_SERVER_PROCESS};
use record::{SampleRecord, SensorChannelMap};
use signal::GasSignalModel;

pub const DEFAULT_SAMPLE_PERIOD_MS: u64 = 4000;
/// First-sample jitter is drawn from `[0, MAX_PHASE_JITTER_MS)`.
pub const MAX_PHASE_JITTER_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct MoteConfig {
    pub period_ms: u64,
    /// Offset of the sampling grid; sample `k` fires at `phase + (k+1)·period`.
    pub phase_ms: u64,
    /// Stop after this many samples.
    pub sample_limit: Option<u64>,
    pub channels: SensorChannelMap,
    /// Signal per channel, in wire order (NO2 WE, NO2 AE, O3 WE, O3 AE).
    pub signals: [GasSignalModel; 4],
}

impl Default for MoteConfig {
    fn default() -> Self {
        let base = GasSignalModel::default();
        MoteConfig {
            period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            phase_ms: 0,
            sample_limit: None,
            channels: SensorChannelMap::default(),
            signals: [
                base.clone(),
                base.clone().with_phase(0.5),
                base.clone().with_phase(1.0),
                base.with_phase(1.5),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoteEvent {
    AdcSample(SampleRecord),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoteStats {
    pub generated: u64,
    pub submitted: u64,
    pub dropped_no_route: u64,
    pub counter_wraps: u64,
    pub min_interval_ms: Option<u64>,
    pub max_interval_ms: Option<u64>,
}

/// Where the UDP process should send; `None` means no upward route yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpRoute {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

#[derive(Debug, Clone)]
pub struct Mote {
    id: NodeId,
    config: MoteConfig,
    adc: AdcModel<f64>,
    kernel: ProcessKernel<MoteEvent>,
    counter: u32,
    last_sample_at: Option<SimTime>,
    stats: MoteStats,
}

impl Mote {
    pub fn new(id: NodeId, config: MoteConfig) -> Self {
        let mut kernel = ProcessKernel::default();
        kernel.register(ADC_PROCESS);
        kernel.register(UDP_SERVER_PROCESS);
        Mote {
            id,
            config,
            adc: AdcModel::twelve_bit(),
            kernel,
            counter: 0,
            last_sample_at: None,
            stats: MoteStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &MoteConfig {
        &self.config
    }

    pub fn stats(&self) -> &MoteStats {
        &self.stats
    }

    pub fn counter(&self) -> u32 {
        self.counter
    }

    /// When the next sample is due, or `None` once the sample limit is hit.
    pub fn next_sample_at(&self) -> Option<SimTime> {
        let k = self.stats.generated;
        if self.config.sample_limit.is_some_and(|limit| k >= limit) {
            return None;
        }
        Some(SimTime(self.config.phase_ms + (k + 1) * self.config.period_ms))
    }

    /// Read the four mapped channels, bump the counter, and post the record
    /// to the UDP server process.
    pub fn sample_adc<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Result<SampleRecord, ProcessError> {
        let mut values = [0u32; 4];
        for (v, signal) in values.iter_mut().zip(&self.config.signals) {
            *v = self.adc.quantize(signal.sample(now, rng));
        }
        let record = SampleRecord::new(self.counter, values);
        self.kernel
            .post(ADC_PROCESS, UDP_SERVER_PROCESS, MoteEvent::AdcSample(record))?;

        self.counter = self.counter.wrapping_add(1);
        if self.counter == 0 {
            self.stats.counter_wraps += 1;
        }
        self.stats.generated += 1;
        if let Some(prev) = self.last_sample_at {
            let gap = now - prev;
            self.stats.min_interval_ms = Some(self.stats.min_interval_ms.map_or(gap, |m| m.min(gap)));
            self.stats.max_interval_ms = Some(self.stats.max_interval_ms.map_or(gap, |m| m.max(gap)));
        }
        self.last_sample_at = Some(now);
        Ok(record)
    }

    /// Run the kernel dispatch loop until the event queue is empty.
    pub fn run_processes(&mut self, route: Option<UdpRoute>) -> Vec<UdpDatagram> {
        let mut out = Vec::new();
        while let Some(ev) = self.kernel.next_event() {
            match (ev.target, ev.payload) {
                (UDP_SERVER_PROCESS, MoteEvent::AdcSample(record)) => {
                    if let Some(d) = self.udp_send_sample(record, route) {
                        out.push(d);
                    }
                }
                (_, MoteEvent::AdcSample(_)) => {}
            }
        }
        out
    }

    /// Sample, then let the UDP server process handle the posted record.
    pub fn on_sample_timer<R: Rng + ?Sized>(
        &mut self,
        now: SimTime,
        rng: &mut R,
        route: Option<UdpRoute>,
    ) -> Vec<UdpDatagram> {
        self.sample_adc(now, rng)
            .expect("mote processes are registered at construction");
        self.run_processes(route)
    }

    /// Form the UDP datagram for `record`; counts a drop when there is no route.
    pub fn udp_send_sample(&mut self, record: SampleRecord, route: Option<UdpRoute>) -> Option<UdpDatagram> {
        let Some(route) = route else {
            self.stats.dropped_no_route += 1;
            return None;
        };
        self.stats.submitted += 1;
        Some(UdpDatagram {
            src: route.src,
            dst: route.dst,
            src_port: MOTE_PORT,
            dst_port: SAMPLE_PORT,
            hop_limit: DEFAULT_HOP_LIMIT,
            payload: record.to_bytes().to_vec(),
        })
    }
}
