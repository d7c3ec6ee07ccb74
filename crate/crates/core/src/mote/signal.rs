use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::adc::ADC_REFERENCE_MV;
use crate::kernel::SimTime;

const HOUR_MS: f64 = 3_600_000.0;

/// Synthetic electrode voltage for one ADC channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GasSignalModel {
    pub baseline_mv: f64,
    pub amplitude_mv: f64,
    pub period_ms: f64,
    pub phase_rad: f64,
    pub noise_sigma_mv: f64,
    pub drift_mv_per_hour: f64,
}

impl Default for GasSignalModel {
    fn default() -> Self {
        GasSignalModel {
            baseline_mv: 225.0,
            amplitude_mv: 50.0,
            period_ms: HOUR_MS,
            phase_rad: 0.0,
            noise_sigma_mv: 2.0,
            drift_mv_per_hour: 0.0,
        }
    }
}

impl GasSignalModel {
    /// Flat, noiseless signal.
    pub fn constant(mv: f64) -> Self {
        GasSignalModel {
            baseline_mv: mv,
            amplitude_mv: 0.0,
            noise_sigma_mv: 0.0,
            ..Default::default()
        }
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }

    /// Analog value at `t`, clamped to the ADC input range.
    pub fn sample<R: Rng + ?Sized>(&self, t: SimTime, rng: &mut R) -> f64 {
        let ms = t.as_millis() as f64;
        let mut v = self.baseline_mv + self.drift_mv_per_hour * ms / HOUR_MS;
        if self.amplitude_mv != 0.0 && self.period_ms > 0.0 {
            v += self.amplitude_mv * (TAU * ms / self.period_ms + self.phase_rad).sin();
        }
        if self.noise_sigma_mv > 0.0 {
            let n = Normal::new(0.0, self.noise_sigma_mv).expect("positive sigma");
            v += n.sample(rng);
        }
        v.clamp(0.0, f64::from(ADC_REFERENCE_MV))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = GasSignalModel::constant(1650.402930);
        for t in [0, 4000, 1_800_000, 7_200_000] {
            assert_eq!(m.sample(SimTime(t), &mut rng), 1650.402930);
        }
    }

    #[test]
    fn output_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let high = GasSignalModel {
            baseline_mv: 3290.0,
            amplitude_mv: 100.0,
            noise_sigma_mv: 50.0,
            ..Default::default()
        };
        let low = GasSignalModel {
            baseline_mv: 5.0,
            drift_mv_per_hour: -10.0,
            ..high.clone()
        };
        for t in (0..200).map(|i| SimTime(i * 60_000)) {
            let h = high.sample(t, &mut rng);
            let l = low.sample(t, &mut rng);
            assert!((0.0..=3300.0).contains(&h));
            assert!((0.0..=3300.0).contains(&l));
        }
    }

    #[test]
    fn default_signal_stays_near_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = GasSignalModel::default();
        for t in (0..900).map(|i| SimTime(i * 4000)) {
            let v = m.sample(t, &mut rng);
            assert!((150.0..300.0).contains(&v), "{v}");
        }
    }
}
