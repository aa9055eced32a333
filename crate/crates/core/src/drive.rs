//! Synthesis of the time-dependent microwave field V(t): rectangular SRT
//! two-tone drives, Gaussian-enveloped STIRAP drives, resonant pi pulses,
//! clipping, pointwise evaluation and waveform sampling/export.
//!
//! Tones are specified by the resonant Rabi frequency they should drive on
//! their addressed transition; the conversion to a field amplitude in Gauss
//! goes through a [`FieldConversion`] factor whose analytic seed is
//! `B_x = sqrt(2) * Omega / gamma_e` (spin-1 matrix element 1/sqrt(2) and the
//! rotating-wave factor 1/2 combine to `Omega = gamma_e B_x / sqrt(2)`).

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nv::TransitionSet;

/// Amplitude envelope of a single tone. Values are in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// Constant 1 on [t_on, t_off), 0 elsewhere.
    Rect { t_on_us: f64, t_off_us: f64 },
    /// Gaussian centred at `mu` with RMS width `sigma`, identically zero
    /// outside [mu - half_width, mu + half_width]. The default half width is
    /// 4 sigma, giving the total window w = 8 sigma.
    Gaussian { mu_us: f64, sigma_us: f64, half_width_us: f64 },
}

impl Envelope {
    pub fn gaussian(mu_us: f64, sigma_us: f64) -> Self {
        Envelope::Gaussian { mu_us, sigma_us, half_width_us: 4.0 * sigma_us }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Rect { t_on_us, t_off_us } => {
                if t >= t_on_us && t < t_off_us {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::Gaussian { mu_us, sigma_us, half_width_us } => {
                let dt = t - mu_us;
                if dt.abs() > half_width_us {
                    0.0
                } else {
                    (-dt * dt / (2.0 * sigma_us * sigma_us)).exp()
                }
            }
        }
    }

    /// Last time at which the envelope can be nonzero.
    pub fn support_end(&self) -> f64 {
        match *self {
            Envelope::Rect { t_off_us, .. } => t_off_us,
            Envelope::Gaussian { mu_us, half_width_us, .. } => mu_us + half_width_us,
        }
    }
}

/// Which one-photon transition a tone addresses (bookkeeping for detuning
/// and amplitude conversion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    Minus,
    Plus,
}

impl Transition {
    pub fn name(self) -> &'static str {
        match self {
            Transition::Minus => "minus",
            Transition::Plus => "plus",
        }
    }
}

/// One microwave tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Carrier frequency, MHz.
    pub carrier_mhz: f64,
    /// Resonant Rabi frequency the tone drives on its addressed transition, MHz.
    pub rabi_mhz: f64,
    /// Carrier phase at t = 0, radians.
    pub phase_rad: f64,
    pub envelope: Envelope,
    pub target: Transition,
}

/// Rabi-frequency-to-field factors, Gauss per MHz of Rabi frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConversion {
    pub minus_g_per_mhz: f64,
    pub plus_g_per_mhz: f64,
}

impl FieldConversion {
    /// Analytic seed `sqrt(2)/gamma_e` for both transitions.
    pub fn analytic(gamma_e_mhz_per_g: f64) -> Self {
        let f = 2.0_f64.sqrt() / gamma_e_mhz_per_g;
        FieldConversion { minus_g_per_mhz: f, plus_g_per_mhz: f }
    }

    pub fn factor(&self, t: Transition) -> f64 {
        match t {
            Transition::Minus => self.minus_g_per_mhz,
            Transition::Plus => self.plus_g_per_mhz,
        }
    }
}

/// A complete drive field: a set of tones plus the Rabi-to-field conversion
/// and an optional clip time. Immutable; evaluation is a pure function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub tones: Vec<Tone>,
    pub conversion: FieldConversion,
    /// If set, V(t) is forced to 0 for t >= clip_at_us.
    pub clip_at_us: Option<f64>,
}

fn check_carrier(carrier_mhz: f64) -> Result<()> {
    if !carrier_mhz.is_finite() || carrier_mhz <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "carrier_mhz",
            reason: format!("carrier must be positive, got {carrier_mhz}"),
        });
    }
    Ok(())
}

impl DriveSpec {
    pub fn empty(conversion: FieldConversion) -> Self {
        DriveSpec { tones: Vec::new(), conversion, clip_at_us: None }
    }

    /// Two-tone SRT drive: rectangular tones on [0, tau) with carriers
    /// `omega_-/+ - Delta - delta_-/+`, switching on and off together.
    #[allow(clippy::too_many_arguments)]
    pub fn srt(
        ts: &TransitionSet,
        conversion: FieldConversion,
        delta_mhz: f64,
        delta_minus_mhz: f64,
        delta_plus_mhz: f64,
        omega_minus_mhz: f64,
        omega_plus_mhz: f64,
        phase_rad: f64,
        tau_us: f64,
    ) -> Result<Self> {
        if !tau_us.is_finite() || tau_us <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "tau_us",
                reason: format!("pulse length must be positive, got {tau_us}"),
            });
        }
        let env = Envelope::Rect { t_on_us: 0.0, t_off_us: tau_us };
        let cm = ts.omega_minus_mhz - delta_mhz - delta_minus_mhz;
        let cp = ts.omega_plus_mhz - delta_mhz - delta_plus_mhz;
        check_carrier(cm)?;
        check_carrier(cp)?;
        Ok(DriveSpec {
            tones: vec![
                Tone {
                    carrier_mhz: cm,
                    rabi_mhz: omega_minus_mhz,
                    phase_rad: 0.0,
                    envelope: env,
                    target: Transition::Minus,
                },
                Tone {
                    carrier_mhz: cp,
                    rabi_mhz: omega_plus_mhz,
                    phase_rad,
                    envelope: env,
                    target: Transition::Plus,
                },
            ],
            conversion,
            clip_at_us: None,
        })
    }

    /// Counter-intuitively ordered STIRAP drive: Gaussian tones with carriers
    /// `omega_-/+ - delta_-/+`, the plus tone peaking first. The origin is
    /// chosen so the earliest nonzero sample sits at t = 0 (`mu_+ = 4 sigma`),
    /// and the total sequence length is `Lambda + 8 sigma`.
    #[allow(clippy::too_many_arguments)]
    pub fn stirap(
        ts: &TransitionSet,
        conversion: FieldConversion,
        delta_minus_mhz: f64,
        delta_plus_mhz: f64,
        omega_minus_mhz: f64,
        omega_plus_mhz: f64,
        phase_rad: f64,
        sigma_us: f64,
        lambda_us: f64,
    ) -> Result<Self> {
        if !sigma_us.is_finite() || sigma_us <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma_us",
                reason: format!("pulse width must be positive, got {sigma_us}"),
            });
        }
        if !lambda_us.is_finite() || lambda_us < 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda_us",
                reason: format!("pulse separation must be >= 0, got {lambda_us}"),
            });
        }
        let mu_plus = 4.0 * sigma_us;
        let mu_minus = mu_plus + lambda_us;
        let cm = ts.omega_minus_mhz - delta_minus_mhz;
        let cp = ts.omega_plus_mhz - delta_plus_mhz;
        check_carrier(cm)?;
        check_carrier(cp)?;
        Ok(DriveSpec {
            tones: vec![
                Tone {
                    carrier_mhz: cm,
                    rabi_mhz: omega_minus_mhz,
                    phase_rad: 0.0,
                    envelope: Envelope::gaussian(mu_minus, sigma_us),
                    target: Transition::Minus,
                },
                Tone {
                    carrier_mhz: cp,
                    rabi_mhz: omega_plus_mhz,
                    phase_rad,
                    envelope: Envelope::gaussian(mu_plus, sigma_us),
                    target: Transition::Plus,
                },
            ],
            conversion,
            clip_at_us: None,
        })
    }

    /// Resonant rectangular pi pulse on the chosen transition, duration
    /// `t_pi = 1/(2 Omega)`.
    pub fn pi_pulse(
        ts: &TransitionSet,
        conversion: FieldConversion,
        which: Transition,
        omega_mhz: f64,
    ) -> Result<Self> {
        if !omega_mhz.is_finite() || omega_mhz <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "omega_mhz",
                reason: format!("Rabi frequency must be positive, got {omega_mhz}"),
            });
        }
        let carrier = match which {
            Transition::Minus => ts.omega_minus_mhz,
            Transition::Plus => ts.omega_plus_mhz,
        };
        check_carrier(carrier)?;
        let t_pi = 1.0 / (2.0 * omega_mhz);
        Ok(DriveSpec {
            tones: vec![Tone {
                carrier_mhz: carrier,
                rabi_mhz: omega_mhz,
                phase_rad: 0.0,
                envelope: Envelope::Rect { t_on_us: 0.0, t_off_us: t_pi },
                target: which,
            }],
            conversion,
            clip_at_us: None,
        })
    }

    /// Amplitude gate: V(t) unchanged on [0, tau), identically 0 afterwards.
    pub fn clip(&self, tau_us: f64) -> Self {
        let clip = match self.clip_at_us {
            Some(existing) => existing.min(tau_us),
            None => tau_us,
        };
        DriveSpec { tones: self.tones.clone(), conversion: self.conversion, clip_at_us: Some(clip) }
    }

    /// Field value in Gauss at time t (µs):
    /// `V(t) = sum_tones B_x f_env(t) sin(2 pi carrier t + phase)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        if let Some(clip) = self.clip_at_us {
            if t >= clip {
                return 0.0;
            }
        }
        self.tones
            .iter()
            .map(|tone| {
                let env = tone.envelope.value(t);
                if env == 0.0 {
                    return 0.0;
                }
                let b = tone.rabi_mhz * self.conversion.factor(tone.target);
                b * env * (TAU * tone.carrier_mhz * t + tone.phase_rad).sin()
            })
            .sum()
    }

    /// End of the drive's support (respecting any clip).
    pub fn support_end(&self) -> f64 {
        let end = self.tones.iter().map(|t| t.envelope.support_end()).fold(0.0, f64::max);
        match self.clip_at_us {
            Some(c) => end.min(c),
            None => end,
        }
    }

    pub fn max_carrier_mhz(&self) -> f64 {
        self.tones.iter().map(|t| t.carrier_mhz).fold(0.0, f64::max)
    }

    /// Duration of the pi pulse in this spec, if it is one.
    pub fn pi_duration_us(omega_mhz: f64) -> f64 {
        1.0 / (2.0 * omega_mhz)
    }
}

/// A uniformly sampled drive, ready for export.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub sample_rate_gsps: f64,
    pub t_end_us: f64,
    /// Field samples in Gauss at t_k = k / (1000 * rate) µs.
    pub samples: Vec<f64>,
}

/// Sidecar manifest written next to every exported waveform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveformManifest {
    pub sample_rate_gsps: f64,
    pub n_samples: usize,
    pub t_end_us: f64,
    pub units: String,
    pub format: String,
}

/// Sample the drive at `sample_rate` GSa/s on [0, t_end). Errors if any tone
/// carrier violates the Nyquist limit.
pub fn sample_waveform(d: &DriveSpec, sample_rate_gsps: f64, t_end_us: f64) -> Result<Waveform> {
    if !sample_rate_gsps.is_finite()
        || sample_rate_gsps <= 0.0
        || !t_end_us.is_finite()
        || t_end_us < 0.0
    {
        return Err(Error::InvalidParameter {
            name: "sample_waveform",
            reason: "rate must be positive and t_end >= 0".into(),
        });
    }
    let nyquist_mhz = sample_rate_gsps * 1000.0 / 2.0;
    for (index, tone) in d.tones.iter().enumerate() {
        if tone.carrier_mhz >= nyquist_mhz {
            return Err(Error::NyquistViolation {
                index,
                target: tone.target.name(),
                carrier_mhz: tone.carrier_mhz,
                limit_mhz: nyquist_mhz,
            });
        }
    }
    let samples_per_us = sample_rate_gsps * 1000.0;
    let n = (t_end_us * samples_per_us).round() as usize;
    let dt = 1.0 / samples_per_us;
    let samples = (0..n).map(|k| d.evaluate(k as f64 * dt)).collect();
    Ok(Waveform { sample_rate_gsps, t_end_us, samples })
}

impl Waveform {
    pub fn manifest(&self, format: &str) -> WaveformManifest {
        WaveformManifest {
            sample_rate_gsps: self.sample_rate_gsps,
            n_samples: self.samples.len(),
            t_end_us: self.t_end_us,
            units: "gauss".into(),
            format: format.into(),
        }
    }

    /// CSV export (`t_us,field_gauss`) plus JSON sidecar manifest.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t_us,field_gauss")?;
        let dt = 1.0 / (self.sample_rate_gsps * 1000.0);
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", k as f64 * dt, s)?;
        }
        w.flush()?;
        self.write_manifest(path, "csv")
    }

    /// Raw little-endian f32 export plus JSON sidecar manifest.
    pub fn write_raw_f32(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.samples {
            w.write_all(&(*s as f32).to_le_bytes())?;
        }
        w.flush()?;
        self.write_manifest(path, "f32le")
    }

    fn write_manifest(&self, data_path: &Path, format: &str) -> Result<()> {
        let mut name = data_path.as_os_str().to_os_string();
        name.push(".manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest(format)).expect("serializable");
        std::fs::write(name, json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nv::{transition_frequencies, EnvironmentShift, NVParams};
    use crate::spin::NuclearProj;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn default_ts() -> TransitionSet {
        transition_frequencies(&NVParams::default(), &EnvironmentShift::default(), NuclearProj::Up)
            .unwrap()
    }

    fn conv() -> FieldConversion {
        FieldConversion::analytic(NVParams::default().gamma_e_mhz_per_g)
    }

    #[test]
    fn srt_resonant_carriers() {
        let ts = default_ts();
        let d = DriveSpec::srt(&ts, conv(), 0.0, 0.0, 0.0, 2.0, 2.0, 0.0, 5.0).unwrap();
        assert_abs_diff_eq!(d.tones[0].carrier_mhz, ts.omega_minus_mhz, epsilon = 1e-12);
        assert_abs_diff_eq!(d.tones[1].carrier_mhz, ts.omega_plus_mhz, epsilon = 1e-12);
    }

    #[test]
    fn srt_detuned_carriers() {
        let ts = default_ts();
        let d = DriveSpec::srt(&ts, conv(), 5.0, 0.0, 0.0, 2.0, 2.0, 0.0, 5.0).unwrap();
        assert_abs_diff_eq!(d.tones[0].carrier_mhz, ts.omega_minus_mhz - 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.tones[1].carrier_mhz, ts.omega_plus_mhz - 5.0, epsilon = 1e-12);
        // both tones share the rectangular window
        assert_eq!(d.tones[0].envelope, d.tones[1].envelope);
        assert_abs_diff_eq!(d.support_end(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn srt_field_amplitude_seed() {
        let d = DriveSpec::srt(&default_ts(), conv(), 5.0, 0.0, 0.0, 2.0, 2.0, 0.0, 5.0).unwrap();
        let b = d.tones[0].rabi_mhz * d.conversion.factor(Transition::Minus);
        assert_abs_diff_eq!(b, 2.0 * 2.0_f64.sqrt() / 2.8025, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 1.009, epsilon = 1e-3);
    }

    #[test]
    fn stirap_timing() {
        let ts = default_ts();
        let d = DriveSpec::stirap(&ts, conv(), 0.0, 0.0, 2.0, 2.0, 0.0, 0.85, 1.2).unwrap();
        assert_abs_diff_eq!(d.support_end(), 8.0, epsilon = 1e-12);
        let (mu_m, mu_p) = match (d.tones[0].envelope, d.tones[1].envelope) {
            (Envelope::Gaussian { mu_us: a, .. }, Envelope::Gaussian { mu_us: b, .. }) => (a, b),
            _ => panic!("expected Gaussian envelopes"),
        };
        assert_abs_diff_eq!(mu_p, 3.4, epsilon = 1e-12);
        assert_abs_diff_eq!(mu_m, 4.6, epsilon = 1e-12);
        // peak value 1 at mu
        assert_abs_diff_eq!(d.tones[1].envelope.value(3.4), 1.0, epsilon = 1e-15);
        // counter-intuitive order: plus first
        assert!(mu_p < mu_m);
    }

    #[test]
    fn stirap_zero_separation_degenerate() {
        let ts = default_ts();
        let d = DriveSpec::stirap(&ts, conv(), 0.0, 0.0, 2.0, 2.0, 0.0, 0.5, 0.0).unwrap();
        for t in [0.0, 0.7, 2.0, 3.99] {
            assert_abs_diff_eq!(
                d.tones[0].envelope.value(t),
                d.tones[1].envelope.value(t),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn gaussian_support_is_exactly_zero_outside() {
        let env = Envelope::gaussian(3.4, 0.85);
        assert_eq!(env.value(3.4 - 4.0 * 0.85 - 1e-9), 0.0);
        assert_eq!(env.value(3.4 + 4.0 * 0.85 + 1e-9), 0.0);
        assert!(env.value(3.4 - 4.0 * 0.85 + 1e-9) > 0.0);
    }

    #[test]
    fn equal_pulse_temporal_area() {
        let ts = default_ts();
        let d = DriveSpec::stirap(&ts, conv(), 0.0, 0.0, 2.0, 2.0, 0.0, 0.85, 1.2).unwrap();
        // numerically integrate each envelope
        let n = 200_000;
        let t_end = d.support_end();
        let dt = t_end / n as f64;
        let mut areas = [0.0, 0.0];
        for k in 0..n {
            let t = (k as f64 + 0.5) * dt;
            areas[0] += d.tones[0].envelope.value(t) * dt;
            areas[1] += d.tones[1].envelope.value(t) * dt;
        }
        assert_abs_diff_eq!(areas[0], areas[1], epsilon = 1e-9);
    }

    #[test]
    fn pi_pulse_duration() {
        let ts = default_ts();
        let d = DriveSpec::pi_pulse(&ts, conv(), Transition::Minus, 0.5).unwrap();
        assert_abs_diff_eq!(d.support_end(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.tones[0].carrier_mhz, ts.omega_minus_mhz, epsilon = 1e-12);
        assert!(DriveSpec::pi_pulse(&ts, conv(), Transition::Minus, 0.0).is_err());
    }

    #[test]
    fn clip_semantics() {
        let ts = default_ts();
        let d = DriveSpec::stirap(&ts, conv(), 0.0, 0.0, 2.0, 2.0, 0.0, 0.85, 1.2).unwrap();
        let zero = d.clip(0.0);
        for t in [0.0, 1.0, 4.0] {
            assert_eq!(zero.evaluate(t), 0.0);
        }
        let full = d.clip(8.0);
        let half = d.clip(4.0);
        for k in 0..800 {
            let t = k as f64 * 0.01;
            assert_eq!(full.evaluate(t), d.evaluate(t));
            if t < 4.0 {
                assert_eq!(half.evaluate(t), d.evaluate(t));
            } else {
                assert_eq!(half.evaluate(t), 0.0);
            }
        }
        // clipping twice keeps the earlier cut
        assert_eq!(half.clip(6.0).clip_at_us, Some(4.0));
    }

    #[test]
    fn evaluate_single_tone_quarter_period() {
        let conv = FieldConversion { minus_g_per_mhz: 1.0, plus_g_per_mhz: 1.0 };
        let d = DriveSpec {
            tones: vec![Tone {
                carrier_mhz: 100.0,
                rabi_mhz: 1.0,
                phase_rad: 0.0,
                envelope: Envelope::Rect { t_on_us: 0.0, t_off_us: 1.0 },
                target: Transition::Minus,
            }],
            conversion: conv,
            clip_at_us: None,
        };
        let quarter = 1.0 / (4.0 * 100.0);
        assert_abs_diff_eq!(d.evaluate(quarter), 1.0, epsilon = 1e-12);
        assert_eq!(d.evaluate(2.0), 0.0);
    }

    #[test]
    fn evaluate_is_linear_in_tones() {
        let ts = default_ts();
        let d = DriveSpec::srt(&ts, conv(), 3.0, 0.1, -0.2, 2.0, 1.5, 0.3, 4.0).unwrap();
        let mut only0 = d.clone();
        only0.tones.truncate(1);
        let mut only1 = d.clone();
        only1.tones.remove(0);
        for k in 0..100 {
            let t = k as f64 * 0.04;
            assert_abs_diff_eq!(d.evaluate(t), only0.evaluate(t) + only1.evaluate(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_drive_is_zero() {
        let d = DriveSpec::empty(conv());
        assert_eq!(d.evaluate(0.5), 0.0);
        assert_eq!(d.support_end(), 0.0);
    }

    #[test]
    fn waveform_sampling_matches_evaluate() {
        let ts = default_ts();
        let d = DriveSpec::srt(&ts, conv(), 5.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.01).unwrap();
        let w = sample_waveform(&d, 16.0, 0.01).unwrap();
        assert_eq!(w.samples.len(), 160);
        let dt = 1.0 / 16000.0;
        for (k, s) in w.samples.iter().enumerate() {
            assert_abs_diff_eq!(*s, d.evaluate(k as f64 * dt), epsilon = 1e-12);
        }
    }

    #[test]
    fn waveform_sample_count() {
        let ts = default_ts();
        let d = DriveSpec::stirap(&ts, conv(), 0.0, 0.0, 2.0, 2.0, 0.0, 0.85, 1.2).unwrap();
        let w = sample_waveform(&d, 16.0, 8.0).unwrap();
        assert_eq!(w.samples.len(), 128_000);
        assert_eq!(w.manifest("csv").n_samples, 128_000);
    }

    #[test]
    fn nyquist_violation_names_tone() {
        let ts = default_ts();
        let d = DriveSpec::srt(&ts, conv(), 0.0, 0.0, 0.0, 2.0, 2.0, 0.0, 1.0).unwrap();
        // 4 GSa/s -> Nyquist 2000 MHz < omega_plus
        let err = sample_waveform(&d, 4.0, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("plus"), "{msg}");
    }

    #[test]
    fn zero_drive_samples_all_zero() {
        let w = sample_waveform(&DriveSpec::empty(conv()), 1.0, 0.5).unwrap();
        assert_eq!(w.samples.len(), 500);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    proptest! {
        #[test]
        fn envelope_bounded(mu in 0.0..10.0f64, sigma in 0.01..2.0f64, t in -5.0..20.0f64) {
            let env = Envelope::gaussian(mu, sigma);
            let v = env.value(t);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn clip_then_evaluate_zero_after(tau in 0.0..10.0f64, t in 0.0..12.0f64) {
            let ts = default_ts();
            let d = DriveSpec::srt(&ts, conv(), 2.0, 0.0, 0.0, 2.0, 2.0, 0.0, 10.0)
                .unwrap()
                .clip(tau);
            if t >= tau {
                prop_assert_eq!(d.evaluate(t), 0.0);
            }
        }
    }
}
