//! Deterministic simulated signal sources.
//!
//! Everything the facility would measure — cool-down temperatures, helium
//! loop parameters, background-field ramps, supply current, and voltage
//! taps with injectable quench events — is generated here as pure
//! functions of `(parameters, seed, t)`. There is no hidden state:
//! replaying a session with the same configuration reproduces every
//! sample bit-identically, which is what makes archived runs comparable
//! and the detector testable against closed forms.
//!
//! # Noise generator
//!
//! Noise values come from xoshiro256++, fixed here by its update
//! equations so any implementation can reproduce the streams:
//!
//! ```text
//! output  = rotl64(s0 + s3, 23) + s0
//! t  = s1 << 17
//! s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
//! s2 ^= t;   s3 = rotl64(s3, 45)
//! ```
//!
//! The four-word state is expanded from a 64-bit seed by SplitMix64
//! (`z = seed + n·0x9E3779B97F4A7C15`, then two xor-multiply mixes).
//! A u64 maps to `[0, 1)` as `(x >> 11) · 2^-53`. Per-sample noise keys a
//! fresh generator from `seed ^ t.to_bits()`, so noise at a given time is
//! independent of evaluation order.

use crate::registry::CalibrationTable;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(GOLDEN_GAMMA);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Decorrelated per-channel seed from one facility seed. A SplitMix64
/// step keeps adjacent indices statistically unrelated while staying a
/// pure function of `(facility_seed, index)`.
pub fn derive_seed(facility_seed: u64, index: u64) -> u64 {
    let mut s = facility_seed ^ index.wrapping_mul(GOLDEN_GAMMA);
    splitmix64(&mut s)
}

/// xoshiro256++ with SplitMix64 seeding. See the module docs for the
/// exact update equations this implements.
#[derive(Debug, Clone)]
pub struct Xoshiro256PlusPlus {
    s: [u64; 4],
}

impl Xoshiro256PlusPlus {
    pub fn seed_from(seed: u64) -> Self {
        let mut x = seed;
        Xoshiro256PlusPlus {
            s: [
                splitmix64(&mut x),
                splitmix64(&mut x),
                splitmix64(&mut x),
                splitmix64(&mut x),
            ],
        }
    }

    #[cfg(test)]
    fn from_state(s: [u64; 4]) -> Self {
        Xoshiro256PlusPlus { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`, using the top 53 bits.
    pub fn next_unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2.0f64.powi(-53)
    }
}

/// Uniform noise in `[-amp, +amp)` at time `t`, keyed by `(seed, t)`.
pub fn noise_at(seed: u64, t: f64, amp: f64) -> f64 {
    if amp == 0.0 {
        return 0.0;
    }
    let mut rng = Xoshiro256PlusPlus::seed_from(seed ^ t.to_bits());
    amp * (2.0 * rng.next_unit_f64() - 1.0)
}

/// Background-field ramp. The two named modes are facility constants;
/// anything else must be spelled out explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldRampProfile {
    /// 3 T/s for 5 s.
    SlowRamp,
    /// 20 T/s for 0.05 s.
    FastRamp,
    Custom { rate_t_per_s: f64, duration_s: f64 },
}

impl FieldRampProfile {
    pub fn rate_t_per_s(&self) -> f64 {
        match self {
            FieldRampProfile::SlowRamp => 3.0,
            FieldRampProfile::FastRamp => 20.0,
            FieldRampProfile::Custom { rate_t_per_s, .. } => *rate_t_per_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            FieldRampProfile::SlowRamp => 5.0,
            FieldRampProfile::FastRamp => 0.05,
            FieldRampProfile::Custom { duration_s, .. } => *duration_s,
        }
    }
}

/// `B(t) = rate · min(t, duration)`: linear ramp, then flat top.
pub fn field_at(profile: FieldRampProfile, t: f64) -> f64 {
    profile.rate_t_per_s() * t.min(profile.duration_s())
}

/// Single-exponential cool-down toward a base temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CooldownProfile {
    pub t_start_k: f64,
    pub t_base_k: f64,
    pub tau_s: f64,
}

impl CooldownProfile {
    /// Config-facing validation: a physical plant profile needs
    /// `t_start > t_base > 0` and a positive time constant. The evaluator
    /// itself is total.
    pub fn validated(self) -> Result<Self, &'static str> {
        if !(self.tau_s > 0.0) {
            return Err("cooldown tau_s must be > 0");
        }
        if !(self.t_start_k > self.t_base_k && self.t_base_k > 0.0) {
            return Err("cooldown requires t_start_K > t_base_K > 0");
        }
        Ok(self)
    }
}

/// `T(t) = t_base + (t_start - t_base) · exp(-t / tau)`.
pub fn cooldown_at(profile: CooldownProfile, t: f64) -> f64 {
    profile.t_base_k + (profile.t_start_k - profile.t_base_k) * (-t / profile.tau_s).exp()
}

/// A quench injected into a voltage tap: inductive pickup plus noise,
/// and from `onset_time_s` a linearly growing resistive voltage. Linear
/// growth is the simplest detectable signature and keeps the detector's
/// trigger-time oracle exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchScenario {
    pub onset_time_s: f64,
    pub resistive_slope_v_per_s: f64,
    pub mutual_inductance_h: f64,
    pub current_amps: f64,
    pub noise_amp_v: f64,
    pub seed: u64,
}

impl QuenchScenario {
    /// A tap that never quenches: zero slope is invalid for a scenario,
    /// so "no quench" is expressed as an onset beyond any session end.
    pub fn quiet(noise_amp_v: f64, seed: u64) -> Self {
        QuenchScenario {
            onset_time_s: f64::INFINITY,
            resistive_slope_v_per_s: 1.0,
            mutual_inductance_h: 0.0,
            current_amps: 0.0,
            noise_amp_v,
            seed,
        }
    }

    pub fn validated(self) -> Result<Self, &'static str> {
        if !(self.resistive_slope_v_per_s > 0.0) {
            return Err("resistive_slope_V_per_s must be > 0");
        }
        if !(self.mutual_inductance_h >= 0.0) {
            return Err("mutual_inductance_H must be >= 0");
        }
        if !(self.noise_amp_v >= 0.0) {
            return Err("noise_amp_V must be >= 0");
        }
        if self.current_amps.abs() > 50_000.0 {
            return Err("current_amps beyond the 50 kA supply scale");
        }
        Ok(self)
    }
}

/// Tap voltage at time `t` given the supply ramp rate `dI/dt`:
/// `V(t) = M·dI_dt + noise(t; seed) + max(0, slope·(t - onset))`.
pub fn voltage_tap_at(sc: &QuenchScenario, di_dt: f64, t: f64) -> f64 {
    let resistive = (sc.resistive_slope_v_per_s * (t - sc.onset_time_s)).max(0.0);
    sc.mutual_inductance_h * di_dt + noise_at(sc.seed, t, sc.noise_amp_v) + resistive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowKind {
    Pressure,
    FlowRate,
}

/// Baseline plus a small sinusoidal modulation:
/// `value(t) = baseline + amplitude · sin(2π · freq_hz · t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowChannelParams {
    pub baseline: f64,
    pub amplitude: f64,
    pub freq_hz: f64,
}

pub fn slow_channel_at(_kind: SlowKind, params: SlowChannelParams, t: f64) -> f64 {
    params.baseline + params.amplitude * (std::f64::consts::TAU * params.freq_hz * t).sin()
}

/// Supply current ramp: linear from zero to `max_amps` over
/// `duration_s`, then held. `di_dt_at` is the exact derivative, zero on
/// the flat top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentRamp {
    pub max_amps: f64,
    pub duration_s: f64,
}

impl CurrentRamp {
    pub fn current_at(&self, t: f64) -> f64 {
        if self.duration_s <= 0.0 {
            return self.max_amps;
        }
        self.max_amps * (t.min(self.duration_s) / self.duration_s)
    }

    pub fn di_dt_at(&self, t: f64) -> f64 {
        if self.duration_s <= 0.0 || t >= self.duration_s {
            0.0
        } else {
            self.max_amps / self.duration_s
        }
    }
}

/// What a channel measures. `raw_at` produces the sensor voltage (or
/// equivalent raw reading) fed into conditioning and calibration.
///
/// Channels with a physical-unit source (temperatures, pressures, field)
/// synthesize the raw value by inverting the channel's calibration
/// table, so the archived `(raw, calibrated)` pair is consistent by
/// construction.
#[derive(Debug, Clone)]
pub enum SignalSource {
    VoltageTap { scenario: QuenchScenario },
    Cooldown { profile: CooldownProfile },
    Slow { kind: SlowKind, params: SlowChannelParams },
    Field { profile: FieldRampProfile },
    Setpoint { value: f64 },
}

impl SignalSource {
    pub fn raw_at(&self, table: &CalibrationTable, di_dt: f64, t: f64) -> f64 {
        match self {
            SignalSource::VoltageTap { scenario } => voltage_tap_at(scenario, di_dt, t),
            SignalSource::Cooldown { profile } => table.invert(cooldown_at(*profile, t)),
            SignalSource::Slow { kind, params } => table.invert(slow_channel_at(*kind, *params, t)),
            SignalSource::Field { profile } => table.invert(field_at(*profile, t)),
            SignalSource::Setpoint { value } => *value,
        }
    }
}
