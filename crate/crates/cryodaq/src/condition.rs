//! Isolation-amplifier signal conditioning.
//!
//! Raw sensor voltages pass through an isolation amplifier with selectable
//! gain, a single-pole low-pass filter, and output saturation before they
//! are sampled. The filter is the discrete IIR update
//! `y' = y + lp_alpha * (input - y)`; for an RC low-pass sampled every
//! `dt` seconds, `lp_alpha = dt / (RC + dt)`.
//!
//! Inputs beyond the isolation limit mean the amplifier can no longer
//! guarantee galvanic isolation. That is a channel fault, not a process
//! fault: the channel is marked bad and produces NaN from then on, which
//! keeps the stream timing intact while making the damage visible.

use thiserror::Error;

pub const DEFAULT_ISOLATION_LIMIT_VOLTS: f64 = 20_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("input {input_volts} V exceeds isolation limit {limit_volts} V")]
pub struct IsolationBreach {
    pub input_volts: f64,
    pub limit_volts: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid amplifier config: {0}")]
pub struct InvalidAmplifierConfig(pub &'static str);

/// One conditioning chain: gain stage, low-pass, clipper, isolation limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplifierConfig {
    pub gain: f64,
    /// Low-pass smoothing coefficient per sample, in `(0, 1]`. 1 disables
    /// the filter.
    pub lp_alpha: f64,
    /// Output saturation; the output is clamped to `±clip_volts`.
    pub clip_volts: f64,
    pub isolation_limit_volts: f64,
}

impl AmplifierConfig {
    pub fn new(gain: f64, lp_alpha: f64, clip_volts: f64) -> Result<Self, InvalidAmplifierConfig> {
        AmplifierConfig {
            gain,
            lp_alpha,
            clip_volts,
            isolation_limit_volts: DEFAULT_ISOLATION_LIMIT_VOLTS,
        }
        .validated()
    }

    pub fn with_isolation_limit(mut self, limit_volts: f64) -> Result<Self, InvalidAmplifierConfig> {
        self.isolation_limit_volts = limit_volts;
        self.validated()
    }

    /// Unity gain, no filtering, clip far above any simulated signal.
    pub fn passthrough() -> Self {
        AmplifierConfig {
            gain: 1.0,
            lp_alpha: 1.0,
            clip_volts: 1e9,
            isolation_limit_volts: DEFAULT_ISOLATION_LIMIT_VOLTS,
        }
    }

    pub fn validated(self) -> Result<Self, InvalidAmplifierConfig> {
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(InvalidAmplifierConfig("gain must be finite and > 0"));
        }
        if !(self.lp_alpha > 0.0 && self.lp_alpha <= 1.0) {
            return Err(InvalidAmplifierConfig("lp_alpha must be in (0, 1]"));
        }
        if !(self.clip_volts > 0.0) {
            return Err(InvalidAmplifierConfig("clip_volts must be > 0"));
        }
        if !(self.isolation_limit_volts > 0.0) {
            return Err(InvalidAmplifierConfig("isolation_limit_volts must be > 0"));
        }
        Ok(self)
    }
}

/// Advance the chain by one sample.
///
/// Returns the new filter state and the clipped output. Inputs at the
/// isolation limit are still legal; only strictly beyond it is a breach.
pub fn condition_step(
    cfg: &AmplifierConfig,
    state: f64,
    input_volts: f64,
) -> Result<(f64, f64), IsolationBreach> {
    if input_volts.abs() > cfg.isolation_limit_volts {
        return Err(IsolationBreach {
            input_volts,
            limit_volts: cfg.isolation_limit_volts,
        });
    }
    // lp_alpha = 1 must be exact passthrough; y + (input - y) can round.
    let new_state = if cfg.lp_alpha == 1.0 {
        input_volts
    } else {
        state + cfg.lp_alpha * (input_volts - state)
    };
    let output = (cfg.gain * new_state).clamp(-cfg.clip_volts, cfg.clip_volts);
    Ok((new_state, output))
}

/// Pre-clip response to a unit step from zero state after `n` samples:
/// `gain * (1 - (1 - lp_alpha)^n)`.
pub fn step_response(cfg: &AmplifierConfig, n: u32) -> f64 {
    cfg.gain * (1.0 - (1.0 - cfg.lp_alpha).powi(n as i32))
}

/// Stateful wrapper used on the acquisition paths. Latches into a faulted
/// state on isolation breach and emits NaN from then on.
#[derive(Debug, Clone)]
pub struct Conditioner {
    cfg: AmplifierConfig,
    state: f64,
    faulted: bool,
}

impl Conditioner {
    pub fn new(cfg: AmplifierConfig) -> Self {
        Conditioner {
            cfg,
            state: 0.0,
            faulted: false,
        }
    }

    pub fn step(&mut self, input_volts: f64) -> f64 {
        if self.faulted {
            return f64::NAN;
        }
        match condition_step(&self.cfg, self.state, input_volts) {
            Ok((state, output)) => {
                self.state = state;
                output
            }
            Err(_) => {
                self.faulted = true;
                f64::NAN
            }
        }
    }

    pub fn is_faulted(&self) -> bool {
        self.faulted
    }

    pub fn config(&self) -> &AmplifierConfig {
        &self.cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_one_is_gain_times_input() {
        let cfg = AmplifierConfig::new(4.0, 1.0, 10.0).unwrap();
        let (state, out) = condition_step(&cfg, 0.0, 0.25).unwrap();
        assert_eq!(state, 0.25);
        assert_eq!(out, 1.0);
    }

    #[test]
    fn half_alpha_converges_geometrically() {
        let cfg = AmplifierConfig::new(1.0, 0.5, 10.0).unwrap();
        let mut state = 0.0;
        let mut outs = Vec::new();
        for _ in 0..3 {
            let (s, o) = condition_step(&cfg, state, 1.0).unwrap();
            state = s;
            outs.push(o);
        }
        assert_eq!(outs, vec![0.5, 0.75, 0.875]);
    }

    #[test]
    fn breach_above_default_limit() {
        let cfg = AmplifierConfig::new(1.0, 1.0, 10.0).unwrap();
        let err = condition_step(&cfg, 0.0, 25_000.0).unwrap_err();
        assert_eq!(err.limit_volts, 20_000.0);
        // Exactly at the limit is still legal.
        assert!(condition_step(&cfg, 0.0, 20_000.0).is_ok());
        assert!(condition_step(&cfg, 0.0, -20_000.0).is_ok());
        assert!(condition_step(&cfg, 0.0, -20_000.1).is_err());
    }

    #[test]
    fn step_response_closed_form() {
        let cfg = AmplifierConfig::new(1.0, 0.5, 10.0).unwrap();
        assert_eq!(step_response(&cfg, 3), 0.875);
        assert_eq!(step_response(&cfg, 0), 0.0);
    }

    #[test]
    fn conditioner_latches_fault_to_nan() {
        let mut c = Conditioner::new(AmplifierConfig::new(1.0, 1.0, 10.0).unwrap());
        assert_eq!(c.step(1.0), 1.0);
        assert!(c.step(30_000.0).is_nan());
        assert!(c.is_faulted());
        assert!(c.step(1.0).is_nan(), "fault must latch");
    }

    #[test]
    fn config_bounds_are_enforced() {
        assert!(AmplifierConfig::new(0.0, 1.0, 10.0).is_err());
        assert!(AmplifierConfig::new(-1.0, 1.0, 10.0).is_err());
        assert!(AmplifierConfig::new(1.0, 0.0, 10.0).is_err());
        assert!(AmplifierConfig::new(1.0, 1.5, 10.0).is_err());
        assert!(AmplifierConfig::new(1.0, 1.0, 0.0).is_err());
        assert!(AmplifierConfig::new(1.0, 1.0, 10.0)
            .unwrap()
            .with_isolation_limit(-5.0)
            .is_err());
    }

    proptest! {
        #[test]
        fn iterated_step_matches_closed_form(
            alpha in 0.001f64..=1.0,
            gain in 0.01f64..100.0,
            n in 0u32..200,
        ) {
            // Clip far above gain so the comparison is pre-clip.
            let cfg = AmplifierConfig::new(gain, alpha, 1e12).unwrap();
            let mut state = 0.0;
            let mut out = 0.0;
            for _ in 0..n {
                let (s, o) = condition_step(&cfg, state, 1.0).unwrap();
                state = s;
                out = o;
            }
            let want = step_response(&cfg, n);
            prop_assert!(
                (out - want).abs() <= 1e-12 * want.abs().max(1.0),
                "iterated {out} vs closed form {want}"
            );
        }

        #[test]
        fn output_never_exceeds_clip(
            alpha in 0.001f64..=1.0,
            gain in 0.01f64..1e4,
            clip in 0.01f64..100.0,
            inputs in proptest::collection::vec(-20_000.0f64..=20_000.0, 1..100),
        ) {
            let cfg = AmplifierConfig::new(gain, alpha, clip).unwrap();
            let mut state = 0.0;
            for input in inputs {
                let (s, out) = condition_step(&cfg, state, input).unwrap();
                state = s;
                prop_assert!(out.abs() <= clip, "output {out} escaped ±{clip}");
            }
        }

        #[test]
        fn alpha_one_is_bitexact_multiplication(
            mantissa in -1000i64..1000,
            // Keep |input| = |m·2^e| ≤ 16000, inside the isolation limit.
            exp in -8i32..=4,
        ) {
            // Inputs of the form m·2^e and a power-of-two gain multiply
            // without rounding, so the chain must be bit-identical to it.
            let input = mantissa as f64 * (2.0f64).powi(exp);
            let cfg = AmplifierConfig::new(4.0, 1.0, 1e18).unwrap();
            let (_, out) = condition_step(&cfg, 12345.0, input).unwrap();
            prop_assert_eq!(out.to_bits(), (4.0 * input).to_bits());
        }
    }
}
