//! Evaluate the background-field ramp profiles and render one to SVG.
//!
//!     cargo run --example field_ramp_profiles

use cryodaq::plot::{render_xy, PlotConfig};
use cryodaq::simsrc::{field_at, FieldRampProfile};

fn main() {
    // Two profiles are built in: a steady-state style ramp (3 T/s for
    // 5 s, settling at 15 T) and a pulsed one (20 T/s for 50 ms,
    // settling at 1 T). Both hold their end value after the ramp.
    for (name, profile, times) in [
        ("slow", FieldRampProfile::SlowRamp, [0.0, 1.0, 2.5, 5.0, 8.0]),
        ("fast", FieldRampProfile::FastRamp, [0.0, 0.01, 0.025, 0.05, 0.08]),
    ] {
        println!("{name} ramp:");
        for t in times {
            println!("  B({t:>5} s) = {:>5.2} T", field_at(profile, t));
        }
    }

    // Arbitrary rates work the same way.
    let custom = FieldRampProfile::Custom { rate_t_per_s: 1.5, duration_s: 4.0 };
    println!("custom 1.5 T/s for 4 s settles at {} T", field_at(custom, 100.0));

    // Sample the slow profile through its corner and plot it.
    let points: Vec<(f64, f64)> =
        (0..=700).map(|k| k as f64 * 0.01).map(|t| (t, field_at(FieldRampProfile::SlowRamp, t))).collect();
    let cfg = PlotConfig {
        title: "background field, slow ramp".to_string(),
        y_label: "B [T]".to_string(),
        ..PlotConfig::default()
    };
    let svg = render_xy(&points, &cfg);
    let path = std::env::temp_dir().join("field_ramp.svg");
    std::fs::write(&path, svg).unwrap();
    println!("wrote {}", path.display());
}
