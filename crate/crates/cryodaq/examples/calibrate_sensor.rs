//! Map raw sensor volts to physical units with a piecewise-linear
//! calibration table, and invert physical values back to raw.
//!
//!     cargo run --example calibrate_sensor

use std::sync::Arc;

use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};

fn main() {
    // A cryogenic temperature sensor: the diode's forward voltage rises
    // as the stand cools, so the physical column descends. Raw values
    // must be strictly increasing; the physical side is unconstrained.
    let table = CalibrationTable::piecewise_linear(vec![
        (0.0, 300.0),
        (0.5, 170.0),
        (1.0, 80.0),
        (1.5, 20.0),
        (2.0, 4.5),
    ])
    .unwrap();

    println!("raw -> physical:");
    for raw in [0.0, 0.25, 0.9, 1.75, 2.0, 5.0] {
        println!("  {raw:>5} V -> {:>7.2} K", table.calibrate(raw));
    }
    // Out-of-range queries clamp to the table ends (5.0 V above).

    println!("physical -> raw (inverse interpolation):");
    for kelvin in [300.0, 100.0, 4.5] {
        println!("  {kelvin:>6} K -> {:.4} V", table.invert(kelvin));
    }

    // The same table can be loaded from two-column text, one
    // "raw physical" pair per line; '#' starts a comment.
    let text = "# LakeShore-style curve\n0 300\n0.5 170\n1 80\n1.5 20\n2 4.5\n";
    let from_text = CalibrationTable::from_table_text(text).unwrap();
    assert_eq!(from_text.calibrate(0.9), table.calibrate(0.9));
    println!("text-loaded table agrees at 0.9 V: {:.2} K", from_text.calibrate(0.9));

    // Tables attach to channels through the registry, which owns
    // channel identity for every other subsystem.
    let mut registry = Registry::new();
    let id = registry
        .register(ChannelDescriptor::new("TS01", "TEMP", ChannelKind::Slow, "V", "K", Arc::new(table)))
        .unwrap();
    let desc = registry.get(id);
    println!(
        "registered {} ({} -> {}), id {:?}",
        desc.full_name(),
        desc.units_raw,
        desc.units_cal,
        id
    );
}
