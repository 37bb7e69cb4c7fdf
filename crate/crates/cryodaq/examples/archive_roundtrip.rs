//! Tour of the binary archive: append, range-query, tail, export, and
//! the metadata sidecar.
//!
//!     cargo run --example archive_roundtrip

use chrono::NaiveDate;
use cryodaq::archive::{
    Archive, ArchiveKey, ArchiveRecord, ExportFormat, FileKind, GapMarker, SidecarMeta,
};

fn main() {
    let root = std::env::temp_dir().join("cryodaq-archive-demo");
    let _ = std::fs::remove_dir_all(&root);
    let archive = Archive::open(&root).unwrap();

    // Files are keyed (date, device, data) and live at
    // ROOT/YYYY-MM-DD/DEVICE/DATA.dat with a DATA.meta sidecar.
    let date = NaiveDate::from_ymd_opt(2026, 8, 15).unwrap();
    let key = ArchiveKey::new(date, "MAG01", "VT00").unwrap();
    let meta = SidecarMeta {
        device_name: "MAG01".into(),
        data_name: "VT00".into(),
        kind: FileKind::TimeSeries,
        units_raw: "V".into(),
        units_cal: "V".into(),
        session_start_utc: "2026-08-15T09:00:00Z".into(),
        rate: None,
        gaps: Vec::new(),
    };

    // Records are (time, raw, calibrated) float64 triples, 24 bytes
    // each, little-endian, no header. Appends must not go backwards in
    // time; batches land in one write so readers never see a torn
    // record.
    let records: Vec<ArchiveRecord> =
        (0..1000).map(|k| ArchiveRecord::new(k as f64 * 1e-3, k as f64, k as f64 * 2.0)).collect();
    archive.append(&key, &meta, &records).unwrap();
    println!("appended {} records -> {}", records.len(), root.join("2026-08-15/MAG01/VT00.dat").display());

    // Range queries are inclusive on both ends and located by binary
    // search on the time column, so only the matching bytes are read.
    let slice = archive.query(&key, 0.25, 0.5).unwrap();
    println!(
        "query [0.25, 0.5] -> {} records, first t={}, last t={}",
        slice.len(),
        slice.first().unwrap().time_index(),
        slice.last().unwrap().time_index()
    );

    // tail() returns records strictly after a time, the polling
    // primitive behind quasi-live monitoring.
    let fresh = archive.append(&key, &meta, &[ArchiveRecord::new(1.0, 1000.0, 2000.0)]).unwrap();
    let tailed = archive.tail(&key, 0.999).unwrap();
    println!("appended {fresh} more; tail(0.999) sees {} record(s)", tailed.len());

    // Text export renders one record per line with the shortest float64
    // round-trip format; parsing it back recovers identical bits.
    let text = archive.export(&key, 0.0, 2e-3, ExportFormat::Text).unwrap();
    print!("text export of the first three:\n{}", String::from_utf8(text).unwrap());
    let binary = archive.export(&key, 0.0, 2e-3, ExportFormat::Binary).unwrap();
    println!("binary export of the same range: {} bytes", binary.len());

    // The sidecar carries identity, units, and dropped-sample gaps.
    archive.add_gap_markers(&key, &[GapMarker { first_time: 0.123, count: 64 }]).unwrap();
    let sidecar = archive.read_sidecar(&key).unwrap();
    println!(
        "sidecar: {}.{} [{}], {} gap(s) recorded",
        sidecar.device_name,
        sidecar.data_name,
        sidecar.units_cal,
        sidecar.gaps.len()
    );

    // Keys are discoverable per date or device prefix.
    let keys = archive.list_keys(Some(date), None).unwrap();
    println!("keys on {date}: {keys:?}");
}
