//! End-to-end checks of the `cryodaq` binary: exit codes, stream
//! separation (data on stdout, diagnostics on stderr), and agreement
//! between CLI output and direct library calls.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::NaiveDate;

use cryodaq::archive::{Archive, ArchiveKey, ArchiveRecord, ExportFormat, FileKind, SidecarMeta};
use cryodaq::netproto::{serve, Hub, ServerConfig};
use cryodaq::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cryodaq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cryodaq")
}

fn meta_for(device: &str, data: &str, units_cal: &str) -> SidecarMeta {
    SidecarMeta {
        device_name: device.to_string(),
        data_name: data.to_string(),
        kind: FileKind::TimeSeries,
        units_raw: "V".to_string(),
        units_cal: units_cal.to_string(),
        session_start_utc: "2026-01-05T00:00:00Z".to_string(),
        rate: None,
        gaps: Vec::new(),
    }
}

fn seed_archive(root: &Path) -> (ArchiveKey, Vec<ArchiveRecord>) {
    let archive = Archive::open(root).unwrap();
    let date = NaiveDate::from_ymd_opt(2026, 1, 5).unwrap();
    let key = ArchiveKey::new(date, "DEV", "SIG").unwrap();
    let records: Vec<ArchiveRecord> =
        (0..5).map(|k| ArchiveRecord::new(k as f64 * 0.25, k as f64, k as f64 * 10.0)).collect();
    archive.append(&key, &meta_for("DEV", "SIG", "K"), &records).unwrap();
    (key, records)
}

#[test]
fn daqd_runs_a_config_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    fs::write(
        &config,
        "\
[facility]
name = ITEST
seed = 3
supply_max_amps = 500
supply_ramp_s = 1.0
noise_amp_v = 0.0001

[channels]
MAG01.VT00.kind = fast
MAG01.VT00.source = tap
CRYO.PRES.kind = slow
CRYO.PRES.units_raw = bar
CRYO.PRES.units_cal = bar
CRYO.PRES.source = pressure:1.2,0.05,0.02

[acquisition]
fast_rate_hz = 2000
slow_period_s = 0.1
duration_s = 0.5
realtime = false
session_start_utc = 2026-04-01T08:00:00Z

[archive]
root = ./arch

[server]
endpoint = 127.0.0.1:0
",
    )
    .unwrap();

    let out = bin().arg("daqd").arg(&config).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "stderr: {stderr}");
    // Diagnostics land on stderr, nothing on stdout.
    assert!(out.stdout.is_empty());
    assert!(stderr.contains("listening on 127.0.0.1:"), "stderr: {stderr}");
    assert!(stderr.contains("completed"), "stderr: {stderr}");

    let arch = dir.path().join("arch");
    for file in [
        "2026-04-01/MAG01/VT00.dat",
        "2026-04-01/MAG01/VT00.meta",
        "2026-04-01/CRYO/PRES.dat",
        "sessions/20260401T080000Z.meta",
    ] {
        assert!(arch.join(file).is_file(), "missing {file}");
    }
    // 0.5 s at 2 kHz, closed interval; no quench configured.
    let archive = Archive::open(&arch).unwrap();
    let key = ArchiveKey::new(NaiveDate::from_ymd_opt(2026, 4, 1).unwrap(), "MAG01", "VT00").unwrap();
    assert_eq!(archive.query(&key, f64::NEG_INFINITY, f64::INFINITY).unwrap().len(), 1001);
    assert!(!arch.join("2026-04-01/ITEST/QUENCH_TRIG.dat").exists());

    // A second run against the same root collides on the session id.
    let out = bin().arg("daqd").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn daqd_flags_config_errors_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    fs::write(&config, "[facility]\nname = X\nbogus_key = 1\n").unwrap();
    let out = bin().arg("daqd").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");

    let out = bin().arg("daqd").arg(dir.path().join("missing.conf")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn daqd_reports_bind_failure_as_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bind.conf");
    // A non-local address cannot be bound.
    fs::write(
        &config,
        "\
[channels]
A.X.kind = slow
A.X.source = pressure:1,0.1,0.1

[acquisition]
duration_s = 0.2
realtime = false

[archive]
root = ./arch

[server]
endpoint = 192.0.2.1:9
",
    )
    .unwrap();
    let out = bin().arg("daqd").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}

#[test]
fn xyp_text_and_binary_match_library_export() {
    let dir = tempfile::tempdir().unwrap();
    let (key, _) = seed_archive(dir.path());
    let archive = Archive::open(dir.path()).unwrap();
    let root = dir.path().to_str().unwrap();

    let out = run(&[
        "xyp", "--root", root, "--device", "DEV", "--data", "SIG", "--date", "2026-01-05",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let direct = archive.export(&key, f64::NEG_INFINITY, f64::INFINITY, ExportFormat::Text).unwrap();
    assert_eq!(out.stdout, direct);

    let out = run(&[
        "xyp", "--root", root, "--device", "DEV", "--data", "SIG", "--date", "2026-01-05",
        "--from", "0.25", "--to", "0.75", "--format", "binary",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let direct = archive.export(&key, 0.25, 0.75, ExportFormat::Binary).unwrap();
    assert_eq!(out.stdout, direct);
    assert_eq!(out.stdout.len(), 72); // 0.25, 0.5, 0.75: both boundaries inclusive

    // --out writes the same bytes to a file instead.
    let out_file = dir.path().join("dump.txt");
    let out = run(&[
        "xyp", "--root", root, "--device", "DEV", "--data", "SIG", "--date", "2026-01-05",
        "--out", out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let direct = archive.export(&key, f64::NEG_INFINITY, f64::INFINITY, ExportFormat::Text).unwrap();
    assert_eq!(fs::read(&out_file).unwrap(), direct);
}

#[test]
fn xyp_svg_plots_two_records_as_one_polyline() {
    let dir = tempfile::tempdir().unwrap();
    let archive = Archive::open(dir.path()).unwrap();
    let date = NaiveDate::from_ymd_opt(2026, 1, 5).unwrap();
    let key = ArchiveKey::new(date, "DEV", "PAIR").unwrap();
    let records = [ArchiveRecord::new(0.0, 1.0, 10.0), ArchiveRecord::new(1.0, 2.0, 20.0)];
    archive.append(&key, &meta_for("DEV", "PAIR", "K"), &records).unwrap();

    let out = run(&[
        "xyp", "--root", dir.path().to_str().unwrap(), "--device", "DEV", "--data", "PAIR",
        "--date", "2026-01-05", "--format", "svg",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let svg = String::from_utf8(out.stdout).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 1);
    let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(points.split(' ').count(), 2);
    // Sidecar units label the y axis.
    assert!(svg.contains("PAIR [K]"));
}

#[test]
fn xyp_unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    seed_archive(dir.path());
    let out = run(&[
        "xyp", "--root", dir.path().to_str().unwrap(), "--device", "DEV", "--data", "NOPE",
        "--date", "2026-01-05",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn xyp_follow_tracks_a_growing_file() {
    let dir = tempfile::tempdir().unwrap();
    let archive = Archive::open(dir.path()).unwrap();
    let date = NaiveDate::from_ymd_opt(2026, 1, 5).unwrap();
    let key = ArchiveKey::new(date, "DEV", "GROW").unwrap();
    let meta = meta_for("DEV", "GROW", "V");
    let out_file = dir.path().join("follow.txt");

    let mut child = bin()
        .args([
            "xyp", "--root", dir.path().to_str().unwrap(), "--device", "DEV", "--data", "GROW",
            "--date", "2026-01-05", "--follow", "0.05", "--follow-for", "2.0",
            "--out", out_file.to_str().unwrap(),
        ])
        .spawn()
        .unwrap();

    // Append while the follower polls; the output file must grow
    // through strictly increasing sizes to the exact final content.
    let mut sizes = Vec::new();
    for batch in 0..10i64 {
        let records: Vec<ArchiveRecord> = (0..3)
            .map(|k| {
                let t = (batch * 3 + k) as f64 * 0.01;
                ArchiveRecord::new(t, t * 2.0, t * 4.0)
            })
            .collect();
        archive.append(&key, &meta, &records).unwrap();
        thread::sleep(Duration::from_millis(80));
        if let Ok(md) = fs::metadata(&out_file) {
            sizes.push(md.len());
        }
    }
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));

    let expected = archive.export(&key, f64::NEG_INFINITY, f64::INFINITY, ExportFormat::Text).unwrap();
    assert_eq!(fs::read(&out_file).unwrap(), expected);
    let distinct: Vec<u64> = {
        let mut d = sizes.clone();
        d.dedup();
        d
    };
    assert!(distinct.len() >= 3, "follow output never grew: sizes {sizes:?}");
    assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "output shrank: {sizes:?}");
}

#[test]
fn xymon_prints_every_published_event_and_round_trips() {
    let mut registry = Registry::new();
    let id = registry
        .register(ChannelDescriptor::new(
            "CRYO",
            "PRES",
            ChannelKind::Slow,
            "bar",
            "bar",
            Arc::new(CalibrationTable::Identity),
        ))
        .unwrap();
    let hub = Hub::new(Arc::new(registry), None);
    let server = serve("127.0.0.1:0", hub.clone(), ServerConfig::default()).unwrap();
    let addr = server.local_addr().to_string();

    let mut child = bin()
        .args(["xymon", "--server", &addr, "--channel", "CRYO.PRES"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();

    // Give the subscription a moment to land before publishing.
    thread::sleep(Duration::from_millis(300));
    let published: Vec<[f64; 3]> = (0..40)
        .map(|k| [k as f64 * 0.5, 1.2 + k as f64 * 1e-3, 1.2 + k as f64 * 1e-3])
        .collect();
    for triple in &published {
        hub.publish(id, *triple, false);
    }
    thread::sleep(Duration::from_millis(300));
    server.shutdown(); // hangs up; xymon exits 0

    let deadline = Instant::now() + Duration::from_secs(10);
    let out = loop {
        match child.try_wait().unwrap() {
            Some(_) => break child.wait_with_output().unwrap(),
            None if Instant::now() > deadline => {
                child.kill().unwrap();
                panic!("xymon did not exit after server shutdown");
            }
            None => thread::sleep(Duration::from_millis(50)),
        }
    };
    assert_eq!(out.status.code(), Some(0));

    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), published.len());
    for (line, want) in lines.iter().zip(&published) {
        let got: Vec<f64> = line.split(' ').map(|f| f.parse().unwrap()).collect();
        assert_eq!(got.len(), 3);
        // The text rule is lossless: parsing recovers the exact floats.
        for (g, w) in got.iter().zip(want) {
            assert_eq!(g.to_bits(), w.to_bits());
        }
    }
}

#[test]
fn xymon_unknown_channel_exits_1_with_server_message() {
    let registry = Arc::new(Registry::new());
    let hub = Hub::new(registry, None);
    let server = serve("127.0.0.1:0", hub, ServerConfig::default()).unwrap();
    let addr = server.local_addr().to_string();

    let out = bin().args(["xymon", "--server", &addr, "--channel", "NO.SUCH"]).output().unwrap();
    server.shutdown();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(stderr.contains("no.such") || stderr.contains("not found"), "stderr: {stderr}");
}

#[test]
fn xymon_connect_failure_exits_1() {
    // Reserve a port, then close it so nothing is listening.
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let out = bin().args(["xymon", "--server", &addr.to_string(), "--channel", "A.B"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot connect"));
}

#[test]
fn bench_minimal_run_counts_the_closed_interval() {
    let out = run(&["bench", "--channels", "1", "--rate", "1000", "--duration", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("samples=1001"), "stderr: {stderr}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("bench: gen="), "stdout: {stdout}");
    assert!(stdout.trim_end().ends_with("gaps=0"), "stdout: {stdout}");
}
