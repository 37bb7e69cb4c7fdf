//! Operator executables behind the `cryodaq` binary.
//!
//! Four subcommands cover the operator workflow: `daqd` runs a
//! configured acquisition session (plus the network server when the
//! config asks for one), `xyp` queries the archive and exports text,
//! binary, or an SVG plot, `xymon` follows one channel live over TCP,
//! and `bench` exercises the fast path end to end with synthetic
//! channels.
//!
//! Conventions shared by every subcommand: stdout carries data, stderr
//! carries diagnostics, and exit codes are stable (documented on each
//! subcommand). Record-bearing text output uses the same shortest
//! round-trip float format as archive text export, so lines can be
//! compared byte for byte across tools.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::acquire::{self, AcquisitionConfig, EngineError, SessionInputs, SessionStatus, TimeMode};
use crate::archive::{Archive, ArchiveError, ArchiveKey, ArchiveRecord, ExportFormat, RECORD_BYTES};
use crate::condition::AmplifierConfig;
use crate::config::{self, DaemonConfig};
use crate::netproto::{serve, Client, Hub, ServerConfig, SubscriptionEnd};
use crate::plot::{self, PlotConfig};
use crate::quench::DetectorConfig;
use crate::registry::{CalibrationTable, ChannelDescriptor, ChannelKind, Registry};
use crate::simsrc::{derive_seed, CurrentRamp, QuenchScenario, SignalSource};
use crate::textfmt;

/// Parse `argv` and run the selected subcommand, returning the process
/// exit code for `main` to pass to `std::process::exit`.
pub fn run() -> i32 {
    match Cli::parse().command {
        Command::Daqd(a) => run_daqd(&a.config),
        Command::Xyp(a) => run_xyp(&a),
        Command::Xymon(a) => run_xymon(&a),
        Command::Bench(a) => run_bench(&a),
    }
}

#[derive(Parser)]
#[command(name = "cryodaq", version, about = "Cryogenic test-stand data acquisition tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an acquisition session from a config file.
    ///
    /// Exit codes: 0 success, 2 config error, 3 archive or session
    /// error, 4 server bind error.
    Daqd(DaqdArgs),
    /// Query the archive; export text or binary, or plot to SVG.
    ///
    /// Exit codes: 0 success, 1 key not found or archive error, 2 bad
    /// flags.
    Xyp(XypArgs),
    /// Subscribe to one channel and print each event as a text line.
    ///
    /// Exit codes: 0 stream ended, 1 connect failure or unknown
    /// channel.
    Xymon(XymonArgs),
    /// Measure fast-path throughput with synthetic channels.
    ///
    /// Exit codes: 0 success, 2 bad parameters, 3 archive failure.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DaqdArgs {
    /// Facility config file.
    config: PathBuf,
}

#[derive(Args)]
struct XypArgs {
    /// Archive root (default: $CRYODAQ_ROOT).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Device directory name.
    #[arg(long)]
    device: String,
    /// Data file name within the device.
    #[arg(long)]
    data: String,
    /// Acquisition date, YYYY-MM-DD.
    #[arg(long)]
    date: String,
    /// Inclusive lower time bound (default: unbounded).
    #[arg(long, default_value_t = f64::NEG_INFINITY)]
    from: f64,
    /// Inclusive upper time bound (default: unbounded).
    #[arg(long, default_value_t = f64::INFINITY)]
    to: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Poll the file every SECS seconds and keep emitting new records
    /// from the start of the file, ignoring --from/--to. SVG output is
    /// rewritten whole on each poll and requires --out.
    #[arg(long, value_name = "SECS")]
    follow: Option<f64>,
    /// Stop following after this many seconds (default: until killed).
    #[arg(long, value_name = "SECS", requires = "follow")]
    follow_for: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Binary,
    Svg,
}

#[derive(Args)]
struct XymonArgs {
    /// Server endpoint, host:port.
    #[arg(long)]
    server: String,
    /// Channel to monitor, DEVICE.DATA.
    #[arg(long)]
    channel: String,
    /// Also write each line to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of synthetic fast channels.
    #[arg(long, default_value_t = 64)]
    channels: u32,
    /// Fast sampling rate in Hz.
    #[arg(long, default_value_t = 100_000.0)]
    rate: f64,
    /// Session length in seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Archive root (default: a fresh directory under the system temp
    /// dir, removed afterwards).
    #[arg(long)]
    archive_root: Option<PathBuf>,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("cryodaq {msg}");
    code
}

fn env_root() -> Option<PathBuf> {
    std::env::var_os(config::ROOT_ENV).map(PathBuf::from)
}

fn run_daqd(config_path: &Path) -> i32 {
    let (cfg, config_dir) = match DaemonConfig::load(config_path) {
        Ok(v) => v,
        Err(e) => return fail(2, format_args!("daqd: {e}")),
    };
    let env = env_root();
    let realized = match cfg.realize(&config_dir, Utc::now(), env.as_deref()) {
        Ok(v) => v,
        Err(e) => return fail(2, format_args!("daqd: {e}")),
    };
    let archive = match Archive::open(&realized.archive_root) {
        Ok(a) => a,
        Err(e) => return fail(3, format_args!("daqd: {e}")),
    };

    let hub = Hub::new(realized.registry.clone(), Some(realized.drops_channel));
    // Seed setpoint channels so the first slow scan (and any early GET)
    // sees the configured initial value.
    for &(id, value) in &realized.setpoints {
        let calibrated = realized.registry.get(id).calibration.calibrate(value);
        hub.write_live(id, [0.0, value, calibrated]);
    }

    let server = match &realized.server {
        Some(section) => {
            let server_cfg = match section.outbound_capacity {
                Some(n) => ServerConfig { outbound_capacity: n },
                None => ServerConfig::default(),
            };
            match serve(section.endpoint.as_str(), hub.clone(), server_cfg) {
                Ok(srv) => {
                    // Announced on stderr so scripts can pick up the
                    // actual port when the config binds port 0.
                    eprintln!("cryodaq daqd: listening on {}", srv.local_addr());
                    Some(srv)
                }
                Err(e) => {
                    return fail(4, format_args!("daqd: cannot bind {}: {e}", section.endpoint))
                }
            }
        }
        None => None,
    };

    let inputs = SessionInputs {
        registry: &realized.registry,
        sources: &realized.sources,
        supply: realized.supply,
        detector: realized.detector,
        archive: &archive,
        hub: Some(&hub),
    };
    let result = acquire::run_session(&realized.acquisition, inputs);
    if let Some(srv) = server {
        srv.shutdown();
    }
    match result {
        Ok(handle) => {
            eprintln!(
                "cryodaq daqd: session {} {}: generated={} archived={} gaps={} triggers={}",
                handle.session_id,
                handle.status.as_str(),
                handle.generated_total(),
                handle.archived_total(),
                handle.gap_total(),
                handle.triggers.len(),
            );
            if handle.status == SessionStatus::Faulted {
                3
            } else {
                0
            }
        }
        Err(EngineError::ConfigInvalid(m)) => fail(2, format_args!("daqd: {m}")),
        Err(e) => fail(3, format_args!("daqd: {e}")),
    }
}

fn run_xyp(args: &XypArgs) -> i32 {
    let root = match args.root.clone().or_else(env_root) {
        Some(r) => r,
        None => return fail(2, "xyp: no archive root: pass --root or set CRYODAQ_ROOT"),
    };
    let date = match NaiveDate::parse_from_str(&args.date, "%Y-%m-%d") {
        Ok(d) => d,
        Err(_) => return fail(2, format_args!("xyp: bad --date {:?}, want YYYY-MM-DD", args.date)),
    };
    if args.from > args.to {
        return fail(2, "xyp: --from exceeds --to");
    }
    let key = match ArchiveKey::new(date, &args.device, &args.data) {
        Ok(k) => k,
        Err(e) => return fail(2, format_args!("xyp: {e}")),
    };
    if !root.is_dir() {
        return fail(1, format_args!("xyp: archive root {} does not exist", root.display()));
    }
    let archive = match Archive::open(&root) {
        Ok(a) => a,
        Err(e) => return fail(1, format_args!("xyp: {e}")),
    };
    match args.follow {
        None => export_once(&archive, &key, args),
        Some(interval) => follow_loop(&archive, &key, args, interval),
    }
}

fn export_once(archive: &Archive, key: &ArchiveKey, args: &XypArgs) -> i32 {
    let payload = match args.format {
        OutputFormat::Text => archive.export(key, args.from, args.to, ExportFormat::Text),
        OutputFormat::Binary => archive.export(key, args.from, args.to, ExportFormat::Binary),
        OutputFormat::Svg => archive
            .query(key, args.from, args.to)
            .map(|records| render_plot(archive, key, &records).into_bytes()),
    };
    let payload = match payload {
        Ok(p) => p,
        Err(e) => return fail(1, format_args!("xyp: {e}")),
    };
    match write_output(args.out.as_deref(), &payload, false) {
        Ok(()) => 0,
        Err(e) => fail(1, format_args!("xyp: {e}")),
    }
}

fn follow_loop(archive: &Archive, key: &ArchiveKey, args: &XypArgs, interval: f64) -> i32 {
    if !(interval > 0.0) {
        return fail(2, "xyp: --follow interval must be positive");
    }
    if args.format == OutputFormat::Svg && args.out.is_none() {
        return fail(2, "xyp: --follow with --format svg needs --out");
    }
    // Start each invocation from a clean output file.
    if args.format != OutputFormat::Svg {
        if let Some(path) = &args.out {
            if let Err(e) = fs::write(path, []) {
                return fail(1, format_args!("xyp: {e}"));
            }
        }
    }
    let deadline = args.follow_for.map(|s| Instant::now() + Duration::from_secs_f64(s));
    let mut last_time = f64::NEG_INFINITY;
    let mut history: Vec<ArchiveRecord> = Vec::new();
    loop {
        match archive.tail(key, last_time) {
            // The file may not exist yet (the writer is still coming
            // up); keep polling.
            Err(ArchiveError::KeyNotFound(_)) => {}
            Err(e) => return fail(1, format_args!("xyp: {e}")),
            Ok(records) => {
                if let Some(last) = records.last() {
                    last_time = last.time_index();
                    let written = match args.format {
                        OutputFormat::Text => {
                            let mut text = String::new();
                            for r in &records {
                                text.push_str(&textfmt::format_triple(&r.0));
                            }
                            write_output(args.out.as_deref(), text.as_bytes(), true)
                        }
                        OutputFormat::Binary => {
                            let mut bytes = Vec::with_capacity(records.len() * RECORD_BYTES);
                            for r in &records {
                                bytes.extend_from_slice(&r.to_bytes());
                            }
                            write_output(args.out.as_deref(), &bytes, true)
                        }
                        OutputFormat::Svg => {
                            history.extend_from_slice(&records);
                            let svg = render_plot(archive, key, &history);
                            write_output(args.out.as_deref(), svg.as_bytes(), false)
                        }
                    };
                    if let Err(e) = written {
                        return fail(1, format_args!("xyp: {e}"));
                    }
                }
            }
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                return 0;
            }
        }
        thread::sleep(Duration::from_secs_f64(interval));
    }
}

/// Time on x, calibrated value on y; axis units come from the sidecar
/// when one is readable.
fn render_plot(archive: &Archive, key: &ArchiveKey, records: &[ArchiveRecord]) -> String {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.0[0], r.0[2])).collect();
    let y_label = match archive.read_sidecar(key) {
        Ok(meta) if !meta.units_cal.is_empty() => format!("{} [{}]", key.data_name, meta.units_cal),
        _ => key.data_name.clone(),
    };
    let cfg = PlotConfig {
        title: format!("{}.{} {}", key.device_name, key.data_name, key.date),
        y_label,
        ..PlotConfig::default()
    };
    plot::render_xy(&points, &cfg)
}

fn write_output(out: Option<&Path>, payload: &[u8], append: bool) -> io::Result<()> {
    match out {
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(payload)?;
            stdout.flush()
        }
        Some(path) if append => {
            fs::OpenOptions::new().create(true).append(true).open(path)?.write_all(payload)
        }
        Some(path) => fs::write(path, payload),
    }
}

fn run_xymon(args: &XymonArgs) -> i32 {
    let client = match Client::connect(args.server.as_str()) {
        Ok(c) => c,
        Err(e) => return fail(1, format_args!("xymon: cannot connect to {}: {e}", args.server)),
    };
    let sub = match client.subscribe(&args.channel) {
        Ok(s) => s,
        Err(e) => return fail(1, format_args!("xymon: {e}")),
    };
    let mut sink = match &args.out {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Some(f),
            Err(e) => return fail(1, format_args!("xymon: cannot open {}: {e}", path.display())),
        },
        None => None,
    };
    let stdout = io::stdout();
    loop {
        match sub.recv() {
            Ok(event) => {
                let line = textfmt::format_triple(&event.triple());
                let mut lock = stdout.lock();
                // Flush per event so a piped consumer sees lines as
                // they happen; a closed pipe is a normal way to stop.
                if lock.write_all(line.as_bytes()).and_then(|()| lock.flush()).is_err() {
                    return 0;
                }
                if let Some(f) = &mut sink {
                    if let Err(e) = f.write_all(line.as_bytes()) {
                        return fail(1, format_args!("xymon: write failed: {e}"));
                    }
                }
            }
            // Both ends of stream are clean for a bounded session: the
            // daemon finished and hung up.
            Err(SubscriptionEnd::Unsubscribed) | Err(SubscriptionEnd::ConnectionLost) => return 0,
        }
    }
}

fn run_bench(args: &BenchArgs) -> i32 {
    if args.channels == 0 {
        return fail(2, "bench: --channels must be at least 1");
    }
    if !(args.rate > 0.0) {
        return fail(2, "bench: --rate must be positive");
    }
    if !(args.duration >= 0.0) {
        return fail(2, "bench: --duration must be nonnegative");
    }

    // A fresh default root per run keeps repeated invocations from
    // colliding on the pinned session id.
    let (root, is_temp) = match &args.archive_root {
        Some(r) => (r.clone(), false),
        None => {
            let nanos = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0);
            let name = format!("cryodaq-bench-{}-{nanos}", std::process::id());
            (std::env::temp_dir().join(name), true)
        }
    };

    let mut registry = Registry::new();
    let mut sources = HashMap::new();
    let mut fast_channels = Vec::new();
    for i in 0..args.channels {
        let desc = ChannelDescriptor::new(
            "BENCH",
            format!("CH{i:03}"),
            ChannelKind::Fast,
            "V",
            "V",
            Arc::new(CalibrationTable::Identity),
        )
        .with_conditioning(AmplifierConfig::passthrough());
        let id = registry.register(desc).expect("synthetic names are unique");
        // Noiseless taps with per-channel seeds: repeated runs write
        // byte-identical archives.
        let scenario = QuenchScenario::quiet(0.0, derive_seed(0, u64::from(id.0)));
        sources.insert(id, SignalSource::VoltageTap { scenario });
        fast_channels.push(id);
    }

    let start = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
    let mut cfg = AcquisitionConfig::new("BENCH", start);
    cfg.fast_rate_hz = args.rate;
    cfg.duration_s = args.duration;
    cfg.fast_channels = fast_channels;
    cfg.time_mode = TimeMode::FasterThanRealtime;
    // Size the queue to hold the entire run so a slow disk shows up as
    // wall time, never as gaps.
    let batches_per_channel = cfg.fast_sample_count().div_ceil(cfg.fast_batch_len as u64) + 1;
    cfg.archive_queue_capacity = (batches_per_channel * u64::from(args.channels)) as usize;

    let archive = match Archive::open(&root) {
        Ok(a) => a,
        Err(e) => return fail(3, format_args!("bench: {e}")),
    };
    let inputs = SessionInputs {
        registry: &registry,
        sources: &sources,
        supply: CurrentRamp { max_amps: 0.0, duration_s: 0.0 },
        detector: Some(DetectorConfig {
            threshold_volts: 1.0,
            hold_time_s: 0.002,
            mutual_inductance_h: 0.0,
        }),
        archive: &archive,
        hub: None,
    };

    let started = Instant::now();
    let result = acquire::run_session(&cfg, inputs);
    let wall = started.elapsed().as_secs_f64();

    let code = match result {
        Ok(handle) => {
            let generated = handle.generated_total();
            let archived = handle.archived_total();
            let rate = generated as f64 / wall;
            let mb_per_s = archived as f64 * RECORD_BYTES as f64 / wall / 1e6;
            eprintln!(
                "cryodaq bench: channels={} samples={generated} wall_s={wall:.3}",
                args.channels,
            );
            // Machine-readable summary; generation and detection are
            // one inline pass, so their rates coincide.
            println!(
                "bench: gen={} det={} arch={} gaps={}",
                textfmt::format_f64(rate),
                textfmt::format_f64(rate),
                textfmt::format_f64(mb_per_s),
                handle.gap_total(),
            );
            0
        }
        Err(EngineError::ConfigInvalid(m)) => fail(2, format_args!("bench: {m}")),
        Err(e) => fail(3, format_args!("bench: {e}")),
    };
    if is_temp {
        let _ = fs::remove_dir_all(&root);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(argv)
    }

    #[test]
    fn subcommands_parse_with_defaults() {
        let cli = parse(&["cryodaq", "bench"]).unwrap();
        let Command::Bench(b) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(b.channels, 64);
        assert_eq!(b.rate, 100_000.0);
        assert_eq!(b.duration, 1.0);
        assert!(b.archive_root.is_none());

        let cli = parse(&[
            "cryodaq", "xyp", "--device", "MAG01", "--data", "VT00", "--date", "2026-08-15",
        ])
        .unwrap();
        let Command::Xyp(x) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(x.from, f64::NEG_INFINITY);
        assert_eq!(x.to, f64::INFINITY);
        assert!(matches!(x.format, OutputFormat::Text));
        assert!(x.follow.is_none());
    }

    #[test]
    fn xyp_requires_its_mandatory_flags() {
        assert!(parse(&["cryodaq", "xyp", "--device", "MAG01"]).is_err());
        assert!(parse(&["cryodaq", "xyp", "--device", "M", "--data", "D", "--date", "x", "--format", "pdf"]).is_err());
        // --follow-for only makes sense while following.
        assert!(parse(&[
            "cryodaq", "xyp", "--device", "M", "--data", "D", "--date", "2026-01-01",
            "--follow-for", "2",
        ])
        .is_err());
    }

    #[test]
    fn xyp_rejects_bad_values_with_exit_2() {
        let args = XypArgs {
            root: Some(PathBuf::from("/nonexistent-root")),
            device: "M".into(),
            data: "D".into(),
            date: "15-08-2026".into(),
            from: f64::NEG_INFINITY,
            to: f64::INFINITY,
            format: OutputFormat::Text,
            out: None,
            follow: None,
            follow_for: None,
        };
        assert_eq!(run_xyp(&args), 2);

        let args = XypArgs { date: "2026-08-15".into(), from: 2.0, to: 1.0, ..args };
        assert_eq!(run_xyp(&args), 2);
    }

    #[test]
    fn xyp_missing_key_is_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let args = XypArgs {
            root: Some(dir.path().to_path_buf()),
            device: "M".into(),
            data: "D".into(),
            date: "2026-08-15".into(),
            from: f64::NEG_INFINITY,
            to: f64::INFINITY,
            format: OutputFormat::Text,
            out: None,
            follow: None,
            follow_for: None,
        };
        assert_eq!(run_xyp(&args), 1);
    }

    #[test]
    fn bench_tiny_run_reports_complete_generation() {
        let dir = tempfile::tempdir().unwrap();
        let args = BenchArgs {
            channels: 2,
            rate: 1000.0,
            duration: 0.01,
            archive_root: Some(dir.path().to_path_buf()),
        };
        assert_eq!(run_bench(&args), 0);
        // 2 channels x 11 samples, identity calibration, no gaps.
        let archive = Archive::open(dir.path()).unwrap();
        let key = ArchiveKey::new(
            NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
            "BENCH",
            "CH000",
        )
        .unwrap();
        assert_eq!(archive.query(&key, f64::NEG_INFINITY, f64::INFINITY).unwrap().len(), 11);
    }

    #[test]
    fn bench_rejects_nonsense_parameters() {
        let args = BenchArgs { channels: 0, rate: 1000.0, duration: 0.1, archive_root: None };
        assert_eq!(run_bench(&args), 2);
        let args = BenchArgs { channels: 1, rate: -5.0, duration: 0.1, archive_root: None };
        assert_eq!(run_bench(&args), 2);
    }

    #[test]
    fn xymon_reports_connect_failure() {
        // A port nothing listens on: bind-then-drop reserves a number
        // that is very unlikely to be reused between the two calls.
        let addr = {
            let sock = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            sock.local_addr().unwrap()
        };
        let args = XymonArgs { server: addr.to_string(), channel: "A.B".into(), out: None };
        assert_eq!(run_xymon(&args), 1);
    }
}
