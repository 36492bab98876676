//! Command-line front end for the paging-privacy toolkit.
//!
//! Exit codes: 0 clean, 1 the input held data problems (skipped lines,
//! undecodable payloads, malformed logs) with the report still printed
//! where possible, 2 operator error (bad arguments, unreadable files,
//! invalid hex or scenario configs).

use std::fmt;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{TimeZone, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use lte_paging::analysis::{
    classify_smart_paging, correlate_cells, detect_imsi_exposure, render_cross_cell_table,
    render_refresh_table, render_stats_table, render_verdict, summarize, CorrelationOptions,
    CrossCellReport, ImsiExposure, PagingStats, SmartPagingThresholds,
};
use lte_paging::capture::{
    decode_capture, format_timestamp, parse_capture, parse_event_log, serialize_capture,
    serialize_event_log, CaptureFile, DecodedCapture, ParseMode,
};
use lte_paging::pcch::{decode_pcch, parse_hex, render_xml, PagingMessage};
use lte_paging::synth::{emit_event_log, generate, ScenarioConfig};

#[derive(Parser)]
#[command(name = "lte-paging", version, about = "LTE paging capture toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode one paging message from a hex payload ("-" reads it from
    /// standard input)
    Decode {
        hex: String,
        #[arg(long, value_enum, default_value_t = DecodeFormat::Summary)]
        format: DecodeFormat,
    },
    /// Parse a capture file and report paging statistics
    Analyze {
        /// Capture path, "-" for standard input
        path: String,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Compare two cell captures for simultaneous pagings
    Correlate {
        capture_a: String,
        capture_b: String,
        /// Coincidence window in seconds
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// How long after a one-sided paging a simultaneous pair still
        /// counts as an escalation, in seconds
        #[arg(long, default_value_t = 10.0)]
        escalation_horizon: f64,
        /// Treat the positional pair as neighbor cells and these two
        /// captures as distant same-TA cells, and classify the paging
        /// strategy
        #[arg(long, num_args = 2, value_names = ["DISTANT_A", "DISTANT_B"])]
        classify: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Check an M-TMSI observation log against each event type
    Persistence {
        /// Event log path, "-" for standard input
        path: String,
        /// Horizon for judging the periodic refresh, in hours
        #[arg(long, default_value_t = 48.0)]
        horizon_hours: f64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Generate synthetic captures plus ground truth from a scenario config
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeFormat {
    Xml,
    Json,
    Summary,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Machine,
}

/// Errors that abort the run. Anything recoverable enough to still print
/// a report is handled in place instead.
enum CliError {
    /// Input data is broken beyond reporting (exit 1).
    Data(String),
    /// The invocation itself is wrong (exit 2).
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(msg) | CliError::Usage(msg) => f.write_str(msg),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

/// Whether the printed report was built over flawed input.
enum Outcome {
    Clean,
    DataErrors,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::DataErrors) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Decode { hex, format } => cmd_decode(&hex, format),
        Command::Analyze { path, format } => cmd_analyze(&path, format),
        Command::Correlate {
            capture_a,
            capture_b,
            window,
            escalation_horizon,
            classify,
            format,
        } => cmd_correlate(
            &capture_a,
            &capture_b,
            window,
            escalation_horizon,
            classify.as_deref(),
            format,
        ),
        Command::Persistence {
            path,
            horizon_hours,
            format,
        } => cmd_persistence(&path, horizon_hours, format),
        Command::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
    }
}

fn read_input(path: &str) -> Result<String, CliError> {
    if path == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| CliError::Usage(format!("reading standard input: {e}")))?;
        Ok(text)
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("reading {path}: {e}")))
    }
}

fn cmd_decode(hex: &str, format: DecodeFormat) -> Result<Outcome, CliError> {
    let text = if hex == "-" {
        read_input("-")?
    } else {
        hex.to_string()
    };
    let payload =
        parse_hex(&text).map_err(|e| CliError::Usage(format!("bad hex payload: {e}")))?;
    let (message, diagnostics) = decode_pcch(&payload)
        .map_err(|e| CliError::Data(format!("payload does not decode: {e}")))?;
    match format {
        DecodeFormat::Xml => print!("{}", render_xml(&message)),
        DecodeFormat::Json => {
            #[derive(serde::Serialize)]
            struct DecodeReport<'a> {
                message: &'a PagingMessage,
                consumed_bits: usize,
                trailing_pad_nonzero: bool,
            }
            let report = DecodeReport {
                message: &message,
                consumed_bits: diagnostics.consumed_bits,
                trailing_pad_nonzero: diagnostics.trailing_pad_nonzero,
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        DecodeFormat::Summary => print!("{}", render_summary(&message)),
    }
    Ok(Outcome::Clean)
}

fn render_summary(message: &PagingMessage) -> String {
    let mut flags = Vec::new();
    if message.system_info_modification {
        flags.push("systemInfoModification");
    }
    if message.etws_indication {
        flags.push("etws-Indication");
    }
    let mut out = String::new();
    let count = message.records.len();
    let noun = if count == 1 {
        "1 record".to_string()
    } else {
        format!("{count} records")
    };
    if flags.is_empty() {
        out.push_str(&format!("paging ({noun})\n"));
    } else {
        out.push_str(&format!("{} ({noun})\n", flags.join(" + ")));
    }
    for (index, record) in message.records.iter().enumerate() {
        let kind = match record.ue_identity {
            lte_paging::UeIdentity::STmsi(_) => "s-TMSI",
            lte_paging::UeIdentity::Imsi(_) => "IMSI",
        };
        out.push_str(&format!(
            "  {}. {kind} {} cn-Domain {}\n",
            index + 1,
            record.ue_identity.canonical(),
            record.cn_domain
        ));
    }
    out
}

/// Loads and decodes one capture, tolerating bad lines and payloads so
/// the report can still describe them.
fn load_capture(path: &str) -> Result<(CaptureFile, DecodedCapture), CliError> {
    let text = read_input(path)?;
    let file = parse_capture(&text, ParseMode::Lenient)
        .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    let decoded = decode_capture(&file);
    Ok((file, decoded))
}

fn render_exposures(exposures: &[ImsiExposure]) -> String {
    let mut out = String::from("IMSI exposures:\n");
    for exposure in exposures {
        let when = Utc
            .timestamp_millis_opt(exposure.timestamp_ms)
            .single()
            .map(format_timestamp)
            .unwrap_or_else(|| exposure.timestamp_ms.to_string());
        out.push_str(&format!(
            "  {when}  cell {}  imsi {}\n",
            exposure.cell_id, exposure.imsi
        ));
    }
    out
}

fn cmd_analyze(path: &str, format: ReportFormat) -> Result<Outcome, CliError> {
    let (file, decoded) = load_capture(path)?;
    let stats = summarize(&decoded.messages);
    let exposures = detect_imsi_exposure(&decoded.messages);
    match format {
        ReportFormat::Table => {
            print!("{}", render_stats_table(&stats));
            if !file.skipped.is_empty() {
                println!("Skipped lines: {}", file.skipped.len());
                for skip in &file.skipped {
                    println!("  line {}: {}", skip.line, skip.reason);
                }
            }
            if !decoded.failures.is_empty() {
                println!("Undecodable payloads: {}", decoded.failures.len());
                for failure in &decoded.failures {
                    println!("  record {}: {}", failure.record_index, failure.error);
                }
            }
            if !exposures.is_empty() {
                print!("{}", render_exposures(&exposures));
            }
        }
        ReportFormat::Machine => {
            #[derive(serde::Serialize)]
            struct AnalyzeReport<'a> {
                stats: &'a PagingStats,
                skipped_lines: usize,
                decode_failures: usize,
                imsi_exposures: &'a [ImsiExposure],
            }
            let report = AnalyzeReport {
                stats: &stats,
                skipped_lines: file.skipped.len(),
                decode_failures: decoded.failures.len(),
                imsi_exposures: &exposures,
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
    }
    if file.skipped.is_empty() && decoded.failures.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::DataErrors)
    }
}

fn cmd_correlate(
    capture_a: &str,
    capture_b: &str,
    window: f64,
    escalation_horizon: f64,
    classify: Option<&[String]>,
    format: ReportFormat,
) -> Result<Outcome, CliError> {
    let options = CorrelationOptions {
        window_seconds: window,
        escalation_horizon_seconds: escalation_horizon,
    };
    let mut dirty = false;
    let mut correlate_pair = |path_a: &str, path_b: &str| -> Result<CrossCellReport, CliError> {
        let (file_a, decoded_a) = load_capture(path_a)?;
        let (file_b, decoded_b) = load_capture(path_b)?;
        dirty |= !file_a.skipped.is_empty()
            || !file_b.skipped.is_empty()
            || !decoded_a.failures.is_empty()
            || !decoded_b.failures.is_empty();
        correlate_cells(&decoded_a.messages, &decoded_b.messages, &options)
            .map_err(|e| CliError::Data(format!("{path_a} / {path_b}: {e}")))
    };

    match classify {
        None => {
            let report = correlate_pair(capture_a, capture_b)?;
            match format {
                ReportFormat::Table => print!("{}", render_cross_cell_table(&report)),
                ReportFormat::Machine => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                }
            }
        }
        Some(distant) => {
            let neighbor = correlate_pair(capture_a, capture_b)?;
            let distant = correlate_pair(&distant[0], &distant[1])?;
            let verdict =
                classify_smart_paging(&neighbor, &distant, &SmartPagingThresholds::default());
            match format {
                ReportFormat::Table => {
                    println!("Neighbor cells:");
                    print!("{}", render_cross_cell_table(&verdict.neighbor));
                    println!("Distant cells:");
                    print!("{}", render_cross_cell_table(&verdict.distant));
                    print!("{}", render_verdict(&verdict));
                }
                ReportFormat::Machine => {
                    println!("{}", serde_json::to_string_pretty(&verdict).expect("serializable"));
                }
            }
        }
    }
    Ok(if dirty { Outcome::DataErrors } else { Outcome::Clean })
}

fn cmd_persistence(path: &str, horizon_hours: f64, format: ReportFormat) -> Result<Outcome, CliError> {
    let text = read_input(path)?;
    let log = parse_event_log(&text).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    let table = lte_paging::analysis::verify_refresh(&log, horizon_hours);
    match format {
        ReportFormat::Table => print!("{}", render_refresh_table(&table)),
        ReportFormat::Machine => {
            println!("{}", serde_json::to_string_pretty(&table).expect("serializable"));
        }
    }
    Ok(Outcome::Clean)
}

fn cmd_synth(config_path: &PathBuf, seed: Option<u64>, out: &PathBuf) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", config_path.display())))?;
    let mut config =
        ScenarioConfig::parse(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let (files, truth) =
        generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("creating {}: {e}", out.display())))?;

    let write = |name: String, contents: String| -> Result<(), CliError> {
        let path = out.join(&name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Usage(format!("writing {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    };
    for (cell_id, file) in &files {
        write(format!("cell_{cell_id}.cap"), serialize_capture(file))?;
    }
    let mut truth_json = serde_json::to_string_pretty(&truth).expect("serializable");
    truth_json.push('\n');
    write("ground_truth.json".to_string(), truth_json)?;
    let log = emit_event_log(&config, &truth);
    write("events.csv".to_string(), serialize_event_log(&log))?;
    Ok(Outcome::Clean)
}
