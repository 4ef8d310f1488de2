//! Command-line front end: profile checking, FSM compilation, trace
//! replay, fuzzing, attack generation, and benchmarking.
//!
//! Exit codes: 0 success, 1 validation failure (invalid profile or
//! verdict mismatch), 2 usage or I/O error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use homewall_core::engine::{ClockMode, Decision, Engine, EngineConfig, ReplayReport};
use homewall_core::fsm::compile_interaction;
use homewall_core::harness::{fuzz_trace, gen_attack, label_trace, AttackParams, AttackScenario};
use homewall_core::packet::{read_jsonl, read_pcap, write_jsonl, write_pcap, Trace};
use homewall_core::parser::{parse_profile, DirLoader, ParseError};
use homewall_core::profile::Profile;

#[derive(Parser)]
#[command(name = "homewall", version, about = "Profile-driven stateful firewall engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate device profiles.
    Check {
        /// Profile files to check.
        #[arg(required = true)]
        profiles: Vec<PathBuf>,
    },
    /// Compile a profile's interactions to state machines.
    Compile {
        profile: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: CompileFormat,
    },
    /// Replay a trace against a set of profiles.
    Run {
        /// Directory of profile YAML files.
        #[arg(long)]
        profiles: PathBuf,
        /// Trace file (.pcap or .jsonl).
        #[arg(long)]
        trace: PathBuf,
        /// Engine configuration (JSON or YAML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the verdict log (JSONL) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Expected-verdict sidecar; exit 1 on any mismatch.
        #[arg(long)]
        expected: Option<PathBuf>,
    },
    /// Fuzz a trace and label it with expected verdicts.
    Fuzz {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of packets to edit.
        #[arg(long, default_value_t = 0.3)]
        fraction: f64,
        /// Output prefix; writes <out>.pcap, <out>.jsonl, <out>.expected.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an attack trace with its expected verdicts.
    Attack {
        /// Scenario: A1, A2, A3 or A4.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1000.0)]
        pps: f64,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Prepend the legitimate preamble (negative control).
        #[arg(long, default_value_t = false)]
        with_precondition: bool,
        /// Output prefix; writes trace, sidecar, and the target profile.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace repeatedly and report decision-time statistics.
    Bench {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CompileFormat {
    Json,
    Dot,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if !failure.message.is_empty() {
                eprintln!("{}", failure.message);
            }
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Check { profiles } => cmd_check(&profiles),
        Command::Compile { profile, format } => cmd_compile(&profile, format),
        Command::Run {
            profiles,
            trace,
            config,
            log,
            expected,
        } => cmd_run(&profiles, &trace, config.as_deref(), log.as_deref(), expected.as_deref()),
        Command::Fuzz {
            profiles,
            trace,
            config,
            seed,
            fraction,
            out,
        } => cmd_fuzz(&profiles, &trace, config.as_deref(), seed, fraction, &out),
        Command::Attack {
            scenario,
            pps,
            duration,
            with_precondition,
            out,
        } => cmd_attack(&scenario, pps, duration, with_precondition, &out),
        Command::Bench {
            profiles,
            trace,
            config,
            repeat,
        } => cmd_bench(&profiles, &trace, config.as_deref(), repeat),
    }
}

fn load_profile(path: &Path) -> Result<Profile, Failure> {
    let source = fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let loader = DirLoader::new(dir);
    parse_profile(&source, &loader).map_err(|e| match e {
        ParseError::Validation(_) => Failure::validation(format!("{}: {e}", path.display())),
        other => Failure::io(format!("{}: {other}", path.display())),
    })
}

fn cmd_check(paths: &[PathBuf]) -> Result<(), Failure> {
    let mut worst = 0u8;
    let mut messages = Vec::new();
    for path in paths {
        // Pattern libraries only need to be well-formed documents.
        let library = match fs::read_to_string(path) {
            Ok(source) => is_pattern_library(&source),
            Err(_) => false,
        };
        if library {
            continue;
        }
        match load_profile(path) {
            Ok(_) => {}
            Err(failure) => {
                worst = worst.max(failure.code);
                messages.push(failure.message);
            }
        }
    }
    if worst == 0 {
        Ok(())
    } else {
        Err(Failure {
            code: worst,
            message: messages.join("\n"),
        })
    }
}

fn cmd_compile(path: &Path, format: CompileFormat) -> Result<(), Failure> {
    let profile = load_profile(path)?;
    for interaction in &profile.interactions {
        let fsm = compile_interaction(interaction)
            .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
        match format {
            CompileFormat::Json => println!("{}", fsm.to_json()),
            CompileFormat::Dot => print!("{}", fsm.to_dot()),
        }
    }
    Ok(())
}

/// A YAML file without a `device-info` section is a pattern library, not
/// a device profile.
fn is_pattern_library(source: &str) -> bool {
    match homewall_core::yaml::parse(source) {
        Ok(node) => node
            .as_mapping()
            .map(|m| !m.contains("device-info"))
            .unwrap_or(false),
        Err(_) => false,
    }
}

fn load_profile_dir(dir: &Path) -> Result<Vec<Profile>, Failure> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|ext| ext == "yaml" || ext == "yml")
                .unwrap_or(false)
        })
        .collect();
    entries.sort();

    let mut profiles = Vec::new();
    for path in entries {
        let source = fs::read_to_string(&path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        if is_pattern_library(&source) {
            continue;
        }
        profiles.push(load_profile(&path)?);
    }
    if profiles.is_empty() {
        return Err(Failure::io(format!(
            "no device profiles found in {}",
            dir.display()
        )));
    }
    Ok(profiles)
}

fn load_trace(path: &Path) -> Result<Trace, Failure> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "pcap" | "cap" => {
            let bytes = fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            read_pcap(&bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
        }
        "jsonl" | "json" => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            read_jsonl(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
        }
        other => Err(Failure::io(format!(
            "{}: unknown trace format `{other}` (use .pcap or .jsonl)",
            path.display()
        ))),
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, Failure> {
    let path = match path {
        Some(p) => p,
        None => return Ok(EngineConfig::default()),
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let value: Value = if ext == "yaml" || ext == "yml" {
        yaml_to_json(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?
    };
    config_from_json(&value).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn yaml_to_json(text: &str) -> Result<Value, String> {
    fn convert(node: &homewall_core::yaml::Node) -> Value {
        use homewall_core::yaml::Node;
        match node {
            Node::Scalar(s) => match &s.value {
                None => Value::Null,
                Some(text) => {
                    if !s.quoted {
                        if let Ok(n) = text.parse::<i64>() {
                            return json!(n);
                        }
                        if let Ok(f) = text.parse::<f64>() {
                            return json!(f);
                        }
                        if text == "true" || text == "false" {
                            return json!(text == "true");
                        }
                    }
                    json!(text)
                }
            },
            Node::Sequence(items) => Value::Array(items.iter().map(convert).collect()),
            Node::Mapping(m) => {
                let mut obj = serde_json::Map::new();
                for (k, v) in &m.entries {
                    obj.insert(k.clone(), convert(v));
                }
                Value::Object(obj)
            }
        }
    }
    let node = homewall_core::yaml::parse(text).map_err(|e| e.to_string())?;
    Ok(convert(&node))
}

fn config_from_json(value: &Value) -> Result<EngineConfig, String> {
    let obj = value.as_object().ok_or("config must be an object")?;
    let mut config = EngineConfig::default();
    if let Some(prefixes) = obj.get("lan-prefixes").and_then(Value::as_array) {
        for p in prefixes {
            let text = p.as_str().ok_or("lan-prefixes entries must be strings")?;
            config.lan_prefixes.push(text.parse()?);
        }
    }
    if let Some(addrs) = obj.get("gateway-addrs").and_then(Value::as_array) {
        for a in addrs {
            let text = a.as_str().ok_or("gateway-addrs entries must be strings")?;
            config
                .gateway_addrs
                .push(text.parse().map_err(|_| format!("invalid address `{text}`"))?);
        }
    }
    if let Some(d) = obj.get("default-unprofiled").and_then(Value::as_str) {
        config.default_unprofiled = match d {
            "ACCEPT" | "accept" => Decision::Accept,
            "DROP" | "drop" => Decision::Drop,
            other => return Err(format!("invalid default-unprofiled `{other}`")),
        };
    }
    if let Some(m) = obj.get("clock-mode").and_then(Value::as_str) {
        config.clock_mode = match m {
            "REPLAY" | "replay" => ClockMode::Replay,
            "LIVE" | "live" => ClockMode::Live,
            other => return Err(format!("invalid clock-mode `{other}`")),
        };
    }
    if let Some(age) = obj.get("dns-max-age").and_then(Value::as_f64) {
        config.dns_max_age = Some(age);
    }
    Ok(config)
}

fn build_engine(profiles: Vec<Profile>, config: EngineConfig) -> Result<Engine, Failure> {
    let mut engine = Engine::new(config);
    for profile in profiles {
        engine
            .register_profile(profile)
            .map_err(|e| Failure::validation(e.to_string()))?;
    }
    Ok(engine)
}

fn report_json(report: &ReplayReport) -> Value {
    serde_json::to_value(report).expect("report serializes")
}

fn cmd_run(
    profiles_dir: &Path,
    trace_path: &Path,
    config_path: Option<&Path>,
    log_path: Option<&Path>,
    expected_path: Option<&Path>,
) -> Result<(), Failure> {
    let profiles = load_profile_dir(profiles_dir)?;
    let trace = load_trace(trace_path)?;
    let config = load_config(config_path)?;
    let mut engine = build_engine(profiles, config)?;
    let report = engine.run_replay(&trace);

    if let Some(path) = log_path {
        fs::write(path, report.verdict_log_jsonl())
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    }
    println!("{}", report_json(&report));

    if let Some(path) = expected_path {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let sidecar: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let expected: Vec<Decision> = sidecar
            .get("expected")
            .and_then(Value::as_array)
            .ok_or_else(|| Failure::io("sidecar lacks `expected` array".to_string()))?
            .iter()
            .map(|v| match v.as_str() {
                Some("ACCEPT") => Ok(Decision::Accept),
                Some("DROP") => Ok(Decision::Drop),
                other => Err(Failure::io(format!("bad expected entry {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        let got = report.decisions();
        let mismatches: Vec<usize> = (0..expected.len().max(got.len()))
            .filter(|&i| expected.get(i) != got.get(i))
            .collect();
        if !mismatches.is_empty() {
            return Err(Failure::validation(format!(
                "verdicts differ from expected at packet indices {mismatches:?}"
            )));
        }
    }
    Ok(())
}

fn cmd_fuzz(
    profiles_dir: &Path,
    trace_path: &Path,
    config_path: Option<&Path>,
    seed: u64,
    fraction: f64,
    out: &Path,
) -> Result<(), Failure> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Failure::io("fraction must be in (0, 1]"));
    }
    let profiles = load_profile_dir(profiles_dir)?;
    let trace = load_trace(trace_path)?;
    let config = load_config(config_path)?;
    let (fuzzed, edit_log) = fuzz_trace(&trace, seed, fraction);
    let labeled = label_trace(&fuzzed, &profiles, &config, Some(edit_log));

    write_outputs(out, &labeled.trace, &labeled.sidecar_json())?;
    println!(
        "{}",
        json!({
            "v": 1,
            "packets": labeled.trace.len(),
            "edits": labeled.edit_log.as_ref().map(|l| l.edits.len()).unwrap_or(0),
            "expected_accept": labeled.expected.iter().filter(|d| **d == Decision::Accept).count(),
            "expected_drop": labeled.expected.iter().filter(|d| **d == Decision::Drop).count(),
        })
    );
    Ok(())
}

fn write_outputs(prefix: &Path, trace: &Trace, sidecar: &Value) -> Result<(), Failure> {
    let write = |suffix: &str, bytes: Vec<u8>| -> Result<(), Failure> {
        let path = prefix.with_extension(suffix);
        fs::write(&path, bytes).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    };
    write("pcap", write_pcap(trace))?;
    write("jsonl", write_jsonl(trace).into_bytes())?;
    write("expected.json", serde_json::to_vec_pretty(sidecar).unwrap())?;
    Ok(())
}

fn cmd_attack(
    scenario: &str,
    pps: f64,
    duration: f64,
    with_precondition: bool,
    out: &Path,
) -> Result<(), Failure> {
    let scenario = AttackScenario::parse(scenario)
        .ok_or_else(|| Failure::io(format!("unknown scenario `{scenario}` (A1..A4)")))?;
    let params = AttackParams {
        pps,
        duration,
        with_precondition,
    };
    let case = gen_attack(scenario, &params).map_err(|e| Failure::io(e.to_string()))?;

    write_outputs(out, &case.labeled.trace, &case.labeled.sidecar_json())?;
    let profile_path = out.with_extension("profile.yaml");
    fs::write(&profile_path, homewall_core::to_canonical_yaml(&case.profile))
        .map_err(|e| Failure::io(format!("{}: {e}", profile_path.display())))?;
    println!(
        "{}",
        json!({
            "v": 1,
            "scenario": case.scenario.name(),
            "packets": case.labeled.trace.len(),
            "expected_accept": case.labeled.expected.iter().filter(|d| **d == Decision::Accept).count(),
            "expected_drop": case.labeled.expected.iter().filter(|d| **d == Decision::Drop).count(),
        })
    );
    Ok(())
}

fn cmd_bench(
    profiles_dir: &Path,
    trace_path: &Path,
    config_path: Option<&Path>,
    repeat: usize,
) -> Result<(), Failure> {
    let profiles = load_profile_dir(profiles_dir)?;
    let trace = load_trace(trace_path)?;
    let config = load_config(config_path)?;

    let mut runs = Vec::new();
    let mut categories: BTreeMap<&str, u64> = BTreeMap::new();
    for _ in 0..repeat.max(1) {
        let mut engine = build_engine(profiles.clone(), config.clone())?;
        let report = engine.run_replay(&trace);
        *categories.entry("a").or_default() += report.categories.a;
        *categories.entry("b").or_default() += report.categories.b;
        *categories.entry("c").or_default() += report.categories.c;
        *categories.entry("d").or_default() += report.categories.d;
        runs.push(report.latency_us);
    }
    let mean = runs.iter().map(|r| r.mean).sum::<f64>() / runs.len() as f64;
    let p2_5 = runs.iter().map(|r| r.p2_5).fold(f64::INFINITY, f64::min);
    let p97_5 = runs.iter().map(|r| r.p97_5).fold(0.0f64, f64::max);
    println!(
        "{}",
        json!({
            "v": 1,
            "repeats": repeat.max(1),
            "packets_per_run": trace.len(),
            "latency_us": {"mean": mean, "p2_5": p2_5, "p97_5": p97_5},
            "categories": categories,
        })
    );
    Ok(())
}
