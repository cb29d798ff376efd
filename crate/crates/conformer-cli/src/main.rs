//! Command-line surface for the encoder crates.
//!
//! Three subcommands: `forward` runs an encoder over a WAV file or synthetic
//! features and reports an output summary, `verify` executes the gradient
//! and oracle suites, `params` prints parameter-count tables. Machine-readable
//! output (JSON or CSV) goes to stdout, human-readable progress to stderr.
//!
//! Exit codes: 0 success, 1 failed verification check, 2 configuration
//! error, 3 I/O or file-format error, 4 non-finite numerics.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use conformer_core::error::{Error, Result};
use conformer_core::frontend::{log_mel, read_wav, spec_augment, FeatureMatrix};
use conformer_core::io::{fnv1a64, tensor_to_bytes, write_csv, write_tensor};
use conformer_core::model::{
    apply_ablation, count_params, ConformerConfig, ConformerModel, ContextNetModel, ParamCount,
    Preset, PRESET_TARGETS,
};
use conformer_core::rng::{stream_rng, Stream};
use conformer_core::scalar::Scalar;
use conformer_core::tensor::Tensor;
use conformer_core::verify::{all_passed, run_verify, Fault, Scale, Suite};
use conformer_core::Mode;

use crate::config::{ModelKind, PrecisionKind, RunConfig};

#[derive(Parser)]
#[command(name = "conformer", version, about = "Deterministic speech encoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an encoder forward pass and report an output summary.
    Forward(ForwardArgs),
    /// Run the gradient-check and oracle suites.
    Verify(VerifyArgs),
    /// Print parameter-count tables for presets or a config file.
    Params(ParamsArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).multiple(false))]
struct ForwardArgs {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Input WAV file (PCM16 mono).
    #[arg(long, value_name = "PATH", group = "source")]
    input: Option<PathBuf>,

    /// Use synthetic standard-normal features with this many frames.
    #[arg(long, value_name = "T", group = "source")]
    synthetic: Option<usize>,

    /// Seed for parameters, synthetic input, dropout, and SpecAugment.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Train mode enables dropout and SpecAugment; infer is deterministic.
    #[arg(long, value_enum, default_value_t = ModeArg::Infer)]
    mode: ModeArg,

    /// Write the output tensor to this path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output tensor file format.
    #[arg(long, value_enum, default_value_t = FormatArg::Cfkt)]
    format: FormatArg,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which checks to run: gradcheck, oracle, or all.
    #[arg(long, default_value = "all")]
    suite: String,

    /// Sweep size: small for quick runs, full for the complete grid.
    #[arg(long, default_value = "small")]
    scale: String,

    /// Inject a known defect to prove the suite catches it.
    #[arg(long, hide = true, default_value = "none")]
    fault: String,
}

#[derive(Args)]
struct ParamsArgs {
    /// Preset names (S, M, L); defaults to all three.
    #[arg(value_name = "PRESET")]
    presets: Vec<String>,

    /// Count a custom architecture from a run configuration file instead.
    #[arg(long, value_name = "PATH", conflicts_with = "presets")]
    config: Option<PathBuf>,

    /// Ablation rows applied to the (single) base config, one delta row each.
    #[arg(long, value_name = "ROW")]
    ablation: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Train,
    Infer,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Train => Mode::Train,
            ModeArg::Infer => Mode::Infer,
        }
    }
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Train => "train",
            ModeArg::Infer => "infer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Cfkt,
    Csv,
}

impl FormatArg {
    fn name(self) -> &'static str {
        match self {
            FormatArg::Cfkt => "cfkt",
            FormatArg::Csv => "csv",
        }
    }
}

fn main() {
    let code = match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

/// Documented exit-code mapping for error classes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format { .. } => 3,
        Error::NonFinite { .. } => 4,
        _ => 2,
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Forward(args) => cmd_forward(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Params(args) => cmd_params(&args),
    }
}

fn cmd_forward(args: &ForwardArgs) -> Result<i32> {
    let started = Instant::now();
    let run_cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match run_cfg.precision {
        PrecisionKind::F64 => forward_typed::<f64>(args, &run_cfg, started),
        PrecisionKind::F32 => forward_typed::<f32>(args, &run_cfg, started),
    }
}

fn forward_typed<S: Scalar>(args: &ForwardArgs, cfg: &RunConfig, started: Instant) -> Result<i32> {
    let mode = Mode::from(args.mode);

    let (mut feats, input_desc) = match (&args.input, args.synthetic) {
        (Some(path), None) => {
            let audio = read_wav(path)?;
            let fm = log_mel(&audio, &cfg.frontend)?;
            eprintln!(
                "forward: {} ({:.2} s at {} Hz) -> {} frames x {} mels",
                path.display(),
                audio.duration_s(),
                audio.sample_rate,
                fm.num_frames(),
                fm.num_mels()
            );
            let desc = json!({ "kind": "wav", "path": path.display().to_string() });
            (fm, desc)
        }
        (None, Some(frames)) => {
            let fm = synthetic_features(frames, cfg.frontend.n_mels, cfg.frontend.hop_ms, args.seed)?;
            eprintln!(
                "forward: synthetic input, {} frames x {} mels",
                fm.num_frames(),
                fm.num_mels()
            );
            let desc = json!({ "kind": "synthetic" });
            (fm, desc)
        }
        _ => unreachable!("clap enforces exactly one input source"),
    };

    // SpecAugment is a training-time policy; the run seed overrides the
    // config seed so one flag controls all randomness in a run.
    if mode == Mode::Train {
        let mut sa = cfg.specaugment.clone();
        sa.seed = args.seed;
        feats = spec_augment(&feats, &sa)?;
    }
    let frames = feats.num_frames();

    let features: Tensor<S> = feats.cast();
    let output = match cfg.model {
        ModelKind::Conformer => {
            let arch = cfg.conformer.resolve(cfg.frontend.n_mels)?;
            let model = ConformerModel::<S>::build(arch, args.seed)?;
            model.encode(&features, mode, args.seed)?
        }
        ModelKind::ContextNet => {
            let arch = cfg.contextnet.resolve(cfg.frontend.n_mels)?;
            let model = ContextNetModel::<S>::build(arch, args.seed)?;
            model.encode(&features, mode, args.seed)?
        }
    };
    if !output.all_finite() {
        return Err(Error::NonFinite { op: "encode" });
    }

    let bytes = tensor_to_bytes(&output);
    let checksum = format!("{:#018x}", fnv1a64(&bytes));

    if let Some(out) = &args.out {
        match args.format {
            FormatArg::Cfkt => write_tensor(out, &output)?,
            FormatArg::Csv => {
                let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
                write_csv(&mut w, &output)?;
                w.flush()?;
            }
        }
        eprintln!("forward: wrote {} ({})", out.display(), args.format.name());
    }

    let timing_ms = started.elapsed().as_secs_f64() * 1000.0;
    let mut input_desc = input_desc;
    input_desc["frames"] = json!(frames);
    let report = json!({
        "command": "forward",
        "seed": args.seed,
        "mode": args.mode.name(),
        "config": serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?,
        "input": input_desc,
        "output": {
            "shape": output.shape(),
            "mean": output.mean_f64(),
            "std": output.std_f64(),
            "checksum": checksum,
            "path": args.out.as_ref().map(|p| p.display().to_string()),
            "format": args.format.name(),
        },
        "timing_ms": timing_ms,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report is valid JSON"));
    eprintln!(
        "forward: output {:?}, checksum {}, {:.1} ms",
        output.shape(),
        checksum,
        timing_ms
    );
    Ok(0)
}

/// Standard-normal feature matrix drawn from the input stream of `seed`.
fn synthetic_features(
    frames: usize,
    n_mels: usize,
    hop_ms: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    if frames == 0 {
        return Err(Error::Config("synthetic frame count must be positive".into()));
    }
    let mut rng = stream_rng(seed, Stream::Input);
    let data: Vec<f64> = (0..frames * n_mels)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(FeatureMatrix {
        data: Tensor::new(vec![frames, n_mels], data)?,
        hop_ms,
    })
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let started = Instant::now();
    let suite: Suite = args.suite.parse()?;
    let scale: Scale = args.scale.parse()?;
    let fault: Fault = args.fault.parse()?;
    if fault != Fault::None {
        eprintln!("verify: fault injection '{}' active", args.fault);
    }

    let results = run_verify(suite, scale, fault)?;

    eprintln!(
        "{:<44} {:>12} {:>10} {:>6}",
        "check", "max_err", "tolerance", "status"
    );
    for r in &results {
        eprintln!(
            "{:<44} {:>12.3e} {:>10.1e} {:>6}",
            r.name,
            r.max_err,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
    }

    let passed = all_passed(&results);
    let num_passed = results.iter().filter(|r| r.pass).count();
    let timing_ms = started.elapsed().as_secs_f64() * 1000.0;
    let checks: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "max_err": r.max_err,
                "tolerance": r.tolerance,
                "pass": r.pass,
            })
        })
        .collect();
    let report = json!({
        "command": "verify",
        "suite": args.suite,
        "scale": args.scale,
        "checks": checks,
        "passed": passed,
        "timing_ms": timing_ms,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report is valid JSON"));
    eprintln!(
        "verify: {num_passed}/{} checks passed, {:.1} ms",
        results.len(),
        timing_ms
    );
    Ok(if passed { 0 } else { 1 })
}

/// One row of the params table.
struct CountRow {
    name: String,
    count: ParamCount,
    /// Published total-size target, present when a preset is named.
    target: Option<f64>,
    /// Total delta against the base config, present for ablation rows.
    delta: Option<i64>,
}

fn cmd_params(args: &ParamsArgs) -> Result<i32> {
    let started = Instant::now();

    // Resolve the base configurations to count.
    let bases: Vec<(String, ConformerConfig, usize, Option<f64>)> = if let Some(path) = &args.config
    {
        let run_cfg = RunConfig::load(path)?;
        if run_cfg.model != ModelKind::Conformer {
            return Err(Error::Config(
                "params counts conformer architectures; set model = \"conformer\"".into(),
            ));
        }
        let arch = run_cfg.conformer.resolve(run_cfg.frontend.n_mels)?;
        let named = run_cfg.conformer.named_preset()?;
        let decoder_dim = named.map(Preset::decoder_dim).unwrap_or(640);
        let target = named.and_then(preset_target);
        let name = named
            .map(|p| p.name().to_string())
            .unwrap_or_else(|| "custom".to_string());
        vec![(name, arch, decoder_dim, target)]
    } else {
        let names: Vec<String> = if args.presets.is_empty() {
            vec!["S".into(), "M".into(), "L".into()]
        } else {
            args.presets.clone()
        };
        names
            .iter()
            .map(|n| {
                let preset = Preset::parse(n)?;
                Ok((
                    preset.name().to_string(),
                    ConformerConfig::preset(preset),
                    preset.decoder_dim(),
                    preset_target(preset),
                ))
            })
            .collect::<Result<_>>()?
    };

    if !args.ablation.is_empty() && bases.len() != 1 {
        return Err(Error::Config(
            "--ablation needs a single base config; name one preset or pass --config".into(),
        ));
    }

    let mut rows: Vec<CountRow> = Vec::new();
    for (name, arch, decoder_dim, target) in &bases {
        let count = count_params(arch, *decoder_dim)?;
        let base_total = count.total;
        rows.push(CountRow {
            name: name.clone(),
            count,
            target: *target,
            delta: None,
        });
        for row in &args.ablation {
            let ablated = apply_ablation(arch, row)?;
            let count = count_params(&ablated, *decoder_dim)?;
            rows.push(CountRow {
                name: row.clone(),
                count,
                target: None,
                delta: Some(count.total as i64 - base_total as i64),
            });
        }
    }

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "name,encoder,decoder_analytic,total,target,deviation_pct,delta_vs_base"
    )?;
    for row in &rows {
        let (target, deviation) = match row.target {
            Some(t) => {
                let dev = (row.count.total as f64 - t) / t * 100.0;
                (format!("{t:.0}"), format!("{dev:.2}"))
            }
            None => (String::new(), String::new()),
        };
        let delta = row.delta.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            stdout,
            "{},{},{},{},{target},{deviation},{delta}",
            row.name, row.count.encoder, row.count.decoder_analytic, row.count.total
        )?;
    }

    eprintln!(
        "params: {} rows, {:.1} ms",
        rows.len(),
        started.elapsed().as_secs_f64() * 1000.0
    );
    Ok(0)
}

/// Published total-size target in parameters, if the preset has one.
fn preset_target(preset: Preset) -> Option<f64> {
    PRESET_TARGETS
        .iter()
        .find(|(p, _, _)| *p == preset)
        .map(|(_, target, _)| *target)
}
