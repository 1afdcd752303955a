use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use vpstitch::config::{Method, ProjectConfig};
use vpstitch::metrics::MetricsReport;
use vpstitch::pipeline::{self, RunReport};
use vpstitch::prior::ModeRequest;
use vpstitch::synth::{SceneMode, SceneOutput, SynthSpec};
use vpstitch::Error;

#[derive(Parser)]
#[command(name = "vpstitch", version, about = "Panorama stitching with vanishing-point similarity priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a project.
    Stitch(RunArgs),
    /// Estimate and write the similarity prior only.
    Prior(RunArgs),
    /// Generate a synthetic scene with a project file that stitches it.
    Synth(SynthArgs),
    /// Compute LD and GDIC for a directory of deformed meshes.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Manhattan,
    Fallback,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Vpg,
    ZeroRotation,
    GlobalHomography,
    Unrotated,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneArg {
    Manhattan,
    RandomLines,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Analytic,
    Raster,
}

/// Flags override the corresponding project keys.
#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    reference: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output directory for the scene and its project.json.
    #[arg(long)]
    out: PathBuf,
    /// JSON scene spec; flags below override its keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    roll_range: Option<f64>,
    #[arg(long, value_enum)]
    scene: Option<SceneArg>,
    #[arg(long, value_enum)]
    output: Option<OutputArg>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Directory holding deformed_<id>.json files.
    #[arg(long)]
    dir: PathBuf,
    /// truth.json enabling GDIC.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    reference: usize,
    /// Where metrics.json goes; defaults to the mesh directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DisconnectedGraph { .. } => 2,
        Error::Io { .. } | Error::Image { .. } | Error::Format { .. } | Error::Bounds { .. } | Error::ImageTooSmall { .. } => 3,
        Error::InvalidSpec(_) => 4,
        _ => 1,
    }
}

fn project(args: &RunArgs) -> vpstitch::Result<ProjectConfig> {
    let mut cfg = ProjectConfig::load(&args.project)?;
    if let Some(r) = args.reference {
        cfg.reference = r;
    }
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Auto => ModeRequest::Auto,
            ModeArg::Manhattan => ModeRequest::Manhattan,
            ModeArg::Fallback => ModeRequest::Fallback,
        };
    }
    if let Some(m) = args.method {
        cfg.method = match m {
            MethodArg::Vpg => Method::Vpg,
            MethodArg::ZeroRotation => Method::ZeroRotation,
            MethodArg::GlobalHomography => Method::GlobalHomography,
            MethodArg::Unrotated => Method::Unrotated,
        };
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn print_run(report: &RunReport, dir: &Path) {
    let mode = report.mode.map_or_else(|| "-".into(), |m| format!("{m:?}").to_lowercase());
    println!(
        "{}: {} images, {} edges, reference {}, mode {mode}, epsilon {}, vp images {}",
        report.command,
        report.images,
        report.edges,
        report.reference,
        opt(report.epsilon, 4),
        report.vp_images
    );
    if report.ld.is_some() || report.gdic.is_some() {
        println!("LD {}  GDIC {} deg", opt(report.ld, 6), opt(report.gdic, 3));
    }
    for t in &report.timings {
        println!("  {:<10} {:8.3} s", t.stage, t.seconds);
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    println!("outputs in {}", dir.display());
}

fn print_metrics(m: &MetricsReport, out: &Path) {
    println!("LD {:.6}  GDIC {} deg (reference {})", m.ld, opt(m.gdic, 3), m.reference);
    for w in &m.warnings {
        warn!("{w}");
    }
    println!("wrote {}", out.join("metrics.json").display());
}

fn synth_spec(args: &SynthArgs) -> vpstitch::Result<SynthSpec> {
    let mut spec = match &args.spec {
        Some(p) => SynthSpec::read(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(c) = args.cameras {
        spec.cameras = c;
    }
    if let Some(o) = args.overlap {
        spec.overlap = o;
    }
    if let Some(r) = args.roll_range {
        spec.roll_range_deg = r;
    }
    if let Some(m) = args.scene {
        spec.mode = match m {
            SceneArg::Manhattan => SceneMode::Manhattan,
            SceneArg::RandomLines => SceneMode::RandomLines,
        };
    }
    if let Some(o) = args.output {
        spec.output = match o {
            OutputArg::Analytic => SceneOutput::Analytic,
            OutputArg::Raster => SceneOutput::Raster,
        };
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> vpstitch::Result<()> {
    match cli.command {
        Command::Stitch(args) => {
            let cfg = project(&args)?;
            let out = pipeline::stitch(&cfg)?;
            print_run(&out.report, &cfg.output);
        }
        Command::Prior(args) => {
            let cfg = project(&args)?;
            let stage = pipeline::prior_only(&cfg)?;
            let mode = format!("{:?}", stage.prior.mode).to_lowercase();
            println!("prior: {} images, mode {mode}, epsilon {}", stage.prior.theta.len(), opt(stage.prior.epsilon, 4));
            for (i, (t, s)) in stage.prior.theta.iter().zip(&stage.prior.scales).enumerate() {
                println!("  image {i}: theta {:8.3} deg  scale {s:.4}", t.degrees());
            }
            for w in &stage.warnings {
                warn!("{w}");
            }
        }
        Command::Synth(args) => {
            let spec = synth_spec(&args)?;
            let project = pipeline::synthesize(&spec, &args.out)?;
            println!("{} cameras written; project {}", spec.cameras, project.display());
        }
        Command::Eval(args) => {
            let out = args.out.clone().unwrap_or_else(|| args.dir.clone());
            let m = pipeline::evaluate(&args.dir, args.truth.as_deref(), args.reference, &out)?;
            print_metrics(&m, &out);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("VPSTITCH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            warn!("VPSTITCH_THREADS ignored: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Error::DisconnectedGraph { components } = &e {
                for (k, c) in components.iter().enumerate() {
                    eprintln!("component {k}: images {c:?}");
                }
            }
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
