//! `binpick`: one binary exposing the pipeline stages with reproducible,
//! seeded configuration.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure (divergence, non-finite results).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use binpick_core::grasp::{GenParams, GraspSet, GripperSpec};
use binpick_core::library::ObjectLibrary;
use binpick_core::mesh::TriangleMesh;
use binpick_core::pipeline::{
    encode_dataset, evaluate, pick, scenes_gen, train_model, write_report_artifacts,
    EvalOptions, ScenesGenOptions, TrainFileConfig,
};
use binpick_core::policy::PolicyVariant;
use binpick_core::Error as CoreError;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nfile formats: DPH1 (depth raster), TSR1 (grid tensor), MFN1 (model), dataset v1"
);

#[derive(Parser)]
#[command(name = "binpick", version, long_version = LONG_VERSION)]
#[command(about = "Model-based bin picking: grasp generation, synthetic scenes, training, and grasp selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grasp-pose generation on object meshes.
    Grasps {
        #[command(subcommand)]
        action: GraspsAction,
    },
    /// Synthetic scene dataset generation.
    Scenes {
        #[command(subcommand)]
        action: ScenesAction,
    },
    /// Export ground-truth tensors for every scene of a dataset.
    Encode(EncodeArgs),
    /// Train the estimator on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained model over a dataset.
    Eval(EvalArgs),
    /// Select a grasp from a single depth raster.
    Pick(PickArgs),
    /// Render an evaluation report into text and CSV tables.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum GraspsAction {
    /// Generate grasps for one mesh and one gripper.
    Gen(GraspsGenArgs),
}

#[derive(Args)]
struct GraspsGenArgs {
    /// Object mesh (OBJ or binary STL, meters).
    #[arg(long)]
    mesh: PathBuf,
    /// Gripper spec JSON ({"kind": "suction" | "parallel_jaw", ...}).
    #[arg(long)]
    gripper: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output grasp set JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    class_id: u32,
    /// Candidate count (surface samples or point pairs).
    #[arg(long, default_value_t = 2000)]
    candidates: usize,
    /// Keep at most this many grasps.
    #[arg(long, default_value_t = 12)]
    max_keep: usize,
}

#[derive(Subcommand)]
enum ScenesAction {
    /// Generate a cluttered-scene dataset.
    Gen(ScenesGenArgs),
}

#[derive(Args)]
struct ScenesGenArgs {
    /// Object library (TOML or JSON).
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    cycles: usize,
    /// Scenes per cycle; fill levels run 1..=drop-limit.
    #[arg(long)]
    drop_limit: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of scenes that receive grasp annotations (overrides the
    /// library setting).
    #[arg(long)]
    annotate_fraction: Option<f64>,
    /// Worker threads (0 = automatic). Output is identical for any value.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training config TOML ([train], [loss], [augment_cfg] tables).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Full,
    NoOpe,
}

impl From<VariantArg> for PolicyVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => PolicyVariant::Full,
            VariantArg::NoOpe => PolicyVariant::NoOpeScore,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    /// Output report JSON.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    presence_floor: f64,
}

#[derive(Args)]
struct PickArgs {
    /// Input depth raster (DPH1).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Full)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0.5)]
    presence_floor: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON produced by `eval`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                CoreError::Numeric(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CoreError> {
    match cli.command {
        Command::Grasps {
            action: GraspsAction::Gen(args),
        } => grasps_gen(&args),
        Command::Scenes {
            action: ScenesAction::Gen(args),
        } => {
            let library = ObjectLibrary::load(&args.library)?;
            let summary = scenes_gen(
                &library,
                &ScenesGenOptions {
                    cycles: args.cycles,
                    drop_limit: args.drop_limit,
                    seed: args.seed,
                    annotate_fraction: args.annotate_fraction,
                    jobs: args.jobs,
                },
                &args.out,
            )?;
            println!(
                "wrote {} scenes ({} annotated, K_max = {}) to {}",
                summary.scenes,
                summary.annotated,
                summary.k_max,
                args.out.display()
            );
            if summary.skipped_objects > 0 {
                log::warn!(
                    "{} object origins left the measurement volume",
                    summary.skipped_objects
                );
            }
            Ok(())
        }
        Command::Encode(args) => {
            let n = encode_dataset(&args.data, &args.out)?;
            println!("encoded {n} tensors to {}", args.out.display());
            Ok(())
        }
        Command::Train(args) => {
            let cfg = load_train_config(args.config.as_deref())?;
            let summary = train_model(&args.data, &cfg, &args.out)?;
            println!(
                "trained {} parameters for {} steps: loss {:.4} -> {:.4}; model at {}",
                summary.parameters,
                summary.steps,
                summary.first_loss,
                summary.final_loss,
                args.out.display()
            );
            Ok(())
        }
        Command::Eval(args) => {
            let report = evaluate(
                &args.data,
                &args.model,
                &EvalOptions {
                    variant: args.variant.into(),
                    presence_floor: args.presence_floor,
                    ..EvalOptions::default()
                },
            )?;
            std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
            println!(
                "mean AP {:.4} | classification {:.4} | placement success {:.4} | mean d_p {:.4}",
                report.mean_ap,
                report.classification_rate,
                report.placement.success_rate,
                report.placement.mean_relative_d_p
            );
            println!("report written to {}", args.report.display());
            Ok(())
        }
        Command::Pick(args) => {
            let selection = pick(
                &args.depth,
                &args.model,
                args.variant.into(),
                args.presence_floor,
            )?;
            match selection {
                Some(sel) => println!("{}", serde_json::to_string_pretty(&sel)?),
                None => println!("null"),
            }
            Ok(())
        }
        Command::Report(args) => {
            let report: binpick_core::eval::EvalReport =
                serde_json::from_str(&std::fs::read_to_string(&args.report)?)?;
            write_report_artifacts(&report, &args.out)?;
            println!("report artifacts written to {}", args.out.display());
            Ok(())
        }
    }
}

fn grasps_gen(args: &GraspsGenArgs) -> Result<(), CoreError> {
    let mesh = TriangleMesh::load(&args.mesh)?;
    let gripper: GripperSpec = serde_json::from_str(&std::fs::read_to_string(&args.gripper)?)?;
    let params = GenParams {
        n_candidates: args.candidates,
        max_keep: args.max_keep,
        ..GenParams::default()
    };
    let set = GraspSet::generate(
        args.class_id,
        &mesh,
        std::slice::from_ref(&gripper),
        &params,
        args.seed,
    )?;
    set.save(&args.out)?;
    println!(
        "kept {} grasps for gripper '{}' at {}",
        set.total(),
        gripper.id(),
        args.out.display()
    );
    Ok(())
}

fn load_train_config(path: Option<&Path>) -> Result<TrainFileConfig, CoreError> {
    let Some(path) = path else {
        return Ok(TrainFileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::format(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: TrainFileConfig =
        toml::from_str(&text).map_err(|e| CoreError::format(format!("train config: {e}")))?;
    // Background directory is relative to the config file.
    if let (Some(bg), Some(base)) = (&cfg.backgrounds, path.parent()) {
        if bg.is_relative() {
            cfg.backgrounds = Some(base.join(bg));
        }
    }
    Ok(cfg)
}
