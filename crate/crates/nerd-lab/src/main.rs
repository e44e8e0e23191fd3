use clap::{Parser, Subcommand};
use nerd_lab::commands::{analyze, fit, gen_data, report, train, FamilyChoice};
use nerd_lab::config::{Overrides, RunConfig};
use nerd_lab::Result;
use std::path::PathBuf;

/// Simulated decoded-neurofeedback lab: generate cohorts, train per-subject
/// denoising models, score them against recorded trials, and produce the
/// analysis report.
#[derive(Parser)]
#[command(name = "nerd-lab", version, about, max_term_width = 100)]
struct Cli {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-subject work (overrides the config file).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory (overrides the config file and NERD_LAB_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and write it to the output directory.
    GenData {
        /// Number of subjects to generate (overrides the config file).
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Train models for the cohort, resuming interrupted runs.
    Train {
        /// Comma-separated subject ids; the whole cohort when omitted.
        #[arg(long, value_delimiter = ',', value_name = "IDS")]
        subjects: Option<Vec<String>>,
        /// Which model family to train: nerd, control, or both.
        #[arg(long, default_value = "both")]
        family: String,
        /// Keep checkpoints every N epochs (overrides the config file).
        #[arg(long, value_name = "N")]
        checkpoint_stride: Option<usize>,
    },
    /// Score retained checkpoints per trial and pick each best epoch.
    Fit {
        /// Comma-separated subject ids; the whole cohort when omitted.
        #[arg(long, value_delimiter = ',', value_name = "IDS")]
        subjects: Option<Vec<String>>,
        /// Which model family to score: nerd, control, or both.
        #[arg(long, default_value = "both")]
        family: String,
    },
    /// Build the analysis report tree from the fitted checkpoints.
    Analyze,
    /// Index every artifact in the output directory.
    Report,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let stride = match &cli.command {
        Command::Train { checkpoint_stride, .. } => *checkpoint_stride,
        _ => None,
    };
    cfg.apply(&Overrides { seed: cli.seed, out: cli.out.clone(), jobs: cli.jobs, checkpoint_stride: stride });
    if let Command::GenData { subjects: Some(n) } = &cli.command {
        cfg.dataset.subjects = *n;
    }
    for warning in cfg.normalize() {
        eprintln!("warning: {warning}");
    }
    cfg.validate()?;
    let env_out = std::env::var("NERD_LAB_OUT").ok();
    let out = cfg.out_dir(env_out.as_deref());

    match cli.command {
        Command::GenData { .. } => {
            let s = gen_data::run(&cfg, &out)?;
            println!(
                "wrote {} subjects ({} voxels, {} trials each, reward scale {:.6}) to {}",
                s.subjects,
                s.v,
                s.trials_per_subject,
                s.reward_scale,
                s.dataset_file.display()
            );
        }
        Command::Train { subjects, family, .. } => {
            let opts =
                train::TrainOptions { subjects, family: FamilyChoice::parse(&family)? };
            let units = train::run(&cfg, &out, &opts)?;
            for u in &units {
                let state = match u.action {
                    train::UnitAction::Fresh => format!("trained {} epochs", u.new_epochs),
                    train::UnitAction::Resumed => {
                        format!("resumed, {} more epochs", u.new_epochs)
                    }
                    train::UnitAction::Skipped => "already complete".to_string(),
                };
                match u.last_log {
                    Some((loss, reward)) => println!(
                        "{}/{}: {state} (epoch {}, loss {loss:.5}, reward {reward:.5})",
                        u.subject_id,
                        u.family.label(),
                        u.final_epoch
                    ),
                    None => println!(
                        "{}/{}: {state} (epoch {})",
                        u.subject_id,
                        u.family.label(),
                        u.final_epoch
                    ),
                }
            }
        }
        Command::Fit { subjects, family } => {
            let opts = fit::FitOptions { subjects, family: FamilyChoice::parse(&family)? };
            let reportout = fit::run(&cfg, &out, &opts)?;
            for f in &reportout.fits {
                println!(
                    "{}/{}: best epoch {} (mean NLL {:.5})",
                    f.subject_id,
                    f.family.label(),
                    f.e_star,
                    f.min_nll
                );
            }
            if let Some(p) = &reportout.paired {
                println!(
                    "paired best-NLL test over {} subjects: mean diff {:.5}, t = {:.4}, p = {:.4}",
                    p.n, p.mean_diff, p.t_stat, p.p_value
                );
            }
        }
        Command::Analyze => {
            let report = analyze::run(&cfg, &out)?;
            for n in &report.notes {
                println!("note: {n}");
            }
            println!("analysis written to {}", report.summary_path.parent().unwrap().display());
            println!("summary: {}", report.summary_path.display());
        }
        Command::Report => {
            let s = report::run(&out)?;
            if s.empty {
                eprintln!("warning: {} has no artifacts to index", out.display());
            }
            println!("indexed {} files into {}", s.files, s.index_path.display());
        }
    }
    Ok(())
}
