use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bhident::pipeline::{self, RunConfig};
use bhident::{Error, Result};

#[derive(Parser)]
#[command(name = "bhident", version, about = "B-H curve identification from gap flux-density data")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the seed of the selected stage.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fit the ensemble and build the truncated KLE material model.
    BuildModel,
    /// Mode sensitivities at the nominal state and probe ranking.
    Sensitivity,
    /// Simulate training and validation data at a seeded ground truth.
    MakeData,
    /// Identify the parameter vector by particle swarm optimization.
    Identify,
    /// Check the identified curve against the acceptance thresholds.
    Validate,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.paths.output = out.clone();
    }
    if let Some(seed) = cli.seed_override {
        match cli.command {
            Command::BuildModel => cfg.model.synthetic_seed = seed,
            Command::MakeData => cfg.inversion.y0_seed = seed,
            Command::Identify => cfg.inversion.pso.seed = seed,
            Command::Sensitivity | Command::Validate => {}
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load(cli)?;
    match cli.command {
        Command::BuildModel => {
            let r = pipeline::cmd_build_model(&cfg)?;
            let l1 = r.spectrum[0];
            println!("eigenvalues (lambda_m / lambda_1):");
            for (i, l) in r.spectrum.iter().take(10).enumerate() {
                println!("  {:2}  {:.6e}  {:.3e}", i + 1, l, l / l1);
            }
            println!("truncation M = {}", r.model.dim());
            println!("parameter box: {:?} .. {:?}", r.model.y_min, r.model.y_max);
        }
        Command::Sensitivity => {
            for (i, p) in pipeline::cmd_sensitivity(&cfg)?.iter().enumerate() {
                println!(
                    "  {:2}  ({:+.4}, {:+.4})  score {:.4e}",
                    i + 1,
                    p.position[0],
                    p.position[1],
                    p.score
                );
            }
        }
        Command::MakeData => {
            let d = pipeline::cmd_make_data(&cfg)?;
            println!(
                "training: {} currents x {} probes; validation: {} currents x {} probes",
                d.training.currents.len(),
                d.training.probes.len(),
                d.validation.currents.len(),
                d.validation.probes.len()
            );
            println!("y0 = {:?}", d.ground_truth.y0);
        }
        Command::Identify => {
            let r = pipeline::cmd_identify(&cfg)?;
            print!(
                "{}",
                std::fs::read_to_string(cfg.paths.output.join(pipeline::SUMMARY_FILE))
                    .unwrap_or_else(|_| format!("y_hat = {:?}\n", r.y_hat))
            );
        }
        Command::Validate => {
            let r = pipeline::cmd_validate(&cfg)?;
            println!(
                "max E_rel {:.4e} < {:e}, max E_abs {:.4e} T < {:e} T: PASS",
                r.max_e_rel, r.max_e_rel_threshold, r.max_e_abs, r.max_e_abs_threshold
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
