use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use spikelab::harness::{emit_plot_data, run_experiment, run_trials, sweep, sweep_grid, trials_csv, write_outputs, ExperimentConfig, PlotStyle, Report};
use spikelab::transforms::{cauchy_transform, t_transform, transform_real, Order, Which};
use spikelab::{predict, Model, Result, SpectralMeasure, SpikeSpec};

#[derive(Parser)]
#[command(name = "spikelab", version, about = "Outlier eigenvalues and eigenvector overlaps of spiked random matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    #[value(name = "G", alias = "g")]
    G,
    #[value(name = "T", alias = "t")]
    T,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Theta,
}

#[derive(Subcommand)]
enum Command {
    /// Predicted limits and overlaps for a list of spike strengths (JSON on stdout).
    Predict {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value = "additive")]
        model: Model,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
    },
    /// Evaluate G or T (or its derivative) at a point off the support.
    Transform {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, value_enum)]
        which: TransformArg,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        /// Imaginary part of z; complex values print as `re,im`.
        #[arg(long, allow_hyphen_values = true)]
        im: Option<f64>,
        #[arg(long, default_value_t = 0)]
        order: u8,
    },
    /// Run the Monte Carlo trials of a configuration and emit the trial CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a configuration and compare with predictions; exit status 1 on failure.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Single-spike sweep over θ, printed as plot data.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "theta")]
        param: SweepParam,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value = "transition_curve")]
        style: PlotStyle,
        /// Only the predicted curve, no simulation.
        #[arg(long)]
        predict_only: bool,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Predict { measure, model, theta } => {
            let m = SpectralMeasure::from_file(measure)?;
            let p = predict(&m, &SpikeSpec::new(theta)?, model)?;
            println!("{}", serde_json::to_string_pretty(&p.spikes)?);
        }
        Command::Transform { measure, which, z, im, order } => {
            let m = SpectralMeasure::from_file(measure)?;
            let order = Order::try_from(order)?;
            let which = match which {
                TransformArg::G => Which::G,
                TransformArg::T => Which::T,
            };
            match im {
                None => println!("{}", transform_real(&m, which, z, order)?),
                Some(im) => {
                    let z = Complex64::new(z, im);
                    let v = match which {
                        Which::G => cauchy_transform(&m, z, order)?,
                        Which::T => t_transform(&m, z, order)?,
                    };
                    println!("{},{}", v.re, v.im);
                }
            }
        }
        Command::Simulate { config } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let csv = trials_csv(&run_trials(&cfg)?, cfg.record_wallclock);
            match &cfg.outputs.trials_csv {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Verify { config } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let out = run_experiment(&cfg)?;
            write_outputs(&out, &cfg.outputs)?;
            if cfg.outputs.report.is_none() {
                println!("{}", serde_json::to_string_pretty(&out.report)?);
            }
            eprintln!("{}", if out.report.pass { "PASS" } else { "FAIL" });
            return Ok(out.report.pass);
        }
        Command::Sweep { config, param: SweepParam::Theta, from, to, steps, style, predict_only } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let report = Report::Sweep(sweep(&cfg, &sweep_grid(from, to, steps), !predict_only)?);
            print!("{}", emit_plot_data(&report, style)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
