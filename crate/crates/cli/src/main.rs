use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrid_spmv::{read_matrix_market_file, ExecConfig, ExecModel, LatencyModel, ProgressMode};
use spmv_bench::{
    cmd_cg, cmd_gen, cmd_spmv, format_partition_stats, matrix_id, partition_stats, spmv_record,
    timer_resolution, BenchRecord, CgArgs, RunConfig, SpmvArgs,
};

#[derive(Parser)]
#[command(
    name = "hspmv",
    version,
    about = "Distributed SpMV benchmark harness (ranks are in-process thread groups)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an extruded 2D Laplacian as Matrix Market.
    Gen {
        nx: usize,
        ny: usize,
        layers: usize,
        out: PathBuf,
    },
    /// Time repeated multiplies under one configuration.
    Spmv {
        matrix: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time one Jacobi-preconditioned CG solve with b = 1.
    Cg {
        matrix: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = hybrid_spmv::DEFAULT_RTOL)]
        rtol: f64,
        #[arg(long, default_value_t = hybrid_spmv::DEFAULT_MAX_ITERATIONS)]
        max_iterations: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Thread-partition imbalance of each scheme, per rank and phase.
    PartitionStats {
        matrix: PathBuf,
        /// Threads computing per rank.
        #[arg(long, short = 'w', default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 1)]
        ranks: usize,
    },
    /// Run `spmv` over every combination of the listed models, rank and
    /// thread counts. Configurations a model cannot run are skipped.
    Sweep {
        matrix: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "serial,vector,task,task-balanced"
        )]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        ranks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,4")]
        threads: Vec<usize>,
        #[command(flatten)]
        latency: LatencyArgs,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "serial")]
    model: String,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Split rows between ranks by nonzeros.
    #[arg(long)]
    weighted_decomp: bool,
    #[command(flatten)]
    latency: LatencyArgs,
}

#[derive(Args, Clone)]
struct LatencyArgs {
    /// Injected delay per message, microseconds.
    #[arg(long, default_value_t = 0.0)]
    latency_us: f64,
    /// Injected delay per vector element, nanoseconds.
    #[arg(long, default_value_t = 0.0)]
    latency_per_elem_ns: f64,
    #[arg(long, value_enum, default_value_t = Progress::Active)]
    progress: Progress,
}

#[derive(ValueEnum, Clone, Copy)]
enum Progress {
    /// Latency elapses only while the receiver waits.
    Active,
    /// Latency elapses in real time from the send.
    Background,
}

impl LatencyArgs {
    fn model(&self) -> Result<LatencyModel> {
        let us = |v: f64, name: &str| {
            Duration::try_from_secs_f64(v * 1e-6).with_context(|| format!("invalid {name}: {v}"))
        };
        Ok(LatencyModel::new(
            us(self.latency_us, "--latency-us")?,
            us(self.latency_per_elem_ns * 1e-3, "--latency-per-elem-ns")?,
            match self.progress {
                Progress::Active => ProgressMode::ActiveWaitOnly,
                Progress::Background => ProgressMode::Background,
            },
        ))
    }
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let model: ExecModel = self.model.parse()?;
        let mut exec = ExecConfig::new(model, self.ranks, self.threads);
        exec.weighted_decomp = self.weighted_decomp;
        exec.validate()?;
        Ok(RunConfig {
            exec,
            latency: self.latency.model()?,
        })
    }
}

fn print_record(r: &BenchRecord) {
    print!(
        "{} {} ranks={} threads={} reps={} median={:.3e}s flops={} gflops={:.4} efficiency={:.4}",
        r.matrix,
        r.model,
        r.nranks,
        r.threads,
        r.reps,
        r.median_s,
        r.flops,
        r.gflops(),
        r.efficiency
    );
    if let Some(it) = r.iterations {
        print!(" iterations={it}");
    }
    if let Some(c) = r.converged {
        print!(" converged={c}");
    }
    if let Some(e) = &r.error {
        print!(" error=\"{e}\"");
    }
    println!();
}

fn print_timer_metadata() {
    println!(
        "# clock: monotonic, resolution ~{} ns",
        timer_resolution().as_nanos()
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            nx,
            ny,
            layers,
            out,
        } => {
            let s = cmd_gen(nx, ny, layers, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("N = {}", s.nrows);
            println!("nnz = {}", s.nnz);
            println!(
                "affine growth: nnz = {} * layers - {}",
                s.nnz_per_layer, -s.nnz_at_zero_layers
            );
        }
        Command::Spmv {
            matrix,
            run,
            reps,
            csv,
        } => {
            let run = run.config()?;
            print_timer_metadata();
            print_record(&cmd_spmv(&SpmvArgs {
                matrix,
                run,
                reps,
                csv,
            })?);
        }
        Command::Cg {
            matrix,
            run,
            rtol,
            max_iterations,
            csv,
        } => {
            let run = run.config()?;
            print_timer_metadata();
            print_record(&cmd_cg(&CgArgs {
                matrix,
                run,
                rtol,
                max_iterations,
                csv,
            })?);
        }
        Command::PartitionStats {
            matrix,
            workers,
            ranks,
        } => {
            let a = read_matrix_market_file(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let rows = partition_stats(&a, ranks, workers)?;
            print!("{}", format_partition_stats(&rows, workers));
        }
        Command::Sweep {
            matrix,
            models,
            ranks,
            threads,
            latency,
            reps,
            csv,
        } => {
            let a = read_matrix_market_file(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let id = matrix_id(&matrix);
            let latency = latency.model()?;
            let models = models
                .iter()
                .map(|m| m.parse::<ExecModel>())
                .collect::<Result<Vec<_>, _>>()?;
            print_timer_metadata();
            let mut ran = 0;
            for &model in &models {
                if model == ExecModel::Serial {
                    let exec = ExecConfig::serial();
                    print_record(&spmv_record(
                        &a,
                        &id,
                        RunConfig { exec, latency },
                        reps,
                        csv.as_deref(),
                    )?);
                    ran += 1;
                    continue;
                }
                for &nranks in &ranks {
                    for &t in &threads {
                        let exec = ExecConfig::new(model, nranks, t);
                        if exec.validate().is_err() {
                            continue;
                        }
                        print_record(&spmv_record(
                            &a,
                            &id,
                            RunConfig { exec, latency },
                            reps,
                            csv.as_deref(),
                        )?);
                        ran += 1;
                    }
                }
            }
            if ran == 0 {
                bail!("no runnable configuration in the sweep");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
