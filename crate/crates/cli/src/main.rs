//! `soad` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use soad::adversary::{
    adversary_skeleton, generate_y_adversary, make_adversarial_advice, make_advice_from_forecast, noisy_forecast,
    AdversaryParams, Family,
};
use soad::algorithms::{run_pcm, run_pcm_tv, run_stclip, run_stclip_tv, Pcm};
use soad::baselines::{run_carbon_agnostic, run_delayed_greedy, run_greedy, run_simple_threshold, solve_offline_optimal};
use soad::harness::{
    build_instance, ingest_trace, read_results_csv, run_experiment, sample_latency, summarize, synthesize_trace,
    write_cdf_csv, write_results_csv, write_trace, ExperimentConfig, JobSpec, Profile, Summary,
};
use soad::model::{Instance, RunResult};

#[derive(Parser)]
#[command(name = "soad", version, about = "Spatiotemporal online allocation with deadlines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; stdout summary only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the CR CDF here.
        #[arg(long)]
        cdf: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long, env = "SOAD_SEED")]
        seed: Option<u64>,
    },
    /// Write a synthetic carbon trace CSV.
    GenTrace {
        #[arg(long, default_value_t = 6)]
        regions: usize,
        #[arg(long, default_value_t = 24 * 60)]
        hours: usize,
        #[arg(long, default_value = "mixed")]
        profile: Profile,
        #[arg(long, env = "SOAD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build one instance from a trace (synthetic unless --trace is given).
    GenInstance {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        regions: usize,
        #[arg(long, default_value = "mixed")]
        profile: Profile,
        /// Arrival hour; defaults to the end of the lookback window.
        #[arg(long)]
        arrival: Option<usize>,
        #[arg(long, default_value_t = 0)]
        region: usize,
        #[arg(long = "job-len", default_value_t = 4)]
        job_len: usize,
        #[arg(long, default_value_t = 24)]
        deadline: usize,
        #[arg(long = "data-gb", default_value_t = 4.0)]
        data_gb: f64,
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 720)]
        lookback: usize,
        #[arg(long = "latency-median", default_value_t = 0.02)]
        latency_median: f64,
        #[arg(long = "latency-sigma", default_value_t = 0.5)]
        latency_sigma: f64,
        #[arg(long, env = "SOAD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a y-adversary instance against PCM and freeze it.
    GenAdversary {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 10.0)]
        upper: f64,
        #[arg(long, default_value_t = 1.0)]
        lower: f64,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, env = "SOAD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm on an instance JSON and print the result.
    Solve {
        #[arg(long)]
        alg: String,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// ST-CLIP advice: `forecast`, or a blend of OPT and MAX when --xi is set.
        #[arg(long)]
        xi: Option<f64>,
        /// Print the full decision sequence.
        #[arg(long)]
        full: bool,
        #[arg(long, env = "SOAD_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a results CSV and write its CDF.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_summary(rows: &[Summary]) {
    println!("{:<20} {:>6} {:>9} {:>9} {:>9} {:>9}", "alg", "n", "mean", "p50", "p90", "max");
    for s in rows {
        println!("{:<20} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}", s.alg, s.count, s.mean, s.p50, s.p90, s.max);
    }
}

fn load_instance(path: &PathBuf) -> Result<Instance> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Instance::from_json(&s)?)
}

fn solve(inst: &Instance, alg: &str, epsilon: f64, xi: Option<f64>, seed: u64) -> Result<RunResult> {
    let tv = inst.tv_dist.is_some();
    let r = match alg {
        "pcm" if tv => run_pcm_tv(inst, seed)?,
        "pcm" => run_pcm(inst, seed)?,
        "stclip" => {
            let advice = match xi {
                Some(xi) => make_adversarial_advice(inst, xi)?,
                None => make_advice_from_forecast(inst, &noisy_forecast(inst, seed))?,
            };
            if tv {
                run_stclip_tv(inst, &advice, epsilon, seed)?
            } else {
                run_stclip(inst, &advice, epsilon, seed)?
            }
        }
        "offline" => solve_offline_optimal(inst)?,
        "agnostic" => run_carbon_agnostic(inst)?,
        "greedy" => run_greedy(inst)?,
        "delayed_greedy" => run_delayed_greedy(inst, &noisy_forecast(inst, seed))?,
        "simple_threshold" => run_simple_threshold(inst)?,
        other => bail!("unknown algorithm {other}; expected one of {}", soad::harness::ALGORITHMS.join(", ")),
    };
    Ok(r)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, cdf, seed } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = run_experiment(&cfg)?;
            if let Some(p) = &out {
                write_results_csv(&res.rows, sink(&Some(p.clone()))?)?;
            }
            if let Some(p) = &cdf {
                write_cdf_csv(&res.cdf(), sink(&Some(p.clone()))?)?;
            }
            print_summary(&res.summary());
            for e in &res.errors {
                eprintln!("instance {} {}: {}", e.instance_id, e.alg, e.message);
            }
        }
        Command::GenTrace { regions, hours, profile, seed, out } => {
            write_trace(&synthesize_trace(regions, hours, seed, profile)?, sink(&out)?)?;
        }
        Command::GenInstance {
            trace,
            regions,
            profile,
            arrival,
            region,
            job_len,
            deadline,
            data_gb,
            kappa,
            tau,
            lookback,
            latency_median,
            latency_sigma,
            seed,
            out,
        } => {
            let trace = match trace {
                Some(p) => ingest_trace(&p)?,
                None => synthesize_trace(regions, lookback + deadline, seed, profile)?,
            };
            let latency = sample_latency(trace.n_regions(), latency_median, latency_sigma, seed)?;
            let job = JobSpec {
                arrival: arrival.unwrap_or_else(|| lookback.min(trace.hours().saturating_sub(deadline))),
                region,
                length: job_len,
                deadline,
                data_gb,
                kappa,
                tau,
                lookback,
            };
            let inst = build_instance(&trace, &job, &latency)?;
            writeln!(sink(&out)?, "{}", inst.to_json()?)?;
        }
        Command::GenAdversary { family, y, upper, lower, d, tau, seed, out } => {
            let params = AdversaryParams::new(family, y, upper, lower, d, tau);
            let mut probe = Pcm::new(&adversary_skeleton(&params)?, seed, false)?;
            let inst = generate_y_adversary(&params, &mut probe)?;
            writeln!(sink(&out)?, "{}", inst.to_json()?)?;
        }
        Command::Solve { alg, instance, epsilon, xi, full, seed } => {
            let inst = load_instance(&instance)?;
            let r = solve(&inst, &alg, epsilon, xi, seed)?;
            let value = if full {
                serde_json::to_value(&r)?
            } else {
                serde_json::json!({
                    "alg": r.meta.alg,
                    "objective": r.objective,
                    "service_cost": r.service_cost,
                    "spatial_cost": r.spatial_cost,
                    "temporal_cost": r.temporal_cost,
                    "feasible": r.feasible,
                    "z_final": r.utilization.last().copied().unwrap_or(0.0),
                })
            };
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        Command::Report { results, out } => {
            let file = File::open(&results).with_context(|| format!("opening {}", results.display()))?;
            let rows = read_results_csv(file)?;
            write_cdf_csv(&soad::harness::cdf(&rows), sink(&Some(out))?)?;
            print_summary(&summarize(&rows));
        }
    }
    Ok(())
}
