use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rqiqn::agent::Agent;
use rqiqn::env::{Environment, NavEnv};
use rqiqn::eval::{
    self, degeneration_metrics, dro_robust_minimizer_bruteforce, empirical_quantile_slot, probe_grid,
    DroOracleConfig, EmpiricalTargetLaw, ExperimentConfig, ExportFormat, Task,
};
use rqiqn::robust::{delta_raw, WassersteinOrder};
use rqiqn::Result;

#[derive(Parser)]
#[command(name = "rqiqn", version, about = "Robust implicit quantile networks: training, evaluation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment config.
    Train { config: PathBuf },
    /// Evaluate a saved snapshot on the config's held-out episodes.
    Eval { snapshot: PathBuf, config: PathBuf },
    /// Run the built-in check suite; exits non-zero on any failure.
    Verify,
    /// Ad-hoc oracle queries.
    Oracle {
        #[command(subcommand)]
        query: OracleQuery,
    },
    /// Convert a JSON-lines metrics log to csv or json-lines.
    Export {
        #[arg(long, value_parser = parse_format)]
        format: ExportFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleQuery {
    /// Brute-force robust minimizer against the closed-form shift (∞ order).
    Dro {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        eps: f64,
        /// Comma-separated target samples.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1..)]
        samples: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
    },
}

fn parse_format(s: &str) -> std::result::Result<ExportFormat, String> {
    s.parse().map_err(|e: rqiqn::Error| e.to_string())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for s in eval::run_experiment(&cfg)? {
                let last = s.final_record.as_ref();
                println!(
                    "seed {}: {} records -> {}{}",
                    s.seed,
                    s.records,
                    s.log.display(),
                    match (&s.aborted, last) {
                        (Some(why), _) => format!(" ({why})"),
                        (None, Some(r)) => format!(
                            ", final return {:.3}, success {:.2}, collision {:.2}",
                            r.eval_return_mean, r.success_rate, r.collision_rate
                        ),
                        (None, None) => String::new(),
                    }
                );
            }
            Ok(true)
        }
        Command::Eval { snapshot, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let context = match cfg.task {
                Task::Nav => NavEnv::sampled(cfg.nav.clone(), cfg.eval_seed)?.context_feature(),
                Task::Chain => None,
            };
            let agent = Agent::load(&snapshot, context)?;
            let summary = eval::evaluate(&agent, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            if let (Task::Chain, Some(net)) = (cfg.task, agent.quantile_network()) {
                let report = degeneration_metrics(net, &cfg.chain, &probe_grid(cfg.probe_fractions))?;
                for p in &report.probes {
                    println!(
                        "state {}: learned std {:.4}, true std {:.4}, gap {:.4}",
                        p.state, p.learned_std, p.true_std, p.true_gap
                    );
                }
            }
            Ok(true)
        }
        Command::Verify => {
            let results = eval::verify::run_all();
            let mut all = true;
            for r in &results {
                println!(
                    "{} {:<24} {:>7.2}s  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.seconds,
                    r.detail
                );
                all &= r.passed;
            }
            Ok(all)
        }
        Command::Oracle {
            query:
                OracleQuery::Dro {
                    tau,
                    eps,
                    samples,
                    resolution,
                },
        } => {
            let law = EmpiricalTargetLaw::new(samples)?;
            let cfg = DroOracleConfig {
                resolution,
                tolerance: resolution.max(1e-3),
                ..Default::default()
            };
            let nominal = empirical_quantile_slot(&law, tau)?;
            let closed = nominal + delta_raw(tau, eps, WassersteinOrder::Infinity);
            let brute = dro_robust_minimizer_bruteforce(&law, tau, eps, &cfg)?;
            let gap = (brute - closed).abs();
            println!("nominal quantile   {nominal:.6}");
            println!("closed form        {closed:.6}");
            println!("brute force        {brute:.6}");
            println!("gap                {gap:.2e} (grid {resolution:.0e})");
            Ok(gap <= resolution)
        }
        Command::Export { format, input, output } => {
            let records = eval::read_json_lines(&input)?;
            eval::export(&records, format, &output)?;
            println!("{} records -> {}", records.len(), output.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
