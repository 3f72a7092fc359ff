use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hybagg::bench::{
    collusion_experiment, run_cohort, summarize, sweep_clients, sweep_dims, write_csv, write_json, BenchError,
    ExperimentConfig, RoundMetrics, DEFAULT_MAX_COHORT,
};
use hybagg::protocol::{payload_accounting, ProtocolError};
use hybagg::sampling::{NoiseSpec, DEFAULT_SMUDGE_BITS};

#[derive(Parser)]
#[command(name = "hybagg", version, about = "One-shot secure aggregation simulator and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cohort for several rounds.
    Cohort(CommonArgs),
    /// Run every cohort size in --clients at a single dimension.
    SweepClients(CommonArgs),
    /// Run every dimension in --dims at a single cohort size.
    SweepDims(CommonArgs),
    /// Let the server and --colluders clients attack one honest client.
    Collude {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        colluders: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Print the byte accounting for one parameterization.
    Accounting(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Cohort sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    clients: Vec<usize>,
    /// Vector dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8192")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long, default_value_t = 40)]
    delta_bits: u32,
    /// Smudging width as a power of two times the error width.
    #[arg(long, default_value_t = DEFAULT_SMUDGE_BITS)]
    smudge_bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inputs are uniform in [-range, range].
    #[arg(long, default_value_t = 1.0)]
    value_range: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COHORT)]
    max_cohort: usize,
    /// Decimal digits a recovered sum must match.
    #[arg(long, default_value_t = 6)]
    precision: u32,
    /// Write rows here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
    /// Leave timing columns empty so output is reproducible.
    #[arg(long)]
    no_timings: bool,
    /// Run clients on all cores; timings are then not per-client wall time.
    #[arg(long)]
    parallel: bool,
}

enum Failure {
    Usage(String),
    Verification(String),
    Other(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match &e {
            BenchError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            BenchError::Verification { .. } => Failure::Verification(e.to_string()),
            BenchError::Protocol(p) => match p {
                ProtocolError::InvalidParams(_)
                | ProtocolError::NoiseBudget(_)
                | ProtocolError::CohortSize { .. }
                | ProtocolError::Codec(_) => Failure::Usage(e.to_string()),
                _ => Failure::Other(e.to_string()),
            },
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let noise = NoiseSpec::with_smudge_bits(self.smudge_bits).map_err(|e| Failure::Usage(e.to_string()))?;
        let cfg = ExperimentConfig {
            clients: self.clients.clone(),
            dims: self.dims.clone(),
            rounds: self.rounds,
            delta_bits: self.delta_bits,
            noise,
            seed: self.seed,
            value_range: self.value_range,
            max_cohort: self.max_cohort,
            precision: self.precision,
            timings: !self.no_timings,
            parallel: self.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit<T: Serialize>(&self, rows: &[T]) -> Result<(), Failure> {
        let sink: Box<dyn Write> = match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        if self.json {
            write_json(rows, sink)?;
        } else {
            write_csv(rows, sink)?;
        }
        Ok(())
    }
}

fn report_rows(args: &CommonArgs, rows: &[RoundMetrics]) -> Result<(), Failure> {
    args.emit(rows)?;
    for s in summarize(rows) {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        eprintln!(
            "N={:<4} d={:<6} n={:<6} rounds={} client_ms={} mask_ms={} server_ms={} uplink={}B expansion={:.3} max_err={:.2e} exact={}",
            s.clients,
            s.d,
            s.n,
            s.rounds,
            fmt(s.median_client_total_ms),
            fmt(s.median_mask_ms),
            fmt(s.median_server_total_ms),
            s.client_uplink_bytes,
            s.expansion_factor,
            s.max_abs_error,
            s.all_exact,
        );
    }
    match rows.iter().find(|r| !r.exact_after_round) {
        Some(r) => Err(Failure::Verification(format!(
            "N={} d={} round {}: max error {:.3e} does not round to zero at {} decimals",
            r.clients, r.d, r.round, r.max_abs_error, args.precision
        ))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Cohort(args) => {
            let cfg = args.config()?;
            let (&[clients], &[d]) = (&cfg.clients[..], &cfg.dims[..]) else {
                return Err(Failure::Usage("cohort takes one --clients value and one --dims value".into()));
            };
            report_rows(&args, &run_cohort(&cfg, clients, d)?)
        }
        Command::SweepClients(args) => report_rows(&args, &sweep_clients(&args.config()?)?),
        Command::SweepDims(args) => report_rows(&args, &sweep_dims(&args.config()?)?),
        Command::Collude { common, colluders, trials } => {
            let cfg = common.config()?;
            let [clients] = cfg.clients[..] else {
                return Err(Failure::Usage("collude takes one --clients value".into()));
            };
            let rep = collusion_experiment(&cfg, clients, colluders, trials)?;
            common.emit(std::slice::from_ref(&rep))?;
            if rep.success_rate >= 0.01 || rep.control_success_rate < 1.0 || !rep.leak_exact {
                return Err(Failure::Verification(format!(
                    "adversary {:.4}, control {:.4}, leak exact {}",
                    rep.success_rate, rep.control_success_rate, rep.leak_exact
                )));
            }
            Ok(())
        }
        Command::Accounting(args) => {
            let cfg = args.config()?;
            let mut reports = Vec::new();
            for &d in &cfg.dims {
                let params = cfg.params(d).map_err(Failure::from)?;
                for &clients in &cfg.clients {
                    reports.push(payload_accounting(&params, clients));
                }
            }
            args.emit(&reports)?;
            eprintln!("for comparison: OpenFHE-serialized uploads run at about 12x expansion; this format uses fixed 8-byte residues");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
