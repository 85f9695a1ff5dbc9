use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdic_core::channel::{gen_generic, gen_ula, ChannelSet, UlaGeometry};
use rdic_core::dof::{derive, spatial_extension_factor, DofSummary, SystemParams};
use rdic_core::exec::Executor;
use rdic_core::verify::{monte_carlo, ChannelSource, VerifyOptions};
use rdic_core::{example, sweep};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "rdic", version, about = "DoF of the three-user MIMO interference channel with rank-deficient links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    /// Transmit antennas per node.
    #[arg(long)]
    mt: u32,
    /// Receive antennas per node.
    #[arg(long)]
    mr: u32,
    /// Rank of the direct links.
    #[arg(long)]
    d0: u32,
    /// Rank of the links from transmitter k+1 to receiver k.
    #[arg(long)]
    d1: u32,
    /// Rank of the links from transmitter k-1 to receiver k.
    #[arg(long)]
    d2: u32,
}

impl ParamArgs {
    fn params(&self) -> Result<SystemParams, String> {
        SystemParams::new(self.mt, self.mr, self.d0, self.d1, self.d2).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProvenanceArg {
    Generic,
    Ula,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, env = "RDIC_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the DoF formula.
    Dof {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        json: bool,
    },
    /// Build and check the achievable scheme over random channels.
    Verify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long, value_enum, default_value_t = ProvenanceArg::Generic)]
        provenance: ProvenanceArg,
        /// Element spacing in wavelengths for ULA channels.
        #[arg(long, default_value_t = example::DEFAULT_DELTA)]
        delta: f64,
        /// Relative rank threshold.
        #[arg(long)]
        tol: Option<f64>,
        /// Run trials one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Write normalized DoF against M/N as CSV.
    Sweep {
        #[arg(long)]
        n: u32,
        /// Number of M/N grid points; defaults to N.
        #[arg(long)]
        grid: Option<u32>,
        #[arg(long, default_value = sweep::DEFAULT_DT_LIST)]
        dt_list: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fixed two-path ULA configuration with M_T = 2, M_R = 4.
    Example {
        #[arg(long, default_value_t = example::DEFAULT_DELTA)]
        delta: f64,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Save or load channel realizations.
    #[command(subcommand)]
    Channel(ChannelCommand),
}

#[derive(Subcommand)]
enum ChannelCommand {
    /// Draw channels (after spatial extension) and write them as JSON.
    Export {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long, value_enum, default_value_t = ProvenanceArg::Generic)]
        provenance: ProvenanceArg,
        #[arg(long, default_value_t = example::DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the scheme on channels read from a JSON file.
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        tol: Option<f64>,
    },
}

enum Failure {
    Usage(String),
    Verification,
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Usage(s)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn verdict(pass: bool) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Dof { params, json } => {
            let derived = derive(&params.params()?).map_err(|e| e.to_string())?;
            let s = DofSummary::from(&derived);
            if json {
                let mut v = serde_json::to_value(&s).expect("serializable");
                v["version"] = rdic_core::VERSION.into();
                println!("{}", to_json(&v));
            } else {
                println!("dbar: {} ({})", s.dbar, s.dbar_decimal);
                println!("regime: {:?}", s.regime);
                println!("p: {}", s.p.finite().map_or("unbounded".to_string(), |p| p.to_string()));
                println!("binding: {:?}", s.binding);
                println!("q: {}", s.extension_factor);
            }
            Ok(())
        }
        Command::Verify { params, trials, seed, provenance, delta, tol, sequential } => {
            let params = params.params()?;
            if trials == 0 {
                return Err("--trials must be positive".to_string().into());
            }
            let source = match provenance {
                ProvenanceArg::Generic => ChannelSource::Generic,
                ProvenanceArg::Ula => ChannelSource::Ula { delta },
            };
            let opts = VerifyOptions { rank_tol: tol, ..VerifyOptions::default() };
            let exec = if sequential { Executor::Sequential } else { Executor::Parallel };
            let report = monte_carlo(&params, &source, trials, seed.seed, &opts, exec);
            println!("{}", to_json(&report));
            verdict(report.pass)
        }
        Command::Sweep { n, grid, dt_list, out } => {
            let exprs = sweep::parse_dt_list(&dt_list).map_err(|e| e.to_string())?;
            let rows = sweep::sweep(n, grid.unwrap_or(n), &exprs).map_err(|e| e.to_string())?;
            let csv = sweep::to_csv(&rows);
            match out {
                Some(path) => fs::write(&path, csv).map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Example { delta, seed } => {
            let report = example::run(delta, seed.seed).map_err(|e| e.to_string())?;
            println!("{}", to_json(&report));
            verdict(report.pass)
        }
        Command::Channel(ChannelCommand::Export { params, seed, provenance, delta, out }) => {
            let params = params.params()?;
            let derived = derive(&params).map_err(|e| e.to_string())?;
            let scaled = params.scale(spatial_extension_factor(&derived)).map_err(|e| e.to_string())?;
            let cs = match provenance {
                ProvenanceArg::Generic => gen_generic(&scaled, seed.seed),
                ProvenanceArg::Ula => {
                    gen_ula(&scaled, &UlaGeometry::random(&scaled, delta, seed.seed), seed.seed).map_err(|e| e.to_string())?
                }
            };
            fs::write(&out, cs.to_json()).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            Ok(())
        }
        Command::Channel(ChannelCommand::Import { input, trials, seed, tol }) => {
            let text = fs::read_to_string(&input).map_err(|e| format!("cannot read {}: {e}", input.display()))?;
            let cs = ChannelSet::from_json(&text).map_err(|e| format!("invalid channel file: {e}"))?;
            cs.check().map_err(|e| e.to_string())?;
            if trials == 0 {
                return Err("--trials must be positive".to_string().into());
            }
            let params = cs.params;
            let opts = VerifyOptions { rank_tol: tol, ..VerifyOptions::default() };
            let source = ChannelSource::Fixed(Arc::new(cs));
            let report = monte_carlo(&params, &source, trials, seed.seed, &opts, Executor::Parallel);
            println!("{}", to_json(&report));
            verdict(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
