use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risid::commands;
use risid::config::{self, Settings};
use risid::output;
use risid::{CliError, Command};

const COLUMNS: &str = "\
Output columns (CSV files start with `#` lines naming the tool, seed and config):
  pf-single, pmiss-*, pf-two-*:
    M,N,spacing,p_dbm,r_bar,<pf|pmiss>_mc,ci_low,ci_high,events,trials,low_confidence,<pf|pmiss>_theory
  tradeoff:   M,N,p_dbm,r_bar,pf_bound,pmiss_theory,pf_mc,pmiss_mc
  confusion:  M,N,p_dbm,r_bar,true_state,<decided state columns>
  five-ris:   set,rows,quality,M,N,p_dbm,r_bar,pmiss_avg,pf_avg,trials
  theory:     r_bar,value,kind,M,N,P_dBm
  design:     M,p_dbm,r_bar,target_pmiss,n_required,n_raw

Exit codes: 0 success, 2 invalid config, 3 numerical failure, 1 I/O error.";

#[derive(Parser)]
#[command(name = "risid", version, about = "RIS identification experiments", after_help = COLUMNS)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "RISID_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Single-RIS false detection versus threshold and code length.
    PfSingle(Common),
    /// Single-RIS miss detection versus power for each element spacing.
    PmissCorr(Common),
    /// Single-RIS miss detection versus power and code length.
    PmissM(Common),
    /// Single-RIS miss detection versus power and RIS size.
    PmissN(Common),
    /// Two-RIS false detection versus threshold and code length.
    PfTwoM(Common),
    /// Two-RIS false detection versus threshold, RIS size and power.
    PfTwoNp(Common),
    /// Two-RIS miss detection versus threshold and code length.
    PmissTwoM(Common),
    /// Two-RIS miss detection versus threshold, RIS size and power.
    PmissTwoNp(Common),
    /// Joint threshold selection for capped false and miss detection.
    Tradeoff(Common),
    /// Confusion matrices over the reachable-set states.
    Confusion(Common),
    /// Averaged metrics of the best and worst code sets.
    FiveRis(Common),
    /// Closed-form curves only.
    Theory(Common),
    /// RIS size required for a miss-detection target.
    Design(Common),
}

impl Sub {
    fn split(self) -> (Command, Common) {
        match self {
            Sub::PfSingle(c) => (Command::PfSingle, c),
            Sub::PmissCorr(c) => (Command::PmissCorr, c),
            Sub::PmissM(c) => (Command::PmissM, c),
            Sub::PmissN(c) => (Command::PmissN, c),
            Sub::PfTwoM(c) => (Command::PfTwoM, c),
            Sub::PfTwoNp(c) => (Command::PfTwoNp, c),
            Sub::PmissTwoM(c) => (Command::PmissTwoM, c),
            Sub::PmissTwoNp(c) => (Command::PmissTwoNp, c),
            Sub::Tradeoff(c) => (Command::Tradeoff, c),
            Sub::Confusion(c) => (Command::Confusion, c),
            Sub::FiveRis(c) => (Command::FiveRis, c),
            Sub::Theory(c) => (Command::Theory, c),
            Sub::Design(c) => (Command::Design, c),
        }
    }
}

fn settings(cmd: Command, args: &Common) -> Result<Settings, CliError> {
    let mut s = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| CliError::Io { context: format!("reading {}", path.display()), source })?;
            config::load(cmd, &text)?
        }
        None => config::defaults(cmd),
    };
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(trials) = args.trials {
        if trials == 0 {
            return Err(CliError::Invalid("--trials must be at least 1".into()));
        }
        s.trials = trials;
    }
    Ok(s)
}

fn run(cmd: Command, args: Common) -> Result<(), CliError> {
    let s = settings(cmd, &args)?;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    }
    let artifacts = commands::run(cmd, &s)?;
    for path in output::write_all(&args.out, cmd, &s, &artifacts)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let (cmd, args) = Cli::parse().command.split();
    match run(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("risid {cmd}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
