use clap::{Args, Parser, Subcommand};
use kdv_control::config::{self, RawConfig};
use kdv_control::{scenario, suite, KdvError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kdvctl", version, about = "KdV control scenarios, parameter scans and self-test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for every random corpus; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario across values of one config key.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config key, e.g. `mesh.L`.
        #[arg(long)]
        param: String,
        /// Comma list or `a:b:step`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance checks and write `selftest.txt`.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, KdvError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| KdvError::Invalid(format!("thread pool: {e}")))
}

fn load(path: &Path) -> Result<(RawConfig, PathBuf), KdvError> {
    let cfg = config::load(path).map_err(|e| match e {
        KdvError::Io(io) => KdvError::Invalid(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn execute(cmd: Command) -> Result<u8, KdvError> {
    match cmd {
        Command::Run { config, common } => {
            let (cfg, base) = load(&config)?;
            let out = pool(common.threads)?.install(|| scenario::run(&cfg, &base, &common.out, common.seed))?;
            println!("{} {} -> {}", out.mode.name(), status(out.converged), common.out.join("report.txt").display());
            Ok(if out.converged { 0 } else { 2 })
        }
        Command::Scan { config, param, values, common } => {
            let (cfg, base) = load(&config)?;
            let values = config::parse_values(&values)?;
            let res =
                pool(common.threads)?.install(|| scenario::scan(&cfg, &base, &common.out, &param, &values, common.seed))?;
            for c in &res.cells {
                if let scenario::CellStatus::Failed(m) = &c.status {
                    eprintln!("cell {param} = {}: {m}", c.value);
                }
            }
            println!("{} cells -> {}", res.cells.len(), common.out.join("scan.csv").display());
            Ok(if res.all_ok() { 0 } else { 2 })
        }
        Command::Selftest { common } => {
            let seed = common.seed.unwrap_or(1);
            let outcomes = pool(common.threads)?.install(|| suite::run_suite(seed));
            let text = suite::render(&outcomes, seed);
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("selftest.txt"), &text)?;
            print!("{text}");
            Ok(if outcomes.iter().all(|o| o.pass) { 0 } else { 2 })
        }
    }
}

fn status(converged: bool) -> &'static str {
    if converged {
        "converged"
    } else {
        "not converged"
    }
}
