//! Command-line front end and HTTP service for the firm-network economy.

pub mod commands;
pub mod service;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use firmnet::config::Format;
use firmnet::phase::SweepControl;
use firmnet::{parse_config, Error, Result, RunConfig};

use commands::Artifact;

#[derive(Parser, Debug)]
#[command(name = "firmnet", version, about = "Firm-network economy laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Competitive equilibrium of the calibrated economy.
    Equilibrium(Common),
    /// Relaxation run of the naive model from a perturbed equilibrium.
    Naive(Common),
    /// Eigenvalues of the naive model's stability matrix.
    Spectrum(Common),
    /// Agent-based run and its regime label, one per seed.
    Simulate(Common),
    /// Phase diagram over the two axes of the `sweep` block.
    Sweep(Common),
    /// Stationary price and production volatility under productivity noise.
    Volatility(Common),
    /// HTTP service under /api/v1.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Worker threads for parallel phases.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replaces `run.seeds` with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    /// HOST:PORT to bind; falls back to FIRMNET_LISTEN, then 127.0.0.1:8080.
    #[arg(long)]
    pub listen: Option<String>,
    /// Worker threads shared by all jobs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Finished results kept in memory.
    #[arg(long, default_value_t = service::DEFAULT_RESULT_CAP)]
    pub result_cap: usize,
}

/// Reads and validates the configuration, then applies command-line overrides.
pub fn load_config(common: &Common) -> Result<RunConfig> {
    let doc = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => "{}".to_string(),
    };
    let mut cfg = parse_config(&doc)?;
    if let Some(seed) = common.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(f) = common.format {
        cfg.output.format = f.into();
    }
    Ok(cfg)
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// Where artifacts go: files under a directory, or stdout.
pub struct Sink {
    dir: Option<PathBuf>,
    format: Format,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>, format: Format) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::Io(format!("{}: {e}", d.display())))?;
        }
        Ok(Sink { dir: dir.map(Path::to_path_buf), format, written: Vec::new() })
    }

    pub fn emit<A: Artifact>(&mut self, stem: &str, a: &A) -> Result<()> {
        let bytes = a.render(self.format)?;
        self.raw(&format!("{stem}.{}", extension(self.format)), &bytes)
    }

    fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        use std::io::Write;
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                self.written.push(path);
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                if !bytes.ends_with(b"\n") {
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration next to the artifacts (files only).
    pub fn config(&mut self, cfg: &RunConfig) -> Result<()> {
        if self.dir.is_some() {
            let doc = serde_json::to_vec_pretty(cfg).map_err(|e| Error::Io(e.to_string()))?;
            self.raw(&format!("config-{}.json", &cfg.fingerprint()[..12]), &doc)?;
        }
        Ok(())
    }
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Runs one batch subcommand and returns the files it wrote.
pub fn run_batch(command: &Command) -> Result<Vec<PathBuf>> {
    let common = match command {
        Command::Serve(_) => return Err(Error::InvalidParameter("serve is not a batch command".into())),
        Command::Equilibrium(c)
        | Command::Naive(c)
        | Command::Spectrum(c)
        | Command::Simulate(c)
        | Command::Sweep(c)
        | Command::Volatility(c) => c,
    };
    install_threads(common.threads)?;
    let cfg = load_config(common)?;
    let mut sink = Sink::new(common.out.as_deref(), cfg.output.format)?;
    sink.config(&cfg)?;
    let seeds = cfg.run.seeds.clone();
    match command {
        Command::Equilibrium(_) => {
            for s in seeds {
                sink.emit(&format!("equilibrium-seed{s}"), &commands::equilibrium(&cfg, s)?)?;
            }
        }
        Command::Naive(_) => {
            for s in seeds {
                sink.emit(&format!("naive-seed{s}"), &commands::naive(&cfg, s)?)?;
            }
        }
        Command::Spectrum(_) => {
            for s in seeds {
                sink.emit(&format!("spectrum-seed{s}"), &commands::spectrum(&cfg, s)?)?;
            }
        }
        Command::Volatility(_) => {
            for s in seeds {
                sink.emit(&format!("volatility-seed{s}"), &commands::volatility(&cfg, s)?)?;
            }
        }
        Command::Simulate(_) => {
            for s in seeds {
                let rep = commands::simulate(&cfg, s)?;
                eprintln!("seed {s}: {}", rep.label);
                sink.emit(&format!("simulate-seed{s}"), &rep)?;
            }
        }
        Command::Sweep(_) => {
            let progress = |done: usize, total: usize| {
                if done == total || done.is_multiple_of(10) {
                    eprint!("\rsweep: {done}/{total} runs");
                    if done == total {
                        eprintln!();
                    }
                }
            };
            let ctl = SweepControl { cancel: None, progress: Some(&progress) };
            let d = commands::sweep(&cfg, &ctl)?;
            sink.emit("phase-diagram", &d)?;
        }
        Command::Serve(_) => unreachable!(),
    }
    Ok(sink.written)
}

pub fn listen_address(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var("FIRMNET_LISTEN").ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| service::DEFAULT_LISTEN.to_string())
}
