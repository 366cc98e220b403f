use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use paqft::suites::{self, Check, Settings};
use paqft::Error;

const REPORT_FORMAT: &str = "1";

#[derive(Parser, Debug)]
#[command(name = "paqft", version, about = "Verification suites for grid-level perturbative AQFT")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Mass of the free field.
    #[arg(long, global = true)]
    mass: Option<f64>,
    /// Number of grid points (per-command default when unset).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Half extent of the time interval.
    #[arg(long, global = true)]
    half_extent: Option<f64>,
    #[arg(long, global = true)]
    cap_hbar: Option<u32>,
    #[arg(long, global = true)]
    cap_lambda: Option<u32>,
    /// Replaces every default tolerance of the command.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with any of the run parameters; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Propagator identities and the free field equation.
    ModelCheck,
    /// Weyl relations, Gram positivity and purity of quasi-free states.
    WeylCheck,
    /// Star commutators against the Peierls bracket; Peierls against canonical.
    BracketEquiv,
    /// Associativity of the star products and the intertwiner between them.
    StarAssoc,
    /// Enumerate graphs with symmetry factors, plus the divergence table.
    Graphs {
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Maximal total number of lines.
        #[arg(long, default_value_t = 2)]
        cap: u32,
    },
    /// Graph sum against iterated time-ordered products.
    ExpandTn,
    /// Extend a model distribution and pair it with Gaussians.
    Extend {
        /// e.g. "abs_pow:-1"
        #[arg(long)]
        dist: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// ms or w
        #[arg(long, default_value = "ms")]
        scheme: String,
    },
    /// Minimal subtraction and W-extensions of |x|^-1.
    Ms,
    /// Wave front sets of the delta and of 1/(x + i0).
    WfScan {
        /// Regularization widths in grid steps.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        eps: Vec<f64>,
    },
    /// Symbol conservation along bicharacteristics.
    Flow,
    /// Formal S-matrix checks.
    Smatrix,
    /// Interacting fields from the Bogoliubov formula.
    Bogoliubov,
    /// Causal factorization and its lemmas.
    CausalFact,
    /// Renormalization map at second order.
    ZCheck,
    /// Interaction-picture cocycle.
    Cocycle,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ModelCheck => "model-check",
            Command::WeylCheck => "weyl-check",
            Command::BracketEquiv => "bracket-equiv",
            Command::StarAssoc => "star-assoc",
            Command::Graphs { .. } => "graphs",
            Command::ExpandTn => "expand-tn",
            Command::Extend { .. } => "extend",
            Command::Ms => "ms",
            Command::WfScan { .. } => "wf-scan",
            Command::Flow => "flow",
            Command::Smatrix => "smatrix",
            Command::Bogoliubov => "bogoliubov",
            Command::CausalFact => "causal-fact",
            Command::ZCheck => "z-check",
            Command::Cocycle => "cocycle",
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    mass: Option<f64>,
    grid: Option<usize>,
    half_extent: Option<f64>,
    cap_hbar: Option<u32>,
    cap_lambda: Option<u32>,
    tol: Option<f64>,
    seed: Option<u64>,
}

impl RunConfig {
    fn overlay(self, c: &Common) -> RunConfig {
        RunConfig {
            mass: c.mass.or(self.mass),
            grid: c.grid.or(self.grid),
            half_extent: c.half_extent.or(self.half_extent),
            cap_hbar: c.cap_hbar.or(self.cap_hbar),
            cap_lambda: c.cap_lambda.or(self.cap_lambda),
            tol: c.tol.or(self.tol),
            seed: c.seed.or(self.seed),
        }
    }

    fn settings(&self) -> Result<Settings, String> {
        let d = Settings::default();
        let s = Settings {
            mass: self.mass.unwrap_or(d.mass),
            grid: self.grid,
            half_extent: self.half_extent,
            cap_hbar: self.cap_hbar,
            cap_lambda: self.cap_lambda,
            tol: self.tol,
            seed: self.seed.unwrap_or(d.seed),
        };
        if !(s.mass.is_finite() && s.mass > 0.0) {
            return Err(format!("mass must be positive, got {}", s.mass));
        }
        if let Some(t) = s.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(format!("tolerance must be positive, got {t}"));
            }
        }
        if let Some(h) = s.half_extent {
            if !(h.is_finite() && h > 0.0) {
                return Err(format!("half extent must be positive, got {h}"));
            }
        }
        if s.grid.is_some_and(|n| n < 8) {
            return Err("grid needs at least 8 points".into());
        }
        Ok(s)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: RunConfig,
    results: &'a [Check],
    pass: bool,
    seed: u64,
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    paqft: &'static str,
    report_format: &'static str,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidModel(_)
            | Error::Invalid(_)
            | Error::CapMismatch(_)
            | Error::Window(_)
            | Error::Unsupported(_)
            | Error::Dimension { .. }
            | Error::DegreeCap { .. }
    )
}

fn run(cmd: &Command, s: &Settings) -> paqft::Result<Vec<Check>> {
    match cmd {
        Command::ModelCheck => suites::model_check(s),
        Command::WeylCheck => suites::weyl_check(s),
        Command::BracketEquiv => suites::bracket_equiv(s),
        Command::StarAssoc => suites::star_assoc(s),
        Command::Graphs { n, cap } => suites::graphs(*n, *cap),
        Command::ExpandTn => suites::expand_tn(s),
        Command::Extend { dist, dim, scheme } => suites::extend(dist, *dim, scheme, s),
        Command::Ms => suites::ms(s),
        Command::WfScan { eps } => suites::wf(s, eps),
        Command::Flow => suites::flow(s),
        Command::Smatrix => suites::smatrix(s),
        Command::Bogoliubov => suites::bogoliubov(s),
        Command::CausalFact => suites::causal_fact(s),
        Command::ZCheck => suites::z_check(s),
        Command::Cocycle => suites::cocycle(s),
    }
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("PAQFT_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return config_error(e);
                }
            }
            _ => return config_error(format!("PAQFT_THREADS must be a positive integer, got {v:?}")),
        }
    }
    let base = match &cli.common.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match serde_json::from_str::<RunConfig>(&text) {
                Ok(c) => c,
                Err(e) => return config_error(format!("{}: {e}", path.display())),
            },
            Err(e) => return config_error(format!("{}: {e}", path.display())),
        },
        None => RunConfig::default(),
    };
    let config = base.overlay(&cli.common);
    let settings = match config.settings() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let results = match run(&cli.command, &settings) {
        Ok(r) => r,
        Err(e) if is_config_error(&e) => return config_error(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let pass = suites::all_pass(&results);
    let report = Report {
        command: cli.command.name(),
        config: RunConfig { mass: Some(settings.mass), seed: Some(settings.seed), ..config },
        results: &results,
        pass,
        seed: settings.seed,
        versions: Versions { paqft: env!("CARGO_PKG_VERSION"), report_format: REPORT_FORMAT },
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match &cli.common.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    for c in results.iter().filter(|c| !c.pass) {
        eprintln!("violated: {} = {:e} ({})", c.name, c.value, c.contract);
    }
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
