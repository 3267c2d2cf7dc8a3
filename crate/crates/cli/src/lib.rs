//! Command-line front end for the `semiconv` library.
//!
//! Exit codes: 0 on success, 1 when a kernel or model check fails, 2 on
//! usage errors (bad flags, unreadable files, unknown states).

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use semiconv::format::g17;
use semiconv::io::{
    build_parametric_kernel, export_kernel, load_kernel, read_kernel_unchecked, validate_kernel,
    write_table, CsvTable, IoError, LabeledLedger, LabeledPhi, ParametricSpec, QuoteTable,
};
use semiconv::oracle::agreement_report;
use semiconv::{
    compute_phi, fair_premium, survival, value_conversion_option, ContractTerms, ConversionInputs,
    DiscountCurve, Kernel, ModelError, Scenario,
};

pub use config::KERNEL_PATH_VAR;
use config::{pick, require, CashBasis, ConfigFile, PremiumTime, Timing};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// A kernel, model or agreement check failed; exit code 1.
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Failure(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Failure(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownState(_) | ModelError::StateOutOfRange { .. } => Self::Usage(e.to_string()),
            e => Self::Failure(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => Self::Usage(e.to_string()),
            IoError::Model(m) => m.into(),
            e => Self::Failure(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "semiconv", version, about = "Semi-Markov insurance pricing and conversion-option valuation")]
struct Cli {
    /// TOML file supplying defaults for any option; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a kernel file and list every violated rule.
    Validate {
        /// Kernel file (or parametric spec with a .toml extension).
        kernel: Option<PathBuf>,
    },
    /// Fair premium of a term (tip) or permanent (pip) policy.
    Price {
        kind: Kind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        contract: ContractArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Value of the option to convert a term policy into a permanent one.
    Vco {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        contract: ContractArgs,
        #[command(flatten)]
        conversion: ConversionArgs,
        /// Write the exercise-set ledger here instead of after the quote.
        #[arg(long, value_name = "FILE")]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Transition probabilities with final backward at a horizon.
    Phi {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Calendar time of the table.
        #[arg(long)]
        horizon: Option<i64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Survival curve and death pmf up to a horizon.
    Survival {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Defaults to the time the maximum age is reached.
        #[arg(long)]
        horizon: Option<i64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo estimates of every analytic quantity, with z-scores.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        contract: ContractArgs,
        #[command(flatten)]
        conversion: ConversionArgs,
        /// Number of simulated paths [default: 100000].
        #[arg(long)]
        paths: Option<u64>,
        /// Seed of the path generator [default: 1].
        #[arg(long)]
        seed: Option<u64>,
        /// Smallest analytic probability for a φ or survival row.
        #[arg(long)]
        min_mass: Option<f64>,
        /// Exit with code 1 if any |z| exceeds this.
        #[arg(long)]
        max_z: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build a kernel file from a parametric TOML spec.
    Build {
        spec: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Tip,
    Pip,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Kernel file or parametric .toml spec; also searched in SMK_KERNEL_PATH.
    #[arg(long, value_name = "FILE")]
    kernel: Option<PathBuf>,
    /// State label, e.g. H.
    #[arg(long)]
    state: Option<String>,
    /// Years since the last transition.
    #[arg(long)]
    backward: Option<u32>,
    /// Current age.
    #[arg(long)]
    age: Option<u32>,
    /// Calendar time.
    #[arg(long)]
    time: Option<i64>,
}

#[derive(Debug, Args)]
struct ContractArgs {
    /// Term in years (TIP and conversion date).
    #[arg(long)]
    term: Option<u32>,
    /// Constant per-period discount factor.
    #[arg(long, conflicts_with = "discount_file")]
    discount: Option<f64>,
    /// Per-period discount factors, one per line.
    #[arg(long, value_name = "FILE")]
    discount_file: Option<PathBuf>,
    /// Premiums at the end (immediate) or start (due) of each year [default: immediate].
    #[arg(long)]
    timing: Option<Timing>,
}

#[derive(Debug, Args)]
struct ConversionArgs {
    /// When the converted TIP-basis premium is priced.
    #[arg(long)]
    premium_time: Option<PremiumTime>,
    /// Weights of the premium gap in the cash value.
    #[arg(long)]
    cash_basis: Option<CashBasis>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the result here instead of standard output.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
}

/// Runs one command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Validate { kernel } => validate(&config, kernel, out),
        Command::Price { kind, scenario, contract, output } => {
            let (kernel, origin) = scenario.resolve(&config)?;
            let disc = contract.discount(&config)?;
            let terms = match kind {
                Kind::Tip => ContractTerms::tip(require(pick(&contract.term, &config.term), "term")?),
                Kind::Pip => ContractTerms::pip(),
            }
            .with_timing(contract.timing(&config).into());
            let quote = fair_premium(&kernel, &origin, &terms, &disc)?;
            emit(&QuoteTable::from(&quote), &output, &config, out)
        }
        Command::Vco { scenario, contract, conversion, ledger, output } => {
            let (kernel, origin) = scenario.resolve(&config)?;
            let inputs = conversion_inputs(&kernel, origin, &contract, &conversion, &config)?;
            let quote = value_conversion_option(&inputs)?;
            let ledger_table = LabeledLedger { set: &quote.exercise_set, states: kernel.states() };
            let mut text = render(&QuoteTable::from(&quote))?;
            match pick(&ledger, &config.ledger) {
                Some(path) => write_file(&path, &render(&ledger_table)?)?,
                None => {
                    text.push('\n');
                    text.push_str(&render(&ledger_table)?);
                }
            }
            deliver(&text, &output, &config, out)
        }
        Command::Phi { scenario, horizon, output } => {
            let (kernel, origin) = scenario.resolve(&config)?;
            let t = require(pick(&horizon, &config.horizon), "horizon")?;
            let table = compute_phi(&kernel, &origin, t)?;
            emit(&LabeledPhi { table: &table, states: kernel.states() }, &output, &config, out)
        }
        Command::Survival { scenario, horizon, output } => {
            let (kernel, origin) = scenario.resolve(&config)?;
            let full = origin.time + kernel.max_age().saturating_sub(origin.age) as i64;
            let t = pick(&horizon, &config.horizon).unwrap_or(full);
            let curve = survival(&kernel, &origin, t)?;
            emit(&curve, &output, &config, out)
        }
        Command::Simulate {
            scenario,
            contract,
            conversion,
            paths,
            seed,
            min_mass,
            max_z,
            output,
        } => {
            let (kernel, origin) = scenario.resolve(&config)?;
            let inputs = conversion_inputs(&kernel, origin, &contract, &conversion, &config)?;
            let paths = pick(&paths, &config.paths).unwrap_or(100_000);
            let seed = pick(&seed, &config.seed).unwrap_or(1);
            let min_mass = pick(&min_mass, &config.min_mass).unwrap_or(0.01);
            let rows = agreement_report(&inputs, paths, seed, min_mass)?;
            let table = AgreementTable(&rows);
            emit(&table, &output, &config, out)?;
            if let Some(limit) = pick(&max_z, &config.max_z) {
                if let Some(bad) = rows.iter().find(|r| r.z_score().is_nan() || r.z_score().abs() > limit) {
                    return Err(CliError::Failure(format!(
                        "{}: z-score {} exceeds {limit}",
                        bad.quantity,
                        g17(bad.z_score())
                    )));
                }
            }
            Ok(())
        }
        Command::Build { spec, output } => {
            let kernel = load_spec(&spec)?;
            deliver(&export_kernel(&kernel), &output, &config, out)
        }
    }
}

fn validate(config: &ConfigFile, kernel: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let path = config::resolve_kernel(&require(pick(&kernel, &config.kernel), "kernel")?)?;
    let kernel = if is_spec(&path) {
        load_spec(&path)?
    } else {
        read_kernel_unchecked(&path)?
    };
    let report = validate_kernel(&kernel);
    if report.is_valid() {
        writeln!(out, "{report}").map_err(write_error)?;
        Ok(())
    } else {
        Err(CliError::Failure(format!("{} is invalid\n{report}", path.display())))
    }
}

fn is_spec(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "toml")
}

fn load_spec(path: &Path) -> Result<Kernel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let spec: ParametricSpec = toml::from_str(&text)
        .map_err(|e| CliError::Failure(format!("invalid spec {}: {e}", path.display())))?;
    Ok(build_parametric_kernel(&spec)?)
}

impl ScenarioArgs {
    fn resolve(&self, config: &ConfigFile) -> Result<(Kernel, Scenario), CliError> {
        let path = config::resolve_kernel(&require(pick(&self.kernel, &config.kernel), "kernel")?)?;
        let kernel = if is_spec(&path) { load_spec(&path)? } else { load_kernel(&path)? };
        let label = require(pick(&self.state, &config.state), "state")?;
        let state = kernel.states().index_of(&label)?;
        let origin = Scenario::new(
            state,
            pick(&self.backward, &config.backward).unwrap_or(0),
            require(pick(&self.age, &config.age), "age")?,
            pick(&self.time, &config.time).unwrap_or(0),
        );
        Ok((kernel, origin))
    }
}

impl ContractArgs {
    fn discount(&self, config: &ConfigFile) -> Result<DiscountCurve, CliError> {
        // a flag of either kind overrides both config entries
        let (constant, file) = if self.discount.is_some() || self.discount_file.is_some() {
            (self.discount, self.discount_file.clone())
        } else {
            (config.discount, config.discount_file.clone())
        };
        let curve = match (constant, file) {
            (Some(d), _) => DiscountCurve::constant(d),
            (None, Some(path)) => DiscountCurve::per_period(config::read_discount_file(&path)?),
            (None, None) => return Err(CliError::Usage("missing required option --discount or --discount-file".into())),
        };
        curve.map_err(|e| CliError::Usage(e.to_string()))
    }

    fn timing(&self, config: &ConfigFile) -> Timing {
        pick(&self.timing, &config.timing).unwrap_or(Timing::Immediate)
    }
}

fn conversion_inputs<'k>(
    kernel: &'k Kernel,
    origin: Scenario,
    contract: &ContractArgs,
    conversion: &ConversionArgs,
    config: &ConfigFile,
) -> Result<ConversionInputs<'k>, CliError> {
    let term = require(pick(&contract.term, &config.term), "term")?;
    let premium_time = pick(&conversion.premium_time, &config.premium_time).unwrap_or(PremiumTime::AtConversion);
    let basis = pick(&conversion.cash_basis, &config.cash_basis).unwrap_or(CashBasis::DeathBenefit);
    Ok(ConversionInputs::new(kernel, origin, term, contract.discount(config)?)?
        .with_timing(contract.timing(config).into())
        .with_premium_time(premium_time.into())
        .with_cash_basis(basis.into()))
}

struct AgreementTable<'a>(&'a [semiconv::oracle::Agreement]);

impl CsvTable for AgreementTable<'_> {
    fn header(&self) -> &'static [&'static str] {
        &["quantity", "analytic", "estimate", "std_error", "z_score"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .iter()
            .map(|r| {
                vec![
                    r.quantity.clone(),
                    g17(r.analytic),
                    g17(r.estimate.mean),
                    g17(r.estimate.std_error),
                    g17(r.z_score()),
                ]
            })
            .collect()
    }
}

fn write_error(e: std::io::Error) -> CliError {
    CliError::Failure(format!("write failed: {e}"))
}

fn render(table: &dyn CsvTable) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_table(table, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn deliver(text: &str, output: &OutputArgs, config: &ConfigFile, out: &mut dyn Write) -> Result<(), CliError> {
    match pick(&output.output, &config.output) {
        Some(path) => write_file(&path, text),
        None => out.write_all(text.as_bytes()).map_err(write_error),
    }
}

fn emit(table: &dyn CsvTable, output: &OutputArgs, config: &ConfigFile, out: &mut dyn Write) -> Result<(), CliError> {
    deliver(&render(table)?, output, config, out)
}
