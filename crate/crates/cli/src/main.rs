//! `trimarket`: compute and study the joint equilibrium of coupled
//! electricity, natural gas, and carbon-emission markets.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible single run,
//! 3 verification failure on a single run. Sweep subcommands mark
//! infeasible or unverified scenarios in their output rows and exit 0.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trimarket::case::{parse_case, validate, MarketCase};
use trimarket::kkt::Mode;
use trimarket::solver::adapter_from_config;
use trimarket::study::{
    run_single, rows_to_json, solution_to_json, study_cap_sweep, study_clearing_time,
    study_retrofit, sweep_demand, write_csv, RetrofitStrategy, StudyRow,
};

#[derive(Parser)]
#[command(
    name = "trimarket",
    version,
    about = "Joint operational equilibrium of electricity, gas, and carbon markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum ModeArg {
    #[default]
    Proposed,
    CapAndTrade,
}

impl From<ModeArg> for Mode {
    fn from(mode: ModeArg) -> Mode {
        match mode {
            ModeArg::Proposed => Mode::Proposed,
            ModeArg::CapAndTrade => Mode::CapAndTrade,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum FormatArg {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Equilibrium mode.
    #[arg(long, value_enum, default_value_t = ModeArg::Proposed)]
    mode: ModeArg,
    /// Solver adapter (`highs` or `external`); overrides the case file.
    #[arg(long)]
    solver: Option<String>,
    /// Multiplier on the derived dual-side big-M bounds.
    #[arg(long)]
    big_m_scale: Option<f64>,
    /// Complementarity tolerance for audits and reports.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format for emitted rows.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case end to end and emit the solution and verification.
    Run {
        case: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also write the symbolic KKT system and MPS/LP model exports.
        #[arg(long)]
        dump: bool,
    },
    /// Electricity demand growth sweep (percent values).
    SweepDemand {
        case: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,25,30")]
        growth: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Generator retrofit study from a strategies file.
    Retrofit {
        case: PathBuf,
        /// JSON list of {label, changes: [{generator, cost, emission_rate}]}.
        #[arg(long)]
        strategies: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Carbon-market clearing-time study.
    ClearingTime {
        case: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,12,24")]
        scalars: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Allowance-total sweep (plot-ready prices per cap value).
    CapSweep {
        case: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        caps: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, everything else is
            // a usage error.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_case(path: &Path, common: &Common) -> anyhow::Result<MarketCase> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read case file {}: {e}", path.display()))?;
    let mut case = parse_case(&text)?;
    if let Some(solver) = &common.solver {
        case.solver.adapter = solver.clone();
    }
    if let Some(scale) = common.big_m_scale {
        case.solver.big_m_scale = scale;
    }
    if let Some(tol) = common.tol {
        case.solver.comp_tolerance = tol;
    }
    let report = validate(&case);
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if !report.is_ok() {
        for error in &report.errors {
            eprintln!("error: {error}");
        }
        anyhow::bail!("case validation failed with {} error(s)", report.errors.len());
    }
    Ok(case)
}

fn emit_rows(
    rows: &[StudyRow],
    common: &Common,
    out_name: &str,
) -> anyhow::Result<()> {
    match (&common.out, common.format) {
        (Some(dir), FormatArg::Csv) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{out_name}.csv"));
            let file = std::fs::File::create(&path)?;
            write_csv(rows, file)?;
            println!("wrote {}", path.display());
        }
        (Some(dir), FormatArg::Json) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{out_name}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&rows_to_json(rows))?)?;
            println!("wrote {}", path.display());
        }
        (None, FormatArg::Csv) => write_csv(rows, std::io::stdout())?,
        (None, FormatArg::Json) => {
            println!("{}", serde_json::to_string_pretty(&rows_to_json(rows))?)
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { case: path, common, dump } => run_one(&path, &common, dump),
        Command::SweepDemand { case: path, growth, common } => {
            let case = load_case(&path, &common)?;
            let rows = sweep_demand(&case, &growth, common.mode.into())?;
            emit_rows(&rows, &common, "sweep_demand")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Retrofit { case: path, strategies, common } => {
            let case = load_case(&path, &common)?;
            let text = std::fs::read_to_string(&strategies).map_err(|e| {
                anyhow::anyhow!("cannot read strategies file {}: {e}", strategies.display())
            })?;
            let strategies: Vec<RetrofitStrategy> = serde_json::from_str(&text)?;
            let rows = study_retrofit(&case, &strategies, common.mode.into())?;
            emit_rows(&rows, &common, "retrofit")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ClearingTime { case: path, scalars, common } => {
            let case = load_case(&path, &common)?;
            let rows = study_clearing_time(&case, &scalars, common.mode.into())?;
            emit_rows(&rows, &common, "clearing_time")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::CapSweep { case: path, caps, common } => {
            let case = load_case(&path, &common)?;
            let rows = study_cap_sweep(&case, &caps, common.mode.into())?;
            emit_rows(&rows, &common, "cap_sweep")?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_one(path: &Path, common: &Common, dump: bool) -> anyhow::Result<ExitCode> {
    let case = load_case(path, common)?;
    let adapter = adapter_from_config(&case.solver)?;
    let mode: Mode = common.mode.into();
    let outcome = match run_single(&case, mode, adapter.as_ref()) {
        Ok(outcome) => outcome,
        Err(trimarket::Error::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };

    let rows = vec![outcome.row.clone()];
    emit_rows(&rows, common, "run")?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("solution.json"),
            serde_json::to_string_pretty(&solution_to_json(&case, &outcome.solution))?,
        )?;
        std::fs::write(
            dir.join("verification.json"),
            serde_json::to_string_pretty(&serde_json::json!({
                "pass": outcome.verification.pass,
                "residuals": outcome.verification.residuals,
                "fixed_point": outcome.verification.fixed_point,
                "merit_order_checked": outcome.verification.merit_order_checked,
                "merit_order_max_gap": outcome.verification.merit_order_max_gap,
            }))?,
        )?;
        if dump {
            std::fs::write(dir.join("system.kkt.txt"), outcome.system.dump())?;
            let artifact = trimarket::export::write_mps(&outcome.model, "trimarket");
            std::fs::write(dir.join("model.mps"), &artifact.mps)?;
            if let Some(map) = &artifact.name_map {
                std::fs::write(dir.join("model.names.tsv"), map)?;
            }
            std::fs::write(dir.join("model.lp"), trimarket::export::write_lp(&outcome.model))?;
        }
    } else {
        println!(
            "status {} | avg prices: electricity {:.4} $/MWh, gas {:.4} $/Mm3, carbon {:.4} $/t | emission {:.4} t ({:.4} t/h) | verified {}",
            outcome.row.status,
            outcome.row.avg_electricity_price,
            outcome.row.avg_gas_price,
            outcome.row.carbon_price,
            outcome.row.total_emission,
            outcome.row.avg_hourly_emission,
            outcome.verification.pass,
        );
    }
    if !outcome.verification.pass {
        eprintln!("verification failed");
        eprintln!(
            "{}",
            serde_json::to_string_pretty(&outcome.verification.residuals)?
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}
