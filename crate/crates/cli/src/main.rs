//! `wi`: run hint-fabric simulations and savings analyses from TOML files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use wi_core::accounting::{
    carbon_report, estimate_joint, generate, savings_breakdown, vm_price, BenefitTable, CarbonConfig, CarbonReport,
    JointConstraints, JointError, PairConstraint, PriceBook, SavingsReport, ScenarioMass, SurveyMarginals, UsageRecord,
    WorkloadProfile,
};
use wi_core::hints::{EligibilityThresholds, OptSet};
use wi_core::optimizers::region::RegionEntry;
use wi_core::optimizers::{FrequencyLevel, OptimizationId};
use wi_core::sim::{self, Scenario};
use wi_core::BigRational;

#[derive(Debug, Parser)]
#[command(name = "wi", version, about = "Workload hint simulations and savings analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the seed in the input file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Structured)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario; writes trace.csv, metrics and summary.txt.
    Simulate {
        scenario: PathBuf,
        /// Prepare agent batches on threads (same trace either way).
        #[arg(long)]
        parallel: bool,
    },
    /// Savings and carbon breakdown for a population.
    Savings {
        population: Option<PathBuf>,
        /// Draw a synthetic population from the survey marginals instead.
        #[arg(long)]
        survey_defaults: bool,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Cores per generated workload.
        #[arg(long, default_value_t = 8)]
        cores: u64,
    },
    /// Bound total savings under partial knowledge of the joint eligibility.
    EstimateJoint {
        constraints: Option<PathBuf>,
        /// Build constraints from the survey population (marginals, pairs, heavy combinations).
        #[arg(long)]
        survey_defaults: bool,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Mass above which a combination is pinned.
        #[arg(long, default_value_t = 0.05)]
        heavy: f64,
        /// Solve in exact rational arithmetic.
        #[arg(long)]
        exact: bool,
    },
    /// Price one VM under a set of optimizations.
    Price {
        /// Comma-separated optimization names, e.g. SpotVMs,MADC.
        #[arg(long, default_value = "")]
        opts: String,
        #[arg(long, default_value_t = 1)]
        cores: u32,
        #[arg(long, default_value = "1")]
        hours: String,
        #[arg(long, default_value = "1")]
        base: String,
        #[arg(long, default_value = "1")]
        region_factor: String,
        #[arg(long)]
        resized_cores: Option<u32>,
        #[arg(long, default_value = "0")]
        harvested_core_hours: String,
        #[arg(long, default_value = "0")]
        overclocked_core_hours: String,
        #[arg(long, default_value_t = 1)]
        overclock_level: i8,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
enum Failure {
    Runtime(anyhow::Error),
    Validation(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WI_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Validation(m) => eprintln!("invalid input: {m}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate { scenario, parallel } => simulate(cli, scenario, *parallel),
        Command::Savings { population, survey_defaults, n, cores } => {
            savings(cli, population.as_deref(), *survey_defaults, *n, *cores)
        }
        Command::EstimateJoint { constraints, survey_defaults, n, heavy, exact } => {
            joint(cli, constraints.as_deref(), *survey_defaults, *n, *heavy, *exact)
        }
        Command::Price { .. } => price(cli),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)
}

fn write_out(cli: &Cli, name: &str, body: &str) -> Result<(), Failure> {
    let Some(dir) = &cli.out else { return Ok(()) };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn to_toml<T: Serialize>(v: &T) -> Result<String, Failure> {
    toml::to_string(v).context("serializing report").map_err(Failure::Runtime)
}

fn simulate(cli: &Cli, path: &Path, parallel: bool) -> Result<(), Failure> {
    let text = read(path)?;
    let mut sc = Scenario::from_toml(&text).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(seed) = cli.seed {
        sc.seed = seed;
    }
    sc.parallel_agents |= parallel;
    let out = sim::run(&sc).map_err(|e| Failure::Validation(e.to_string()))?;
    let summary = out.metrics.summary();
    write_out(cli, "trace.csv", &out.trace.to_csv())?;
    match cli.format {
        Format::Structured => write_out(cli, "metrics.toml", &to_toml(&out.metrics)?)?,
        Format::Csv => write_out(cli, "metrics.csv", &metrics_csv(&out.metrics))?,
    }
    write_out(cli, "summary.txt", &format!("{summary}\n"))?;
    println!("{summary}");
    Ok(())
}

fn metrics_csv(m: &sim::MetricsReport) -> String {
    let mut s = String::from(
        "workload,regular_vm_hours,spot_vm_hours,harvest_vm_hours,evictions,evictions_with_notice,emergency_evictions,high_priority_evictions,throttle_seconds,work_completed,makespan_ms,slowdown,requests_generated,requests_completed,requests_dropped,cost,regular_cost\n",
    );
    for (id, w) in &m.workloads {
        let h = |c| w.vm_hours.get(&c).copied().unwrap_or(0.0);
        let _ = writeln!(
            s,
            "{id},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            h(sim::BillingClass::Regular),
            h(sim::BillingClass::Spot),
            h(sim::BillingClass::Harvest),
            w.evictions,
            w.evictions_with_notice,
            w.emergency_evictions,
            w.high_priority_evictions,
            w.throttle_seconds,
            w.work_completed,
            w.makespan_ms.map_or(String::new(), |v| v.to_string()),
            w.slowdown.map_or(String::new(), |v| v.to_string()),
            w.requests_generated,
            w.requests_completed,
            w.requests_dropped,
            w.cost,
            w.regular_cost
        );
    }
    s
}

/// Population document.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationFile {
    #[serde(default)]
    workloads: Vec<WorkloadProfile>,
    #[serde(default)]
    regions: Vec<RegionEntry>,
    #[serde(default)]
    carbon: Option<CarbonConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SavingsDocument {
    savings: SavingsReport<f64>,
    carbon: Option<CarbonReport>,
}

fn default_regions(home: &str) -> Vec<RegionEntry> {
    vec![
        RegionEntry { region_id: home.into(), price_factor: 1.0, carbon_g_per_kwh: 546.0 },
        RegionEntry { region_id: "green".into(), price_factor: 1.0, carbon_g_per_kwh: 267.0 },
    ]
}

fn savings(cli: &Cli, path: Option<&Path>, survey: bool, n: usize, cores: u64) -> Result<(), Failure> {
    let file = match (path, survey) {
        (_, true) => {
            let seed = cli.seed.unwrap_or(1);
            let workloads = generate(&SurveyMarginals::default(), n, cores, seed)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            PopulationFile { workloads, ..Default::default() }
        }
        (Some(p), false) => {
            toml::from_str::<PopulationFile>(&read(p)?).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        (None, false) => return Err(Failure::Validation("give a population file or --survey-defaults".into())),
    };
    let t = EligibilityThresholds::default();
    let report = savings_breakdown(&file.workloads, &BenefitTable::<f64>::standard(), &t);
    let cfg = file.carbon.clone().unwrap_or_default();
    let regions = if file.regions.is_empty() { default_regions(cfg.home_region.as_str()) } else { file.regions.clone() };
    let carbon = if file.workloads.is_empty() {
        None
    } else {
        Some(carbon_report(&file.workloads, &regions, &cfg, &t).map_err(|e| Failure::Validation(e.to_string()))?)
    };
    let csv = savings_csv(&report);
    let doc = SavingsDocument { savings: report, carbon };
    let structured = to_toml(&doc)?;
    write_out(cli, "savings.csv", &csv)?;
    write_out(cli, "savings.toml", &structured)?;
    match cli.format {
        Format::Csv => print!("{csv}"),
        Format::Structured => print!("{structured}"),
    }
    Ok(())
}

fn savings_csv(r: &SavingsReport<f64>) -> String {
    let mut s = String::from("optimization,points\n");
    for c in &r.contributions {
        let _ = writeln!(s, "{},{:.4}", c.optimization, c.points);
    }
    let _ = writeln!(s, "Total,{:.4}", r.total_pct);
    s
}

/// Constraint document for `estimate-joint`. Fractions are decimal strings or
/// numbers; strings stay exact under `--exact`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintsFile {
    optimizations: Vec<OptimizationId>,
    #[serde(default)]
    marginals: BTreeMap<OptimizationId, Fraction>,
    #[serde(default)]
    pairwise: Vec<PairRow>,
    #[serde(default)]
    scenarios: Vec<ScenarioRow>,
    /// Owner benefit overrides.
    #[serde(default)]
    benefits: BTreeMap<OptimizationId, Fraction>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Fraction {
    Number(f64),
    Text(String),
}

impl Fraction {
    fn text(&self) -> String {
        match self {
            Fraction::Number(x) => x.to_string(),
            Fraction::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRow {
    a: OptimizationId,
    b: OptimizationId,
    joint: Fraction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRow {
    set: OptSet,
    mass: Fraction,
}

fn build<S: wi_core::Scalar>(f: &ConstraintsFile) -> Result<JointConstraints<S>, Failure> {
    let num = |field: &str, x: &Fraction| {
        S::from_decimal(&x.text()).ok_or_else(|| Failure::Validation(format!("{field}: {:?} is not a number", x.text())))
    };
    let mut c = JointConstraints::new(f.optimizations.clone());
    for (id, x) in &f.marginals {
        c.marginals.insert(*id, num(&format!("marginals.{id}"), x)?);
    }
    for (i, p) in f.pairwise.iter().enumerate() {
        c.pairwise.push(PairConstraint { a: p.a, b: p.b, joint: num(&format!("pairwise[{i}].joint"), &p.joint)? });
    }
    for (i, s) in f.scenarios.iter().enumerate() {
        c.scenarios.push(ScenarioMass { set: s.set, mass: num(&format!("scenarios[{i}].mass"), &s.mass)? });
    }
    for (id, x) in &f.benefits {
        c.benefits.set(*id, num(&format!("benefits.{id}"), x)?);
    }
    Ok(c)
}

#[derive(Debug, Serialize, Deserialize)]
struct JointDocument {
    status: String,
    min: f64,
    max: f64,
    independence: Option<f64>,
}

fn joint(cli: &Cli, path: Option<&Path>, survey: bool, n: usize, heavy: f64, exact: bool) -> Result<(), Failure> {
    let t = EligibilityThresholds::default();
    let report = |e: Result<(f64, f64, Option<f64>), JointError>| -> Result<JointDocument, Failure> {
        match e {
            Ok((min, max, independence)) => Ok(JointDocument { status: "feasible".into(), min, max, independence }),
            Err(JointError::Infeasible { certificate }) => Err(Failure::Infeasible(certificate.join("; "))),
            Err(e @ JointError::Numerical(_)) => Err(Failure::Runtime(anyhow::anyhow!(e))),
            Err(e) => Err(Failure::Validation(e.to_string())),
        }
    };
    let doc = if survey {
        let pop = generate(&SurveyMarginals::default(), n, 8, cli.seed.unwrap_or(1))
            .map_err(|e| Failure::Validation(e.to_string()))?;
        let c = JointConstraints::<f64>::from_population(&pop, &t, heavy);
        report(estimate_joint(&c).map(|e| (e.min.savings, e.max.savings, e.independence)))?
    } else {
        let Some(p) = path else {
            return Err(Failure::Validation("give a constraints file or --survey-defaults".into()));
        };
        let f: ConstraintsFile =
            toml::from_str(&read(p)?).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?;
        if exact {
            let c = build::<BigRational>(&f)?;
            let lossy = |x: &BigRational| wi_core::Scalar::to_f64_lossy(x);
            report(estimate_joint(&c).map(|e| (lossy(&e.min.savings), lossy(&e.max.savings), e.independence.as_ref().map(lossy))))?
        } else {
            let c = build::<f64>(&f)?;
            report(estimate_joint(&c).map(|e| (e.min.savings, e.max.savings, e.independence)))?
        }
    };
    let text = match cli.format {
        Format::Structured => to_toml(&doc)?,
        Format::Csv => format!(
            "status,min,max,independence\n{},{},{},{}\n",
            doc.status,
            doc.min,
            doc.max,
            doc.independence.map_or(String::new(), |v| v.to_string())
        ),
    };
    write_out(cli, if cli.format == Format::Csv { "joint.csv" } else { "joint.toml" }, &text)?;
    print!("{text}");
    Ok(())
}

fn price(cli: &Cli) -> Result<(), Failure> {
    let Command::Price {
        opts,
        cores,
        hours,
        base,
        region_factor,
        resized_cores,
        harvested_core_hours,
        overclocked_core_hours,
        overclock_level,
    } = &cli.command
    else {
        unreachable!("dispatched on Price")
    };
    let q = |field: &str, s: &str| {
        wi_core::scalar::rational_from_decimal(s)
            .ok_or_else(|| Failure::Validation(format!("--{field}: {s:?} is not a decimal number")))
    };
    let mut active = OptSet::empty();
    for name in opts.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id = OptimizationId::from_name(name)
            .filter(|id| id.builtin_priority().is_some_and(|p| p >= 1))
            .ok_or_else(|| Failure::Validation(format!("--opts: unknown optimization {name:?}")))?;
        active.insert(id);
    }
    let level = FrequencyLevel::new(*overclock_level)
        .filter(|l| l.level() > 0)
        .ok_or_else(|| Failure::Validation(format!("--overclock-level: {overclock_level} is not 1 or 2")))?;
    let usage = UsageRecord {
        cores: *cores,
        vm_hours: q("hours", hours)?,
        resized_cores: *resized_cores,
        region_price_factor: q("region-factor", region_factor)?,
        harvested_core_hours: q("harvested-core-hours", harvested_core_hours)?,
        overclocked_core_hours: q("overclocked-core-hours", overclocked_core_hours)?,
        overclock_level: level,
    };
    let book = PriceBook::standard(q("base", base)?);
    let cost = vm_price(&book, active, &usage).map_err(|e| Failure::Validation(e.to_string()))?;
    let regular = vm_price(&book, OptSet::empty(), &UsageRecord { resized_cores: None, ..usage.clone() })
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let exact = wi_core::Scalar::to_f64_lossy(&cost);
    let text = match cli.format {
        Format::Csv => format!("optimizations,cost,regular\n\"{active}\",{exact},{}\n", wi_core::Scalar::to_f64_lossy(&regular)),
        Format::Structured => format!("optimizations = {:?}\ncost = {exact}\ncost_exact = \"{cost}\"\n", active.to_string()),
    };
    write_out(cli, "price.txt", &text)?;
    print!("{text}");
    Ok(())
}
