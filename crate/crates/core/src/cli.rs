//! Command-line front end.
//!
//! Parameters come from an optional `--config` file overlaid with flags, so a
//! flag always beats the file. Stochastic commands require `--seed`.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::battery::{
    occupancy_full_duplex_infinite, occupancy_half_duplex_finite, occupancy_half_duplex_infinite,
    steady_state_oracle, BatteryChain,
};
use crate::engine::{run, run_coupled, Dominance, SystemKind, SystemVariant};
use crate::error::{Error, Result};
use crate::experiments::{
    classify_against, export_classification_csv, export_paths_csv, export_polyline_csv,
    export_sweep_csv, fmt_sig9, sweep, write_meta, GridSpec, BOUNDARY_MARGIN,
};
use crate::harvest::{
    chi_square_vs_z, estimate_p_h12, pmf_table, sample_interarrivals, z_pmf, z_pmf_via_erlang,
};
use crate::params::{
    derive_p_h, derive_theta, BatteryCapacity, Duplex, HarvestProbs, ParamSet, PhysicalParams,
    SystemParams,
};
use crate::rng::{stream, Purpose};
use crate::stability::{
    region_closure, region_dominant_first, region_dominant_second_interference,
    region_finite_battery, region_full_duplex, region_r_d, saturated_rates, unit_grid, RegionSpec,
};

const ORACLE_TRUNCATION: usize = 10_000;
const P_H12_SAMPLES: usize = 200_000;

#[derive(Debug, Parser)]
#[command(
    name = "eh-aloha",
    version,
    about = "Slotted Aloha with an RF energy-harvesting node: stability regions and simulation",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inter-arrival PMF of harvested energy units: analytic vs Monte Carlo (CSV).
    HarvestPmf(HarvestPmfArgs),
    /// Battery occupancy: closed form vs numeric chain solution (JSON).
    Battery(BatteryArgs),
    /// Stability-region boundary polyline (CSV), optionally a membership grid.
    Region(RegionArgs),
    /// One simulation run (JSON metrics, optional path CSV).
    Simulate(SimulateArgs),
    /// Parallel simulation over a grid of arrival rates (CSV).
    Sweep(SweepArgs),
    /// Several systems driven by common random numbers (path CSVs).
    CoupledPaths(CoupledArgs),
    /// Deterministic closed-form vs oracle checks with a pass/fail table.
    Validate,
}

/// Parameter flags shared by all commands; each maps to one config key.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Battery capacity: a positive integer or `inf`.
    #[arg(long)]
    pub battery: Option<String>,
    #[arg(long, value_enum)]
    pub duplex: Option<DuplexArg>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, conflicts_with_all = ["distance", "alpha"])]
    pub pathloss_gain: Option<f64>,
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub loopback_c: Option<f64>,
    /// Harvest probability when only Type I transmits.
    #[arg(long = "ph", alias = "ph1")]
    pub p_h1: Option<f64>,
    /// Full duplex: harvest probability when only Type II transmits.
    #[arg(long = "ph2")]
    pub p_h2: Option<f64>,
    /// Full duplex: harvest probability when both transmit.
    #[arg(long = "ph12")]
    pub p_h12: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DuplexArg {
    Half,
    Full,
}

impl ParamArgs {
    pub fn to_param_set(&self) -> Result<ParamSet> {
        let mut set = match &self.config {
            Some(path) => ParamSet::load(path)?,
            None => ParamSet::new(),
        };
        let mut flags = ParamSet::new();
        let numbers = [
            ("q1", self.q1),
            ("q2", self.q2),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("eta", self.eta),
            ("p1", self.p1),
            ("p2", self.p2),
            ("gamma", self.gamma),
            ("pathloss_gain", self.pathloss_gain),
            ("distance", self.distance),
            ("alpha", self.alpha),
            ("loopback_c", self.loopback_c),
            ("p_h1", self.p_h1),
            ("p_h2", self.p_h2),
            ("p_h12", self.p_h12),
        ];
        for (key, value) in numbers {
            if let Some(v) = value {
                flags.set(key, v.to_string())?;
            }
        }
        if let Some(b) = &self.battery {
            flags.set("battery", b.clone())?;
        }
        if let Some(d) = self.duplex {
            flags.set("duplex", if d == DuplexArg::Full { "full" } else { "half" })?;
        }
        set.overlay(&flags);
        Ok(set)
    }
}

/// Resolves parameters, estimating a missing full-duplex `p_h12` from physics when a seed is available.
fn resolve(set: &ParamSet, seed: Option<u64>) -> Result<SystemParams> {
    match set.resolve(None) {
        Err(Error::Missing("p_h12")) => {
            let (Some(seed), Some(phys)) = (seed, set.physical()?) else {
                return Err(Error::Missing("p_h12"));
            };
            let mut rng = stream(seed, 0, Purpose::Estimation);
            let est = estimate_p_h12(&mut rng, &phys, P_H12_SAMPLES)?;
            set.resolve(Some(est.value))
        }
        other => other,
    }
}

#[derive(Debug, Args)]
pub struct HarvestPmfArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub seed: u64,
    /// Number of simulated inter-arrival times.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Largest `k` listed.
    #[arg(long, default_value_t = 15)]
    pub kmax: u64,
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatteryArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// States kept by the numeric solver of an infinite battery.
    #[arg(long, default_value_t = ORACLE_TRUNCATION)]
    pub truncation: usize,
    /// Seed for estimating a missing full-duplex `p_h12`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionKindArg {
    Rd,
    Closure,
    Finite,
    FullDuplex,
    Dominant1,
    Dominant2,
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long, value_enum)]
    pub kind: RegionKindArg,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Vertices used for the closure's curved boundary.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Boundary CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a membership grid (lambda1, lambda2, inside) over the unit square.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub grid_n: usize,
    /// Seed for estimating a missing full-duplex `p_h12`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    /// Exact physical accumulation.
    So,
    /// Equivalent Bernoulli harvesting.
    Sg,
    /// Deprived system.
    Sd,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::So => SystemKind::ExactSO,
            SystemArg::Sg => SystemKind::EquivalentSG,
            SystemArg::Sd => SystemKind::DeprivedSD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DominanceArg {
    None,
    Node1Saturated,
    Node2Dummy,
    Node1Interference,
    BothSaturated,
}

impl From<DominanceArg> for Dominance {
    fn from(d: DominanceArg) -> Self {
        match d {
            DominanceArg::None => Dominance::None,
            DominanceArg::Node1Saturated => Dominance::Node1Saturated,
            DominanceArg::Node2Dummy => Dominance::Node2DummyBacklogged,
            DominanceArg::Node1Interference => Dominance::Node1DummyInterferenceRegion,
            DominanceArg::BothSaturated => Dominance::BothSaturated,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value = "sg")]
    pub system: SystemArg,
    #[arg(long, value_enum, default_value = "none")]
    pub dominance: DominanceArg,
    #[arg(long, default_value_t = 100_000)]
    pub horizon: u64,
    #[arg(long)]
    pub seed: u64,
    /// Record the state every `d` slots (0 disables paths).
    #[arg(long, default_value_t = 0)]
    pub decimation: u64,
    /// Path CSV (requires `--decimation`).
    #[arg(long, requires = "decimation")]
    pub paths_out: Option<PathBuf>,
    /// Metrics JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value = "sd")]
    pub system: SystemArg,
    #[arg(long, value_enum, default_value = "none")]
    pub dominance: DominanceArg,
    #[arg(long, default_value_t = 0.0)]
    pub l1_min: f64,
    #[arg(long, default_value_t = 0.45)]
    pub l1_max: f64,
    #[arg(long, default_value_t = 30)]
    pub n1: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2_min: f64,
    #[arg(long, default_value_t = 0.2)]
    pub l2_max: f64,
    #[arg(long, default_value_t = 30)]
    pub n2: usize,
    #[arg(long, default_value_t = 100_000)]
    pub horizon: u64,
    #[arg(long)]
    pub seed: u64,
    /// Continue each cell to twice the horizon and record the growth ratio.
    #[arg(long)]
    pub doubling: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cell verdicts against the analytic deprived-system region (implies `--doubling`).
    #[arg(long)]
    pub classify_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoupledArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Comma-separated systems, e.g. `sd,sg,so`.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sd,sg")]
    pub systems: Vec<SystemArg>,
    #[arg(long, value_enum, default_value = "none")]
    pub dominance: DominanceArg,
    #[arg(long, default_value_t = 100_000)]
    pub horizon: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub decimation: u64,
    /// Output prefix; writes `<prefix>_<system>.csv` per system.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::HarvestPmf(a) => cmd_harvest_pmf(&a),
        Command::Battery(a) => cmd_battery(&a),
        Command::Region(a) => cmd_region(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::CoupledPaths(a) => cmd_coupled(&a),
        Command::Validate => {
            let rows = validation_suite();
            print!("{}", render_validation(&rows));
            Ok(if rows.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }?;
    Ok(ExitCode::SUCCESS)
}

fn write_stdout(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes CSV through `export` to `out`, or to a temporary file echoed to stdout.
fn emit_csv(out: Option<&Path>, export: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => export(p),
        None => {
            let dir = std::env::temp_dir().join(format!("eh-aloha-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            let tmp = dir.join("out.csv");
            export(&tmp)?;
            let text = std::fs::read_to_string(&tmp).map_err(|source| Error::Io {
                path: tmp.clone(),
                source,
            })?;
            let _ = std::fs::remove_dir_all(&dir);
            write_stdout(&text)
        }
    }
}

fn physical_or_reference(set: &ParamSet) -> Result<PhysicalParams> {
    Ok(set.physical()?.unwrap_or_else(PhysicalParams::reference))
}

fn cmd_harvest_pmf(a: &HarvestPmfArgs) -> Result<ExitCode> {
    let set = a.params.to_param_set()?;
    let phys = physical_or_reference(&set)?;
    let theta = derive_theta(&phys);
    let mut rng = stream(a.seed, 0, Purpose::Fading);
    let samples = sample_interarrivals(&mut rng, &phys, a.samples);
    let rows = pmf_table(&samples, theta, a.kmax)?;
    let chi = chi_square_vs_z(&samples, theta, a.significance)?;
    let mean = samples.iter().sum::<u64>() as f64 / samples.len().max(1) as f64;
    let summary = json!({
        "theta": theta,
        "p_h": derive_p_h(theta),
        "samples": samples.len(),
        "mean_empirical": mean,
        "mean_analytic": 1.0 + theta,
        "chi_square": chi,
        "chi_square_pass": chi.passes(),
        "seed": a.seed,
        "config": set.entries(),
    });
    let export = |p: &Path| -> Result<()> {
        let mut w = csv::Writer::from_path(p).map_err(|source| Error::Csv {
            path: p.to_path_buf(),
            source,
        })?;
        let csv_err = |source| Error::Csv {
            path: p.to_path_buf(),
            source,
        };
        w.write_record(["k", "pmf_analytic", "pmf_empirical", "abs_error"])
            .map_err(csv_err)?;
        for r in &rows {
            w.write_record([
                r.k.to_string(),
                fmt_sig9(r.pmf_analytic),
                fmt_sig9(r.pmf_empirical),
                fmt_sig9(r.abs_error),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    emit_csv(a.out.as_deref(), export)?;
    match &a.out {
        Some(p) => {
            write_meta(p, &summary)?;
        }
        None => eprintln!("{summary}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct BatteryReport {
    closed_form: f64,
    oracle: f64,
    abs_diff: f64,
}

/// Closed-form occupancy for the resolved parameters.
pub fn closed_form_occupancy(params: &SystemParams) -> Result<f64> {
    let p = &params.protocol;
    match (params.duplex, p.battery_capacity) {
        (Duplex::Half, BatteryCapacity::Infinite) => {
            Ok(occupancy_half_duplex_infinite(p.q1, p.q2, params.harvest.p_h1))
        }
        (Duplex::Half, BatteryCapacity::Finite(m)) => {
            Ok(occupancy_half_duplex_finite(p.q1, p.q2, params.harvest.p_h1, m))
        }
        (Duplex::Full, BatteryCapacity::Infinite) => {
            Ok(occupancy_full_duplex_infinite(p.q1, p.q2, &params.harvest))
        }
        (Duplex::Full, BatteryCapacity::Finite(_)) => Err(Error::Domain(
            "no closed form for a finite full-duplex battery".into(),
        )),
    }
}

fn chain_for(params: &SystemParams) -> BatteryChain {
    let p = &params.protocol;
    match params.duplex {
        Duplex::Half => BatteryChain::half_duplex(p.q1, p.q2, params.harvest.p_h1, p.battery_capacity),
        Duplex::Full => BatteryChain::full_duplex(p.q1, p.q2, &params.harvest, p.battery_capacity),
    }
}

fn cmd_battery(a: &BatteryArgs) -> Result<ExitCode> {
    let params = resolve(&a.params.to_param_set()?, a.seed)?;
    let closed_form = closed_form_occupancy(&params)?;
    let oracle = steady_state_oracle(&chain_for(&params), a.truncation).occupancy;
    let report = BatteryReport {
        closed_form,
        oracle,
        abs_diff: (closed_form - oracle).abs(),
    };
    write_stdout(&(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

/// Builds the requested region from resolved parameters.
pub fn build_region(kind: RegionKindArg, params: &SystemParams) -> Result<RegionSpec> {
    let p = &params.protocol;
    let ph = params.harvest.p_h1;
    Ok(match kind {
        RegionKindArg::Rd => region_r_d(p.q1, p.q2, ph),
        RegionKindArg::Closure => region_closure(ph),
        RegionKindArg::Dominant1 => region_dominant_first(p.q1, p.q2, ph),
        RegionKindArg::Dominant2 => region_dominant_second_interference(p.q1, p.q2, ph),
        RegionKindArg::Finite => match p.battery_capacity {
            BatteryCapacity::Finite(m) => region_finite_battery(p.q1, p.q2, ph, m),
            BatteryCapacity::Infinite => {
                return Err(Error::Missing("battery (finite capacity for --kind finite)"))
            }
        },
        RegionKindArg::FullDuplex => {
            if params.duplex != Duplex::Full {
                return Err(Error::Domain("--kind full-duplex needs full-duplex parameters".into()));
            }
            region_full_duplex(p.q1, p.q2, &params.harvest)
        }
    })
}

fn cmd_region(a: &RegionArgs) -> Result<ExitCode> {
    let mut set = a.params.to_param_set()?;
    if a.kind == RegionKindArg::FullDuplex && !set.contains("duplex") {
        set.set("duplex", "full")?;
    }
    let params = resolve(&set, a.seed)?;
    let region = build_region(a.kind, &params)?;
    let poly = region.boundary(a.points);
    emit_csv(a.out.as_deref(), |p| export_polyline_csv(&poly, p))?;
    if let Some(out) = &a.out {
        write_meta(out, &json!({ "region": region, "params": params, "config": set.entries() }))?;
    }
    if let Some(grid) = &a.grid_out {
        let mut text = String::from("lambda1,lambda2,inside\n");
        for (l1, l2) in unit_grid(a.grid_n) {
            let inside = u8::from(region.contains(l1, l2));
            text.push_str(&format!("{},{},{inside}\n", fmt_sig9(l1), fmt_sig9(l2)));
        }
        write_file(grid, &text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn variant_for(system: SystemArg, dominance: DominanceArg, params: &SystemParams) -> SystemVariant {
    SystemVariant::new(system.into(), params.duplex, dominance.into())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode> {
    let set = a.params.to_param_set()?;
    let params = resolve(&set, Some(a.seed))?;
    let variant = variant_for(a.system, a.dominance, &params);
    let mut metrics = run(&params, variant, a.horizon, a.seed, a.decimation)?;
    let paths = metrics.paths.take();
    if let (Some(out), Some(paths)) = (&a.paths_out, &paths) {
        export_paths_csv(paths, out)?;
        write_meta(out, &json!({ "variant": variant, "params": params, "seed": a.seed, "decimation": a.decimation }))?;
    }
    let doc = json!({
        "metrics": metrics,
        "variant": variant,
        "params": params,
        "horizon": a.horizon,
        "seed": a.seed,
        "config": set.entries(),
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => write_stdout(&text)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: &SweepArgs) -> Result<ExitCode> {
    let set = a.params.to_param_set()?;
    let params = resolve(&set, Some(a.seed))?;
    let variant = variant_for(a.system, a.dominance, &params);
    let grid = GridSpec::new((a.l1_min, a.l1_max), a.n1, (a.l2_min, a.l2_max), a.n2)?;
    let doubling = a.doubling || a.classify_out.is_some();
    let job = || sweep(&params, variant, &grid, a.horizon, a.seed, doubling);
    let result = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(job)?,
        None => job()?,
    };
    export_sweep_csv(&result, &a.out)?;
    write_meta(&a.out, &json!({ "sweep": result.meta, "config": set.entries() }))?;
    if let Some(path) = &a.classify_out {
        let p = &params.protocol;
        let region = region_r_d(p.q1, p.q2, params.harvest.p_h1);
        let c = classify_against(&result, &region, BOUNDARY_MARGIN)?;
        export_classification_csv(&c, path)?;
        eprintln!(
            "consistent {}/{} non-boundary cells ({:.1}%), {} excluded",
            c.consistent,
            c.considered,
            100.0 * c.fraction(),
            c.excluded
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn system_label(s: SystemArg) -> &'static str {
    match s {
        SystemArg::So => "so",
        SystemArg::Sg => "sg",
        SystemArg::Sd => "sd",
    }
}

fn cmd_coupled(a: &CoupledArgs) -> Result<ExitCode> {
    let set = a.params.to_param_set()?;
    let params = resolve(&set, Some(a.seed))?;
    let variants: Vec<SystemVariant> = a
        .systems
        .iter()
        .map(|&s| variant_for(s, a.dominance, &params))
        .collect();
    let runs = run_coupled(&params, &variants, a.horizon, a.seed, a.decimation.max(1))?;
    let mut summary = Vec::new();
    for (sys, m) in a.systems.iter().zip(&runs) {
        let mut name = a.out_prefix.as_os_str().to_owned();
        name.push(format!("_{}.csv", system_label(*sys)));
        let path = PathBuf::from(name);
        export_paths_csv(m.paths.as_deref().unwrap_or(&[]), &path)?;
        let mut m = m.clone();
        m.paths = None;
        summary.push(json!({ "system": system_label(*sys), "file": path, "metrics": m }));
    }
    write_stdout(&(serde_json::to_string_pretty(&json!({ "runs": summary, "seed": a.seed }))? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationRow {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn row(check: impl Into<String>, value: f64, tolerance: f64) -> ValidationRow {
    ValidationRow {
        check: check.into(),
        value,
        tolerance,
        pass: value.is_finite() && value <= tolerance,
    }
}

fn grid_mismatches(a: &RegionSpec, b: &RegionSpec, subset_only: bool) -> f64 {
    unit_grid(200)
        .filter(|&(x, y)| {
            let (ia, ib) = (a.contains(x, y), b.contains(x, y));
            if subset_only {
                ia && !ib
            } else {
                ia != ib
            }
        })
        .count() as f64
}

/// Deterministic closed-form vs oracle checks at the reference operating point.
pub fn validation_suite() -> Vec<ValidationRow> {
    let mut rows = Vec::new();
    let phys = PhysicalParams::reference();
    let theta = derive_theta(&phys);
    rows.push(row("theta at reference physics vs 0.667", (theta - 0.667).abs(), 1e-3));
    rows.push(row("p_h at reference physics vs 0.6", (derive_p_h(theta) - 0.6).abs(), 1e-3));

    let mut pmf_err: f64 = 0.0;
    for &t in &[0.1, 0.667, 2.0, 10.0] {
        for k in 1..=100 {
            let (Ok(a), Ok(b)) = (z_pmf(t, k), z_pmf_via_erlang(t, k)) else {
                pmf_err = f64::INFINITY;
                continue;
            };
            pmf_err = pmf_err.max((a - b).abs());
        }
    }
    rows.push(row("inter-arrival pmf: Poisson vs Erlang form", pmf_err, 1e-12));

    let (q1, q2, ph) = (0.4, 0.4, 0.6);
    let mut battery_err: f64 = 0.0;
    let qs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let ps = [0.2, 0.6, 1.0];
    for &a in &qs {
        for &b in &qs {
            for &p in &ps {
                let inf = BatteryChain::half_duplex(a, b, p, BatteryCapacity::Infinite);
                let d = (steady_state_oracle(&inf, ORACLE_TRUNCATION).occupancy
                    - occupancy_half_duplex_infinite(a, b, p))
                .abs();
                battery_err = battery_err.max(d);
                for m in [1, 2, 5, 20] {
                    let chain = BatteryChain::half_duplex(a, b, p, BatteryCapacity::Finite(m));
                    let d = (steady_state_oracle(&chain, 0).occupancy
                        - occupancy_half_duplex_finite(a, b, p, m))
                    .abs();
                    battery_err = battery_err.max(d);
                }
            }
        }
    }
    rows.push(row("battery occupancy: closed forms vs chain (half duplex)", battery_err, 1e-9));

    let fd = HarvestProbs::full_duplex(0.2, 0.2, 0.35).expect("valid probabilities");
    let mut fd_err: f64 = 0.0;
    for &a in &qs {
        for &b in &qs {
            let chain = BatteryChain::full_duplex(a, b, &fd, BatteryCapacity::Infinite);
            let d = (steady_state_oracle(&chain, ORACLE_TRUNCATION).occupancy
                - occupancy_full_duplex_infinite(a, b, &fd))
            .abs();
            fd_err = fd_err.max(d);
        }
    }
    rows.push(row("battery occupancy: closed form vs chain (full duplex)", fd_err, 1e-9));

    let s = saturated_rates(q1, q2, ph);
    rows.push(row("saturated Type I rate vs 0.32258", (s.mu1_s - 0.32258).abs(), 1e-5));
    rows.push(row("saturated Type II rate vs 0.11613", (s.mu2_s - 0.11613).abs(), 1e-5));

    let rd = region_r_d(q1, q2, ph);
    let union = unit_grid(200)
        .filter(|&(x, y)| {
            let u = region_dominant_first(q1, q2, ph).contains(x, y)
                || region_dominant_second_interference(q1, q2, ph).contains(x, y);
            u != rd.contains(x, y)
        })
        .count() as f64;
    rows.push(row("dominant regions union equals deprived region (grid misses)", union, 0.0));
    let closure = region_closure(ph);
    let mut nest = 0.0;
    for m in [1, 5, 20] {
        nest += grid_mismatches(&region_finite_battery(q1, q2, ph, m), &rd, true);
    }
    nest += grid_mismatches(&rd, &closure, true);
    rows.push(row("finite battery within deprived region within closure (grid misses)", nest, 0.0));

    let fd_big = region_full_duplex(0.4, 0.7, &fd);
    let rd_big = region_r_d(0.4, 0.7, 0.2);
    let strict = grid_mismatches(&rd_big, &fd_big, true)
        + f64::from(u8::from(grid_mismatches(&fd_big, &rd_big, true) == 0.0));
    rows.push(row("full duplex strictly contains half duplex at q2 = 0.7", strict, 0.0));
    let equal = grid_mismatches(&region_full_duplex(0.4, 0.05, &fd), &region_r_d(0.4, 0.05, 0.2), false);
    rows.push(row("full duplex equals half duplex at q2 = 0.05", equal, 0.0));
    rows
}

pub fn render_validation(rows: &[ValidationRow]) -> String {
    let width = rows.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>12}  {:>9}  result\n", "check", "value", "tolerance");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>12.3e}  {:>9.1e}  {}\n",
            r.check,
            r.value,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    out.push_str(&format!("{passed}/{} checks passed\n", rows.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.txt");
        std::fs::write(&cfg, "q1 = 0.3\nq2 = 0.2\np_h1 = 0.5\n").unwrap();
        let args = ParamArgs {
            config: Some(cfg),
            q1: Some(0.7),
            ..Default::default()
        };
        let params = args.to_param_set().unwrap().resolve(None).unwrap();
        assert_eq!(params.protocol.q1, 0.7);
        assert_eq!(params.protocol.q2, 0.2);
        assert_eq!(params.harvest.p_h1, 0.5);
    }

    #[test]
    fn missing_p_h12_is_estimated_only_with_seed() {
        let args = ParamArgs {
            duplex: Some(DuplexArg::Full),
            loopback_c: Some(0.5),
            ..Default::default()
        };
        let set = args.to_param_set().unwrap();
        assert!(matches!(resolve(&set, None), Err(Error::Missing("p_h12"))));
        let params = resolve(&set, Some(3)).unwrap();
        assert!(params.harvest.p_h12 > params.harvest.p_h1);
    }

    #[test]
    fn validation_suite_passes() {
        let rows = validation_suite();
        let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(render_validation(&rows).contains("checks passed"));
    }

    #[test]
    fn full_duplex_finite_has_no_closed_form() {
        let set = ParamSet::parse("duplex = full\np_h1 = 0.2\np_h2 = 0.2\np_h12 = 0.35\nbattery = 4").unwrap();
        let params = set.resolve(None).unwrap();
        assert!(closed_form_occupancy(&params).is_err());
    }
}
