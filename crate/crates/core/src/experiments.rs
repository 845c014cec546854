//! Rate-grid sweeps, empirical stability classification and CSV export.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Simulator, SystemVariant};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::stability::RegionSpec;

/// Ratio below which a cell counts as stable.
pub const STABLE_RATIO: f64 = 1.1;
/// Ratio above which a cell counts as unstable.
pub const UNSTABLE_RATIO: f64 = 1.5;
/// Cells this close to an analytic boundary are left unclassified.
pub const BOUNDARY_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPoint {
    pub slot: u64,
    pub q1: u64,
    pub q2: u64,
    pub battery: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub slots: u64,
    pub avg_q1: f64,
    pub avg_q2: f64,
    /// Real departures per slot.
    pub throughput1: f64,
    pub throughput2: f64,
    /// Successful transmissions per slot, dummies included.
    pub success_rate1: f64,
    pub success_rate2: f64,
    /// Real departures of Q2 per slot in which Q2 was non-empty.
    pub cond_service2: f64,
    pub harvest_rate: f64,
    /// Fraction of slots starting with a non-empty battery.
    pub battery_occupancy: f64,
    pub attempts2: u64,
    pub harvest_arrivals: u64,
    pub final_q1: u64,
    pub final_q2: u64,
    pub final_battery: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<PathPoint>>,
}

impl RunMetrics {
    pub fn avg_total(&self) -> f64 {
        self.avg_q1 + self.avg_q2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambda1_min: f64,
    pub lambda1_max: f64,
    pub n1: usize,
    pub lambda2_min: f64,
    pub lambda2_max: f64,
    pub n2: usize,
}

impl GridSpec {
    pub fn new(lambda1: (f64, f64), n1: usize, lambda2: (f64, f64), n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::Domain(format!(
                "grid needs at least 2 points per axis, got {n1} x {n2}"
            )));
        }
        for &(lo, hi) in &[lambda1, lambda2] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::Domain(format!("invalid rate range [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            lambda1_min: lambda1.0,
            lambda1_max: lambda1.1,
            n1,
            lambda2_min: lambda2.0,
            lambda2_max: lambda2.1,
            n2,
        })
    }

    fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }

    pub fn lambda1(&self, i: usize) -> f64 {
        Self::axis(self.lambda1_min, self.lambda1_max, self.n1, i)
    }

    pub fn lambda2(&self, j: usize) -> f64 {
        Self::axis(self.lambda2_min, self.lambda2_max, self.n2, j)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(i, j)` of the cell with linear index `k` (row-major in `lambda1`).
    pub fn index(&self, k: usize) -> (usize, usize) {
        (k / self.n2, k % self.n2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub i: usize,
    pub j: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Metrics at the nominal horizon.
    pub metrics: RunMetrics,
    /// `(avg total queue over 2T + 1) / (avg total queue over T + 1)`, when doubling was requested.
    pub growth_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMeta {
    pub params: SystemParams,
    pub variant: SystemVariant,
    pub grid: Option<GridSpec>,
    pub horizon: u64,
    pub seed: u64,
    pub doubling: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub meta: SweepMeta,
    pub cells: Vec<CellResult>,
}

/// Horizon-doubling growth ratio of the time-averaged total queue.
///
/// One packet is added to both averages so that near-empty queues do not
/// produce spurious ratios.
pub fn growth_ratio(first: &RunMetrics, doubled: &RunMetrics) -> f64 {
    (doubled.avg_total() + 1.0) / (first.avg_total() + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Indeterminate,
}

pub fn classify_ratio(ratio: f64) -> Stability {
    if ratio < STABLE_RATIO {
        Stability::Stable
    } else if ratio > UNSTABLE_RATIO {
        Stability::Unstable
    } else {
        Stability::Indeterminate
    }
}

/// Runs one cell. With `doubling`, simulates `2 * horizon` slots and reports
/// the growth ratio between the two checkpoints.
pub fn run_cell(
    params: &SystemParams,
    variant: SystemVariant,
    horizon: u64,
    seed: u64,
    run_index: u64,
    doubling: bool,
) -> Result<(RunMetrics, Option<f64>)> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be >= 1".into()));
    }
    let mut sim = Simulator::new(params, variant, seed, run_index, 0)?;
    sim.advance(horizon);
    let first = sim.metrics();
    if !doubling {
        return Ok((first, None));
    }
    sim.advance(horizon);
    let ratio = growth_ratio(&first, &sim.metrics());
    Ok((first, Some(ratio)))
}

/// One simulation per grid cell in parallel; cell `k` uses stream family `k`.
pub fn sweep(
    template: &SystemParams,
    variant: SystemVariant,
    grid: &GridSpec,
    horizon: u64,
    seed: u64,
    doubling: bool,
) -> Result<SweepResult> {
    let cells = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = grid.index(k);
            let (l1, l2) = (grid.lambda1(i), grid.lambda2(j));
            let params = template.with_rates(l1, l2)?;
            let (metrics, growth_ratio) =
                run_cell(&params, variant, horizon, seed, k as u64, doubling)?;
            Ok(CellResult {
                i,
                j,
                lambda1: l1,
                lambda2: l2,
                metrics,
                growth_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        meta: SweepMeta {
            params: *template,
            variant,
            grid: Some(*grid),
            horizon,
            seed,
            doubling,
        },
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellVerdict {
    pub lambda1: f64,
    pub lambda2: f64,
    pub predicted_stable: bool,
    pub observed: Stability,
    pub near_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdicts: Vec<CellVerdict>,
    pub considered: usize,
    pub consistent: usize,
    pub excluded: usize,
}

impl Classification {
    pub fn fraction(&self) -> f64 {
        if self.considered == 0 {
            1.0
        } else {
            self.consistent as f64 / self.considered as f64
        }
    }
}

/// Compares observed growth ratios with analytic membership. Cells within
/// `margin` of the boundary are excluded; indeterminate cells count as misses.
pub fn classify_against(result: &SweepResult, region: &RegionSpec, margin: f64) -> Result<Classification> {
    let mut verdicts = Vec::with_capacity(result.cells.len());
    let (mut considered, mut consistent, mut excluded) = (0, 0, 0);
    for cell in &result.cells {
        let ratio = cell
            .growth_ratio
            .ok_or_else(|| Error::Domain("classification needs a doubling sweep".into()))?;
        let observed = classify_ratio(ratio);
        let predicted_stable = region.contains(cell.lambda1, cell.lambda2);
        let near_boundary = region.boundary_distance(cell.lambda1, cell.lambda2) < margin;
        if near_boundary {
            excluded += 1;
        } else {
            considered += 1;
            let expected = if predicted_stable {
                Stability::Stable
            } else {
                Stability::Unstable
            };
            consistent += usize::from(observed == expected);
        }
        verdicts.push(CellVerdict {
            lambda1: cell.lambda1,
            lambda2: cell.lambda2,
            predicted_stable,
            observed,
            near_boundary,
        });
    }
    Ok(Classification {
        verdicts,
        considered,
        consistent,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub considered: usize,
    pub agreeing: usize,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        if self.considered == 0 {
            1.0
        } else {
            self.agreeing as f64 / self.considered as f64
        }
    }
}

/// Fraction of cells away from `region`'s boundary where two doubling sweeps
/// over the same grid reach the same verdict.
pub fn agreement(a: &SweepResult, b: &SweepResult, region: &RegionSpec, margin: f64) -> Result<Agreement> {
    if a.cells.len() != b.cells.len() {
        return Err(Error::Domain("sweeps cover different grids".into()));
    }
    let mut out = Agreement {
        considered: 0,
        agreeing: 0,
    };
    for (x, y) in a.cells.iter().zip(&b.cells) {
        if (x.i, x.j) != (y.i, y.j) {
            return Err(Error::Domain("sweeps cover different grids".into()));
        }
        if region.boundary_distance(x.lambda1, x.lambda2) < margin {
            continue;
        }
        let (Some(rx), Some(ry)) = (x.growth_ratio, y.growth_ratio) else {
            return Err(Error::Domain("agreement needs doubling sweeps".into()));
        };
        out.considered += 1;
        out.agreeing += usize::from(classify_ratio(rx) == classify_ratio(ry));
    }
    Ok(out)
}

/// Formats with nine significant digits, switching to exponent form for very
/// small or very large magnitudes.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..9).contains(&mag) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "lambda1",
    "lambda2",
    "avg_q1",
    "avg_q2",
    "throughput1",
    "throughput2",
    "cond_service2",
    "harvest_rate",
    "battery_occupancy",
];

pub fn export_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let rows = result.cells.iter().map(|c| {
        let m = &c.metrics;
        [
            c.lambda1,
            c.lambda2,
            m.avg_q1,
            m.avg_q2,
            m.throughput1,
            m.throughput2,
            m.cond_service2,
            m.harvest_rate,
            m.battery_occupancy,
        ]
        .iter()
        .map(|&v| fmt_sig9(v))
        .collect()
    });
    write_rows(path, SWEEP_COLUMNS, rows)
}

pub fn export_classification_csv(c: &Classification, path: &Path) -> Result<()> {
    let rows = c.verdicts.iter().map(|v| {
        vec![
            fmt_sig9(v.lambda1),
            fmt_sig9(v.lambda2),
            v.predicted_stable.to_string(),
            serde_json::to_value(v.observed)
                .ok()
                .and_then(|s| s.as_str().map(str::to_owned))
                .unwrap_or_default(),
            v.near_boundary.to_string(),
        ]
    });
    write_rows(
        path,
        &["lambda1", "lambda2", "predicted_stable", "observed", "near_boundary"],
        rows,
    )
}

pub fn export_polyline_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let rows = points.iter().map(|&(x, y)| vec![fmt_sig9(x), fmt_sig9(y)]);
    write_rows(path, &["lambda1", "lambda2"], rows)
}

pub fn export_paths_csv(paths: &[PathPoint], path: &Path) -> Result<()> {
    let rows = paths.iter().map(|p| {
        vec![
            p.slot.to_string(),
            p.q1.to_string(),
            p.q2.to_string(),
            p.battery.to_string(),
        ]
    });
    write_rows(path, &["slot", "q1", "q2", "battery"], rows)
}

/// Sidecar path: `<file>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_meta<T: Serialize>(path: &Path, meta: &T) -> Result<PathBuf> {
    let target = meta_path(path);
    let text = serde_json::to_string_pretty(meta)?;
    let mut f = File::create(&target).map_err(|source| Error::Io {
        path: target.clone(),
        source,
    })?;
    writeln!(f, "{text}").map_err(|source| Error::Io {
        path: target.clone(),
        source,
    })?;
    Ok(target)
}
