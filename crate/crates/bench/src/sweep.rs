//! θ-grid sweeps: cell enumeration, parallel execution, CSV rows and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use modelopt::mirror::{run_md, KernelSpec, MirrorConfig};
use modelopt::solver::{run, SolverConfig};
use modelopt::{par, ProblemInstance, ProblemKind, ReferenceSample, RunRecord, StepsizeParams};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_workers, ProblemSpec, SweepConfig};
use crate::error::BenchError;
use crate::method::Method;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Column order of the results file.
pub const CSV_HEADER: [&str; 12] = [
    "model",
    "method",
    "theta",
    "seed",
    "cond_kappa",
    "p_fail",
    "converged",
    "diverged",
    "iters_to_converge",
    "final_objective",
    "max_iterate_norm",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ProblemKind,
    pub method: Method,
    pub theta: f64,
    pub seed: u64,
    pub cond_kappa: f64,
    pub p_fail: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iters_to_converge: Option<u64>,
    pub final_objective: f64,
    pub max_iterate_norm: f64,
    pub wall_time_ms: f64,
}

/// One (problem, method, θ, seed) combination, identified by its position in
/// the canonical ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub problem: usize,
    pub model: ProblemKind,
    pub cond_kappa: f64,
    pub p_fail: f64,
    pub method: Method,
    pub theta: f64,
    pub seed: u64,
    /// Seed of the generated instance (data stream).
    pub instance_seed: u64,
    /// Seed of the sampling, reference and initialization streams.
    pub solver_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub row: SweepRow,
    pub step_bound_violations: u64,
    pub max_step_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEntry {
    #[serde(flatten)]
    pub spec: ProblemSpec,
    /// Iteration cap `K = epochs·m`.
    pub horizon: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub config: SweepConfig,
    pub theta_grid: Vec<f64>,
    pub problems: Vec<ProblemEntry>,
    pub cells: Vec<Cell>,
}

/// Problems × methods × θ × seeds, in that nesting order.
pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let thetas = cfg.thetas();
    let mut out = Vec::new();
    for (pi, p) in cfg.problems.iter().enumerate() {
        for &method in &cfg.methods {
            for &theta in &thetas {
                for &seed in &cfg.seeds {
                    out.push(Cell {
                        index: out.len(),
                        problem: pi,
                        model: p.model,
                        cond_kappa: p.cond_kappa,
                        p_fail: p.p_fail,
                        method,
                        theta,
                        seed,
                        instance_seed: seed,
                        solver_seed: seed,
                    });
                }
            }
        }
    }
    out
}

/// Runs one method at one θ with the experiment stepsizes (`α` for clipping).
pub fn run_method(problem: &ProblemInstance, method: Method, theta: f64, alpha: f64, epochs: u64, seed: u64) -> Result<RunRecord, BenchError> {
    run_method_with(problem, method, theta, alpha, epochs, seed, ReferenceSample::Independent)
}

pub fn run_method_with(
    problem: &ProblemInstance,
    method: Method,
    theta: f64,
    alpha: f64,
    epochs: u64,
    seed: u64,
    reference: ReferenceSample,
) -> Result<RunRecord, BenchError> {
    match method.solver_parts() {
        Some((model, policy)) => {
            let params = StepsizeParams::experiment(theta, alpha, 0);
            let mut cfg = SolverConfig::new(problem, model, policy, params, epochs, seed);
            cfg.reference_sample = reference;
            Ok(run(problem, &cfg)?)
        }
        None => {
            let kernel = KernelSpec::default_for(problem.kind)?;
            let cfg = MirrorConfig::new(problem, kernel, theta, epochs, seed);
            Ok(run_md(problem, &cfg)?)
        }
    }
}

fn instances(cfg: &SweepConfig) -> Result<Vec<Vec<ProblemInstance>>, BenchError> {
    let keys: Vec<(usize, u64)> =
        (0..cfg.problems.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let built = par::map(&keys, |&(pi, seed)| {
        let p = &cfg.problems[pi];
        ProblemInstance::generate(p.m, p.n, p.cond_kappa, p.p_fail, p.model, seed)
    });
    let mut it = built.into_iter();
    let mut out = Vec::with_capacity(cfg.problems.len());
    for _ in &cfg.problems {
        let mut row = Vec::with_capacity(cfg.seeds.len());
        for _ in &cfg.seeds {
            row.push(it.next().expect("one instance per key")?);
        }
        out.push(row);
    }
    Ok(out)
}

fn execute_cell(cfg: &SweepConfig, inst: &[Vec<ProblemInstance>], cell: &Cell) -> Result<CellOutcome, BenchError> {
    let si = cfg.seeds.iter().position(|&s| s == cell.seed).expect("seed from config");
    let problem = &inst[cell.problem][si];
    let t0 = Instant::now();
    let rec = run_method_with(problem, cell.method, cell.theta, cfg.alpha, cfg.epochs, cell.solver_seed, cfg.reference_sample)?;
    let wall = t0.elapsed().as_secs_f64() * 1e3;
    let row = SweepRow {
        model: cell.model,
        method: cell.method,
        theta: cell.theta,
        seed: cell.seed,
        cond_kappa: cell.cond_kappa,
        p_fail: cell.p_fail,
        converged: rec.converged,
        diverged: rec.diverged,
        iters_to_converge: rec.iters_to_converge,
        final_objective: rec.final_objective,
        max_iterate_norm: rec.max_iterate_norm,
        wall_time_ms: (wall * 1e3).round() / 1e3,
    };
    Ok(CellOutcome {
        cell: cell.clone(),
        row,
        step_bound_violations: rec.step_bound_violations,
        max_step_ratio: rec.max_step_ratio,
    })
}

/// Runs the given cells (in any order) and returns outcomes sorted canonically.
pub fn execute_cells(cfg: &SweepConfig, cells: &[Cell]) -> Result<Vec<CellOutcome>, BenchError> {
    cfg.validate()?;
    let workers = resolve_workers(cfg.workers);
    par::with_workers(workers, || {
        let inst = instances(cfg)?;
        let mut out = par::map(cells, |c| execute_cell(cfg, &inst, c)).into_iter().collect::<Result<Vec<_>, _>>()?;
        out.sort_by_key(|o| o.cell.index);
        Ok(out)
    })
}

pub fn execute(cfg: &SweepConfig) -> Result<Vec<CellOutcome>, BenchError> {
    execute_cells(cfg, &cells(cfg))
}

pub fn manifest(cfg: &SweepConfig) -> Manifest {
    Manifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        theta_grid: cfg.thetas(),
        problems: cfg
            .problems
            .iter()
            .map(|p| ProblemEntry { spec: p.clone(), horizon: cfg.epochs * p.m as u64 })
            .collect(),
        cells: cells(cfg),
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String, BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>, BenchError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Config(format!(
            "unexpected CSV header {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: SweepRow = rec?;
        if row.converged != row.iters_to_converge.is_some() {
            return Err(BenchError::Config(format!("iters_to_converge inconsistent with converged in {row:?}")));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<Vec<SweepRow>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    rows_from_csv(&text)
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    std::fs::write(path, contents).map_err(|e| BenchError::io(path, e))
}

/// Runs the sweep and writes `results.csv` and `manifest.json` into the output
/// directory. Returns the results path.
pub fn sweep(cfg: &SweepConfig) -> Result<PathBuf, BenchError> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let outcomes = execute(cfg)?;
    let rows: Vec<SweepRow> = outcomes.into_iter().map(|o| o.row).collect();
    let csv_path = dir.join(RESULTS_FILE);
    write_file(&csv_path, &rows_to_csv(&rows)?)?;
    let man = serde_json::to_string_pretty(&manifest(cfg)).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &(man + "\n"))?;
    Ok(csv_path)
}

/// The CSV text with the timing column blanked, for determinism comparisons.
pub fn strip_timing(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SweepConfig {
        serde_json::from_str(
            r#"{"problems":[{"model":"r1","m":20,"n":5,"cond_kappa":1,"p_fail":0.1}],
                "methods":["SGD","SPL-R"],"theta_grid":[0.5,1.0],"seeds":[3,4],"epochs":5}"#,
        )
        .unwrap()
    }

    #[test]
    fn cell_enumeration_order() {
        let c = cells(&tiny());
        assert_eq!(c.len(), 8);
        assert!(c.iter().enumerate().all(|(i, c)| c.index == i));
        assert_eq!((c[0].method, c[0].theta, c[0].seed), (Method::Sgd, 0.5, 3));
        assert_eq!((c[1].method, c[1].theta, c[1].seed), (Method::Sgd, 0.5, 4));
        assert_eq!((c[7].method, c[7].theta, c[7].seed), (Method::SplR, 1.0, 4));
    }

    #[test]
    fn csv_roundtrip_with_infinities() {
        let row = SweepRow {
            model: ProblemKind::R2,
            method: Method::Sgd,
            theta: 0.1,
            seed: 9,
            cond_kappa: 10.0,
            p_fail: 0.3,
            converged: false,
            diverged: true,
            iters_to_converge: None,
            final_objective: f64::INFINITY,
            max_iterate_norm: f64::INFINITY,
            wall_time_ms: 1.5,
        };
        let text = rows_to_csv(std::slice::from_ref(&row)).unwrap();
        assert!(text.starts_with(&(CSV_HEADER.join(",") + "\n")));
        assert_eq!(rows_from_csv(&text).unwrap(), vec![row]);
    }

    #[test]
    fn header_mismatch_rejected() {
        assert!(rows_from_csv("model,method\nr1,SGD\n").is_err());
    }

    #[test]
    fn strip_timing_drops_last_column() {
        assert_eq!(strip_timing("a,b,c\n1,2,3\n"), "a,b\n1,2");
    }
}
