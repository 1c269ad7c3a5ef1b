//! Resumable grid runs.
//!
//! Every cell is keyed by the SHA-256 of its canonical parameters. Finished
//! cells are appended to `cells.jsonl`; a rerun skips keys already recorded
//! as `ok`. The summary CSV is rebuilt from the JSONL on every run.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use arw_core::estimators::{
    bounds_report, chance_distribution, estimate_occupation, five_step_report, verify_identity, BoundsReport, Cell,
    EstimateReport, EstimateRow, TrialPlan,
};
use arw_core::walks::{expected_returns, ReturnsEstimate};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{auto_escape_radius, parse_law, params as run_params, SweepArgs, SweepKind};
use crate::output::{append_jsonl, read_jsonl, run_config, write_csv};
use crate::{CliError, VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: SweepKind,
    pub d: usize,
    pub lambda: f64,
    pub n: Option<usize>,
    pub law: Option<String>,
    pub trials: u64,
    pub seed: u64,
    pub k_max: Option<u64>,
    pub escape_radius: Option<u64>,
    pub max_steps: Option<u64>,
    pub version: String,
}

impl CellSpec {
    pub fn key(&self) -> String {
        let canonical = serde_json::to_string(self).expect("cell spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub law: String,
    pub direct: f64,
    pub direct_se: f64,
    pub series: f64,
    pub series_se: f64,
    pub generating: f64,
    pub generating_se: f64,
    pub max_abs_z: f64,
    pub passed: bool,
    pub trials: u64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveStepRow {
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub law: String,
    pub jump1: f64,
    pub jump2: f64,
    pub jump2_expected: f64,
    pub tau1_x_sleeping: f64,
    pub ch_ge_2: f64,
    pub ch_ge_2_lower: f64,
    pub independence_z: f64,
    pub invariant_violations: u64,
    pub passed: bool,
    pub trials: u64,
    pub master_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    key: String,
    status: String,
    cell: CellSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(default)]
    result: Value,
    #[serde(default)]
    rows: Vec<Value>,
}

#[derive(Debug, Serialize)]
struct RunRecord {
    version: &'static str,
    config: Value,
    wall_time_s: f64,
    computed: usize,
    skipped: usize,
    failed: usize,
    cells: Vec<Value>,
}

/// Expands the grid in row-major order: d, lambda, n, law. Bounds cells
/// ignore n and the law.
pub fn grid(a: &SweepArgs) -> Vec<CellSpec> {
    let kind = a.kind.unwrap();
    let mut cells = Vec::new();
    for &d in a.d.as_ref().unwrap() {
        for &lambda in a.lambda.as_ref().unwrap() {
            let base = CellSpec {
                kind,
                d,
                lambda,
                n: None,
                law: None,
                trials: a.trials.unwrap(),
                seed: a.seed.unwrap().0,
                k_max: None,
                escape_radius: None,
                max_steps: None,
                version: VERSION.into(),
            };
            if kind == SweepKind::Bounds {
                cells.push(CellSpec {
                    escape_radius: Some(a.escape_radius.unwrap_or_else(|| auto_escape_radius(d))),
                    max_steps: a.max_steps,
                    ..base
                });
                continue;
            }
            for &n in a.n.as_ref().unwrap() {
                for law in a.law.as_ref().unwrap() {
                    cells.push(CellSpec {
                        n: Some(n),
                        law: Some(law.clone()),
                        k_max: (kind == SweepKind::Chances).then_some(a.k_max.unwrap()),
                        ..base.clone()
                    });
                }
            }
        }
    }
    cells
}

struct Computed {
    result: Value,
    rows: Vec<Value>,
}

fn to_values<T: Serialize>(rows: &[T]) -> Vec<Value> {
    rows.iter().map(|r| serde_json::to_value(r).expect("rows serialize")).collect()
}

fn compute(spec: &CellSpec, walks: &mut HashMap<usize, ReturnsEstimate>) -> Result<Computed, CliError> {
    let params = run_params(spec.d, spec.lambda)?;
    let plan = TrialPlan::new(spec.trials, spec.seed);
    if spec.kind == SweepKind::Bounds {
        let returns = if spec.d >= 3 {
            let est = match walks.get(&spec.d) {
                Some(e) => e.clone(),
                None => {
                    let e = expected_returns(
                        spec.d,
                        spec.trials,
                        spec.escape_radius.unwrap(),
                        spec.max_steps.unwrap(),
                        spec.seed,
                        false,
                    )?;
                    walks.insert(spec.d, e.clone());
                    e
                }
            };
            Some(est)
        } else {
            None
        };
        let report: BoundsReport = bounds_report(params, returns.as_ref());
        return Ok(Computed {
            result: json!({ "bounds": report, "returns": returns }),
            rows: to_values(&[report]),
        });
    }
    let law = parse_law(spec.law.as_deref().unwrap(), spec.d)?;
    let cell = Cell::new(spec.n.unwrap(), params, law)?;
    Ok(match spec.kind {
        SweepKind::Occupation => {
            let r = estimate_occupation(&cell, &plan)?;
            Computed {
                rows: to_values(&[r.row("occupation")]),
                result: serde_json::to_value(&r).unwrap(),
            }
        }
        SweepKind::Chances => {
            let r = chance_distribution(&cell, &plan, spec.k_max.unwrap())?;
            let mut rows = vec![r.mean_ch.row("mean_ch"), r.mean_ach.row("mean_ach")];
            for t in &r.tails {
                let e = EstimateReport::new(t.value, t.std_error, &plan, cell.meta());
                rows.push(e.row(&format!("p_ch_ge_{}", t.k)));
            }
            Computed {
                rows: to_values(&rows),
                result: serde_json::to_value(&r).unwrap(),
            }
        }
        SweepKind::Identity => {
            let r = verify_identity(&cell, &plan)?;
            let row = IdentityRow {
                d: r.meta.d,
                n: r.meta.n,
                lambda: r.meta.lambda,
                law: r.meta.law.clone(),
                direct: r.direct.value,
                direct_se: r.direct.std_error,
                series: r.series.value,
                series_se: r.series.std_error,
                generating: r.generating.value,
                generating_se: r.generating.std_error,
                max_abs_z: r.max_abs_z(),
                passed: r.passed,
                trials: r.trials,
                master_seed: r.master_seed,
            };
            Computed {
                rows: to_values(&[row]),
                result: serde_json::to_value(&r).unwrap(),
            }
        }
        SweepKind::FiveStep => {
            let r = five_step_report(&cell, &plan)?;
            let row = FiveStepRow {
                d: r.meta.d,
                n: r.meta.n,
                lambda: r.meta.lambda,
                law: r.meta.law.clone(),
                jump1: r.jump1.value,
                jump2: r.jump2.value,
                jump2_expected: r.jump2_expected,
                tau1_x_sleeping: r.tau1_x_sleeping.value,
                ch_ge_2: r.ch_ge_2.value,
                ch_ge_2_lower: r.ch_ge_2_lower,
                independence_z: r.independence_z,
                invariant_violations: r.invariant_violations,
                passed: r.passed(),
                trials: r.trials,
                master_seed: r.master_seed,
            };
            Computed {
                rows: to_values(&[row]),
                result: serde_json::to_value(&r).unwrap(),
            }
        }
        SweepKind::Bounds => unreachable!("handled above"),
    })
}

fn typed<T: DeserializeOwned>(rows: Vec<Value>) -> Result<Vec<T>, CliError> {
    rows.into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| CliError::Infra(format!("malformed row in cells.jsonl: {e}"))))
        .collect()
}

/// Rebuilds `summary_<kind>.csv` from the ok records of that kind, one entry
/// per key, in first-seen order.
fn write_summary(dir: &Path, kind: SweepKind, records: &[CellRecord]) -> Result<std::path::PathBuf, CliError> {
    let mut latest: HashMap<&str, &CellRecord> = HashMap::new();
    let mut order = Vec::new();
    for r in records.iter().filter(|r| r.status == "ok" && r.cell.kind == kind) {
        if latest.insert(&r.key, r).is_none() {
            order.push(r.key.as_str());
        }
    }
    let rows: Vec<Value> = order.iter().flat_map(|k| latest[k].rows.clone()).collect();
    let path = dir.join(format!("summary_{}.csv", kind.name().replace('-', "_")));
    match kind {
        SweepKind::Occupation | SweepKind::Chances => write_csv(&path, &typed::<EstimateRow>(rows)?)?,
        SweepKind::Identity => write_csv(&path, &typed::<IdentityRow>(rows)?)?,
        SweepKind::FiveStep => write_csv(&path, &typed::<FiveStepRow>(rows)?)?,
        SweepKind::Bounds => write_csv(&path, &typed::<BoundsReport>(rows)?)?,
    }
    Ok(path)
}

fn load_records(path: &Path) -> Result<Vec<CellRecord>, CliError> {
    Ok(read_jsonl(path)?
        .into_iter()
        .filter_map(|v| serde_json::from_value(v).ok())
        .collect())
}

pub fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let dir = a.dir.clone().unwrap();
    let kind = a.kind.unwrap();
    let cells_path = dir.join("cells.jsonl");
    let done: HashSet<String> = load_records(&cells_path)?
        .into_iter()
        .filter(|r| r.status == "ok")
        .map(|r| r.key)
        .collect();

    let cells = grid(&a);
    let mut walks = HashMap::new();
    let (mut computed, mut skipped, mut failed) = (0, 0, 0);
    let mut summary = Vec::with_capacity(cells.len());
    for spec in &cells {
        let key = spec.key();
        if done.contains(&key) {
            skipped += 1;
            summary.push(json!({ "key": key, "status": "skipped" }));
            continue;
        }
        let t0 = Instant::now();
        let record = match compute(spec, &mut walks) {
            Ok(c) => {
                computed += 1;
                CellRecord {
                    key: key.clone(),
                    status: "ok".into(),
                    cell: spec.clone(),
                    error: None,
                    result: c.result,
                    rows: c.rows,
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("cell {} failed: {e}", &key[..12]);
                CellRecord {
                    key: key.clone(),
                    status: "failed".into(),
                    cell: spec.clone(),
                    error: Some(e.to_string()),
                    result: Value::Null,
                    rows: Vec::new(),
                }
            }
        };
        println!(
            "{} d={} lambda={}{}: {} in {:.2}s",
            kind.name(),
            spec.d,
            spec.lambda,
            match (&spec.n, &spec.law) {
                (Some(n), Some(l)) => format!(" n={n} law={l}"),
                _ => String::new(),
            },
            record.status,
            t0.elapsed().as_secs_f64()
        );
        summary.push(json!({ "key": key, "status": record.status }));
        append_jsonl(&cells_path, &record)?;
    }

    let csv = write_summary(&dir, kind, &load_records(&cells_path)?)?;
    append_jsonl(
        &dir.join("runs.jsonl"),
        &RunRecord {
            version: VERSION,
            config: run_config("sweep", &a),
            wall_time_s: started.elapsed().as_secs_f64(),
            computed,
            skipped,
            failed,
            cells: summary,
        },
    )?;
    println!(
        "{} cells: {computed} computed, {skipped} skipped, {failed} failed -> {}",
        cells.len(),
        csv.display()
    );
    if failed > 0 {
        return Err(CliError::Infra(format!("{failed} cell(s) failed; rerun to retry them")));
    }
    Ok(())
}
