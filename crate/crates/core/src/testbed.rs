//! The 270-case benchmark: ten ten-period demand patterns crossed with three
//! fixed costs, three prices and three starting cash capacities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mip::build_policy;
use crate::model::{DemandSpec, Money, ProblemInstance, Units};
use crate::policy::extract;
use crate::sdp::{solve_with, SolverConfig};
use crate::simulate::{gap, simulate};

pub const FIXED_COSTS: [Money; 3] = [10, 15, 20];
pub const PRICES: [Money; 3] = [5, 6, 7];
pub const CAPACITIES: [Units; 3] = [6, 8, 10];
pub const UNIT_COST: Money = 1;
pub const OVERHEAD: Money = 2;

/// Default wall-clock limit per exact solve.
pub const DEFAULT_SOLVE_BUDGET: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "STA")]
    Sta,
    #[serde(rename = "LC1")]
    Lc1,
    #[serde(rename = "LC2")]
    Lc2,
    #[serde(rename = "SIN1")]
    Sin1,
    #[serde(rename = "SIN2")]
    Sin2,
    #[serde(rename = "RAND")]
    Rand,
    #[serde(rename = "EMP1")]
    Emp1,
    #[serde(rename = "EMP2")]
    Emp2,
    #[serde(rename = "EMP3")]
    Emp3,
    #[serde(rename = "EMP4")]
    Emp4,
}

impl Pattern {
    pub const ALL: [Pattern; 10] = [
        Pattern::Sta,
        Pattern::Lc1,
        Pattern::Lc2,
        Pattern::Sin1,
        Pattern::Sin2,
        Pattern::Rand,
        Pattern::Emp1,
        Pattern::Emp2,
        Pattern::Emp3,
        Pattern::Emp4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Sta => "STA",
            Pattern::Lc1 => "LC1",
            Pattern::Lc2 => "LC2",
            Pattern::Sin1 => "SIN1",
            Pattern::Sin2 => "SIN2",
            Pattern::Rand => "RAND",
            Pattern::Emp1 => "EMP1",
            Pattern::Emp2 => "EMP2",
            Pattern::Emp3 => "EMP3",
            Pattern::Emp4 => "EMP4",
        }
    }

    /// Mean demand of each of the ten periods.
    pub fn means(self) -> [f64; 10] {
        match self {
            Pattern::Sta => [15.0; 10],
            Pattern::Lc1 => [
                21.15, 18.9, 17.7, 16.5, 15.15, 13.95, 12.75, 11.55, 10.35, 9.15,
            ],
            Pattern::Lc2 => [6.6, 9.3, 11.1, 12.9, 16.8, 21.6, 24.0, 26.4, 31.5, 33.9],
            Pattern::Sin1 => [12.1, 10.0, 7.9, 7.0, 7.9, 10.0, 12.1, 13.0, 12.1, 10.0],
            Pattern::Sin2 => [15.7, 10.0, 4.3, 2.0, 4.3, 10.0, 15.7, 18.0, 15.7, 10.0],
            Pattern::Rand => [41.8, 6.6, 2.0, 21.8, 44.8, 9.6, 2.6, 17.0, 30.0, 35.4],
            Pattern::Emp1 => [
                4.08, 12.16, 37.36, 21.44, 39.12, 35.68, 19.84, 22.48, 29.04, 12.4,
            ],
            Pattern::Emp2 => [4.7, 8.1, 23.6, 39.4, 16.4, 28.7, 50.8, 39.1, 75.4, 69.4],
            Pattern::Emp3 => [4.4, 11.6, 26.4, 14.4, 14.6, 19.8, 7.4, 18.3, 20.4, 11.4],
            Pattern::Emp4 => [4.9, 18.8, 6.4, 27.9, 45.3, 22.4, 22.3, 51.7, 29.1, 54.7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestbedCase {
    pub pattern: Pattern,
    pub fixed_order_cost: Money,
    pub price: Money,
    pub capacity: Units,
}

impl TestbedCase {
    pub fn id(&self) -> String {
        format!(
            "{}-K{}-p{}-cap{}",
            self.pattern.name(),
            self.fixed_order_cost,
            self.price,
            self.capacity
        )
    }

    /// Starting cash buys `capacity` units after the fixed cost.
    pub fn initial_cash(&self) -> Money {
        self.fixed_order_cost + UNIT_COST * self.capacity
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        ProblemInstance::new(
            self.fixed_order_cost,
            UNIT_COST,
            self.price,
            0,
            OVERHEAD,
            0,
            self.initial_cash(),
            DemandSpec::poisson(self.pattern.means().to_vec()),
        )
    }
}

pub fn build_cases() -> Vec<TestbedCase> {
    let mut cases = Vec::with_capacity(270);
    for pattern in Pattern::ALL {
        for fixed_order_cost in FIXED_COSTS {
            for price in PRICES {
                for capacity in CAPACITIES {
                    cases.push(TestbedCase {
                        pattern,
                        fixed_order_cost,
                        price,
                        capacity,
                    });
                }
            }
        }
    }
    cases
}

/// One case per pattern at the largest fixed cost, lowest price and
/// smallest capacity.
pub fn desk_subset() -> Vec<TestbedCase> {
    build_cases()
        .into_iter()
        .filter(|c| c.fixed_order_cost == 20 && c.price == 5 && c.capacity == 6)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sdp,
    Mip,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sdp => "sdp",
            Method::Mip => "mip",
        }
    }
}

/// One row of the per-case CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub pattern: Pattern,
    #[serde(rename = "K")]
    pub fixed_order_cost: Money,
    pub price: Money,
    pub capacity: Units,
    pub method: Method,
    pub reference: Option<f64>,
    pub mean: Option<f64>,
    pub std_error: Option<f64>,
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub case_id: String,
    pub solve_seconds: f64,
    pub extract_seconds: f64,
    pub heuristic_seconds: f64,
    pub simulate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub samples: u64,
    pub seed: u64,
    pub solve_budget: Duration,
}

impl BenchConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            solve_budget: DEFAULT_SOLVE_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<CaseRecord>,
    pub timings: Vec<TimingRecord>,
    pub report: GapReport,
}

struct CaseRun {
    reference: f64,
    sdp: (f64, f64, f64),
    mip: (f64, f64, f64),
    timing: TimingRecord,
}

fn run_case(case: &TestbedCase, config: &BenchConfig) -> Result<CaseRun> {
    let inst = case.instance()?;
    let t = Instant::now();
    let sol = solve_with(
        &inst,
        &SolverConfig::for_instance(&inst).time_budget(config.solve_budget),
    )?;
    let solve_seconds = t.elapsed().as_secs_f64();
    let reference = sol.optimal_value();

    let t = Instant::now();
    let sdp_policy = extract(&sol, &inst)?;
    let extract_seconds = t.elapsed().as_secs_f64();
    drop(sol);

    let t = Instant::now();
    let mip_policy = build_policy(&inst)?;
    let heuristic_seconds = t.elapsed().as_secs_f64();

    // both methods see the same demand paths
    let t = Instant::now();
    let a = simulate(&inst, &sdp_policy, config.samples, config.seed)?;
    let b = simulate(&inst, &mip_policy, config.samples, config.seed)?;
    let simulate_seconds = t.elapsed().as_secs_f64();
    Ok(CaseRun {
        reference,
        sdp: (a.mean, a.std_error, gap(reference, a.mean)?),
        mip: (b.mean, b.std_error, gap(reference, b.mean)?),
        timing: TimingRecord {
            case_id: case.id(),
            solve_seconds,
            extract_seconds,
            heuristic_seconds,
            simulate_seconds,
        },
    })
}

/// Runs every case; failures are recorded per case instead of aborting.
pub fn run(cases: &[TestbedCase], config: &BenchConfig) -> BenchOutcome {
    let runs: Vec<Result<CaseRun>> = cases.par_iter().map(|c| run_case(c, config)).collect();
    let mut records = Vec::with_capacity(2 * cases.len());
    let mut timings = Vec::with_capacity(cases.len());
    for (case, outcome) in cases.iter().zip(runs) {
        let row = |method, values: Option<(f64, f64, f64)>, reference, error: Option<String>| {
            CaseRecord {
                case_id: case.id(),
                pattern: case.pattern,
                fixed_order_cost: case.fixed_order_cost,
                price: case.price,
                capacity: case.capacity,
                method,
                reference,
                mean: values.map(|v| v.0),
                std_error: values.map(|v| v.1),
                gap: values.map(|v| v.2),
                error,
            }
        };
        match outcome {
            Ok(run) => {
                records.push(row(Method::Sdp, Some(run.sdp), Some(run.reference), None));
                records.push(row(Method::Mip, Some(run.mip), Some(run.reference), None));
                timings.push(run.timing);
            }
            Err(e) => {
                records.push(row(Method::Sdp, None, None, Some(e.to_string())));
                records.push(row(Method::Mip, None, None, Some(e.to_string())));
            }
        }
    }
    let report = GapReport::from_records(&records);
    BenchOutcome {
        records,
        timings,
        report,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub max: f64,
    pub avg: f64,
    pub over_one_percent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub dimension: String,
    pub label: String,
    /// Cases in the group, failed ones included.
    pub cases: usize,
    pub failed: usize,
    pub sdp: Option<MethodStats>,
    pub mip: Option<MethodStats>,
}

impl GroupStats {
    pub fn complete(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub groups: Vec<GroupStats>,
    pub warnings: Vec<String>,
}

fn stats(gaps: &[f64]) -> Option<MethodStats> {
    if gaps.is_empty() {
        return None;
    }
    Some(MethodStats {
        max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        avg: gaps.iter().sum::<f64>() / gaps.len() as f64,
        over_one_percent: gaps.iter().filter(|g| **g > 0.01).count(),
    })
}

impl GapReport {
    /// Groups by fixed cost, margin, capacity and pattern, plus an overall row.
    pub fn from_records(records: &[CaseRecord]) -> Self {
        type Key = (usize, String, String);
        type Grouping = fn(&CaseRecord) -> (i64, String);
        let dims: [(&str, Grouping); 5] = [
            ("general", |_| (0, "General".into())),
            ("K", |r| {
                (r.fixed_order_cost, format!("K={}", r.fixed_order_cost))
            }),
            ("margin", |r| {
                let m = r.price - UNIT_COST;
                (m, format!("p-c={m}"))
            }),
            ("capacity", |r| {
                (r.capacity, format!("capacity={}", r.capacity))
            }),
            ("pattern", |r| (r.pattern as i64, r.pattern.name().into())),
        ];
        let mut buckets: BTreeMap<(usize, i64), (Key, Vec<&CaseRecord>)> = BTreeMap::new();
        for r in records {
            for (d, (name, key)) in dims.iter().enumerate() {
                let (order, label) = key(r);
                buckets
                    .entry((d, order))
                    .or_insert_with(|| ((d, name.to_string(), label), Vec::new()))
                    .1
                    .push(r);
            }
        }
        let groups: Vec<GroupStats> = buckets
            .into_values()
            .map(|((_, dimension, label), rows)| {
                let gaps = |m: Method| -> Vec<f64> {
                    rows.iter()
                        .filter(|r| r.method == m)
                        .filter_map(|r| r.gap)
                        .collect()
                };
                let sdp_rows: Vec<_> = rows.iter().filter(|r| r.method == Method::Sdp).collect();
                GroupStats {
                    dimension,
                    label,
                    cases: sdp_rows.len(),
                    failed: sdp_rows.iter().filter(|r| r.error.is_some()).count(),
                    sdp: stats(&gaps(Method::Sdp)),
                    mip: stats(&gaps(Method::Mip)),
                }
            })
            .collect();

        let mut warnings = Vec::new();
        let by_k: Vec<(&str, f64)> = groups
            .iter()
            .filter(|g| g.dimension == "K")
            .filter_map(|g| g.mip.map(|m| (g.label.as_str(), m.avg)))
            .collect();
        for pair in by_k.windows(2) {
            if pair[1].1 < pair[0].1 {
                warnings.push(format!(
                    "heuristic average gap drops from {} ({:.2}%) to {} ({:.2}%)",
                    pair[0].0,
                    100.0 * pair[0].1,
                    pair[1].0,
                    100.0 * pair[1].1
                ));
            }
        }
        for g in groups.iter().filter(|g| !g.complete()) {
            warnings.push(format!(
                "{} is incomplete: {} of {} cases failed",
                g.label, g.failed, g.cases
            ));
        }
        GapReport { groups, warnings }
    }

    pub fn general(&self) -> &GroupStats {
        self.groups
            .iter()
            .find(|g| g.dimension == "general")
            .expect("general row")
    }

    pub fn to_markdown(&self) -> String {
        let pct =
            |v: Option<MethodStats>, f: fn(MethodStats) -> String| v.map(f).unwrap_or("-".into());
        let mut out = String::new();
        out.push_str(
            "| Group | Cases | SDP MAX | SDP AVG | SDP >1% | MIP MAX | MIP AVG | MIP >1% |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for g in &self.groups {
            let mark = if g.complete() { "" } else { " (incomplete)" };
            let _ = writeln!(
                out,
                "| {}{} | {} | {} | {} | {} | {} | {} | {} |",
                g.label,
                mark,
                g.cases,
                pct(g.sdp, |s| format!("{:.2}%", 100.0 * s.max)),
                pct(g.sdp, |s| format!("{:.2}%", 100.0 * s.avg)),
                pct(g.sdp, |s| s.over_one_percent.to_string()),
                pct(g.mip, |s| format!("{:.2}%", 100.0 * s.max)),
                pct(g.mip, |s| format!("{:.2}%", 100.0 * s.avg)),
                pct(g.mip, |s| s.over_one_percent.to_string()),
            );
        }
        if !self.warnings.is_empty() {
            out.push_str("\nWarnings:\n\n");
            for w in &self.warnings {
                let _ = writeln!(out, "- {w}");
            }
        }
        out
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `cases.csv` and `summary.md`, which depend only on the inputs and
/// seed, and `timings.csv`, which does not.
pub fn write_outputs(dir: impl AsRef<Path>, outcome: &BenchOutcome) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records(dir.join("cases.csv"), &outcome.records)?;
    std::fs::write(dir.join("summary.md"), outcome.report.to_markdown())?;
    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    for t in &outcome.timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}
