use super::instance::Instance;
use crate::error::{invalid, Result};
use crate::policy::solve_rs;
use crate::sdp::{solve_sdp, SdpConfig};
use crate::simulate::{simulate_rhc, simulate_rs, simulate_sdp, RhcOptions, SimOptions};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Solve the static (R,S) plan.
    Rs,
    /// Monte Carlo cost of the (R,S) plan.
    Simulate,
    Sdp,
    Rhc,
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rs" => Ok(Self::Rs),
            "simulate" | "sim" => Ok(Self::Simulate),
            "sdp" => Ok(Self::Sdp),
            "rhc" => Ok(Self::Rhc),
            other => Err(invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    pub record_times: bool,
    pub sdp: SdpConfig,
    /// Stopping rule for RHC; its seed is replaced per instance.
    pub rhc: RhcOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Rs, Method::Simulate],
            replications: 100_000,
            seed: 0,
            record_times: false,
            sdp: SdpConfig::default(),
            rhc: RhcOptions::default(),
        }
    }
}

/// One output row. Missing values serialize as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub pattern: String,
    pub rho: Option<f64>,
    pub cv: Option<f64>,
    #[serde(rename = "K")]
    pub fixed: f64,
    #[serde(rename = "c")]
    pub unit: f64,
    #[serde(rename = "b")]
    pub penalty: f64,
    pub planned_cost: Option<f64>,
    pub sim_cost: Option<f64>,
    pub sim_ci95: Option<f64>,
    pub sdp_cost: Option<f64>,
    pub rhc_cost: Option<f64>,
    pub milp_gap_pct: Option<f64>,
    pub accuracy_pct: Option<f64>,
    pub rhc_gap_pct: Option<f64>,
    pub t_solve_s: Option<f64>,
    pub t_sdp_s: Option<f64>,
    pub note: String,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-instance seed: stable under reordering of the instance list.
pub fn instance_seed(master: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(master))
}

fn gap(a: Option<f64>, reference: Option<f64>) -> Option<f64> {
    match (a, reference) {
        (Some(a), Some(r)) if r != 0.0 => Some((a - r) / r * 100.0),
        _ => None,
    }
}

struct Timer(Option<std::time::Instant>);

impl Timer {
    fn start(on: bool) -> Self {
        Timer(on.then(std::time::Instant::now))
    }

    fn secs(&self) -> Option<f64> {
        self.0.map(|t| t.elapsed().as_secs_f64())
    }
}

fn run_one(inst: &Instance, cfg: &RunConfig) -> ResultRow {
    let mut row = ResultRow {
        instance_id: inst.id.clone(),
        pattern: inst.demand.label().to_string(),
        rho: inst.demand.rho(),
        cv: inst.demand.cv(),
        fixed: inst.costs.fixed,
        unit: inst.costs.unit,
        penalty: inst.costs.penalty,
        planned_cost: None,
        sim_cost: None,
        sim_ci95: None,
        sdp_cost: None,
        rhc_cost: None,
        milp_gap_pct: None,
        accuracy_pct: None,
        rhc_gap_pct: None,
        t_solve_s: None,
        t_sdp_s: None,
        note: String::new(),
    };
    let mut notes: Vec<String> = Vec::new();
    let seed = inst.seed.unwrap_or_else(|| instance_seed(cfg.seed, &inst.id));
    let has = |m| cfg.methods.contains(&m);

    let prepared = inst
        .model()
        .and_then(|model| Ok((model.planning_mvn()?, inst.solver.settings()?, model)));
    let (mvn, settings, model) = match prepared {
        Ok(p) => p,
        Err(e) => {
            row.note = format!("model: {e}");
            return row;
        }
    };
    let sim_opts = SimOptions::new(cfg.replications, seed);

    if has(Method::Rs) || has(Method::Simulate) {
        let timer = Timer::start(cfg.record_times);
        match solve_rs(&mvn, &inst.costs, &settings) {
            Ok(policy) => {
                row.t_solve_s = timer.secs();
                row.planned_cost = Some(policy.planned_cost);
                if has(Method::Simulate) {
                    match simulate_rs(&policy, &model, &inst.costs, &sim_opts) {
                        Ok(sim) => {
                            row.sim_cost = Some(sim.mean_cost);
                            row.sim_ci95 = Some(sim.half_width_95);
                        }
                        Err(e) => notes.push(format!("simulate: {e}")),
                    }
                }
            }
            Err(e) => notes.push(format!("rs: {e}")),
        }
    }

    if has(Method::Sdp) {
        let timer = Timer::start(cfg.record_times);
        match solve_sdp(&mvn, &inst.costs, &cfg.sdp) {
            Ok(sol) => {
                row.t_sdp_s = timer.secs();
                match simulate_sdp(&sol, &model, &inst.costs, &sim_opts) {
                    Ok(sim) => row.sdp_cost = Some(sim.mean_cost),
                    Err(e) => notes.push(format!("sdp: {e}")),
                }
            }
            Err(e) => notes.push(format!("sdp: {e}")),
        }
    }

    if has(Method::Rhc) {
        let opts = RhcOptions { seed, ..cfg.rhc };
        match simulate_rhc(&model, &inst.costs, &settings, &opts) {
            Ok(sim) => {
                row.rhc_cost = Some(sim.mean_cost);
                if sim.capped {
                    notes.push(format!("rhc: stopped at {} replications", sim.replications));
                }
            }
            Err(e) => notes.push(format!("rhc: {e}")),
        }
    }

    row.milp_gap_pct = gap(row.sim_cost, row.sdp_cost);
    row.rhc_gap_pct = gap(row.rhc_cost, row.sdp_cost);
    row.accuracy_pct = match (row.planned_cost, row.sim_cost) {
        (Some(p), Some(s)) if s != 0.0 => Some((p - s).abs() / s * 100.0),
        _ => None,
    };
    row.note = notes.join("; ");
    row
}

/// Runs every instance; rows come back in input order.
pub fn run(instances: &[Instance], cfg: &RunConfig) -> Vec<ResultRow> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        instances.par_iter().map(|i| run_one(i, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        instances.iter().map(|i| run_one(i, cfg)).collect()
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Mean gaps for one level of one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotRow {
    pub factor: String,
    pub level: String,
    pub count: usize,
    pub milp_gap_pct: Option<f64>,
    pub accuracy_pct: Option<f64>,
    pub rhc_gap_pct: Option<f64>,
}

#[derive(Default)]
struct Acc {
    count: usize,
    sums: [(f64, usize); 3],
}

impl Acc {
    fn add(&mut self, row: &ResultRow) {
        self.count += 1;
        for (slot, v) in self
            .sums
            .iter_mut()
            .zip([row.milp_gap_pct, row.accuracy_pct, row.rhc_gap_pct])
        {
            if let Some(v) = v {
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> Option<f64> {
        let (s, n) = self.sums[i];
        (n > 0).then(|| s / n as f64)
    }
}

fn level_of(row: &ResultRow, factor: &str) -> Option<String> {
    let f = |x: f64| format!("{x}");
    match factor {
        "pattern" => Some(row.pattern.clone()),
        "rho" => row.rho.map(f),
        "cv" => row.cv.map(f),
        "K" => Some(f(row.fixed)),
        "c" => Some(f(row.unit)),
        "b" => Some(f(row.penalty)),
        _ => None,
    }
}

pub const PIVOT_FACTORS: [&str; 6] = ["pattern", "rho", "cv", "K", "c", "b"];

/// Mean gaps grouped by each factor in turn, plus an overall row.
pub fn pivot_summary(rows: &[ResultRow]) -> Vec<PivotRow> {
    let mut out = Vec::new();
    let mut emit = |factor: &str, level: String, acc: &Acc| {
        out.push(PivotRow {
            factor: factor.to_string(),
            level,
            count: acc.count,
            milp_gap_pct: acc.mean(0),
            accuracy_pct: acc.mean(1),
            rhc_gap_pct: acc.mean(2),
        })
    };
    let mut all = Acc::default();
    rows.iter().for_each(|r| all.add(r));
    emit("all", "all".into(), &all);
    for factor in PIVOT_FACTORS {
        // first-seen order of levels
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
        for r in rows {
            if let Some(level) = level_of(r, factor) {
                if !groups.contains_key(&level) {
                    order.push(level.clone());
                }
                groups.entry(level).or_default().add(r);
            }
        }
        for level in order {
            emit(factor, level.clone(), &groups[&level]);
        }
    }
    out
}

pub fn write_summary<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in pivot_summary(rows) {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
