//! wasm-bindgen entry points for the static page in `www/`. Every function
//! takes and returns JSON strings.

use lotsizing::demand::sample_paths;
use lotsizing::experiment::{example_4period, Instance, Partition};
use lotsizing::loss::std_loss;
use lotsizing::policy::solve_rs;
use lotsizing::simulate::{path_cost, StaticRule};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_REPS: usize = 200_000;

#[derive(Serialize)]
struct LossCurves {
    x: Vec<f64>,
    exact: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    breakpoints: Vec<f64>,
    error: f64,
}

pub fn loss_curves_json(segments: usize, partition: &str) -> Result<String, String> {
    let pw = partition
        .parse::<Partition>()
        .and_then(|p| p.build(segments))
        .map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..=400).map(|i| -4.0 + i as f64 * 0.02).collect();
    let out = LossCurves {
        exact: x.iter().map(|&v| std_loss(v).1).collect(),
        upper: x.iter().map(|&v| pw.comp_loss(v)).collect(),
        lower: x.iter().map(|&v| pw.lower_bound(v)).collect(),
        breakpoints: pw.breakpoints().to_vec(),
        error: pw.error(),
        x,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn parse_one(json: &str) -> Result<Instance, String> {
    let mut list = Instance::parse_many(json).map_err(|e| e.to_string())?;
    match list.len() {
        1 => Ok(list.remove(0)),
        n => Err(format!("expected one instance, found {n}")),
    }
}

#[derive(Serialize)]
struct Solved {
    id: String,
    reviews: Vec<usize>,
    levels: Vec<Option<f64>>,
    mean: Vec<f64>,
    sd: Vec<f64>,
    planned_cost: f64,
    breakdown: lotsizing::policy::CostBreakdown,
}

pub fn solve_json(instance: &str) -> Result<String, String> {
    let inst = parse_one(instance)?;
    let s = (|| {
        let mvn = inst.model()?.planning_mvn()?;
        let pol = solve_rs(&mvn, &inst.costs, &inst.solver.settings()?)?;
        Ok::<_, lotsizing::Error>(Solved {
            id: inst.id.clone(),
            reviews: pol.plan.order_periods().to_vec(),
            levels: pol.horizon_levels(mvn.horizon()),
            mean: mvn.mean().to_vec(),
            sd: (0..mvn.horizon()).map(|t| mvn.sd(t)).collect(),
            planned_cost: pol.planned_cost,
            breakdown: pol.breakdown,
        })
    })()
    .map_err(|e| e.to_string())?;
    serde_json::to_string(&s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Histogram {
    edges: Vec<f64>,
    counts: Vec<usize>,
    mean: f64,
    half_width_95: f64,
    planned_cost: f64,
    replications: usize,
}

pub fn simulate_json(instance: &str, reps: usize, seed: u64, bins: usize) -> Result<String, String> {
    let inst = parse_one(instance)?;
    let reps = reps.clamp(2, MAX_REPS);
    let bins = bins.clamp(1, 200);
    let (costs, planned) = (|| {
        let model = inst.model()?;
        let mvn = model.planning_mvn()?;
        let pol = solve_rs(&mvn, &inst.costs, &inst.solver.settings()?)?;
        let rule = StaticRule::new(&pol, mvn.horizon())?;
        let costs: Vec<f64> = sample_paths(&model, reps, seed)?
            .iter()
            .map(|d| path_cost(&rule, &mut (), d, &inst.costs, false).total())
            .collect();
        Ok::<_, lotsizing::Error>((costs, pol.planned_cost))
    })()
    .map_err(|e| e.to_string())?;

    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0; bins];
    for c in &costs {
        counts[(((c - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let h = Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        counts,
        mean,
        half_width_95: 1.96 * (var / n).sqrt(),
        planned_cost: planned,
        replications: reps,
    };
    serde_json::to_string(&h).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn example_instance() -> String {
    serde_json::to_string_pretty(&example_4period()).unwrap_or_default()
}

/// Exact and piecewise complementary loss on [-4, 4].
#[wasm_bindgen]
pub fn loss_curves(segments: usize, partition: &str) -> Result<String, JsValue> {
    loss_curves_json(segments, partition).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(instance: &str) -> Result<String, JsValue> {
    solve_json(instance).map_err(|e| JsValue::from_str(&e))
}

/// Histogram of simulated path costs under the solved (R,S) plan.
#[wasm_bindgen]
pub fn simulate(instance: &str, reps: usize, seed: u64, bins: usize) -> Result<String, JsValue> {
    simulate_json(instance, reps, seed, bins).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curves_bracket_the_exact_loss() {
        let v: Value = serde_json::from_str(&loss_curves_json(4, "minimax").unwrap()).unwrap();
        let e = v["error"].as_f64().unwrap();
        for i in 0..401 {
            let exact = v["exact"][i].as_f64().unwrap();
            let upper = v["upper"][i].as_f64().unwrap();
            assert!(upper >= exact - 1e-12 && upper <= exact + e + 1e-12);
        }
        assert!(loss_curves_json(4, "bogus").is_err());
    }

    #[test]
    fn solves_the_example() {
        let v: Value = serde_json::from_str(&solve_json(&example_instance()).unwrap()).unwrap();
        assert_eq!(v["reviews"], serde_json::json!([1, 3]));
        assert_eq!(v["levels"].as_array().unwrap().len(), 4);
        assert!(solve_json("{}").is_err());
    }

    #[test]
    fn histogram_counts_every_path() {
        let v: Value = serde_json::from_str(&simulate_json(&example_instance(), 5_000, 1, 30).unwrap()).unwrap();
        let total: u64 = v["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .sum();
        assert_eq!(total, 5_000);
        assert_eq!(v["edges"].as_array().unwrap().len(), 31);
        assert!((v["mean"].as_f64().unwrap() - 382.0).abs() < 10.0);
    }
}
