//! Monte Carlo evaluation of inventory policies.
//!
//! Replications are grouped in fixed chunks; chunk `c` draws from stream `c`
//! of the master seed and chunk statistics are merged in chunk order, so
//! results do not depend on the number of worker threads.

use crate::demand::{rng_stream, Conditioner, ConvolutionTable, DemandModel, MvnHorizon, PathSampler};
use crate::error::{invalid, Error, Result};
use crate::policy::{shortest_path_with, ArcTable, CostBreakdown, CostParams, CycleEval, RsPolicy, SolverSettings};
use crate::sdp::SdpSolution;
use serde::{Deserialize, Serialize};

/// Replications per chunk (and per random stream).
pub const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub replications: usize,
    pub seed: u64,
    /// Charge `K` at a review period even when inventory already exceeds the
    /// order-up-to level.
    pub charge_fixed_on_zero_order: bool,
}

impl SimOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            charge_fixed_on_zero_order: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_cost: f64,
    pub half_width_95: f64,
    pub sd: f64,
    pub replications: usize,
    /// Mean cost components; they sum to `mean_cost`.
    pub components: CostBreakdown,
    pub seed: u64,
    /// Set when a precision-driven run stopped at its replication cap.
    pub capped: bool,
}

/// Decides the order-up-to level (if any) at each period of a path.
pub trait OrderRule: Sync {
    type State;

    fn new_state(&self) -> Self::State;

    /// Target inventory position after ordering in 0-based period `t`, given
    /// the demands observed so far, or `None` to skip ordering.
    fn decide(&self, state: &mut Self::State, t: usize, inventory: f64, history: &[f64]) -> Option<f64>;
}

/// Static (R,S) rule.
pub struct StaticRule {
    levels: Vec<Option<f64>>,
}

impl StaticRule {
    pub fn new(policy: &RsPolicy, horizon: usize) -> Result<Self> {
        if policy.plan.order_periods().iter().any(|&p| p > horizon) {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                found: policy.plan.order_periods().last().copied().unwrap_or(0),
            });
        }
        Ok(Self {
            levels: policy.horizon_levels(horizon),
        })
    }
}

impl OrderRule for StaticRule {
    type State = ();

    fn new_state(&self) {}

    fn decide(&self, _: &mut (), t: usize, _: f64, _: &[f64]) -> Option<f64> {
        self.levels[t]
    }
}

impl OrderRule for SdpSolution {
    type State = ();

    fn new_state(&self) {}

    fn decide(&self, _: &mut (), t: usize, inventory: f64, history: &[f64]) -> Option<f64> {
        SdpSolution::decide(self, t + 1, inventory, history).ok().flatten()
    }
}

/// Cost of one demand path under `rule`.
pub fn path_cost<R: OrderRule>(
    rule: &R,
    state: &mut R::State,
    demands: &[f64],
    params: &CostParams,
    charge_fixed_on_zero_order: bool,
) -> CostBreakdown {
    let mut inv = params.initial_inventory;
    let mut c = CostBreakdown::default();
    for t in 0..demands.len() {
        if let Some(s) = rule.decide(state, t, inv, &demands[..t]) {
            let q = (s - inv).max(0.0);
            if q > 0.0 || charge_fixed_on_zero_order {
                c.fixed += params.fixed;
            }
            c.unit += params.unit * q;
            inv += q;
        }
        inv -= demands[t];
        c.holding += params.holding * inv.max(0.0);
        c.penalty += params.penalty * (-inv).max(0.0);
    }
    c
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    parts: CostBreakdown,
}

impl Moments {
    fn push(&mut self, c: &CostBreakdown) {
        let x = c.total();
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        self.parts.fixed += c.fixed;
        self.parts.unit += c.unit;
        self.parts.holding += c.holding;
        self.parts.penalty += c.penalty;
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
        self.parts.fixed += o.parts.fixed;
        self.parts.unit += o.parts.unit;
        self.parts.holding += o.parts.holding;
        self.parts.penalty += o.parts.penalty;
    }

    fn half_width(&self) -> f64 {
        1.96 * self.sd() / (self.n as f64).sqrt()
    }

    fn sd(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }

    fn result(&self, seed: u64, capped: bool) -> SimResult {
        let n = self.n as f64;
        let parts = CostBreakdown {
            fixed: self.parts.fixed / n,
            unit: self.parts.unit / n,
            holding: self.parts.holding / n,
            penalty: self.parts.penalty / n,
        };
        SimResult {
            mean_cost: parts.total(),
            half_width_95: self.half_width(),
            sd: self.sd(),
            replications: self.n,
            components: parts,
            seed,
            capped,
        }
    }
}

fn run_chunk<R: OrderRule>(
    rule: &R,
    sampler: &PathSampler,
    params: &CostParams,
    opts: &SimOptions,
    chunk: usize,
    count: usize,
) -> Moments {
    let mut rng = rng_stream(opts.seed, chunk as u64);
    let mut state = rule.new_state();
    let mut path = vec![0.0; sampler.horizon()];
    let mut m = Moments::default();
    for _ in 0..count {
        sampler.sample_into(&mut rng, &mut path);
        m.push(&path_cost(
            rule,
            &mut state,
            &path,
            params,
            opts.charge_fixed_on_zero_order,
        ));
    }
    m
}

/// Statistics of chunks `first..last`, merged in chunk order.
fn run_chunks<R: OrderRule>(
    rule: &R,
    sampler: &PathSampler,
    params: &CostParams,
    opts: &SimOptions,
    first: usize,
    last: usize,
    total: usize,
) -> Moments {
    let size = |c: usize| CHUNK.min(total - c * CHUNK);
    let parts: Vec<Moments> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (first..last)
                .into_par_iter()
                .map(|c| run_chunk(rule, sampler, params, opts, c, size(c)))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (first..last)
                .map(|c| run_chunk(rule, sampler, params, opts, c, size(c)))
                .collect()
        }
    };
    let mut acc = Moments::default();
    for p in &parts {
        acc.merge(p);
    }
    acc
}

/// Evaluates `rule` on `opts.replications` sampled paths.
pub fn simulate_with<R: OrderRule>(
    rule: &R,
    model: &DemandModel,
    params: &CostParams,
    opts: &SimOptions,
) -> Result<SimResult> {
    params.validate()?;
    if opts.replications < 2 {
        return Err(invalid("replications", "at least two replications are required"));
    }
    let sampler = model.sampler()?;
    let n = opts.replications;
    let chunks = n.div_ceil(CHUNK);
    Ok(run_chunks(rule, &sampler, params, opts, 0, chunks, n).result(opts.seed, false))
}

pub fn simulate_rs(
    policy: &RsPolicy,
    model: &DemandModel,
    params: &CostParams,
    opts: &SimOptions,
) -> Result<SimResult> {
    simulate_with(&StaticRule::new(policy, model.horizon())?, model, params, opts)
}

pub fn simulate_sdp(
    sol: &SdpSolution,
    model: &DemandModel,
    params: &CostParams,
    opts: &SimOptions,
) -> Result<SimResult> {
    if sol.horizon() != model.horizon() {
        return Err(Error::DimensionMismatch {
            expected: sol.horizon(),
            found: model.horizon(),
        });
    }
    simulate_with(sol, model, params, opts)
}

/// Precision-driven stopping for receding-horizon control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhcOptions {
    pub seed: u64,
    /// Target `half_width_95 / mean`.
    pub rel_precision: f64,
    pub max_replications: usize,
    /// Replications between stopping checks (rounded up to whole chunks).
    pub check_every: usize,
    pub charge_fixed_on_zero_order: bool,
}

impl Default for RhcOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            rel_precision: 0.0003,
            max_replications: 1_000_000,
            check_every: 10_000,
            charge_fixed_on_zero_order: false,
        }
    }
}

struct RhcStep {
    conditioner: Option<Conditioner>,
    table: ConvolutionTable,
    arcs: ArcTable,
}

/// Re-solves the (R,S) model each period on the remaining horizon
/// conditioned on the demands seen so far, and applies the first decision.
pub struct RollingHorizon {
    params: CostParams,
    settings: SolverSettings,
    steps: Vec<RhcStep>,
}

/// Per-path scratch space for [`RollingHorizon`].
pub struct RhcScratch {
    cum_shift: Vec<f64>,
    order: Vec<f64>,
    no_order: Vec<f64>,
}

impl RollingHorizon {
    pub fn new(mvn: &MvnHorizon, params: &CostParams, settings: &SolverSettings) -> Result<Self> {
        params.validate()?;
        let n = mvn.horizon();
        let mut steps = Vec::with_capacity(n);
        for t in 0..n {
            let (conditioner, sub) = if t == 0 {
                (None, mvn.clone())
            } else {
                let c = Conditioner::new(mvn, t)?;
                let sub = MvnHorizon::from_parts(mvn.mean()[t..].to_vec(), c.cov().clone());
                (Some(c), sub)
            };
            let table = ConvolutionTable::new(&sub);
            let eval = CycleEval {
                table: &table,
                params,
                settings,
                cum_shift: None,
            };
            let arcs = ArcTable::build(&eval, 0.0)?;
            steps.push(RhcStep {
                conditioner,
                table,
                arcs,
            });
        }
        Ok(Self {
            params: *params,
            settings: settings.clone(),
            steps,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn scratch(&self) -> RhcScratch {
        let n = self.horizon();
        RhcScratch {
            cum_shift: vec![0.0; n + 1],
            order: vec![0.0; (n + 1) * (n + 1)],
            no_order: vec![0.0; n + 1],
        }
    }

    /// Order-up-to level chosen in 0-based period `t`, or `None`.
    pub fn decide_with(
        &self,
        scratch: &mut RhcScratch,
        t: usize,
        inventory: f64,
        history: &[f64],
    ) -> Result<Option<f64>> {
        let step = self
            .steps
            .get(t)
            .ok_or_else(|| invalid("t", "period outside the horizon"))?;
        let n = step.arcs.n;
        let shift = match &step.conditioner {
            Some(c) => c.mean_shift(history)?,
            None => vec![0.0; n],
        };
        let cs = &mut scratch.cum_shift[..=n];
        cs[0] = 0.0;
        for k in 0..n {
            cs[k + 1] = cs[k] + shift[k];
        }
        let eval = CycleEval {
            table: &step.table,
            params: &self.params,
            settings: &self.settings,
            cum_shift: Some(&scratch.cum_shift[..=n]),
        };
        let scale = 1e-12 * (1.0 + step.table.mean(0, n - 1).abs());
        // An arc keeps its base cost when the shift is constant across its
        // convolutions, i.e. zero after its first period.
        for k in 0..n {
            for j in (k + 1)..=n {
                let base = step.arcs.order(k, j);
                let shift_free = (k + 1..j).all(|i| shift[i].abs() <= scale);
                let cost = if shift_free {
                    base.cost
                } else {
                    eval.order_arc(k, j - 1)?.cost
                };
                scratch.order[k * (n + 1) + j] = cost;
            }
        }
        for j in 1..=n {
            scratch.no_order[j] = eval.no_order_arc(j - 1, inventory).cost;
        }
        let label = shortest_path_with(n, |k, j| scratch.order[k * (n + 1) + j], |j| scratch.no_order[j]);
        if label.mask & 1 == 0 {
            return Ok(None);
        }
        let end = if label.mask >> 1 == 0 {
            n
        } else {
            (label.mask >> 1).trailing_zeros() as usize + 1
        };
        let shift_free = (1..end).all(|i| shift[i].abs() <= scale);
        let level = if shift_free {
            step.arcs.order(0, end).level + shift[0]
        } else {
            eval.order_arc(0, end - 1)?.level
        };
        Ok(Some(level))
    }
}

impl OrderRule for RollingHorizon {
    type State = RhcScratch;

    fn new_state(&self) -> RhcScratch {
        self.scratch()
    }

    fn decide(&self, state: &mut RhcScratch, t: usize, inventory: f64, history: &[f64]) -> Option<f64> {
        self.decide_with(state, t, inventory, history)
            .expect("valid rolling-horizon state")
    }
}

/// Receding-horizon control, replicated until the relative 95% half-width
/// reaches `opts.rel_precision` or the replication cap is hit.
pub fn simulate_rhc(
    model: &DemandModel,
    params: &CostParams,
    settings: &SolverSettings,
    opts: &RhcOptions,
) -> Result<SimResult> {
    let mvn = match model {
        DemandModel::Mvn(m) => m,
        DemandModel::TimeSeries { .. } => {
            return Err(Error::Unsupported(
                "receding-horizon control requires a multivariate normal model".into(),
            ))
        }
    };
    if opts.max_replications < 2 || !(opts.rel_precision > 0.0) {
        return Err(invalid(
            "rhc",
            "need a positive precision and at least two replications",
        ));
    }
    let rule = RollingHorizon::new(mvn, params, settings)?;
    let sampler = model.sampler()?;
    let sim = SimOptions {
        replications: opts.max_replications,
        seed: opts.seed,
        charge_fixed_on_zero_order: opts.charge_fixed_on_zero_order,
    };
    let per_check = opts.check_every.div_ceil(CHUNK).max(1);
    let total_chunks = opts.max_replications.div_ceil(CHUNK);
    let mut acc = Moments::default();
    let mut next = 0;
    while next < total_chunks {
        let last = (next + per_check).min(total_chunks);
        acc.merge(&run_chunks(
            &rule,
            &sampler,
            params,
            &sim,
            next,
            last,
            opts.max_replications,
        ));
        next = last;
        if acc.n >= 2 && acc.half_width() <= opts.rel_precision * acc.mean.abs() {
            return Ok(acc.result(opts.seed, false));
        }
    }
    let done = acc.half_width() <= opts.rel_precision * acc.mean.abs();
    Ok(acc.result(opts.seed, !done))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{build_lag1_mvn, condition_on_prefix};
    use crate::loss::{LossMode, PiecewiseLoss};
    use crate::policy::{solve_rs, ReplenishmentPlan};

    fn four_period() -> MvnHorizon {
        build_lag1_mvn(&[20.0, 40.0, 60.0, 40.0], 0.25, 0.5).unwrap()
    }

    fn reference_policy() -> RsPolicy {
        RsPolicy {
            plan: ReplenishmentPlan::new(vec![1, 3], 4).unwrap(),
            order_up_to: vec![72.15, 120.01],
            planned_cost: 383.03,
            breakdown: CostBreakdown::default(),
        }
    }

    #[test]
    fn deterministic_path_ledger() {
        let params = CostParams::new(100.0, 2.0, 1.0, 10.0, 5.0).unwrap();
        let rule = StaticRule::new(&reference_policy(), 4).unwrap();
        let c = path_cost(&rule, &mut (), &[20.0, 40.0, 60.0, 40.0], &params, false);
        // Order 67.15 in period 1, stock 52.15 then 12.15; order 107.86 in
        // period 3, stock 60.01 then 20.01.
        assert!((c.fixed - 200.0).abs() < 1e-12);
        assert!((c.unit - 2.0 * (67.15 + 107.86)).abs() < 1e-9);
        assert!((c.holding - (52.15 + 12.15 + 60.01 + 20.01)).abs() < 1e-9);
        assert_eq!(c.penalty, 0.0);
    }

    #[test]
    fn zero_order_skips_fixed_cost_unless_asked() {
        let params = CostParams::new(100.0, 0.0, 1.0, 10.0, 200.0).unwrap();
        let rule = StaticRule::new(&reference_policy(), 4).unwrap();
        let d = [20.0, 40.0, 60.0, 40.0];
        assert_eq!(path_cost(&rule, &mut (), &d, &params, false).fixed, 0.0);
        assert_eq!(path_cost(&rule, &mut (), &d, &params, true).fixed, 200.0);
    }

    #[test]
    fn free_costs_give_zero() {
        let mvn = four_period();
        let params = CostParams {
            fixed: 0.0,
            unit: 0.0,
            holding: 0.0,
            penalty: 1e-300,
            initial_inventory: 0.0,
        };
        let r = simulate_rs(
            &reference_policy(),
            &DemandModel::Mvn(mvn),
            &params,
            &SimOptions::new(500, 1),
        )
        .unwrap();
        assert!(r.mean_cost.abs() < 1e-290);
    }

    #[test]
    fn seeds_reproduce_and_components_add_up() {
        let model = DemandModel::Mvn(four_period());
        let params = CostParams::new(100.0, 1.0, 1.0, 10.0, 0.0).unwrap();
        let a = simulate_rs(&reference_policy(), &model, &params, &SimOptions::new(5_500, 9)).unwrap();
        let b = simulate_rs(&reference_policy(), &model, &params, &SimOptions::new(5_500, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replications, 5_500);
        assert!((a.components.total() - a.mean_cost).abs() < 1e-9 * a.mean_cost);
        let r = 1.96 * a.sd / (a.replications as f64).sqrt();
        assert!((a.half_width_95 - r).abs() < 1e-12);
    }

    #[test]
    fn rhc_first_decision_matches_static_plan() {
        let mvn = four_period();
        let params = CostParams::new(100.0, 0.0, 1.0, 10.0, 0.0).unwrap();
        let settings = SolverSettings::new(PiecewiseLoss::minimax(11).unwrap(), LossMode::Piecewise);
        let rhc = RollingHorizon::new(&mvn, &params, &settings).unwrap();
        let pol = solve_rs(&mvn, &params, &settings).unwrap();
        let mut s = rhc.scratch();
        let got = rhc.decide_with(&mut s, 0, 0.0, &[]).unwrap();
        assert!((got.unwrap() - pol.order_up_to[0]).abs() < 1e-9);
    }

    #[test]
    fn rhc_matches_solver_on_conditioned_model() {
        let mvn = build_lag1_mvn(&[15.0, 16.0, 15.0, 14.0, 11.0, 7.0, 6.0, 3.0], 0.3, 0.5).unwrap();
        let params = CostParams::new(30.0, 1.0, 1.0, 10.0, 0.0).unwrap();
        for mode in [LossMode::Piecewise, LossMode::Exact] {
            let settings = SolverSettings::new(PiecewiseLoss::minimax(7).unwrap(), mode);
            let rhc = RollingHorizon::new(&mvn, &params, &settings).unwrap();
            let mut s = rhc.scratch();
            let history = [19.0, 11.0, 15.5, 22.0, 3.0, 9.0, 5.0];
            for t in 1..8 {
                for inv in [-5.0, 0.0, 12.0, 40.0] {
                    let cond = condition_on_prefix(&mvn, &history[..t]).unwrap().mvn;
                    let p = CostParams {
                        initial_inventory: inv,
                        ..params
                    };
                    let pol = solve_rs(&cond, &p, &settings).unwrap();
                    let expected = pol.level(1);
                    let got = rhc.decide_with(&mut s, t, inv, &history[..t]).unwrap();
                    match (expected, got) {
                        (None, None) => {}
                        (Some(a), Some(b)) => assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "t={t} {a} {b}"),
                        other => panic!("t={t} inv={inv}: {other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn rhc_rejects_time_series() {
        let spec = crate::demand::TimeSeriesSpec::ar(25.0, vec![0.75], 10.0);
        let model = DemandModel::TimeSeries { spec, horizon: 4 };
        let params = CostParams::new(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(simulate_rhc(&model, &params, &SolverSettings::exact(), &RhcOptions::default()).is_err());
    }

    #[test]
    fn rhc_stops_at_precision() {
        let model = DemandModel::Mvn(build_lag1_mvn(&[10.0; 4], 0.1, 0.25).unwrap());
        let params = CostParams::new(20.0, 0.0, 1.0, 10.0, 0.0).unwrap();
        let settings = SolverSettings::new(PiecewiseLoss::minimax(4).unwrap(), LossMode::Piecewise);
        let opts = RhcOptions {
            seed: 4,
            rel_precision: 0.01,
            ..RhcOptions::default()
        };
        let r = simulate_rhc(&model, &params, &settings, &opts).unwrap();
        assert!(!r.capped);
        assert!(r.half_width_95 / r.mean_cost <= 0.01);
        assert_eq!(r.replications % CHUNK, 0);
    }
}
