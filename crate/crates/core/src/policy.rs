//! Static-dynamic (R,S) planning: review periods and order-up-to levels
//! fixed at the start of the horizon.
//!
//! Given a plan, expected cost separates over replenishment cycles, so the
//! optimal plan is a shortest path over nodes `0..=T` in which an arc
//! `(k, j)` places an order in period `k + 1` that covers periods
//! `k + 1..=j`. Arcs leaving node 0 may also cover a prefix without ordering,
//! served from initial stock.

use crate::demand::{ConvolutionTable, MvnHorizon};
use crate::error::{invalid, Error, Result};
use crate::loss::{self, LossMode, PiecewiseLoss};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Largest horizon accepted by [`solve_rs`].
pub const MAX_HORIZON: usize = 64;
/// Largest horizon accepted by [`enumerate_oracle`].
pub const MAX_ORACLE_HORIZON: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Fixed cost per order.
    #[serde(rename = "K")]
    pub fixed: f64,
    /// Cost per unit ordered.
    #[serde(rename = "c")]
    pub unit: f64,
    /// Holding cost per unit and period.
    #[serde(rename = "h")]
    pub holding: f64,
    /// Backorder penalty per unit and period.
    #[serde(rename = "b")]
    pub penalty: f64,
    #[serde(rename = "I0", default)]
    pub initial_inventory: f64,
}

impl CostParams {
    pub fn new(fixed: f64, unit: f64, holding: f64, penalty: f64, initial_inventory: f64) -> Result<Self> {
        let p = Self {
            fixed,
            unit,
            holding,
            penalty,
            initial_inventory,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.fixed), ("c", self.unit), ("h", self.holding)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and non-negative")));
            }
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(invalid("b", format!("{} must be finite and positive", self.penalty)));
        }
        if !self.initial_inventory.is_finite() {
            return Err(invalid("I0", "must be finite"));
        }
        Ok(())
    }
}

/// Treatment of the proportional ordering cost in the planning objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitCostVariant {
    /// `c Σ Q_t = c (E[I_T] + Σ d̃_t - I_0)`.
    #[default]
    Expected,
    /// `c (E[max(I_T, 0)] + Σ d̃_t - I_0)`.
    Complementary,
}

impl std::str::FromStr for UnitCostVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(Self::Expected),
            "complementary" => Ok(Self::Complementary),
            other => Err(invalid("unit-cost-variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Loss evaluation used by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub loss: PiecewiseLoss,
    pub mode: LossMode,
    pub unit_cost: UnitCostVariant,
}

impl SolverSettings {
    pub fn new(loss: PiecewiseLoss, mode: LossMode) -> Self {
        Self {
            loss,
            mode,
            unit_cost: UnitCostVariant::Expected,
        }
    }

    /// Exact loss functions (the partition is kept for reference only).
    pub fn exact() -> Self {
        Self::new(PiecewiseLoss::minimax(11).expect("11 segments"), LossMode::Exact)
    }

    pub fn with_unit_cost(mut self, variant: UnitCostVariant) -> Self {
        self.unit_cost = variant;
        self
    }
}

/// Order periods of a plan, 1-based and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplenishmentPlan {
    order_periods: Vec<usize>,
}

impl ReplenishmentPlan {
    pub fn new(mut order_periods: Vec<usize>, horizon: usize) -> Result<Self> {
        order_periods.sort_unstable();
        order_periods.dedup();
        if order_periods.iter().any(|&p| p == 0 || p > horizon) {
            return Err(invalid("order_periods", format!("periods must lie in 1..={horizon}")));
        }
        Ok(Self { order_periods })
    }

    fn from_mask(mask: u64, horizon: usize) -> Self {
        Self {
            order_periods: (0..horizon).filter(|k| mask >> k & 1 == 1).map(|k| k + 1).collect(),
        }
    }

    pub fn order_periods(&self) -> &[usize] {
        &self.order_periods
    }

    pub fn len(&self) -> usize {
        self.order_periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order_periods.is_empty()
    }

    /// Most recent order period at or before `t`, if any.
    pub fn covering_order(&self, t: usize) -> Option<usize> {
        let i = self.order_periods.partition_point(|&p| p <= t);
        i.checked_sub(1).map(|i| self.order_periods[i])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fixed: f64,
    pub unit: f64,
    pub holding: f64,
    pub penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.fixed + self.unit + self.holding + self.penalty
    }

    fn add(&mut self, o: &CostBreakdown) {
        self.fixed += o.fixed;
        self.unit += o.unit;
        self.holding += o.holding;
        self.penalty += o.penalty;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsPolicy {
    pub plan: ReplenishmentPlan,
    /// Level for each entry of `plan.order_periods()`.
    pub order_up_to: Vec<f64>,
    pub planned_cost: f64,
    pub breakdown: CostBreakdown,
}

impl RsPolicy {
    pub fn horizon_levels(&self, horizon: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; horizon];
        for (&p, &s) in self.plan.order_periods().iter().zip(&self.order_up_to) {
            out[p - 1] = Some(s);
        }
        out
    }

    /// Order-up-to level for 1-based period `t`, if it is a review period.
    pub fn level(&self, t: usize) -> Option<f64> {
        self.plan
            .order_periods()
            .iter()
            .position(|&p| p == t)
            .map(|i| self.order_up_to[i])
    }
}

/// One arc of the plan graph.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Arc {
    pub cost: f64,
    pub level: f64,
    pub parts: CostBreakdown,
}

/// Cycle objective evaluation over one conditional or unconditional horizon.
pub(crate) struct CycleEval<'a> {
    pub table: &'a ConvolutionTable,
    pub params: &'a CostParams,
    pub settings: &'a SolverSettings,
    /// `cum_shift[k]` is added to every convolution starting at period 0 and
    /// ending at `k - 1`; it lets conditional means differ from the table's.
    pub cum_shift: Option<&'a [f64]>,
}

impl CycleEval<'_> {
    #[inline]
    fn moments(&self, a: usize, t: usize) -> (f64, f64) {
        let mut m = self.table.mean(a, t);
        if let Some(cs) = self.cum_shift {
            m += cs[t + 1] - cs[a];
        }
        (m, self.table.sd(a, t))
    }

    fn horizon(&self) -> usize {
        self.table.horizon()
    }

    /// Holding, penalty and terminal unit-cost parts of serving periods
    /// `a..=b` (0-based) from stock level `x`.
    pub fn parts(&self, a: usize, b: usize, x: f64, terminal: bool) -> CostBreakdown {
        let (pw, mode) = (&self.settings.loss, self.settings.mode);
        let (mut hold, mut short) = (0.0, 0.0);
        for t in a..=b {
            let (m, s) = self.moments(a, t);
            let (l, lhat) = loss::loss_unchecked(x, m, s, pw, mode);
            hold += lhat;
            short += l;
        }
        let mut unit = 0.0;
        if terminal && self.params.unit > 0.0 {
            let (m, s) = self.moments(a, self.horizon() - 1);
            unit = match self.settings.unit_cost {
                UnitCostVariant::Expected => self.params.unit * (x - m),
                UnitCostVariant::Complementary => self.params.unit * loss::loss_unchecked(x, m, s, pw, mode).1,
            };
        }
        CostBreakdown {
            fixed: 0.0,
            unit,
            holding: self.params.holding * hold,
            penalty: self.params.penalty * short,
        }
    }

    /// Right derivative of the cycle objective in the order-up-to level.
    fn slope(&self, a: usize, b: usize, x: f64, terminal: bool) -> f64 {
        let (pw, mode) = (&self.settings.loss, self.settings.mode);
        let p = self.params;
        let mut d = -p.penalty * (b - a + 1) as f64;
        for t in a..=b {
            let (m, s) = self.moments(a, t);
            d += (p.holding + p.penalty) * loss::comp_loss_slope(x, m, s, pw, mode);
        }
        if terminal {
            d += match self.settings.unit_cost {
                UnitCostVariant::Expected => p.unit,
                UnitCostVariant::Complementary => {
                    let (m, s) = self.moments(a, self.horizon() - 1);
                    p.unit * loss::comp_loss_slope(x, m, s, pw, mode)
                }
            };
        }
        d
    }

    /// Smallest minimiser of the cycle objective over periods `a..=b`.
    pub fn optimal_level(&self, a: usize, b: usize, terminal: bool) -> Result<f64> {
        let p = self.params;
        let n = (b - a + 1) as f64;
        let at_minus_inf = -p.penalty * n
            + if terminal && self.settings.unit_cost == UnitCostVariant::Expected {
                p.unit
            } else {
                0.0
            };
        if at_minus_inf >= 0.0 {
            return Err(Error::UnboundedCycle);
        }
        match self.settings.mode {
            LossMode::Piecewise => Ok(self.piecewise_level(a, b, terminal, at_minus_inf)),
            LossMode::Exact => Ok(self.exact_level(a, b, terminal)),
        }
    }

    fn piecewise_level(&self, a: usize, b: usize, terminal: bool, start: f64) -> f64 {
        let p = self.params;
        let pw = &self.settings.loss;
        let comp_terminal = terminal && self.settings.unit_cost == UnitCostVariant::Complementary;
        let mut kinks: Vec<(f64, f64)> = Vec::with_capacity((b - a + 1) * pw.segments());
        for t in a..=b {
            let (m, s) = self.moments(a, t);
            let mut w = p.holding + p.penalty;
            if comp_terminal && t == self.horizon() - 1 {
                w += p.unit;
            }
            if s == 0.0 {
                kinks.push((m, w));
            } else {
                for (&e, &mass) in pw.cond_means().iter().zip(pw.masses()) {
                    kinks.push((m + s * e, w * mass));
                }
            }
        }
        kinks.sort_by(|x, y| x.0.total_cmp(&y.0));
        let tol = 1e-12 * (p.holding + p.penalty + p.unit) * (b - a + 1) as f64;
        let mut d = start;
        for &(x, inc) in &kinks {
            d += inc;
            if d >= -tol {
                return x;
            }
        }
        kinks.last().map_or(0.0, |k| k.0)
    }

    fn exact_level(&self, a: usize, b: usize, terminal: bool) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in a..=b {
            let (m, s) = self.moments(a, t);
            lo = lo.min(m - 40.0 * s);
            hi = hi.max(m + 40.0 * s);
        }
        lo -= 1.0;
        hi += 1.0;
        while hi - lo > 1e-8 * (1.0 + hi.abs().max(lo.abs())) {
            let mid = 0.5 * (lo + hi);
            if self.slope(a, b, mid, terminal) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn order_arc(&self, a: usize, b: usize) -> Result<Arc> {
        let terminal = b + 1 == self.horizon();
        let level = self.optimal_level(a, b, terminal)?;
        let mut parts = self.parts(a, b, level, terminal);
        parts.fixed = self.params.fixed;
        Ok(Arc {
            cost: parts.fixed + parts.holding + parts.penalty + parts.unit,
            level,
            parts,
        })
    }

    /// Serving periods `0..=b` from initial stock `x`.
    pub fn no_order_arc(&self, b: usize, x: f64) -> Arc {
        let terminal = b + 1 == self.horizon();
        let parts = self.parts(0, b, x, terminal);
        Arc {
            cost: parts.holding + parts.penalty + parts.unit,
            level: x,
            parts,
        }
    }

    /// `c (Σ d̃_t - I_0)`, charged once per plan.
    pub fn plan_constant(&self, x: f64) -> f64 {
        let (m, _) = self.moments(0, self.horizon() - 1);
        self.params.unit * (m - x)
    }
}

/// All arcs of the plan graph for a horizon of `n` periods.
#[derive(Debug, Clone)]
pub(crate) struct ArcTable {
    pub n: usize,
    /// `order[k * (n + 1) + j]`: order at period `k` covering `k..j`.
    pub order: Vec<Arc>,
    /// `no_order[j]`: periods `0..j` served from initial stock (`j >= 1`).
    pub no_order: Vec<Arc>,
}

impl ArcTable {
    pub fn build(eval: &CycleEval, x0: f64) -> Result<Self> {
        let n = eval.horizon();
        let mut order = vec![Arc::default(); (n + 1) * (n + 1)];
        let mut no_order = vec![Arc::default(); n + 1];
        for k in 0..n {
            for j in (k + 1)..=n {
                order[k * (n + 1) + j] = eval.order_arc(k, j - 1)?;
            }
        }
        for (j, arc) in no_order.iter_mut().enumerate().skip(1) {
            *arc = eval.no_order_arc(j - 1, x0);
        }
        Ok(Self { n, order, no_order })
    }

    #[inline]
    pub fn order(&self, k: usize, j: usize) -> &Arc {
        &self.order[k * (self.n + 1) + j]
    }
}

/// Path label: cost, order count and order-period bit mask.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Label {
    pub cost: f64,
    pub orders: u32,
    pub mask: u64,
}

/// Cost first, then fewer orders, then the lexicographically earliest plan.
pub(crate) fn label_cmp(a: &Label, b: &Label) -> Ordering {
    a.cost.total_cmp(&b.cost).then(a.orders.cmp(&b.orders)).then_with(|| {
        let diff = a.mask ^ b.mask;
        if diff == 0 {
            Ordering::Equal
        } else if a.mask >> diff.trailing_zeros() & 1 == 1 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    })
}

pub(crate) fn shortest_path(arcs: &ArcTable) -> Label {
    shortest_path_with(arcs.n, |k, j| arcs.order(k, j).cost, |j| arcs.no_order[j].cost)
}

/// Forward pass over nodes `0..=n` with order-arc costs `order(k, j)` and
/// initial-stock prefix costs `no_order(j)`.
pub(crate) fn shortest_path_with(
    n: usize,
    order: impl Fn(usize, usize) -> f64,
    no_order: impl Fn(usize) -> f64,
) -> Label {
    let mut best = vec![
        Label {
            cost: 0.0,
            orders: 0,
            mask: 0
        };
        n + 1
    ];
    for j in 1..=n {
        let mut cur = Label {
            cost: 0.0 + no_order(j),
            orders: 0,
            mask: 0,
        };
        for k in 0..j {
            let cand = Label {
                cost: best[k].cost + order(k, j),
                orders: best[k].orders + 1,
                mask: best[k].mask | 1 << k,
            };
            if label_cmp(&cand, &cur) == Ordering::Less {
                cur = cand;
            }
        }
        best[j] = cur;
    }
    best[n]
}

/// Cost of the path implied by `mask`, summing arcs left to right.
fn path_cost(arcs: &ArcTable, mask: u64) -> (f64, CostBreakdown, Vec<f64>) {
    let n = arcs.n;
    let starts: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
    let mut cost = 0.0;
    let mut parts = CostBreakdown::default();
    let mut levels = Vec::with_capacity(starts.len());
    if starts.first() != Some(&0) {
        let end = starts.first().copied().unwrap_or(n);
        let arc = &arcs.no_order[end];
        cost += arc.cost;
        parts.add(&arc.parts);
    }
    for (i, &k) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(n);
        let arc = arcs.order(k, end);
        cost += arc.cost;
        parts.add(&arc.parts);
        levels.push(arc.level);
    }
    (cost, parts, levels)
}

fn finish(arcs: &ArcTable, eval: &CycleEval, label: &Label) -> RsPolicy {
    let (cost, mut parts, levels) = path_cost(arcs, label.mask);
    debug_assert!(cost == label.cost);
    let constant = eval.plan_constant(eval.params.initial_inventory);
    parts.unit += constant;
    RsPolicy {
        plan: ReplenishmentPlan::from_mask(label.mask, arcs.n),
        order_up_to: levels,
        planned_cost: label.cost + constant,
        breakdown: parts,
    }
}

fn check_range(mvn: &MvnHorizon, i: usize, j: usize) -> Result<()> {
    if i == 0 || i > j || j > mvn.horizon() {
        return Err(Error::PeriodOutOfRange {
            start: i,
            end: j,
            horizon: mvn.horizon(),
        });
    }
    Ok(())
}

/// Expected holding and penalty cost of the cycle `i..=j` (1-based) with
/// order-up-to level `s`, plus `c (S - d̃_{iT})` when `terminal` (or the
/// complementary on-hand term). Fixed and constant unit costs are charged at
/// plan level.
pub fn cycle_cost(
    mvn: &MvnHorizon,
    i: usize,
    j: usize,
    s: f64,
    params: &CostParams,
    settings: &SolverSettings,
    terminal: bool,
) -> Result<f64> {
    check_range(mvn, i, j)?;
    params.validate()?;
    let table = ConvolutionTable::new(mvn);
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    let p = eval.parts(i - 1, j - 1, s, terminal && j == mvn.horizon());
    Ok(p.holding + p.penalty + p.unit)
}

/// Holding and penalty cost of periods `1..=j` served from the initial
/// inventory, with the terminal unit-cost term when `j = T`.
pub fn no_order_segment_cost(
    mvn: &MvnHorizon,
    j: usize,
    params: &CostParams,
    settings: &SolverSettings,
) -> Result<f64> {
    check_range(mvn, 1, j)?;
    params.validate()?;
    let table = ConvolutionTable::new(mvn);
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    Ok(eval.no_order_arc(j - 1, params.initial_inventory).cost)
}

/// Minimising order-up-to level and cost of the cycle `i..=j` (1-based).
pub fn optimal_cycle(
    mvn: &MvnHorizon,
    i: usize,
    j: usize,
    params: &CostParams,
    settings: &SolverSettings,
    terminal: bool,
) -> Result<(f64, f64)> {
    check_range(mvn, i, j)?;
    params.validate()?;
    let table = ConvolutionTable::new(mvn);
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    let terminal = terminal && j == mvn.horizon();
    let s = eval.optimal_level(i - 1, j - 1, terminal)?;
    let p = eval.parts(i - 1, j - 1, s, terminal);
    Ok((s, p.holding + p.penalty + p.unit))
}

fn prepare(mvn: &MvnHorizon, params: &CostParams, limit: usize) -> Result<ConvolutionTable> {
    params.validate()?;
    if mvn.horizon() > limit {
        return Err(invalid(
            "horizon",
            format!("{} periods exceeds the limit of {limit}", mvn.horizon()),
        ));
    }
    Ok(ConvolutionTable::new(mvn))
}

/// Optimal (R,S) policy by a shortest path over replenishment cycles.
pub fn solve_rs(mvn: &MvnHorizon, params: &CostParams, settings: &SolverSettings) -> Result<RsPolicy> {
    let table = prepare(mvn, params, MAX_HORIZON)?;
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    let arcs = ArcTable::build(&eval, params.initial_inventory)?;
    let label = shortest_path(&arcs);
    Ok(finish(&arcs, &eval, &label))
}

/// Brute force over all `2^T` plans; a check on [`solve_rs`].
pub fn enumerate_oracle(mvn: &MvnHorizon, params: &CostParams, settings: &SolverSettings) -> Result<RsPolicy> {
    let table = prepare(mvn, params, MAX_ORACLE_HORIZON)?;
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    let arcs = ArcTable::build(&eval, params.initial_inventory)?;
    let n = arcs.n;
    let mut best: Option<Label> = None;
    for mask in 0u64..(1 << n) {
        let (cost, _, _) = path_cost(&arcs, mask);
        let label = Label {
            cost,
            orders: mask.count_ones(),
            mask,
        };
        if best.is_none_or(|b| label_cmp(&label, &b) == Ordering::Less) {
            best = Some(label);
        }
    }
    Ok(finish(&arcs, &eval, &best.expect("at least one plan")))
}

/// Expected cost of a given plan and levels under the planning model.
pub fn evaluate_plan(
    mvn: &MvnHorizon,
    params: &CostParams,
    settings: &SolverSettings,
    policy: &RsPolicy,
) -> Result<CostBreakdown> {
    let table = prepare(mvn, params, MAX_HORIZON)?;
    let eval = CycleEval {
        table: &table,
        params,
        settings,
        cum_shift: None,
    };
    let n = mvn.horizon();
    let starts: Vec<usize> = policy.plan.order_periods().iter().map(|p| p - 1).collect();
    if starts.iter().any(|&s| s >= n) || starts.len() != policy.order_up_to.len() {
        return Err(invalid("policy", "plan does not fit the horizon"));
    }
    let mut parts = CostBreakdown::default();
    if starts.first() != Some(&0) {
        let end = starts.first().copied().unwrap_or(n);
        parts.add(&eval.no_order_arc(end - 1, params.initial_inventory).parts);
    }
    for (i, &k) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(n);
        let mut p = eval.parts(k, end - 1, policy.order_up_to[i], end == n);
        p.fixed = params.fixed;
        parts.add(&p);
    }
    parts.unit += eval.plan_constant(params.initial_inventory);
    Ok(parts)
}
