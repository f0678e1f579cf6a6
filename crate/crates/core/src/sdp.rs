//! Discretised stochastic dynamic program for lag-1 correlated normal demand.
//!
//! With a tridiagonal covariance the demand of period `t` given the whole
//! history is normal with mean `m_t` and a history-free variance `v_t`,
//! where `m_t` follows the innovations recursion
//! `m_t = μ_t + g_t (ζ_{t-1} - m_{t-1})`, `g_t = Σ_{t,t-1} / v_{t-1}`,
//! `v_t = Σ_tt - g_t Σ_{t,t-1}`. The state is therefore the inventory level
//! and `m_t`; both are placed on grids and values are interpolated linearly.

use crate::demand::MvnHorizon;
use crate::error::{invalid, Error, Result};
use crate::loss::std_loss;
use crate::normal;
use crate::policy::CostParams;
use serde::{Deserialize, Serialize};

/// Grid settings; unset bounds are derived from the demand model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpConfig {
    pub inventory_min: Option<f64>,
    pub inventory_max: Option<f64>,
    pub inventory_step: Option<f64>,
    /// Equal-probability demand cells per period.
    pub demand_cells: usize,
    /// Grid points for the conditional mean `m_t`.
    pub info_points: usize,
    /// Half-width of the `m_t` grid in standard deviations of `m_t`.
    pub info_span: f64,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            inventory_min: None,
            inventory_max: None,
            inventory_step: None,
            demand_cells: 100,
            info_points: 100,
            info_span: 5.0,
        }
    }
}

/// Equal-probability cells of `N(mean, sd²)` as `(probability, conditional
/// mean)` pairs.
pub fn discretize_demand(mean: f64, sd: f64, cells: usize) -> Result<Vec<(f64, f64)>> {
    if cells == 0 {
        return Err(invalid("cells", "at least one cell is required"));
    }
    if !(sd >= 0.0) {
        return Err(invalid("sd", "must be non-negative"));
    }
    Ok(standard_cells(cells)
        .into_iter()
        .map(|z| (1.0 / cells as f64, mean + sd * z))
        .collect())
}

fn standard_cells(cells: usize) -> Vec<f64> {
    let n = cells as f64;
    let edge = |i: usize| {
        if i == 0 || i == cells {
            0.0
        } else {
            normal::pdf(normal::quantile(i as f64 / n))
        }
    };
    let mut z: Vec<f64> = (0..cells).map(|i| (edge(i) - edge(i + 1)) * n).collect();
    // Exact symmetry keeps the cell mean at zero.
    for i in 0..cells / 2 {
        let v = 0.5 * (z[cells - 1 - i] - z[i]);
        z[i] = -v;
        z[cells - 1 - i] = v;
    }
    if cells % 2 == 1 {
        z[cells / 2] = 0.0;
    }
    z
}

/// Value and policy tables of the dynamic program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    lattice_min: f64,
    step: f64,
    levels: usize,
    /// Base means, conditional variances and gains per period.
    mu: Vec<f64>,
    var: Vec<f64>,
    gain: Vec<f64>,
    /// `info[t]`: grid of `m_t`.
    info: Vec<Vec<f64>>,
    /// `value[t][l * levels + k]`: optimal cost-to-go at inventory `k` and
    /// info point `l` before ordering in 0-based period `t`.
    value: Vec<Vec<f64>>,
    /// Expected cost of raising stock to level `k` in state `l` then
    /// facing period `t`.
    post_order: Vec<Vec<f64>>,
    /// Stored argmin: target lattice index, or `None` for no order.
    action: Vec<Vec<Option<u32>>>,
    fixed: f64,
    unit: f64,
    initial_index: usize,
    pub expected_total_cost: f64,
    /// Set when the lattice does not cover the recommended range.
    pub truncated: bool,
}

fn lag1_structure(mvn: &MvnHorizon) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some((row, col, value)) = mvn.first_non_lag1() {
        return Err(Error::NotLag1 {
            row: row + 1,
            col: col + 1,
            value,
        });
    }
    let n = mvn.horizon();
    let cov = mvn.cov();
    let mut var = vec![0.0; n];
    let mut gain = vec![0.0; n];
    var[0] = cov[(0, 0)].max(0.0);
    for t in 1..n {
        let c = cov[(t, t - 1)];
        gain[t] = if var[t - 1] > 0.0 { c / var[t - 1] } else { 0.0 };
        var[t] = (cov[(t, t)] - gain[t] * c).max(0.0);
    }
    Ok((var, gain))
}

/// Linear interpolation weights of `x` on a uniform grid.
#[inline]
fn grid_weights(grid: &[f64], x: f64) -> (usize, f64) {
    if grid.len() == 1 {
        return (0, 0.0);
    }
    let h = grid[1] - grid[0];
    let pos = ((x - grid[0]) / h).clamp(0.0, (grid.len() - 1) as f64);
    let i = (pos.floor() as usize).min(grid.len() - 2);
    (i, pos - i as f64)
}

/// Expected holding and penalty cost of stock `y` against `N(m, sd²)`.
#[inline]
fn period_cost(y: f64, m: f64, sd: f64, params: &CostParams) -> f64 {
    let (l, lhat) = if sd > 0.0 {
        let (l, lhat) = std_loss((y - m) / sd);
        (sd * l, sd * lhat)
    } else {
        ((m - y).max(0.0), (y - m).max(0.0))
    };
    params.holding * lhat + params.penalty * l
}

/// Optimal policy by backward induction over `(inventory, m_t)`.
pub fn solve_sdp(mvn: &MvnHorizon, params: &CostParams, cfg: &SdpConfig) -> Result<SdpSolution> {
    params.validate()?;
    if cfg.demand_cells == 0 || cfg.info_points == 0 || !(cfg.info_span > 0.0) {
        return Err(invalid("sdp", "demand cells, info points and span must be positive"));
    }
    let (var, gain) = lag1_structure(mvn)?;
    let n = mvn.horizon();
    let mu = mvn.mean().to_vec();
    let i0 = params.initial_inventory;

    let total_mean: f64 = mu.iter().sum();
    let total_sd = mvn.cov().sum().max(0.0).sqrt();
    let sds: Vec<f64> = (0..n).map(|t| mvn.sd(t)).collect();
    let min_sd = sds.iter().copied().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let step = cfg.inventory_step.unwrap_or(if min_sd.is_finite() {
        min_sd / 10.0
    } else {
        total_mean.abs().max(1.0) / 200.0
    });
    if !(step > 0.0) {
        return Err(invalid("inventory_step", "must be positive"));
    }
    let want_lo = i0 - 6.0 * total_sd;
    let want_hi = (i0.max(0.0) + total_mean).max(total_mean) + 6.0 * total_sd;
    let lo = cfg.inventory_min.unwrap_or(want_lo).min(i0);
    let hi = cfg.inventory_max.unwrap_or(want_hi).max(i0);
    if !(lo < hi) {
        return Err(invalid("inventory_min", "must be below inventory_max"));
    }
    let truncated = lo > want_lo + 1e-9 || hi < want_hi - 1e-9;
    // Lattice aligned on the initial inventory.
    let below = ((i0 - lo) / step).ceil() as usize;
    let above = ((hi - i0) / step).ceil() as usize;
    let levels = below + above + 1;
    if levels > 2_000_000 {
        return Err(invalid("inventory_step", "lattice is too large"));
    }
    let lattice_min = i0 - below as f64 * step;
    let y = |k: usize| lattice_min + k as f64 * step;

    let info: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let sd_m = (mvn.cov()[(t, t)] - var[t]).max(0.0).sqrt();
            if t == 0 || sd_m <= 1e-12 * (1.0 + mu[t].abs()) || cfg.info_points == 1 {
                vec![mu[t]]
            } else {
                let p = cfg.info_points;
                (0..p)
                    .map(|i| mu[t] - cfg.info_span * sd_m + 2.0 * cfg.info_span * sd_m * i as f64 / (p - 1) as f64)
                    .collect()
            }
        })
        .collect();

    let z = standard_cells(cfg.demand_cells);
    let w_cell = 1.0 / cfg.demand_cells as f64;
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut post_order: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut action: Vec<Vec<Option<u32>>> = vec![Vec::new(); n];
    let mut shifted = vec![0.0; levels];

    for t in (0..n).rev() {
        let sd = var[t].sqrt();
        // Continuation values for each cell, interpolated in the next info.
        let cont: Vec<Vec<f64>> = if t + 1 < n {
            let grid = &info[t + 1];
            let next = &value[t + 1];
            z.iter()
                .map(|&zn| {
                    let m_next = mu[t + 1] + gain[t + 1] * sd * zn;
                    let (l, f) = grid_weights(grid, m_next);
                    (0..levels)
                        .map(|k| {
                            let a = next[l * levels + k];
                            if f == 0.0 {
                                a
                            } else {
                                (1.0 - f) * a + f * next[(l + 1) * levels + k]
                            }
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        let rows = info[t].len();
        let mut g = vec![0.0; rows * levels];
        let mut v = vec![0.0; rows * levels];
        let mut act = vec![None; rows * levels];
        for (l, &m) in info[t].iter().enumerate() {
            let row = &mut g[l * levels..(l + 1) * levels];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = period_cost(y(k), m, sd, params);
            }
            for (c, &zn) in cont.iter().zip(&z) {
                // Post-demand stock of level k is y(k) - d = y(k - delta).
                let delta = (m + sd * zn) / step;
                interpolate_shifted(c, delta, &mut shifted);
                for (slot, s) in row.iter_mut().zip(&shifted) {
                    *slot += w_cell * s;
                }
            }
            // Order-up-to choice via a suffix minimum of c y + G(y).
            let mut best = f64::INFINITY;
            let mut arg = levels - 1;
            for k in (0..levels).rev() {
                let cand = params.unit * y(k) + row[k];
                if cand < best {
                    best = cand;
                    arg = k;
                }
                let order = params.fixed - params.unit * y(k) + best;
                let idx = l * levels + k;
                if order < row[k] && arg != k {
                    v[idx] = order;
                    act[idx] = Some(arg as u32);
                } else {
                    v[idx] = row[k];
                }
            }
        }
        value[t] = v;
        post_order[t] = g;
        action[t] = act;
    }

    let expected_total_cost = value[0][below];
    Ok(SdpSolution {
        lattice_min,
        step,
        levels,
        mu,
        var,
        gain,
        info,
        value,
        post_order,
        action,
        fixed: params.fixed,
        unit: params.unit,
        initial_index: below,
        expected_total_cost,
        truncated,
    })
}

/// `out[k] = f(k - delta)` by linear interpolation, extrapolating linearly
/// past either end.
fn interpolate_shifted(f: &[f64], delta: f64, out: &mut [f64]) {
    let n = f.len();
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let q = delta.floor();
    let frac = delta - q;
    let q = q as i64;
    // k - delta = (k - q - 1) + (1 - frac)
    let at = |i: i64| -> f64 {
        if i < 0 {
            f[0] + i as f64 * (f[1] - f[0])
        } else if i as usize >= n {
            f[n - 1] + (i - n as i64 + 1) as f64 * (f[n - 1] - f[n - 2])
        } else {
            f[i as usize]
        }
    };
    for (k, o) in out.iter_mut().enumerate() {
        let base = k as i64 - q - 1;
        let (a, b) = (at(base), at(base + 1));
        *o = if frac == 0.0 { b } else { frac * a + (1.0 - frac) * b };
    }
}

impl SdpSolution {
    pub fn horizon(&self) -> usize {
        self.mu.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Inventory level of lattice index `k`.
    pub fn level(&self, k: usize) -> f64 {
        self.lattice_min + k as f64 * self.step
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn info_grid(&self, t: usize) -> &[f64] {
        &self.info[t - 1]
    }

    pub fn initial_index(&self) -> usize {
        self.initial_index
    }

    /// Stored value at 1-based period `t`, lattice index `k`, info index `l`.
    pub fn value(&self, t: usize, k: usize, l: usize) -> f64 {
        self.value[t - 1][l * self.levels + k]
    }

    /// Stored decision at a grid state: target level, or `None`.
    pub fn action(&self, t: usize, k: usize, l: usize) -> Result<Option<f64>> {
        let row = self
            .action
            .get(t.wrapping_sub(1))
            .ok_or_else(|| invalid("t", format!("period {t} is outside 1..={}", self.horizon())))?;
        let a = row
            .get(l * self.levels + k)
            .ok_or_else(|| invalid("state", "lattice or info index out of range"))?;
        Ok(a.map(|i| self.level(i as usize)))
    }

    /// Conditional mean of demand in 0-based period `t` given `history`.
    pub fn conditional_mean(&self, t: usize, history: &[f64]) -> f64 {
        let mut m = self.mu[0];
        for s in 1..=t.min(history.len()) {
            m = self.mu[s] + self.gain[s] * (history[s - 1] - m);
        }
        m
    }

    pub fn conditional_sd(&self, t: usize) -> f64 {
        self.var[t].sqrt()
    }

    fn snap(&self, inventory: f64) -> usize {
        let k = ((inventory - self.lattice_min) / self.step).round();
        k.clamp(0.0, (self.levels - 1) as f64) as usize
    }

    /// Greedy decision in 1-based period `t` at `inventory` after observing
    /// the demands in `history`. Inventory snaps to the lattice and the
    /// post-order value is interpolated in the conditional mean.
    pub fn decide(&self, t: usize, inventory: f64, history: &[f64]) -> Result<Option<f64>> {
        if t == 0 || t > self.horizon() {
            return Err(invalid("t", format!("period {t} is outside 1..={}", self.horizon())));
        }
        let t0 = t - 1;
        let m = self.conditional_mean(t0, history);
        let (l, f) = grid_weights(&self.info[t0], m);
        let n = self.levels;
        let g = &self.post_order[t0];
        let at = |k: usize| {
            let a = g[l * n + k];
            if f == 0.0 {
                a
            } else {
                (1.0 - f) * a + f * g[(l + 1) * n + k]
            }
        };
        let k0 = self.snap(inventory);
        let stay = at(k0);
        let mut best = f64::INFINITY;
        let mut arg = k0;
        for k in (k0 + 1)..n {
            let cand = self.unit * self.level(k) + at(k);
            if cand < best {
                best = cand;
                arg = k;
            }
        }
        let order = self.fixed - self.unit * self.level(k0) + best;
        Ok(if order < stay { Some(self.level(arg)) } else { None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::build_lag1_mvn;

    #[test]
    fn cells() {
        let one = discretize_demand(7.0, 3.0, 1).unwrap();
        assert_eq!(one, vec![(1.0, 7.0)]);
        let two = discretize_demand(0.0, 1.0, 2).unwrap();
        assert!((two[0].1 + 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((two[1].1 - 0.797_884_560_802_865_4).abs() < 1e-12);
        for n in [3, 10, 25, 100] {
            let c = discretize_demand(40.0, 10.0, n).unwrap();
            let mean: f64 = c.iter().map(|(p, v)| p * v).sum();
            assert!((mean - 40.0).abs() < 1e-9);
            assert!(c.windows(2).all(|w| w[0].1 < w[1].1));
        }
        assert!(discretize_demand(0.0, -1.0, 3).is_err());
    }

    #[test]
    fn shifted_interpolation() {
        let f: Vec<f64> = (0..10).map(|k| 2.0 * k as f64 + 1.0).collect();
        let mut out = vec![0.0; 10];
        for delta in [0.0, 0.25, 3.5, -2.75, 12.0] {
            interpolate_shifted(&f, delta, &mut out);
            for (k, o) in out.iter().enumerate() {
                assert!((o - (2.0 * (k as f64 - delta) + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn newsvendor_single_period() {
        let mvn = build_lag1_mvn(&[50.0], 0.2, 0.0).unwrap();
        let params = CostParams::new(0.0, 0.0, 1.0, 9.0, 0.0).unwrap();
        let sol = solve_sdp(&mvn, &params, &SdpConfig::default()).unwrap();
        let s = 50.0 + 10.0 * normal::quantile(0.9);
        let expected = period_cost(s, 50.0, 10.0, &params);
        assert!((sol.expected_total_cost - expected).abs() < 0.01 * expected);
        let target = sol.decide(1, 0.0, &[]).unwrap().unwrap();
        assert!((target - s).abs() <= sol.step());
    }

    #[test]
    fn tiny_penalty_orders_nothing() {
        let mvn = build_lag1_mvn(&[20.0, 40.0, 60.0, 40.0], 0.25, 0.5).unwrap();
        let params = CostParams::new(100.0, 0.0, 1.0, 1e-6, 0.0).unwrap();
        let sol = solve_sdp(&mvn, &params, &SdpConfig::default()).unwrap();
        assert!(sol.expected_total_cost < 1e-3);
        assert_eq!(sol.decide(1, 0.0, &[]).unwrap(), None);
    }

    #[test]
    fn rejects_non_lag1() {
        let mut cov = nalgebra::DMatrix::<f64>::identity(3, 3);
        cov[(0, 2)] = 0.1;
        cov[(2, 0)] = 0.1;
        let mvn = MvnHorizon::new(vec![1.0; 3], cov).unwrap();
        let params = CostParams::new(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            solve_sdp(&mvn, &params, &SdpConfig::default()),
            Err(Error::NotLag1 { .. })
        ));
    }

    #[test]
    fn four_period_example() {
        let mvn = build_lag1_mvn(&[20.0, 40.0, 60.0, 40.0], 0.25, 0.5).unwrap();
        let params = CostParams::new(100.0, 0.0, 1.0, 10.0, 0.0).unwrap();
        let sol = solve_sdp(&mvn, &params, &SdpConfig::default()).unwrap();
        assert!(!sol.truncated);
        assert!(sol.decide(1, 0.0, &[]).unwrap().is_some());
        let k = sol.initial_index();
        assert_eq!(sol.value(1, k, 0), sol.expected_total_cost);
        // Plenty of stock in the last period: no order.
        let high = 40.0 + 6.0 * 10.0;
        assert_eq!(sol.decide(4, high, &[20.0, 40.0, 60.0]).unwrap(), None);
        assert!(sol.decide(0, 0.0, &[]).is_err());
    }

    #[test]
    fn conditional_mean_recursion() {
        let mvn = build_lag1_mvn(&[20.0, 40.0, 60.0, 40.0], 0.25, 0.5).unwrap();
        let params = CostParams::new(100.0, 0.0, 1.0, 10.0, 0.0).unwrap();
        let sol = solve_sdp(&mvn, &params, &SdpConfig::default()).unwrap();
        let h = [30.0, 35.0, 70.0];
        for t in 1..4 {
            let c = crate::demand::condition_on_prefix(&mvn, &h[..t]).unwrap().mvn;
            assert!((sol.conditional_mean(t, &h) - c.mean()[0]).abs() < 1e-10);
            assert!((sol.conditional_sd(t).powi(2) - c.cov()[(0, 0)]).abs() < 1e-10);
        }
    }
}
