//! First-order loss functions of normal random variables and their
//! piecewise-linear bounds.
//!
//! For a standard normal `Z`, `L(x) = E[max(Z - x, 0)]` is the expected
//! shortfall and `L̂(x) = E[max(x - Z, 0)] = x + L(x)` the expected excess.
//! A partition of the real line into `W` cells with masses `p_i` and
//! conditional means `E_i` yields the lower bound
//! `L̂_lb(x) = Σ p_i max(x - E_i, 0)`; adding the maximal gap `e_W` turns it
//! into an upper bound. The planning model works with that upper bound.

use crate::error::{invalid, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// How loss functions are evaluated by the planning model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Exact,
    #[default]
    Piecewise,
}

impl std::str::FromStr for LossMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(LossMode::Exact),
            "piecewise" => Ok(LossMode::Piecewise),
            other => Err(invalid("mode", format!("unknown loss mode `{other}`"))),
        }
    }
}

/// Loss and complementary loss `(L, L̂)` of a standard normal at `x`.
pub fn std_loss(x: f64) -> (f64, f64) {
    if x >= 0.0 {
        let l = normal::pdf(x) - x * normal::sf(x);
        (l, l + x)
    } else {
        let lhat = normal::pdf(x) + x * normal::cdf(x);
        (lhat - x, lhat)
    }
}

/// Partition of the standard normal support used for the piecewise bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLoss {
    masses: Vec<f64>,
    cond_means: Vec<f64>,
    /// Interior breakpoints `z_1 < ... < z_{W-1}`.
    breakpoints: Vec<f64>,
    error: f64,
    /// `cum_mass[i] = p_1 + ... + p_i`, with `cum_mass[0] = 0`.
    cum_mass: Vec<f64>,
    /// `cum_moment[i] = p_1 E_1 + ... + p_i E_i`.
    cum_moment: Vec<f64>,
}

impl PiecewiseLoss {
    /// Equal-mass partition with `segments` cells.
    pub fn equal_mass(segments: usize) -> Result<Self> {
        if segments < 2 {
            return Err(invalid("segments", "at least two segments are required"));
        }
        Self::from_masses(&vec![1.0 / segments as f64; segments])
    }

    /// Partition with user-supplied cell masses (ordered from the left tail).
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.len() < 2 {
            return Err(invalid("masses", "at least two segments are required"));
        }
        if masses.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(invalid("masses", "every mass must be a positive finite number"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("masses", format!("masses sum to {total}, not 1")));
        }
        let w = masses.len();
        let mut breakpoints = Vec::with_capacity(w - 1);
        let mut acc = 0.0;
        for &p in &masses[..w - 1] {
            acc += p;
            breakpoints.push(normal::quantile(acc));
        }
        Ok(Self::from_breakpoints(breakpoints))
    }

    /// Partition whose cells all share the same maximal bound error, which
    /// minimises `e_W` for the given number of segments.
    ///
    /// The gap between `L̂` and its lower bound is convex between consecutive
    /// conditional means, so it peaks at some `E_i`; there only cell `i`
    /// contributes, and the peak equals `∫_{cell i} max(E_i - z, 0) φ(z) dz`.
    /// Breakpoints are placed greedily so that each cell reaches a target
    /// error, and the target is bisected until exactly `segments` cells cover
    /// the line.
    pub fn minimax(segments: usize) -> Result<Self> {
        if segments < 2 {
            return Err(invalid("segments", "at least two segments are required"));
        }
        let (mut lo, mut hi) = (0.0_f64, cell_error(f64::NEG_INFINITY, f64::INFINITY));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if greedy_cells(mid, segments).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let mut breakpoints = greedy_cells(hi, segments).expect("upper target is feasible");
        // The feasible target can be met with fewer cells only if bisection
        // stalled; halve the right tail cell (by mass) until the count is met.
        while breakpoints.len() + 1 < segments {
            let last = breakpoints.last().copied().unwrap_or(f64::NEG_INFINITY);
            let tail = normal::sf(last);
            breakpoints.push(normal::quantile(1.0 - 0.5 * tail));
        }
        Ok(Self::from_breakpoints(breakpoints))
    }

    fn from_breakpoints(breakpoints: Vec<f64>) -> Self {
        let w = breakpoints.len() + 1;
        let edge = |i: usize| -> f64 {
            if i == 0 {
                f64::NEG_INFINITY
            } else if i == w {
                f64::INFINITY
            } else {
                breakpoints[i - 1]
            }
        };
        let mut masses = Vec::with_capacity(w);
        let mut cond_means = Vec::with_capacity(w);
        for i in 0..w {
            let (a, b) = (edge(i), edge(i + 1));
            let p = normal::mass(a, b);
            masses.push(p);
            cond_means.push((pdf_ext(a) - pdf_ext(b)) / p);
        }
        let mut cum_mass = vec![0.0; w + 1];
        let mut cum_moment = vec![0.0; w + 1];
        for i in 0..w {
            cum_mass[i + 1] = cum_mass[i] + masses[i];
            cum_moment[i + 1] = cum_moment[i] + masses[i] * cond_means[i];
        }
        let mut pw = Self {
            masses,
            cond_means,
            breakpoints,
            error: 0.0,
            cum_mass,
            cum_moment,
        };
        pw.error = pw.max_gap();
        pw
    }

    /// Largest gap `L̂(x) - L̂_lb(x)`: the maximum over a 1e-3 grid on
    /// [-6, 6] and over the kinks `E_i`, where the gap actually peaks.
    fn max_gap(&self) -> f64 {
        let gap = |x: f64| std_loss(x).1 - self.lower_bound(x);
        let grid = (0..=12_000)
            .map(|k| gap(-6.0 + k as f64 * 1e-3))
            .fold(0.0_f64, f64::max);
        let kinks = self.cond_means.iter().map(|&e| gap(e)).fold(0.0_f64, f64::max);
        grid.max(kinks)
    }

    pub fn segments(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn cond_means(&self) -> &[f64] {
        &self.cond_means
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Maximal approximation error `e_W` (standard normal units).
    pub fn error(&self) -> f64 {
        self.error
    }

    /// Number of conditional means strictly below `x`.
    #[inline]
    fn active(&self, x: f64) -> usize {
        self.cond_means.partition_point(|&e| e < x)
    }

    /// Jensen lower bound `Σ p_i max(x - E_i, 0)`.
    pub fn lower_bound(&self, x: f64) -> f64 {
        let i = self.active(x);
        (x * self.cum_mass[i] - self.cum_moment[i]).max(0.0)
    }

    /// Upper bound on `L̂(x)`: the maximum of the `W + 1` affine pieces
    /// `x Σ_{k≤i} p_k - Σ_{k≤i} p_k E_k + e_W`, for `i = 0..=W`.
    pub fn comp_loss(&self, x: f64) -> f64 {
        self.lower_bound(x) + self.error
    }

    /// Right derivative of [`comp_loss`](Self::comp_loss) at `x`.
    pub fn comp_loss_slope(&self, x: f64) -> f64 {
        self.cum_mass[self.cond_means.partition_point(|&e| e <= x)]
    }

    /// The `W + 1` affine pieces as `(slope, intercept)` pairs.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..=self.segments()).map(move |i| (self.cum_mass[i], self.error - self.cum_moment[i]))
    }
}

fn pdf_ext(x: f64) -> f64 {
    if x.is_finite() {
        normal::pdf(x)
    } else {
        0.0
    }
}

fn cdf_ext(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        normal::cdf(x)
    }
}

/// Peak bound error contributed by the cell `(a, b]`.
fn cell_error(a: f64, b: f64) -> f64 {
    let p = normal::mass(a, b);
    if p <= 0.0 {
        return 0.0;
    }
    let e = (pdf_ext(a) - pdf_ext(b)) / p;
    (e * (normal::cdf(e) - cdf_ext(a)) + normal::pdf(e) - pdf_ext(a)).max(0.0)
}

/// Breakpoints of a partition whose cells have error at most `target`, or
/// `None` if more than `segments` cells would be needed.
fn greedy_cells(target: f64, segments: usize) -> Option<Vec<f64>> {
    let mut left = f64::NEG_INFINITY;
    let mut breakpoints = Vec::with_capacity(segments - 1);
    loop {
        if cell_error(left, f64::INFINITY) <= target {
            return Some(breakpoints);
        }
        if breakpoints.len() + 1 == segments {
            return None;
        }
        let (mut lo, mut hi) = (if left.is_finite() { left } else { -40.0 }, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cell_error(left, mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 {
                break;
            }
        }
        breakpoints.push(lo);
        left = lo;
    }
}

/// Loss and complementary loss `(L, L̂)` of `N(mean, sd²)` at `x`.
///
/// Piecewise mode standardises the argument and scales the partition bound
/// by `sd`; a zero `sd` degenerates to the deterministic values.
pub fn general_loss(x: f64, mean: f64, sd: f64, pw: &PiecewiseLoss, mode: LossMode) -> Result<(f64, f64)> {
    if !(sd >= 0.0) {
        return Err(invalid("sd", format!("standard deviation {sd} is negative")));
    }
    Ok(loss_unchecked(x, mean, sd, pw, mode))
}

#[inline]
pub(crate) fn loss_unchecked(x: f64, mean: f64, sd: f64, pw: &PiecewiseLoss, mode: LossMode) -> (f64, f64) {
    if sd == 0.0 {
        return ((mean - x).max(0.0), (x - mean).max(0.0));
    }
    let z = (x - mean) / sd;
    match mode {
        LossMode::Exact => {
            let (l, lhat) = std_loss(z);
            (sd * l, sd * lhat)
        }
        LossMode::Piecewise => {
            let lhat = sd * pw.comp_loss(z);
            (lhat - (x - mean), lhat)
        }
    }
}

/// Right derivative of `L̂(x)` for `N(mean, sd²)`: `Φ(z)` exactly, or the
/// partition slope in piecewise mode.
#[inline]
pub(crate) fn comp_loss_slope(x: f64, mean: f64, sd: f64, pw: &PiecewiseLoss, mode: LossMode) -> f64 {
    if sd == 0.0 {
        return if x >= mean { 1.0 } else { 0.0 };
    }
    let z = (x - mean) / sd;
    match mode {
        LossMode::Exact => normal::cdf(z),
        LossMode::Piecewise => pw.comp_loss_slope(z),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule on a finite interval.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn loss_at_zero() {
        let (l, lhat) = std_loss(0.0);
        assert!((l - normal::INV_SQRT_2PI).abs() < 1e-15);
        assert!((lhat - normal::INV_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn loss_at_three_matches_quadrature() {
        let oracle = simpson(|t| (t - 3.0) * normal::pdf(t), 3.0, 14.0, 200_000);
        let (l, _) = std_loss(3.0);
        assert!((l - oracle).abs() < 1e-12, "{l} vs {oracle}");
        assert!((l - 3.822e-4).abs() < 1e-7);
    }

    #[test]
    fn complement_identity() {
        for k in -80..=80 {
            let x = k as f64 * 0.1;
            let (l, lhat) = std_loss(x);
            assert!((lhat - l - x).abs() < 1e-12);
        }
    }

    #[test]
    fn two_segment_means_match_half_normal() {
        let pw = PiecewiseLoss::equal_mass(2).unwrap();
        let oracle = simpson(|t| t * normal::pdf(t), -14.0, 0.0, 200_000) / 0.5;
        assert!((pw.cond_means()[0] - oracle).abs() < 1e-10);
        assert!((pw.cond_means()[0] + 0.797_884_6).abs() < 1e-7);
        assert!((pw.cond_means()[1] - 0.797_884_6).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(PiecewiseLoss::equal_mass(1).is_err());
        assert!(PiecewiseLoss::minimax(1).is_err());
        assert!(PiecewiseLoss::from_masses(&[0.5, 0.4]).is_err());
        assert!(PiecewiseLoss::from_masses(&[0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn partition_moments() {
        for w in [2, 3, 4, 7, 11, 25] {
            for pw in [
                PiecewiseLoss::equal_mass(w).unwrap(),
                PiecewiseLoss::minimax(w).unwrap(),
            ] {
                let total: f64 = pw.masses().iter().sum();
                let moment: f64 = pw.masses().iter().zip(pw.cond_means()).map(|(p, e)| p * e).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(moment.abs() < 1e-9, "W={w} moment={moment}");
                assert!(pw.cond_means().windows(2).all(|e| e[0] < e[1]));
            }
        }
    }

    #[test]
    fn equal_mass_error_shrinks_with_segments() {
        let mut prev = f64::INFINITY;
        for w in 2..=30 {
            let e = PiecewiseLoss::equal_mass(w).unwrap().error();
            assert!(e >= 0.0 && e <= prev, "W={w}");
            prev = e;
        }
        let e4 = PiecewiseLoss::equal_mass(4).unwrap().error();
        let e11 = PiecewiseLoss::equal_mass(11).unwrap().error();
        assert!(e11 < e4);
    }

    #[test]
    fn minimax_beats_equal_mass() {
        for w in [4, 7, 11] {
            let mm = PiecewiseLoss::minimax(w).unwrap();
            let eq = PiecewiseLoss::equal_mass(w).unwrap();
            assert_eq!(mm.segments(), w);
            assert!(mm.error() < eq.error(), "W={w}");
        }
    }

    #[test]
    fn far_left_is_the_constant_piece() {
        let pw = PiecewiseLoss::minimax(11).unwrap();
        let x = pw.cond_means()[0] - 10.0;
        assert_eq!(pw.comp_loss(x), pw.error());
    }

    #[test]
    fn three_pieces_by_hand_for_two_segments() {
        let pw = PiecewiseLoss::equal_mass(2).unwrap();
        let e = pw.error();
        let m = 0.797_884_560_802_865_4;
        // pieces: e, 0.5 x + 0.5 m + e, x + e
        let x = 0.0;
        let by_hand = e.max(0.5 * x + 0.5 * m + e).max(x + e);
        assert!((pw.comp_loss(x) - by_hand).abs() < 1e-12);
        let via_pieces = pw.pieces().map(|(a, b)| a * x + b).fold(f64::MIN, f64::max);
        assert!((pw.comp_loss(x) - via_pieces).abs() < 1e-15);
    }

    #[test]
    fn sandwich_on_grid() {
        let pw = PiecewiseLoss::minimax(11).unwrap();
        for k in 0..10_000 {
            let x = -6.0 + 12.0 * k as f64 / 9_999.0;
            let exact = std_loss(x).1;
            let bound = pw.comp_loss(x);
            assert!(bound >= exact - 1e-15 && bound <= exact + pw.error() + 1e-15);
        }
    }

    #[test]
    fn general_loss_cases() {
        let pw = PiecewiseLoss::equal_mass(4).unwrap();
        let (_, lhat) = general_loss(160.0, 100.0, 20.0, &pw, LossMode::Exact).unwrap();
        let oracle = 20.0 * simpson(|t| (3.0 - t) * normal::pdf(t), -14.0, 3.0, 200_000);
        assert!((lhat - oracle).abs() < 1e-9);
        assert!((lhat - 60.0076).abs() < 1e-4);

        let (_, lhat) = general_loss(100.0, 100.0, 7.0, &pw, LossMode::Exact).unwrap();
        assert!((lhat - 7.0 * normal::INV_SQRT_2PI).abs() < 1e-12);

        assert_eq!(
            general_loss(90.0, 100.0, 0.0, &pw, LossMode::Piecewise).unwrap(),
            (10.0, 0.0)
        );
        assert!(general_loss(90.0, 100.0, -1.0, &pw, LossMode::Exact).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exact".parse::<LossMode>().unwrap(), LossMode::Exact);
        assert!("fuzzy".parse::<LossMode>().is_err());
    }
}
