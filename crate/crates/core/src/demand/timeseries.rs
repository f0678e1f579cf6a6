//! AR / MA / ARMA / AR-ARCH demand processes.

use super::MvnHorizon;
use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Ar,
    Ma,
    Arma,
    ArArch,
}

/// Innovation standard deviation: one value for every period, or a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InnovationSd {
    Constant(f64),
    PerPeriod(Vec<f64>),
}

impl InnovationSd {
    fn at(&self, t: usize) -> f64 {
        match self {
            InnovationSd::Constant(s) => *s,
            InnovationSd::PerPeriod(v) => v[t.min(v.len() - 1)],
        }
    }
}

/// Coefficients of a demand process
/// `d_t = c + Σ β_p d_{t-p} + Σ θ_q ε_{t-q} + ε_t`, where `ε_t` is Gaussian
/// white noise, or `ε_t = u_t sqrt(α_0 + Σ α_m ε²_{t-m})` for AR-ARCH.
///
/// `initial_demands[0]` is the demand just before the horizon,
/// `initial_demands[1]` the one before it, and so on; likewise for shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSpec {
    pub kind: ProcessKind,
    /// `β_0` for processes with an AR part, `θ_0'` for MA.
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ma: Vec<f64>,
    /// `α_0, α_1, ..., α_M`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arch: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_sd: Option<InnovationSd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_demands: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_shocks: Option<Vec<f64>>,
}

impl TimeSeriesSpec {
    pub fn ar(intercept: f64, ar: Vec<f64>, sd: f64) -> Self {
        Self::gaussian(ProcessKind::Ar, intercept, ar, Vec::new(), sd)
    }

    pub fn ma(intercept: f64, ma: Vec<f64>, sd: f64) -> Self {
        Self::gaussian(ProcessKind::Ma, intercept, Vec::new(), ma, sd)
    }

    pub fn arma(intercept: f64, ar: Vec<f64>, ma: Vec<f64>, sd: f64) -> Self {
        Self::gaussian(ProcessKind::Arma, intercept, ar, ma, sd)
    }

    pub fn ar_arch(intercept: f64, ar: Vec<f64>, arch: Vec<f64>) -> Self {
        Self {
            kind: ProcessKind::ArArch,
            intercept,
            ar,
            ma: Vec::new(),
            arch,
            innovation_sd: None,
            initial_demands: None,
            initial_shocks: None,
        }
    }

    fn gaussian(kind: ProcessKind, intercept: f64, ar: Vec<f64>, ma: Vec<f64>, sd: f64) -> Self {
        Self {
            kind,
            intercept,
            ar,
            ma,
            arch: Vec::new(),
            innovation_sd: Some(InnovationSd::Constant(sd)),
            initial_demands: None,
            initial_shocks: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProcessKind::Ar if !self.ma.is_empty() => {
                return Err(invalid("ma", "AR process has no moving-average terms"))
            }
            ProcessKind::Ma if !self.ar.is_empty() => {
                return Err(invalid("ar", "MA process has no autoregressive terms"))
            }
            ProcessKind::ArArch if !self.ma.is_empty() => {
                return Err(invalid("ma", "AR-ARCH process has no moving-average terms"))
            }
            _ => {}
        }
        if self.kind != ProcessKind::ArArch && !self.arch.is_empty() {
            return Err(invalid("arch", "only AR-ARCH processes take ARCH coefficients"));
        }
        let coeffs = self.ar.iter().chain(&self.ma).chain(&self.arch);
        if coeffs.chain([&self.intercept]).any(|v| !v.is_finite()) {
            return Err(invalid("coefficients", "must be finite"));
        }
        if self.kind == ProcessKind::ArArch {
            let (&a0, rest) = self
                .arch
                .split_first()
                .ok_or_else(|| invalid("arch", "AR-ARCH needs at least alpha_0"))?;
            if !(a0 > 0.0) {
                return Err(invalid("arch", "alpha_0 must be positive"));
            }
            if rest.iter().any(|&a| a < 0.0) {
                return Err(invalid("arch", "alpha_m must be non-negative"));
            }
            if rest.iter().sum::<f64>() >= 1.0 {
                return Err(invalid("arch", "sum of alpha_m must be below 1"));
            }
        } else {
            match &self.innovation_sd {
                None => return Err(invalid("innovation_sd", "required for Gaussian processes")),
                Some(InnovationSd::Constant(s)) if !(*s >= 0.0) => {
                    return Err(invalid("innovation_sd", "must be non-negative"))
                }
                Some(InnovationSd::PerPeriod(v)) if v.is_empty() || v.iter().any(|s| !(*s >= 0.0)) => {
                    return Err(invalid("innovation_sd", "schedule must be non-empty and non-negative"))
                }
                _ => {}
            }
        }
        if !self.ar.is_empty() {
            let radius = spectral_radius(&self.ar);
            if !(radius < 1.0) {
                return Err(Error::NonStationary {
                    spectral_radius: radius,
                });
            }
        }
        Ok(())
    }

    /// Stationary process mean.
    pub fn stationary_mean(&self) -> f64 {
        if self.kind == ProcessKind::Ma {
            self.intercept
        } else {
            self.intercept / (1.0 - self.ar.iter().sum::<f64>())
        }
    }

    /// Unconditional innovation variance at 0-based period `t`. AR-ARCH uses
    /// `α_0 / (1 - Σ α_m)`.
    pub fn innovation_variance(&self, t: usize) -> f64 {
        match (&self.kind, &self.innovation_sd) {
            (ProcessKind::ArArch, _) => self.arch[0] / (1.0 - self.arch[1..].iter().sum::<f64>()),
            (_, Some(sd)) => sd.at(t).powi(2),
            (_, None) => 0.0,
        }
    }

    fn initial_demand(&self, lag: usize) -> f64 {
        self.initial_demands
            .as_ref()
            .and_then(|v| v.get(lag).copied())
            .unwrap_or_else(|| self.stationary_mean())
    }

    fn initial_shock(&self, lag: usize) -> f64 {
        self.initial_shocks
            .as_ref()
            .and_then(|v| v.get(lag).copied())
            .unwrap_or(0.0)
    }
}

/// Spectral radius of the companion matrix of an AR polynomial.
pub fn spectral_radius(ar: &[f64]) -> f64 {
    let p = ar.len();
    if p == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::zeros(p, p);
    for (j, &b) in ar.iter().enumerate() {
        companion[(0, j)] = b;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Stationary mean, variance and autocovariances of a process.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMoments {
    pub mean: f64,
    pub variance: f64,
    gamma: Vec<f64>,
    ar: Vec<f64>,
    ma_order: usize,
}

impl StationaryMoments {
    /// Autocovariance at lag `k`.
    pub fn autocov(&self, k: i64) -> f64 {
        let k = k.unsigned_abs() as usize;
        if k < self.gamma.len() {
            return self.gamma[k];
        }
        if self.ar.is_empty() {
            return 0.0;
        }
        let mut g = self.gamma.clone();
        while g.len() <= k {
            let n = g.len();
            let next = self.ar.iter().enumerate().map(|(p, b)| b * g[n - p - 1]).sum();
            g.push(next);
        }
        debug_assert!(self.ma_order < self.gamma.len());
        g[k]
    }
}

/// MA(∞) weights `ψ_0..=ψ_n` of an ARMA process.
fn psi_weights(ar: &[f64], ma: &[f64], n: usize) -> Vec<f64> {
    let mut psi = vec![0.0; n + 1];
    psi[0] = 1.0;
    for j in 1..=n {
        let theta = if j <= ma.len() { ma[j - 1] } else { 0.0 };
        let auto: f64 = (1..=ar.len().min(j)).map(|p| ar[p - 1] * psi[j - p]).sum();
        psi[j] = theta + auto;
    }
    psi
}

/// Autocovariances `γ_0..=γ_r`, `r = max(P, Q)`, from the linear system
/// `γ_k - Σ β_p γ_{|k-p|} = σ² Σ_{j=k}^{Q} θ_j ψ_{j-k}`.
pub fn arma_autocov_numeric(ar: &[f64], ma: &[f64], innovation_var: f64) -> Result<Vec<f64>> {
    let r = ar.len().max(ma.len());
    let psi = psi_weights(ar, ma, ma.len());
    let theta = |j: usize| if j == 0 { 1.0 } else { ma[j - 1] };
    let mut a = DMatrix::<f64>::identity(r + 1, r + 1);
    let mut rhs = DVector::<f64>::zeros(r + 1);
    for k in 0..=r {
        for (p, &beta) in ar.iter().enumerate() {
            let lag = (k as i64 - (p as i64 + 1)).unsigned_abs() as usize;
            a[(k, lag)] -= beta;
        }
        rhs[k] = innovation_var * (k..=ma.len()).map(|j| theta(j) * psi[j - k]).sum::<f64>();
    }
    let solution = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| invalid("ar", "autocovariance system is singular"))?;
    Ok(solution.iter().copied().collect())
}

/// Closed-form autocovariances for ARMA(1,1) and for processes with both
/// orders at most three (zero-padded to ARMA(3,3)); `None` otherwise.
///
/// The ARMA(3,3) route eliminates `γ_2` and `γ_3` from the four moment
/// equations, leaving a 2x2 system in `γ_0, γ_1` with constants
/// `a = Σ_{j=0}^{3} θ_j ψ_j`, `b = Σ_{j=1}^{3} θ_j ψ_{j-1}`,
/// `c = θ_2 + θ_3 ψ_1` and `d = θ_3`.
pub fn arma_autocov_closed_form(ar: &[f64], ma: &[f64], innovation_var: f64) -> Option<Vec<f64>> {
    let s2 = innovation_var;
    if ar.len() == 1 && ma.len() == 1 {
        let (b1, t1) = (ar[0], ma[0]);
        let g0 = (1.0 + t1 * t1 + 2.0 * t1 * b1) / (1.0 - b1 * b1) * s2;
        let g1 = b1 * g0 + t1 * s2;
        return Some(vec![g0, g1]);
    }
    if ar.len() > 3 || ma.len() > 3 {
        return None;
    }
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let (b1, b2, b3) = (at(ar, 0), at(ar, 1), at(ar, 2));
    let (t1, t2, t3) = (at(ma, 0), at(ma, 1), at(ma, 2));

    let a = t3 * b1.powi(3)
        + t2 * b1 * b1
        + t3 * t1 * b1 * b1
        + 2.0 * t3 * b1 * b2
        + t1 * b1
        + t1 * t2 * b1
        + t2 * t3 * b1
        + t2 * b2
        + t1 * t3 * b2
        + t3 * b3
        + t1 * t1
        + t2 * t2
        + t3 * t3
        + 1.0;
    let b = t3 * b1 * b1 + t2 * b1 + t3 * t1 * b1 + t3 * b2 + t1 + t1 * t2 + t2 * t3;
    let c = t3 * b1 + t2 + t1 * t3;
    let d = t3;

    // A0 γ0 - B0 γ1 = C0 σ²  and  -B1 γ0 + A1 γ1 = C1 σ².
    let a0 = 1.0 - b3 * b3 - b2 * b2 - b1 * b2 * b3;
    let bb0 = b1 + b2 * b3 + b1 * b2 + b2 * b3 + b1 * b1 * b3 + b1 * b3 * b3;
    let c0 = a + b3 * d + c * (b2 + b1 * b3);
    let a1 = 1.0 - b2 - b1 * b3 - b3 * b3;
    let bb1 = b1 + b2 * b3;
    let c1 = b + c * b3;
    let det = a0 * a1 - bb0 * bb1;

    let g0 = (c0 * a1 + bb0 * c1) / det * s2;
    let g1 = (a0 * c1 + bb1 * c0) / det * s2;
    let g2 = b2 * g0 + (b1 + b3) * g1 + c * s2;
    let g3 = b3 * g0 + b2 * g1 + b1 * g2 + d * s2;
    let r = ar.len().max(ma.len());
    Some([g0, g1, g2, g3][..=r].to_vec())
}

/// Stationary moments of a process with a constant innovation sd.
pub fn ts_stationary_moments(spec: &TimeSeriesSpec) -> Result<StationaryMoments> {
    spec.validate()?;
    let var_eps = match (&spec.kind, &spec.innovation_sd) {
        (ProcessKind::ArArch, _) => spec.innovation_variance(0),
        (_, Some(InnovationSd::Constant(s))) => s * s,
        (_, Some(InnovationSd::PerPeriod(v))) if v.iter().all(|s| *s == v[0]) => v[0] * v[0],
        _ => {
            return Err(invalid(
                "innovation_sd",
                "stationary moments need a constant innovation sd",
            ))
        }
    };
    let gamma = match spec.kind {
        ProcessKind::Ma => {
            let q = spec.ma.len();
            let theta = |j: usize| if j == 0 { 1.0 } else { spec.ma[j - 1] };
            (0..=q)
                .map(|k| var_eps * (0..=q - k).map(|i| theta(i) * theta(i + k)).sum::<f64>())
                .collect()
        }
        ProcessKind::Arma => match arma_autocov_closed_form(&spec.ar, &spec.ma, var_eps) {
            Some(g) => g,
            None => arma_autocov_numeric(&spec.ar, &spec.ma, var_eps)?,
        },
        ProcessKind::Ar | ProcessKind::ArArch => arma_autocov_numeric(&spec.ar, &[], var_eps)?,
    };
    Ok(StationaryMoments {
        mean: spec.stationary_mean(),
        variance: gamma[0],
        gamma,
        ar: spec.ar.clone(),
        ma_order: spec.ma.len(),
    })
}

/// Exact multivariate normal representation of the first `horizon` periods.
///
/// Each `d_t` is an affine function of the innovations `ε_1..ε_t` with
/// weights `w[t][s] = Σ β_p w[t-p][s] + θ_{t-s} + [s = t]`; pre-sample
/// demands and shocks enter the mean only.
pub fn ts_horizon_mvn(spec: &TimeSeriesSpec, horizon: usize) -> Result<MvnHorizon> {
    spec.validate()?;
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least one period"));
    }
    let (ar, ma) = (&spec.ar, &spec.ma);
    let mut mean = vec![0.0; horizon];
    for t in 0..horizon {
        let mut m = spec.intercept;
        for (p, b) in ar.iter().enumerate() {
            let lag = p + 1;
            m += b * if t >= lag {
                mean[t - lag]
            } else {
                spec.initial_demand(lag - t - 1)
            };
        }
        for (q, th) in ma.iter().enumerate() {
            let lag = q + 1;
            if t < lag {
                m += th * spec.initial_shock(lag - t - 1);
            }
        }
        mean[t] = m;
    }
    let mut w = DMatrix::<f64>::zeros(horizon, horizon);
    for t in 0..horizon {
        for s in 0..=t {
            let mut v = if s == t { 1.0 } else { 0.0 };
            let gap = t - s;
            if gap >= 1 && gap <= ma.len() {
                v += ma[gap - 1];
            }
            for (p, b) in ar.iter().enumerate() {
                let lag = p + 1;
                if t >= lag && t - lag >= s {
                    v += b * w[(t - lag, s)];
                }
            }
            w[(t, s)] = v;
        }
    }
    let var = DVector::from_iterator(horizon, (0..horizon).map(|s| spec.innovation_variance(s)));
    let weighted = DMatrix::from_fn(horizon, horizon, |t, s| w[(t, s)] * var[s]);
    let cov = weighted * w.transpose();
    Ok(MvnHorizon::from_parts(mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_mean() {
        let m = ts_stationary_moments(&TimeSeriesSpec::ar(25.0, vec![0.75], 1.0)).unwrap();
        assert!((m.mean - 100.0).abs() < 1e-12);
        assert!((m.variance - 1.0 / (1.0 - 0.5625)).abs() < 1e-12);
        assert!((m.autocov(3) - 0.75_f64.powi(3) * m.variance).abs() < 1e-12);
    }

    #[test]
    fn ma3_variance_and_cutoff() {
        let m = ts_stationary_moments(&TimeSeriesSpec::ma(100.0, vec![0.5, 0.2, 0.1], 1.0)).unwrap();
        assert!((m.variance - 1.30).abs() < 1e-12);
        assert!((m.autocov(1) - (0.5 + 0.5 * 0.2 + 0.2 * 0.1)).abs() < 1e-12);
        assert_eq!(m.autocov(4), 0.0);
        assert_eq!(m.mean, 100.0);
    }

    #[test]
    fn arma11_closed_form() {
        let m = ts_stationary_moments(&TimeSeriesSpec::arma(0.0, vec![0.5], vec![0.5], 1.0)).unwrap();
        assert!((m.autocov(0) - 7.0 / 3.0).abs() < 1e-12);
        assert!((m.autocov(1) - (0.5 * 7.0 / 3.0 + 0.5)).abs() < 1e-12);
        assert!((m.autocov(2) - 0.5 * m.autocov(1)).abs() < 1e-12);
    }

    #[test]
    fn ar_arch_variance() {
        let spec = TimeSeriesSpec::ar_arch(25.0, vec![0.75], vec![100.0, 0.75]);
        let m = ts_stationary_moments(&spec).unwrap();
        assert!((m.variance - 100.0 / ((1.0 - 0.5625) * 0.25)).abs() < 1e-9);
        assert!((m.variance - 914.2857).abs() < 1e-3);
    }

    #[test]
    fn ar_recursion_residuals() {
        let ar = vec![0.5, 0.2, 0.1];
        let m = ts_stationary_moments(&TimeSeriesSpec::ar(25.0, ar.clone(), 2.0)).unwrap();
        for k in 1..=10i64 {
            let rhs: f64 = ar
                .iter()
                .enumerate()
                .map(|(p, b)| b * m.autocov(k - p as i64 - 1))
                .sum();
            assert!((m.autocov(k) - rhs).abs() <= 1e-9 * m.variance);
        }
        let rhs0: f64 = ar
            .iter()
            .enumerate()
            .map(|(p, b)| b * m.autocov(p as i64 + 1))
            .sum::<f64>()
            + 4.0;
        assert!((m.variance - rhs0).abs() <= 1e-9 * m.variance);
    }

    #[test]
    fn arma33_closed_form_matches_linear_system() {
        let ar = [0.5, 0.2, 0.1];
        let ma = [0.5, 0.2, 0.1];
        let closed = arma_autocov_closed_form(&ar, &ma, 1.0).unwrap();
        let numeric = arma_autocov_numeric(&ar, &ma, 1.0).unwrap();
        for (c, n) in closed.iter().zip(&numeric) {
            assert!((c - n).abs() <= 1e-8 * n.abs(), "{c} vs {n}");
        }
    }

    #[test]
    fn padded_closed_form_matches_for_low_orders() {
        for (ar, ma) in [
            (vec![0.6], vec![]),
            (vec![0.3, 0.2], vec![0.4]),
            (vec![], vec![0.7, -0.2]),
        ] {
            let closed = arma_autocov_closed_form(&ar, &ma, 2.5).unwrap();
            let numeric = arma_autocov_numeric(&ar, &ma, 2.5).unwrap();
            for (c, n) in closed.iter().zip(&numeric) {
                assert!((c - n).abs() <= 1e-10 * n.abs().max(1.0));
            }
        }
        assert!(arma_autocov_closed_form(&[0.1; 4], &[0.1], 1.0).is_none());
    }

    #[test]
    fn stationarity_checks() {
        assert!(TimeSeriesSpec::ar(1.0, vec![1.0], 1.0).validate().is_err());
        // Σβ < 1 but a complex root outside the unit circle.
        assert!(TimeSeriesSpec::ar(1.0, vec![0.0, 0.0, -1.2, 0.5], 1.0)
            .validate()
            .is_err());
        assert!(TimeSeriesSpec::ma(1.0, vec![3.0], 1.0).validate().is_ok());
        assert!(TimeSeriesSpec::ar_arch(1.0, vec![0.5], vec![0.0, 0.5])
            .validate()
            .is_err());
        assert!(TimeSeriesSpec::ar_arch(1.0, vec![0.5], vec![1.0, 0.6, 0.5])
            .validate()
            .is_err());
        assert!(TimeSeriesSpec::ar_arch(1.0, vec![0.5], vec![1.0, -0.1])
            .validate()
            .is_err());
    }

    #[test]
    fn white_noise_horizon_is_diagonal() {
        let spec = TimeSeriesSpec::ma(5.0, vec![0.0, 0.0], 2.0);
        let mvn = ts_horizon_mvn(&spec, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 4.0 } else { 0.0 };
                assert_eq!(mvn.cov()[(i, j)], expected);
            }
        }
    }

    #[test]
    fn ar1_horizon_variance_closed_form() {
        let sigma = 15.0;
        let mvn = ts_horizon_mvn(&TimeSeriesSpec::ar(25.0, vec![0.75], sigma), 30).unwrap();
        for t in 0..30 {
            let n = (t + 1) as i32;
            let closed = sigma * sigma * (1.0 - 0.75_f64.powi(2 * n)) / (1.0 - 0.5625);
            assert!((mvn.cov()[(t, t)] - closed).abs() <= 1e-10 * closed);
            assert!((mvn.mean()[t] - 100.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ma1_horizon_covariance() {
        let mvn = ts_horizon_mvn(&TimeSeriesSpec::ma(100.0, vec![0.75], 10.0), 5).unwrap();
        for t in 0..4 {
            assert!((mvn.cov()[(t, t + 1)] - 75.0).abs() < 1e-12);
            if t + 2 < 5 {
                assert_eq!(mvn.cov()[(t, t + 2)], 0.0);
            }
        }
        assert!((mvn.cov()[(0, 0)] - 100.0).abs() < 1e-12);
        assert!((mvn.cov()[(1, 1)] - 156.25).abs() < 1e-12);
    }

    #[test]
    fn initial_conditions_shift_the_mean() {
        let mut spec = TimeSeriesSpec::arma(25.0, vec![0.75], vec![0.5], 1.0);
        spec.initial_demands = Some(vec![120.0]);
        spec.initial_shocks = Some(vec![4.0]);
        let mvn = ts_horizon_mvn(&spec, 3).unwrap();
        assert!((mvn.mean()[0] - (25.0 + 0.75 * 120.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert!((mvn.mean()[1] - (25.0 + 0.75 * mvn.mean()[0])).abs() < 1e-12);
    }

    #[test]
    fn per_period_schedule() {
        let mut spec = TimeSeriesSpec::ar(0.0, vec![0.5], 1.0);
        spec.innovation_sd = Some(InnovationSd::PerPeriod(vec![1.0, 2.0, 3.0]));
        let mvn = ts_horizon_mvn(&spec, 3).unwrap();
        assert!((mvn.cov()[(1, 1)] - (0.25 + 4.0)).abs() < 1e-12);
        assert!(ts_stationary_moments(&spec).is_err());
    }
}
