//! Horizon-wide multivariate normal demand models.

mod sampling;
mod timeseries;

pub use sampling::{rng_stream, sample_paths, DemandModel, MvnSampler, PathSampler, TsSampler};
pub use timeseries::{
    arma_autocov_closed_form, arma_autocov_numeric, spectral_radius, ts_horizon_mvn, ts_stationary_moments,
    InnovationSd, ProcessKind, StationaryMoments, TimeSeriesSpec,
};

use crate::error::{invalid, Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative tolerance of the positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Mean vector and covariance matrix of demand over a `T`-period horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnHorizon {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
}

impl MvnHorizon {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let t = mean.len();
        if t == 0 {
            return Err(invalid("mean", "horizon must contain at least one period"));
        }
        if cov.nrows() != t || cov.ncols() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("cov", "entries must be finite"));
        }
        let scale = cov.amax();
        for i in 0..t {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
                    return Err(invalid("cov", format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        if scale > 0.0 {
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if min_eig < -PSD_TOLERANCE * scale {
                return Err(invalid(
                    "cov",
                    format!("matrix is not positive semidefinite (eigenvalue {min_eig:e})"),
                ));
            }
        }
        Ok(Self { mean, cov })
    }

    /// Symmetrises `cov` and skips validation; used for matrices derived
    /// from an already valid model.
    pub(crate) fn from_parts(mean: Vec<f64>, cov: DMatrix<f64>) -> Self {
        let cov = (&cov + cov.transpose()) * 0.5;
        Self { mean, cov }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Standard deviation of 0-based `period`.
    pub fn sd(&self, period: usize) -> f64 {
        self.cov[(period, period)].max(0.0).sqrt()
    }

    /// True when every entry more than one step off the diagonal vanishes.
    pub fn is_lag1(&self) -> bool {
        self.first_non_lag1().is_none()
    }

    pub(crate) fn first_non_lag1(&self) -> Option<(usize, usize, f64)> {
        let scale = self.cov.amax();
        let t = self.horizon();
        for i in 0..t {
            for j in (i + 2)..t {
                let v = self.cov[(i, j)];
                if v.abs() > 1e-12 * scale {
                    return Some((i, j, v));
                }
            }
        }
        None
    }

    /// Sub-model over the 0-based periods `start..self.horizon()`.
    pub fn tail(&self, start: usize) -> Self {
        let n = self.horizon() - start;
        Self {
            mean: self.mean[start..].to_vec(),
            cov: self.cov.view((start, start), (n, n)).into_owned(),
        }
    }
}

/// Lag-1 correlated normal demand: `sd_t = cv * mean_t` and adjacent periods
/// correlated with coefficient `rho`.
pub fn build_lag1_mvn(pattern: &[f64], cv: f64, rho: f64) -> Result<MvnHorizon> {
    if pattern.is_empty() {
        return Err(invalid("pattern", "horizon must contain at least one period"));
    }
    if !(cv > 0.0) || !cv.is_finite() {
        return Err(invalid("cv", format!("coefficient of variation {cv} must be positive")));
    }
    if !(rho.abs() <= 0.5) {
        return Err(invalid("rho", format!("|rho| = {} exceeds 0.5", rho.abs())));
    }
    if let Some(bad) = pattern.iter().find(|&&m| !(m > 0.0) || !m.is_finite()) {
        return Err(invalid("pattern", format!("mean demand {bad} must be positive")));
    }
    let t = pattern.len();
    let sd: Vec<f64> = pattern.iter().map(|m| cv * m).collect();
    let mut cov = DMatrix::zeros(t, t);
    for i in 0..t {
        cov[(i, i)] = sd[i] * sd[i];
        if i + 1 < t {
            let c = rho * sd[i] * sd[i + 1];
            cov[(i, i + 1)] = c;
            cov[(i + 1, i)] = c;
        }
    }
    MvnHorizon::new(pattern.to_vec(), cov)
}

/// Moments of the demand convolution `d_j + ... + d_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionMoments {
    pub start: usize,
    pub end: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sd of `d_j + ... + d_t` for 1-based periods `1 <= j <= t <= T`.
pub fn convolution_moments(mvn: &MvnHorizon, j: usize, t: usize) -> Result<ConvolutionMoments> {
    if j == 0 || j > t || t > mvn.horizon() {
        return Err(Error::PeriodOutOfRange {
            start: j,
            end: t,
            horizon: mvn.horizon(),
        });
    }
    let (a, b) = (j - 1, t - 1);
    let mean = mvn.mean[a..=b].iter().sum();
    let block = mvn.cov.view((a, a), (b - a + 1, b - a + 1));
    let ones = DVector::from_element(b - a + 1, 1.0);
    let var = (ones.transpose() * block * &ones)[(0, 0)];
    Ok(ConvolutionMoments {
        start: j,
        end: t,
        mean,
        sd: var.max(0.0).sqrt(),
    })
}

/// Means and standard deviations of every convolution over a horizon,
/// indexed by 0-based `(start, end)`.
#[derive(Debug, Clone)]
pub struct ConvolutionTable {
    horizon: usize,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl ConvolutionTable {
    pub fn new(mvn: &MvnHorizon) -> Self {
        let t = mvn.horizon();
        let mut mean = vec![0.0; t * t];
        let mut sd = vec![0.0; t * t];
        for i in 0..t {
            let (mut m, mut v) = (0.0, 0.0);
            for k in i..t {
                m += mvn.mean[k];
                let cross: f64 = (i..k).map(|l| mvn.cov[(l, k)]).sum();
                v += mvn.cov[(k, k)] + 2.0 * cross;
                mean[i * t + k] = m;
                sd[i * t + k] = v.max(0.0).sqrt();
            }
        }
        Self { horizon: t, mean, sd }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn mean(&self, start: usize, end: usize) -> f64 {
        self.mean[start * self.horizon + end]
    }

    #[inline]
    pub fn sd(&self, start: usize, end: usize) -> f64 {
        self.sd[start * self.horizon + end]
    }
}

/// Precomputed conditioning of a horizon on its first `observed` periods.
#[derive(Debug, Clone)]
pub struct Conditioner {
    base_mean: Vec<f64>,
    gain: DMatrix<f64>,
    conditional: MvnHorizon,
    pseudo_inverse: bool,
}

impl Conditioner {
    pub fn new(mvn: &MvnHorizon, observed: usize) -> Result<Self> {
        let t = mvn.horizon();
        if observed == 0 || observed >= t {
            return Err(invalid(
                "observed",
                format!("prefix length {observed} must lie in 1..{t}"),
            ));
        }
        let p = observed;
        let q = t - p;
        let s11 = mvn.cov.view((0, 0), (p, p)).into_owned();
        let s21 = mvn.cov.view((p, 0), (q, p)).into_owned();
        let s22 = mvn.cov.view((p, p), (q, q)).into_owned();
        // gain = Σ21 Σ11⁻¹, obtained from Σ11 gainᵀ = Σ12.
        let (gain, pseudo_inverse) = match s11.clone().cholesky() {
            Some(ch) => (ch.solve(&s21.transpose()).transpose(), false),
            None => {
                let eps = 1e-12 * s11.amax().max(f64::MIN_POSITIVE);
                let pinv = s11.pseudo_inverse(eps).map_err(|e| invalid("cov", e))?;
                (&s21 * pinv, true)
            }
        };
        let cov = &s22 - &gain * s21.transpose();
        Ok(Self {
            base_mean: mvn.mean.clone(),
            conditional: MvnHorizon::from_parts(mvn.mean[p..].to_vec(), cov),
            gain,
            pseudo_inverse,
        })
    }

    pub fn observed(&self) -> usize {
        self.gain.ncols()
    }

    /// Conditional covariance, which does not depend on the observed values.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.conditional.cov
    }

    /// `Σ21 Σ11⁻¹ (ζ - mean_1)`, the shift of the remaining means.
    pub fn mean_shift(&self, observed: &[f64]) -> Result<Vec<f64>> {
        let p = self.observed();
        if observed.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: observed.len(),
            });
        }
        let dev = DVector::from_iterator(p, observed.iter().zip(&self.base_mean).map(|(z, m)| z - m));
        Ok((&self.gain * dev).iter().copied().collect())
    }

    pub fn condition(&self, observed: &[f64]) -> Result<ConditionalMvn> {
        let shift = self.mean_shift(observed)?;
        let mean = self.conditional.mean.iter().zip(&shift).map(|(m, s)| m + s).collect();
        Ok(ConditionalMvn {
            mvn: MvnHorizon {
                mean,
                cov: self.conditional.cov.clone(),
            },
            pseudo_inverse: self.pseudo_inverse,
        })
    }
}

/// Distribution of the remaining periods given an observed prefix.
#[derive(Debug, Clone)]
pub struct ConditionalMvn {
    pub mvn: MvnHorizon,
    /// Set when the observed block was singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// Conditional distribution of periods `t..T` given observed demands of
/// periods `1..t-1`.
pub fn condition_on_prefix(mvn: &MvnHorizon, observed: &[f64]) -> Result<ConditionalMvn> {
    Conditioner::new(mvn, observed.len())?.condition(observed)
}
