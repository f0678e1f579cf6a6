//! Seeded demand path generation.

use super::{MvnHorizon, ProcessKind, TimeSeriesSpec};
use crate::error::{invalid, Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent generator for `stream` under a master `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Source of demand paths: an explicit normal horizon or a process run for
/// `horizon` periods.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    Mvn(MvnHorizon),
    TimeSeries { spec: TimeSeriesSpec, horizon: usize },
}

impl DemandModel {
    pub fn horizon(&self) -> usize {
        match self {
            DemandModel::Mvn(m) => m.horizon(),
            DemandModel::TimeSeries { horizon, .. } => *horizon,
        }
    }

    /// Normal approximation used for planning.
    pub fn planning_mvn(&self) -> Result<MvnHorizon> {
        match self {
            DemandModel::Mvn(m) => Ok(m.clone()),
            DemandModel::TimeSeries { spec, horizon } => super::ts_horizon_mvn(spec, *horizon),
        }
    }

    pub fn sampler(&self) -> Result<PathSampler> {
        Ok(match self {
            DemandModel::Mvn(m) => PathSampler::Mvn(MvnSampler::new(m)?),
            DemandModel::TimeSeries { spec, horizon } => PathSampler::Ts(TsSampler::new(spec, *horizon)?),
        })
    }
}

/// Cholesky sampler for a normal horizon.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    lower: DMatrix<f64>,
}

impl MvnSampler {
    pub fn new(mvn: &MvnHorizon) -> Result<Self> {
        Ok(Self {
            mean: mvn.mean().to_vec(),
            lower: factor(mvn.cov())?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let t = self.horizon();
        let mut z = [0.0f64; 64];
        let mut zv;
        let z: &mut [f64] = if t <= 64 {
            &mut z[..t]
        } else {
            zv = vec![0.0; t];
            &mut zv
        };
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..t {
            let mut acc = self.mean[i];
            for k in 0..=i {
                acc += self.lower[(i, k)] * z[k];
            }
            out[i] = acc;
        }
    }
}

/// Lower Cholesky factor, adding diagonal jitter up to `1e-8 * trace` for
/// semidefinite input.
fn factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let trace = cov.trace();
    if trace == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let cap = 1e-8 * trace.abs();
    let mut jitter = 0.0;
    loop {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        match cholesky_lower(&m) {
            Ok(l) => return Ok(l),
            Err(minor) if jitter >= cap => return Err(Error::Factorization { minor }),
            Err(_) => {
                jitter = if jitter == 0.0 {
                    cap * 1e-6
                } else {
                    (jitter * 10.0).min(cap)
                }
            }
        }
    }
}

/// Plain Cholesky that reports the 1-based leading minor that failed. Zero
/// variance rows (deterministic periods) are allowed.
fn cholesky_lower(m: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let scale = m.amax();
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-14 * scale {
            return Err(j + 1);
        }
        if d <= 1e-14 * scale {
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-10 * scale {
                    return Err(j + 1);
                }
            }
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Simulates a process from its own dynamics, including state-dependent
/// ARCH variance.
///
/// Pre-sample demands default to the stationary mean and shocks to zero. For
/// ARCH processes without explicit initial shocks the pre-sample squared
/// shocks are set to the unconditional innovation variance.
#[derive(Debug, Clone)]
pub struct TsSampler {
    spec: TimeSeriesSpec,
    horizon: usize,
    init_demands: Vec<f64>,
    init_shocks: Vec<f64>,
    init_sq_shocks: Vec<f64>,
}

impl TsSampler {
    pub fn new(spec: &TimeSeriesSpec, horizon: usize) -> Result<Self> {
        spec.validate()?;
        if horizon == 0 {
            return Err(invalid("horizon", "must be at least one period"));
        }
        let mean = spec.stationary_mean();
        let p = spec.ar.len();
        let q = spec.ma.len();
        let m = spec.arch.len().saturating_sub(1);
        let pick = |v: &Option<Vec<f64>>, n: usize, default: f64| -> Vec<f64> {
            (0..n)
                .map(|i| v.as_ref().and_then(|v| v.get(i).copied()).unwrap_or(default))
                .collect()
        };
        let init_demands = pick(&spec.initial_demands, p, mean);
        let init_shocks = pick(&spec.initial_shocks, q.max(m), 0.0);
        let init_sq_shocks = if spec.kind == ProcessKind::ArArch && spec.initial_shocks.is_none() {
            vec![spec.innovation_variance(0); m]
        } else {
            init_shocks.iter().take(m).map(|e| e * e).collect()
        };
        Ok(Self {
            spec: spec.clone(),
            horizon,
            init_demands,
            init_shocks,
            init_sq_shocks,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut shocks = vec![0.0; self.horizon];
        self.run(rng, out, &mut shocks);
    }

    /// Demands and innovations of one stationary run of length `n`, after
    /// discarding `burn_in` steps.
    pub fn long_series<R: rand::Rng + ?Sized>(&self, rng: &mut R, n: usize, burn_in: usize) -> (Vec<f64>, Vec<f64>) {
        let total = n + burn_in;
        let mut d = vec![0.0; total];
        let mut e = vec![0.0; total];
        self.run(rng, &mut d, &mut e);
        (d.split_off(burn_in), e.split_off(burn_in))
    }

    fn run<R: rand::Rng + ?Sized>(&self, rng: &mut R, d: &mut [f64], e: &mut [f64]) {
        let s = &self.spec;
        let arch = s.kind == ProcessKind::ArArch;
        for t in 0..d.len() {
            let lag_d = |lag: usize| {
                if t >= lag {
                    d[t - lag]
                } else {
                    self.init_demands[lag - t - 1]
                }
            };
            let lag_e = |lag: usize| {
                if t >= lag {
                    e[t - lag]
                } else {
                    self.init_shocks[lag - t - 1]
                }
            };
            let z: f64 = StandardNormal.sample(rng);
            let eps = if arch {
                let mut h = s.arch[0];
                for (m, a) in s.arch[1..].iter().enumerate() {
                    let lag = m + 1;
                    let sq = if t >= lag {
                        e[t - lag] * e[t - lag]
                    } else {
                        self.init_sq_shocks[lag - t - 1]
                    };
                    h += a * sq;
                }
                z * h.sqrt()
            } else {
                z * s.innovation_variance(t).sqrt()
            };
            let mut v = s.intercept + eps;
            for (p, b) in s.ar.iter().enumerate() {
                v += b * lag_d(p + 1);
            }
            for (q, th) in s.ma.iter().enumerate() {
                v += th * lag_e(q + 1);
            }
            e[t] = eps;
            d[t] = v;
        }
    }
}

#[derive(Debug, Clone)]
pub enum PathSampler {
    Mvn(MvnSampler),
    Ts(TsSampler),
}

impl PathSampler {
    pub fn horizon(&self) -> usize {
        match self {
            PathSampler::Mvn(s) => s.horizon(),
            PathSampler::Ts(s) => s.horizon(),
        }
    }

    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            PathSampler::Mvn(s) => s.sample_into(rng, out),
            PathSampler::Ts(s) => s.sample_into(rng, out),
        }
    }
}

/// `n` demand paths drawn from a single seeded stream.
pub fn sample_paths(model: &DemandModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(invalid("n", "at least one path required"));
    }
    let sampler = model.sampler()?;
    let mut rng = rng_stream(seed, 0);
    Ok((0..n)
        .map(|_| {
            let mut path = vec![0.0; sampler.horizon()];
            sampler.sample_into(&mut rng, &mut path);
            path
        })
        .collect())
}
