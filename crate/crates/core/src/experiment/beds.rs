use super::instance::{DemandSpec, Instance, SolverSpec};
use crate::demand::{InnovationSd, ProcessKind, TimeSeriesSpec};
use crate::error::{invalid, Result};
use crate::policy::CostParams;
use serde::{Deserialize, Serialize};

/// Mean demand patterns of the 8-period bed.
pub const PATTERNS: [(&str, [f64; 8]); 10] = [
    ("LCY1", [15.0, 16.0, 15.0, 14.0, 11.0, 7.0, 6.0, 3.0]),
    ("LCY2", [3.0, 6.0, 7.0, 11.0, 14.0, 15.0, 16.0, 15.0]),
    ("SIN1", [15.0, 4.0, 4.0, 10.0, 18.0, 4.0, 4.0, 10.0]),
    ("SIN2", [12.0, 7.0, 7.0, 10.0, 13.0, 7.0, 7.0, 12.0]),
    ("STA", [10.0; 8]),
    ("RAND", [2.0, 4.0, 7.0, 3.0, 10.0, 10.0, 3.0, 3.0]),
    ("EMP1", [5.0, 15.0, 26.0, 44.0, 24.0, 15.0, 22.0, 10.0]),
    ("EMP2", [4.0, 23.0, 28.0, 50.0, 39.0, 26.0, 19.0, 32.0]),
    ("EMP3", [11.0, 14.0, 7.0, 11.0, 16.0, 31.0, 11.0, 48.0]),
    ("EMP4", [18.0, 6.0, 22.0, 22.0, 51.0, 54.0, 22.0, 21.0]),
];

pub fn pattern(name: &str) -> Option<&'static [f64; 8]> {
    PATTERNS.iter().find(|(n, _)| *n == name).map(|(_, p)| p)
}

/// Fixed ordering cost levels: the values used in the result tables, or the
/// ones quoted in the bed description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KLevels {
    #[default]
    Tables,
    Prose,
}

impl KLevels {
    pub fn values(self) -> [f64; 2] {
        match self {
            KLevels::Tables => [200.0, 300.0],
            KLevels::Prose => [200.0, 400.0],
        }
    }
}

impl std::str::FromStr for KLevels {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tables" => Ok(Self::Tables),
            "prose" => Ok(Self::Prose),
            other => Err(invalid("k-levels", format!("unknown level set `{other}`"))),
        }
    }
}

/// The 4-period worked example.
pub fn example_4period() -> Instance {
    Instance {
        id: "example-4period".into(),
        horizon: 4,
        demand: DemandSpec::Mvn {
            pattern: "EXAMPLE".into(),
            mean: vec![20.0, 40.0, 60.0, 40.0],
            cv: 0.25,
            rho: 0.5,
        },
        costs: CostParams {
            fixed: 100.0,
            unit: 0.0,
            holding: 1.0,
            penalty: 10.0,
            initial_inventory: 0.0,
        },
        solver: SolverSpec::default(),
        seed: None,
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// 10 patterns x rho x K x c x b x cv = 320 instances.
pub fn generate_mvn_bed(k_levels: KLevels, solver: SolverSpec) -> Vec<Instance> {
    let mut out = Vec::with_capacity(320);
    for (name, mean) in PATTERNS {
        for rho in [0.25, 0.5] {
            for k in k_levels.values() {
                for c in [0.0, 1.0] {
                    for b in [10.0, 20.0] {
                        for cv in [0.15, 0.3] {
                            out.push(Instance {
                                id: format!(
                                    "{name}_rho{}_K{}_c{}_b{}_cv{}",
                                    fmt(rho),
                                    fmt(k),
                                    fmt(c),
                                    fmt(b),
                                    fmt(cv)
                                ),
                                horizon: 8,
                                demand: DemandSpec::Mvn {
                                    pattern: name.into(),
                                    mean: mean.to_vec(),
                                    cv,
                                    rho,
                                },
                                costs: CostParams {
                                    fixed: k,
                                    unit: c,
                                    holding: 1.0,
                                    penalty: b,
                                    initial_inventory: 0.0,
                                },
                                solver,
                                seed: None,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// The eight demand processes of the time-series bed; the flag marks
/// processes whose innovation sd scales with `cv`.
pub fn ts_processes() -> Vec<(&'static str, TimeSeriesSpec, bool)> {
    let gauss = |kind, ar: &[f64], ma: &[f64], intercept| TimeSeriesSpec {
        kind,
        intercept,
        ar: ar.to_vec(),
        ma: ma.to_vec(),
        arch: Vec::new(),
        innovation_sd: None,
        initial_demands: None,
        initial_shocks: None,
    };
    vec![
        ("AR(1)", gauss(ProcessKind::Ar, &[0.75], &[], 25.0), true),
        ("AR(3)", gauss(ProcessKind::Ar, &[0.5, 0.2, 0.1], &[], 25.0), true),
        ("MA(1)", gauss(ProcessKind::Ma, &[], &[0.75], 100.0), true),
        ("MA(3)", gauss(ProcessKind::Ma, &[], &[0.5, 0.2, 0.1], 100.0), true),
        ("ARMA(1,1)", gauss(ProcessKind::Arma, &[0.75], &[0.75], 25.0), true),
        (
            "ARMA(3,3)",
            gauss(ProcessKind::Arma, &[0.5, 0.2, 0.1], &[0.5, 0.2, 0.1], 25.0),
            true,
        ),
        (
            "AR(1)-ARCH(1)",
            TimeSeriesSpec::ar_arch(25.0, vec![0.75], vec![100.0, 0.75]),
            false,
        ),
        (
            "AR(3)-ARCH(3)",
            TimeSeriesSpec::ar_arch(25.0, vec![0.5, 0.2, 0.1], vec![1.0, 0.3, 0.2, 0.1]),
            false,
        ),
    ]
}

/// 6 Gaussian processes x K x c x b x cv plus 2 AR-ARCH processes x K x c x b
/// = 112 instances over 15 periods.
pub fn generate_ts_bed(k_levels: KLevels, solver: SolverSpec) -> Vec<Instance> {
    let mut out = Vec::with_capacity(112);
    for (name, base, cv_sensitive) in ts_processes() {
        let cvs: Vec<Option<f64>> = if cv_sensitive {
            vec![Some(0.15), Some(0.3)]
        } else {
            vec![None]
        };
        for k in k_levels.values() {
            for c in [0.0, 1.0] {
                for b in [10.0, 20.0] {
                    for &cv in &cvs {
                        let mut spec = base.clone();
                        if let Some(cv) = cv {
                            spec.innovation_sd = Some(InnovationSd::Constant(cv * spec.stationary_mean()));
                        }
                        let tag = cv.map_or(String::new(), |v| format!("_cv{}", fmt(v)));
                        out.push(Instance {
                            id: format!("{name}_K{}_c{}_b{}{tag}", fmt(k), fmt(c), fmt(b)),
                            horizon: 15,
                            demand: DemandSpec::Timeseries {
                                process: name.into(),
                                spec,
                                cv,
                            },
                            costs: CostParams {
                                fixed: k,
                                unit: c,
                                holding: 1.0,
                                penalty: b,
                                initial_inventory: 0.0,
                            },
                            solver,
                            seed: None,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn mvn_bed() {
        let bed = generate_mvn_bed(KLevels::Tables, SolverSpec::default());
        assert_eq!(bed.len(), 320);
        assert_eq!(bed.iter().map(|i| &i.id).collect::<HashSet<_>>().len(), 320);
        assert!(bed.iter().all(|i| i.costs.holding == 1.0 && i.validate().is_ok()));
        assert_eq!(pattern("LCY1").unwrap(), &[15.0, 16.0, 15.0, 14.0, 11.0, 7.0, 6.0, 3.0]);
        let ks: HashSet<u64> = bed.iter().map(|i| i.costs.fixed as u64).collect();
        assert_eq!(ks, HashSet::from([200, 300]));
        let prose = generate_mvn_bed(KLevels::Prose, SolverSpec::default());
        assert!(prose.iter().any(|i| i.costs.fixed == 400.0));
    }

    #[test]
    fn ts_bed() {
        let bed = generate_ts_bed(KLevels::Tables, SolverSpec::default());
        assert_eq!(bed.len(), 112);
        assert_eq!(bed.iter().map(|i| &i.id).collect::<HashSet<_>>().len(), 112);
        assert!(bed.iter().all(|i| i.horizon == 15 && i.validate().is_ok()));
        let procs = ts_processes();
        assert_eq!(procs[0].1.intercept, 25.0);
        assert_eq!(procs[0].1.ar, vec![0.75]);
        assert_eq!(procs[7].1.arch, vec![1.0, 0.3, 0.2, 0.1]);
        let arch = bed.iter().filter(|i| i.demand.cv().is_none()).count();
        assert_eq!(arch, 16);
    }

    #[test]
    fn innovation_sd_scales_with_cv() {
        let bed = generate_ts_bed(KLevels::Tables, SolverSpec::default());
        let ar3 = bed.iter().find(|i| i.id == "AR(3)_K200_c0_b10_cv0.15").unwrap();
        match &ar3.demand {
            DemandSpec::Timeseries {
                spec:
                    TimeSeriesSpec {
                        innovation_sd: Some(InnovationSd::Constant(sd)),
                        ..
                    },
                ..
            } => assert!((sd - 0.15 * 125.0).abs() < 1e-9),
            _ => unreachable!(),
        }
    }
}
