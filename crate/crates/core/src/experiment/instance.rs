use crate::demand::{build_lag1_mvn, DemandModel, TimeSeriesSpec};
use crate::error::{invalid, Result};
use crate::loss::{LossMode, PiecewiseLoss};
use crate::policy::{CostParams, SolverSettings, UnitCostVariant};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How the loss-function partition is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// Cells with equal maximal error (smallest `e_W` for a given `W`).
    #[default]
    Minimax,
    /// Cells of equal probability.
    Equal,
}

impl std::str::FromStr for Partition {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(Self::Minimax),
            "equal" => Ok(Self::Equal),
            other => Err(invalid("partition", format!("unknown partition `{other}`"))),
        }
    }
}

impl Partition {
    pub fn build(self, segments: usize) -> Result<PiecewiseLoss> {
        match self {
            Partition::Minimax => PiecewiseLoss::minimax(segments),
            Partition::Equal => PiecewiseLoss::equal_mass(segments),
        }
    }
}

fn default_segments() -> usize {
    11
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub mode: LossMode,
    #[serde(default)]
    pub partition: Partition,
    #[serde(default)]
    pub unit_cost: UnitCostVariant,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            segments: default_segments(),
            mode: LossMode::Piecewise,
            partition: Partition::Minimax,
            unit_cost: UnitCostVariant::Expected,
        }
    }
}

impl SolverSpec {
    pub fn settings(&self) -> Result<SolverSettings> {
        Ok(SolverSettings::new(self.partition.build(self.segments)?, self.mode).with_unit_cost(self.unit_cost))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandSpec {
    /// Lag-1 correlated normal demand around a mean pattern.
    Mvn {
        pattern: String,
        mean: Vec<f64>,
        cv: f64,
        rho: f64,
    },
    Timeseries {
        process: String,
        spec: TimeSeriesSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cv: Option<f64>,
    },
}

impl DemandSpec {
    /// Pattern or process name.
    pub fn label(&self) -> &str {
        match self {
            DemandSpec::Mvn { pattern, .. } => pattern,
            DemandSpec::Timeseries { process, .. } => process,
        }
    }

    pub fn cv(&self) -> Option<f64> {
        match self {
            DemandSpec::Mvn { cv, .. } => Some(*cv),
            DemandSpec::Timeseries { cv, .. } => *cv,
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            DemandSpec::Mvn { rho, .. } => Some(*rho),
            DemandSpec::Timeseries { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub horizon: usize,
    pub demand: DemandSpec,
    pub costs: CostParams,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Overrides the seed derived from the run's master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        if let DemandSpec::Mvn { mean, .. } = &self.demand {
            if mean.len() != self.horizon {
                return Err(invalid(
                    "horizon",
                    format!(
                        "instance `{}` has {} means for {} periods",
                        self.id,
                        mean.len(),
                        self.horizon
                    ),
                ));
            }
        }
        self.model().map(|_| ())
    }

    pub fn model(&self) -> Result<DemandModel> {
        Ok(match &self.demand {
            DemandSpec::Mvn { mean, cv, rho, .. } => DemandModel::Mvn(build_lag1_mvn(mean, *cv, *rho)?),
            DemandSpec::Timeseries { spec, .. } => {
                spec.validate()?;
                DemandModel::TimeSeries {
                    spec: spec.clone(),
                    horizon: self.horizon,
                }
            }
        })
    }

    /// Parses either a single instance or an array of instances.
    pub fn parse_many(json: &str) -> Result<Vec<Instance>> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let list: Vec<Instance> = if value.is_array() {
            serde_json::from_value(value)?
        } else {
            vec![serde_json::from_value(value)?]
        };
        for inst in &list {
            inst.validate()?;
        }
        let mut ids: Vec<&str> = list.iter().map(|i| i.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("id", format!("duplicate instance id `{}`", w[0])));
        }
        Ok(list)
    }

    pub fn load(path: &Path) -> Result<Vec<Instance>> {
        Self::parse_many(&std::fs::read_to_string(path)?)
    }
}
