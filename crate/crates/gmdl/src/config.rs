//! JSON configuration files and measure files.

use std::path::Path;

use gmdl_core::ebayes::EpsilonTerm;
use gmdl_core::robust::{default_clean, Contamination, ContaminationKind, SweepConfig};
use gmdl_core::MixingMeasure;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.into(), source: e })
}

pub fn read_measure(path: &Path) -> CliResult<MixingMeasure> {
    read_json(path)
}

/// Either a default sampler by name or a fully specified one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContaminationSpec {
    Kind(ContaminationKind),
    Explicit(Contamination),
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        ContaminationSpec::Kind(ContaminationKind::PointMass)
    }
}

impl ContaminationSpec {
    pub fn resolve(&self, m: f64, d: usize) -> Contamination {
        match self {
            ContaminationSpec::Kind(k) => k.instantiate(m, d),
            ContaminationSpec::Explicit(c) => c.clone(),
        }
    }
}

fn default_budget() -> usize {
    400
}

fn default_gamma() -> f64 {
    0.05
}

fn default_delta() -> f64 {
    1.0
}

/// `sweep.json`: `{M, d, eta, epsilons, ns, replicates, seed, contamination}` plus optional knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    #[serde(rename = "M")]
    pub m: f64,
    pub d: usize,
    pub eta: f64,
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub contamination: ContaminationSpec,
    /// Largest number of covering candidates.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Clean prior; three atoms inside `[−M, M]` when absent.
    #[serde(default)]
    pub clean: Option<MixingMeasure>,
}

impl SweepFile {
    pub fn to_config(&self) -> CliResult<SweepConfig> {
        let clean = match &self.clean {
            Some(c) => c.clone(),
            None => default_clean(self.m)?,
        };
        let mut cfg = SweepConfig::new(clean, self.epsilons.clone(), self.ns.clone(), self.replicates, self.seed);
        cfg.contamination = self.contamination.resolve(self.m, self.d);
        cfg.gamma = self.gamma;
        cfg.delta = self.delta;
        Ok(cfg)
    }
}

/// `eb.json`: the sweep schema plus the ε-term rule of the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretFile {
    #[serde(flatten)]
    pub sweep: SweepFile,
    #[serde(default)]
    pub epsilon_term: EpsilonTerm,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contamination_accepts_names_and_objects() {
        let named: SweepFile = serde_json::from_str(
            r#"{"M":1,"d":1,"eta":0.1,"epsilons":[0],"ns":[10],"replicates":1,"seed":1,"contamination":"uniform"}"#,
        )
        .unwrap();
        assert_eq!(named.contamination.resolve(1.0, 1), Contamination::Uniform { lo: -5.0, hi: 5.0 });
        let explicit: SweepFile = serde_json::from_str(
            r#"{"M":1,"d":1,"eta":0.1,"epsilons":[0],"ns":[10],"replicates":1,"seed":1,
                "contamination":{"kind":"point_mass","at":[4.0]}}"#,
        )
        .unwrap();
        assert_eq!(explicit.contamination.resolve(1.0, 1), Contamination::PointMass { at: vec![4.0] });
        assert_eq!(explicit.budget, 400);
    }
}
