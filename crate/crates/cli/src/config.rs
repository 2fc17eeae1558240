//! Experiment configuration: TOML sections addressed by dotted keys
//! (`model.N`, `sim.replicas`, `pde.M`), with command-line overrides.

use std::path::Path;

use abc_hydro::compare::CompareNorm;
use abc_hydro::oracle::SuiteConfig;
use abc_hydro::{ModelParams, ProfilePreset, RegimeSpec, ReservoirDensities};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub regime: RegimeSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "N")]
    pub n: usize,
    pub beta: f64,
    pub beta_tilde: f64,
    pub theta: f64,
    pub delta: f64,
    pub left: [f64; 3],
    pub right: [f64; 3],
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n: 64,
            beta: 1.0,
            beta_tilde: 1.0,
            theta: 1.5,
            delta: 0.5,
            left: [0.5, 0.3, 0.2],
            right: [0.2, 0.3, 0.5],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeSection {
    /// `dirichlet`, `b1`, `b2`, `b3`, or `robin`, which needs `kappa1` and `kappa2`.
    #[serde(rename = "override", skip_serializing_if = "Option::is_none")]
    pub override_: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    /// `linear` (between the reservoirs), `constant`, `step` or `bump`.
    pub profile: String,
    /// Constant value, or the base of `bump`. Defaults to the left reservoir.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<[f64; 3]>,
    pub u0: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            profile: "linear".into(),
            value: None,
            u0: 0.5,
            amplitude: 0.1,
            center: 0.5,
            width: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub replicas: usize,
    pub t_end: f64,
    /// Snapshot times; empty means `[t_end]`.
    pub snapshots: Vec<f64>,
    pub seed: u64,
    pub trajectories: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n: vec![64],
            replicas: 100,
            t_end: 0.1,
            snapshots: Vec::new(),
            seed: 1,
            trajectories: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    #[serde(rename = "M")]
    pub m: usize,
    pub safety: f64,
    /// Output times; empty means the simulation snapshot times.
    pub outputs: Vec<f64>,
    /// Also solve on the doubled grid and report residual ratios.
    pub refine: bool,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            m: 256,
            safety: 0.4,
            outputs: Vec::new(),
            refine: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// `L1`, `L2`, `block-L1` or `sup-pairing`.
    pub norm: String,
    pub bins: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            norm: "L1".into(),
            bins: 16,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub seed: u64,
    pub samples: usize,
    pub expansion_samples: usize,
    pub mc_sizes: Vec<usize>,
    pub mc_times: Vec<f64>,
    pub mc_replicas: usize,
    /// Swap the right boundary rates in the forward dynamics (negative control).
    pub fault: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        let d = SuiteConfig::new(ModelSection::default().params_unchecked(3));
        OracleSection {
            seed: d.seed,
            samples: d.samples,
            expansion_samples: d.expansion_samples,
            mc_sizes: d.mc_sizes,
            mc_times: d.mc_times,
            mc_replicas: d.mc_replicas,
            fault: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key varied across runs, e.g. `model.beta`.
    pub key: String,
    pub values: Vec<Value>,
    /// `simulate`, `solve`, `compare` or `oracle`.
    pub command: String,
}

impl ModelSection {
    fn params_unchecked(&self, n: usize) -> ModelParams {
        let dens = |v: [f64; 3]| ReservoirDensities {
            a: v[0],
            b: v[1],
            empty: v[2],
        };
        ModelParams {
            n,
            beta: self.beta,
            beta_tilde: self.beta_tilde,
            theta: self.theta,
            delta: self.delta,
            left: dens(self.left),
            right: dens(self.right),
        }
    }

    /// Validated parameters at lattice size `n`.
    pub fn params(&self, n: usize) -> Result<ModelParams, CliError> {
        let left = ReservoirDensities::from_array(self.left)
            .map_err(|e| CliError::Config(format!("model.left: {e}")))?;
        let right = ReservoirDensities::from_array(self.right)
            .map_err(|e| CliError::Config(format!("model.right: {e}")))?;
        ModelParams {
            left,
            right,
            ..self.params_unchecked(n)
        }
        .validate()
        .map_err(|e| CliError::Config(format!("model at N = {n}: {e}")))
    }
}

impl ExperimentConfig {
    /// Reads `path` (when given), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(Self, Table), CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let cfg = Self::from_table(&table)?;
        Ok((cfg, table))
    }

    pub fn from_table(table: &Table) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        self.model.params(self.model.n)?;
        let s = &self.sim;
        if s.n.is_empty() {
            return cfg("sim.N must list at least one lattice size".into());
        }
        if s.n.windows(2).any(|w| w[0] >= w[1]) {
            return cfg(format!("sim.N must be strictly ascending, got {:?}", s.n));
        }
        for &n in &s.n {
            self.model.params(n)?;
        }
        if s.replicas < 1 {
            return cfg("sim.replicas must be at least 1".into());
        }
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return cfg(format!("sim.t_end = {} must be finite and nonnegative", s.t_end));
        }
        for (name, times) in [
            ("sim.snapshots", &s.snapshots),
            ("pde.outputs", &self.pde.outputs),
        ] {
            if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= s.t_end)) {
                return cfg(format!("{name} entry {t} outside [0, sim.t_end = {}]", s.t_end));
            }
            if times.windows(2).any(|w| w[0] >= w[1]) {
                return cfg(format!("{name} must be strictly ascending"));
            }
        }
        if self.pde.m < 8 {
            return cfg(format!("pde.M = {} below the minimum of 8", self.pde.m));
        }
        if !(self.pde.safety > 0.0 && self.pde.safety <= 1.0) {
            return cfg(format!("pde.safety = {} outside (0, 1]", self.pde.safety));
        }
        self.preset()?
            .check()
            .map_err(|e| CliError::Config(format!("init: {e}")))?;
        self.regime()?;
        self.norm()?;
        if self.oracle.mc_sizes.iter().any(|n| !(3..=7).contains(n)) {
            return cfg(format!(
                "oracle.mc_sizes {:?} must lie in 3..=7",
                self.oracle.mc_sizes
            ));
        }
        if let Some(sw) = &self.sweep {
            if !["simulate", "solve", "compare", "oracle"].contains(&sw.command.as_str()) {
                return cfg(format!(
                    "sweep.command `{}` is not a runnable command",
                    sw.command
                ));
            }
            if sw.key.starts_with("sweep.") {
                return cfg("sweep.key cannot address the sweep section".into());
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<ProfilePreset, CliError> {
        let i = &self.init;
        let value = i.value.unwrap_or(self.model.left);
        Ok(match i.profile.as_str() {
            "linear" => ProfilePreset::Linear {
                left: self.model.left,
                right: self.model.right,
            },
            "constant" => ProfilePreset::Constant(value),
            "step" => ProfilePreset::Step {
                u0: i.u0,
                left: self.model.left,
                right: self.model.right,
            },
            "bump" => ProfilePreset::Bump {
                base: value,
                amplitude: i.amplitude,
                center: i.center,
                width: i.width,
            },
            other => {
                return Err(CliError::Config(format!(
                    "init.profile `{other}` is not one of linear, constant, step, bump"
                )))
            }
        })
    }

    /// Boundary regime of the PDE: the override when present, else classified.
    pub fn regime(&self) -> Result<RegimeSpec, CliError> {
        let r = &self.regime;
        let Some(name) = r.override_.as_deref() else {
            return Ok(self.model.params(self.model.n)?.regime().expect("validated"));
        };
        Ok(match name {
            "dirichlet" => RegimeSpec::dirichlet(),
            "b1" => RegimeSpec::robin(0.0, 0.0),
            "b2" => RegimeSpec::robin(self.model.beta_tilde / 2.0, 1.0),
            "b3" => RegimeSpec::robin(0.0, 1.0),
            "robin" => match (r.kappa1, r.kappa2) {
                (Some(k1), Some(k2)) if k1.is_finite() && k2.is_finite() => RegimeSpec::robin(k1, k2),
                _ => {
                    return Err(CliError::Config(
                        "regime.override = robin needs regime.kappa1 and regime.kappa2".into(),
                    ))
                }
            },
            other => {
                return Err(CliError::Config(format!(
                    "regime.override `{other}` is not one of dirichlet, b1, b2, b3, robin"
                )))
            }
        })
    }

    pub fn norm(&self) -> Result<CompareNorm, CliError> {
        Ok(match self.compare.norm.to_ascii_lowercase().as_str() {
            "l1" => CompareNorm::L1,
            "l2" => CompareNorm::L2,
            "block-l1" => {
                if self.compare.bins == 0 {
                    return Err(CliError::Config("compare.bins must be positive".into()));
                }
                CompareNorm::BlockL1 {
                    bins: self.compare.bins,
                }
            }
            "sup-pairing" => CompareNorm::SupPairing,
            other => {
                return Err(CliError::Config(format!(
                    "compare.norm `{other}` is not one of L1, L2, block-L1, sup-pairing"
                )))
            }
        })
    }

    /// Simulation snapshot times, defaulting to `[t_end]`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.sim.snapshots.is_empty() {
            vec![self.sim.t_end]
        } else {
            self.sim.snapshots.clone()
        }
    }

    pub fn pde_outputs(&self) -> Vec<f64> {
        if self.pde.outputs.is_empty() {
            self.snapshot_times()
        } else {
            self.pde.outputs.clone()
        }
    }

    pub fn suite(&self) -> Result<SuiteConfig, CliError> {
        let o = &self.oracle;
        Ok(SuiteConfig {
            params: self.model.params(self.model.n)?,
            seed: o.seed,
            samples: o.samples,
            expansion_samples: o.expansion_samples,
            mc_sizes: o.mc_sizes.clone(),
            mc_times: o.mc_times.clone(),
            mc_replicas: o.mc_replicas,
            fault: o.fault,
        })
    }
}

/// TOML literal when it parses as one, a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let (cfg, _) = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.regime().unwrap(), RegimeSpec::dirichlet());
        assert_eq!(cfg.snapshot_times(), vec![0.1]);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let sets = [
            "model.theta=2".to_string(),
            "model.delta=2".into(),
            "sim.N=[8, 16]".into(),
            "compare.norm=block-L1".into(),
        ];
        let (cfg, _) = ExperimentConfig::load(None, &sets).unwrap();
        assert_eq!(cfg.model.theta, 2.0);
        assert_eq!(cfg.sim.n, vec![8, 16]);
        assert_eq!(cfg.regime().unwrap().label(), "b1");
        assert_eq!(cfg.norm().unwrap(), CompareNorm::BlockL1 { bins: 16 });
    }

    #[test]
    fn rejections_name_the_constraint() {
        let err = |sets: &[&str]| {
            let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
            ExperimentConfig::load(None, &sets).unwrap_err().to_string()
        };
        assert!(err(&["model.theta=0.5"]).contains("theta >= delta and theta >= 1"));
        assert!(err(&["sim.N=[32, 16]"]).contains("ascending"));
        assert!(err(&["sim.replicas=0"]).contains("sim.replicas"));
        assert!(err(&["sim.snapshots=[0.5]"]).contains("sim.snapshots"));
        assert!(err(&["model.left=[0.5, 0.5, 0.5]"]).contains("model.left"));
        assert!(err(&["model.typo=1"]).contains("typo"));
        assert!(err(&["init.profile=wavy"]).contains("init.profile"));
    }
}
