//! Proof configuration: every printed constant, as an exact decimal string.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigor::Interval;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// A decimal literal, enclosed outward when read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dec(pub String);

impl Dec {
    pub fn get(&self) -> Result<Interval> {
        Interval::from_decimal(&self.0)
    }
}

impl From<&str> for Dec {
    fn from(s: &str) -> Self {
        Dec(s.to_string())
    }
}

impl fmt::Display for Dec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BopRule {
    /// `(K - i - j + 1)/K` of the operator-norm budget per bin.
    Strict,
    /// `(K - i - j + 2)/K`, what the bin lower edges actually allow.
    Edge,
}

impl BopRule {
    pub fn offset(self) -> u32 {
        match self {
            BopRule::Strict => 1,
            BopRule::Edge => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    pub prime_bound: u64,
    pub m: Dec,
    pub beta2: Dec,
    pub beta3: Dec,
    pub eg2: Dec,
    pub ebop2: Dec,
    pub split_g2: Dec,
    pub split_op: Dec,
    pub cap2: Dec,
    pub cap2_root: Dec,
    pub eps_sup: Dec,
    pub omega_table: Vec<Dec>,
    pub beta2_next: Dec,
    pub beta3_next: Dec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticConfig {
    pub p: Dec,
    pub m: Dec,
    pub prod: Dec,
    pub s2_coef: Dec,
    pub s3_coef: Dec,
    pub beta2_coef: Dec,
    pub beta3_coef: Dec,
    pub holder_c: Dec,
    pub e_script_s: Dec,
    pub eg3: Dec,
    pub eg2: Dec,
    pub ebop2: Dec,
    pub split_g3: Dec,
    pub split_g2: Dec,
    pub split_op: Dec,
    pub cap3: Dec,
    pub cap3_root: Dec,
    pub cap2: Dec,
    pub eps_max: Dec,
    pub omega_table: Vec<Dec>,
    pub e1_tau2: Dec,
    pub e1_tau3: Dec,
    pub ratio2: Dec,
    pub ratio3: Dec,
    pub bop_rule: BopRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InductionConfig {
    pub growth: Dec,
    pub ratio2_target: Dec,
    pub ratio3_target: Dec,
    pub perturbation: Dec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProofConfig {
    pub bins: u32,
    pub pi_good: Dec,
    pub omega_max: u32,
    pub exact_elementary_max: u32,
    pub row_slack: Dec,
    pub cap_rel_slack: Dec,
    pub windows: Vec<u32>,
    pub stage1: Stage1Config,
    pub asymptotic: AsymptoticConfig,
    pub induction: InductionConfig,
}

impl Default for ProofConfig {
    fn default() -> Self {
        ProofConfig::from_toml(DEFAULT_CONFIG).expect("bundled default config is valid")
    }
}

impl ProofConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProofConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every decimal parses and the structural parameters are in range.
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Validation("bins must be positive".into()));
        }
        if self.omega_max < 10 {
            return Err(Error::Validation("omega_max must be at least 10".into()));
        }
        let pg = self.pi_good.get()?;
        if !(pg.lo() > 0.0 && pg.hi() < 1.0) {
            return Err(Error::Validation(format!("pi_good {pg} outside (0, 1)")));
        }
        for (name, table) in [
            ("stage1", &self.stage1.omega_table),
            ("asymptotic", &self.asymptotic.omega_table),
        ] {
            if table.is_empty() || table.len() as u32 > self.omega_max {
                return Err(Error::Validation(format!(
                    "{name} omega table needs 1..={} rows",
                    self.omega_max
                )));
            }
            for d in table {
                d.get()?;
            }
        }
        if let Some(&w) = self.windows.iter().find(|&&w| !(2..=3).contains(&w)) {
            return Err(Error::Validation(format!("window {w} cannot be sieved directly")));
        }
        let s = &self.stage1;
        for d in [
            &s.m,
            &s.beta2,
            &s.beta3,
            &s.eg2,
            &s.ebop2,
            &s.split_g2,
            &s.split_op,
            &s.cap2,
            &s.cap2_root,
            &s.eps_sup,
            &s.beta2_next,
            &s.beta3_next,
        ] {
            d.get()?;
        }
        let a = &self.asymptotic;
        for d in [
            &a.p,
            &a.m,
            &a.prod,
            &a.s2_coef,
            &a.s3_coef,
            &a.beta2_coef,
            &a.beta3_coef,
            &a.holder_c,
            &a.e_script_s,
            &a.eg3,
            &a.eg2,
            &a.ebop2,
            &a.split_g3,
            &a.split_g2,
            &a.split_op,
            &a.cap3,
            &a.cap3_root,
            &a.cap2,
            &a.eps_max,
            &a.e1_tau2,
            &a.e1_tau3,
            &a.ratio2,
            &a.ratio3,
        ] {
            d.get()?;
        }
        let i = &self.induction;
        for d in [&i.growth, &i.ratio2_target, &i.ratio3_target, &i.perturbation] {
            d.get()?;
        }
        Ok(())
    }
}
