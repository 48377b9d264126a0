//! The machine-readable proof report.

use serde::{Deserialize, Serialize};

use crate::config::ProofConfig;
use crate::error::Result;
use crate::primes::{stats_for_primes, window_claims, PrimeWindow};
use crate::rigor::Interval;
use crate::shearer::{primes_from_five, verify_chain, ChainCertificate};
use crate::stages::{
    induction_check, run_stage1, run_stage_asymptotic, BinRecord, Check, NamedValue, StageCertificate,
};

pub const REPORT_SCHEMA: &str = "coverify.proof-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proved,
    NotProved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub count: usize,
    pub failing: usize,
    pub worst: Option<BinRecord>,
    /// Every bin; left empty for the two-index grid.
    pub all: Vec<BinRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub holds: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<NamedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<BinSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub omega_rows: Vec<Interval>,
}

impl Section {
    fn new(name: &str, checks: Vec<Check>) -> Self {
        Section {
            name: name.to_string(),
            holds: checks.iter().all(|c| c.ok),
            checks,
            values: Vec::new(),
            bins: None,
            omega_rows: Vec::new(),
        }
    }

    fn from_stage(cert: &StageCertificate, keep_bins: bool) -> Self {
        let mut s = Section::new(&cert.name, cert.checks.clone());
        s.values = cert.values.clone();
        s.bins = Some(BinSummary {
            count: cert.bins.len(),
            failing: cert.bins.iter().filter(|b| !b.ok).count(),
            worst: cert.worst_bin().cloned(),
            all: if keep_bins { cert.bins.clone() } else { Vec::new() },
        });
        s.omega_rows = cert.omega_rows.clone();
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProofReport {
    pub schema: String,
    pub verdict: Verdict,
    pub config: ProofConfig,
    pub sections: Vec<Section>,
}

impl ProofReport {
    pub fn failures(&self) -> Vec<(&str, &Check)> {
        self.sections
            .iter()
            .flat_map(|s| s.checks.iter().filter(|c| !c.ok).map(move |c| (s.name.as_str(), c)))
            .collect()
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Recomputes every verdict from the stored checks.
    pub fn consistent(&self) -> bool {
        let sections_ok = self.sections.iter().all(|s| s.holds == s.checks.iter().all(|c| c.ok));
        let verdict = if self.sections.iter().all(|s| s.holds) {
            Verdict::Proved
        } else {
            Verdict::NotProved
        };
        self.schema == REPORT_SCHEMA && sections_ok && verdict == self.verdict
    }
}

fn chain_section(chain: &ChainCertificate, bound: u64) -> Section {
    let rho = chain.rho_final().unwrap_or(Interval::ZERO);
    let check = Check::holds(
        format!("Shearer chain holds for 4 < p < {bound}"),
        rho,
        Interval::ZERO,
        chain.holds() && rho.lo() > 0.0,
    );
    let mut s = Section::new("shearer", vec![check]);
    s.values = vec![NamedValue {
        label: format!("rho over {} primes", chain.primes.len()),
        value: rho,
    }];
    s
}

/// Sieved windows against the explicit estimates used for all later stages.
pub fn window_section(i: u32) -> Result<Section> {
    let w = PrimeWindow::new(i)?;
    let stats = stats_for_primes(&w.primes, w.lo, w.hi)?;
    let checks = window_claims(&stats, i)?
        .into_iter()
        .map(|c| Check::lt(format!("window {i}: {}", c.label), c.computed, c.bound))
        .collect();
    let mut s = Section::new(&format!("window {i}"), checks);
    s.values = vec![NamedValue {
        label: format!("prime count in [{}, {})", w.lo, w.hi),
        value: Interval::from_int(stats.count as i64),
    }];
    Ok(s)
}

/// Runs the full pipeline. Failed inequalities are recorded, not raised.
pub fn build_report(cfg: &ProofConfig) -> Result<ProofReport> {
    let primes = primes_from_five(cfg.stage1.prime_bound - 1)?;
    let chain = verify_chain(&primes)?;
    let mut sections = vec![chain_section(&chain, cfg.stage1.prime_bound)];
    sections.push(Section::from_stage(&run_stage1(cfg)?, true));
    for &i in &cfg.windows {
        sections.push(window_section(i)?);
    }
    sections.push(Section::from_stage(&run_stage_asymptotic(cfg)?, false));
    sections.push(Section::new("induction", induction_check(cfg)?.checks));
    let verdict = if sections.iter().all(|s| s.holds) {
        Verdict::Proved
    } else {
        Verdict::NotProved
    };
    Ok(ProofReport {
        schema: REPORT_SCHEMA.to_string(),
        verdict,
        config: cfg.clone(),
        sections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ProofConfig {
        let mut cfg = ProofConfig::default();
        cfg.windows.clear();
        cfg.bins = 10;
        cfg
    }

    #[test]
    fn report_is_deterministic_and_roundtrips() {
        let cfg = quick_config();
        let a = build_report(&cfg).unwrap();
        let b = build_report(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = ProofReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert!(a.consistent());
    }

    #[test]
    fn verdict_follows_checks() {
        let r = build_report(&quick_config()).unwrap();
        assert_eq!(r.verdict == Verdict::Proved, r.failures().is_empty());
        let mut tampered = r.clone();
        tampered.verdict = match r.verdict {
            Verdict::Proved => Verdict::NotProved,
            Verdict::NotProved => Verdict::Proved,
        };
        assert!(!tampered.consistent());
    }

    #[test]
    fn stage1_bins_kept_grid_summarized() {
        let r = build_report(&quick_config()).unwrap();
        let s1 = r.section("stage 1").unwrap().bins.as_ref().unwrap();
        assert_eq!(s1.all.len(), 10);
        let s2 = r.section("stages i >= 2").unwrap().bins.as_ref().unwrap();
        assert_eq!(s2.count, 55);
        assert!(s2.all.is_empty() && s2.worst.is_some());
    }
}
