//! The staged argument: bins, the `‖·‖_{∞,ω}` optimization, ω-tables, bias
//! updates and the induction closure.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::config::ProofConfig;
use crate::error::{Error, Result};
use crate::locallemma::{expectation_bounds, WindowMoments};
use crate::primes::{tau_k, window_stats, PrimeWindow};
use crate::rigor::{geometric_tail, Interval};
use crate::shearer::{bias_stat, primes_from_five, verify_chain, ChainVerdict};

// ---------------------------------------------------------------------------
// checks

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `computed.hi < bound.lo`
    Lt,
    /// `computed.hi <= bound.lo + slack`
    Le,
    /// `|computed - bound| <= slack · |bound|` at both ends
    Near,
    /// Outcome decided by the producer; see the label.
    Holds,
}

/// One certified comparison between a computed enclosure and a printed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub computed: Interval,
    pub bound: Interval,
    pub relation: Relation,
    pub slack: f64,
    pub ok: bool,
}

impl Check {
    pub fn lt(label: impl Into<String>, computed: Interval, bound: Interval) -> Self {
        Check {
            label: label.into(),
            computed,
            bound,
            relation: Relation::Lt,
            slack: 0.0,
            ok: computed.hi() < bound.lo(),
        }
    }

    pub fn le(label: impl Into<String>, computed: Interval, bound: Interval) -> Self {
        Self::le_slack(label, computed, bound, 0.0)
    }

    pub fn le_slack(label: impl Into<String>, computed: Interval, bound: Interval, slack: f64) -> Self {
        Check {
            label: label.into(),
            computed,
            bound,
            relation: Relation::Le,
            slack,
            ok: computed.hi() <= bound.lo() + slack,
        }
    }

    pub fn near(label: impl Into<String>, computed: Interval, bound: Interval, rel: f64) -> Self {
        let tol = rel * bound.abs().hi();
        Check {
            label: label.into(),
            computed,
            bound,
            relation: Relation::Near,
            slack: rel,
            ok: computed.hi() <= bound.hi() + tol && computed.lo() >= bound.lo() - tol,
        }
    }

    pub fn holds(label: impl Into<String>, computed: Interval, bound: Interval, ok: bool) -> Self {
        Check {
            label: label.into(),
            computed,
            bound,
            relation: Relation::Holds,
            slack: 0.0,
            ok,
        }
    }
}

/// The bound to carry forward: the printed value when the computation
/// certifies it, otherwise the computed upper end.
pub fn carried(computed: &Interval, declared: &Interval) -> Interval {
    if computed.hi() <= declared.hi() {
        *declared
    } else {
        Interval::point(computed.hi())
    }
}

fn upper_max(a: &Interval, b: &Interval) -> Interval {
    Interval::point(a.hi().max(b.hi()))
}

// ---------------------------------------------------------------------------
// the ‖·‖_{∞,ω} optimization

fn h(x: &Interval) -> Result<Interval> {
    x.div(&(Interval::ONE - *x))
}

fn phi2(x: f64) -> Interval {
    let x = Interval::point(x);
    x * (Interval::ONE - x) * (Interval::ONE - x)
}

fn third() -> Interval {
    Interval::from_ratio(1, 3).expect("nonzero denominator")
}

/// Certified lower bound on the root of `c(1-c)² = v` in `[0, 1/3]`.
fn low_inverse_lo(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let x = newton_low_root(v);
    let mut cand = x;
    for k in 0..40 {
        if cand >= 0.0 && phi2(cand).hi() <= v {
            return cand;
        }
        cand = x - x.abs() * f64::EPSILON * 2f64.powi(k) - f64::MIN_POSITIVE;
    }
    let (mut lo, mut hi) = (0.0, third().hi());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi2(mid).hi() <= v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Certified upper bound on the root of `c(1-c)² = v` in `[0, 1/3]`.
fn low_inverse_hi(v: f64) -> f64 {
    let top = third().hi();
    if v >= phi2(third().lo()).lo() {
        return top;
    }
    let x = newton_low_root(v.max(0.0));
    let mut cand = x;
    for k in 0..40 {
        if cand <= top && phi2(cand).lo() >= v {
            return cand;
        }
        cand = x + x.abs() * f64::EPSILON * 2f64.powi(k) + f64::MIN_POSITIVE;
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi2(mid).lo() >= v {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn newton_low_root(v: f64) -> f64 {
    let mut x = v;
    for _ in 0..100 {
        let f = x * (1.0 - x) * (1.0 - x) - v;
        let fp = (1.0 - x) * (1.0 - 3.0 * x);
        if fp <= 0.0 {
            break;
        }
        let step = f / fp;
        x = (x - step).clamp(0.0, 1.0 / 3.0);
        if step.abs() <= 1e-17 * x.max(1e-300) {
            break;
        }
    }
    x
}

#[derive(PartialEq)]
struct Boxed {
    ub: f64,
    d1: f64,
    d2: f64,
}

impl Eq for Boxed {}

impl PartialOrd for Boxed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Boxed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub.total_cmp(&other.ub)
    }
}

const BB_TOL: f64 = 1e-13;
const BB_MAX_BOXES: usize = 20_000;
const MAX_PAIR_COUNT: u64 = 100_000;

/// Maximizer of `Σ_{top ω} g/(1-g)` over `g ≥ 0`, `‖g‖_p ≤ B`, for one `B`.
///
/// The optimum takes at most two nonzero values. Single-valued candidates
/// are closed form; each two-valued family `(a copies of c, b copies of d)`
/// is bounded by branch and bound on `d` along the stationarity curve:
/// `c(1-c)² = d(1-d)²`, `c ≤ 1/3 ≤ d` for p = 2, and `c = 1 - d` for p = 3.
#[derive(Clone, Debug)]
pub struct LinfOmegaSolver {
    p: u32,
    b: Interval,
    /// `(a, b, value)` for every two-valued family that fits the budget.
    pairs: Vec<(u32, u32, Interval)>,
}

impl LinfOmegaSolver {
    pub fn new(b: &Interval, p: u32) -> Result<Self> {
        if p != 2 && p != 3 {
            return Err(Error::Domain(format!("p must be 2 or 3, got {p}")));
        }
        if !(b.lo() > 0.0 && b.hi() < 1.0) {
            return Err(Error::Domain(format!("budget {b} must lie in (0, 1)")));
        }
        let mut s = LinfOmegaSolver {
            p,
            b: *b,
            pairs: Vec::new(),
        };
        let (d_lo, _) = s.d_range();
        if b.hi() > d_lo {
            let bp = Interval::point(b.hi()).pow_int(p);
            let b_max = (bp.div(&Interval::point(d_lo).pow_int(p))?).hi().floor() as u64;
            let c_min = s.c_enclosure(b.hi())?.0;
            let a_max = if c_min > 0.0 {
                (bp.div(&Interval::point(c_min).pow_int(p))?).hi().floor() as u64
            } else {
                u64::MAX
            };
            if a_max.saturating_mul(b_max) > MAX_PAIR_COUNT {
                return Err(Error::Resource(format!(
                    "{a_max} x {b_max} candidate families for budget {b}"
                )));
            }
            for bb in 1..=b_max as u32 {
                for a in 1..=a_max as u32 {
                    let v = s.pair_value(a, bb)?;
                    s.pairs.push((a, bb, v));
                }
            }
        }
        Ok(s)
    }

    /// Interval of the larger value `d` along the stationarity curve.
    fn d_range(&self) -> (f64, f64) {
        let lo = match self.p {
            2 => third().lo(),
            _ => 0.5,
        };
        (lo, self.b.hi())
    }

    /// Enclosure of the smaller value `c` paired with `d`.
    fn c_enclosure(&self, d: f64) -> Result<(f64, f64)> {
        match self.p {
            2 => {
                let v = phi2(d);
                Ok((low_inverse_lo(v.lo()), low_inverse_hi(v.hi())))
            }
            _ => {
                let c = Interval::ONE - Interval::point(d);
                Ok((c.lo(), c.hi()))
            }
        }
    }

    fn pair_value(&self, a: u32, b: u32) -> Result<Interval> {
        let p = self.p;
        let (ai, bi) = (Interval::from_int(a), Interval::from_int(b));
        let budget_hi = Interval::point(self.b.hi()).pow_int(p).hi();
        let budget_lo = Interval::point(self.b.lo()).pow_int(p).lo();
        let box_ub = |d1: f64, d2: f64| -> Result<Option<f64>> {
            let (_, c_at_d1) = self.c_enclosure(d1)?;
            let (c_at_d2, _) = self.c_enclosure(d2)?;
            let need = ai * Interval::point(c_at_d2).pow_int(p) + bi * Interval::point(d1).pow_int(p);
            if need.lo() > budget_hi {
                return Ok(None);
            }
            let ub = ai * h(&Interval::point(c_at_d1))? + bi * h(&Interval::point(d2))?;
            Ok(Some(ub.hi()))
        };
        let feasible_value = |d: f64| -> Result<Option<f64>> {
            let (c_lo, c_hi) = self.c_enclosure(d)?;
            let used = ai * Interval::point(c_hi).pow_int(p) + bi * Interval::point(d).pow_int(p);
            if used.hi() > budget_lo {
                return Ok(None);
            }
            Ok(Some(
                (ai * h(&Interval::point(c_lo))? + bi * h(&Interval::point(d))?).lo(),
            ))
        };

        let (d_lo, d_hi) = self.d_range();
        let mut best = 0.0f64;
        let mut heap = BinaryHeap::new();
        if let Some(ub) = box_ub(d_lo, d_hi)? {
            heap.push(Boxed { ub, d1: d_lo, d2: d_hi });
        }
        let mut processed = 0;
        while let Some(top) = heap.peek() {
            if top.ub - best <= BB_TOL || processed >= BB_MAX_BOXES {
                break;
            }
            let Boxed { d1, d2, .. } = heap.pop().expect("peeked");
            processed += 1;
            let mid = 0.5 * (d1 + d2);
            if mid <= d1 || mid >= d2 {
                heap.push(Boxed {
                    ub: box_ub(d1, d2)?.unwrap_or(best),
                    d1,
                    d2,
                });
                break;
            }
            if let Some(v) = feasible_value(mid)? {
                best = best.max(v);
            }
            for (x1, x2) in [(d1, mid), (mid, d2)] {
                if let Some(ub) = box_ub(x1, x2)? {
                    if ub > best {
                        heap.push(Boxed { ub, d1: x1, d2: x2 });
                    }
                }
            }
        }
        let ub = heap.peek().map_or(best, |t| t.ub.max(best));
        Interval::new(best, ub)
    }

    /// `k` equal coordinates `B / k^{1/p}`.
    pub fn equal_value(&self, k: u32) -> Result<Interval> {
        let c = self.b.div(&Interval::from_int(k).root(self.p)?)?;
        Ok(Interval::from_int(k) * h(&c)?)
    }

    /// Enclosures of the optimum for `ω = 1..=omega_max`.
    pub fn rows(&self, omega_max: u32) -> Result<Vec<Interval>> {
        let mut out = Vec::with_capacity(omega_max as usize);
        let mut best = Interval::ZERO;
        for w in 1..=omega_max {
            best = best.max(&self.equal_value(w)?);
            for (a, b, v) in &self.pairs {
                if a + b == w {
                    best = best.max(v);
                }
            }
            out.push(best);
        }
        Ok(out)
    }

    pub fn row(&self, omega: u32) -> Result<Interval> {
        if omega == 0 {
            return Err(Error::Domain("omega must be at least 1".into()));
        }
        Ok(self.rows(omega)?[omega as usize - 1])
    }

    pub fn pair_families(&self) -> &[(u32, u32, Interval)] {
        &self.pairs
    }
}

/// Upper bound for `max Σ_{top ω} g/(1-g)` subject to `‖g‖_p ≤ B`.
pub fn solve_linf_omega(b: &Interval, p: u32, omega: u32) -> Result<Interval> {
    LinfOmegaSolver::new(b, p)?.row(omega)
}

// ---------------------------------------------------------------------------
// ω-tables and bias updates

/// Bounds for `‖x^fix‖_{∞,ω}`: explicit rows, then a Hölder bound
/// `ω^{1-1/p} B/(1-B) + √ω ε` beyond them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaTable {
    pub p: u32,
    pub rows: Vec<Interval>,
    pub tail_b: Interval,
    pub tail_eps: Interval,
}

impl OmegaTable {
    pub fn value(&self, omega: u32) -> Result<Interval> {
        match omega {
            0 => Err(Error::Domain("omega must be at least 1".into())),
            w if (w as usize) <= self.rows.len() => Ok(self.rows[w as usize - 1]),
            w => self.holder_bound(w),
        }
    }

    pub fn holder_bound(&self, omega: u32) -> Result<Interval> {
        let w = Interval::from_int(omega);
        let lead = match self.p {
            2 => w.sqrt()?,
            _ => w.cbrt().pow_int(2),
        };
        Ok(lead * h(&self.tail_b)? + w.sqrt()? * self.tail_eps)
    }
}

/// `e_j(τ)` for `j <= exact.len()`, then `e_1^j / j!`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementaryBounds {
    pub exact: Vec<Interval>,
    pub e1: Interval,
}

impl ElementaryBounds {
    pub fn factorial_only(e1: Interval) -> Self {
        ElementaryBounds { exact: Vec::new(), e1 }
    }

    /// Elementary symmetric functions of `values` up to degree `max_j`.
    pub fn from_values(values: &[Interval], max_j: usize) -> Self {
        let mut e = vec![Interval::ZERO; max_j + 1];
        e[0] = Interval::ONE;
        let mut e1 = Interval::ZERO;
        for v in values {
            e1 = e1 + *v;
            for j in (1..=max_j).rev() {
                e[j] = e[j] + *v * e[j - 1];
            }
        }
        ElementaryBounds {
            exact: e[1..].to_vec(),
            e1,
        }
    }
}

/// `(1 + Σ_ω exp(T(ω)) E_ω) / π_good`, the factor by which `β_k^k` may grow.
pub fn growth_factor(table: &OmegaTable, e: &ElementaryBounds, pi_good: &Interval) -> Result<Interval> {
    let n = table.rows.len() as u32;
    let mut sum = Interval::ONE;
    let mut f = Interval::ONE;
    for w in 1..=n {
        f = f * e.e1.div_int(w as i64)?;
        let ew = e.exact.get(w as usize - 1).copied().unwrap_or(f);
        sum = sum + table.value(w)?.exp()? * ew;
    }
    let first = n + 1;
    let f_first = f * e.e1.div_int(first as i64)?;
    let t = table.holder_bound(first)?.exp()? * f_first;
    let step = table.holder_bound(first + 1)? - table.holder_bound(first)?;
    let ratio = step.exp()? * e.e1.div_int(first as i64 + 1)?;
    if ratio.hi() >= 1.0 {
        return Err(Error::TailDivergence(format!("tail ratio {ratio} at omega = {first}")));
    }
    sum = sum + geometric_tail(&ratio, &t)?;
    sum.div(pi_good)
}

/// New bound for `β_k` from the current one.
pub fn update_bias(
    beta: &Interval,
    pi_good: &Interval,
    table: &OmegaTable,
    e: &ElementaryBounds,
    k: u32,
) -> Result<Interval> {
    (beta.pow_int(k) * growth_factor(table, e, pi_good)?).root(k)
}

// ---------------------------------------------------------------------------
// certificates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRecord {
    /// `ℓ³` bin index; 0 in the single-index stage.
    pub i: u32,
    pub j: u32,
    /// Bound for `‖G(0)‖_∞` used in the denominators.
    pub g_inf: Interval,
    pub g2: Interval,
    pub b_op: Interval,
    pub b_20: Interval,
    pub theta: Interval,
    pub condition: Interval,
    pub eps: Interval,
    pub ok: bool,
}

fn bin_record(i: u32, j: u32, g_inf: Interval, g2: Interval, b_op: Interval, m: &Interval) -> Result<BinRecord> {
    let one_minus = Interval::ONE - g_inf;
    let b_20 = g2.div(&one_minus)?;
    let theta = b_op.div(&one_minus)?;
    if theta.hi() >= 1.0 {
        return Err(Error::verification(
            format!("bin ({i}, {j})"),
            format!("theta = {theta} is not below 1"),
        ));
    }
    let condition = b_20.div(&(Interval::ONE - theta))?;
    let eps = (b_20 * theta).div(&(Interval::ONE - theta))?;
    Ok(BinRecord {
        i,
        j,
        g_inf,
        g2,
        b_op,
        b_20,
        theta,
        condition,
        eps,
        ok: condition.hi() < m.lo(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub label: String,
    pub value: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub name: String,
    pub m: Interval,
    pub bins: Vec<BinRecord>,
    pub eps_sup: Interval,
    /// Optimized rows for `ω = 1..=omega_max`, maximized over bins.
    pub omega_rows: Vec<Interval>,
    /// Table carried into the bias update.
    pub omega_table: OmegaTable,
    /// Updated `(β_2, β_3)` for the next stage, when this stage computes them.
    pub beta_next: Option<(Interval, Interval)>,
    pub values: Vec<NamedValue>,
    pub checks: Vec<Check>,
}

impl StageCertificate {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.ok).collect()
    }

    pub fn worst_bin(&self) -> Option<&BinRecord> {
        self.bins
            .iter()
            .max_by(|a, b| a.condition.hi().total_cmp(&b.condition.hi()))
    }

    pub fn value(&self, label: &str) -> Option<Interval> {
        self.values.iter().find(|v| v.label == label).map(|v| v.value)
    }

    pub fn check(&self, label: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.label == label)
    }
}

fn push_value(values: &mut Vec<NamedValue>, label: &str, value: Interval) {
    values.push(NamedValue {
        label: label.to_string(),
        value,
    });
}

fn declared_rows(
    printed: &[crate::config::Dec],
    omega_max: u32,
    formula: impl Fn(u32) -> Result<Interval>,
) -> Result<Vec<Interval>> {
    (1..=omega_max)
        .map(|w| match printed.get(w as usize - 1) {
            Some(d) => d.get(),
            None => formula(w),
        })
        .collect()
}

/// Rows `1..=printed` must not exceed the printed values (within slack); later
/// rows must not exceed the printed closed-form row formula.
fn table_checks(checks: &mut Vec<Check>, computed: &[Interval], declared: &[Interval], printed: usize, slack: f64) {
    for w in 0..printed.min(computed.len()) {
        checks.push(Check::le_slack(
            format!("omega table row {}", w + 1),
            computed[w],
            declared[w],
            slack,
        ));
    }
    if computed.len() > printed {
        let worst = (printed..computed.len())
            .max_by(|&a, &b| (computed[a].hi() - declared[a].lo()).total_cmp(&(computed[b].hi() - declared[b].lo())))
            .expect("nonempty");
        let ok = (printed..computed.len()).all(|w| computed[w].hi() <= declared[w].lo());
        checks.push(Check::holds(
            format!(
                "omega table rows {}..={} within the closed-form row formula (worst at {})",
                printed + 1,
                computed.len(),
                worst + 1
            ),
            computed[worst],
            declared[worst],
            ok,
        ));
    }
}

fn carried_rows(computed: &[Interval], declared: &[Interval]) -> Vec<Interval> {
    computed.iter().zip(declared).map(|(c, d)| carried(c, d)).collect()
}

/// Stage 1: Shearer certificate on `4 < p < 222`, averaged bounds over
/// `[222, 4000)`, 1-D bins and the update to `β_k(2)`.
pub fn run_stage1(cfg: &ProofConfig) -> Result<StageCertificate> {
    let s = &cfg.stage1;
    let k_bins = cfg.bins;
    let pi_good = cfg.pi_good.get()?;
    let m = s.m.get()?;
    let row_slack = cfg.row_slack.get()?.hi();
    let rel = cfg.cap_rel_slack.get()?.hi();
    let mut checks = Vec::new();
    let mut values = Vec::new();

    let primes = primes_from_five(s.prime_bound - 1)?;
    let chain = verify_chain(&primes)?;
    let rho = chain.rho_final().unwrap_or(Interval::ZERO);
    checks.push(Check::holds(
        format!("Shearer chain holds for 4 < p < {}", s.prime_bound),
        rho,
        Interval::ZERO,
        chain.verdict == ChainVerdict::Holds && rho.lo() > 0.0,
    ));
    push_value(&mut values, "rho(primes below stage-1 bound)", rho);

    let beta2_decl = s.beta2.get()?;
    let beta3_decl = s.beta3.get()?;
    let (beta2, beta3) = if chain.holds() {
        (bias_stat(&primes, 2)?.beta_bound, bias_stat(&primes, 3)?.beta_bound)
    } else {
        (Interval::point(f64::MAX), Interval::point(f64::MAX))
    };
    checks.push(Check::le("beta_2(1)", beta2, beta2_decl));
    checks.push(Check::le("beta_3(1)", beta3, beta3_decl));
    let beta2_c = carried(&beta2, &beta2_decl);
    let beta3_c = carried(&beta3, &beta3_decl);

    let stats = window_stats(1)?;
    let p1 = Interval::from_int(s.prime_bound);
    let moments = WindowMoments::from_stats(&stats, p1);
    let ex = expectation_bounds(&moments, &beta2_c, &beta3_c, &m)?;
    push_value(&mut values, "holder C (stage 1)", ex.holder_c);
    push_value(&mut values, "E S (stage 1)", ex.e_script_s);
    push_value(&mut values, "E B_op^2 with (1 + 1/P) factor (stage 1)", ex.ebop2_coarse);
    let eg2_decl = s.eg2.get()?;
    let ebop2_decl = s.ebop2.get()?;
    checks.push(Check::le("E ||G(0)||_2^2 (stage 1)", ex.eg2, eg2_decl));
    checks.push(Check::le("E B_op(M)^2 (stage 1)", ex.ebop2, ebop2_decl));
    let eg2 = carried(&ex.eg2, &eg2_decl);
    let ebop2 = carried(&ex.ebop2, &ebop2_decl);

    let scale = Interval::ONE - pi_good;
    let cap2 = eg2.div(&(s.split_g2.get()? * scale))?;
    let capop = ebop2.div(&(s.split_op.get()? * scale))?;
    checks.push(Check::near("l2 cap 1/(C_2 (1 - pi_good))", cap2, s.cap2.get()?, rel));
    checks.push(Check::near(
        "square root of the l2 cap",
        cap2.sqrt()?,
        s.cap2_root.get()?,
        rel,
    ));

    let kk = Interval::from_int(k_bins);
    let mut bins = Vec::with_capacity(k_bins as usize);
    for j in 1..=k_bins {
        let b2 = (Interval::from_int(j).div(&kk)? * cap2).sqrt()?;
        let bop = (Interval::from_int(k_bins - j + 1).div(&kk)? * capop).sqrt()?;
        bins.push(bin_record(0, j, b2, b2, bop, &m)?);
    }
    let worst = bins
        .iter()
        .max_by(|a, b| a.condition.hi().total_cmp(&b.condition.hi()))
        .expect("bins");
    checks.push(Check::holds(
        format!("all {} bins: B_20/(1 - theta) < M (worst bin j = {})", k_bins, worst.j),
        worst.condition,
        m,
        bins.iter().all(|b| b.ok),
    ));
    let eps_sup = bins.iter().fold(Interval::ZERO, |a, b| a.max(&b.eps));
    let eps_decl = s.eps_sup.get()?;
    checks.push(Check::le_slack("sup_j ||eps(j)||_2", eps_sup, eps_decl, row_slack));

    let omega_max = cfg.omega_max;
    let mut omega_rows = vec![Interval::ZERO; omega_max as usize];
    for bin in &bins {
        let rows = LinfOmegaSolver::new(&bin.g2, 2)?.rows(omega_max)?;
        for (w, r) in rows.iter().enumerate() {
            let with_eps = *r + Interval::from_int(w as i64 + 1).sqrt()? * bin.eps;
            omega_rows[w] = omega_rows[w].max(&with_eps);
        }
    }
    let b_decl = s.cap2_root.get()?;
    let declared = declared_rows(&s.omega_table, omega_max, |w| {
        let sw = Interval::from_int(w).sqrt()?;
        Ok((Interval::from_int(w) * b_decl).div(&(sw - b_decl))? + eps_decl * sw)
    })?;
    table_checks(&mut checks, &omega_rows, &declared, s.omega_table.len(), row_slack);
    let b_max = bins.iter().fold(Interval::ZERO, |a, b| a.max(&b.g2));
    let omega_table = OmegaTable {
        p: 2,
        rows: carried_rows(&omega_rows, &declared),
        tail_b: upper_max(&b_max, &b_decl),
        tail_eps: upper_max(&eps_sup, &eps_decl),
    };

    let window = PrimeWindow::new(1)?;
    let j_exact = cfg.exact_elementary_max as usize;
    let mut next_betas = Vec::with_capacity(2);
    for (k, beta, decl, label) in [
        (2u32, beta2_c, s.beta2_next.get()?, "beta_2(2)"),
        (3, beta3_c, s.beta3_next.get()?, "beta_3(2)"),
    ] {
        let taus = window.primes.iter().map(|&p| tau_k(p, k)).collect::<Result<Vec<_>>>()?;
        let e = ElementaryBounds::from_values(&taus, j_exact);
        push_value(&mut values, &format!("e_1(tau_{k}) over the stage-1 window"), e.e1);
        let next = update_bias(&beta, &pi_good, &omega_table, &e, k)?;
        push_value(&mut values, label, next);
        checks.push(Check::lt(label, next, decl));
        next_betas.push(next);
    }

    Ok(StageCertificate {
        name: "stage 1".into(),
        m,
        bins,
        eps_sup,
        omega_rows,
        omega_table,
        beta_next: Some((next_betas[0], next_betas[1])),
        values,
        checks,
    })
}

/// `P log P` at the asymptotic base point and the inductive `β` bounds there.
fn asymptotic_betas(cfg: &ProofConfig) -> Result<(Interval, Interval, Interval)> {
    let a = &cfg.asymptotic;
    let p = a.p.get()?;
    let l = p * p.ln()?;
    let beta2 = a.beta2_coef.get()? * l.sqrt()?;
    let beta3 = a.beta3_coef.get()? * (Interval::from_int(2) * p * l).cbrt();
    Ok((l, beta2, beta3))
}

/// Every stage `i ≥ 2` at once, from the window constants valid for all of
/// them and the inductive bounds on `β_k(i)`.
pub fn run_stage_asymptotic(cfg: &ProofConfig) -> Result<StageCertificate> {
    let a = &cfg.asymptotic;
    let k_bins = cfg.bins;
    let pi_good = cfg.pi_good.get()?;
    let m = a.m.get()?;
    let p = a.p.get()?;
    let row_slack = cfg.row_slack.get()?.hi();
    let rel = cfg.cap_rel_slack.get()?.hi();
    let mut checks = Vec::new();
    let mut values = Vec::new();

    let (_, beta2, beta3) = asymptotic_betas(cfg)?;
    push_value(&mut values, "beta_2 at the base point", beta2);
    push_value(&mut values, "beta_3 at the base point", beta3);
    let moments = WindowMoments::symbolic(p, a.prod.get()?, a.s2_coef.get()?, a.s3_coef.get()?)?;
    let ex = expectation_bounds(&moments, &beta2, &beta3, &m)?;
    push_value(&mut values, "E S with (1 + 1/P) factor", ex.e_script_s_coarse);
    checks.push(Check::le("holder constant C", ex.holder_c, a.holder_c.get()?));
    checks.push(Check::le("E S", ex.e_script_s, a.e_script_s.get()?));
    let eg3_decl = a.eg3.get()?;
    let eg2_decl = a.eg2.get()?;
    let ebop2_decl = a.ebop2.get()?;
    checks.push(Check::lt("E ||G(0)||_3^3", ex.eg3, eg3_decl));
    checks.push(Check::lt("E ||G(0)||_2^2", ex.eg2, eg2_decl));
    checks.push(Check::lt("E B_op(M)^2", ex.ebop2, ebop2_decl));
    let eg3 = carried(&ex.eg3, &eg3_decl);
    let eg2 = carried(&ex.eg2, &eg2_decl);
    let ebop2 = carried(&ex.ebop2, &ebop2_decl);

    let scale = Interval::ONE - pi_good;
    let cap3 = eg3.div(&(a.split_g3.get()? * scale))?;
    let cap2 = eg2.div(&(a.split_g2.get()? * scale))?;
    let capop = ebop2.div(&(a.split_op.get()? * scale))?;
    checks.push(Check::near("l3 cap 1/(C_3 (1 - pi_good))", cap3, a.cap3.get()?, rel));
    checks.push(Check::near(
        "cube root of the l3 cap",
        cap3.cbrt(),
        a.cap3_root.get()?,
        rel,
    ));
    checks.push(Check::near("l2 cap 1/(C_2 (1 - pi_good))", cap2, a.cap2.get()?, rel));

    let kk = Interval::from_int(k_bins);
    let off = a.bop_rule.offset();
    let mut bins = Vec::new();
    let mut g3s = Vec::with_capacity(k_bins as usize);
    let mut eps_by_i = vec![Interval::ZERO; k_bins as usize];
    for i in 1..=k_bins {
        let g3 = (Interval::from_int(i).div(&kk)? * cap3).cbrt();
        g3s.push(g3);
        for j in 1..=(k_bins + 1 - i) {
            let g2 = (Interval::from_int(j).div(&kk)? * cap2).sqrt()?;
            let share = Interval::from_int(k_bins + off - i - j).div(&kk)?;
            let bop = (share * capop).sqrt()?;
            let rec = bin_record(i, j, g3, g2, bop, &m)?;
            eps_by_i[i as usize - 1] = eps_by_i[i as usize - 1].max(&rec.eps);
            bins.push(rec);
        }
    }
    let worst = bins
        .iter()
        .max_by(|x, y| x.condition.hi().total_cmp(&y.condition.hi()))
        .expect("bins");
    checks.push(Check::holds(
        format!(
            "all {} bins: B_20/(1 - theta) < M (worst bin (i, j) = ({}, {}))",
            bins.len(),
            worst.i,
            worst.j
        ),
        worst.condition,
        m,
        bins.iter().all(|b| b.ok),
    ));
    let eps_sup = eps_by_i.iter().fold(Interval::ZERO, |x, y| x.max(y));
    let eps_decl = a.eps_max.get()?;
    checks.push(Check::le_slack(
        "max_{i,j} ||eps(i,j)||_2",
        eps_sup,
        eps_decl,
        row_slack,
    ));

    let omega_max = cfg.omega_max;
    let mut omega_rows = vec![Interval::ZERO; omega_max as usize];
    for (g3, eps) in g3s.iter().zip(&eps_by_i) {
        let rows = LinfOmegaSolver::new(g3, 3)?.rows(omega_max)?;
        for (w, r) in rows.iter().enumerate() {
            let with_eps = *r + Interval::from_int(w as i64 + 1).sqrt()? * *eps;
            omega_rows[w] = omega_rows[w].max(&with_eps);
        }
    }
    let b_decl = a.cap3_root.get()?;
    let declared = declared_rows(&a.omega_table, omega_max, |w| {
        let wi = Interval::from_int(w);
        Ok((b_decl * wi).div(&(wi.cbrt() - b_decl))? + eps_decl * wi.sqrt()?)
    })?;
    table_checks(&mut checks, &omega_rows, &declared, a.omega_table.len(), row_slack);
    let g_max = g3s.iter().fold(Interval::ZERO, |x, y| x.max(y));
    let omega_table = OmegaTable {
        p: 3,
        rows: carried_rows(&omega_rows, &declared),
        tail_b: upper_max(&g_max, &b_decl),
        tail_eps: upper_max(&eps_sup, &eps_decl),
    };

    let ln15 = Interval::from_ratio(3, 2)?.ln()?;
    let e1_2_claim = Interval::from_int(3) * ln15 + Interval::from_decimal("0.00334")?;
    let e1_3_claim = Interval::from_int(7) * ln15 + Interval::from_decimal("0.00779")?;
    let e1_2 = a.e1_tau2.get()?;
    let e1_3 = a.e1_tau3.get()?;
    checks.push(Check::le("e_1(tau_2) bound 3 log 1.5 + 0.00334", e1_2_claim, e1_2));
    checks.push(Check::le("e_1(tau_3) bound 7 log 1.5 + 0.00779", e1_3_claim, e1_3));
    let e_2 = ElementaryBounds::factorial_only(upper_max(&e1_2_claim, &e1_2));
    let e_3 = ElementaryBounds::factorial_only(upper_max(&e1_3_claim, &e1_3));
    let r2 = growth_factor(&omega_table, &e_2, &pi_good)?;
    let r3 = growth_factor(&omega_table, &e_3, &pi_good)?;
    // the same ratios if the printed rows were taken as given
    let printed_table = OmegaTable {
        p: 3,
        rows: declared.clone(),
        tail_b: b_decl,
        tail_eps: eps_decl,
    };
    push_value(
        &mut values,
        "beta_2^2 growth ratio from printed rows",
        growth_factor(&printed_table, &e_2, &pi_good)?,
    );
    push_value(
        &mut values,
        "beta_3^3 growth ratio from printed rows",
        growth_factor(&printed_table, &e_3, &pi_good)?,
    );
    push_value(&mut values, "beta_2^2 growth ratio", r2);
    push_value(&mut values, "beta_3^3 growth ratio", r3);
    checks.push(Check::lt("beta_2^2(i+1) / beta_2^2(i)", r2, a.ratio2.get()?));
    checks.push(Check::lt("beta_3^3(i+1) / beta_3^3(i)", r3, a.ratio3.get()?));

    Ok(StageCertificate {
        name: "stages i >= 2".into(),
        m,
        bins,
        eps_sup,
        omega_rows,
        omega_table,
        beta_next: None,
        values,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductionCertificate {
    pub checks: Vec<Check>,
}

impl InductionCertificate {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Closes the induction from the printed growth ratios and the stage-2 bias
/// bounds, and confirms the base case is not satisfied with room to spare
/// by accident: inflating `β_2(2)` must break it.
pub fn induction_check(cfg: &ProofConfig) -> Result<InductionCertificate> {
    let a = &cfg.asymptotic;
    let ind = &cfg.induction;
    let p = a.p.get()?;
    let growth = ind.growth.get()?;
    let (_, rhs2, rhs3) = asymptotic_betas(cfg)?;
    let r2 = a.ratio2.get()?;
    let r3 = a.ratio3.get()?;
    let t2 = ind.ratio2_target.get()?;
    let t3 = ind.ratio3_target.get()?;
    let b2 = cfg.stage1.beta2_next.get()?;
    let b3 = cfg.stage1.beta3_next.get()?;
    let perturbed = b2 * (Interval::ONE + ind.perturbation.get()?);
    let checks = vec![
        Check::lt("beta_2 growth ratio below target", r2, t2),
        Check::le(
            "target at most 1.5 sqrt(P): window growth of P log P",
            t2,
            growth * p.sqrt()?,
        ),
        Check::lt("beta_3 growth ratio below target", r3, t3),
        Check::le("target at most 1.5 P: window growth of 2 P^2 log P", t3, growth * p),
        Check::le("base case beta_2(2) <= c_2 (P log P)^(1/2)", b2, rhs2),
        Check::le("base case beta_3(2) <= c_3 (2 P^2 log P)^(1/3)", b3, rhs3),
        Check::holds(
            "inflated beta_2(2) violates the base case",
            perturbed,
            rhs2,
            perturbed.lo() > rhs2.hi(),
        ),
    ];
    Ok(InductionCertificate { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProofConfig;

    fn dec(s: &str) -> Interval {
        Interval::from_decimal(s).unwrap()
    }

    #[test]
    fn single_coordinate_optimum() {
        let v = solve_linf_omega(&Interval::point(0.5), 2, 1).unwrap();
        assert!(v.contains(1.0));
        assert!(v.width() < 1e-12);
        let v = solve_linf_omega(&Interval::point(0.5), 3, 1).unwrap();
        assert!(v.contains(1.0));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            solve_linf_omega(&Interval::point(1.0), 2, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_linf_omega(&Interval::point(0.5), 4, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_linf_omega(&Interval::point(0.5), 2, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn low_inverse_brackets_root() {
        for &v in &[1e-6, 0.01, 0.05, 0.1, 0.148] {
            let lo = low_inverse_lo(v);
            let hi = low_inverse_hi(v);
            assert!(lo <= hi && hi - lo < 1e-12, "{v}: {lo} {hi}");
            assert!(phi2(lo).hi() <= v && phi2(hi).lo() >= v);
        }
    }

    #[test]
    fn five_coordinates_use_equal_values() {
        // with B = 0.625533539 the optimum at ω = 5 is 5B/(√5 - B)
        let b = dec("0.625533539");
        let v = solve_linf_omega(&b, 2, 5).unwrap();
        let closed = (Interval::from_int(5) * b)
            .div(&(Interval::from_int(5).sqrt().unwrap() - b))
            .unwrap();
        assert!(v.intersects(&closed));
        assert!(v.hi() - closed.hi() < 1e-12);
    }

    /// Dense grid search for `omega <= 3`; the last coordinate takes the
    /// largest grid value the remaining budget allows.
    fn grid_max(b: f64, omega: usize, p: i32, steps: usize) -> f64 {
        assert!((1..=3).contains(&omega));
        let grid: Vec<f64> = (0..=steps).map(|k| b * k as f64 / steps as f64).collect();
        let budget = b.powi(p);
        let hf = |x: f64| x / (1.0 - x);
        let last = |rest: f64, cap: usize| -> f64 {
            let k = grid[..=cap].partition_point(|g| g.powi(p) <= rest);
            if k == 0 {
                0.0
            } else {
                hf(grid[k - 1])
            }
        };
        let mut best = 0.0f64;
        for i in 0..=steps {
            let r1 = budget - grid[i].powi(p);
            if r1 < 0.0 {
                break;
            }
            if omega == 1 {
                best = best.max(hf(grid[i]));
                continue;
            }
            if omega == 2 {
                best = best.max(hf(grid[i]) + last(r1, i));
                continue;
            }
            for j in 0..=i {
                let r2 = r1 - grid[j].powi(p);
                if r2 < 0.0 {
                    break;
                }
                best = best.max(hf(grid[i]) + hf(grid[j]) + last(r2, j));
            }
        }
        best
    }

    #[test]
    fn agrees_with_grid_search() {
        for (b, p) in [(0.6, 2), (0.45, 2), (0.58, 3)] {
            let solver = LinfOmegaSolver::new(&Interval::point(b), p).unwrap();
            for omega in 1..=3u32 {
                let v = solver.row(omega).unwrap();
                let g = grid_max(b, omega as usize, p as i32, 600);
                assert!(
                    g <= v.hi() + 1e-12,
                    "grid {g} above bound {v} (B={b}, p={p}, omega={omega})"
                );
                assert!(
                    v.hi() - g < 5e-3,
                    "bound {v} far above grid {g} (B={b}, p={p}, omega={omega})"
                );
            }
        }
    }

    #[test]
    fn rows_are_monotone() {
        let solver = LinfOmegaSolver::new(&dec("0.6"), 2).unwrap();
        let rows = solver.rows(40).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].hi() >= w[0].hi() && w[1].lo() >= w[0].lo());
        }
        assert!(!solver.pair_families().is_empty());
    }

    #[test]
    fn trivial_update() {
        let table = OmegaTable {
            p: 2,
            rows: vec![Interval::ZERO; 10],
            tail_b: Interval::point(0.0),
            tail_eps: Interval::ZERO,
        };
        let e = ElementaryBounds::factorial_only(Interval::ZERO);
        let pi = dec("0.3");
        let g = growth_factor(&table, &e, &pi).unwrap();
        assert!(g.contains(1.0 / 0.3) && g.width() < 1e-14);
        let b = update_bias(&Interval::from_int(2), &pi, &table, &e, 2).unwrap();
        assert!(b.contains((4.0f64 / 0.3).sqrt()));
    }

    #[test]
    fn update_is_monotone() {
        let mk = |r: f64| OmegaTable {
            p: 3,
            rows: (1..=20).map(|w| Interval::point(r * (w as f64).sqrt())).collect(),
            tail_b: Interval::point(0.5),
            tail_eps: Interval::point(0.2),
        };
        let pi = dec("0.3");
        let e = ElementaryBounds::factorial_only(dec("1.2"));
        let base = growth_factor(&mk(1.0), &e, &pi).unwrap();
        assert!(growth_factor(&mk(1.1), &e, &pi).unwrap().lo() >= base.hi());
        let e_big = ElementaryBounds::factorial_only(dec("1.3"));
        assert!(growth_factor(&mk(1.0), &e_big, &pi).unwrap().lo() >= base.hi());
        assert!(growth_factor(&mk(1.0), &e, &dec("0.25")).unwrap().lo() >= base.hi());
    }

    #[test]
    fn elementary_matches_factorial_bound() {
        let vals: Vec<Interval> = (1..=30).map(|k| Interval::point(1.0 / k as f64)).collect();
        let e = ElementaryBounds::from_values(&vals, 6);
        let mut f = Interval::ONE;
        for j in 1..=6 {
            f = f * e.e1.div_int(j).unwrap();
            assert!(e.exact[j as usize - 1].hi() <= f.hi());
        }
    }

    #[test]
    fn induction_with_defaults() {
        let cfg = ProofConfig::default();
        let c = induction_check(&cfg).unwrap();
        assert!(c.holds(), "{:?}", c.checks.iter().filter(|c| !c.ok).collect::<Vec<_>>());
    }

    #[test]
    fn perturbation_flips_base_case() {
        let mut cfg = ProofConfig::default();
        cfg.stage1.beta2_next = "95.6071".into();
        let c = induction_check(&cfg).unwrap();
        assert!(!c.holds());
    }
}
