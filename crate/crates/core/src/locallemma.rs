//! Quantitative Local Lemma: weight conditions, density and bias bounds,
//! the Newton fixed-point certificate and operator-norm surrogates.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primes::{is_prime, WindowStats};
use crate::rigor::{sum_positive_series, Interval};

/// Largest number of distinct prime factors handled by the subset map.
pub const MAX_OMEGA: usize = 20;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulusCount {
    pub n: u64,
    /// `|a_n mod n|`.
    pub count: u64,
}

/// Moduli with residue-class counts, plus the primes they are built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveInstance {
    moduli: Vec<ModulusCount>,
    primes: Vec<u64>,
    /// Indices into `primes` of the distinct prime factors of each modulus.
    #[serde(skip)]
    factors: Vec<Vec<usize>>,
}

fn distinct_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl SieveInstance {
    /// The prime set is taken to be every prime dividing some modulus.
    pub fn new(moduli: Vec<ModulusCount>) -> Result<Self> {
        let mut primes: Vec<u64> = moduli.iter().flat_map(|m| distinct_prime_factors(m.n)).collect();
        primes.sort_unstable();
        primes.dedup();
        Self::with_primes(moduli, primes)
    }

    pub fn with_primes(moduli: Vec<ModulusCount>, mut primes: Vec<u64>) -> Result<Self> {
        primes.sort_unstable();
        primes.dedup();
        if let Some(&p) = primes.iter().find(|&&p| !is_prime(p)) {
            return Err(Error::Validation(format!("{p} in prime set is not prime")));
        }
        let index: HashMap<u64, usize> = primes.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let mut factors = Vec::with_capacity(moduli.len());
        for m in &moduli {
            if m.n <= 1 {
                return Err(Error::Validation(format!("modulus {} must exceed 1", m.n)));
            }
            if m.count > m.n {
                return Err(Error::Validation(format!("{} classes removed mod {}", m.count, m.n)));
            }
            let f = distinct_prime_factors(m.n)
                .into_iter()
                .map(|p| {
                    index
                        .get(&p)
                        .copied()
                        .ok_or_else(|| Error::Validation(format!("prime {p} of modulus {} not in prime set", m.n)))
                })
                .collect::<Result<Vec<_>>>()?;
            factors.push(f);
        }
        Ok(SieveInstance {
            moduli,
            primes,
            factors,
        })
    }

    pub fn moduli(&self) -> &[ModulusCount] {
        &self.moduli
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn prime_index(&self, p: u64) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }

    pub fn max_omega(&self) -> usize {
        self.factors.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn check_weights_shape(&self, x: &[Interval]) -> Result<()> {
        if x.len() != self.primes.len() {
            return Err(Error::Validation(format!(
                "weight vector has {} entries for {} primes",
                x.len(),
                self.primes.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| v.lo() < 0.0) {
            return Err(Error::Domain(format!("negative weight {v}")));
        }
        Ok(())
    }

    /// `|a_n| ∏_{p|n}(1 + x_p) / n` for each modulus.
    fn terms(&self, x: &[Interval]) -> Result<Vec<Interval>> {
        self.moduli
            .iter()
            .zip(&self.factors)
            .map(|(m, f)| {
                let prod = f.iter().fold(Interval::ONE, |acc, &i| acc * (Interval::ONE + x[i]));
                (Interval::from_int(m.count) * prod).div(&Interval::from_int(m.n))
            })
            .collect()
    }

    fn terms_f64(&self, x: &[f64]) -> Vec<f64> {
        self.moduli
            .iter()
            .zip(&self.factors)
            .map(|(m, f)| m.count as f64 * f.iter().map(|&i| 1.0 + x[i]).product::<f64>() / m.n as f64)
            .collect()
    }
}

fn lower_points(x: &[Interval]) -> Vec<Interval> {
    x.iter().map(|v| Interval::point(v.lo())).collect()
}

/// Enclosures of `G_p(x)` for every prime of the instance.
pub fn g_vector(inst: &SieveInstance, x: &[Interval]) -> Result<Vec<Interval>> {
    inst.check_weights_shape(x)?;
    let mut g = vec![Interval::ZERO; inst.primes.len()];
    for (t, f) in inst.terms(x)?.iter().zip(&inst.factors) {
        for &i in f {
            g[i] = g[i] + *t;
        }
    }
    Ok(g)
}

fn g_vector_f64(inst: &SieveInstance, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; inst.primes.len()];
    for (t, f) in inst.terms_f64(x).iter().zip(&inst.factors) {
        for &i in f {
            g[i] += t;
        }
    }
    g
}

/// Certified `x_p ≥ G_p(x)` for all p, evaluated at the lower endpoints.
pub fn check_weights(inst: &SieveInstance, x: &[Interval]) -> bool {
    if inst.check_weights_shape(x).is_err() {
        return false;
    }
    let xl = lower_points(x);
    match g_vector(inst, &xl) {
        Ok(g) => xl.iter().zip(&g).all(|(xi, gi)| xi.lo() >= gi.hi()),
        Err(_) => false,
    }
}

fn require_weights(inst: &SieveInstance, x: &[Interval]) -> Result<Vec<Interval>> {
    if !check_weights(inst, x) {
        return Err(Error::Precondition(
            "weights do not satisfy the local lemma condition".into(),
        ));
    }
    Ok(lower_points(x))
}

/// `exp(-Σ_n |a_n| ∏(1+x_p)/n)`; its `lo` bounds the uncovered density.
pub fn density_lower_bound(inst: &SieveInstance, x: &[Interval]) -> Result<Interval> {
    let xl = require_weights(inst, x)?;
    let s = inst.terms(&xl)?.into_iter().fold(Interval::ZERO, |a, t| a + t);
    (-s).exp()
}

/// `exp(Σ_{p|n} x_p)/n`; its `hi` bounds the bias of the sieved set at `n`.
pub fn bias_upper_bound(inst: &SieveInstance, x: &[Interval], n: u64) -> Result<Interval> {
    let xl = require_weights(inst, x)?;
    if !inst.moduli.iter().any(|m| m.n == n) {
        return Err(Error::Domain(format!("{n} is not a modulus of the instance")));
    }
    let s = distinct_prime_factors(n)
        .into_iter()
        .map(|p| inst.prime_index(p).map(|i| xl[i]))
        .try_fold(Interval::ZERO, |acc, v| v.map(|v| acc + v))
        .ok_or_else(|| Error::Domain(format!("{n} has a prime factor outside the prime set")))?;
    s.exp()?.div(&Interval::from_int(n))
}

// ---------------------------------------------------------------------------
// operator-norm surrogates

fn factorial(k: u32) -> Interval {
    (1..=k).fold(Interval::ONE, |acc, j| acc * Interval::from_int(j))
}

fn over_factorial(x: Interval, k: u32) -> Result<Interval> {
    x.div(&factorial(k))
}

/// `S_1, ..., S_ω` with `ω` the largest number of distinct prime factors of a
/// modulus; `S_k = 0` for larger k.
///
/// With `A(T) = Σ_{n : T ⊆ rad n} |a_n|/n`:
/// `S_1 = 2 Σ_{|U|=2} A(U)²` and
/// `S_k = k! (k Σ_{|T|=k} A(T)² + (k+1) Σ_{|U|=k+1} A(U)²)`.
pub fn s_k_bound(inst: &SieveInstance) -> Result<Vec<Interval>> {
    let omega = inst.max_omega();
    if omega > MAX_OMEGA {
        return Err(Error::Size(format!(
            "modulus with {omega} prime factors exceeds {MAX_OMEGA}"
        )));
    }
    let mut a: HashMap<Vec<usize>, Interval> = HashMap::new();
    for (m, f) in inst.moduli.iter().zip(&inst.factors) {
        let w = Interval::from_int(m.count).div(&Interval::from_int(m.n))?;
        for mask in 1u32..(1u32 << f.len()) {
            let key: Vec<usize> = (0..f.len()).filter(|b| mask >> b & 1 == 1).map(|b| f[b]).collect();
            let e = a.entry(key).or_insert(Interval::ZERO);
            *e = *e + w;
        }
    }
    // sq[j] = Σ_{|T|=j} A(T)²; summed in key order for reproducibility
    let mut keys: Vec<&Vec<usize>> = a.keys().collect();
    keys.sort();
    let mut sq = vec![Interval::ZERO; omega + 2];
    for key in keys {
        let v = a[key];
        sq[key.len()] = sq[key.len()] + v * v;
    }
    Ok((1..=omega)
        .map(|k| {
            if k == 1 {
                Interval::from_int(2) * sq[2]
            } else {
                factorial(k as u32)
                    * (Interval::from_int(k as i64) * sq[k] + Interval::from_int(k as i64 + 1) * sq[k + 1])
            }
        })
        .collect())
}

fn p_log_p(p: &Interval) -> Result<Interval> {
    if p.lo() <= 1.0 {
        return Err(Error::Domain(format!("P must exceed 1, got {p}")));
    }
    Ok(*p * p.ln()?)
}

/// `𝒞 = 1/(P log P) + Σ_{n≥2} √n M^{n-1} / ((n-1)! (P log P)^{n/2})`.
pub fn holder_c(m: &Interval, p: &Interval) -> Result<Interval> {
    let l = p_log_p(p)?;
    let sl = l.sqrt()?;
    let term = |n: u32| -> Result<Interval> {
        let num = Interval::from_int(n).sqrt()? * m.pow_int(n - 1);
        over_factorial(num, n - 1)?.div(&sl.pow_int(n))
    };
    let ratio = |n: u32| -> Result<Interval> {
        let r = Interval::from_ratio(n as i128 + 1, n as i128)?.sqrt()? * *m;
        r.div(&(Interval::from_int(n) * sl))
    };
    Ok(l.recip()? + sum_positive_series(2, term, ratio)?)
}

/// `√S_1 + Σ_{k≥2} M^{k-1}/(k-1)! √S_k`, a direct bound for `B_op(M)`.
pub fn b_op_direct(s: &[Interval], m: &Interval) -> Result<Interval> {
    let mut acc = Interval::ZERO;
    for (idx, sk) in s.iter().enumerate() {
        let k = idx as u32 + 1;
        let root = sk.clamp_nonneg().sqrt()?;
        acc = acc + over_factorial(m.pow_int(k - 1) * root, k - 1)?;
    }
    Ok(acc)
}

/// `𝒞 × 𝒮`, a bound for `B_op(M)²` with the weights tuned to `P`.
pub fn b_op_split_squared(s: &[Interval], m: &Interval, p: &Interval) -> Result<Interval> {
    let l = p_log_p(p)?;
    let sl = l.sqrt()?;
    let mut script_s = Interval::ZERO;
    for (idx, sk) in s.iter().enumerate() {
        let k = idx as u32 + 1;
        let t = if k == 1 {
            l * *sk
        } else {
            over_factorial(
                (m.pow_int(k - 1) * sl.pow_int(k) * *sk).div(&Interval::from_int(k).sqrt()?)?,
                k - 1,
            )?
        };
        script_s = script_s + t;
    }
    Ok(holder_c(m, p)? * script_s)
}

/// Bound for `B_op(M)`: the tighter of the direct and split forms. The split
/// is only used when `P` is given.
pub fn b_op_bound(s: &[Interval], m: &Interval, p: Option<&Interval>) -> Result<Interval> {
    let direct = b_op_direct(s, m)?;
    match p {
        Some(p) => {
            let split = b_op_split_squared(s, m, p)?.sqrt()?;
            Ok(if split.hi() < direct.hi() { split } else { direct })
        }
        None => Ok(direct),
    }
}

/// `b_op_bound` for an instance, checking the prime floor `min 𝒫 ≥ P + 1`.
pub fn b_op_for_instance(inst: &SieveInstance, m: &Interval, p: Option<&Interval>) -> Result<Interval> {
    if let (Some(p), Some(&q)) = (p, inst.primes.first()) {
        if (q as f64) < p.hi() + 1.0 {
            return Err(Error::Domain(format!(
                "smallest prime {q} is below P + 1 = {}",
                p.hi() + 1.0
            )));
        }
    }
    b_op_bound(&s_k_bound(inst)?, m, p)
}

// ---------------------------------------------------------------------------
// Newton fixed point

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCertificate {
    pub m: Interval,
    pub b_inf: Interval,
    pub b_20: Interval,
    pub b_op: Interval,
    pub theta: Interval,
    pub x0: Vec<Interval>,
    /// Bound for `‖x^fix - x^0‖₂`; absent when `θ` is not below 1.
    pub eps_norm: Option<Interval>,
    pub condition_ok: bool,
    /// Enclosure `[x^0, x_c]` of the least fixed point, where `x_c` is a
    /// certified supersolution found by iteration.
    pub fixed_point: Vec<Interval>,
}

fn l2(v: &[Interval]) -> Result<Interval> {
    v.iter().fold(Interval::ZERO, |a, x| a + *x * *x).sqrt()
}

/// Certificate built around `x^0 = G(0)/(1-G(0))`, together with an
/// iterated, independently verified fixed point.
pub fn newton_fixed_point(inst: &SieveInstance, m: &Interval) -> Result<FixedPointCertificate> {
    let n = inst.primes.len();
    let g0 = g_vector(inst, &vec![Interval::ZERO; n])?;
    let b_inf = g0.iter().fold(Interval::ZERO, |a, g| a.max(g));
    if b_inf.hi() >= 1.0 {
        return Err(Error::Precondition(format!("B_inf = {b_inf} is not below 1")));
    }
    let x0: Vec<Interval> = g0.iter().map(|g| g.div(&(Interval::ONE - *g))).collect::<Result<_>>()?;
    let b_20 = l2(&x0)?;
    let b_op = b_op_for_instance(inst, m, None)?;
    let theta = b_op.div(&(Interval::ONE - b_inf))?;
    let (eps_norm, condition_ok) = if theta.hi() < 1.0 {
        let one_minus = Interval::ONE - theta;
        let bound = b_20.div(&one_minus)?;
        (Some((b_20 * theta).div(&one_minus)?), bound.hi() <= m.lo())
    } else {
        (None, false)
    };

    let d: Vec<f64> = g0.iter().map(|g| 1.0 - g.mid()).collect();
    let mut x: Vec<f64> = x0.iter().map(Interval::mid).collect();
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let g = g_vector_f64(inst, &x);
        let step: Vec<f64> = (0..n).map(|i| (g[i] - x[i]) / d[i]).collect();
        for i in 0..n {
            x[i] += step[i];
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > m.hi() {
            return Err(Error::Divergence(format!(
                "Newton iterate norm {norm} exceeds M = {}",
                m.hi()
            )));
        }
        let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm < NEWTON_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Divergence(format!(
            "Newton iteration did not settle in {NEWTON_MAX_ITER} steps"
        )));
    }

    let mut fixed_point = None;
    for e in [12, 10, 8, 6, 4] {
        let delta = 10f64.powi(-e);
        let cand: Vec<Interval> = x
            .iter()
            .map(|v| Interval::point(v.max(0.0) * (1.0 + delta) + delta))
            .collect();
        if check_weights(inst, &cand) {
            fixed_point = Some(
                x0.iter()
                    .zip(&cand)
                    .map(|(lo, hi)| Interval::new(lo.lo(), hi.hi().max(lo.hi())))
                    .collect::<Result<Vec<_>>>()?,
            );
            break;
        }
    }
    let fixed_point = fixed_point.ok_or_else(|| {
        Error::verification(
            "fixed point",
            "no inflated Newton iterate satisfies the weight condition",
        )
    })?;

    Ok(FixedPointCertificate {
        m: *m,
        b_inf,
        b_20,
        b_op,
        theta,
        x0,
        eps_norm,
        condition_ok,
        fixed_point,
    })
}

// ---------------------------------------------------------------------------
// averaged bounds over a prime window

/// Window quantities entering the averaged bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMoments {
    /// Lower edge `P` of the window.
    pub p: Interval,
    /// `∏ p/(p-1)`.
    pub prod: Interval,
    /// `Σ 1/(p-1)²`.
    pub s2: Interval,
    /// `Σ 1/(p-1)³`.
    pub s3: Interval,
}

impl WindowMoments {
    pub fn from_stats(stats: &WindowStats, p: Interval) -> Self {
        WindowMoments {
            p,
            prod: stats.prod_p_over_pm1,
            s2: stats.sum_inv_sq,
            s3: stats.sum_inv_cube,
        }
    }

    /// `s2 = c2/(P log P)`, `s3 = c3/(2 P² log P)`.
    pub fn symbolic(p: Interval, prod: Interval, c2: Interval, c3: Interval) -> Result<Self> {
        let l = p_log_p(&p)?;
        Ok(WindowMoments {
            p,
            prod,
            s2: c2.div(&l)?,
            s3: c3.div(&(Interval::from_int(2) * p * l))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationBounds {
    /// Mean of `‖G(0)‖₂²`.
    pub eg2: Interval,
    /// Mean of `‖G(0)‖₃³`.
    pub eg3: Interval,
    /// Mean of `S_1`.
    pub es1: Interval,
    /// Mean of `𝒮`, summed termwise from the `S_k` bounds.
    pub e_script_s: Interval,
    /// Same, with `(1 + 1/P)` replacing `(1 + s2/k)`.
    pub e_script_s_coarse: Interval,
    pub holder_c: Interval,
    /// `𝒞 · E𝒮`, the mean of `B_op(M)²`.
    pub ebop2: Interval,
    pub ebop2_coarse: Interval,
}

/// Averaged bounds from window moments and the current bias bounds.
pub fn expectation_bounds(
    w: &WindowMoments,
    beta2: &Interval,
    beta3: &Interval,
    m: &Interval,
) -> Result<ExpectationBounds> {
    let l = p_log_p(&w.p)?;
    let sl = l.sqrt()?;
    let pre2 = beta2.pow_int(2) * w.prod.pow_int(2);
    let eg2 = pre2 * w.s2;
    let eg3 = beta3.pow_int(3) * w.prod.pow_int(3) * w.s3;
    let es1 = pre2 * w.s2.pow_int(2);
    let s2 = w.s2;
    let base = |k: u32| -> Result<Interval> {
        over_factorial(
            Interval::from_int(k).sqrt()? * m.pow_int(k - 1) * sl.pow_int(k) * s2.pow_int(k),
            k - 1,
        )
    };
    let ratio = |k: u32| -> Result<Interval> {
        let r = Interval::from_ratio(k as i128 + 1, k as i128)?.sqrt()? * *m * sl * s2;
        r.div_int(k as i64)
    };
    let fine = sum_positive_series(2, |k| Ok(base(k)? * (Interval::ONE + s2.div_int(k as i64)?)), ratio)?;
    let coarse = sum_positive_series(2, base, ratio)? * (Interval::ONE + w.p.recip()?);
    let head = l * w.s2.pow_int(2);
    let e_script_s = pre2 * (head + fine);
    let e_script_s_coarse = pre2 * (head + coarse);
    let c = holder_c(m, &w.p)?;
    Ok(ExpectationBounds {
        eg2,
        eg3,
        es1,
        e_script_s,
        e_script_s_coarse,
        holder_c: c,
        ebop2: c * e_script_s,
        ebop2_coarse: c * e_script_s_coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::window_stats;
    use proptest::prelude::*;

    fn inst(ms: &[(u64, u64)]) -> SieveInstance {
        SieveInstance::new(ms.iter().map(|&(n, count)| ModulusCount { n, count }).collect()).unwrap()
    }

    fn pts(v: &[f64]) -> Vec<Interval> {
        v.iter().map(|&x| Interval::point(x)).collect()
    }

    fn dec(s: &str) -> Interval {
        Interval::from_decimal(s).unwrap()
    }

    #[test]
    fn g_vector_examples() {
        let g = g_vector(&inst(&[(5, 1)]), &pts(&[0.0])).unwrap();
        assert!(g[0].contains(0.2));
        let g = g_vector(&inst(&[(35, 2)]), &pts(&[0.0, 0.0])).unwrap();
        assert!(g[0].contains(2.0 / 35.0) && g[1].contains(2.0 / 35.0));
        let g = g_vector(&inst(&[(5, 1), (35, 1)]), &pts(&[1.0, 1.0])).unwrap();
        assert!(g[0].contains(18.0 / 35.0) && g[0].width() < 1e-15);
        assert!(g[1].contains(4.0 / 35.0));
    }

    #[test]
    fn instance_validation() {
        let bad = |ms: Vec<ModulusCount>| SieveInstance::new(ms).unwrap_err();
        assert!(matches!(
            bad(vec![ModulusCount { n: 1, count: 0 }]),
            Error::Validation(_)
        ));
        assert!(matches!(
            bad(vec![ModulusCount { n: 5, count: 6 }]),
            Error::Validation(_)
        ));
        let e = SieveInstance::with_primes(vec![ModulusCount { n: 35, count: 1 }], vec![5]).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn weight_checks() {
        let i5 = inst(&[(5, 1)]);
        assert!(check_weights(&i5, &pts(&[0.25])));
        assert!(!check_weights(&i5, &pts(&[0.0])));
        assert!(!check_weights(&i5, &pts(&[0.2])));
    }

    #[test]
    fn density_and_bias_bounds() {
        let i5 = inst(&[(5, 1)]);
        let x = pts(&[0.25]);
        let d = density_lower_bound(&i5, &x).unwrap();
        assert!(d.contains((-0.25f64).exp()) && d.lo() <= 0.8);
        let b = bias_upper_bound(&i5, &x, 5).unwrap();
        assert!(b.contains(0.25f64.exp() / 5.0) && b.hi() >= 0.25);
        assert!(matches!(
            density_lower_bound(&i5, &pts(&[0.1])),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(bias_upper_bound(&i5, &x, 7), Err(Error::Domain(_))));
        let empty = inst(&[]);
        assert_eq!(density_lower_bound(&empty, &[]).unwrap(), Interval::ONE);
    }

    #[test]
    fn newton_scalar_and_decoupled() {
        let m = Interval::point(2.0);
        let c = newton_fixed_point(&inst(&[(5, 1)]), &m).unwrap();
        assert!(c.fixed_point[0].contains(0.25));
        assert!(c.fixed_point[0].width() < 1e-9);
        assert!(c.x0[0].contains(0.25));
        assert!(c.condition_ok);
        assert_eq!(c.theta, Interval::ZERO);

        let c = newton_fixed_point(&inst(&[(5, 1), (7, 1)]), &m).unwrap();
        assert!(c.fixed_point[0].contains(0.25));
        assert!(c.fixed_point[1].contains(1.0 / 6.0));
    }

    #[test]
    fn newton_quadratic_instance() {
        let c = newton_fixed_point(&inst(&[(35, 1)]), &Interval::point(1.0)).unwrap();
        let root = (33.0 - 1085f64.sqrt()) / 2.0;
        for v in &c.fixed_point {
            assert!(v.contains(root), "{v} vs {root}");
            assert!(v.hi() - root < 1e-9);
        }
        assert!(c.condition_ok);
        let eps = c.eps_norm.unwrap();
        let actual = ((root - c.x0[0].mid()).powi(2) * 2.0).sqrt();
        assert!(eps.hi() >= actual);
    }

    #[test]
    fn newton_rejects_saturated_instance() {
        assert!(matches!(
            newton_fixed_point(&inst(&[(5, 5)]), &Interval::point(2.0)),
            Err(Error::Precondition(_))
        ));
        // x = (17/35)(1+x)^2 has no real root
        let r = newton_fixed_point(&inst(&[(35, 17)]), &Interval::point(2.0));
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    #[test]
    fn s_k_examples() {
        let s = s_k_bound(&inst(&[(5, 1)])).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0], Interval::ZERO);
        let s = s_k_bound(&inst(&[(35, 1)])).unwrap();
        assert!(s[0].contains(2.0 / 35.0 / 35.0));
        assert!(s[1].contains(4.0 / 35.0 / 35.0));
        assert!(s_k_bound(&inst(&[])).unwrap().is_empty());
    }

    #[test]
    fn s_k_matches_nested_sum() {
        let i = inst(&[(5 * 7, 2), (5 * 11, 1), (7 * 11 * 13, 3), (5 * 7 * 11, 1), (13, 2)]);
        let s = s_k_bound(&i).unwrap();
        let ps = i.primes().to_vec();
        let a = |set: &[u64]| -> f64 {
            i.moduli()
                .iter()
                .filter(|m| set.iter().all(|p| m.n % p == 0))
                .map(|m| m.count as f64 / m.n as f64)
                .sum()
        };
        let mut s1 = 0.0;
        for &p in &ps {
            for &q in &ps {
                if p != q {
                    s1 += a(&[p, q]).powi(2);
                }
            }
        }
        let mut s2 = 0.0;
        for &p1 in &ps {
            for &p2 in &ps {
                if p1 == p2 {
                    continue;
                }
                s2 += 2.0 * a(&[p1, p2]).powi(2);
                for &p in &ps {
                    if p != p1 && p != p2 {
                        s2 += a(&[p, p1, p2]).powi(2);
                    }
                }
            }
        }
        assert!((s[0].mid() - s1).abs() < 1e-15 * s1.max(1.0));
        assert!((s[1].mid() - s2).abs() < 1e-15 * s2.max(1.0));
    }

    #[test]
    fn holder_constant_stage2() {
        let c = holder_c(&dec("2.949873427"), &Interval::from_int(4000)).unwrap();
        assert!(c.hi() <= 0.0001571422884);
        assert!((c.mid() - 0.000157142288319).abs() < 1e-15);
    }

    #[test]
    fn split_bound_is_an_upper_bound_for_direct_terms() {
        let i = inst(&[(1009 * 1013, 7), (1009 * 1019 * 1021, 100), (1013 * 1021, 40)]);
        let m = Interval::point(1.5);
        let direct = b_op_for_instance(&i, &m, None).unwrap();
        let both = b_op_for_instance(&i, &m, Some(&Interval::from_int(1000))).unwrap();
        assert!(both.hi() <= direct.hi());
        assert!(matches!(
            b_op_for_instance(&i, &m, Some(&Interval::from_int(1009))),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stage1_expectations() {
        let stats = window_stats(1).unwrap();
        let w = WindowMoments::from_stats(&stats, Interval::from_int(222));
        let e = expectation_bounds(&w, &dec("12.25"), &dec("25"), &dec("1.769746269")).unwrap();
        assert!(e.eg2.hi() <= 0.246514091);
        assert!((e.eg2.mid() - 0.24651409091558).abs() < 1e-11);
        assert!((e.holder_c.mid() - 0.0029870756109).abs() < 1e-12);
        assert!(e.ebop2_coarse.hi() <= 0.002220166);
        assert!((e.ebop2_coarse.mid() - 0.0022201659978).abs() < 1e-12);
        assert!(e.ebop2.hi() <= e.ebop2_coarse.hi());
    }

    #[test]
    fn stage2_expectations() {
        let p = Interval::from_int(4000);
        let w = WindowMoments::symbolic(p, dec("1.506318"), dec("1.002631"), dec("1.004382")).unwrap();
        let l = p * p.ln().unwrap();
        let b2 = dec("0.5197033883") * l.sqrt().unwrap();
        let b3 = dec("0.3100980448") * (Interval::from_int(2) * p * l).cbrt();
        let e = expectation_bounds(&w, &b2, &b3, &dec("2.949873427")).unwrap();
        assert!(e.eg3.hi() < 0.1023637064);
        assert!(e.eg2.hi() < 0.6144485964);
        assert!(e.ebop2.hi() < 0.0005048197920);
        assert!(e.e_script_s.hi() <= 3.212501212);
        assert!(e.e_script_s_coarse.lo() > 3.212501212);
    }

    fn small_instance() -> impl Strategy<Value = SieveInstance> {
        let ps = [5u64, 7, 11, 13];
        proptest::collection::vec((1u32..16, 1u64..3), 1..5).prop_map(move |raw| {
            let mut ms: Vec<ModulusCount> = Vec::new();
            for (mask, c) in raw {
                let n: u64 = (0..4).filter(|b| mask >> b & 1 == 1).map(|b| ps[b]).product();
                if !ms.iter().any(|m| m.n == n) {
                    ms.push(ModulusCount { n, count: c });
                }
            }
            SieveInstance::new(ms).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fixed_point_dominates_x0_and_verifies(i in small_instance()) {
            if let Ok(c) = newton_fixed_point(&i, &Interval::point(10.0)) {
                let hi: Vec<Interval> = c.fixed_point.iter().map(|v| Interval::point(v.hi())).collect();
                prop_assert!(check_weights(&i, &hi));
                for (x0, fp) in c.x0.iter().zip(&c.fixed_point) {
                    prop_assert!(x0.lo() <= fp.hi());
                }
            }
        }

        #[test]
        fn coprime_moduli_decouple(a in 1u64..4, b in 1u64..6) {
            let i = inst(&[(5, a), (7, b)]);
            let c = newton_fixed_point(&i, &Interval::point(10.0)).unwrap();
            let x5 = a as f64 / (5 - a) as f64;
            let x7 = b as f64 / (7 - b) as f64;
            prop_assert!(c.fixed_point[0].contains(x5));
            prop_assert!(c.fixed_point[1].contains(x7));
        }
    }
}
