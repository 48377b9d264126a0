//! Acceptance suite: one line per criterion.
//!
//! A criterion either passes, or fails in exactly the known way recorded in
//! `KNOWN_RED`. Anything else makes this target exit nonzero.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use coverify_core::config::ProofConfig;
use coverify_core::locallemma::{
    bias_upper_bound, check_weights, density_lower_bound, newton_fixed_point, SieveInstance,
};
use coverify_core::oracle::{classical_covering, max_bias, uncovered_density, Congruence, CongruenceSystem};
use coverify_core::primes::{window_claims, window_stats};
use coverify_core::rigor::Interval;
use coverify_core::shearer::{bias_stat_stage1, primes_from_five, verify_chain, ChainVerdict};
use coverify_core::stages::{induction_check, run_stage1, run_stage_asymptotic, StageCertificate};
use coverify_core::symfunc::{brute_xi, rho};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Sub-items that cannot be certified, by criterion.
const KNOWN_RED: &[(u32, &[&str])] = &[
    (1, &["chain holds through 631"]),
    (
        6,
        &[
            "all bins below M",
            "eps <= 0.190000303",
            "omega table row 1",
            "omega table row 2",
            "omega table row 3",
            "omega table row 4",
            "omega table row 5",
            "omega table row 6",
            "omega table row 7",
            "omega table row 8",
            "omega table row 9",
            "omega table row 10",
            "ratio beta_2 < 48.515",
            "ratio beta_3 < 487.17",
        ],
    ),
];

struct Outcome {
    items: Vec<(String, bool, String)>,
    elapsed: Duration,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            items: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn item(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.items.push((name.to_string(), ok, detail.into()));
    }

    fn failed(&self) -> BTreeSet<&str> {
        self.items.iter().filter(|i| !i.1).map(|i| i.0.as_str()).collect()
    }
}

fn dec(s: &str) -> Interval {
    Interval::from_decimal(s).unwrap()
}

fn hi_le(x: &Interval, printed: &str) -> bool {
    x.hi() <= dec(printed).lo()
}

fn hi_lt(x: &Interval, printed: &str) -> bool {
    x.hi() < dec(printed).lo()
}

fn encloses_rel(x: &Interval, printed: &str, rel: f64) -> bool {
    let p = dec(printed);
    let tol = rel * p.hi().abs();
    x.lo() >= p.lo() - tol && x.hi() <= p.hi() + tol
}

fn check(c: &StageCertificate, label: &str) -> (bool, String) {
    let ch = c.check(label).unwrap_or_else(|| panic!("missing check {label}"));
    (ch.ok, format!("{} vs {}", ch.computed.hi(), ch.bound.lo()))
}

fn chain_at(pmax: u64) -> (bool, Option<u64>, Interval) {
    let cert = verify_chain(&primes_from_five(pmax).unwrap()).unwrap();
    let rho = cert.rho_final().unwrap_or(Interval::ZERO);
    match cert.verdict {
        ChainVerdict::Holds => (rho.lo() > 0.0, None, rho),
        ChainVerdict::Fails { prime, .. } => (false, Some(prime), rho),
    }
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let (ok, _, rho) = chain_at(221);
    o.item("chain holds for 4 < p < 222", ok, format!("rho {rho}"));
    let (ok, first, rho) = chain_at(631);
    o.item(
        "chain holds through 631",
        ok,
        format!("first failure {first:?}, rho {rho}"),
    );
    let (ok, first, rho) = chain_at(641);
    o.item(
        "chain fails with 641 appended",
        !ok && rho.hi() < 0.0,
        format!("first failure {first:?}, rho {rho}"),
    );
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let b2 = bias_stat_stage1(2).unwrap().beta_bound;
    let b3 = bias_stat_stage1(3).unwrap().beta_bound;
    o.item("beta_2(1) <= 12.25", hi_le(&b2, "12.25"), format!("{}", b2.hi()));
    o.item("beta_3(1) <= 25", hi_le(&b3, "25"), format!("{}", b3.hi()));
    o
}

fn criterion_3(s1: &StageCertificate) -> Outcome {
    let mut o = Outcome::new();
    let (ok, d) = check(s1, "E ||G(0)||_2^2 (stage 1)");
    o.item("E||G||_2^2 <= 0.246514091", ok, d);
    let (ok, d) = check(s1, "E B_op(M)^2 (stage 1)");
    o.item("E B_op^2 <= 0.002220166", ok, d);
    let cap = s1.check("l2 cap 1/(C_2 (1 - pi_good))").unwrap().computed;
    o.item(
        "cap encloses 0.391292208",
        encloses_rel(&cap, "0.391292208", 1e-9),
        format!("{cap}"),
    );
    let root = s1.check("square root of the l2 cap").unwrap().computed;
    o.item(
        "root encloses 0.625533539",
        encloses_rel(&root, "0.625533539", 1e-9),
        format!("{root}"),
    );
    o
}

const STAGE1_ROWS: [&str; 10] = [
    "1.769746269",
    "1.900670975",
    "2.033321919",
    "2.184489901",
    "2.363269323",
    "2.530235874",
    "2.686345986",
    "2.833661687",
    "2.973253326",
    "3.106051540",
];
const STAGE2_ROWS: [&str; 10] = [
    "1.459164221",
    "1.780349459",
    "2.096937862",
    "2.387653719",
    "2.656941273",
    "2.909180305",
    "3.147611526",
    "3.374605257",
    "3.591932780",
    "3.800951606",
];

fn rows(o: &mut Outcome, c: &StageCertificate, printed: &[&str; 10]) {
    for (w, p) in printed.iter().enumerate() {
        let r = c.omega_rows[w];
        let ok = r.hi() <= dec(p).lo() + 1e-9;
        o.item(&format!("omega table row {}", w + 1), ok, format!("{} vs {p}", r.hi()));
    }
}

fn criterion_4(s1: &StageCertificate) -> Outcome {
    let mut o = Outcome::new();
    let worst = s1.worst_bin().unwrap();
    o.item(
        "100 bins below 1.769746269",
        s1.bins.len() == 100 && s1.bins.iter().all(|b| hi_lt(&b.condition, "1.769746269")),
        format!("worst j = {}: {}", worst.j, worst.condition.hi()),
    );
    o.item(
        "eps_sup <= 0.292129153",
        hi_le(&s1.eps_sup, "0.292129153"),
        format!("{}", s1.eps_sup.hi()),
    );
    rows(&mut o, s1, &STAGE1_ROWS);
    o
}

fn criterion_5(s1: &StageCertificate, cfg: &ProofConfig) -> Outcome {
    let mut o = Outcome::new();
    let (b2, b3) = s1.beta_next.unwrap();
    o.item(
        "beta_2(2) < 94.66051416",
        hi_lt(&b2, "94.66051416"),
        format!("{}", b2.hi()),
    );
    o.item(
        "beta_3(2) < 199.2834489",
        hi_lt(&b3, "199.2834489"),
        format!("{}", b3.hi()),
    );
    let ind = induction_check(cfg).unwrap();
    let base = ind
        .checks
        .iter()
        .find(|c| c.label.starts_with("base case beta_2"))
        .unwrap();
    o.item(
        "94.66051416 <= 0.5197033883 (4000 log 4000)^(1/2)",
        base.ok,
        format!("rhs {}", base.bound.lo()),
    );
    o
}

fn criterion_6(s2: &StageCertificate, cfg: &ProofConfig) -> Outcome {
    let mut o = Outcome::new();
    for (label, name) in [
        ("holder constant C", "C <= 0.0001571422884"),
        ("E S", "E S <= 3.212501212"),
        ("E ||G(0)||_3^3", "E||G||_3^3 < 0.1023637064"),
        ("E ||G(0)||_2^2", "E||G||_2^2 < 0.6144485964"),
        ("E B_op(M)^2", "E B_op^2 < 0.0005048197920"),
    ] {
        let (ok, d) = check(s2, label);
        o.item(name, ok, d);
    }
    let worst = s2.worst_bin().unwrap();
    o.item(
        "all bins below M",
        s2.bins.iter().all(|b| hi_lt(&b.condition, "2.949873427")),
        format!("worst (i, j) = ({}, {}): {}", worst.i, worst.j, worst.condition.hi()),
    );
    o.item(
        "eps <= 0.190000303",
        hi_le(&s2.eps_sup, "0.190000303"),
        format!("{}", s2.eps_sup.hi()),
    );
    rows(&mut o, s2, &STAGE2_ROWS);
    let r2 = s2.value("beta_2^2 growth ratio").unwrap();
    let r3 = s2.value("beta_3^3 growth ratio").unwrap();
    let p2 = s2.value("beta_2^2 growth ratio from printed rows").unwrap();
    let p3 = s2.value("beta_3^3 growth ratio from printed rows").unwrap();
    o.item(
        "ratio beta_2 < 48.515",
        hi_lt(&r2, "48.515"),
        format!("{} (printed rows: {})", r2.hi(), p2.hi()),
    );
    o.item(
        "ratio beta_3 < 487.17",
        hi_lt(&r3, "487.17"),
        format!("{} (printed rows: {})", r3.hi(), p3.hi()),
    );
    let ind = induction_check(cfg).unwrap();
    o.item("induction closes", ind.holds(), format!("{} checks", ind.checks.len()));
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    for i in [2, 3] {
        match window_stats(i) {
            Ok(stats) => {
                for c in window_claims(&stats, i).unwrap() {
                    o.item(
                        &format!("window {i}: {}", c.label),
                        c.ok,
                        format!("{}", c.computed.hi()),
                    );
                }
            }
            Err(e) => o.item(&format!("window {i}"), false, e.to_string()),
        }
    }
    o
}

fn random_system(rng: &mut StdRng) -> Option<CongruenceSystem> {
    const PRIMES: [u64; 7] = [5, 7, 11, 13, 17, 19, 23];
    let count = rng.gen_range(1..=6);
    let mut entries = Vec::new();
    for _ in 0..count {
        let mut m = 1u64;
        for _ in 0..rng.gen_range(1..=2) {
            m *= PRIMES[rng.gen_range(0..PRIMES.len())];
        }
        if m.is_power_of_two() || m == 1 {
            continue;
        }
        let r = rng.gen_range(0..m);
        entries.push(Congruence::new(m, vec![r]).ok()?);
    }
    let sys = CongruenceSystem::new(entries);
    match sys.period() {
        Ok(q) if q <= 1_000_000 && !sys.entries.is_empty() => Some(sys),
        _ => None,
    }
}

fn rational_of(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let m = dec("2.949873427");
    let (mut certified, mut density_bad, mut bias_bad, mut tried) = (0, 0, 0, 0);
    while certified < 200 && tried < 20_000 {
        tried += 1;
        let Some(sys) = random_system(&mut rng) else { continue };
        let inst: SieveInstance = sys.to_instance().unwrap();
        let Ok(cert) = newton_fixed_point(&inst, &m) else {
            continue;
        };
        let x: Vec<Interval> = cert.fixed_point.iter().map(|v| Interval::point(v.hi())).collect();
        if !check_weights(&inst, &x) {
            continue;
        }
        certified += 1;
        let exact = uncovered_density(&sys).unwrap();
        let lower = density_lower_bound(&inst, &x).unwrap();
        if exact < rational_of(lower.lo()) {
            density_bad += 1;
        }
        if exact.is_zero() {
            continue;
        }
        for mc in inst.moduli() {
            let bias = max_bias(&sys, mc.n).unwrap() / BigRational::from_integer(BigInt::from(mc.n));
            let upper = bias_upper_bound(&inst, &x, mc.n).unwrap();
            if bias > rational_of(upper.hi()) {
                bias_bad += 1;
            }
        }
    }
    o.item(
        "local lemma bounds sound on >= 200 certified systems",
        certified >= 200 && density_bad == 0 && bias_bad == 0,
        format!("{certified} certified of {tried}; density violations {density_bad}, bias violations {bias_bad}"),
    );

    let mut draws = 0;
    let mut disagree = 0;
    for _ in 0..150 {
        let n = rng.gen_range(1..=4);
        let w: Vec<Interval> = (0..n).map(|_| Interval::point(rng.gen_range(0.0..0.5))).collect();
        let theta = Interval::point(rng.gen_range(0.0..2.0));
        let (Ok(a), Ok(b)) = (rho(&w, theta), brute_xi(&w, theta)) else {
            disagree += 1;
            continue;
        };
        draws += 1;
        let gap = (a.lo() - b.hi()).max(b.lo() - a.hi());
        if gap > 1e-12 * (1.0 + b.hi().abs()) {
            disagree += 1;
        }
    }
    o.item(
        "rho agrees with brute_xi for n <= 4",
        draws >= 100 && disagree == 0,
        format!("{draws} draws, {disagree} disagreements"),
    );
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let sys = classical_covering();
    let d = uncovered_density(&sys).unwrap();
    o.item("classical system has density 0", d.is_zero(), format!("{d}"));
    let mut all_positive = true;
    let mut detail = Vec::new();
    for i in 0..sys.entries.len() {
        let d = uncovered_density(&sys.without(i)).unwrap();
        all_positive &= d > BigRational::zero();
        detail.push(d.to_string());
    }
    o.item(
        "deleting any congruence leaves density > 0",
        all_positive,
        detail.join(", "),
    );
    o
}

fn main() {
    let cfg = ProofConfig::default();
    let mut results: Vec<(u32, Outcome, Option<Duration>)> = Vec::new();
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let mut o = f();
        o.elapsed = t.elapsed();
        o
    };

    results.push((1, timed(&criterion_1), Some(Duration::from_secs(10))));
    results.push((2, timed(&criterion_2), None));
    let t = Instant::now();
    let s1 = run_stage1(&cfg).expect("stage 1 runs");
    let stage1_time = t.elapsed();
    results.push((3, timed(&|| criterion_3(&s1)), None));
    let mut c4 = timed(&|| criterion_4(&s1));
    c4.elapsed += stage1_time;
    results.push((4, c4, Some(Duration::from_secs(60))));
    results.push((5, timed(&|| criterion_5(&s1, &cfg)), None));
    let c6 = timed(&|| {
        let s2 = run_stage_asymptotic(&cfg).expect("asymptotic stage runs");
        criterion_6(&s2, &cfg)
    });
    results.push((6, c6, Some(Duration::from_secs(120))));
    results.push((7, timed(&criterion_7), Some(Duration::from_secs(300))));
    results.push((8, timed(&criterion_8), None));
    results.push((9, timed(&criterion_9), None));

    let mut unexpected = Vec::new();
    for (n, o, limit) in &mut results {
        if let Some(limit) = limit {
            let within = o.elapsed <= *limit;
            o.item(
                &format!("runtime under {}s", limit.as_secs()),
                within,
                format!("{:.2}s", o.elapsed.as_secs_f64()),
            );
        }
        let failed = o.failed();
        let known: BTreeSet<&str> = KNOWN_RED
            .iter()
            .find(|(k, _)| k == n)
            .map(|(_, v)| v.iter().copied().collect())
            .unwrap_or_default();
        if failed.is_empty() {
            println!(
                "criterion {n}: PASS ({} items, {:.2}s)",
                o.items.len(),
                o.elapsed.as_secs_f64()
            );
        } else {
            let names: Vec<String> = o
                .items
                .iter()
                .filter(|i| !i.1)
                .map(|i| format!("{} [{}]", i.0, i.2))
                .collect();
            println!(
                "criterion {n}: FAIL ({} of {} items): {}",
                failed.len(),
                o.items.len(),
                names.join("; ")
            );
        }
        if failed != known {
            unexpected.push(format!("criterion {n}: failing {failed:?}, recorded {known:?}"));
        }
        if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
            for (name, ok, detail) in &o.items {
                println!("    {} {name}: {detail}", if *ok { "ok  " } else { "FAIL" });
            }
        }
    }
    println!("criterion 10: INFO the headline theorem rests on criteria 1-9 and is not re-proved independently");

    if !unexpected.is_empty() {
        for u in &unexpected {
            println!("unexpected outcome: {u}");
        }
        std::process::exit(1);
    }
    println!("acceptance: all outcomes match the record");
}
