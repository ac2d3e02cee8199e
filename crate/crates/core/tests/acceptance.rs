//! Acceptance suite: every shipped guarantee as one test with a printed
//! pass/fail line (run with `--nocapture` to see them).
//!
//! Criteria 1–9 are pure functions of fixed seeds; criterion 10 re-runs all
//! of them under thread pools of 1, 2, and 8 workers and requires the
//! serialized results to be byte-identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use vcount::cli::sample_normal_form_word;
use vcount::count::{count_solutions, fiber_histogram, CountConfig, EvalPlan, Restriction};
use vcount::groups::{
    acceptance_corpus, default_corpus, direct_product, GroupSpec, GroupTable, DEFAULT_ORDER_CAP,
};
use vcount::nf2::{collect, NormalForm2};
use vcount::reduce::{check_triangular, restricted_count, verify_bound, Mode};
use vcount::words::{Expr, Substitution, Word};

fn build(name: &str) -> GroupTable {
    GroupSpec::parse(name)
        .unwrap()
        .build(DEFAULT_ORDER_CAP)
        .unwrap()
}

fn cfg() -> CountConfig {
    CountConfig::default()
}

fn product(mut factors: Vec<Expr>) -> Expr {
    match factors.len() {
        0 => Expr::Empty,
        1 => factors.pop().unwrap(),
        _ => Expr::Product(factors),
    }
}

fn sample_letter_word(rng: &mut impl Rng, nvars_max: usize, max_len: usize) -> Word {
    let n = rng.gen_range(1..=nvars_max);
    let len = rng.gen_range(0..=max_len);
    let factors: Vec<Expr> = (0..len)
        .map(|_| {
            let v = rng.gen_range(1..=n);
            if rng.gen_bool(0.5) {
                Expr::Var(v)
            } else {
                Expr::Power(Box::new(Expr::Var(v)), -1)
            }
        })
        .collect();
    Word::new(n, product(factors)).unwrap()
}

fn report(number: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {number:2} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(
        pass,
        "acceptance criterion {number} ({name}) failed: {detail}"
    );
}

// ---- criterion bodies (pure functions of their seeds) ----

/// Brute-force N(G,w) >= |G|^(n-1) on 500 seeded normal-form words per
/// catalog group of order <= 27.
fn c1_amit_bound_sweep() -> (bool, String, serde_json::Value) {
    let mut records = Vec::new();
    let mut total = 0usize;
    let mut violations = 0usize;
    for g in acceptance_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
        let mut bad = 0usize;
        for _ in 0..500 {
            let n = rng.gen_range(1..=3);
            let word = sample_normal_form_word(&mut rng, n, g.order() as u64);
            let res = count_solutions(&g, &word, &Restriction::full(&g, n), &cfg()).unwrap();
            total += 1;
            if !res.bound_ok {
                bad += 1;
            }
        }
        violations += bad;
        records.push(json!({"group": g.name(), "words": 500, "violations": bad}));
    }
    (
        violations == 0,
        format!("{total} words across 9 groups, {violations} bound violations"),
        json!({"criterion": 1, "records": records, "violations": violations}),
    )
}

/// N(G, [x1,x2]) equals the frozen oracle values and the independent
/// conjugacy-class route #classes * |G|.
fn c2_commuting_pair_oracle() -> (bool, String, serde_json::Value) {
    let expected = [("Q8", 40u128), ("D4", 40), ("heisenberg(3)", 297)];
    let word = Word::new(
        2,
        Expr::Commutator(Box::new(Expr::Var(1)), Box::new(Expr::Var(2))),
    )
    .unwrap();
    let mut pass = true;
    let mut records = Vec::new();
    for (name, want) in expected {
        let g = build(name);
        let got = count_solutions(&g, &word, &Restriction::full(&g, 2), &cfg())
            .unwrap()
            .count;
        let classes = (g.conjugacy_class_count() * g.order()) as u128;
        pass &= got == want && got == classes;
        records.push(json!({
            "group": name,
            "count": got as u64,
            "expected": want as u64,
            "classes_times_order": classes as u64,
        }));
    }
    (
        pass,
        "40 / 40 / 297, matching #classes * |G|".into(),
        json!({"criterion": 2, "records": records}),
    )
}

/// |C_G(g)| * |[g,G]| = |G| for every element of every catalog group of
/// order <= 64, exhaustively.
fn c3_centralizer_image_identity() -> (bool, String, serde_json::Value) {
    let mut checked = 0usize;
    let mut pass = true;
    for g in default_corpus() {
        for e in 0..g.order() {
            let c = g.centralizer(e).len();
            let im = g.commutator_image(e).len();
            pass &= c * im == g.order();
            checked += 1;
        }
    }
    (
        pass,
        format!(
            "{checked} elements across {} groups",
            default_corpus().len()
        ),
        json!({"criterion": 3, "elements": checked, "ok": pass}),
    )
}

/// The verbal maps of w and collect(w) mod |G| agree on every tuple, for 100
/// seeded words per catalog group of order <= 27.
fn c4_collection_oracle() -> (bool, String, serde_json::Value) {
    let mut mismatches = 0usize;
    let mut words_checked = 0usize;
    let mut groups = 0usize;
    for g in default_corpus().into_iter().filter(|g| g.order() <= 27) {
        groups += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC04);
        for _ in 0..100 {
            let word = sample_letter_word(&mut rng, 3, 12);
            let n = word.nvars();
            let collected = collect(&word)
                .reduce_exponents_mod(g.order() as u64)
                .unwrap();
            let wp = EvalPlan::compile(&g, &word).unwrap();
            let cp = EvalPlan::compile(&g, &collected.to_word()).unwrap();
            let mut tuple = vec![0usize; n];
            let total = g.order().pow(n as u32);
            let mut ok = true;
            for flat in 0..total {
                let mut rem = flat;
                for t in tuple.iter_mut() {
                    *t = rem % g.order();
                    rem /= g.order();
                }
                if wp.eval(&g, &tuple) != cp.eval(&g, &tuple) {
                    ok = false;
                    break;
                }
            }
            words_checked += 1;
            if !ok {
                mismatches += 1;
            }
        }
    }
    (
        mismatches == 0,
        format!("{words_checked} words on {groups} groups, {mismatches} pointwise mismatches"),
        json!({"criterion": 4, "words": words_checked, "mismatches": mismatches}),
    )
}

fn sample_triangular(rng: &mut impl Rng, g: &GroupTable, nvars: usize) -> Substitution {
    let p = g.prime().unwrap();
    let order = g.order() as u64;
    let mut vars: Vec<usize> = (1..=nvars).collect();
    for i in (1..nvars).rev() {
        let j = rng.gen_range(0..=i);
        vars.swap(i, j);
    }
    let mut words: Vec<Option<Word>> = vec![None; nvars];
    for (pos, &z) in vars.iter().enumerate() {
        let m = loop {
            let c = rng.gen_range(1..order.max(2));
            if c % p != 0 {
                break c;
            }
        };
        let mut factors = vec![Expr::Power(Box::new(Expr::Var(z)), m as i128)];
        let later = &vars[pos + 1..];
        if !later.is_empty() {
            for _ in 0..rng.gen_range(0..=4usize) {
                let v = later[rng.gen_range(0..later.len())];
                factors.push(if rng.gen_bool(0.5) {
                    Expr::Var(v)
                } else {
                    Expr::Power(Box::new(Expr::Var(v)), -1)
                });
            }
        }
        words[z - 1] = Some(Word::new(nvars, product(factors)).unwrap());
    }
    Substitution::new(nvars, words.into_iter().map(Option::unwrap).collect()).unwrap()
}

fn substitution_is_bijective(g: &GroupTable, s: &Substitution) -> bool {
    let n = s.nvars_in();
    let order = g.order();
    let total = order.pow(n as u32);
    let plans: Vec<EvalPlan> = s
        .words()
        .iter()
        .map(|u| EvalPlan::compile(g, u).unwrap())
        .collect();
    let mut seen = vec![false; total];
    let mut tuple = vec![0usize; n];
    for flat in 0..total {
        let mut rem = flat;
        for t in tuple.iter_mut() {
            *t = rem % order;
            rem /= order;
        }
        let mut idx = 0usize;
        for plan in plans.iter().rev() {
            idx = idx * order + plan.eval(g, &tuple);
        }
        if seen[idx] {
            return false;
        }
        seen[idx] = true;
    }
    true
}

/// 50 seeded random triangular substitutions per p-group of order <= 16
/// induce bijections of G^(n); exhaustive image check.
fn c5_triangular_bijectivity() -> (bool, String, serde_json::Value) {
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut groups = 0usize;
    for g in default_corpus()
        .into_iter()
        .filter(|g| g.order() >= 2 && g.order() <= 16 && g.prime().is_some())
    {
        groups += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC05);
        for _ in 0..50 {
            let n = rng.gen_range(1..=3);
            let s = sample_triangular(&mut rng, &g, n);
            if check_triangular(&s, g.prime().unwrap()).is_none() {
                failures += 1;
                continue;
            }
            if !substitution_is_bijective(&g, &s) {
                failures += 1;
            }
            checked += 1;
        }
    }
    (
        failures == 0,
        format!("{checked} substitutions on {groups} groups, {failures} failures"),
        json!({"criterion": 5, "substitutions": checked, "failures": failures}),
    )
}

/// Exact-mode recursion equals brute force N(G' x G^(n-1), w) exhaustively
/// over x1^m [x2,x3]^k on Q8 and heisenberg(3); bound mode lies in
/// [|G|^(n-1), exact].
fn c6_recursion_exactness() -> (bool, String, serde_json::Value) {
    let mut pass = true;
    let mut cases = 0usize;
    let mut records = Vec::new();
    for name in ["Q8", "heisenberg(3)"] {
        let g = build(name);
        let order = g.order() as u64;
        let mut group_ok = true;
        for m in 0..order {
            for k in 0..order {
                let nf = NormalForm2::from_parts(
                    3,
                    vec![m as i128, 0, 0],
                    [((2usize, 3usize), k as i128)]
                        .into_iter()
                        .filter(|&(_, v)| v != 0)
                        .collect(),
                    Some(order),
                )
                .unwrap();
                let (exact, _) = restricted_count(&g, &nf, Mode::Exact).unwrap();
                let (bound_mode, _) = restricted_count(&g, &nf, Mode::Bound).unwrap();
                let brute = count_solutions(
                    &g,
                    &nf.to_word(),
                    &Restriction::derived_first(&g, 3),
                    &cfg(),
                )
                .unwrap()
                .count;
                let floor = (g.order() as u128).pow(2);
                group_ok &= exact == brute && bound_mode >= floor && bound_mode <= exact;
                cases += 1;
            }
        }
        pass &= group_ok;
        records.push(json!({"group": name, "cases": order * order, "ok": group_ok}));
    }
    // the pinned instance
    let q8 = build("Q8");
    let nf = collect(&vcount::words::parse_word("x1^2 [x2,x3]", 3).unwrap());
    let (v, _) = restricted_count(&q8, &nf, Mode::Exact).unwrap();
    pass &= v == 80;
    (
        pass,
        format!("{cases} exhaustive (m,k) cases, Q8 pinned instance = 80"),
        json!({"criterion": 6, "records": records, "pinned_q8": v as u64}),
    )
}

/// The full reduction chain N(G,w) = N(G,w') >= N(G'xG^(n-1),w'') >=
/// |G|^(n-1), link by link, on 200 seeded words per p-group of order <= 16.
fn c7_reduction_chain() -> (bool, String, serde_json::Value) {
    let mut words_checked = 0usize;
    let mut violations = 0usize;
    let mut records = Vec::new();
    for g in default_corpus()
        .into_iter()
        .filter(|g| g.order() >= 2 && g.order() <= 16 && g.prime().is_some())
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC07);
        let mut bad = 0usize;
        for _ in 0..200 {
            let word = sample_letter_word(&mut rng, 3, 10);
            let rep = verify_bound(&g, &word, &cfg()).unwrap();
            words_checked += 1;
            if !rep.holds {
                bad += 1;
            }
        }
        violations += bad;
        records.push(json!({"group": g.name(), "words": 200, "violations": bad}));
    }
    (
        violations == 0,
        format!("{words_checked} words, {violations} chain violations"),
        json!({"criterion": 7, "records": records, "violations": violations}),
    )
}

/// N(AxB, w) = N(A,w) * N(B,w) for 20 seeded words per product pair.
fn c8_product_multiplicativity() -> (bool, String, serde_json::Value) {
    let pairs = [("C2", "C2"), ("Q8", "C2"), ("C3", "C3")];
    let mut pass = true;
    let mut records = Vec::new();
    for (an, bn) in pairs {
        let a = build(an);
        let b = build(bn);
        let ab = direct_product(&a, &b, DEFAULT_ORDER_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC08);
        let mut ok = true;
        for _ in 0..20 {
            let word = sample_letter_word(&mut rng, 3, 8);
            let n = word.nvars();
            let ca = count_solutions(&a, &word, &Restriction::full(&a, n), &cfg())
                .unwrap()
                .count;
            let cb = count_solutions(&b, &word, &Restriction::full(&b, n), &cfg())
                .unwrap()
                .count;
            let cab = count_solutions(&ab, &word, &Restriction::full(&ab, n), &cfg())
                .unwrap()
                .count;
            ok &= cab == ca * cb;
        }
        pass &= ok;
        records.push(json!({"pair": format!("{an}x{bn}"), "words": 20, "ok": ok}));
    }
    (
        pass,
        "3 product pairs, 20 words each, exact equality".into(),
        json!({"criterion": 8, "records": records}),
    )
}

/// On abelian catalog groups all nonzero fibers of the verbal map are equal
/// (and the identity fiber meets the bound), for 50 seeded words each.
fn c9_abelian_uniformity() -> (bool, String, serde_json::Value) {
    let mut pass = true;
    let mut groups = 0usize;
    let mut words_checked = 0usize;
    for g in default_corpus()
        .into_iter()
        .filter(|g| g.derived_subgroup().len() == 1)
    {
        groups += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC09);
        for _ in 0..50 {
            let word = sample_letter_word(&mut rng, 3, 10);
            let hist = fiber_histogram(&g, &word, &cfg()).unwrap();
            let nonzero: Vec<u128> = hist.iter().copied().filter(|&s| s != 0).collect();
            let uniform = nonzero.windows(2).all(|w| w[0] == w[1]);
            let bound = (g.order() as u128).pow((word.nvars() - 1) as u32);
            pass &= uniform && hist[0] >= bound;
            words_checked += 1;
        }
    }
    (
        pass,
        format!("{words_checked} words on {groups} abelian groups"),
        json!({"criterion": 9, "words": words_checked, "ok": pass}),
    )
}

fn all_criteria_json() -> String {
    let parts = vec![
        c1_amit_bound_sweep().2,
        c2_commuting_pair_oracle().2,
        c3_centralizer_image_identity().2,
        c4_collection_oracle().2,
        c5_triangular_bijectivity().2,
        c6_recursion_exactness().2,
        c7_reduction_chain().2,
        c8_product_multiplicativity().2,
        c9_abelian_uniformity().2,
    ];
    serde_json::to_string(&parts).unwrap()
}

// ---- the criteria as tests ----

#[test]
fn criterion_01_amit_bound_sweep() {
    let (pass, detail, _) = c1_amit_bound_sweep();
    report(1, "Amit bound sweep", pass, &detail);
}

#[test]
fn criterion_02_commuting_pair_oracle() {
    let (pass, detail, _) = c2_commuting_pair_oracle();
    report(2, "commuting-pair oracle", pass, &detail);
}

#[test]
fn criterion_03_centralizer_image_identity() {
    let (pass, detail, _) = c3_centralizer_image_identity();
    report(3, "centralizer-image identity", pass, &detail);
}

#[test]
fn criterion_04_collection_oracle() {
    let (pass, detail, _) = c4_collection_oracle();
    report(4, "collection oracle", pass, &detail);
}

#[test]
fn criterion_05_triangular_bijectivity() {
    let (pass, detail, _) = c5_triangular_bijectivity();
    report(5, "triangular bijectivity", pass, &detail);
}

#[test]
fn criterion_06_recursion_exactness() {
    let (pass, detail, _) = c6_recursion_exactness();
    report(6, "recursion exactness", pass, &detail);
}

#[test]
fn criterion_07_reduction_chain() {
    let (pass, detail, _) = c7_reduction_chain();
    report(7, "reduction chain", pass, &detail);
}

#[test]
fn criterion_08_product_multiplicativity() {
    let (pass, detail, _) = c8_product_multiplicativity();
    report(8, "product multiplicativity", pass, &detail);
}

#[test]
fn criterion_09_abelian_uniformity() {
    let (pass, detail, _) = c9_abelian_uniformity();
    report(9, "abelian fiber uniformity", pass, &detail);
}

#[test]
fn criterion_10_determinism_across_workers() {
    let mut outputs = Vec::new();
    for workers in [1usize, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        outputs.push(pool.install(all_criteria_json));
    }
    let pass = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    report(
        10,
        "determinism across workers",
        pass,
        "criteria 1-9 byte-identical under 1, 2, and 8 workers",
    );
}
