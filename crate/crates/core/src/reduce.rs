//! Search-space reduction machinery: triangular bijective substitutions, the
//! general-to-special word pipeline, and the restricted-count recursion in
//! exact and lower-bound modes. Every pipeline emits an auditable
//! certificate whose arithmetic can be replayed against the group data.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::count::{amit_bound, count_solutions, CountConfig, CountError, Restriction};
use crate::groups::{GroupError, GroupTable};
use crate::nf2::{collect, Nf2Error, NormalForm2};
use crate::words::{Exponent, Expr, Substitution, Word};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("group '{0}' is not a p-group; the reduction machinery requires one")]
    NotPGroup(String),
    #[error("group '{0}' has nilpotency class > 2")]
    NotClass2(String),
    #[error("modulus {modulus} is not a positive power of the prime {prime}")]
    BadModulus { modulus: u64, prime: u64 },
    #[error("normal form is not in pure-power-times-late-commutators shape: {0}")]
    NotReducedForm(String),
    #[error("the reduction requires a word with at least one variable")]
    EmptyWord,
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    NormalForm(#[from] Nf2Error),
    #[error("certificate value does not fit in 64 bits")]
    Overflow,
}

/// Counting mode of the recursion: `Exact` recurses into quotients and must
/// agree with brute force; `Bound` replaces inner counts with the quotient's
/// guaranteed lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Bound,
}

#[derive(Clone, Debug, Serialize)]
pub struct CongruenceEntry {
    pub i: usize,
    pub j: usize,
    pub value: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summand {
    pub element: usize,
    pub centralizer: u64,
    pub image: u64,
    pub inner: u64,
}

/// One step of a reduction trace.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    /// Bijective triangular substitution applied to the word.
    Substitution {
        u_words: Vec<String>,
        ordering: Vec<usize>,
        exponents: Vec<i64>,
        modulus: u64,
    },
    /// Solved exponent congruences (target exponents per commutator pair).
    Congruence { entries: Vec<CongruenceEntry> },
    /// Commutator split `v' = [x1, v1'] v2'`.
    Split { v1prime: String, wpp: String },
    /// Chosen pair of minimal p-valuation and the variable renaming.
    PairChoice {
        pair: [usize; 2],
        k: u64,
        valuation: u32,
        renaming: Vec<usize>,
    },
    /// Variable merge `u_{n-1} = x_{n-1} v_n`, `u_n = x_n v_{n-1}`.
    Merge {
        u_second_last: String,
        u_last: String,
    },
    /// Top-level sum over the group: per-element `(|C(g^k)|, |[g^k,G]|, inner)`.
    RecursionLevel {
        nvars: usize,
        power: u64,
        summands: Vec<Summand>,
        value: u64,
    },
    /// Terminal case `x1^m`: `torsion = |{g in G' : g^m = 1}|`.
    BaseCase {
        nvars: usize,
        power: u64,
        torsion: u64,
        value: u64,
    },
}

/// Structured trace of a reduction run, serializable as JSON.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub mode: Mode,
    pub word: String,
    pub group: String,
    pub steps: Vec<Step>,
    pub value: u64,
    pub bound: u64,
    pub holds: bool,
}

// ---- modular arithmetic helpers ----

fn p_valuation(mut k: u64, p: u64) -> u32 {
    debug_assert!(k != 0);
    let mut v = 0;
    while k.is_multiple_of(p) {
        k /= p;
        v += 1;
    }
    v
}

fn is_prime_power_of(m: u64, p: u64) -> bool {
    if m < p {
        return false;
    }
    let mut m = m;
    while m.is_multiple_of(p) {
        m /= p;
    }
    m == 1
}

/// Inverse of `a` mod `m` for `gcd(a, m) = 1`, via the extended Euclidean
/// algorithm.
fn mod_inverse(a: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    debug_assert_eq!(old_r, 1, "{a} is not a unit mod {m}");
    old_s.rem_euclid(m as i128) as u64
}

/// Smallest nonnegative `c` with `c·k ≡ a (mod m)`, where `m` is a power of
/// `p` and `v_p(k) <= v_p(a)` (there are `p^{v_p(k)}` solutions; this is the
/// canonical one).
fn solve_congruence(k: u64, a: u64, m: u64, p: u64) -> u64 {
    debug_assert!(k != 0 && k < m);
    let d = p.pow(p_valuation(k, p));
    debug_assert_eq!(a % d, 0, "congruence {k}c = {a} mod {m} is unsolvable");
    let m2 = m / d;
    let inv = mod_inverse((k / d) % m2, m2);
    ((a / d) % m2) as u128 as u64 * inv % m2
}

// ---- triangular substitutions ----

/// Witness that a substitution is triangular: under the variable `ordering`
/// (first entry outermost), position `t` is owned by slot `slots[t]`, whose
/// word collects to `x_{ordering[t]}^{exponents[t]} · (word in strictly later
/// variables)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriangularWitness {
    pub ordering: Vec<usize>,
    pub slots: Vec<usize>,
    pub exponents: Vec<Exponent>,
}

/// Decide whether `s` is triangular with unit leading exponents mod `p`
/// under some variable ordering; such substitutions induce bijections of
/// `G^(n)` for every p-group `G` of class at most 2. Returns the ordering
/// found, trying slots and variables in ascending order.
pub fn check_triangular(s: &Substitution, p: u64) -> Option<TriangularWitness> {
    let n = s.words().len();
    if s.nvars_in() != n {
        return None;
    }
    let mut state = TriangularSearch {
        p,
        nfs: s.words().iter().map(collect).collect(),
        used_slot: vec![false; n],
        placed_var: vec![false; n],
        ordering: Vec::with_capacity(n),
        slots: Vec::with_capacity(n),
        exponents: Vec::with_capacity(n),
    };
    if state.search(0) {
        Some(TriangularWitness {
            ordering: state.ordering,
            slots: state.slots,
            exponents: state.exponents,
        })
    } else {
        None
    }
}

struct TriangularSearch {
    p: u64,
    nfs: Vec<NormalForm2>,
    used_slot: Vec<bool>,
    placed_var: Vec<bool>,
    ordering: Vec<usize>,
    slots: Vec<usize>,
    exponents: Vec<Exponent>,
}

impl TriangularSearch {
    /// Can slot `nf` own variable `z` at the current position? Returns its
    /// leading exponent if so.
    fn admissible(&self, nf: &NormalForm2, z: usize) -> Option<Exponent> {
        let placed = &self.placed_var;
        let m = nf.gen(z);
        if m == 0 || m.rem_euclid(self.p as i128) == 0 {
            return None;
        }
        for a in 1..=nf.nvars() {
            if placed[a - 1] && nf.gen(a) != 0 {
                return None;
            }
        }
        for ((a, b), _) in nf.comm_entries() {
            if placed[a - 1] || placed[b - 1] || a == z {
                return None;
            }
        }
        // keys (a, z) for unplaced a < z are pinned by the cross term of
        // moving x_z^m in front of the tail word
        for a in 1..z {
            if !placed[a - 1] && nf.comm(a, z) != -m * nf.gen(a) {
                return None;
            }
        }
        Some(m)
    }

    fn search(&mut self, pos: usize) -> bool {
        let n = self.nfs.len();
        if pos == n {
            return true;
        }
        for slot in 0..n {
            if self.used_slot[slot] {
                continue;
            }
            for z in 1..=n {
                if self.placed_var[z - 1] {
                    continue;
                }
                let Some(m) = self.admissible(&self.nfs[slot], z) else {
                    continue;
                };
                self.used_slot[slot] = true;
                self.placed_var[z - 1] = true;
                self.ordering.push(z);
                self.slots.push(slot + 1);
                self.exponents.push(m);
                if self.search(pos + 1) {
                    return true;
                }
                self.used_slot[slot] = false;
                self.placed_var[z - 1] = false;
                self.ordering.pop();
                self.slots.pop();
                self.exponents.pop();
            }
        }
        false
    }
}

// ---- word expression helpers ----

fn power_expr(base: Expr, k: Exponent) -> Expr {
    if k == 1 {
        base
    } else {
        Expr::Power(Box::new(base), k)
    }
}

fn product_expr(mut factors: Vec<Expr>) -> Expr {
    match factors.len() {
        0 => Expr::Empty,
        1 => factors.pop().unwrap(),
        _ => Expr::Product(factors),
    }
}

// ---- general-to-special pipeline ----

/// Result of the general word reduction: a bijective substitution carrying
/// `w` to `w' = x1^m v'` (commutators only), split as `v' = [x1,v1'] v2'`
/// with `w'' = x1^m v2'` ready for the restricted-count recursion.
#[derive(Clone, Debug)]
pub struct WordReduction {
    /// Variable renaming applied first (`renaming[i-1]` = new index of `x_i`).
    pub renaming: Vec<usize>,
    /// `m`: the power of `p` extracted from the abelianization (0 in the
    /// degenerate all-zero branch).
    pub power: u64,
    /// The substitution `u_1 = x1^{k_1}…xn^{k_n}, u_i = x_i`; `None` in the
    /// degenerate branch.
    pub substitution: Option<Substitution>,
    /// `w' = x1^m ∏ [xi,xj]^{c_ij}` in renamed coordinates, exponents mod `M`.
    pub wprime: NormalForm2,
    /// `v1' = ∏_{j>1} xj^{c_1j}`.
    pub v1prime: Word,
    /// `w'' = x1^m v2'`: generator power plus commutators among `x2..xn`.
    pub wpp: NormalForm2,
    pub steps: Vec<Step>,
}

/// Reduce an arbitrary word to the special shape `w'' = x1^m v2'`, with the
/// guarantee `N(G, w) = N(G, w') >= N(G' x G^(n-1), w'')` for every class-≤2
/// group of order dividing `modulus`.
pub fn reduce_word(w: &Word, p: u64, modulus: u64) -> Result<WordReduction, ReduceError> {
    if !is_prime_power_of(modulus, p) {
        return Err(ReduceError::BadModulus { modulus, prime: p });
    }
    let n = w.nvars();
    if n == 0 {
        return Err(ReduceError::EmptyWord);
    }
    let nf = collect(w).reduce_exponents_mod(modulus)?;
    let gens: Vec<u64> = nf.gen_exp().iter().map(|&e| e as u64).collect();
    let mut steps = Vec::new();

    if gens.iter().all(|&a| a == 0) {
        // Degenerate branch: the abelianization vanishes mod M, so the word
        // is already a product of commutators up to M-th powers. m = 0 and
        // no substitution is needed.
        let wprime =
            NormalForm2::from_parts(n, vec![0; n], nf.comm_entries().collect(), Some(modulus))?;
        let (v1prime, wpp) = wprime.split_x1();
        steps.push(Step::Split {
            v1prime: v1prime.to_string(),
            wpp: wpp.to_string(),
        });
        return Ok(WordReduction {
            renaming: (1..=n).collect(),
            power: 0,
            substitution: None,
            wprime,
            v1prime,
            wpp,
            steps,
        });
    }

    // m = p^mu where mu is the least p-valuation among the nonzero
    // abelianized exponents; k_i = a_i / m, so some k_i is a unit mod p.
    let mu = gens
        .iter()
        .filter(|&&a| a != 0)
        .map(|&a| p_valuation(a, p))
        .min()
        .unwrap();
    let m = p.pow(mu);
    let k: Vec<u64> = gens.iter().map(|&a| a / m).collect();
    let i_star = 1 + k
        .iter()
        .position(|&ki| ki % p != 0)
        .expect("some k_i is a unit");
    let mut renaming: Vec<usize> = (1..=n).collect();
    renaming.swap(0, i_star - 1);
    let nf_r = nf.permute_vars(&renaming);
    let mut k_r = vec![0u64; n];
    for i in 1..=n {
        k_r[renaming[i - 1] - 1] = k[i - 1];
    }
    debug_assert!(!k_r[0].is_multiple_of(p));

    // Solve for w' = x1^m ∏ [xi,xj]^{c_ij} such that w'(u) ≡ w mod M, where
    // u_1 = x1^{k_1}…xn^{k_n} and u_i = x_i otherwise. Writing
    // T = m(m-1)/2, collecting w'(u) gives, per pair (a,b):
    //   a = 1:  c_1b·k_1 - T·k_1·k_b            ≡ w_1b
    //   a >= 2: c_ab + c_1b·k_a - c_1a·k_b - T·k_a·k_b ≡ w_ab
    let mm = modulus as u128;
    let t_corr = ((m as u128 * (m as u128).wrapping_sub(1) / 2) % mm) as u64;
    let k1_inv = mod_inverse(k_r[0] % modulus, modulus);
    let mut c: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for b in 2..=n {
        let w1b = nf_r.comm(1, b).rem_euclid(modulus as i128) as u64;
        let rhs = (w1b as u128
            + t_corr as u128 * (k_r[0] % modulus) as u128 % mm * (k_r[b - 1] % modulus) as u128)
            % mm;
        c.insert((1, b), (k1_inv as u128 * rhs % mm) as u64);
    }
    for a in 2..=n {
        for b in (a + 1)..=n {
            let wab = nf_r.comm(a, b).rem_euclid(modulus as i128) as u64;
            let ka = (k_r[a - 1] % modulus) as i128;
            let kb = (k_r[b - 1] % modulus) as i128;
            let val = (wab as i128 + t_corr as i128 * ka % modulus as i128 * kb
                - c[&(1, b)] as i128 * ka
                + c[&(1, a)] as i128 * kb)
                .rem_euclid(modulus as i128) as u64;
            c.insert((a, b), val);
        }
    }

    let mut gen_exp = vec![0 as Exponent; n];
    gen_exp[0] = m as Exponent;
    let comm: BTreeMap<(usize, usize), Exponent> =
        c.iter().map(|(&k2, &v)| (k2, v as Exponent)).collect();
    let wprime = NormalForm2::from_parts(n, gen_exp, comm, Some(modulus))?;

    let u1_factors: Vec<Expr> = (1..=n)
        .filter(|&i| k_r[i - 1] != 0)
        .map(|i| power_expr(Expr::Var(i), k_r[i - 1] as Exponent))
        .collect();
    let mut u_words = vec![Word::new(n, product_expr(u1_factors)).unwrap()];
    for i in 2..=n {
        u_words.push(Word::var(n, i).unwrap());
    }
    let substitution = Substitution::new(n, u_words).unwrap();

    // internal consistency: collecting w'(u) must reproduce the renamed word
    let recomposed = collect(&wprime.to_word().substitute(&substitution).unwrap());
    assert!(
        recomposed.congruent_mod(&nf_r, modulus),
        "w' solve failed: collect(w'(u)) != collect(w) mod {modulus}"
    );
    let witness = check_triangular(&substitution, p)
        .expect("the extraction substitution is triangular by construction");

    steps.push(Step::Substitution {
        u_words: substitution.words().iter().map(|u| u.to_string()).collect(),
        ordering: witness.ordering.clone(),
        exponents: witness
            .exponents
            .iter()
            .map(|&e| i64::try_from(e).unwrap_or(i64::MAX))
            .collect(),
        modulus,
    });
    steps.push(Step::Congruence {
        entries: c
            .iter()
            .map(|(&(i, j), &value)| CongruenceEntry { i, j, value })
            .collect(),
    });
    let (v1prime, wpp) = wprime.split_x1();
    steps.push(Step::Split {
        v1prime: v1prime.to_string(),
        wpp: wpp.to_string(),
    });

    Ok(WordReduction {
        renaming,
        power: m,
        substitution: Some(substitution),
        wprime,
        v1prime,
        wpp,
        steps,
    })
}

// ---- restricted-count recursion ----

fn require_special_form(nf: &NormalForm2) -> Result<(), ReduceError> {
    if nf.nvars() == 0 {
        return Err(ReduceError::EmptyWord);
    }
    for i in 2..=nf.nvars() {
        if nf.gen(i) != 0 {
            return Err(ReduceError::NotReducedForm(format!(
                "generator exponent on x{i} must vanish"
            )));
        }
    }
    for ((i, j), _) in nf.comm_entries() {
        if i == 1 {
            return Err(ReduceError::NotReducedForm(format!(
                "commutator [x{i},x{j}] involves x1"
            )));
        }
    }
    Ok(())
}

/// Count `N(G' x G^(n-1), nf)` for a word `x1^m ∏_{2<=i<j} [xi,xj]^kij`.
///
/// Exact mode recurses into central quotients and equals brute force; bound
/// mode replaces the inner count by the quotient's guaranteed lower bound
/// and always lies in `[|G|^(n-1), exact]`.
pub fn restricted_count(
    g: &GroupTable,
    nf: &NormalForm2,
    mode: Mode,
) -> Result<(u128, Certificate), ReduceError> {
    if !g.is_class2() {
        return Err(ReduceError::NotClass2(g.name().into()));
    }
    let p = g
        .prime()
        .ok_or_else(|| ReduceError::NotPGroup(g.name().into()))?;
    let nf = nf.reduce_exponents_mod(g.order() as u64)?;
    require_special_form(&nf)?;
    let mut steps = Vec::new();
    let value = restricted_count_rec(g, &nf, p, mode, Some(&mut steps))?;
    let bound = amit_bound(g, nf.nvars())?;
    let cert = Certificate {
        mode,
        word: nf.to_string(),
        group: g.name().to_string(),
        steps,
        value: u64::try_from(value).map_err(|_| ReduceError::Overflow)?,
        bound: u64::try_from(bound).map_err(|_| ReduceError::Overflow)?,
        holds: value >= bound,
    };
    Ok((value, cert))
}

fn restricted_count_rec(
    g: &GroupTable,
    nf: &NormalForm2,
    p: u64,
    mode: Mode,
    mut trace: Option<&mut Vec<Step>>,
) -> Result<u128, ReduceError> {
    let n = nf.nvars();
    let order = g.order();
    let m = nf.gen(1) as u64;

    if n <= 2 || !nf.has_commutators() {
        // w = x1^m: coordinate 1 ranges over G' with g^m = 1, the rest are free.
        let torsion = g
            .derived_subgroup()
            .members()
            .iter()
            .filter(|&&h| g.pow(h, m as i128) == 0)
            .count() as u128;
        let value = torsion * (order as u128).pow((n - 1) as u32);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(Step::BaseCase {
                nvars: n,
                power: m,
                torsion: torsion as u64,
                value: u64::try_from(value).map_err(|_| ReduceError::Overflow)?,
            });
        }
        return Ok(value);
    }

    // choose the pair of least p-valuation, lexicographically smallest on ties
    let ((r, s), kval) = nf
        .comm_entries()
        .map(|((i, j), v)| ((i, j), v as u64))
        .min_by_key(|&((i, j), v)| (p_valuation(v, p), i, j))
        .expect("recursive case has a nonzero commutator exponent");
    let valuation = p_valuation(kval, p);

    // rename so the chosen pair becomes (n-1, n), preserving x1 and the
    // relative order of the remaining variables
    let mut renaming = vec![0usize; n];
    renaming[0] = 1;
    renaming[r - 1] = n - 1;
    renaming[s - 1] = n;
    let mut next = 2;
    for i in 2..=n {
        if i != r && i != s {
            renaming[i - 1] = next;
            next += 1;
        }
    }
    let nf_r = nf.permute_vars(&renaming);
    debug_assert_eq!(nf_r.comm(n - 1, n) as u64, kval);

    // solve k'_ij k ≡ k_ij (mod |G|) for every pair
    let mut kprime: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for a in 2..=n {
        for b in (a + 1)..=n {
            let target = nf_r.comm(a, b) as u64;
            kprime.insert((a, b), solve_congruence(kval, target, order as u64, p));
        }
    }

    // merge words: v_n = ∏ x_i^{k'_{i,n}}, v_{n-1} = ∏ x_i^{-k'_{i,n-1}}
    // over x2..x_{n-2}; then w ≡ x1^m v' [x_{n-1} v_n, x_n v_{n-1}]^k with
    // v' = [v_{n-1}, v_n]^k · ∏_{2<=a<b<=n-2} [x_a,x_b]^{k_ab}
    let v_last_factors: Vec<Expr> = (2..=n.saturating_sub(2))
        .filter(|&i| kprime[&(i, n)] != 0)
        .map(|i| power_expr(Expr::Var(i), kprime[&(i, n)] as Exponent))
        .collect();
    let v_second_factors: Vec<Expr> = (2..=n.saturating_sub(2))
        .filter(|&i| kprime[&(i, n - 1)] != 0)
        .map(|i| power_expr(Expr::Var(i), -(kprime[&(i, n - 1)] as Exponent)))
        .collect();
    let v_last = product_expr(v_last_factors);
    let v_second = product_expr(v_second_factors);
    let mut vprime_factors = vec![power_expr(
        Expr::Commutator(Box::new(v_second.clone()), Box::new(v_last.clone())),
        kval as Exponent,
    )];
    for a in 2..=n.saturating_sub(2) {
        for b in (a + 1)..=n.saturating_sub(2) {
            let e = nf_r.comm(a, b);
            if e != 0 {
                let comm = Expr::Commutator(Box::new(Expr::Var(a)), Box::new(Expr::Var(b)));
                vprime_factors.push(power_expr(comm, e));
            }
        }
    }
    let wpp_word = Word::new(
        n,
        product_expr(vec![
            power_expr(Expr::Var(1), m as Exponent),
            product_expr(vprime_factors),
        ]),
    )
    .unwrap();
    let wpp_full = collect(&wpp_word).reduce_exponents_mod(order as u64)?;
    // w'' lives in n-2 variables
    let wpp = NormalForm2::from_parts(
        n - 2,
        wpp_full.gen_exp()[..n - 2].to_vec(),
        wpp_full
            .comm_entries()
            .filter(|&((_, j), _)| j <= n - 2)
            .collect(),
        Some(order as u64),
    )?;
    debug_assert!(wpp_full.gen_exp()[n - 2..].iter().all(|&e| e == 0));
    debug_assert!(wpp_full.comm_entries().all(|((_, j), _)| j <= n - 2));

    // the merge substitution, and the class-2 identity it rests on
    let mut u_words: Vec<Word> = (1..=n).map(|i| Word::var(n, i).unwrap()).collect();
    u_words[n - 2] = Word::new(n, product_expr(vec![Expr::Var(n - 1), v_last.clone()])).unwrap();
    u_words[n - 1] = Word::new(n, product_expr(vec![Expr::Var(n), v_second.clone()])).unwrap();
    let u_merge = Substitution::new(n, u_words).unwrap();
    let w_hat = Word::new(
        n,
        product_expr(vec![
            wpp_word.root().clone(),
            power_expr(
                Expr::Commutator(Box::new(Expr::Var(n - 1)), Box::new(Expr::Var(n))),
                kval as Exponent,
            ),
        ]),
    )
    .unwrap();
    let recomposed = collect(&w_hat.substitute(&u_merge).unwrap());
    assert!(
        recomposed.congruent_mod(&nf_r, order as u64),
        "merge identity failed for {nf_r} on {}",
        g.name()
    );
    assert!(
        check_triangular(&u_merge, p).is_some(),
        "merge substitution must be triangular"
    );

    // sum over g: |C(g^k)| · |[g^k,G]|^(n-2) · inner, with the inner value
    // memoized per distinct commutator-image subgroup
    let mut inner_by_mask: HashMap<Vec<u64>, u128> = HashMap::new();
    let mut summands = Vec::with_capacity(order);
    let mut value: u128 = 0;
    for gi in 0..order {
        let gk = g.pow(gi, kval as i128);
        let cent = g.centralizer(gk).len() as u128;
        let image_mask = g.commutator_image(gk);
        let image = image_mask.len() as u128;
        let inner = match inner_by_mask.get(image_mask.bits()) {
            Some(&v) => v,
            None => {
                let (quotient, _) = g.central_quotient(&image_mask)?;
                let v = match mode {
                    Mode::Bound => (quotient.order() as u128).pow((n - 3) as u32),
                    Mode::Exact => {
                        let nf_q = wpp.reduce_exponents_mod(quotient.order() as u64)?;
                        restricted_count_rec(&quotient, &nf_q, p, mode, None)?
                    }
                };
                inner_by_mask.insert(image_mask.bits().to_vec(), v);
                v
            }
        };
        value += cent * image.pow((n - 2) as u32) * inner;
        if trace.is_some() {
            summands.push(Summand {
                element: gi,
                centralizer: cent as u64,
                image: image as u64,
                inner: u64::try_from(inner).map_err(|_| ReduceError::Overflow)?,
            });
        }
    }

    if let Some(tr) = trace {
        tr.push(Step::PairChoice {
            pair: [r, s],
            k: kval,
            valuation,
            renaming: renaming.clone(),
        });
        tr.push(Step::Congruence {
            entries: kprime
                .iter()
                .map(|(&(i, j), &v)| CongruenceEntry { i, j, value: v })
                .collect(),
        });
        tr.push(Step::Merge {
            u_second_last: u_merge.words()[n - 2].to_string(),
            u_last: u_merge.words()[n - 1].to_string(),
        });
        tr.push(Step::RecursionLevel {
            nvars: n,
            power: m,
            summands,
            value: u64::try_from(value).map_err(|_| ReduceError::Overflow)?,
        });
    }
    Ok(value)
}

// ---- full verification chain ----

/// All numbers of the verification chain
/// `N(G,w) = N(G,w') >= N(G' x G^(n-1), w'') >= |G|^(n-1)`, with per-link
/// flags.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub group: String,
    pub order: u64,
    pub word: String,
    pub nvars: usize,
    pub renaming: Vec<usize>,
    pub wprime: String,
    pub wpp: String,
    pub count_w: u64,
    pub count_wprime: u64,
    pub count_wpp_restricted: u64,
    pub recursion_exact: u64,
    pub recursion_bound: u64,
    pub bound: u64,
    pub link_w_eq_wprime: bool,
    pub link_wprime_ge_wpp: bool,
    pub link_wpp_ge_bound: bool,
    pub link_exact_matches_brute_force: bool,
    pub link_bound_mode_sound: bool,
    pub holds: bool,
}

/// Run the whole pipeline on one word: reduction, recursion in both modes,
/// and brute-force counts of `w`, `w'`, and `w''` on their restriction sets;
/// every link of the chain is checked and reported.
pub fn verify_bound(
    g: &GroupTable,
    w: &Word,
    cfg: &CountConfig,
) -> Result<BoundReport, ReduceError> {
    if !g.is_class2() {
        return Err(ReduceError::NotClass2(g.name().into()));
    }
    let n = w.nvars();
    if n == 0 {
        return Err(ReduceError::EmptyWord);
    }
    if g.order() == 1 {
        // every equation has exactly the all-identity solution
        return Ok(BoundReport {
            group: g.name().into(),
            order: 1,
            word: w.to_string(),
            nvars: n,
            renaming: (1..=n).collect(),
            wprime: String::new(),
            wpp: String::new(),
            count_w: 1,
            count_wprime: 1,
            count_wpp_restricted: 1,
            recursion_exact: 1,
            recursion_bound: 1,
            bound: 1,
            link_w_eq_wprime: true,
            link_wprime_ge_wpp: true,
            link_wpp_ge_bound: true,
            link_exact_matches_brute_force: true,
            link_bound_mode_sound: true,
            holds: true,
        });
    }
    let p = g
        .prime()
        .ok_or_else(|| ReduceError::NotPGroup(g.name().into()))?;
    let red = reduce_word(w, p, g.order() as u64)?;

    let count_w = count_solutions(g, w, &Restriction::full(g, n), cfg)?.count;
    let count_wprime =
        count_solutions(g, &red.wprime.to_word(), &Restriction::full(g, n), cfg)?.count;
    let restricted = Restriction::derived_first(g, n);
    let count_wpp = count_solutions(g, &red.wpp.to_word(), &restricted, cfg)?.count;
    let (exact, _) = restricted_count(g, &red.wpp, Mode::Exact)?;
    let (bound_mode, _) = restricted_count(g, &red.wpp, Mode::Bound)?;
    let bound = amit_bound(g, n)?;

    let link_w_eq_wprime = count_w == count_wprime;
    let link_wprime_ge_wpp = count_wprime >= count_wpp;
    let link_wpp_ge_bound = count_wpp >= bound;
    let link_exact_matches_brute_force = exact == count_wpp;
    let link_bound_mode_sound = bound_mode >= bound && bound_mode <= exact;
    let holds = link_w_eq_wprime
        && link_wprime_ge_wpp
        && link_wpp_ge_bound
        && link_exact_matches_brute_force
        && link_bound_mode_sound;

    let as64 = |v: u128| u64::try_from(v).map_err(|_| ReduceError::Overflow);
    Ok(BoundReport {
        group: g.name().into(),
        order: g.order() as u64,
        word: w.to_string(),
        nvars: n,
        renaming: red.renaming.clone(),
        wprime: red.wprime.to_string(),
        wpp: red.wpp.to_string(),
        count_w: as64(count_w)?,
        count_wprime: as64(count_wprime)?,
        count_wpp_restricted: as64(count_wpp)?,
        recursion_exact: as64(exact)?,
        recursion_bound: as64(bound_mode)?,
        bound: as64(bound)?,
        link_w_eq_wprime,
        link_wprime_ge_wpp,
        link_wpp_ge_bound,
        link_exact_matches_brute_force,
        link_bound_mode_sound,
        holds,
    })
}

/// Full certificate for one word: the reduction steps followed by the
/// recursion trace of the requested mode.
pub fn build_certificate(g: &GroupTable, w: &Word, mode: Mode) -> Result<Certificate, ReduceError> {
    if !g.is_class2() {
        return Err(ReduceError::NotClass2(g.name().into()));
    }
    let p = g
        .prime()
        .ok_or_else(|| ReduceError::NotPGroup(g.name().into()))?;
    let red = reduce_word(w, p, g.order() as u64)?;
    let (value, t7) = restricted_count(g, &red.wpp, mode)?;
    let bound = amit_bound(g, w.nvars())?;
    let mut steps = red.steps;
    steps.extend(t7.steps);
    Ok(Certificate {
        mode,
        word: w.to_string(),
        group: g.name().to_string(),
        steps,
        value: u64::try_from(value).map_err(|_| ReduceError::Overflow)?,
        bound: u64::try_from(bound).map_err(|_| ReduceError::Overflow)?,
        holds: value >= bound,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("certificate contains no recursion trace")]
    NoTrace,
    #[error("recursion level missing a preceding pair choice")]
    MissingPairChoice,
    #[error(
        "summand for element {element}: stored {field} {stored} but group data gives {actual}"
    )]
    SummandMismatch {
        element: usize,
        field: &'static str,
        stored: u64,
        actual: u64,
    },
    #[error("level value {stored} does not match recomputed sum {actual}")]
    ValueMismatch { stored: u64, actual: u64 },
    #[error("base case torsion {stored} does not match recomputed {actual}")]
    TorsionMismatch { stored: u64, actual: u64 },
    #[error("certificate value {value} inconsistent with trace value {trace}")]
    FinalValueMismatch { value: u64, trace: u64 },
    #[error("holds flag is {holds} but value {value} vs bound {bound} says otherwise")]
    HoldsMismatch { holds: bool, value: u64, bound: u64 },
}

/// Re-evaluate the top-level trace of a certificate against the group data:
/// centralizer and image sizes per summand, the per-level sum, bound-mode
/// inner values, and the final value/holds flags.
pub fn replay_certificate(g: &GroupTable, cert: &Certificate) -> Result<(), ReplayError> {
    let mut pair_k: Option<u64> = None;
    let mut trace_value: Option<u64> = None;
    for step in &cert.steps {
        match step {
            Step::PairChoice { k, .. } => pair_k = Some(*k),
            Step::BaseCase {
                nvars,
                power,
                torsion,
                value,
            } => {
                let actual = g
                    .derived_subgroup()
                    .members()
                    .iter()
                    .filter(|&&h| g.pow(h, *power as i128) == 0)
                    .count() as u64;
                if actual != *torsion {
                    return Err(ReplayError::TorsionMismatch {
                        stored: *torsion,
                        actual,
                    });
                }
                let recomputed = actual as u128 * (g.order() as u128).pow((*nvars - 1) as u32);
                if recomputed != *value as u128 {
                    return Err(ReplayError::ValueMismatch {
                        stored: *value,
                        actual: recomputed as u64,
                    });
                }
                trace_value = Some(*value);
                break;
            }
            Step::RecursionLevel {
                nvars,
                summands,
                value,
                ..
            } => {
                let k = pair_k.ok_or(ReplayError::MissingPairChoice)?;
                let mut sum: u128 = 0;
                for s in summands {
                    let gk = g.pow(s.element, k as i128);
                    let cent = g.centralizer(gk).len() as u64;
                    if cent != s.centralizer {
                        return Err(ReplayError::SummandMismatch {
                            element: s.element,
                            field: "centralizer",
                            stored: s.centralizer,
                            actual: cent,
                        });
                    }
                    let image = g.commutator_image(gk).len() as u64;
                    if image != s.image {
                        return Err(ReplayError::SummandMismatch {
                            element: s.element,
                            field: "image",
                            stored: s.image,
                            actual: image,
                        });
                    }
                    if cert.mode == Mode::Bound {
                        let quotient_order = g.order() as u64 / image;
                        let inner = (quotient_order as u128).pow((*nvars - 3) as u32) as u64;
                        if inner != s.inner {
                            return Err(ReplayError::SummandMismatch {
                                element: s.element,
                                field: "inner",
                                stored: s.inner,
                                actual: inner,
                            });
                        }
                    }
                    sum += s.centralizer as u128
                        * (s.image as u128).pow((*nvars - 2) as u32)
                        * s.inner as u128;
                }
                if sum != *value as u128 {
                    return Err(ReplayError::ValueMismatch {
                        stored: *value,
                        actual: sum as u64,
                    });
                }
                trace_value = Some(*value);
                break;
            }
            _ => {}
        }
    }
    let tv = trace_value.ok_or(ReplayError::NoTrace)?;
    if tv != cert.value {
        return Err(ReplayError::FinalValueMismatch {
            value: cert.value,
            trace: tv,
        });
    }
    if cert.holds != (cert.value >= cert.bound) {
        return Err(ReplayError::HoldsMismatch {
            holds: cert.holds,
            value: cert.value,
            bound: cert.bound,
        });
    }
    Ok(())
}
