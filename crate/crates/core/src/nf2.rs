//! Class-2 normal forms `x1^k1 … xn^kn ∏_{i<j} [xi,xj]^kij`.
//!
//! Collection rewrites an arbitrary word into this shape using the class-2
//! identities `yx = xy[y,x]` and `(xy)^k = x^k y^k [y,x]^(k(k-1)/2)`; the
//! verbal maps of the word and its normal form coincide on every group of
//! nilpotency class at most 2. Exponents stay exact integers until
//! [`NormalForm2::reduce_exponents_mod`] is called.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::words::{Exponent, Expr, Word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Nf2Error {
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("commutator key ({0},{1}) must satisfy 1 <= i < j <= nvars")]
    BadKey(usize, usize),
    #[error("exponent {0} outside [0,{1})")]
    OutOfRange(Exponent, u64),
    #[error("exponent vector length {got} does not match nvars {nvars}")]
    BadLength { got: usize, nvars: usize },
}

/// A word in class-2 normal form: generator exponents `k_i`, commutator
/// exponents `k_ij` for `i < j`, and an optional modulus constraining all
/// stored exponents to `[0, M)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalForm2 {
    nvars: usize,
    gen_exp: Vec<Exponent>,
    comm_exp: BTreeMap<(usize, usize), Exponent>,
    modulus: Option<u64>,
}

fn cadd(a: Exponent, b: Exponent) -> Exponent {
    a.checked_add(b)
        .expect("exponent overflow during collection")
}

fn cmul(a: Exponent, b: Exponent) -> Exponent {
    a.checked_mul(b)
        .expect("exponent overflow during collection")
}

/// `e(e-1)/2`, exact for any integer `e`.
fn choose2(e: Exponent) -> Exponent {
    let p = cmul(e, cadd(e, -1));
    p / 2
}

impl NormalForm2 {
    pub fn zero(nvars: usize) -> NormalForm2 {
        NormalForm2 {
            nvars,
            gen_exp: vec![0; nvars],
            comm_exp: BTreeMap::new(),
            modulus: None,
        }
    }

    pub fn from_parts(
        nvars: usize,
        gen_exp: Vec<Exponent>,
        comm_exp: BTreeMap<(usize, usize), Exponent>,
        modulus: Option<u64>,
    ) -> Result<NormalForm2, Nf2Error> {
        if gen_exp.len() != nvars {
            return Err(Nf2Error::BadLength {
                got: gen_exp.len(),
                nvars,
            });
        }
        for &(i, j) in comm_exp.keys() {
            if i == 0 || i >= j || j > nvars {
                return Err(Nf2Error::BadKey(i, j));
            }
        }
        if let Some(m) = modulus {
            if m == 0 {
                return Err(Nf2Error::ZeroModulus);
            }
            let chk = |e: Exponent| e >= 0 && (e as u128) < m as u128;
            for &e in gen_exp.iter().chain(comm_exp.values()) {
                if !chk(e) {
                    return Err(Nf2Error::OutOfRange(e, m));
                }
            }
        }
        let comm_exp = comm_exp.into_iter().filter(|&(_, v)| v != 0).collect();
        Ok(NormalForm2 {
            nvars,
            gen_exp,
            comm_exp,
            modulus,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn modulus(&self) -> Option<u64> {
        self.modulus
    }

    pub fn gen_exp(&self) -> &[Exponent] {
        &self.gen_exp
    }

    /// Generator exponent of `x_i` (1-based).
    pub fn gen(&self, i: usize) -> Exponent {
        self.gen_exp[i - 1]
    }

    /// Commutator exponent of `[x_i,x_j]`, zero if absent. Requires `i < j`.
    pub fn comm(&self, i: usize, j: usize) -> Exponent {
        debug_assert!(i < j);
        self.comm_exp.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Nonzero commutator entries in lexicographic key order.
    pub fn comm_entries(&self) -> impl Iterator<Item = ((usize, usize), Exponent)> + '_ {
        self.comm_exp.iter().map(|(&k, &v)| (k, v))
    }

    pub fn has_commutators(&self) -> bool {
        !self.comm_exp.is_empty()
    }

    /// Reduce every stored exponent into `[0, M)` and pin the modulus.
    pub fn reduce_exponents_mod(&self, m: u64) -> Result<NormalForm2, Nf2Error> {
        if m == 0 {
            return Err(Nf2Error::ZeroModulus);
        }
        let mm = m as Exponent;
        let gen_exp = self.gen_exp.iter().map(|&e| e.rem_euclid(mm)).collect();
        let comm_exp = self
            .comm_exp
            .iter()
            .map(|(&k, &v)| (k, v.rem_euclid(mm)))
            .filter(|&(_, v)| v != 0)
            .collect();
        Ok(NormalForm2 {
            nvars: self.nvars,
            gen_exp,
            comm_exp,
            modulus: Some(m),
        })
    }

    /// Split off the `x1` commutators: returns `(v1', w'')` where
    /// `v1' = ∏_{j>1} x_j^{k_1j}` and `w''` is `self` with every `k_1j`
    /// removed. Reassembling `x1^k1 · [x1, v1'] · rest` collects back to
    /// `self`.
    pub fn split_x1(&self) -> (Word, NormalForm2) {
        let mut factors = Vec::new();
        let mut rest = self.clone();
        let keys: Vec<(usize, usize)> = self
            .comm_exp
            .keys()
            .copied()
            .filter(|&(i, _)| i == 1)
            .collect();
        for (i, j) in keys {
            let k = rest.comm_exp.remove(&(i, j)).unwrap();
            factors.push(power_expr(Expr::Var(j), k));
        }
        let v1 = Word::new(self.nvars, product_expr(factors)).unwrap();
        (v1, rest)
    }

    /// The normal form rendered back as a word:
    /// `x1^k1 … xn^kn ∏ [xi,xj]^kij` with zero-exponent factors omitted.
    pub fn to_word(&self) -> Word {
        let mut factors = Vec::new();
        for (i, &k) in self.gen_exp.iter().enumerate() {
            if k != 0 {
                factors.push(power_expr(Expr::Var(i + 1), k));
            }
        }
        for (&(i, j), &k) in &self.comm_exp {
            if k != 0 {
                let c = Expr::Commutator(Box::new(Expr::Var(i)), Box::new(Expr::Var(j)));
                factors.push(power_expr(c, k));
            }
        }
        Word::new(self.nvars, product_expr(factors)).unwrap()
    }

    /// Rename variables by `perm` (`perm[i-1]` = new index of `x_i`) and
    /// re-collect. Reordering the generator blocks introduces the appropriate
    /// commutator corrections.
    pub fn permute_vars(&self, perm: &[usize]) -> NormalForm2 {
        let nf = collect(&self.to_word().rename_vars(perm));
        match self.modulus {
            Some(m) => nf.reduce_exponents_mod(m).unwrap(),
            None => nf,
        }
    }

    /// Coordinatewise congruence mod `m`.
    pub fn congruent_mod(&self, other: &NormalForm2, m: u64) -> bool {
        self.nvars == other.nvars
            && self.reduce_exponents_mod(m).unwrap() == other.reduce_exponents_mod(m).unwrap()
    }
}

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

impl fmt::Display for NormalForm2 {
    /// Canonical rendering in the word grammar with explicit exponents,
    /// e.g. `x1^2 x2^1 [x1,x2]^7`. The all-zero form renders empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if first {
                first = false;
                Ok(())
            } else {
                write!(f, " ")
            }
        };
        for (i, &k) in self.gen_exp.iter().enumerate() {
            if k != 0 {
                sep(f)?;
                write!(f, "x{}^{}", i + 1, k)?;
            }
        }
        for (&(i, j), &k) in &self.comm_exp {
            sep(f)?;
            write!(f, "[x{i},x{j}]^{k}")?;
        }
        Ok(())
    }
}

// ---- collection ----

/// Collect a word into class-2 normal form with exact integer exponents
/// (modulus `none`). The verbal maps of `w` and `collect(w)` agree pointwise
/// on every group of class at most 2.
///
/// Products are folded left to right exactly as the insertion-sort collection
/// of the flattened letter sequence would, with the `[y,x]` corrections
/// aggregated per `(i,j)` pair; powers and commutators of collected
/// subwords use the closed-form class-2 identities so that large exponents
/// never expand into letters.
pub fn collect(w: &Word) -> NormalForm2 {
    collect_expr(w.root(), w.nvars())
}

fn collect_expr(e: &Expr, n: usize) -> NormalForm2 {
    match e {
        Expr::Empty => NormalForm2::zero(n),
        Expr::Var(i) => {
            let mut nf = NormalForm2::zero(n);
            nf.gen_exp[i - 1] = 1;
            nf
        }
        Expr::Inverse(b) => class2_power(&collect_expr(b, n), -1),
        Expr::Product(ts) => ts
            .iter()
            .map(|t| collect_expr(t, n))
            .fold(NormalForm2::zero(n), |acc, x| class2_product(&acc, &x)),
        Expr::Power(b, k) => class2_power(&collect_expr(b, n), *k),
        Expr::Commutator(a, b) => class2_commutator(&collect_expr(a, n), &collect_expr(b, n), n),
    }
}

/// Normal form of `a·b`: generator exponents add; commutator exponents add
/// plus the cross term `-k_j(a)·k_i(b)` from moving `b`'s `x_i` block left
/// past `a`'s `x_j` block (`i < j`).
fn class2_product(a: &NormalForm2, b: &NormalForm2) -> NormalForm2 {
    debug_assert_eq!(a.nvars, b.nvars);
    let n = a.nvars;
    let gen_exp = a
        .gen_exp
        .iter()
        .zip(&b.gen_exp)
        .map(|(&x, &y)| cadd(x, y))
        .collect();
    let mut comm_exp: BTreeMap<(usize, usize), Exponent> = a.comm_exp.clone();
    for (&k, &v) in &b.comm_exp {
        let slot = comm_exp.entry(k).or_insert(0);
        *slot = cadd(*slot, v);
    }
    for i in 1..=n {
        if b.gen_exp[i - 1] == 0 {
            continue;
        }
        for j in (i + 1)..=n {
            if a.gen_exp[j - 1] == 0 {
                continue;
            }
            let slot = comm_exp.entry((i, j)).or_insert(0);
            *slot = cadd(*slot, -cmul(a.gen_exp[j - 1], b.gen_exp[i - 1]));
        }
    }
    comm_exp.retain(|_, v| *v != 0);
    NormalForm2 {
        nvars: n,
        gen_exp,
        comm_exp,
        modulus: None,
    }
}

/// Normal form of `a^e`: generators scale by `e`; each `k_ij` becomes
/// `e·k_ij - (e choose 2)·k_i·k_j`.
fn class2_power(a: &NormalForm2, e: Exponent) -> NormalForm2 {
    let n = a.nvars;
    let gen_exp: Vec<Exponent> = a.gen_exp.iter().map(|&x| cmul(x, e)).collect();
    let c2 = choose2(e);
    let mut comm_exp = BTreeMap::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            let base = a.comm_exp.get(&(i, j)).copied().unwrap_or(0);
            let v = cadd(
                cmul(e, base),
                -cmul(c2, cmul(a.gen_exp[i - 1], a.gen_exp[j - 1])),
            );
            if v != 0 {
                comm_exp.insert((i, j), v);
            }
        }
    }
    NormalForm2 {
        nvars: n,
        gen_exp,
        comm_exp,
        modulus: None,
    }
}

/// Normal form of `[a,b]`: central, so it depends only on the abelianized
/// exponents; `k_ij = k_i(a)·k_j(b) - k_j(a)·k_i(b)`.
fn class2_commutator(a: &NormalForm2, b: &NormalForm2, n: usize) -> NormalForm2 {
    let mut comm_exp = BTreeMap::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            let v = cadd(
                cmul(a.gen_exp[i - 1], b.gen_exp[j - 1]),
                -cmul(a.gen_exp[j - 1], b.gen_exp[i - 1]),
            );
            if v != 0 {
                comm_exp.insert((i, j), v);
            }
        }
    }
    NormalForm2 {
        nvars: n,
        gen_exp: vec![0; n],
        comm_exp,
        modulus: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::parse_word;
    use proptest::prelude::*;

    fn w(text: &str, nvars: usize) -> Word {
        parse_word(text, nvars).unwrap()
    }

    /// Reference collection: flatten to letters, then a literal left-to-right
    /// insertion pass accumulating `[y,x]` corrections. Independent of the
    /// closed-form composition rules used by `collect`.
    fn collect_letters(word: &Word) -> NormalForm2 {
        let n = word.nvars();
        let mut gens = vec![0 as Exponent; n];
        let mut comms: BTreeMap<(usize, usize), Exponent> = BTreeMap::new();
        for l in word.flatten_reduce() {
            let (i, e) = (l.var, l.sign as Exponent);
            // bubble x_i^e left past every block x_j^{g_j} with j > i,
            // picking up [x_j, x_i]^{g_j e} = [x_i, x_j]^{-g_j e}
            for j in (i + 1)..=n {
                if gens[j - 1] != 0 {
                    *comms.entry((i, j)).or_insert(0) -= gens[j - 1] * e;
                }
            }
            gens[i - 1] += e;
        }
        comms.retain(|_, v| *v != 0);
        NormalForm2 {
            nvars: n,
            gen_exp: gens,
            comm_exp: comms,
            modulus: None,
        }
    }

    #[test]
    fn collect_swap() {
        let nf = collect(&w("x2 x1", 2));
        assert_eq!(nf.gen_exp(), &[1, 1]);
        assert_eq!(nf.comm(1, 2), -1);
    }

    #[test]
    fn collect_bubble() {
        let nf = collect(&w("x1 x2 x1", 2));
        assert_eq!(nf.gen_exp(), &[2, 1]);
        assert_eq!(nf.comm(1, 2), -1);
    }

    #[test]
    fn collect_square_of_product() {
        let nf = collect(&w("(x1 x2)^2", 2));
        assert_eq!(nf.gen_exp(), &[2, 2]);
        assert_eq!(nf.comm(1, 2), -1);
    }

    #[test]
    fn collect_plain_commutator() {
        let nf = collect(&w("[x1,x2]", 2));
        assert_eq!(nf.gen_exp(), &[0, 0]);
        assert_eq!(nf.comm(1, 2), 1);
    }

    #[test]
    fn reduce_mod_examples() {
        let nf = NormalForm2::from_parts(1, vec![5], BTreeMap::new(), None).unwrap();
        assert_eq!(nf.reduce_exponents_mod(4).unwrap().gen(1), 1);

        let nf = collect(&w("[x1,x2]^-1", 2));
        assert_eq!(nf.comm(1, 2), -1);
        assert_eq!(nf.reduce_exponents_mod(8).unwrap().comm(1, 2), 7);

        let nf = NormalForm2::from_parts(2, vec![3, 0], BTreeMap::new(), None).unwrap();
        for m in [1, 2, 5, 9] {
            assert_eq!(nf.reduce_exponents_mod(m).unwrap().gen(2), 0);
        }
    }

    #[test]
    fn reduce_mod_zero_rejected() {
        assert_eq!(
            collect(&w("x1", 1)).reduce_exponents_mod(0),
            Err(Nf2Error::ZeroModulus)
        );
    }

    #[test]
    fn split_examples() {
        // x1^2 [x1,x2]^3 [x2,x3]  ->  v1' = x2^3, w'' = x1^2 [x2,x3]
        let nf = collect(&w("x1^2 [x1,x2]^3 [x2,x3]", 3));
        let (v1, wpp) = nf.split_x1();
        assert_eq!(v1.to_string(), "x2^3");
        assert_eq!(wpp.to_string(), "x1^2 [x2,x3]^1");

        // pure power: nothing to split
        let nf = collect(&w("x1^5", 3));
        let (v1, wpp) = nf.split_x1();
        assert_eq!(v1.to_string(), "");
        assert_eq!(wpp, nf);

        // x1 [x1,x2]^-1  ->  v1' = x2^-1, w'' = x1
        let nf = collect(&w("x1 [x1,x2]^-1", 2));
        let (v1, wpp) = nf.split_x1();
        assert_eq!(v1.to_string(), "x2^-1");
        assert_eq!(wpp.to_string(), "x1^1");
    }

    #[test]
    fn collect_agrees_pointwise_on_groups() {
        // the swap and bubble examples, checked against the Cayley tables
        use crate::count::evaluate_word;
        use crate::groups::{GroupSpec, DEFAULT_ORDER_CAP};
        let cases = [
            ("x2 x1", "heisenberg(3)"),
            ("x1 x2 x1", "Q8"),
            ("(x1 x2)^2", "Q8"),
        ];
        for (text, group) in cases {
            let g = GroupSpec::parse(group)
                .unwrap()
                .build(DEFAULT_ORDER_CAP)
                .unwrap();
            let word = w(text, 2);
            let nf_word = collect(&word)
                .reduce_exponents_mod(g.order() as u64)
                .unwrap()
                .to_word();
            for a in 0..g.order() {
                for b in 0..g.order() {
                    assert_eq!(
                        evaluate_word(&g, &word, &[a, b]).unwrap(),
                        evaluate_word(&g, &nf_word, &[a, b]).unwrap(),
                        "collect changed the verbal map of {text} on {group}"
                    );
                }
            }
        }
    }

    #[test]
    fn rendering_uses_explicit_exponents() {
        let nf = collect(&w("x1 x2 x1", 2));
        assert_eq!(nf.to_string(), "x1^2 x2^1 [x1,x2]^-1");
        assert_eq!(collect(&w("", 2)).to_string(), "");
    }

    #[test]
    fn permute_vars_recollects() {
        // x2 x1 = x1 x2 [x1,x2]^-1; swapping variables gives x1 x2 with no
        // commutator, not a naive relabeling of the entry.
        let nf = collect(&w("x2 x1", 2));
        let p = nf.permute_vars(&[2, 1]);
        assert_eq!(p.gen_exp(), &[1, 1]);
        assert_eq!(p.comm(1, 2), 0);
    }

    fn arb_letter_word(nvars: usize, max_len: usize) -> impl Strategy<Value = Word> {
        prop::collection::vec((1..=nvars, prop::bool::ANY), 0..=max_len).prop_map(move |letters| {
            let factors: Vec<Expr> = letters
                .into_iter()
                .map(|(v, s)| {
                    if s {
                        Expr::Var(v)
                    } else {
                        Expr::Power(Box::new(Expr::Var(v)), -1)
                    }
                })
                .collect();
            Word::new(nvars, product_expr(factors)).unwrap()
        })
    }

    fn arb_word(nvars: usize) -> impl Strategy<Value = Word> {
        let leaf = prop_oneof![Just(Expr::Empty), (1..=nvars).prop_map(Expr::Var)];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Expr::Product),
                (inner.clone(), -5i128..6).prop_map(|(b, k)| Expr::Power(Box::new(b), k)),
                (inner.clone(), inner)
                    .prop_map(|(a, b)| Expr::Commutator(Box::new(a), Box::new(b))),
            ]
        })
        .prop_map(move |e| Word::new(nvars, e).unwrap())
    }

    proptest! {
        #[test]
        fn collect_matches_letter_insertion_sort(word in arb_word(3)) {
            prop_assert_eq!(collect(&word), collect_letters(&word));
        }

        #[test]
        fn collect_is_a_homomorphism(a in arb_letter_word(3, 8), b in arb_letter_word(3, 8)) {
            let product = Word::new(3, Expr::Product(vec![a.root().clone(), b.root().clone()]))
                .unwrap();
            prop_assert_eq!(
                collect(&product),
                class2_product(&collect(&a), &collect(&b))
            );
        }

        #[test]
        fn to_word_collects_back(word in arb_word(3)) {
            let nf = collect(&word);
            prop_assert_eq!(collect(&nf.to_word()), nf);
        }

        #[test]
        fn split_then_reassemble_is_identity(word in arb_word(3)) {
            let nf = collect(&word);
            let (v1, wpp) = nf.split_x1();
            // x1^k1 · [x1, v1'] · (w'' with k1 dropped) must collect to nf
            let mut gens = wpp.gen_exp().to_vec();
            let k1 = gens[0];
            gens[0] = 0;
            let rest = NormalForm2::from_parts(
                wpp.nvars(),
                gens,
                wpp.comm_entries().collect(),
                None,
            )
            .unwrap();
            let reassembled = Word::new(
                3,
                Expr::Product(vec![
                    Expr::Power(Box::new(Expr::Var(1)), k1),
                    Expr::Commutator(Box::new(Expr::Var(1)), Box::new(v1.root().clone())),
                    rest.to_word().root().clone(),
                ]),
            )
            .unwrap();
            prop_assert_eq!(collect(&reassembled), nf);
        }

        #[test]
        fn reduction_commutes_with_product(
            a in arb_letter_word(3, 8),
            b in arb_letter_word(3, 8),
            m in 1u64..12,
        ) {
            let product = Word::new(3, Expr::Product(vec![a.root().clone(), b.root().clone()]))
                .unwrap();
            let direct = collect(&product).reduce_exponents_mod(m).unwrap();
            let folded = class2_product(&collect(&a), &collect(&b))
                .reduce_exponents_mod(m)
                .unwrap();
            prop_assert_eq!(direct, folded);
        }
    }
}
