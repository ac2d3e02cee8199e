//! Finite groups as dense Cayley tables, a catalog of class-≤2 p-groups,
//! and subgroup/quotient operations.
//!
//! Tables are validated at load time: identity at index 0, Latin rows and
//! columns, two-sided inverses, associativity (exhaustive up to order 64,
//! sampled above), and nilpotency class at most 2. Non-p-groups and higher
//! class are admitted only through [`LoadPolicy::Unsafe`]; the reduction
//! machinery refuses such tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default cap on catalog group orders.
pub const DEFAULT_ORDER_CAP: u64 = 1024;

/// Seed for the sampled associativity check on large tables.
const ASSOC_SAMPLE_SEED: u64 = 0x9e3779b97f4a7c15;
const ASSOC_SAMPLES: usize = 100_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("unknown group '{0}'")]
    UnknownGroup(String),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("bad builder parameters: {0}")]
    BadParameters(String),
    #[error("group order {order} exceeds cap {cap}")]
    OrderCap { order: u128, cap: u64 },
    #[error("invalid Cayley table: {0}")]
    InvalidTable(String),
    #[error("group has nilpotency class > 2: [g{g},g{h}] does not commute with g{f}")]
    NotClass2 { g: usize, h: usize, f: usize },
    #[error("group of order {0} is not a p-group (pass the unsafe load policy to accept it)")]
    NotPGroup(usize),
    #[error("mask is not a subgroup")]
    NotSubgroup,
    #[error("subgroup is not central")]
    NotCentral,
    #[error("group file format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Witness that `[g,h]` fails to commute with `f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Class2Violation {
    pub g: usize,
    pub h: usize,
    pub f: usize,
}

/// Bitmask over the elements of a fixed parent group. Produced by the
/// subgroup operations (center, centralizers, commutator images, derived
/// subgroup); arbitrary masks may also be built for counting restrictions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubgroupMask {
    parent_order: usize,
    bits: Vec<u64>,
}

impl SubgroupMask {
    pub fn empty(parent_order: usize) -> SubgroupMask {
        SubgroupMask {
            parent_order,
            bits: vec![0; parent_order.div_ceil(64)],
        }
    }

    pub fn full(parent_order: usize) -> SubgroupMask {
        let mut m = SubgroupMask::empty(parent_order);
        for g in 0..parent_order {
            m.insert(g);
        }
        m
    }

    pub fn from_members(parent_order: usize, members: &[usize]) -> SubgroupMask {
        let mut m = SubgroupMask::empty(parent_order);
        for &g in members {
            assert!(g < parent_order, "element {g} out of range");
            m.insert(g);
        }
        m
    }

    pub fn parent_order(&self) -> usize {
        self.parent_order
    }

    pub fn insert(&mut self, g: usize) {
        self.bits[g / 64] |= 1 << (g % 64);
    }

    pub fn contains(&self, g: usize) -> bool {
        self.bits[g / 64] >> (g % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.parent_order)
            .filter(|&g| self.contains(g))
            .collect()
    }

    pub fn bits(&self) -> &[u64] {
        &self.bits
    }

    /// Closed under multiplication and inversion, and contains the identity.
    pub fn is_subgroup(&self, g: &GroupTable) -> bool {
        if self.parent_order != g.order() || !self.contains(0) {
            return false;
        }
        let members = self.members();
        members.iter().all(|&a| {
            self.contains(g.inv(a)) && members.iter().all(|&b| self.contains(g.mul(a, b)))
        })
    }
}

/// How strictly the table validator treats groups outside the supported scope.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadPolicy {
    /// Reject non-p-groups and class > 2.
    Strict,
    /// Accept them; `is_class2`/`prime` record the facts and the reduction
    /// machinery refuses such groups.
    Unsafe,
}

/// A finite group as an immutable Cayley table. The identity is element 0.
#[derive(Debug)]
pub struct GroupTable {
    name: String,
    order: usize,
    mul: Vec<u16>,
    inv: Vec<u16>,
    prime: Option<u64>,
    class2: bool,
    names: Option<Vec<String>>,
    center: OnceLock<SubgroupMask>,
    derived: OnceLock<SubgroupMask>,
    conj_classes: OnceLock<usize>,
    pow_table: OnceLock<Vec<u16>>,
}

impl Clone for GroupTable {
    fn clone(&self) -> Self {
        GroupTable {
            name: self.name.clone(),
            order: self.order,
            mul: self.mul.clone(),
            inv: self.inv.clone(),
            prime: self.prime,
            class2: self.class2,
            names: self.names.clone(),
            center: OnceLock::new(),
            derived: OnceLock::new(),
            conj_classes: OnceLock::new(),
            pow_table: OnceLock::new(),
        }
    }
}

impl GroupTable {
    /// Validate and wrap a flat row-major multiplication table
    /// (`mul[g*order + h] = g·h`).
    pub fn from_mul_table(
        name: impl Into<String>,
        order: usize,
        mul: Vec<u16>,
        names: Option<Vec<String>>,
        policy: LoadPolicy,
    ) -> Result<GroupTable, GroupError> {
        let name = name.into();
        if order == 0 {
            return Err(GroupError::InvalidTable("order must be positive".into()));
        }
        if order > u16::MAX as usize {
            return Err(GroupError::InvalidTable(format!("order {order} too large")));
        }
        if mul.len() != order * order {
            return Err(GroupError::InvalidTable(format!(
                "table has {} entries, expected {}",
                mul.len(),
                order * order
            )));
        }
        if let Some(ns) = &names {
            if ns.len() != order {
                return Err(GroupError::InvalidTable("name list length mismatch".into()));
            }
        }
        let at = |g: usize, h: usize| mul[g * order + h] as usize;
        for (idx, &e) in mul.iter().enumerate() {
            if e as usize >= order {
                return Err(GroupError::InvalidTable(format!(
                    "entry {} at position {} out of range",
                    e, idx
                )));
            }
        }
        // identity at 0
        for g in 0..order {
            if at(0, g) != g || at(g, 0) != g {
                return Err(GroupError::InvalidTable(
                    "row/column 0 is not the identity permutation".into(),
                ));
            }
        }
        // Latin square
        let mut seen = vec![false; order];
        for g in 0..order {
            seen.fill(false);
            for h in 0..order {
                seen[at(g, h)] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(GroupError::InvalidTable(format!(
                    "row {g} is not a permutation"
                )));
            }
            seen.fill(false);
            for h in 0..order {
                seen[at(h, g)] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(GroupError::InvalidTable(format!(
                    "column {g} is not a permutation"
                )));
            }
        }
        // two-sided inverses
        let mut inv = vec![0u16; order];
        for (g, slot) in inv.iter_mut().enumerate() {
            match (0..order).find(|&h| at(g, h) == 0 && at(h, g) == 0) {
                Some(h) => *slot = h as u16,
                None => {
                    return Err(GroupError::InvalidTable(format!(
                        "element {g} has no two-sided inverse"
                    )))
                }
            }
        }
        // associativity: exhaustive up to order 64, sampled above
        let assoc = |a: usize, b: usize, c: usize| at(at(a, b), c) == at(a, at(b, c));
        if order <= 64 {
            for a in 0..order {
                for b in 0..order {
                    for c in 0..order {
                        if !assoc(a, b, c) {
                            return Err(GroupError::InvalidTable(format!(
                                "associativity fails at ({a},{b},{c})"
                            )));
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(ASSOC_SAMPLE_SEED);
            for _ in 0..ASSOC_SAMPLES {
                let a = rng.gen_range(0..order);
                let b = rng.gen_range(0..order);
                let c = rng.gen_range(0..order);
                if !assoc(a, b, c) {
                    return Err(GroupError::InvalidTable(format!(
                        "associativity fails at ({a},{b},{c})"
                    )));
                }
            }
        }

        let prime = prime_power(order as u64).map(|(p, _)| p);
        let mut g = GroupTable {
            name,
            order,
            mul,
            inv,
            prime,
            class2: true,
            names,
            center: OnceLock::new(),
            derived: OnceLock::new(),
            conj_classes: OnceLock::new(),
            pow_table: OnceLock::new(),
        };
        match g.check_class2() {
            Ok(()) => {}
            Err(v) => match policy {
                LoadPolicy::Strict => {
                    return Err(GroupError::NotClass2 {
                        g: v.g,
                        h: v.h,
                        f: v.f,
                    })
                }
                LoadPolicy::Unsafe => g.class2 = false,
            },
        }
        if policy == LoadPolicy::Strict && order > 1 && prime.is_none() {
            return Err(GroupError::NotPGroup(order));
        }
        Ok(g)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Prime `p` if the order is a positive power of `p`, else `None`
    /// (including order 1).
    pub fn prime(&self) -> Option<u64> {
        self.prime
    }

    pub fn is_class2(&self) -> bool {
        self.class2
    }

    pub fn element_names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn element_name(&self, g: usize) -> String {
        match &self.names {
            Some(ns) => ns[g].clone(),
            None => format!("g{g}"),
        }
    }

    #[inline]
    pub fn mul(&self, g: usize, h: usize) -> usize {
        self.mul[g * self.order + h] as usize
    }

    #[inline]
    pub fn inv(&self, g: usize) -> usize {
        self.inv[g] as usize
    }

    pub fn mul_table(&self) -> &[u16] {
        &self.mul
    }

    /// `[g,h] = g^-1 h^-1 g h`.
    #[inline]
    pub fn commutator(&self, g: usize, h: usize) -> usize {
        self.mul(self.mul(self.inv(g), self.inv(h)), self.mul(g, h))
    }

    /// `g^e` by square-and-multiply; any integer exponent (the order of every
    /// element divides the group order, so `e` reduces mod `|G|`).
    pub fn pow(&self, g: usize, e: i128) -> usize {
        let mut e = e.rem_euclid(self.order as i128) as u64;
        let mut base = g;
        let mut acc = 0;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Power table `g^e` for all `g` and `e` in `[0, order)`, built once.
    pub fn pow_table(&self) -> &[u16] {
        self.pow_table.get_or_init(|| {
            let n = self.order;
            let mut t = vec![0u16; n * n];
            for g in 0..n {
                let mut acc = 0usize;
                for e in 1..n {
                    acc = self.mul(acc, g);
                    t[g * n + e] = acc as u16;
                }
            }
            t
        })
    }

    /// True iff every commutator is central; on failure returns a witness
    /// `(g, h, f)` with `[g,h]f ≠ f[g,h]`.
    pub fn check_class2(&self) -> Result<(), Class2Violation> {
        let mut seen: Vec<Option<(usize, usize)>> = vec![None; self.order];
        for g in 0..self.order {
            for h in 0..self.order {
                let c = self.commutator(g, h);
                if seen[c].is_none() {
                    seen[c] = Some((g, h));
                }
            }
        }
        for (c, src) in seen.iter().enumerate() {
            if let Some((g, h)) = src {
                for f in 0..self.order {
                    if self.mul(c, f) != self.mul(f, c) {
                        return Err(Class2Violation { g: *g, h: *h, f });
                    }
                }
            }
        }
        Ok(())
    }

    /// `{h : gh = hg}`.
    pub fn centralizer(&self, g: usize) -> SubgroupMask {
        let mut m = SubgroupMask::empty(self.order);
        for h in 0..self.order {
            if self.mul(g, h) == self.mul(h, g) {
                m.insert(h);
            }
        }
        m
    }

    /// `[g,G] = {[g,h] : h in G}`; a central subgroup when the class is at
    /// most 2, of size `|G| / |C_G(g)|`.
    pub fn commutator_image(&self, g: usize) -> SubgroupMask {
        let mut m = SubgroupMask::empty(self.order);
        for h in 0..self.order {
            m.insert(self.commutator(g, h));
        }
        m
    }

    /// `Z(G)`.
    pub fn center(&self) -> &SubgroupMask {
        self.center.get_or_init(|| {
            let mut m = SubgroupMask::empty(self.order);
            for g in 0..self.order {
                if (0..self.order).all(|h| self.mul(g, h) == self.mul(h, g)) {
                    m.insert(g);
                }
            }
            m
        })
    }

    /// Derived subgroup `G'`: the closure of all commutator values under
    /// products (already closed when the class is at most 2).
    pub fn derived_subgroup(&self) -> &SubgroupMask {
        self.derived.get_or_init(|| {
            let mut set = BTreeSet::new();
            for g in 0..self.order {
                for h in 0..self.order {
                    set.insert(self.commutator(g, h));
                }
            }
            loop {
                let cur: Vec<usize> = set.iter().copied().collect();
                let before = set.len();
                for &a in &cur {
                    for &b in &cur {
                        set.insert(self.mul(a, b));
                    }
                }
                if set.len() == before {
                    break;
                }
            }
            let mut m = SubgroupMask::empty(self.order);
            for g in set {
                m.insert(g);
            }
            m
        })
    }

    pub fn conjugacy_class_count(&self) -> usize {
        *self.conj_classes.get_or_init(|| {
            let mut seen = vec![false; self.order];
            let mut count = 0;
            for g in 0..self.order {
                if seen[g] {
                    continue;
                }
                count += 1;
                for h in 0..self.order {
                    seen[self.mul(self.mul(self.inv(h), g), h)] = true;
                }
            }
            count
        })
    }

    /// Quotient by a central subgroup. Coset representatives are the minimal
    /// element index in each coset (so the identity coset keeps index 0);
    /// returns the quotient table and the projection map element → quotient
    /// index.
    pub fn central_quotient(
        &self,
        k: &SubgroupMask,
    ) -> Result<(GroupTable, Vec<usize>), GroupError> {
        if !k.is_subgroup(self) {
            return Err(GroupError::NotSubgroup);
        }
        let members = k.members();
        for &z in &members {
            if !self.center().contains(z) {
                return Err(GroupError::NotCentral);
            }
        }
        let mut rep = vec![usize::MAX; self.order];
        for (g, slot) in rep.iter_mut().enumerate() {
            *slot = members.iter().map(|&z| self.mul(g, z)).min().unwrap();
        }
        let mut reps: Vec<usize> = rep
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        reps.sort_unstable();
        debug_assert_eq!(reps[0], 0);
        let mut index_of = vec![usize::MAX; self.order];
        for (qi, &r) in reps.iter().enumerate() {
            index_of[r] = qi;
        }
        let qorder = reps.len();
        let mut qmul = vec![0u16; qorder * qorder];
        for (qi, &a) in reps.iter().enumerate() {
            for (qj, &b) in reps.iter().enumerate() {
                qmul[qi * qorder + qj] = index_of[rep[self.mul(a, b)]] as u16;
            }
        }
        let name = format!("{}/{}", self.name, members.len());
        let q = GroupTable::from_mul_table(name, qorder, qmul, None, LoadPolicy::Strict)?;
        let projection = (0..self.order).map(|g| index_of[rep[g]]).collect();
        Ok((q, projection))
    }

    /// Serialize in the group file format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "order {}", self.order);
        if !self.name.is_empty() {
            let _ = writeln!(s, "name {}", self.name);
        }
        if let Some(p) = self.prime {
            let _ = writeln!(s, "prime {p}");
        }
        for g in 0..self.order {
            let row: Vec<String> = (0..self.order)
                .map(|h| self.mul(g, h).to_string())
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

/// Componentwise direct product.
pub fn direct_product(
    a: &GroupTable,
    b: &GroupTable,
    order_cap: u64,
) -> Result<GroupTable, GroupError> {
    let order = a.order() as u128 * b.order() as u128;
    if order > order_cap as u128 {
        return Err(GroupError::OrderCap {
            order,
            cap: order_cap,
        });
    }
    let (na, nb) = (a.order(), b.order());
    let n = na * nb;
    let mut mul = vec![0u16; n * n];
    for ga in 0..na {
        for gb in 0..nb {
            for ha in 0..na {
                for hb in 0..nb {
                    let g = ga * nb + gb;
                    let h = ha * nb + hb;
                    mul[g * n + h] = (a.mul(ga, ha) * nb + b.mul(gb, hb)) as u16;
                }
            }
        }
    }
    let name = format!("{}x{}", a.name(), b.name());
    let policy = if a.is_class2() && b.is_class2() {
        LoadPolicy::Strict
    } else {
        LoadPolicy::Unsafe
    };
    // A product of p-groups for different primes is nilpotent but not a
    // p-group; admit it (the reduction machinery checks `prime` itself).
    match GroupTable::from_mul_table(name.clone(), n, mul.clone(), None, policy) {
        Ok(g) => Ok(g),
        Err(GroupError::NotPGroup(_)) => {
            GroupTable::from_mul_table(name, n, mul, None, LoadPolicy::Unsafe)
        }
        Err(e) => Err(e),
    }
}

// ---- primality helpers ----

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `(p, k)` with `n = p^k`, `k >= 1`, if the order is a prime power.
pub fn prime_power(n: u64) -> Option<(u64, u32)> {
    if n < 2 {
        return None;
    }
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut m = n;
            let mut k = 0;
            while m.is_multiple_of(p) {
                m /= p;
                k += 1;
            }
            return if m == 1 { Some((p, k)) } else { None };
        }
        p += 1;
    }
    Some((n, 1))
}

// ---- catalog builders ----

/// A catalog group description, parsed from names like `Q8`, `C8`,
/// `heisenberg(3)`, or products `Q8xC2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupSpec {
    Trivial,
    Cyclic(u64, u32),
    ElementaryAbelian(u64, u32),
    Heisenberg(u64),
    ExtraspecialExpP(u64),
    ExtraspecialExpP2(u64),
    Dihedral8,
    Quaternion8,
    Product(Box<GroupSpec>, Box<GroupSpec>),
}

/// Builder listing for the `catalog` subcommand.
pub fn builder_listing() -> Vec<(&'static str, &'static str)> {
    vec![
        ("trivial", "order-1 group"),
        ("cyclic(p,k)", "cyclic group of order p^k (also: C<p^k>)"),
        ("elementary_abelian(p,k)", "(Z/p)^k"),
        (
            "heisenberg(p)",
            "3x3 upper unitriangular matrices over Z/p, order p^3",
        ),
        (
            "extraspecial_exp_p(p)",
            "extraspecial group of order p^3 and exponent p (odd p)",
        ),
        (
            "extraspecial_exp_p2(p)",
            "extraspecial/modular group of order p^3 and exponent p^2",
        ),
        ("dihedral8", "dihedral group of order 8 (also: D4)"),
        ("quaternion8", "quaternion group of order 8 (also: Q8)"),
        ("AxB", "direct product of two catalog groups, e.g. Q8xC2"),
    ]
}

impl GroupSpec {
    /// Parse a group name. Atomic names are tried first; otherwise the string
    /// is split at `x` or `*` wherever both sides parse, giving a product.
    pub fn parse(text: &str) -> Result<GroupSpec, GroupError> {
        let s = text.trim();
        if s.is_empty() {
            return Err(GroupError::UnknownGroup(text.into()));
        }
        if let Ok(spec) = GroupSpec::parse_atomic(s) {
            return Ok(spec);
        }
        for (idx, c) in s.char_indices() {
            if c == 'x' || c == '*' {
                if let (Ok(a), Ok(b)) =
                    (GroupSpec::parse(&s[..idx]), GroupSpec::parse(&s[idx + 1..]))
                {
                    return Ok(GroupSpec::Product(Box::new(a), Box::new(b)));
                }
            }
        }
        Err(GroupError::UnknownGroup(text.into()))
    }

    fn parse_atomic(s: &str) -> Result<GroupSpec, GroupError> {
        match s {
            "trivial" => return Ok(GroupSpec::Trivial),
            "Q8" | "quaternion8" => return Ok(GroupSpec::Quaternion8),
            "D4" | "dihedral8" => return Ok(GroupSpec::Dihedral8),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix('C') {
            if let Ok(n) = rest.parse::<u64>() {
                if n == 1 {
                    return Ok(GroupSpec::Trivial);
                }
                return match prime_power(n) {
                    Some((p, k)) => Ok(GroupSpec::Cyclic(p, k)),
                    None => Err(GroupError::BadParameters(format!(
                        "C{n} is not a prime-power cyclic group; use a product such as C2xC3"
                    ))),
                };
            }
        }
        if let Some((fun, args)) = split_call(s) {
            let nums: Result<Vec<u64>, _> =
                args.split(',').map(|a| a.trim().parse::<u64>()).collect();
            let nums = nums.map_err(|_| {
                GroupError::BadParameters(format!("cannot parse arguments in '{s}'"))
            })?;
            return match (fun, nums.as_slice()) {
                ("cyclic", [p, k]) => Ok(GroupSpec::Cyclic(*p, *k as u32)),
                ("elementary_abelian", [p, k]) => Ok(GroupSpec::ElementaryAbelian(*p, *k as u32)),
                ("heisenberg", [p]) => Ok(GroupSpec::Heisenberg(*p)),
                ("extraspecial_exp_p", [p]) => Ok(GroupSpec::ExtraspecialExpP(*p)),
                ("extraspecial_exp_p2", [p]) => Ok(GroupSpec::ExtraspecialExpP2(*p)),
                _ => Err(GroupError::UnknownGroup(s.into())),
            };
        }
        Err(GroupError::UnknownGroup(s.into()))
    }

    pub fn order(&self) -> u128 {
        match self {
            GroupSpec::Trivial => 1,
            GroupSpec::Cyclic(p, k) | GroupSpec::ElementaryAbelian(p, k) => (*p as u128).pow(*k),
            GroupSpec::Heisenberg(p)
            | GroupSpec::ExtraspecialExpP(p)
            | GroupSpec::ExtraspecialExpP2(p) => (*p as u128).pow(3),
            GroupSpec::Dihedral8 | GroupSpec::Quaternion8 => 8,
            GroupSpec::Product(a, b) => a.order() * b.order(),
        }
    }

    pub fn build(&self, order_cap: u64) -> Result<GroupTable, GroupError> {
        let order = self.order();
        if order > order_cap as u128 {
            return Err(GroupError::OrderCap {
                order,
                cap: order_cap,
            });
        }
        match self {
            GroupSpec::Trivial => {
                GroupTable::from_mul_table("trivial", 1, vec![0], None, LoadPolicy::Strict)
            }
            GroupSpec::Cyclic(p, k) => build_cyclic(*p, *k),
            GroupSpec::ElementaryAbelian(p, k) => build_elementary_abelian(*p, *k),
            GroupSpec::Heisenberg(p) => build_heisenberg(*p, format!("heisenberg({p})")),
            GroupSpec::ExtraspecialExpP(p) => {
                if *p == 2 {
                    return Err(GroupError::BadParameters(
                        "extraspecial_exp_p requires an odd prime".into(),
                    ));
                }
                build_heisenberg(*p, format!("extraspecial_exp_p({p})"))
            }
            GroupSpec::ExtraspecialExpP2(p) => build_extraspecial_exp_p2(*p),
            GroupSpec::Dihedral8 => build_dihedral8(),
            GroupSpec::Quaternion8 => build_quaternion8(),
            GroupSpec::Product(a, b) => {
                let ga = a.build(order_cap)?;
                let gb = b.build(order_cap)?;
                direct_product(&ga, &gb, order_cap)
            }
        }
    }
}

fn require_prime(p: u64) -> Result<(), GroupError> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(GroupError::NotPrime(p))
    }
}

fn build_cyclic(p: u64, k: u32) -> Result<GroupTable, GroupError> {
    require_prime(p)?;
    if k == 0 {
        return Err(GroupError::BadParameters("cyclic(p,k) needs k >= 1".into()));
    }
    let n = (p as usize).pow(k);
    let mut mul = vec![0u16; n * n];
    for a in 0..n {
        for b in 0..n {
            mul[a * n + b] = ((a + b) % n) as u16;
        }
    }
    GroupTable::from_mul_table(format!("C{n}"), n, mul, None, LoadPolicy::Strict)
}

fn build_elementary_abelian(p: u64, k: u32) -> Result<GroupTable, GroupError> {
    require_prime(p)?;
    if k == 0 {
        return Err(GroupError::BadParameters(
            "elementary_abelian(p,k) needs k >= 1".into(),
        ));
    }
    let pu = p as usize;
    let n = pu.pow(k);
    let digits = |mut g: usize| -> Vec<usize> {
        let mut d = vec![0; k as usize];
        for slot in d.iter_mut() {
            *slot = g % pu;
            g /= pu;
        }
        d
    };
    let mut mul = vec![0u16; n * n];
    for g in 0..n {
        for h in 0..n {
            let (dg, dh) = (digits(g), digits(h));
            let mut out = 0;
            for i in (0..k as usize).rev() {
                out = out * pu + (dg[i] + dh[i]) % pu;
            }
            mul[g * n + h] = out as u16;
        }
    }
    GroupTable::from_mul_table(
        format!("elementary_abelian({p},{k})"),
        n,
        mul,
        None,
        LoadPolicy::Strict,
    )
}

/// Upper unitriangular 3x3 matrices over Z/p: triples `(a,b,c)` with
/// `(a,b,c)·(a',b',c') = (a+a', b+b', c+c'+a·b')`, indexed `a·p² + b·p + c`.
fn build_heisenberg(p: u64, name: String) -> Result<GroupTable, GroupError> {
    require_prime(p)?;
    let pu = p as usize;
    let n = pu * pu * pu;
    let idx = |a: usize, b: usize, c: usize| (a * pu + b) * pu + c;
    let mut mul = vec![0u16; n * n];
    for a in 0..pu {
        for b in 0..pu {
            for c in 0..pu {
                for a2 in 0..pu {
                    for b2 in 0..pu {
                        for c2 in 0..pu {
                            let g = idx(a, b, c);
                            let h = idx(a2, b2, c2);
                            mul[g * n + h] =
                                idx((a + a2) % pu, (b + b2) % pu, (c + c2 + a * b2) % pu) as u16;
                        }
                    }
                }
            }
        }
    }
    GroupTable::from_mul_table(name, n, mul, None, LoadPolicy::Strict)
}

/// `<a,b | a^{p²}=1, b^p=1, b⁻¹ab = a^{1+p}>`: elements `a^i b^j` indexed
/// `i·p + j`, with `(i,j)·(i',j') = (i + i'(1+p)^j mod p², j+j' mod p)`.
fn build_extraspecial_exp_p2(p: u64) -> Result<GroupTable, GroupError> {
    require_prime(p)?;
    let pu = p as usize;
    let p2 = pu * pu;
    let n = p2 * pu;
    let mut twist = vec![1usize; pu];
    for j in 1..pu {
        twist[j] = twist[j - 1] * (1 + pu) % p2;
    }
    let mut mul = vec![0u16; n * n];
    for i in 0..p2 {
        for (j, &tw) in twist.iter().enumerate() {
            for i2 in 0..p2 {
                for j2 in 0..pu {
                    let g = i * pu + j;
                    let h = i2 * pu + j2;
                    mul[g * n + h] = (((i + i2 * tw) % p2) * pu + (j + j2) % pu) as u16;
                }
            }
        }
    }
    GroupTable::from_mul_table(
        format!("extraspecial_exp_p2({p})"),
        n,
        mul,
        None,
        LoadPolicy::Strict,
    )
}

/// Dihedral group of order 8: `r^a s^b` indexed `a + 4b`.
fn build_dihedral8() -> Result<GroupTable, GroupError> {
    let n = 8;
    let mut mul = vec![0u16; n * n];
    for a in 0..4i64 {
        for b in 0..2i64 {
            for c in 0..4i64 {
                for d in 0..2i64 {
                    let a2 = (a + if b == 0 { c } else { -c }).rem_euclid(4);
                    let b2 = (b + d) % 2;
                    mul[((a + 4 * b) * 8 + c + 4 * d) as usize] = (a2 + 4 * b2) as u16;
                }
            }
        }
    }
    let names = ["1", "r", "r2", "r3", "s", "rs", "r2s", "r3s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    GroupTable::from_mul_table("D4", 8, mul, Some(names), LoadPolicy::Strict)
}

/// Quaternion group `{±1, ±i, ±j, ±k}` with `1,-1,i,-i,j,-j,k,-k` at
/// indices `0..8`.
fn build_quaternion8() -> Result<GroupTable, GroupError> {
    // basis products (basis 0..4 = 1,i,j,k) as (sign, basis)
    let bm = |a: usize, b: usize| -> (i64, usize) {
        match (a, b) {
            (0, x) => (1, x),
            (x, 0) => (1, x),
            (1, 1) | (2, 2) | (3, 3) => (-1, 0),
            (1, 2) => (1, 3),
            (2, 1) => (-1, 3),
            (2, 3) => (1, 1),
            (3, 2) => (-1, 1),
            (3, 1) => (1, 2),
            (1, 3) => (-1, 2),
            _ => unreachable!(),
        }
    };
    let idx = |s: i64, b: usize| b * 2 + usize::from(s < 0);
    let mut mul = vec![0u16; 64];
    for g in 0..8 {
        for h in 0..8 {
            let (sg, bg) = (if g % 2 == 0 { 1 } else { -1 }, g / 2);
            let (sh, bh) = (if h % 2 == 0 { 1 } else { -1 }, h / 2);
            let (s, b) = bm(bg, bh);
            mul[g * 8 + h] = idx(sg * sh * s, b) as u16;
        }
    }
    let names = ["1", "-1", "i", "-i", "j", "-j", "k", "-k"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    GroupTable::from_mul_table("Q8", 8, mul, Some(names), LoadPolicy::Strict)
}

/// The nine groups of order at most 27 used for the default verification
/// sweeps.
pub fn acceptance_corpus() -> Vec<GroupTable> {
    [
        "C2",
        "C4",
        "C8",
        "C2xC2",
        "C3",
        "C9",
        "Q8",
        "D4",
        "heisenberg(3)",
    ]
    .iter()
    .map(|n| {
        GroupSpec::parse(n)
            .unwrap()
            .build(DEFAULT_ORDER_CAP)
            .unwrap()
    })
    .collect()
}

/// The full default catalog corpus (orders up to 64).
pub fn default_corpus() -> Vec<GroupTable> {
    [
        "trivial",
        "C2",
        "C3",
        "C4",
        "C5",
        "C7",
        "C8",
        "C9",
        "C16",
        "C25",
        "C27",
        "C32",
        "C49",
        "C64",
        "C2xC2",
        "C2xC2xC2",
        "C4xC2",
        "C3xC3",
        "C4xC4",
        "C8xC2",
        "C3xC9",
        "Q8",
        "D4",
        "heisenberg(2)",
        "heisenberg(3)",
        "extraspecial_exp_p(3)",
        "extraspecial_exp_p2(2)",
        "extraspecial_exp_p2(3)",
        "Q8xC2",
        "D4xC2",
        "Q8xC4",
        "D4xC2xC2",
        "Q8xQ8",
    ]
    .iter()
    .map(|n| {
        GroupSpec::parse(n)
            .unwrap()
            .build(DEFAULT_ORDER_CAP)
            .unwrap()
    })
    .collect()
}

fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let close = s.rfind(')')?;
    if close != s.len() - 1 || close <= open {
        return None;
    }
    Some((&s[..open], &s[open + 1..close]))
}

// ---- group file format ----

/// Parse the text group file format: `order N`, optional `name` and `prime`
/// lines, then `N` rows of `N` whitespace-separated indices (`row g`,
/// `column h` giving `g·h`). Lines starting with `#` are comments.
pub fn parse_group_file(text: &str, policy: LoadPolicy) -> Result<GroupTable, GroupError> {
    let mut order: Option<usize> = None;
    let mut name: Option<String> = None;
    let mut declared_prime: Option<u64> = None;
    let mut rows: Vec<u16> = Vec::new();
    let mut rows_seen = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |msg: &str| GroupError::Format {
            line: lineno + 1,
            msg: msg.into(),
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if order.is_none() {
            let rest = line
                .strip_prefix("order")
                .ok_or_else(|| err("expected 'order N' first"))?;
            order = Some(rest.trim().parse().map_err(|_| err("cannot parse order"))?);
            continue;
        }
        let n = order.unwrap();
        if rows_seen == 0 {
            if let Some(rest) = line.strip_prefix("name ") {
                name = Some(rest.trim().to_string());
                continue;
            }
            if let Some(rest) = line.strip_prefix("prime ") {
                declared_prime = Some(rest.trim().parse().map_err(|_| err("cannot parse prime"))?);
                continue;
            }
        }
        let entries: Result<Vec<u16>, _> =
            line.split_whitespace().map(|t| t.parse::<u16>()).collect();
        let entries = entries.map_err(|_| err("cannot parse table row"))?;
        if entries.len() != n {
            return Err(err(&format!(
                "row has {} entries, expected {n}",
                entries.len()
            )));
        }
        rows.extend(entries);
        rows_seen += 1;
    }
    let n = order.ok_or(GroupError::Format {
        line: 0,
        msg: "missing 'order N'".into(),
    })?;
    if rows_seen != n {
        return Err(GroupError::Format {
            line: 0,
            msg: format!("found {rows_seen} rows, expected {n}"),
        });
    }
    let g =
        GroupTable::from_mul_table(name.unwrap_or_else(|| "file".into()), n, rows, None, policy)?;
    if let Some(p) = declared_prime {
        if g.prime() != Some(p) {
            return Err(GroupError::Format {
                line: 0,
                msg: format!("declared prime {p} does not match table order {n}"),
            });
        }
    }
    Ok(g)
}
