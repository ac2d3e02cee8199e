//! Brute-force evaluation and counting of word-equation solutions — the
//! ground truth every reduction-level claim is checked against.
//!
//! Counting enumerates the restricted tuple space in row-major order; the
//! outermost coordinate is partitioned across workers and partial counts
//! merge by addition, so results are identical for any worker count. Inside
//! the hot loop a compiled run-length program over the Cayley table replaces
//! AST walking.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::groups::{GroupTable, SubgroupMask};
use crate::words::{Expr, Word};

const MAX_PLAN_RUNS: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CountError {
    #[error("arity mismatch: word uses {expected} variables, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("element {element} out of range for group of order {order}")]
    ElementOutOfRange { element: usize, order: usize },
    #[error("search space {space} exceeds evaluation cap {cap} (pass --force to override)")]
    CapExceeded { space: u128, cap: u128 },
    #[error("compiled evaluation plan exceeds {MAX_PLAN_RUNS} runs")]
    PlanTooLarge,
    #[error("restriction mask for coordinate {coord} is empty")]
    EmptyMask { coord: usize },
    #[error("bad restriction spec: {0}")]
    BadRestrictSpec(String),
    #[error("count does not fit in the result type")]
    Overflow,
}

/// Evaluation limits. `cap` bounds the number of tuples a single counting
/// call may enumerate; exceeding it is an error unless `force` is set.
#[derive(Clone, Copy, Debug)]
pub struct CountConfig {
    pub cap: u128,
    pub force: bool,
}

impl Default for CountConfig {
    fn default() -> Self {
        CountConfig {
            cap: 1_000_000_000,
            force: false,
        }
    }
}

/// A per-coordinate restriction `S = S_1 × … × S_n` of the tuple space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Restriction {
    masks: Vec<SubgroupMask>,
}

impl Restriction {
    pub fn new(masks: Vec<SubgroupMask>) -> Result<Restriction, CountError> {
        for (i, m) in masks.iter().enumerate() {
            if m.is_empty() {
                return Err(CountError::EmptyMask { coord: i + 1 });
            }
        }
        Ok(Restriction { masks })
    }

    /// The unrestricted space `G^(n)`.
    pub fn full(g: &GroupTable, n: usize) -> Restriction {
        Restriction {
            masks: vec![SubgroupMask::full(g.order()); n],
        }
    }

    /// `G' × G^(n-1)`: coordinate 1 restricted to the derived subgroup.
    pub fn derived_first(g: &GroupTable, n: usize) -> Restriction {
        let mut r = Restriction::full(g, n);
        if n >= 1 {
            r.masks[0] = g.derived_subgroup().clone();
        }
        r
    }

    /// Parse a spec like `1:derived,3:center`; unlisted coordinates are full.
    pub fn parse(spec: &str, g: &GroupTable, n: usize) -> Result<Restriction, CountError> {
        let mut r = Restriction::full(g, n);
        for item in spec.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (coord, kind) = item.split_once(':').ok_or_else(|| {
                CountError::BadRestrictSpec(format!("'{item}' is not COORD:KIND"))
            })?;
            let coord: usize = coord
                .trim()
                .parse()
                .map_err(|_| CountError::BadRestrictSpec(format!("bad coordinate in '{item}'")))?;
            if coord == 0 || coord > n {
                return Err(CountError::BadRestrictSpec(format!(
                    "coordinate {coord} out of range 1..={n}"
                )));
            }
            let mask = match kind.trim() {
                "full" => SubgroupMask::full(g.order()),
                "derived" => g.derived_subgroup().clone(),
                "center" => g.center().clone(),
                other => {
                    return Err(CountError::BadRestrictSpec(format!(
                        "unknown mask kind '{other}' (expected full|derived|center)"
                    )))
                }
            };
            r.masks[coord - 1] = mask;
        }
        Ok(r)
    }

    pub fn masks(&self) -> &[SubgroupMask] {
        &self.masks
    }

    pub fn is_full(&self) -> bool {
        self.masks.iter().all(|m| m.len() == m.parent_order())
    }

    pub fn space(&self) -> u128 {
        self.masks.iter().map(|m| m.len() as u128).product()
    }
}

/// Result of a counting run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CountResult {
    pub count: u128,
    pub search_space: u128,
    /// `|G|^(n-1)` (taken as 1 when `n = 0`).
    pub bound: u128,
    pub bound_ok: bool,
}

/// `|G|^(n-1)`, the lower bound the solution count is measured against.
pub fn amit_bound(g: &GroupTable, n: usize) -> Result<u128, CountError> {
    if n == 0 {
        return Ok(1);
    }
    (g.order() as u128)
        .checked_pow((n - 1) as u32)
        .ok_or(CountError::Overflow)
}

/// Evaluate a word at a tuple by walking the AST over the Cayley table.
/// Powers use square-and-multiply; commutators expand as `a^-1 b^-1 a b`.
pub fn evaluate_word(g: &GroupTable, w: &Word, tuple: &[usize]) -> Result<usize, CountError> {
    if tuple.len() != w.nvars() {
        return Err(CountError::ArityMismatch {
            expected: w.nvars(),
            got: tuple.len(),
        });
    }
    for &t in tuple {
        if t >= g.order() {
            return Err(CountError::ElementOutOfRange {
                element: t,
                order: g.order(),
            });
        }
    }
    Ok(eval_expr(g, w.root(), tuple))
}

fn eval_expr(g: &GroupTable, e: &Expr, tuple: &[usize]) -> usize {
    match e {
        Expr::Empty => 0,
        Expr::Var(i) => tuple[i - 1],
        Expr::Inverse(b) => g.inv(eval_expr(g, b, tuple)),
        Expr::Product(ts) => ts
            .iter()
            .fold(0, |acc, t| g.mul(acc, eval_expr(g, t, tuple))),
        Expr::Power(b, k) => g.pow(eval_expr(g, b, tuple), *k),
        Expr::Commutator(a, b) => {
            let (va, vb) = (eval_expr(g, a, tuple), eval_expr(g, b, tuple));
            g.mul(g.mul(g.inv(va), g.inv(vb)), g.mul(va, vb))
        }
    }
}

/// A word compiled to a sequence of `(variable, exponent)` runs with
/// exponents reduced into `[0, |G|)`. Evaluation is one power-table and one
/// multiplication lookup per run.
#[derive(Clone, Debug)]
pub struct EvalPlan {
    nvars: usize,
    runs: Vec<(u32, u16)>,
}

impl EvalPlan {
    pub fn compile(g: &GroupTable, w: &Word) -> Result<EvalPlan, CountError> {
        let n = g.order();
        let mut runs = Vec::new();
        emit(w.root(), n, &mut runs)?;
        let runs = merge_runs(runs, n);
        Ok(EvalPlan {
            nvars: w.nvars(),
            runs,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    #[inline]
    pub fn eval(&self, g: &GroupTable, tuple: &[usize]) -> usize {
        let n = g.order();
        let pt = g.pow_table();
        let mut acc = 0usize;
        for &(v, e) in &self.runs {
            let elem = tuple[v as usize];
            acc = g.mul(acc, pt[elem * n + e as usize] as usize);
        }
        acc
    }
}

fn emit(e: &Expr, order: usize, out: &mut Vec<(u32, u16)>) -> Result<(), CountError> {
    if out.len() > MAX_PLAN_RUNS {
        return Err(CountError::PlanTooLarge);
    }
    match e {
        Expr::Empty => {}
        Expr::Var(i) => out.push(((i - 1) as u32, (1 % order) as u16)),
        Expr::Product(ts) => {
            for t in ts {
                emit(t, order, out)?;
            }
        }
        Expr::Inverse(b) => {
            let mut tmp = Vec::new();
            emit(b, order, &mut tmp)?;
            push_inverted(&tmp, order, out)?;
        }
        Expr::Power(b, k) => {
            // base^k = base^(k mod |G|) since every element order divides |G|
            let em = k.rem_euclid(order as i128) as usize;
            if em == 0 {
                return Ok(());
            }
            if let Expr::Var(i) = b.as_ref() {
                out.push(((i - 1) as u32, em as u16));
                return Ok(());
            }
            let mut tmp = Vec::new();
            emit(b, order, &mut tmp)?;
            if tmp.len().saturating_mul(em) > MAX_PLAN_RUNS {
                return Err(CountError::PlanTooLarge);
            }
            for _ in 0..em {
                out.extend_from_slice(&tmp);
            }
        }
        Expr::Commutator(a, b) => {
            let mut ta = Vec::new();
            emit(a, order, &mut ta)?;
            let mut tb = Vec::new();
            emit(b, order, &mut tb)?;
            push_inverted(&ta, order, out)?;
            push_inverted(&tb, order, out)?;
            out.extend_from_slice(&ta);
            out.extend_from_slice(&tb);
        }
    }
    if out.len() > MAX_PLAN_RUNS {
        return Err(CountError::PlanTooLarge);
    }
    Ok(())
}

fn push_inverted(
    runs: &[(u32, u16)],
    order: usize,
    out: &mut Vec<(u32, u16)>,
) -> Result<(), CountError> {
    if out.len().saturating_add(runs.len()) > MAX_PLAN_RUNS {
        return Err(CountError::PlanTooLarge);
    }
    for &(v, e) in runs.iter().rev() {
        out.push((v, ((order - e as usize) % order) as u16));
    }
    Ok(())
}

fn merge_runs(runs: Vec<(u32, u16)>, order: usize) -> Vec<(u32, u16)> {
    let mut out: Vec<(u32, u16)> = Vec::with_capacity(runs.len());
    for (v, e) in runs {
        match out.last_mut() {
            Some((lv, le)) if *lv == v => {
                *le = ((*le as usize + e as usize) % order) as u16;
                if *le == 0 {
                    out.pop();
                }
            }
            _ => {
                if e != 0 {
                    out.push((v, e));
                }
            }
        }
    }
    out
}

/// Exact count of tuples in the restricted space solving `w = 1`.
///
/// The outermost coordinate is split across the current rayon pool; partial
/// counts merge by addition, so the result is identical for any worker
/// count.
pub fn count_solutions(
    g: &GroupTable,
    w: &Word,
    r: &Restriction,
    cfg: &CountConfig,
) -> Result<CountResult, CountError> {
    let n = w.nvars();
    if r.masks.len() != n {
        return Err(CountError::ArityMismatch {
            expected: n,
            got: r.masks.len(),
        });
    }
    let space = r.space();
    let bound = amit_bound(g, n)?;
    if space > cfg.cap && !cfg.force {
        return Err(CountError::CapExceeded {
            space,
            cap: cfg.cap,
        });
    }
    let plan = EvalPlan::compile(g, w)?;
    let count = if n == 0 {
        // a variable-free word evaluates to the identity
        1
    } else {
        let coords: Vec<Vec<usize>> = r.masks.iter().map(|m| m.members()).collect();
        coords[0]
            .par_iter()
            .map(|&g1| {
                let mut tuple = vec![0usize; n];
                tuple[0] = g1;
                count_tail(g, &plan, &coords, &mut tuple, 1)
            })
            .sum()
    };
    Ok(CountResult {
        count,
        search_space: space,
        bound,
        bound_ok: count >= bound,
    })
}

fn count_tail(
    g: &GroupTable,
    plan: &EvalPlan,
    coords: &[Vec<usize>],
    tuple: &mut [usize],
    depth: usize,
) -> u128 {
    if depth == coords.len() {
        return u128::from(plan.eval(g, tuple) == 0);
    }
    let mut acc = 0;
    for i in 0..coords[depth].len() {
        tuple[depth] = coords[depth][i];
        acc += count_tail(g, plan, coords, tuple, depth + 1);
    }
    acc
}

/// Size of every fiber of the verbal map over the full space: entry `v` is
/// `|{t in G^n : w(t) = v}|`. Sizes sum to `|G|^n` and the identity entry is
/// the full-space solution count.
pub fn fiber_histogram(
    g: &GroupTable,
    w: &Word,
    cfg: &CountConfig,
) -> Result<Vec<u128>, CountError> {
    let n = w.nvars();
    let space = (g.order() as u128)
        .checked_pow(n as u32)
        .ok_or(CountError::Overflow)?;
    if space > cfg.cap && !cfg.force {
        return Err(CountError::CapExceeded {
            space,
            cap: cfg.cap,
        });
    }
    let plan = EvalPlan::compile(g, w)?;
    if n == 0 {
        let mut hist = vec![0u128; g.order()];
        hist[0] = 1;
        return Ok(hist);
    }
    let coords: Vec<Vec<usize>> = (0..n).map(|_| (0..g.order()).collect()).collect();
    let hist = coords[0]
        .par_iter()
        .map(|&g1| {
            let mut tuple = vec![0usize; n];
            tuple[0] = g1;
            let mut local = vec![0u128; g.order()];
            fiber_tail(g, &plan, &coords, &mut tuple, 1, &mut local);
            local
        })
        .reduce(
            || vec![0u128; g.order()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(hist)
}

fn fiber_tail(
    g: &GroupTable,
    plan: &EvalPlan,
    coords: &[Vec<usize>],
    tuple: &mut [usize],
    depth: usize,
    hist: &mut [u128],
) {
    if depth == coords.len() {
        hist[plan.eval(g, tuple)] += 1;
        return;
    }
    for i in 0..coords[depth].len() {
        tuple[depth] = coords[depth][i];
        fiber_tail(g, plan, coords, tuple, depth + 1, hist);
    }
}
