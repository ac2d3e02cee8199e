//! Counting solutions of word equations `w = 1` in finite nilpotent groups
//! of class at most 2.
//!
//! The crate provides:
//!
//! - [`words`] — group-word ASTs over `x1..xn` with a parser, canonical
//!   formatter, free reduction, substitution, and abelianization;
//! - [`nf2`] — collection into the class-2 normal form
//!   `x1^k1 … xn^kn ∏ [xi,xj]^kij` and modular exponent arithmetic;
//! - [`groups`] — finite groups as validated Cayley tables, a catalog of
//!   small class-≤2 p-groups, and subgroup/quotient operations;
//! - [`count`] — brute-force solution counting and fiber histograms, the
//!   ground truth everything else is checked against;
//! - [`reduce`] — triangular bijective substitutions, the general-to-special
//!   word pipeline, and the restricted-count recursion in exact and
//!   lower-bound modes, with replayable certificates;
//! - [`cli`] — the `vcount` command-line tool.
//!
//! Everything is deterministic: pure immutable values, seeded sampling, and
//! parallel counting that merges by exact addition, so results are identical
//! for any worker count.

pub mod cli;
pub mod count;
pub mod groups;
pub mod nf2;
pub mod reduce;
pub mod words;
