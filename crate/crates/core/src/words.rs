//! Group words over the variables `x1..xn`: AST, parser, canonical formatter,
//! free reduction, substitution, and abelianization.
//!
//! The commutator convention everywhere in this crate is `[a,b] = a^-1 b^-1 a b`.
//! Words are immutable trees; all operations here are pure.

use std::fmt;

use thiserror::Error;

/// Exponents are kept exact. 128 bits leaves ample headroom for the products
/// of exponents that show up during collection.
pub type Exponent = i128;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("variable x{index} out of range 1..={nvars}")]
    VarOutOfRange { index: usize, nvars: usize },
    #[error("arity mismatch: word uses {expected} variables, substitution supplies {got}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Expression node of a group word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    /// The identity word.
    Empty,
    /// Variable `x_i`, 1-based.
    Var(usize),
    Inverse(Box<Expr>),
    Product(Vec<Expr>),
    Power(Box<Expr>, Exponent),
    /// `[a,b] = a^-1 b^-1 a b`.
    Commutator(Box<Expr>, Box<Expr>),
}

/// A group word over `x1..x{nvars}`.
///
/// `nvars` may exceed the largest index actually used; it fixes the arity of
/// the verbal map induced by the word. It is zero only for the empty word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    nvars: usize,
    root: Expr,
}

/// One letter of a flattened word: a variable with sign +1 or -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Letter {
    pub var: usize,
    pub sign: i8,
}

/// Hard limit on flattening output, to fail loudly instead of exhausting
/// memory on pathological exponents. Words this large never occur in the
/// counting and reduction pipelines, which handle powers symbolically.
const MAX_FLAT_LETTERS: usize = 1 << 26;

impl Word {
    pub fn new(nvars: usize, root: Expr) -> Result<Word, WordError> {
        check_vars(&root, nvars)?;
        Ok(Word { nvars, root })
    }

    pub fn identity(nvars: usize) -> Word {
        Word {
            nvars,
            root: Expr::Empty,
        }
    }

    pub fn var(nvars: usize, index: usize) -> Result<Word, WordError> {
        Word::new(nvars, Expr::Var(index))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Reinterpret the word over a different variable count. Fails if a used
    /// index exceeds the new count.
    pub fn with_nvars(&self, nvars: usize) -> Result<Word, WordError> {
        Word::new(nvars, self.root.clone())
    }

    /// Rename variables by `perm`, where `perm[i-1]` is the new index of `x_i`.
    /// `perm` must be a permutation of `1..=nvars`.
    pub fn rename_vars(&self, perm: &[usize]) -> Word {
        assert_eq!(perm.len(), self.nvars, "permutation length mismatch");
        let mut seen = vec![false; self.nvars];
        for &t in perm {
            assert!(
                t >= 1 && t <= self.nvars && !seen[t - 1],
                "not a permutation"
            );
            seen[t - 1] = true;
        }
        fn go(e: &Expr, perm: &[usize]) -> Expr {
            match e {
                Expr::Empty => Expr::Empty,
                Expr::Var(i) => Expr::Var(perm[i - 1]),
                Expr::Inverse(b) => Expr::Inverse(Box::new(go(b, perm))),
                Expr::Product(ts) => Expr::Product(ts.iter().map(|t| go(t, perm)).collect()),
                Expr::Power(b, e2) => Expr::Power(Box::new(go(b, perm)), *e2),
                Expr::Commutator(a, b) => {
                    Expr::Commutator(Box::new(go(a, perm)), Box::new(go(b, perm)))
                }
            }
        }
        Word {
            nvars: self.nvars,
            root: go(&self.root, perm),
        }
    }

    /// Flatten to a freely reduced letter sequence. The result evaluates
    /// identically to the word in every group.
    pub fn flatten_reduce(&self) -> Vec<Letter> {
        let mut out = Vec::new();
        flatten(&self.root, 1, &mut out);
        free_reduce(out)
    }

    /// Signed count of occurrences of each variable in the flattened word;
    /// commutator nodes contribute zero. Computed structurally, which agrees
    /// with counting letters of `flatten_reduce`.
    pub fn abelianized_exponents(&self) -> Vec<Exponent> {
        let mut acc = vec![0; self.nvars];
        fn go(e: &Expr, scale: Exponent, acc: &mut [Exponent]) {
            match e {
                Expr::Empty => {}
                Expr::Var(i) => acc[i - 1] += scale,
                Expr::Inverse(b) => go(b, -scale, acc),
                Expr::Product(ts) => {
                    for t in ts {
                        go(t, scale, acc);
                    }
                }
                Expr::Power(b, k) => go(b, scale * k, acc),
                Expr::Commutator(_, _) => {}
            }
        }
        go(&self.root, 1, &mut acc);
        acc
    }

    /// Substitute `s.words[i-1]` for `x_i`. The result is a word over the
    /// substitution's input variables.
    pub fn substitute(&self, s: &Substitution) -> Result<Word, WordError> {
        if self.nvars != s.words.len() {
            return Err(WordError::ArityMismatch {
                expected: self.nvars,
                got: s.words.len(),
            });
        }
        fn go(e: &Expr, s: &Substitution) -> Expr {
            match e {
                Expr::Empty => Expr::Empty,
                Expr::Var(i) => s.words[i - 1].root.clone(),
                Expr::Inverse(b) => Expr::Inverse(Box::new(go(b, s))),
                Expr::Product(ts) => Expr::Product(ts.iter().map(|t| go(t, s)).collect()),
                Expr::Power(b, k) => Expr::Power(Box::new(go(b, s)), *k),
                Expr::Commutator(a, b) => Expr::Commutator(Box::new(go(a, s)), Box::new(go(b, s))),
            }
        }
        Word::new(s.nvars_in, go(&self.root, s))
    }

    /// Structural normalization: flatten nested products, drop identity
    /// factors, rewrite `Inverse` as `Power(-1)` and strip trivial powers.
    /// The verbal map is unchanged; the formatter emits this form.
    pub fn normalize(&self) -> Word {
        Word {
            nvars: self.nvars,
            root: normalize_expr(&self.root),
        }
    }
}

fn check_vars(e: &Expr, nvars: usize) -> Result<(), WordError> {
    match e {
        Expr::Empty => Ok(()),
        Expr::Var(i) => {
            if *i == 0 || *i > nvars {
                Err(WordError::VarOutOfRange { index: *i, nvars })
            } else {
                Ok(())
            }
        }
        Expr::Inverse(b) | Expr::Power(b, _) => check_vars(b, nvars),
        Expr::Product(ts) => ts.iter().try_for_each(|t| check_vars(t, nvars)),
        Expr::Commutator(a, b) => {
            check_vars(a, nvars)?;
            check_vars(b, nvars)
        }
    }
}

fn flatten(e: &Expr, sign: i8, out: &mut Vec<Letter>) {
    assert!(
        out.len() <= MAX_FLAT_LETTERS,
        "flattened word exceeds {MAX_FLAT_LETTERS} letters"
    );
    match (e, sign) {
        (Expr::Empty, _) => {}
        (Expr::Var(i), s) => out.push(Letter { var: *i, sign: s }),
        (Expr::Inverse(b), s) => flatten(b, -s, out),
        (Expr::Product(ts), 1) => {
            for t in ts {
                flatten(t, 1, out);
            }
        }
        (Expr::Product(ts), _) => {
            for t in ts.iter().rev() {
                flatten(t, -1, out);
            }
        }
        (Expr::Power(b, k), s) => {
            let times = k.unsigned_abs();
            assert!(
                times.saturating_mul(1) <= MAX_FLAT_LETTERS as u128,
                "power exponent too large to flatten"
            );
            let eff = if *k < 0 { -s } else { s };
            for _ in 0..times {
                flatten(b, eff, out);
            }
        }
        (Expr::Commutator(a, b), 1) => {
            flatten(a, -1, out);
            flatten(b, -1, out);
            flatten(a, 1, out);
            flatten(b, 1, out);
        }
        (Expr::Commutator(a, b), _) => {
            // [a,b]^-1 = b^-1 a^-1 b a
            flatten(b, -1, out);
            flatten(a, -1, out);
            flatten(b, 1, out);
            flatten(a, 1, out);
        }
    }
}

/// Cancel adjacent `x x^-1` pairs until none remain. Idempotent.
pub fn free_reduce(letters: Vec<Letter>) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
    for l in letters {
        match out.last() {
            Some(t) if t.var == l.var && t.sign != l.sign => {
                out.pop();
            }
            _ => out.push(l),
        }
    }
    out
}

fn normalize_expr(e: &Expr) -> Expr {
    match e {
        Expr::Empty => Expr::Empty,
        Expr::Var(i) => Expr::Var(*i),
        Expr::Inverse(b) => normalize_expr(&Expr::Power(b.clone(), -1)),
        Expr::Product(ts) => {
            let mut out = Vec::new();
            for t in ts {
                match normalize_expr(t) {
                    Expr::Empty => {}
                    Expr::Product(mut inner) => out.append(&mut inner),
                    other => out.push(other),
                }
            }
            match out.len() {
                0 => Expr::Empty,
                1 => out.pop().unwrap(),
                _ => Expr::Product(out),
            }
        }
        Expr::Power(b, k) => {
            let base = normalize_expr(b);
            match (base, *k) {
                (_, 0) | (Expr::Empty, _) => Expr::Empty,
                (base, 1) => base,
                (base, k) => Expr::Power(Box::new(base), k),
            }
        }
        Expr::Commutator(a, b) => {
            let a = normalize_expr(a);
            let b = normalize_expr(b);
            if a == Expr::Empty || b == Expr::Empty {
                Expr::Empty
            } else {
                Expr::Commutator(Box::new(a), Box::new(b))
            }
        }
    }
}

// ---- formatting ----

impl fmt::Display for Word {
    /// Canonical rendering in the word grammar; `parse_word` of the output
    /// yields `self.normalize()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(&normalize_expr(&self.root), f)
    }
}

fn fmt_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Empty => Ok(()),
        Expr::Product(ts) => {
            for (idx, t) in ts.iter().enumerate() {
                if idx > 0 {
                    write!(f, " ")?;
                }
                fmt_expr(t, f)?;
            }
            Ok(())
        }
        Expr::Var(i) => write!(f, "x{i}"),
        Expr::Commutator(a, b) => {
            write!(f, "[")?;
            fmt_expr(a, f)?;
            write!(f, ",")?;
            fmt_expr(b, f)?;
            write!(f, "]")
        }
        Expr::Power(b, k) => {
            match b.as_ref() {
                Expr::Var(_) | Expr::Commutator(_, _) => fmt_expr(b, f)?,
                _ => {
                    write!(f, "(")?;
                    fmt_expr(b, f)?;
                    write!(f, ")")?;
                }
            }
            write!(f, "^{k}")
        }
        Expr::Inverse(_) => unreachable!("normalized expressions contain no Inverse nodes"),
    }
}

// ---- substitution ----

/// Words `u_1..u_n` over a common variable set `y_1..y_k`, to be substituted
/// into an n-variable word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Substitution {
    nvars_in: usize,
    words: Vec<Word>,
}

impl Substitution {
    pub fn new(nvars_in: usize, words: Vec<Word>) -> Result<Substitution, WordError> {
        for w in &words {
            if w.nvars != nvars_in {
                return Err(WordError::ArityMismatch {
                    expected: nvars_in,
                    got: w.nvars,
                });
            }
        }
        Ok(Substitution { nvars_in, words })
    }

    /// The identity substitution `u_i = x_i` on `n` variables.
    pub fn identity(n: usize) -> Substitution {
        let words = (1..=n).map(|i| Word::var(n, i).unwrap()).collect();
        Substitution { nvars_in: n, words }
    }

    pub fn nvars_in(&self) -> usize {
        self.nvars_in
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }
}

// ---- parser ----

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Var(usize),
    Int(Exponent),
    Caret,
    LBrack,
    RBrack,
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, WordError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            'x' => {
                let start = i;
                i += 1;
                let ds = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == ds {
                    return Err(WordError::Parse {
                        pos: start,
                        msg: "expected digits after 'x'".into(),
                    });
                }
                let idx: usize = text[ds..i].parse().map_err(|_| WordError::Parse {
                    pos: ds,
                    msg: "variable index too large".into(),
                })?;
                toks.push((Tok::Var(idx), start));
            }
            '^' => {
                toks.push((Tok::Caret, i));
                i += 1;
            }
            '[' => {
                toks.push((Tok::LBrack, i));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBrack, i));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            '-' | '+' | '0'..='9' => {
                let start = i;
                if c == '-' || c == '+' {
                    i += 1;
                }
                let ds = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == ds {
                    return Err(WordError::Parse {
                        pos: start,
                        msg: format!("unexpected character '{c}'"),
                    });
                }
                let val: Exponent = text[start..i].parse().map_err(|_| WordError::Parse {
                    pos: start,
                    msg: "integer literal too large".into(),
                })?;
                toks.push((Tok::Int(val), start));
            }
            _ => {
                return Err(WordError::Parse {
                    pos: i,
                    msg: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    nvars: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.len)
    }

    fn word(&mut self) -> Result<Expr, WordError> {
        let mut terms = Vec::new();
        loop {
            match self.peek() {
                None | Some(Tok::Comma) | Some(Tok::RBrack) | Some(Tok::RParen) => break,
                _ => terms.push(self.term()?),
            }
        }
        Ok(match terms.len() {
            0 => Expr::Empty,
            1 => terms.pop().unwrap(),
            _ => Expr::Product(terms),
        })
    }

    fn term(&mut self) -> Result<Expr, WordError> {
        let atom = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            match self.peek() {
                Some(Tok::Int(k)) => {
                    let k = *k;
                    self.pos += 1;
                    Ok(Expr::Power(Box::new(atom), k))
                }
                _ => Err(WordError::Parse {
                    pos: self.here(),
                    msg: "expected integer exponent after '^'".into(),
                }),
            }
        } else {
            Ok(atom)
        }
    }

    fn atom(&mut self) -> Result<Expr, WordError> {
        let pos = self.here();
        match self.peek().cloned() {
            Some(Tok::Var(i)) => {
                self.pos += 1;
                if i == 0 || i > self.nvars {
                    return Err(WordError::Parse {
                        pos,
                        msg: format!("variable x{i} out of range 1..={}", self.nvars),
                    });
                }
                Ok(Expr::Var(i))
            }
            Some(Tok::LBrack) => {
                self.pos += 1;
                let a = self.word()?;
                self.expect(Tok::Comma, "','")?;
                let b = self.word()?;
                self.expect(Tok::RBrack, "']'")?;
                Ok(Expr::Commutator(Box::new(a), Box::new(b)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let w = self.word()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(w)
            }
            Some(other) => Err(WordError::Parse {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
            None => Err(WordError::Parse {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), WordError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(WordError::Parse {
                pos: self.here(),
                msg: format!("expected {what}"),
            })
        }
    }
}

/// Parse a word in the grammar
/// `word := term+ ; term := atom ("^" int)? ; atom := var | "[" word "," word "]" | "(" word ")"`.
///
/// Empty or whitespace-only input parses to the identity word, so that the
/// canonical formatter round-trips.
pub fn parse_word(text: &str, nvars: usize) -> Result<Word, WordError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        nvars,
        len: text.len(),
    };
    let root = p.word()?;
    if p.pos != toks.len() {
        return Err(WordError::Parse {
            pos: p.here(),
            msg: "trailing input".into(),
        });
    }
    Word::new(nvars, root)
}

/// Largest variable index mentioned in `text`, for inferring `nvars` in the CLI.
pub fn max_var_index(text: &str) -> Result<usize, WordError> {
    let toks = lex(text)?;
    Ok(toks
        .iter()
        .filter_map(|(t, _)| match t {
            Tok::Var(i) => Some(*i),
            _ => None,
        })
        .max()
        .unwrap_or(0))
}
