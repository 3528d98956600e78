//! Exact quantization of monomials `p^s x^r` and normal ordering.
//!
//! Polynomials in `x`, `p` and `kappa = -i hbar` carry rational coefficients;
//! the commutation rule is `p x = x p + kappa`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;

use crate::error::{Error, Result};

pub const DEGREE_CAP: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    X,
    P,
}

/// Product of operator powers, leftmost factor first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word(pub Vec<(Letter, u32)>);

impl Word {
    pub fn new(parts: &[(Letter, u32)]) -> Self {
        Word(parts.iter().copied().filter(|&(_, e)| e > 0).collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (l, e) in &self.0 {
            let c = match l {
                Letter::X => "x",
                Letter::P => "p",
            };
            if *e == 1 {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Weyl,
    BornJordan,
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn factorial(n: u32) -> i64 {
    (1..=n as i64).product()
}

/// Ordered operator words for the monomial `p^s x^r`:
/// Weyl `2^{-s} sum_l C(s,l) p^{s-l} x^r p^l`, Born-Jordan
/// `(s+1)^{-1} sum_l p^{s-l} x^r p^l`.
pub fn monomial_quantize(s: u32, r: u32, rule: Rule) -> Result<Vec<(Rational64, Word)>> {
    if s + r > DEGREE_CAP {
        return Err(Error::DegreeCap(s + r));
    }
    Ok((0..=s)
        .map(|l| {
            let c = match rule {
                Rule::Weyl => Rational64::new(binomial(s, l), 1i64 << s),
                Rule::BornJordan => Rational64::new(1, s as i64 + 1),
            };
            (c, Word::new(&[(Letter::P, s - l), (Letter::X, r), (Letter::P, l)]))
        })
        .collect())
}

/// Normal-ordered polynomial `sum c x^a p^b kappa^k`, keyed by `(a, b, k)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalPoly(pub BTreeMap<(u32, u32, u32), Rational64>);

impl NormalPoly {
    pub fn one() -> Self {
        let mut m = BTreeMap::new();
        m.insert((0, 0, 0), Rational64::from_integer(1));
        NormalPoly(m)
    }

    fn add_term(&mut self, key: (u32, u32, u32), c: Rational64) {
        let e = self.0.entry(key).or_insert_with(|| Rational64::from_integer(0));
        *e += c;
        if *e == Rational64::from_integer(0) {
            self.0.remove(&key);
        }
    }

    pub fn add(&self, other: &NormalPoly, scale: Rational64) -> NormalPoly {
        let mut out = self.clone();
        for (k, c) in &other.0 {
            out.add_term(*k, *c * scale);
        }
        out
    }

    /// Right-multiply by `x^e`, using `p^b x^e = sum_k k! C(b,k) C(e,k) kappa^k x^{e-k} p^{b-k}`.
    fn times_x(&self, e: u32) -> NormalPoly {
        let mut out = NormalPoly::default();
        for (&(a, b, k), c) in &self.0 {
            for j in 0..=b.min(e) {
                let coef = factorial(j) * binomial(b, j) * binomial(e, j);
                out.add_term((a + e - j, b - j, k + j), *c * Rational64::from_integer(coef));
            }
        }
        out
    }

    fn times_p(&self, e: u32) -> NormalPoly {
        NormalPoly(self.0.iter().map(|(&(a, b, k), c)| ((a, b + e, k), *c)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// True when only `kappa^k` terms with no operator factors remain.
    pub fn is_scalar(&self) -> bool {
        self.0.keys().all(|&(a, b, _)| a == 0 && b == 0)
    }

    pub fn coefficient(&self, a: u32, b: u32, k: u32) -> Rational64 {
        self.0.get(&(a, b, k)).copied().unwrap_or_else(|| Rational64::from_integer(0))
    }
}

impl fmt::Display for NormalPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .0
            .iter()
            .map(|(&(a, b, k), c)| format!("({c}) x^{a} p^{b} (-i hbar)^{k}"))
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

pub fn normal_order_word(w: &Word) -> NormalPoly {
    w.0.iter().fold(NormalPoly::one(), |acc, &(l, e)| match l {
        Letter::X => acc.times_x(e),
        Letter::P => acc.times_p(e),
    })
}

pub fn normal_order(words: &[(Rational64, Word)]) -> NormalPoly {
    words
        .iter()
        .fold(NormalPoly::default(), |acc, (c, w)| acc.add(&normal_order_word(w), *c))
}

/// `Weyl(p^s x^r) - BornJordan(p^s x^r)` after normal ordering.
pub fn weyl_minus_born_jordan(s: u32, r: u32) -> Result<NormalPoly> {
    let w = normal_order(&monomial_quantize(s, r, Rule::Weyl)?);
    let b = normal_order(&monomial_quantize(s, r, Rule::BornJordan)?);
    Ok(w.add(&b, Rational64::from_integer(-1)))
}
