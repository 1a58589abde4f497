//! Multivariate real polynomials and polynomial systems.
//!
//! Polynomials are kept in a canonical merged form: each exponent vector
//! appears at most once and no stored coefficient is zero. Evaluation is
//! available in real and complex arithmetic; the homotopy tracker only ever
//! uses the complex route.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("undeclared variable `{name}` at line {line}, column {col}")]
    UndeclaredVariable { name: String, line: usize, col: usize },
    #[error("missing `vars:` header")]
    MissingHeader,
}

/// A single monomial `coeff * x^exps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    num_vars: usize,
    terms: Vec<Term>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Self {
            num_vars,
            terms: Vec::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        Self::from_terms(
            num_vars,
            vec![Term {
                coeff: c,
                exps: vec![0; num_vars],
            }],
        )
    }

    /// The coordinate polynomial `x_var`.
    pub fn var(num_vars: usize, var: usize) -> Self {
        assert!(var < num_vars, "variable index out of range");
        let mut exps = vec![0; num_vars];
        exps[var] = 1;
        Self::from_terms(num_vars, vec![Term { coeff: 1.0, exps }])
    }

    /// Builds a polynomial from arbitrary terms, merging duplicate exponent
    /// vectors and dropping zero coefficients.
    pub fn from_terms(num_vars: usize, terms: Vec<Term>) -> Self {
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in terms {
            assert_eq!(t.exps.len(), num_vars, "exponent vector length");
            *merged.entry(t.exps).or_insert(0.0) += t.coeff;
        }
        // Graded order, highest degree first, for stable printing.
        let mut terms: Vec<Term> = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exps, coeff)| Term { coeff, exps })
            .collect();
        terms.sort_by(|a, b| {
            b.degree()
                .cmp(&a.degree())
                .then_with(|| b.exps.cmp(&a.exps))
        });
        Self { num_vars, terms }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_terms(
            self.num_vars,
            self.terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * c,
                    exps: t.exps.clone(),
                })
                .collect(),
        )
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.num_vars, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Formal partial derivative with respect to `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps[var] > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                let e = exps[var];
                exps[var] -= 1;
                Term {
                    coeff: t.coeff * e as f64,
                    exps,
                }
            })
            .collect();
        Self::from_terms(self.num_vars, terms)
    }

    /// Highest exponent of each variable, used to size power tables.
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.num_vars];
        for t in &self.terms {
            for (o, &e) in out.iter_mut().zip(&t.exps) {
                *o = (*o).max(e);
            }
        }
        out
    }

    pub fn eval_real(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.num_vars);
        self.terms
            .iter()
            .map(|t| {
                t.exps
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    pub fn eval_complex(&self, x: &[Complex64]) -> Complex64 {
        debug_assert_eq!(x.len(), self.num_vars);
        self.terms
            .iter()
            .map(|t| {
                t.exps
                    .iter()
                    .zip(x)
                    .fold(Complex64::new(t.coeff, 0.0), |acc, (&e, xi)| {
                        acc * xi.powu(e)
                    })
            })
            .sum()
    }

    /// Evaluates against a precomputed table `powers[j][k] = x_j^k`.
    pub fn eval_with_powers(&self, powers: &[Vec<Complex64>]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut m = Complex64::new(t.coeff, 0.0);
            for (j, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    m *= powers[j][e as usize];
                }
            }
            acc += m;
        }
        acc
    }

    pub fn fmt_with_names(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coeff < 0.0;
            let mag = t.coeff.abs();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let factors: Vec<String> = t
                .exps
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(j, &e)| {
                    if e == 1 {
                        names[j].clone()
                    } else {
                        format!("{}^{}", names[j], e)
                    }
                })
                .collect();
            if factors.is_empty() {
                out.push_str(&format!("{mag}"));
            } else if mag == 1.0 {
                out.push_str(&factors.join("*"));
            } else {
                out.push_str(&format!("{mag}*{}", factors.join("*")));
            }
        }
        out
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.num_vars, rhs.num_vars);
        let terms = self.terms.iter().chain(&rhs.terms).cloned().collect();
        Polynomial::from_terms(self.num_vars, terms)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.num_vars, rhs.num_vars);
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    exps: a.exps.iter().zip(&b.exps).map(|(x, y)| x + y).collect(),
                });
            }
        }
        Polynomial::from_terms(self.num_vars, terms)
    }
}

/// `N - d` (or more, before randomization) polynomials in `N` named variables
/// cutting out a pure `d`-dimensional variety.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSystem {
    vars: Vec<String>,
    polys: Vec<Polynomial>,
    dim: usize,
}

impl PolynomialSystem {
    pub fn new(vars: Vec<String>, polys: Vec<Polynomial>, dim: usize) -> Result<Self, PolyError> {
        let n = vars.len();
        if n == 0 {
            return Err(PolyError::InvalidSystem("no variables".into()));
        }
        if dim >= n {
            return Err(PolyError::InvalidSystem(format!(
                "dimension {dim} must be below the number of variables {n}"
            )));
        }
        if polys.len() < n - dim {
            return Err(PolyError::InvalidSystem(format!(
                "a {dim}-dimensional variety in {n} variables needs at least {} equations, got {}",
                n - dim,
                polys.len()
            )));
        }
        if let Some(p) = polys.iter().find(|p| p.num_vars() != n) {
            return Err(PolyError::DimensionMismatch {
                expected: n,
                got: p.num_vars(),
            });
        }
        Ok(Self { vars, polys, dim })
    }

    /// Convenience constructor with variables named `x1..xN`.
    pub fn with_default_names(polys: Vec<Polynomial>, dim: usize) -> Result<Self, PolyError> {
        let n = polys.first().map(Polynomial::num_vars).unwrap_or(0);
        let vars = (1..=n).map(|i| format!("x{i}")).collect();
        Self::new(vars, polys, dim)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn codim(&self) -> usize {
        self.vars.len() - self.dim
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn polys(&self) -> &[Polynomial] {
        &self.polys
    }

    /// True when the system has exactly `N - d` equations.
    pub fn is_reduced(&self) -> bool {
        self.polys.len() == self.codim()
    }

    fn check_len(&self, len: usize) -> Result<(), PolyError> {
        if len != self.num_vars() {
            return Err(PolyError::DimensionMismatch {
                expected: self.num_vars(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[Complex64]) -> Result<Vec<Complex64>, PolyError> {
        self.check_len(x.len())?;
        Ok(self.polys.iter().map(|p| p.eval_complex(x)).collect())
    }

    pub fn evaluate_real(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.check_len(x.len())?;
        Ok(self.polys.iter().map(|p| p.eval_real(x)).collect())
    }

    /// Jacobian matrix, one row per polynomial, evaluated from formal
    /// derivatives.
    pub fn jacobian(&self, x: &[Complex64]) -> Result<DMatrix<Complex64>, PolyError> {
        self.check_len(x.len())?;
        let n = self.num_vars();
        Ok(DMatrix::from_fn(self.polys.len(), n, |i, j| {
            self.polys[i].derivative(j).eval_complex(x)
        }))
    }

    pub fn jacobian_real(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        self.check_len(x.len())?;
        let n = self.num_vars();
        Ok(DMatrix::from_fn(self.polys.len(), n, |i, j| {
            self.polys[i].derivative(j).eval_real(x)
        }))
    }

    /// Replaces `k > N - d` equations by `N - d` random real linear
    /// combinations of them. Coefficients are uniform on `[-1, 1]` with
    /// `|a| >= 0.1`. A system already of size `N - d` is returned unchanged.
    pub fn randomize(&self, seed: u64) -> Result<Self, PolyError> {
        let target = self.codim();
        let k = self.polys.len();
        if k < target {
            return Err(PolyError::InvalidSystem(format!(
                "cannot randomize {k} equations up to {target}"
            )));
        }
        if k == target {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.num_vars();
        let polys = (0..target)
            .map(|_| {
                let mut acc = Polynomial::zero(n);
                for g in &self.polys {
                    let a = random_weight(&mut rng);
                    acc = &acc + &g.scale(a);
                }
                acc
            })
            .collect();
        Self::new(self.vars.clone(), polys, self.dim)
    }

    /// Parses the line-oriented system format:
    ///
    /// ```text
    /// vars: x1 x2
    /// dim: 1
    /// x1^2 + x2^2 - 1
    /// ```
    ///
    /// `dim:` is optional and defaults to `N - #equations`. Lines starting
    /// with `#` are comments.
    pub fn parse(text: &str) -> Result<Self, PolyError> {
        let mut vars: Option<Vec<String>> = None;
        let mut dim: Option<usize> = None;
        let mut polys = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("vars:") {
                let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                for (i, name) in names.iter().enumerate() {
                    let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !valid || names[..i].contains(name) {
                        return Err(ParseError::Syntax {
                            line: line_no,
                            col: raw.find(name.as_str()).map_or(1, |c| c + 1),
                            message: format!("invalid or repeated variable name `{name}`"),
                        }
                        .into());
                    }
                }
                vars = Some(names);
                continue;
            }
            if let Some(rest) = line.strip_prefix("dim:") {
                let d = rest.trim().parse::<usize>().map_err(|_| ParseError::Syntax {
                    line: line_no,
                    col: raw.find("dim:").unwrap_or(0) + 5,
                    message: "expected a non-negative integer".into(),
                })?;
                dim = Some(d);
                continue;
            }
            let names = vars.as_ref().ok_or(ParseError::MissingHeader)?;
            let offset = raw.len() - raw.trim_start().len();
            let mut parser = ExprParser::new(line, line_no, offset, names)?;
            polys.push(parser.parse_line()?);
        }
        let vars = vars.ok_or(ParseError::MissingHeader)?;
        let n = vars.len();
        let dim = match dim {
            Some(d) => d,
            None => n.checked_sub(polys.len()).ok_or_else(|| {
                PolyError::InvalidSystem("more equations than variables; declare `dim:`".into())
            })?,
        };
        Self::new(vars, polys, dim)
    }
}

impl fmt::Display for PolynomialSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vars: {}", self.vars.join(" "))?;
        writeln!(f, "dim: {}", self.dim)?;
        for p in &self.polys {
            writeln!(f, "{}", p.fmt_with_names(&self.vars))?;
        }
        Ok(())
    }
}

fn random_weight(rng: &mut impl Rng) -> f64 {
    loop {
        let a: f64 = rng.random_range(-1.0..=1.0);
        if a.abs() >= 0.1 {
            return a;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct ExprParser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    names: &'a [String],
}

impl<'a> ExprParser<'a> {
    fn new(src: &str, line: usize, offset: usize, names: &'a [String]) -> Result<Self, ParseError> {
        let chars: Vec<char> = src.chars().collect();
        let mut toks = Vec::new();
        let mut i = 0;
        let err = |col: usize, message: String| ParseError::Syntax { line, col, message };
        while i < chars.len() {
            let c = chars[i];
            let col = i + offset + 1;
            match c {
                ' ' | '\t' => i += 1,
                '+' => {
                    toks.push((Tok::Plus, col));
                    i += 1
                }
                '-' => {
                    toks.push((Tok::Minus, col));
                    i += 1
                }
                '*' => {
                    toks.push((Tok::Star, col));
                    i += 1
                }
                '/' => {
                    toks.push((Tok::Slash, col));
                    i += 1
                }
                '^' => {
                    toks.push((Tok::Caret, col));
                    i += 1
                }
                '(' => {
                    toks.push((Tok::LParen, col));
                    i += 1
                }
                ')' => {
                    toks.push((Tok::RParen, col));
                    i += 1
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
                    }
                    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                        let mut j = i + 1;
                        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                            j += 1;
                        }
                        if j < chars.len() && chars[j].is_ascii_digit() {
                            while j < chars.len() && chars[j].is_ascii_digit() {
                                j += 1;
                            }
                            i = j;
                        }
                    }
                    let text: String = chars[start..i].iter().collect();
                    let v = text
                        .parse::<f64>()
                        .map_err(|_| err(col, format!("invalid number `{text}`")))?;
                    toks.push((Tok::Num(v), col));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
                }
                other => return Err(err(col, format!("unexpected character `{other}`"))),
            }
        }
        toks.push((Tok::End, chars.len() + offset + 1));
        Ok(Self {
            toks,
            pos: 0,
            line,
            names,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line,
            col: self.col(),
            message: message.into(),
        }
    }

    fn parse_line(&mut self) -> Result<Polynomial, ParseError> {
        let p = self.expr()?;
        if *self.peek() != Tok::End {
            return Err(self.error(format!("unexpected token {:?}", self.peek())));
        }
        Ok(p)
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = &acc + &self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = &acc * &self.unary()?;
                }
                Tok::Slash => {
                    self.bump();
                    let col = self.col();
                    let divisor = self.unary()?;
                    match divisor.terms() {
                        [t] if t.exps.iter().all(|&e| e == 0) && t.coeff.is_finite() => acc = acc.scale(1.0 / t.coeff),
                        _ => {
                            return Err(ParseError::Syntax {
                                line: self.line,
                                col,
                                message: "can only divide by a nonzero constant".into(),
                            })
                        }
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(-&self.unary()?)
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        match self.peek().clone() {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                self.bump();
                Ok(base.pow(v as u32))
            }
            other => Err(self.error(format!("expected a non-negative integer exponent, found {other:?}"))),
        }
    }

    fn atom(&mut self) -> Result<Polynomial, ParseError> {
        let n = self.names.len();
        let col = self.col();
        match self.bump() {
            Tok::Num(v) => Ok(Polynomial::constant(n, v)),
            Tok::Ident(name) => match self.names.iter().position(|v| *v == name) {
                Some(i) => Ok(Polynomial::var(n, i)),
                None => Err(ParseError::UndeclaredVariable {
                    name,
                    line: self.line,
                    col,
                }),
            },
            Tok::LParen => {
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error("expected `)`"));
                }
                self.bump();
                Ok(inner)
            }
            other => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error(format!("unexpected token {other:?}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn circle() -> PolynomialSystem {
        PolynomialSystem::parse("vars: x1 x2\nx1^2 + x2^2 - 1").unwrap()
    }

    #[test]
    fn circle_evaluation() {
        let sys = circle();
        assert_eq!(sys.polys()[0].terms().len(), 3);
        assert_eq!(sys.dim(), 1);
        assert_eq!(sys.evaluate(&[c(1.0), c(0.0)]).unwrap(), vec![c(0.0)]);
        assert_eq!(sys.evaluate(&[c(0.0), c(0.0)]).unwrap(), vec![c(-1.0)]);
    }

    #[test]
    fn torus_evaluation_and_jacobian() {
        let sys = PolynomialSystem::parse("vars: x1 y1 x2 y2\nx1^2 + y1^2 - 0.5\nx2^2 + y2^2 - 0.5").unwrap();
        let h = 0.5f64.sqrt();
        let p = [c(h), c(0.0), c(h), c(0.0)];
        let v = sys.evaluate(&p).unwrap();
        assert!(v.iter().all(|z| z.norm() < 1e-15));
        let j = sys.jacobian(&p).unwrap();
        let expected = [[2.0 * h, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0 * h, 0.0]];
        for i in 0..2 {
            for k in 0..4 {
                assert!((j[(i, k)] - c(expected[i][k])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn simple_jacobians() {
        let sys = circle();
        let j = sys.jacobian(&[c(1.0), c(0.0)]).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)]), (c(2.0), c(0.0)));

        let prod = PolynomialSystem::parse("vars: x1 x2\nx1*x2").unwrap();
        let j = prod.jacobian(&[c(3.0), c(5.0)]).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)]), (c(5.0), c(3.0)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let sys = circle();
        assert!(matches!(
            sys.evaluate(&[c(1.0)]),
            Err(PolyError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(sys.jacobian(&[c(1.0); 3]).is_err());
    }

    #[test]
    fn canonical_form_merges_and_drops_zeros() {
        let p = Polynomial::from_terms(
            2,
            vec![
                Term { coeff: 1.0, exps: vec![1, 0] },
                Term { coeff: -1.0, exps: vec![1, 0] },
                Term { coeff: 2.0, exps: vec![0, 1] },
                Term { coeff: 3.0, exps: vec![0, 1] },
            ],
        );
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].coeff, 5.0);
        let x = Polynomial::var(2, 0);
        assert!((&x - &x).is_zero());
    }

    #[test]
    fn pentagon_parses() {
        let text = "vars: s1 s2 s3 c1 c2 c3
s1^2 + c1^2 - 1
s2^2 + c2^2 - 1
s3^2 + c3^2 - 1
(s1 + s2 + s3)^2 + (1 + c1 + c2 + c3)^2 - 1";
        let sys = PolynomialSystem::parse(text).unwrap();
        assert_eq!(sys.polys().len(), 4);
        assert_eq!(sys.num_vars(), 6);
        assert_eq!(sys.dim(), 2);
        // Regular pentagon configuration closes the loop.
        let th: Vec<f64> = (1..=3).map(|i| 2.0 * std::f64::consts::PI * i as f64 / 5.0).collect();
        let x: Vec<f64> = th.iter().map(|t| t.sin()).chain(th.iter().map(|t| t.cos())).collect();
        for v in sys.evaluate_real(&x).unwrap() {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = PolynomialSystem::parse("vars: x1 x2\nx1^^2").unwrap_err();
        match err {
            PolyError::Parse(ParseError::Syntax { line, col, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(col, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            PolynomialSystem::parse("vars: x1 x2\nx1 + z"),
            Err(PolyError::Parse(ParseError::UndeclaredVariable { .. }))
        ));
        assert!(matches!(
            PolynomialSystem::parse("x1 + 1"),
            Err(PolyError::Parse(ParseError::MissingHeader))
        ));
        assert!(PolynomialSystem::parse("vars: x\n(x + 1").is_err());
        assert!(PolynomialSystem::parse("vars: x\nx 2").is_err());
        assert!(PolynomialSystem::parse("vars: x\n1/x").is_err());
        assert!(PolynomialSystem::parse("vars: x\nx/0").is_err());
    }

    #[test]
    fn constant_division() {
        let a = PolynomialSystem::parse("vars: x y\nx^2/2 + y^2 - 1/2*3").unwrap();
        let b = PolynomialSystem::parse("vars: x y\n0.5*x^2 + y^2 - 1.5").unwrap();
        assert_eq!(a.polys(), b.polys());
    }

    #[test]
    fn print_parse_round_trip() {
        let text = "vars: a b c\n-2.5*a^3*b + 0.1*c - (a - b)^2 + 1e-7";
        let sys = PolynomialSystem::parse(text).unwrap();
        let again = PolynomialSystem::parse(&sys.to_string()).unwrap();
        assert_eq!(sys, again);
    }

    #[test]
    fn twisted_cubic_randomization() {
        let text = "vars: x1 x2 x3 x4
dim: 2
x2^2 - x3*x1
x2*x3 - x4*x1
x2*x4 - x3^2";
        let sys = PolynomialSystem::parse(text).unwrap();
        assert!(!sys.is_reduced());
        // The hand-randomized pair from the classical example vanishes on the cone.
        let g = sys.polys();
        let f1 = &g[0] + &g[2].scale(2.0);
        let f2 = &g[1] - &g[2].scale(3.0);
        let r = sys.randomize(7).unwrap();
        assert_eq!(r.polys().len(), 2);
        for (s, t) in [(0.3, -1.2), (1.1, 0.4), (-0.7, 0.9)] {
            let x = [s * s * s, s * s * t, s * t * t, t * t * t];
            assert!(f1.eval_real(&x).abs() < 1e-12);
            assert!(f2.eval_real(&x).abs() < 1e-12);
            for v in r.evaluate_real(&x).unwrap() {
                assert!(v.abs() < 1e-12);
            }
        }
        let square = r.randomize(1).unwrap();
        assert_eq!(square, r);
        let too_few = PolynomialSystem::new(sys.vars().to_vec(), vec![g[0].clone()], 3).unwrap();
        assert!(PolynomialSystem::new(sys.vars().to_vec(), vec![g[0].clone()], 2).is_err());
        assert_eq!(too_few.randomize(3).unwrap(), too_few);
    }
}
