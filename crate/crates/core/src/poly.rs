//! Sparse multivariate polynomials with exact differentiation.
//!
//! Coefficients are generic so the same machinery backs both the floating
//! point incidence maps and the exact rational vector-field construction.
//! Terms are kept in a `BTreeMap` keyed by exponent vector, which makes term
//! order (and hence printing, serialization, and evaluation order)
//! deterministic.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigRational, FromPrimitive, Zero};

/// Coefficient ring: enough structure for ring arithmetic, exact
/// differentiation, and evaluation.
pub trait Coeff: Clone + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Multiplication by a small natural number (derivative exponents).
    fn scale_usize(&self, n: usize) -> Self;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale_usize(&self, n: usize) -> Self {
        self * n as f64
    }
}

impl Coeff for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn scale_usize(&self, n: usize) -> Self {
        self * BigRational::from_usize(n).expect("usize fits in BigRational")
    }
}

/// Sparse polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPoly<C: Coeff> {
    nvars: usize,
    terms: BTreeMap<Vec<u16>, C>,
}

impl<C: Coeff> MultiPoly<C> {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    /// The monomial `x_var` (zero-indexed).
    pub fn var(nvars: usize, var: usize) -> Self {
        assert!(var < nvars, "variable index out of range");
        let mut exps = vec![0u16; nvars];
        exps[var] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(exps, C::one());
        p
    }

    pub fn monomial(nvars: usize, exps: Vec<u16>, c: C) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &C)> {
        self.terms.iter()
    }

    /// Total degree; zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn insert_term(&mut self, exps: Vec<u16>, c: C) {
        assert_eq!(exps.len(), self.nvars);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().add(&c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c.neg());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u16> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert_term(exps, ca.mul(cb));
            }
        }
        out
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.nvars);
        if c.is_zero() {
            return out;
        }
        for (e, t) in &self.terms {
            let v = t.mul(c);
            if !v.is_zero() {
                out.terms.insert(e.clone(), v);
            }
        }
        out
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Self {
        assert!(var < self.nvars);
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e[var];
            if k == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[var] = k - 1;
            out.insert_term(exps, c.scale_usize(k as usize));
        }
        out
    }

    /// Substitute `subs[i]` for variable `i`. All substituted polynomials
    /// must share a common variable count, which becomes the result's.
    pub fn substitute(&self, subs: &[MultiPoly<C>]) -> Self {
        assert_eq!(subs.len(), self.nvars);
        let out_nvars = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut out = Self::zero(out_nvars);
        for (e, c) in &self.terms {
            let mut term = Self::constant(out_nvars, c.clone());
            for (var, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    term = term.mul(&subs[var]);
                }
            }
            out = out.add(&term);
        }
        out
    }
}

impl MultiPoly<f64> {
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars, "evaluation point dimension");
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = *c;
            for (i, &exp) in e.iter().enumerate() {
                if exp > 0 {
                    m *= point[i].powi(exp as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Gradient with respect to all variables at `point`.
    pub fn gradient_at(&self, point: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.partial(i).eval(point)).collect()
    }
}

impl MultiPoly<BigRational> {
    pub fn eval_rational(&self, point: &[BigRational]) -> BigRational {
        assert_eq!(point.len(), self.nvars);
        let mut acc: BigRational = Zero::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (i, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    m *= point[i].clone();
                }
            }
            acc += m;
        }
        acc
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars);
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = rational_to_f64(c);
            for (i, &exp) in e.iter().enumerate() {
                if exp > 0 {
                    m *= point[i].powi(exp as i32);
                }
            }
            acc += m;
        }
        acc
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    let n = r.numer();
    let d = r.denom();
    // Falls back to a string round-trip only when the parts overflow i128.
    match (i128::try_from(n.clone()), i128::try_from(d.clone())) {
        (Ok(n), Ok(d)) => n as f64 / d as f64,
        _ => {
            let nf: f64 = n.to_string().parse().unwrap_or(f64::NAN);
            let df: f64 = d.to_string().parse().unwrap_or(f64::NAN);
            nf / df
        }
    }
}

/// Render with caller-supplied variable names, deterministic term order.
pub fn format_poly<C: Coeff + fmt::Display>(p: &MultiPoly<C>, names: &[String]) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut parts = Vec::new();
    for (e, c) in p.terms() {
        let mut s = format!("{}", c);
        for (i, &exp) in e.iter().enumerate() {
            if exp == 1 {
                s.push_str(&format!(" * {}", names[i]));
            } else if exp > 1 {
                s.push_str(&format!(" * {}^{}", names[i], exp));
            }
        }
        parts.push(s);
    }
    parts.join(" + ")
}
