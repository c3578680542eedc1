//! The trilinear curvature functional and its determinant calculus.
//!
//! For a trilinear form Q on R^{d1} x R^k x R^d, the degree-s determinant
//! polynomial is
//!
//! ```text
//! Q_s(t, v_1..v_s, w_1..w_s) = det [ Q(t, v_a, w_b) ]_{a,b=1..s}
//! ```
//!
//! a homogeneous polynomial of degree s in t. Directional derivative
//! coefficients `(u.∇_t)^α Q_s(t, v_β, w_γ)` are computed by exact
//! multilinear expansion: differentiating a product of s linear forms spreads
//! the s directions over the factors by a permutation sum, so
//!
//! ```text
//! (u.∇)^α Q_s = Σ_{ρ in S_s} det [ Q(u_{ρ(a)}, v_a, w_b) ]_{a,b}
//! ```
//!
//! independent of the base point t. The scalar 𝒬 aggregates the squares of
//! these coefficients over all multiindex triples with multinomial weights
//! (s!)^3/(α!β!γ!), plus the constant 1; 𝒬_sup replaces the derivative sum
//! by suprema of |Q_s| over the ellipsoid spanned by the u-basis.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multilinear::{dual_basis, VectorList};

/// Lattice point (α, β, γ) with |α| = |β| = |γ|.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiindexTriple {
    pub alpha: Vec<u16>,
    pub beta: Vec<u16>,
    pub gamma: Vec<u16>,
}

impl MultiindexTriple {
    pub fn new(alpha: Vec<u16>, beta: Vec<u16>, gamma: Vec<u16>) -> Result<Self> {
        let s = weight(&alpha);
        if weight(&beta) != s || weight(&gamma) != s {
            return Err(Error::DimensionMismatch(
                "multiindex triple must have |alpha| = |beta| = |gamma|".into(),
            ));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn origin(d1: usize, k: usize, d: usize) -> Self {
        Self {
            alpha: vec![0; d1],
            beta: vec![0; k],
            gamma: vec![0; d],
        }
    }

    pub fn order(&self) -> usize {
        weight(&self.alpha)
    }

    /// Concatenated coordinates as a lattice vector in R^{d1+k+d}.
    pub fn as_point(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .map(|&x| x as f64)
            .collect()
    }
}

pub fn weight(m: &[u16]) -> usize {
    m.iter().map(|&x| x as usize).sum()
}

/// All multiindices of the given weight in `dim` variables, lexicographic.
pub fn multiindices(dim: usize, w: usize) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    let mut cur = vec![0u16; dim];
    fill(&mut out, &mut cur, 0, w);
    return out;

    fn fill(out: &mut Vec<Vec<u16>>, cur: &mut Vec<u16>, pos: usize, left: usize) {
        if pos + 1 == cur.len() {
            cur[pos] = left as u16;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for take in (0..=left).rev() {
            cur[pos] = take as u16;
            fill(out, cur, pos + 1, left - take);
        }
        cur[pos] = 0;
    }
}

/// Dense trilinear form on R^{d1} x R^k x R^d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrilinearForm {
    d1: usize,
    k: usize,
    d: usize,
    coeffs: Vec<f64>,
    norm: f64,
}

impl TrilinearForm {
    pub fn new(d1: usize, k: usize, d: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != d1 * k * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                d1 * k * d,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite tensor entry".into()));
        }
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        Ok(Self { d1, k, d, coeffs, norm })
    }

    pub fn zeros(d1: usize, k: usize, d: usize) -> Self {
        Self::new(d1, k, d, vec![0.0; d1 * k * d]).expect("shape is consistent")
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.d1, self.k, self.d)
    }

    /// Root-sum-square of the coefficients, cached at construction.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn entry(&self, i: usize, ip: usize, ipp: usize) -> f64 {
        self.coeffs[(i * self.k + ip) * self.d + ipp]
    }

    pub fn set_entry(&mut self, i: usize, ip: usize, ipp: usize, val: f64) {
        self.coeffs[(i * self.k + ip) * self.d + ipp] = val;
        self.norm = self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    }

    /// Full contraction Q(u, v, w).
    pub fn eval(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        assert_eq!(u.len(), self.d1);
        assert_eq!(v.len(), self.k);
        assert_eq!(w.len(), self.d);
        let mut acc = 0.0;
        for i in 0..self.d1 {
            if u[i] == 0.0 {
                continue;
            }
            for ip in 0..self.k {
                if v[ip] == 0.0 {
                    continue;
                }
                for ipp in 0..self.d {
                    acc += self.entry(i, ip, ipp) * u[i] * v[ip] * w[ipp];
                }
            }
        }
        acc
    }

    /// Entrywise sum Q + delta.
    pub fn add(&self, delta: &TrilinearForm) -> Result<TrilinearForm> {
        if self.dims() != delta.dims() {
            return Err(Error::DimensionMismatch("tensor shapes differ".into()));
        }
        TrilinearForm::new(
            self.d1,
            self.k,
            self.d,
            self.coeffs
                .iter()
                .zip(&delta.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

/// Ordered bases of R^{d1}, R^k, R^d with cached determinant magnitudes.
#[derive(Debug, Clone)]
pub struct BasisTriple {
    pub u: VectorList,
    pub v: VectorList,
    pub w: VectorList,
    pub dets: [f64; 3],
}

impl BasisTriple {
    pub fn new(u: VectorList, v: VectorList, w: VectorList) -> Result<Self> {
        for (name, l) in [("u", &u), ("v", &v), ("w", &w)] {
            if l.len() != l.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{name}-basis must be square"
                )));
            }
            l.certify_independent()
                .map_err(|_| Error::SingularBasis(format!("{name}-basis is singular")))?;
        }
        let dets = [u.det_magnitude()?, v.det_magnitude()?, w.det_magnitude()?];
        Ok(Self { u, v, w, dets })
    }

    pub fn standard(d1: usize, k: usize, d: usize) -> Self {
        Self::new(
            VectorList::standard_basis(d1),
            VectorList::standard_basis(k),
            VectorList::standard_basis(d),
        )
        .expect("standard bases are nonsingular")
    }

    /// Max Gram deviation from orthonormality over the three lists.
    pub fn orthonormal_deviation(&self) -> f64 {
        self.u
            .orthonormal_deviation()
            .max(self.v.orthonormal_deviation())
            .max(self.w.orthonormal_deviation())
    }

    /// |det u|^{s/d1} |det v|^{s/k} |det w|^{s/d}.
    pub fn det_product_power(&self, s: f64) -> f64 {
        let (d1, k, d) = (
            self.u.dim() as f64,
            self.v.dim() as f64,
            self.w.dim() as f64,
        );
        self.dets[0].powf(s / d1) * self.dets[1].powf(s / k) * self.dets[2].powf(s / d)
    }
}

/// Determinant of the s x s matrix [Q(t, v_a, w_b)].
pub fn qs_det(
    q: &TrilinearForm,
    t: &DVector<f64>,
    vs: &[DVector<f64>],
    ws: &[DVector<f64>],
) -> Result<f64> {
    let s = vs.len();
    if ws.len() != s {
        return Err(Error::DimensionMismatch("need equal v and w tuples".into()));
    }
    let (_, k, d) = q.dims();
    if s == 0 || s > k.min(d) {
        return Err(Error::DimensionMismatch(format!(
            "s = {s} outside 1..=min(d,k)"
        )));
    }
    let m = DMatrix::from_fn(s, s, |a, b| q.eval(t, &vs[a], &ws[b]));
    Ok(m.determinant())
}

fn expand_by_multiplicity<'a>(basis: &'a VectorList, m: &[u16]) -> Vec<&'a DVector<f64>> {
    let mut out = Vec::new();
    for (i, &cnt) in m.iter().enumerate() {
        for _ in 0..cnt {
            out.push(basis.vector(i));
        }
    }
    out
}

/// Exact value of `(u.∇_t)^α Q_s(t, v_β, w_γ)` by permutation expansion.
pub fn derivative_coefficient(
    q: &TrilinearForm,
    bases: &BasisTriple,
    triple: &MultiindexTriple,
) -> Result<f64> {
    let (d1, k, d) = q.dims();
    if triple.alpha.len() != d1 || triple.beta.len() != k || triple.gamma.len() != d {
        return Err(Error::DimensionMismatch(
            "multiindex lengths must match tensor dimensions".into(),
        ));
    }
    let s = triple.order();
    if weight(&triple.beta) != s || weight(&triple.gamma) != s {
        return Err(Error::DimensionMismatch(
            "multiindex triple weights differ".into(),
        ));
    }
    if s == 0 {
        return Ok(1.0);
    }
    if s > k.min(d) {
        return Ok(0.0);
    }
    let us = expand_by_multiplicity(&bases.u, &triple.alpha);
    let vs = expand_by_multiplicity(&bases.v, &triple.beta);
    let ws = expand_by_multiplicity(&bases.w, &triple.gamma);
    // C[c][a][b] = Q(u_c, v_a, w_b)
    let mut c = vec![0.0; s * s * s];
    for ci in 0..s {
        for a in 0..s {
            for b in 0..s {
                c[(ci * s + a) * s + b] = q.eval(us[ci], vs[a], ws[b]);
            }
        }
    }
    let mut acc = 0.0;
    for perm in (0..s).permutations(s) {
        let m = DMatrix::from_fn(s, s, |a, b| c[(perm[a] * s + a) * s + b]);
        acc += m.determinant();
    }
    Ok(acc)
}

/// Multinomial weight (s!)^3 / (α! β! γ!) = (s!/α!)(s!/β!)(s!/γ!).
pub fn multinomial_weight(alpha: &[u16], beta: &[u16], gamma: &[u16]) -> f64 {
    multinomial(alpha) * multinomial(beta) * multinomial(gamma)
}

/// s!/m! for |m| = s; computed in log space once factorials leave the exact
/// integer range.
fn multinomial(m: &[u16]) -> f64 {
    let s = weight(m);
    if s <= 20 {
        let mut num: u128 = 1;
        for i in 2..=s as u128 {
            num *= i;
        }
        let mut den: u128 = 1;
        for &mi in m {
            for i in 2..=mi as u128 {
                den *= i;
            }
        }
        (num / den) as f64
    } else {
        let mut ln = ln_factorial(s);
        for &mi in m {
            ln -= ln_factorial(mi as usize);
        }
        ln.exp()
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Table of derivative coefficients for every admissible multiindex triple.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    pub entries: BTreeMap<MultiindexTriple, f64>,
}

impl DerivativeTable {
    pub fn build(q: &TrilinearForm, bases: &BasisTriple) -> Result<Self> {
        let (d1, k, d) = q.dims();
        let smax = k.min(d);
        let mut entries = BTreeMap::new();
        for s in 1..=smax {
            for alpha in multiindices(d1, s) {
                for beta in multiindices(k, s) {
                    for gamma in multiindices(d, s) {
                        let triple = MultiindexTriple {
                            alpha: alpha.clone(),
                            beta: beta.clone(),
                            gamma,
                        };
                        let val = derivative_coefficient(q, bases, &triple)?;
                        entries.insert(triple, val);
                    }
                }
            }
        }
        Ok(Self { entries })
    }
}

/// The scalar 𝒬 >= 1: square root of 1 plus the multinomial-weighted sum of
/// squared derivative coefficients.
pub fn script_q(q: &TrilinearForm, bases: &BasisTriple) -> Result<f64> {
    let table = DerivativeTable::build(q, bases)?;
    let mut acc = 1.0;
    for (triple, val) in &table.entries {
        let w = multinomial_weight(&triple.alpha, &triple.beta, &triple.gamma);
        acc += w * val * val;
    }
    Ok(acc.sqrt())
}

/// 𝒬_sup: suprema of |Q_s| over the ellipsoid B_u instead of derivative
/// sums. The supremum of each homogeneous polynomial is approximated by a
/// deterministic sphere design of 2^{d1} d1^2 directions plus projected
/// gradient polish; the result is comparable to 𝒬 with dimensional
/// constants.
pub fn script_q_sup(q: &TrilinearForm, bases: &BasisTriple) -> Result<f64> {
    let (d1, k, d) = q.dims();
    let smax = k.min(d);
    let u_cols = bases.u.as_columns(); // d1 x d1
    let mut acc = 1.0;
    for s in 1..=smax {
        for beta in multiindices(k, s) {
            for gamma in multiindices(d, s) {
                let vs = expand_by_multiplicity(&bases.v, &beta);
                let ws = expand_by_multiplicity(&bases.w, &gamma);
                let p = |c: &DVector<f64>| -> f64 {
                    let t = &u_cols * c;
                    let m = DMatrix::from_fn(s, s, |a, b| q.eval(&t, vs[a], ws[b]));
                    m.determinant()
                };
                let sup = sup_on_sphere(&p, d1);
                let w = multinomial(&beta) * multinomial(&gamma);
                acc += w * sup * sup;
            }
        }
    }
    Ok(acc.sqrt())
}

/// Max |p(c)| over the unit sphere: deterministic direction design followed
/// by 20 projected-gradient polish steps from the best seed.
fn sup_on_sphere(p: &dyn Fn(&DVector<f64>) -> f64, dim: usize) -> f64 {
    if dim == 1 {
        return p(&DVector::from_row_slice(&[1.0])).abs();
    }
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut e = DVector::zeros(dim);
                e[i] = si / 2f64.sqrt();
                e[j] = sj / 2f64.sqrt();
                dirs.push(e);
            }
        }
    }
    // Deterministic quasi-random fill up to the design size 2^{d1} d1^2.
    let target = (1usize << dim.min(20)) * dim * dim;
    let mut state = 0x9e3779b97f4a7c15u64;
    while dirs.len() < target {
        let mut v = DVector::zeros(dim);
        for i in 0..dim {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let x = ((state >> 11) as f64) / ((1u64 << 53) as f64);
            v[i] = 2.0 * x - 1.0;
        }
        let n = v.norm();
        if n > 1e-9 {
            dirs.push(v / n);
        }
    }

    let mut best = 0.0_f64;
    let mut best_dir = dirs[0].clone();
    for dvec in &dirs {
        let val = p(dvec).abs();
        if val > best {
            best = val;
            best_dir = dvec.clone();
        }
    }
    // Projected gradient ascent on |p| over the sphere.
    let mut c = best_dir;
    let mut step = 0.1;
    let h = 1e-6;
    for _ in 0..20 {
        let f0 = p(&c).abs();
        let mut grad = DVector::zeros(dim);
        for i in 0..dim {
            let mut cp = c.clone();
            cp[i] += h;
            let mut cm = c.clone();
            cm[i] -= h;
            grad[i] = (p(&cp).abs() - p(&cm).abs()) / (2.0 * h);
        }
        let radial = c.dot(&grad);
        let tang = &grad - radial * &c;
        if tang.norm() < 1e-14 {
            break;
        }
        let cand = (&c + step * &tang).normalize();
        if p(&cand).abs() > f0 {
            c = cand;
        } else {
            step *= 0.5;
        }
    }
    best.max(p(&c).abs())
}

/// Θ(t, w) in R^k for the reslotted form Q(x, y, z) = y . Θ(x, z).
pub fn theta_vector(q: &TrilinearForm, t: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let (_, k, _) = q.dims();
    DVector::from_fn(k, |ip, _| {
        let e = DVector::from_fn(k, |j, _| if j == ip { 1.0 } else { 0.0 });
        q.eval(t, &e, w)
    })
}

/// The mixed-determinant sum
///
/// ```text
/// Σ_{s=0}^{min(d,k)} s!/(k-s)! Σ_{tuples} |(u.∇_t)^s det(v_{i'_1}..v_{i'_{k-s}}, Θ(t,w_{i''_1})..Θ(t,w_{i''_s}))|^2
/// ```
///
/// which equals `|det v|^2 𝒬[u, v*, w]^2` with v* the dual basis.
pub fn mixed_determinant_sum(q: &TrilinearForm, bases: &BasisTriple) -> Result<f64> {
    let (d1, k, d) = q.dims();
    let smax = k.min(d);
    let mut total = 0.0;
    for s in 0..=smax {
        // Θ columns are linear in t; the u-derivatives distribute over them
        // by a permutation sum exactly as in `derivative_coefficient`.
        let weight = factorial(s) / factorial(k - s);
        let mut level = 0.0;
        for vidx in ordered_tuples(k, k - s) {
            for widx in ordered_tuples(d, s) {
                for uidx in ordered_tuples(d1, s) {
                    let mut val = 0.0;
                    let perms: Vec<Vec<usize>> = if s == 0 {
                        vec![vec![]]
                    } else {
                        (0..s).permutations(s).collect()
                    };
                    for perm in &perms {
                        let m = DMatrix::from_fn(k, k, |r, c| {
                            if c < k - s {
                                bases.v.vector(vidx[c])[r]
                            } else {
                                let j = c - (k - s);
                                let uvec = bases.u.vector(uidx[perm[j]]);
                                let wvec = bases.w.vector(widx[j]);
                                theta_vector(q, uvec, wvec)[r]
                            }
                        });
                        val += m.determinant();
                    }
                    level += val * val;
                }
            }
        }
        total += weight * level;
    }
    Ok(total)
}

/// Evaluates both sides of the dual-basis identity, returning (lhs, rhs).
pub fn dual_basis_identity(q: &TrilinearForm, bases: &BasisTriple) -> Result<(f64, f64)> {
    let lhs = mixed_determinant_sum(q, bases)?;
    let vstar = dual_basis(&bases.v)?;
    let dual_triple = BasisTriple::new(bases.u.clone(), vstar, bases.w.clone())?;
    let sq = script_q(q, &dual_triple)?;
    let detv = bases.dets[1];
    Ok((lhs, detv * detv * sq * sq))
}

fn factorial(n: usize) -> f64 {
    (2..=n).map(|i| i as f64).product::<f64>().max(1.0)
}

fn ordered_tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * base);
        for t in &out {
            for i in 0..base {
                let mut t2 = t.clone();
                t2.push(i);
                next.push(t2);
            }
        }
        out = next;
    }
    out
}
