//! Polynomial incidence maps φ : R^n x R^{d1} -> R^k and the quantities
//! derived from them.
//!
//! The map is stored as k sparse polynomials in the variables
//! (x^1..x^n, t^1..t^{d1}). Everything downstream differentiates exactly:
//! the Jacobian D_x φ, the mixed Hessian ∂²φ^{i'}/∂t^i ∂x^ℓ, the curvature
//! tensor Q (mixed Hessian contracted against an orthonormal kernel basis of
//! D_x φ), the defining function π of the incidence relation, the bilinear
//! model map, and the bracket-span check.
//!
//! Two interchange formats exist: a line-oriented text format
//! (`dims: n=3 d1=1` header, one component per line, monomials like
//! `-2.5 * x1^2 * t1`) and a JSON equivalent with exponent arrays. Both
//! round-trip bit-exactly: coefficients print in shortest form, which Rust
//! parses back to the same bits.

use nalgebra::{DMatrix, DVector};
use num::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multilinear::{kernel_onb, VectorList};
use crate::poly::MultiPoly;
use crate::qcalc::TrilinearForm;

/// Default cap on total degree of input maps.
pub const DEFAULT_DEGREE_CAP: usize = 20;

/// Polynomial map φ(x, t) with values in R^k.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    n: usize,
    d1: usize,
    comps: Vec<MultiPoly<f64>>,
}

impl PolynomialMap {
    pub fn new(n: usize, d1: usize, comps: Vec<MultiPoly<f64>>) -> Result<Self> {
        if n == 0 || d1 == 0 || comps.is_empty() {
            return Err(Error::BadDimensions(
                "need n >= 1, d1 >= 1, k >= 1".into(),
            ));
        }
        for c in &comps {
            if c.nvars() != n + d1 {
                return Err(Error::DimensionMismatch(format!(
                    "component has {} variables, expected {}",
                    c.nvars(),
                    n + d1
                )));
            }
        }
        let map = Self { n, d1, comps };
        if map.degree() > DEFAULT_DEGREE_CAP {
            return Err(Error::Parse(format!(
                "degree {} exceeds the cap {}",
                map.degree(),
                DEFAULT_DEGREE_CAP
            )));
        }
        Ok(map)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn k(&self) -> usize {
        self.comps.len()
    }

    pub fn d(&self) -> usize {
        self.n - self.k()
    }

    pub fn n1(&self) -> usize {
        self.d1 + self.k()
    }

    pub fn components(&self) -> &[MultiPoly<f64>] {
        &self.comps
    }

    pub fn degree(&self) -> usize {
        self.comps.iter().map(|c| c.degree()).max().unwrap_or(0)
    }

    fn point(&self, x: &DVector<f64>, t: &DVector<f64>) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert_eq!(t.len(), self.d1);
        x.iter().chain(t.iter()).copied().collect()
    }

    pub fn eval(&self, x: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        let pt = self.point(x, t);
        DVector::from_fn(self.k(), |i, _| self.comps[i].eval(&pt))
    }

    /// Jacobian with respect to x only: k x n.
    pub fn jacobian_x(&self, x: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let pt = self.point(x, t);
        DMatrix::from_fn(self.k(), self.n, |i, l| self.comps[i].partial(l).eval(&pt))
    }

    /// Jacobian with respect to t only: k x d1.
    pub fn jacobian_t(&self, x: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let pt = self.point(x, t);
        DMatrix::from_fn(self.k(), self.d1, |i, j| {
            self.comps[i].partial(self.n + j).eval(&pt)
        })
    }

    /// Mixed Hessian H[i][i'][l] = ∂²φ^{i'} / ∂t^i ∂x^l at the point.
    pub fn mixed_hessian(&self, x: &DVector<f64>, t: &DVector<f64>) -> Vec<Vec<Vec<f64>>> {
        let pt = self.point(x, t);
        (0..self.d1)
            .map(|i| {
                (0..self.k())
                    .map(|ip| {
                        let dt = self.comps[ip].partial(self.n + i);
                        (0..self.n).map(|l| dt.partial(l).eval(&pt)).collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Distinguished point (x*, t*).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl BasePoint {
    pub fn origin(n: usize, d1: usize) -> Self {
        Self {
            x: vec![0.0; n],
            t: vec![0.0; d1],
        }
    }

    pub fn x_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x)
    }

    pub fn t_vec(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.t)
    }
}

/// The exponent quadruple (p_b, q_b, p'_b, q'_b) as exact rationals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub p: Rational64,
    pub q: Rational64,
    pub p_dual: Rational64,
    pub q_dual: Rational64,
}

/// p_b = kd/(n d1) + 1, q_b = n1 d/(k d1) + 1 and their Holder duals.
pub fn best_exponents(n: usize, k: usize, d1: usize) -> Result<ExponentSet> {
    if n <= k || k < 1 || d1 < 1 {
        return Err(Error::BadDimensions(format!(
            "need n > k >= 1 and d1 >= 1, got n={n} k={k} d1={d1}"
        )));
    }
    let (n_i, k_i, d1_i) = (n as i64, k as i64, d1 as i64);
    let d_i = n_i - k_i;
    let n1_i = d1_i + k_i;
    let one = Rational64::from_integer(1);
    let p = Rational64::new(k_i * d_i, n_i * d1_i) + one;
    let q = Rational64::new(n1_i * d_i, k_i * d1_i) + one;
    let p_dual = Rational64::new(n_i * d1_i, k_i * d_i) + one;
    let q_dual = Rational64::new(k_i * d1_i, n1_i * d_i) + one;
    Ok(ExponentSet { p, q, p_dual, q_dual })
}

pub fn rational_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The curvature tensor at a base point, together with the kernel basis
/// used, so downstream verdicts are reproducible.
pub fn extract_q(map: &PolynomialMap, p: &BasePoint) -> Result<(TrilinearForm, VectorList)> {
    let jac = map.jacobian_x(&p.x_vec(), &p.t_vec());
    let z = kernel_onb(&jac)?;
    let h = map.mixed_hessian(&p.x_vec(), &p.t_vec());
    let (d1, k, d) = (map.d1(), map.k(), map.d());
    let mut coeffs = vec![0.0; d1 * k * d];
    for i in 0..d1 {
        for ip in 0..k {
            for ipp in 0..d {
                let mut acc = 0.0;
                for l in 0..map.n() {
                    acc += z.vector(ipp)[l] * h[i][ip][l];
                }
                coeffs[(i * k + ip) * d + ipp] = acc;
            }
        }
    }
    Ok((TrilinearForm::new(d1, k, d, coeffs)?, z))
}

/// Defining function π(x, y) = (-y^{d1+j} + φ^j(x, y^1..y^{d1}))_j on
/// R^n x R^{n1}.
#[derive(Debug, Clone, PartialEq)]
pub struct DefiningFunction {
    pub n: usize,
    pub n1: usize,
    pub d1: usize,
    pub comps: Vec<MultiPoly<f64>>,
}

pub fn defining_function(map: &PolynomialMap) -> DefiningFunction {
    let n = map.n();
    let d1 = map.d1();
    let k = map.k();
    let n1 = d1 + k;
    let nv = n + n1;
    let comps = (0..k)
        .map(|j| {
            // Re-index φ's variables: x stays, t^i becomes y^i.
            let mut p = MultiPoly::zero(nv);
            for (e, c) in map.comps[j].terms() {
                let mut exps = vec![0u16; nv];
                exps[..n].copy_from_slice(&e[..n]);
                exps[n..n + d1].copy_from_slice(&e[n..n + d1]);
                p.insert_term(exps, *c);
            }
            let mut yterm = vec![0u16; nv];
            yterm[n + d1 + j] = 1;
            p.insert_term(yterm, -1.0);
            p
        })
        .collect();
    DefiningFunction { n, n1, d1, comps }
}

impl DefiningFunction {
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let pt: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
        DVector::from_fn(self.comps.len(), |i, _| self.comps[i].eval(&pt))
    }

    /// Jacobian with respect to y: k x n1; the right block is -I by
    /// construction, so it is always full rank.
    pub fn jacobian_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let pt: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
        let k = self.comps.len();
        DMatrix::from_fn(k, self.n1, |i, j| {
            self.comps[i].partial(self.n + j).eval(&pt)
        })
    }

    /// Structural check that the y-Jacobian carries the -I block on the
    /// final k columns, independent of the evaluation point.
    pub fn has_identity_block(&self) -> bool {
        let k = self.comps.len();
        for (j, comp) in self.comps.iter().enumerate() {
            for jj in 0..k {
                let p = comp.partial(self.n + self.d1 + jj);
                let expect = if jj == j { -1.0 } else { 0.0 };
                if p.degree() > 0 {
                    return false;
                }
                let val = p.eval(&vec![0.0; self.n + self.n1]);
                if (val - expect).abs() != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Substitutes the graph y = (t, φ(x, t)) into π; the result is the zero
/// map, symbolically.
pub fn pi_vanishes_on_graph(map: &PolynomialMap) -> bool {
    let pi = defining_function(map);
    let n = map.n();
    let d1 = map.d1();
    let nv_src = n + map.n1();
    let nv_dst = n + d1;
    // Substitution targets in (x, t) variables.
    let mut subs: Vec<MultiPoly<f64>> = Vec::with_capacity(nv_src);
    for l in 0..n {
        subs.push(MultiPoly::var(nv_dst, l));
    }
    for i in 0..d1 {
        subs.push(MultiPoly::var(nv_dst, n + i));
    }
    for j in 0..map.k() {
        subs.push(map.comps[j].clone());
    }
    pi.comps.iter().all(|c| c.substitute(&subs).is_zero())
}

/// Max relative residual of det(D_t γ)^T(D_t γ) = det(D_y π)(D_y π)^T over
/// the sample points.
pub fn coarea_identity_check(map: &PolynomialMap, samples: &[BasePoint]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in samples {
        let x = p.x_vec();
        let t = p.t_vec();
        let pmat = map.jacobian_t(&x, &t); // k x d1
        let d1 = map.d1();
        let k = map.k();
        let lhs = (DMatrix::identity(d1, d1) + pmat.transpose() * &pmat).determinant();
        let rhs = (DMatrix::identity(k, k) + &pmat * pmat.transpose()).determinant();
        let denom = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    worst
}

/// The bilinear model at a base point: coordinates rotated so the kernel of
/// D_x φ spans the first d directions (x_0), M = D_{x_1} φ on the
/// complement, Θ the mixed Hessian in rotated coordinates. The model map is
/// emitted with M normalized to the identity.
#[derive(Debug, Clone)]
pub struct ModelMap {
    /// Orthogonal change of x-coordinates; columns 0..d span ker D_x φ.
    pub rotation: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Θ as a trilinear tensor on R^{d1} x R^k x R^d (same slots as Q).
    pub theta: TrilinearForm,
    /// True when the emitted model absorbed M^{-1} into x_1.
    pub m_normalized: bool,
    /// φ̃(x_0, x_1, t) = x_1 + Θ(t, x_0), variables ordered (x_0, x_1, t).
    pub model: PolynomialMap,
}

pub fn model_map(map: &PolynomialMap, p: &BasePoint) -> Result<ModelMap> {
    let jac = map.jacobian_x(&p.x_vec(), &p.t_vec());
    let (theta, z) = extract_q(map, p)?;
    let (d1, k, d) = (map.d1(), map.k(), map.d());
    let n = map.n();
    // Row-space basis: QR of jac^T with the R_ii > 0 sign convention.
    let qr = jac.transpose().qr();
    let mut qmat = qr.q(); // n x k
    let r = qr.r();
    for i in 0..k {
        if r[(i, i)] < 0.0 {
            for row in 0..n {
                qmat[(row, i)] = -qmat[(row, i)];
            }
        }
    }
    let mut rotation = DMatrix::zeros(n, n);
    for i in 0..d {
        rotation.view_mut((0, i), (n, 1)).copy_from(z.vector(i));
    }
    rotation.view_mut((0, d), (n, k)).copy_from(&qmat);
    let m = &jac * &qmat; // k x k, invertible by the rank condition
    if m.determinant().abs() < 1e-12 {
        return Err(Error::RankDeficient("model row-space block singular".into()));
    }

    // Model in variables (x_0 in R^d, x_1 in R^k, t in R^{d1}).
    let nv = d + k + d1;
    let comps = (0..k)
        .map(|ip| {
            let mut poly = MultiPoly::zero(nv);
            let mut lin = vec![0u16; nv];
            lin[d + ip] = 1;
            poly.insert_term(lin, 1.0);
            for i in 0..d1 {
                for ipp in 0..d {
                    let c = theta.entry(i, ip, ipp);
                    if c != 0.0 {
                        let mut e = vec![0u16; nv];
                        e[ipp] = 1;
                        e[d + k + i] = 1;
                        poly.insert_term(e, c);
                    }
                }
            }
            poly
        })
        .collect::<Vec<_>>();
    let model = PolynomialMap::new(d + k, d1, comps)?;
    Ok(ModelMap {
        rotation,
        m,
        theta,
        m_normalized: true,
        model,
    })
}

/// Span dimension of {X_i, T_j, [X_i, T_j]} at the base point: d1 + d plus
/// the rank of the bracket images (T_j D_x φ) X_i in R^k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HormanderReport {
    pub span_dim: usize,
    pub ambient_dim: usize,
    pub spans: bool,
}

pub fn hormander_check(map: &PolynomialMap, p: &BasePoint) -> Result<HormanderReport> {
    let (q, _z) = extract_q(map, p)?;
    let (d1, k, d) = q.dims();
    // Bracket images in R^k: columns indexed by (i, j), entries Q_{j, i', i}.
    let mut brackets = DMatrix::zeros(k, d * d1);
    for i in 0..d {
        for j in 0..d1 {
            for ip in 0..k {
                brackets[(ip, i * d1 + j)] = q.entry(j, ip, i);
            }
        }
    }
    let rank = if brackets.ncols() == 0 {
        0
    } else {
        let svals = brackets.singular_values();
        let smax = svals.max();
        if smax == 0.0 {
            0
        } else {
            svals.iter().filter(|&&s| s > 1e-10 * smax).count()
        }
    };
    let span_dim = d1 + d + rank;
    Ok(HormanderReport {
        span_dim,
        ambient_dim: map.n() + d1,
        spans: rank == k,
    })
}

// ---------------------------------------------------------------------------
// Interchange formats.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: f64,
    pub x: Vec<u16>,
    pub t: Vec<u16>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyMapJson {
    pub n: usize,
    pub d1: usize,
    pub components: Vec<Vec<TermJson>>,
}

pub fn to_json(map: &PolynomialMap) -> PolyMapJson {
    let n = map.n();
    let d1 = map.d1();
    PolyMapJson {
        n,
        d1,
        components: map
            .comps
            .iter()
            .map(|c| {
                c.terms()
                    .map(|(e, &coeff)| TermJson {
                        coeff,
                        x: e[..n].to_vec(),
                        t: e[n..].to_vec(),
                    })
                    .collect()
            })
            .collect(),
    }
}

pub fn from_json(j: &PolyMapJson) -> Result<PolynomialMap> {
    let nv = j.n + j.d1;
    let comps = j
        .components
        .iter()
        .map(|terms| {
            let mut p = MultiPoly::zero(nv);
            for t in terms {
                if t.x.len() != j.n || t.t.len() != j.d1 {
                    return Err(Error::Parse("exponent arrays must match n and d1".into()));
                }
                if !t.coeff.is_finite() {
                    return Err(Error::Parse("coefficients must be finite".into()));
                }
                let mut e = Vec::with_capacity(nv);
                e.extend_from_slice(&t.x);
                e.extend_from_slice(&t.t);
                p.insert_term(e, t.coeff);
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    PolynomialMap::new(j.n, j.d1, comps)
}

/// Text format: header `dims: n=<n> d1=<d1>`, then one component per line,
/// monomials `coeff * x1^a * t1^b` joined by ` + `.
pub fn to_text(map: &PolynomialMap) -> String {
    let n = map.n();
    let d1 = map.d1();
    let mut out = format!("dims: n={} d1={}\n", n, d1);
    let names: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=d1).map(|i| format!("t{i}")))
        .collect();
    for c in &map.comps {
        out.push_str(&crate::poly::format_poly(c, &names));
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str) -> Result<PolynomialMap> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty input".into()))?;
    let (n, d1) = parse_header(header)?;
    let nv = n + d1;
    let mut comps = Vec::new();
    for line in lines {
        comps.push(parse_component(line, n, d1, nv)?);
    }
    if comps.is_empty() {
        return Err(Error::Parse("no components after the header".into()));
    }
    PolynomialMap::new(n, d1, comps)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let rest = line
        .strip_prefix("dims:")
        .ok_or_else(|| Error::Parse(format!("expected `dims:` header, got `{line}`")))?;
    let mut n = None;
    let mut d1 = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
        } else if let Some(v) = tok.strip_prefix("d1=") {
            d1 = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
        } else {
            return Err(Error::Parse(format!("unexpected header token `{tok}`")));
        }
    }
    match (n, d1) {
        (Some(n), Some(d1)) => Ok((n, d1)),
        _ => Err(Error::Parse("header must set n= and d1=".into())),
    }
}

fn parse_component(line: &str, n: usize, d1: usize, nv: usize) -> Result<MultiPoly<f64>> {
    let mut p = MultiPoly::zero(nv);
    if line == "0" {
        return Ok(p);
    }
    for term in line.split(" + ") {
        let mut coeff: Option<f64> = None;
        let mut exps = vec![0u16; nv];
        for factor in term.split('*') {
            let f = factor.trim();
            if f.is_empty() {
                return Err(Error::Parse(format!("empty factor in `{term}`")));
            }
            if let Some(rest) = f.strip_prefix('x') {
                let (idx, exp) = parse_var(rest)?;
                if idx == 0 || idx > n {
                    return Err(Error::Parse(format!("x{idx} out of range 1..={n}")));
                }
                exps[idx - 1] = exps[idx - 1]
                    .checked_add(exp)
                    .ok_or_else(|| Error::Parse("exponent overflow".into()))?;
            } else if let Some(rest) = f.strip_prefix('t') {
                let (idx, exp) = parse_var(rest)?;
                if idx == 0 || idx > d1 {
                    return Err(Error::Parse(format!("t{idx} out of range 1..={d1}")));
                }
                exps[n + idx - 1] = exps[n + idx - 1]
                    .checked_add(exp)
                    .ok_or_else(|| Error::Parse("exponent overflow".into()))?;
            } else {
                if coeff.is_some() {
                    return Err(Error::Parse(format!("two coefficients in `{term}`")));
                }
                let c = f.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                if !c.is_finite() {
                    return Err(Error::Parse(format!("non-finite coefficient `{f}`")));
                }
                coeff = Some(c);
            }
        }
        p.insert_term(exps, coeff.unwrap_or(1.0));
    }
    Ok(p)
}

fn parse_var(rest: &str) -> Result<(usize, u16)> {
    match rest.split_once('^') {
        Some((idx, exp)) => Ok((
            idx.parse().map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?,
            exp.parse().map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?,
        )),
        None => Ok((
            rest.parse()
                .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?,
            1,
        )),
    }
}

/// Sniffs JSON vs text by the first non-space byte.
pub fn parse_map(input: &str) -> Result<PolynomialMap> {
    if input.trim_start().starts_with('{') {
        let j: PolyMapJson =
            serde_json::from_str(input).map_err(|e| Error::Parse(e.to_string()))?;
        from_json(&j)
    } else {
        from_text(input)
    }
}

// ---------------------------------------------------------------------------
// The two worked example maps.
// ---------------------------------------------------------------------------

/// φ(x, t) = x^2 + x^1 t on R^3 x R^1: spans the Hormander bracket
/// condition yet carries a degenerate Q.
pub fn example_degenerate() -> PolynomialMap {
    let mut c = MultiPoly::zero(4);
    c.insert_term(vec![0, 1, 0, 0], 1.0);
    c.insert_term(vec![1, 0, 0, 1], 1.0);
    PolynomialMap::new(3, 1, vec![c]).expect("example map is well-formed")
}

/// φ(x, t) = x^3 + t^1 x^1 + t^2 x^2 on R^3 x R^2: rotational curvature.
pub fn example_nondegenerate() -> PolynomialMap {
    let mut c = MultiPoly::zero(5);
    c.insert_term(vec![0, 0, 1, 0, 0], 1.0);
    c.insert_term(vec![1, 0, 0, 1, 0], 1.0);
    c.insert_term(vec![0, 1, 0, 0, 1], 1.0);
    PolynomialMap::new(3, 2, vec![c]).expect("example map is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::multilinear::gaussian;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    pub fn random_map(
        n: usize,
        d1: usize,
        k: usize,
        degree: usize,
        rng: &mut ChaCha8Rng,
    ) -> PolynomialMap {
        use rand::Rng;
        let nv = n + d1;
        let comps = (0..k)
            .map(|_| {
                let mut p = MultiPoly::zero(nv);
                for _ in 0..(2 * nv) {
                    let mut e = vec![0u16; nv];
                    let mut left = rng.random_range(0..=degree);
                    while left > 0 {
                        let v = rng.random_range(0..nv);
                        e[v] += 1;
                        left -= 1;
                    }
                    p.insert_term(e, gaussian(rng));
                }
                p
            })
            .collect();
        PolynomialMap::new(n, d1, comps).unwrap()
    }

    #[test]
    fn jacobian_and_hessian_of_degenerate_example() {
        let map = example_degenerate();
        let origin = BasePoint::origin(3, 1);
        let jac = map.jacobian_x(&origin.x_vec(), &origin.t_vec());
        assert_eq!(jac, DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]));
        let h = map.mixed_hessian(&origin.x_vec(), &origin.t_vec());
        assert_eq!(h[0][0], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_map_has_zero_hessian() {
        let mut c = MultiPoly::zero(3);
        c.insert_term(vec![1, 0, 0], 2.0);
        c.insert_term(vec![0, 1, 0], -1.0);
        let map = PolynomialMap::new(2, 1, vec![c]).unwrap();
        let h = map.mixed_hessian(&dv(&[0.3, -1.0]), &dv(&[0.5]));
        assert!(h[0][0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_of_nondegenerate_example() {
        let map = example_nondegenerate();
        let (x, t) = (dv(&[0.0; 3]), dv(&[0.7, -0.3]));
        let jac = map.jacobian_x(&x, &t);
        assert_eq!(jac, DMatrix::from_row_slice(1, 3, &[0.7, -0.3, 1.0]));
        let h = map.mixed_hessian(&x, &t);
        assert_eq!(h[0][0], vec![1.0, 0.0, 0.0]);
        assert_eq!(h[1][0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn extract_q_degenerate_example() {
        let map = example_degenerate();
        let (q, z) = extract_q(&map, &BasePoint::origin(3, 1)).unwrap();
        assert_eq!(q.dims(), (1, 1, 2));
        // Kernel basis {(1,0,0), (0,0,1)} in staircase order.
        assert!((z.vector(0) - dv(&[1.0, 0.0, 0.0])).norm() < 1e-12);
        assert!((z.vector(1) - dv(&[0.0, 0.0, 1.0])).norm() < 1e-12);
        assert_relative_eq!(q.entry(0, 0, 0), 1.0);
        assert_relative_eq!(q.entry(0, 0, 1), 0.0);
    }

    #[test]
    fn extract_q_nondegenerate_example() {
        let map = example_nondegenerate();
        let (q, _z) = extract_q(&map, &BasePoint::origin(3, 2)).unwrap();
        assert_eq!(q.dims(), (2, 1, 2));
        // Q(u, v, w) = v (u.w).
        assert_relative_eq!(q.entry(0, 0, 0), 1.0);
        assert_relative_eq!(q.entry(1, 0, 1), 1.0);
        assert_relative_eq!(q.entry(0, 0, 1), 0.0);
        assert_relative_eq!(q.entry(1, 0, 0), 0.0);
    }

    #[test]
    fn extract_q_zero_for_maps_without_cross_terms() {
        // Linear in x, no xt cross terms.
        let mut c = MultiPoly::zero(3);
        c.insert_term(vec![1, 0, 0], 1.0);
        c.insert_term(vec![0, 0, 2], 0.5);
        let map = PolynomialMap::new(2, 1, vec![c]).unwrap();
        let (q, _) = extract_q(&map, &BasePoint::origin(2, 1)).unwrap();
        assert_eq!(q.norm(), 0.0);
    }

    #[test]
    fn extract_q_rejects_rank_deficient() {
        let mut c = MultiPoly::zero(3);
        c.insert_term(vec![0, 0, 1], 1.0); // phi = t: D_x phi = 0
        let map = PolynomialMap::new(2, 1, vec![c]).unwrap();
        assert!(matches!(
            extract_q(&map, &BasePoint::origin(2, 1)),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn best_exponents_special_cases() {
        // n = n1 (d = d1), k = 1: (p, q) = ((n+1)/n, n+1).
        let e = best_exponents(3, 1, 2).unwrap();
        assert_eq!(e.p, Rational64::new(4, 3));
        assert_eq!(e.q, Rational64::from_integer(4));
        // n=3, k=1, d1=1.
        let e = best_exponents(3, 1, 1).unwrap();
        assert_eq!(e.p, Rational64::new(5, 3));
        assert_eq!(e.q, Rational64::from_integer(5));
        assert_eq!(e.p_dual, Rational64::new(5, 2));
        // Duality identities hold exactly.
        for e in [best_exponents(4, 2, 3).unwrap(), best_exponents(5, 2, 1).unwrap()] {
            let one = Rational64::from_integer(1);
            assert_eq!(e.p.recip() + e.p_dual.recip(), one);
            assert_eq!(e.q.recip() + e.q_dual.recip(), one);
        }
        assert!(best_exponents(2, 2, 1).is_err());
    }

    #[test]
    fn defining_function_structure() {
        let map = example_degenerate();
        let pi = defining_function(&map);
        assert!(pi.has_identity_block());
        // pi = -y^2 + x^2 + x^1 y^1 at a sample point.
        let x = dv(&[0.5, -1.0, 2.0]);
        let y = dv(&[0.25, 3.0]);
        let val = pi.eval(&x, &y);
        assert_relative_eq!(val[0], -3.0 + (-1.0) + 0.5 * 0.25);
    }

    #[test]
    fn defining_function_zero_map() {
        let map = PolynomialMap::new(2, 1, vec![MultiPoly::zero(3)]).unwrap();
        let pi = defining_function(&map);
        assert!(pi.has_identity_block());
        let val = pi.eval(&dv(&[1.0, 2.0]), &dv(&[5.0, 7.0]));
        assert_relative_eq!(val[0], -7.0);
    }

    #[test]
    fn pi_vanishes_on_graph_symbolically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for map in [
            example_degenerate(),
            example_nondegenerate(),
            random_map(3, 2, 2, 3, &mut rng),
        ] {
            assert!(pi_vanishes_on_graph(&map));
        }
    }

    #[test]
    fn coarea_identity_linear_map() {
        // Linear phi: both sides equal det(I + P P^T) with constant P.
        let mut c = MultiPoly::zero(3);
        c.insert_term(vec![1, 0, 0], 1.0);
        c.insert_term(vec![0, 0, 1], 2.0);
        let map = PolynomialMap::new(2, 1, vec![c]).unwrap();
        let samples: Vec<BasePoint> = (0..5)
            .map(|i| BasePoint {
                x: vec![i as f64, -1.0],
                t: vec![0.3 * i as f64],
            })
            .collect();
        assert!(coarea_identity_check(&map, &samples) < 1e-14);
    }

    #[test]
    fn coarea_identity_example_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut samples = Vec::new();
        for _ in 0..10 {
            samples.push(BasePoint {
                x: (0..3).map(|_| gaussian(&mut rng)).collect(),
                t: vec![gaussian(&mut rng)],
            });
        }
        assert!(coarea_identity_check(&example_degenerate(), &samples) < 1e-10);

        let map = random_map(4, 2, 2, 2, &mut rng);
        let samples: Vec<BasePoint> = (0..10)
            .map(|_| BasePoint {
                x: (0..4).map(|_| gaussian(&mut rng)).collect(),
                t: (0..2).map(|_| gaussian(&mut rng)).collect(),
            })
            .collect();
        assert!(coarea_identity_check(&map, &samples) < 1e-9);
    }

    #[test]
    fn model_map_degenerate_example() {
        let map = example_degenerate();
        let mm = model_map(&map, &BasePoint::origin(3, 1)).unwrap();
        assert_eq!(mm.m.nrows(), 1);
        assert_relative_eq!(mm.m[(0, 0)], 1.0);
        // Theta(t, x0) = t * x0^1.
        assert_relative_eq!(mm.theta.entry(0, 0, 0), 1.0);
        assert_relative_eq!(mm.theta.entry(0, 0, 1), 0.0);
        // Model evaluates as x1 + t x0^1 in (x0, x1, t) order.
        let val = mm
            .model
            .eval(&dv(&[0.5, -2.0, 3.0]), &dv(&[0.25]));
        assert_relative_eq!(val[0], 3.0 + 0.25 * 0.5);
    }

    #[test]
    fn model_map_fixed_point_of_bilinear_maps() {
        // phi already of the form x1 + Theta(t, x0) with flat x0 block.
        let mut comp = MultiPoly::zero(4);
        comp.insert_term(vec![0, 0, 1, 0], 1.0); // x3 (the x1 slot)
        comp.insert_term(vec![1, 0, 0, 1], 0.7); // 0.7 x1 t1
        comp.insert_term(vec![0, 1, 0, 1], -0.2); // -0.2 x2 t1
        let map = PolynomialMap::new(3, 1, vec![comp]).unwrap();
        let mm = model_map(&map, &BasePoint::origin(3, 1)).unwrap();
        assert!((mm.rotation.clone() - DMatrix::identity(3, 3)).norm() < 1e-10);
        assert_relative_eq!(mm.m[(0, 0)], 1.0, max_relative = 1e-12);
        assert_relative_eq!(mm.theta.entry(0, 0, 0), 0.7, max_relative = 1e-12);
        assert_relative_eq!(mm.theta.entry(0, 0, 1), -0.2, max_relative = 1e-12);
    }

    #[test]
    fn model_map_ignores_x0_quadratics() {
        // Adding x0-quadratic noise must not change Theta.
        let map = example_degenerate();
        let mm0 = model_map(&map, &BasePoint::origin(3, 1)).unwrap();
        let mut comp = map.components()[0].clone();
        comp.insert_term(vec![2, 0, 0, 0], 0.9); // (x1)^2
        comp.insert_term(vec![0, 0, 2, 0], -0.4); // (x3)^2
        let noisy = PolynomialMap::new(3, 1, vec![comp]).unwrap();
        let mm1 = model_map(&noisy, &BasePoint::origin(3, 1)).unwrap();
        for i in 0..1 {
            for ipp in 0..2 {
                assert_relative_eq!(
                    mm0.theta.entry(i, 0, ipp),
                    mm1.theta.entry(i, 0, ipp),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn hormander_check_examples() {
        // Degenerate example spans (4 of 4) yet Q is degenerate.
        let r = hormander_check(&example_degenerate(), &BasePoint::origin(3, 1)).unwrap();
        assert!(r.spans);
        assert_eq!(r.span_dim, 4);
        assert_eq!(r.ambient_dim, 4);

        // Nondegenerate example spans.
        let r = hormander_check(&example_nondegenerate(), &BasePoint::origin(3, 2)).unwrap();
        assert!(r.spans);
        assert_eq!(r.span_dim, 5);

        // phi = x^3 (no t-dependence): brackets vanish, span falls short by k.
        let mut c = MultiPoly::zero(4);
        c.insert_term(vec![0, 0, 1, 0], 1.0);
        let map = PolynomialMap::new(3, 1, vec![c]).unwrap();
        let r = hormander_check(&map, &BasePoint::origin(3, 1)).unwrap();
        assert!(!r.spans);
        assert_eq!(r.span_dim, 3);
    }

    #[test]
    fn kernel_convention_change_is_equivalent() {
        // Rotating the kernel basis rotates the w-slot of Q; evaluating 𝒬
        // with correspondingly rotated w-bases gives the same value.
        use crate::qcalc::{script_q, BasisTriple};
        let map = example_nondegenerate();
        let (q, _z) = extract_q(&map, &BasePoint::origin(3, 2)).unwrap();
        let th: f64 = 0.6;
        let (c, s) = (th.cos(), th.sin());
        // Alternative convention: kernel vectors mixed by a rotation; the
        // tensor's w-slot picks up the inverse rotation.
        let mut q_rot = TrilinearForm::zeros(2, 1, 2);
        for i in 0..2 {
            for ipp in 0..2 {
                let (a, b) = (q.entry(i, 0, 0), q.entry(i, 0, 1));
                let val = match ipp {
                    0 => c * a + s * b,
                    _ => -s * a + c * b,
                };
                q_rot.set_entry(i, 0, ipp, val);
            }
        }
        let std_triple = BasisTriple::standard(2, 1, 2);
        let w_rot = VectorList::new(
            2,
            vec![
                DVector::from_row_slice(&[c, -s]),
                DVector::from_row_slice(&[s, c]),
            ],
        )
        .unwrap();
        let matched = BasisTriple::new(
            VectorList::standard_basis(2),
            VectorList::standard_basis(1),
            w_rot,
        )
        .unwrap();
        let v1 = script_q(&q, &std_triple).unwrap();
        let v2 = script_q(&q_rot, &matched).unwrap();
        assert_relative_eq!(v1, v2, max_relative = 1e-10);
    }

    #[test]
    fn text_round_trip_bit_exact() {
        let map = example_degenerate();
        let text = to_text(&map);
        let back = from_text(&text).unwrap();
        assert_eq!(map, back);
        let text2 = to_text(&back);
        assert_eq!(text, text2);
    }

    #[test]
    fn text_round_trip_random_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let map = random_map(3, 2, 2, 3, &mut rng);
            let text = to_text(&map);
            let back = from_text(&text).unwrap();
            assert_eq!(map, back, "text round trip must be exact");
        }
    }

    #[test]
    fn json_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let map = random_map(4, 1, 2, 4, &mut rng);
        let j = to_json(&map);
        let s = serde_json::to_string_pretty(&j).unwrap();
        let back = from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(matches!(from_text(""), Err(Error::Parse(_))));
        assert!(matches!(
            from_text("dims: n=2 d1=1\nx5"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            from_text("bogus\nx1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            from_text("dims: n=2 d1=1"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn parse_map_sniffs_json() {
        let map = example_nondegenerate();
        let s = serde_json::to_string(&to_json(&map)).unwrap();
        let back = parse_map(&s).unwrap();
        assert_eq!(map, back);
        let back2 = parse_map(&to_text(&map)).unwrap();
        assert_eq!(map, back2);
    }
}
