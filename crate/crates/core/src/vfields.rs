//! Constructive vector fields from Jacobian minors, in exact rational
//! arithmetic.
//!
//! Given smooth components f^1..f^m on an open set in R^d with everywhere
//! rank-d Jacobian, the generation-1 fields are
//!
//! ```text
//! X_i φ = (-1)^{i-1} (2 jac_J)^{-1} det ∂(φ, f^{j_1}, .., omit f^{j_i}, .., f^{j_d})/∂x
//! ```
//!
//! for a selected d-tuple J of components. By construction X_i f^{j_{i'}} =
//! δ_{ii'}/2 identically and |jac_J det(X_1..X_d)| = 2^{-d}; both are
//! verified here as polynomial identities after clearing denominators, not
//! just numerically. Later generations repeat the construction on the
//! closure f^{(N)} = {X^α f^j : gen(α) <= N}, which has exactly m (d+1)^N
//! components. Guards (the region where the selected minor dominates all
//! others by a factor of two) are tracked by evaluation at probe points.

use num::{BigRational, FromPrimitive, One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::MultiPoly;

pub type RatPoly = MultiPoly<BigRational>;

/// Quotient of sparse polynomials. No GCD cancellation by default; an
/// optional light pass removes common monomial factors and integer content.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFunction {
    num: RatPoly,
    den: RatPoly,
}

impl RationalFunction {
    pub fn new(num: RatPoly, den: RatPoly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::ZeroMeasure("denominator identically zero".into()));
        }
        Ok(Self { num, den })
    }

    pub fn from_poly(p: RatPoly) -> Self {
        let nv = p.nvars();
        Self {
            num: p,
            den: RatPoly::one(nv),
        }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        Self::from_poly(RatPoly::constant(nvars, c))
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Self::from_poly(RatPoly::var(nvars, i))
    }

    pub fn num(&self) -> &RatPoly {
        &self.num
    }

    pub fn den(&self) -> &RatPoly {
        &self.den
    }

    pub fn nvars(&self) -> usize {
        self.num.nvars()
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            num: self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            den: self.den.mul(&o.den),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Self {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self {
            num: self.num.mul(&o.num),
            den: self.den.mul(&o.den),
        }
    }

    pub fn div(&self, o: &Self) -> Result<Self> {
        if o.num.is_zero() {
            return Err(Error::ZeroMeasure("division by the zero function".into()));
        }
        Ok(Self {
            num: self.num.mul(&o.den),
            den: self.den.mul(&o.num),
        })
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    /// Quotient rule, exact.
    pub fn partial(&self, var: usize) -> Self {
        let dn = self.num.partial(var);
        let dd = self.den.partial(var);
        Self {
            num: dn.mul(&self.den).sub(&self.num.mul(&dd)),
            den: self.den.mul(&self.den),
        }
    }

    /// Exact equality with a constant: num - c * den vanishes identically.
    pub fn equals_constant(&self, c: &BigRational) -> bool {
        self.num.sub(&self.den.scale(c)).is_zero()
    }

    /// Float evaluation; rejects points where the denominator is tiny.
    pub fn eval_f64(&self, point: &[f64]) -> Option<f64> {
        let den = self.den.eval_f64(point);
        if den.abs() < 1e-12 {
            return None;
        }
        Some(self.num.eval_f64(point) / den)
    }

    pub fn eval_rational(&self, point: &[BigRational]) -> Option<BigRational> {
        let den = self.den.eval_rational(point);
        if den.is_zero() {
            return None;
        }
        Some(self.num.eval_rational(point) / den)
    }

    /// Light cancellation: common monomial factor and rational content.
    pub fn reduce_light(&self) -> Self {
        let nv = self.nvars();
        let common_exp = |p: &RatPoly| -> Vec<u16> {
            let mut acc: Option<Vec<u16>> = None;
            for (e, _) in p.terms() {
                acc = Some(match acc {
                    None => e.clone(),
                    Some(a) => a.iter().zip(e).map(|(x, y)| (*x).min(*y)).collect(),
                });
            }
            acc.unwrap_or_else(|| vec![0; nv])
        };
        if self.num.is_zero() {
            return Self {
                num: RatPoly::zero(nv),
                den: RatPoly::one(nv),
            };
        }
        let en = common_exp(&self.num);
        let ed = common_exp(&self.den);
        let shared: Vec<u16> = en.iter().zip(&ed).map(|(a, b)| *a.min(b)).collect();
        let strip = |p: &RatPoly| -> RatPoly {
            let mut out = RatPoly::zero(nv);
            for (e, c) in p.terms() {
                let ne: Vec<u16> = e.iter().zip(&shared).map(|(a, b)| a - b).collect();
                out.insert_term(ne, c.clone());
            }
            out
        };
        let mut num = strip(&self.num);
        let mut den = strip(&self.den);
        // Normalize by the leading denominator coefficient.
        let lead = den.terms().next().map(|(_, c)| c.clone());
        if let Some(c) = lead {
            if !c.is_zero() {
                let inv = BigRational::one() / c;
                num = num.scale(&inv);
                den = den.scale(&inv);
            }
        }
        Self { num, den }
    }
}

/// Determinant of a square matrix of rational functions by cofactor
/// expansion; fine at the sizes the construction needs.
pub fn ratfn_det(m: &[Vec<RationalFunction>]) -> Result<RationalFunction> {
    let n = m.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty determinant".into()));
    }
    let nv = m[0][0].nvars();
    if n == 1 {
        return Ok(m[0][0].clone());
    }
    let mut acc = RationalFunction::constant(nv, BigRational::zero());
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<RationalFunction>> = (1..n)
            .map(|r| {
                (0..n)
                    .filter(|&c| c != j)
                    .map(|c| m[r][c].clone())
                    .collect()
            })
            .collect();
        let sub = ratfn_det(&minor)?;
        let term = m[0][j].mul(&sub);
        acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    Ok(acc)
}

/// Jacobian determinant of the selected components, as a rational function.
fn minor_jacobian(f: &[RationalFunction], sel: &[usize]) -> Result<RationalFunction> {
    let d = sel.len();
    let rows: Vec<Vec<RationalFunction>> = sel
        .iter()
        .map(|&j| (0..d).map(|l| f[j].partial(l)).collect())
        .collect();
    ratfn_det(&rows)
}

/// Lexicographically ordered d-subsets of 0..m.
fn combinations(m: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, start: usize, m: usize, d: usize) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(out, cur, i + 1, m, d);
            cur.pop();
        }
    }
    rec(&mut out, &mut cur, 0, m, d);
    out
}

/// Guard region data: all candidate minors plus the selected one; a point is
/// inside when the selected minor dominates every other by the factor-two
/// rule.
#[derive(Debug, Clone)]
pub struct Guard {
    pub jacobians: Vec<RationalFunction>,
    pub selected: usize,
}

impl Guard {
    /// None when some minor is undefined at the point.
    pub fn contains(&self, x: &[f64]) -> Option<bool> {
        let sel = self.jacobians[self.selected].eval_f64(x)?.abs();
        if sel == 0.0 {
            return Some(false);
        }
        let mut maxv: f64 = 0.0;
        for j in &self.jacobians {
            maxv = maxv.max(j.eval_f64(x)?.abs());
        }
        Some(maxv < 2.0 * sel)
    }
}

/// One generation of vector fields.
#[derive(Debug, Clone)]
pub struct VFGeneration {
    pub level: usize,
    /// fields[i][l] = l-th coordinate of X_i, a rational function.
    pub fields: Vec<Vec<RationalFunction>>,
    /// Indices (into the generation's input map) of the selected minor.
    pub minor: Vec<usize>,
    pub guard: Guard,
}

impl VFGeneration {
    /// Applies X_i to a function, exactly.
    pub fn apply(&self, i: usize, g: &RationalFunction) -> RationalFunction {
        let d = self.fields.len();
        let mut acc = RationalFunction::constant(g.nvars(), BigRational::zero());
        for l in 0..d {
            if self.fields[i][l].is_zero() {
                continue;
            }
            acc = acc.add(&self.fields[i][l].mul(&g.partial(l)));
        }
        acc
    }
}

/// Selects the minor maximizing the mean |jacobian| over the probes, ties
/// broken lexicographically. Probes where any candidate is undefined are
/// skipped.
pub fn select_minor(
    f: &[RationalFunction],
    d: usize,
    probes: &[Vec<f64>],
) -> Result<(Vec<usize>, Guard)> {
    if f.len() < d {
        return Err(Error::BadDimensions(format!(
            "need at least {d} components, got {}",
            f.len()
        )));
    }
    let combos = combinations(f.len(), d);
    let jacs: Vec<RationalFunction> = combos
        .iter()
        .map(|sel| minor_jacobian(f, sel))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (idx, jac) in jacs.iter().enumerate() {
        let mut total = 0.0;
        let mut count = 0usize;
        for p in probes {
            if let Some(v) = jac.eval_f64(p) {
                total += v.abs();
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let mean = total / count as f64;
        let better = match best {
            None => true,
            Some((_, b)) => mean > b + 1e-12,
        };
        if better {
            best = Some((idx, mean));
        }
    }
    let (idx, mean) = best.ok_or_else(|| {
        Error::RankDeficient("no minor evaluates on the probe set".into())
    })?;
    if mean <= 1e-12 {
        return Err(Error::RankDeficient(
            "all minors vanish at the probes".into(),
        ));
    }
    Ok((
        combos[idx].clone(),
        Guard {
            jacobians: jacs,
            selected: idx,
        },
    ))
}

/// Generation-1 construction over the selected minor. Coordinates come from
/// the cofactor expansion of the defining determinant along its first row.
pub fn gen1_fields(f: &[RationalFunction], minor: &[usize], guard: Guard) -> Result<VFGeneration> {
    let d = minor.len();
    let nv = f[0].nvars();
    let jac = &guard.jacobians[guard.selected];
    let two = BigRational::from_usize(2).expect("2");
    let denom = jac.scale(&two);
    let mut fields = Vec::with_capacity(d);
    for i in 0..d {
        // Rows of the reduced Jacobian: gradients of f^{j_r}, r != i.
        let rows: Vec<Vec<RationalFunction>> = minor
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != i)
            .map(|(_, &j)| (0..d).map(|l| f[j].partial(l)).collect())
            .collect();
        let mut coords = Vec::with_capacity(d);
        for l in 0..d {
            let cof = if d == 1 {
                RationalFunction::constant(nv, BigRational::one())
            } else {
                let sub: Vec<Vec<RationalFunction>> = rows
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != l)
                            .map(|(_, v)| v.clone())
                            .collect()
                    })
                    .collect();
                ratfn_det(&sub)?
            };
            let mut sign = if (i % 2) == 0 { 1i64 } else { -1i64 };
            if l % 2 == 1 {
                sign = -sign;
            }
            let signed = cof.scale(&BigRational::from_i64(sign).expect("sign"));
            coords.push(signed.div(&denom)?.reduce_light());
        }
        fields.push(coords);
    }
    Ok(VFGeneration {
        level: 1,
        fields,
        minor: minor.to_vec(),
        guard,
    })
}

/// The full pipeline state: closures f^{(g)} and the generations built on
/// them.
#[derive(Debug, Clone)]
pub struct VfPipeline {
    pub d: usize,
    /// closures[g] holds f^{(g)}; closures[0] is the input map.
    pub closures: Vec<Vec<RationalFunction>>,
    pub labels: Vec<Vec<String>>,
    pub generations: Vec<VFGeneration>,
    probes: Vec<Vec<f64>>,
}

impl VfPipeline {
    pub fn new(f: Vec<RationalFunction>, d: usize, probes: Vec<Vec<f64>>) -> Result<Self> {
        if f.is_empty() || probes.is_empty() {
            return Err(Error::BadDimensions("need components and probes".into()));
        }
        let labels = (0..f.len()).map(|j| format!("f{}", j + 1)).collect();
        Ok(Self {
            d,
            closures: vec![f],
            labels: vec![labels],
            generations: Vec::new(),
        probes,
        })
    }

    /// Probes lying in every guard built so far.
    pub fn guarded_probes(&self) -> Vec<Vec<f64>> {
        self.probes
            .iter()
            .filter(|p| {
                self.generations
                    .iter()
                    .all(|g| g.guard.contains(p).unwrap_or(false))
            })
            .cloned()
            .collect()
    }

    /// Builds the next generation: selects a minor of the current closure,
    /// constructs the fields, and extends the closure by one application
    /// layer (count multiplies by d + 1).
    pub fn iterate_generation(&mut self) -> Result<&VFGeneration> {
        let level = self.generations.len() + 1;
        let input = self.closures.last().expect("nonempty").clone();
        let input_labels = self.labels.last().expect("nonempty").clone();
        let probes = if self.generations.is_empty() {
            self.probes.clone()
        } else {
            let g = self.guarded_probes();
            if g.is_empty() {
                return Err(Error::EmptyGuard(format!(
                    "no probes survive the guards before generation {level}"
                )));
            }
            g
        };
        let (minor, guard) = select_minor(&input, self.d, &probes)?;
        let mut gen = gen1_fields(&input, &minor, guard)?;
        gen.level = level;
        // Closure extension: identity layer then X_i layers.
        let mut next = input.clone();
        let mut next_labels = input_labels.clone();
        for i in 0..self.d {
            for (src, label) in input.iter().zip(&input_labels) {
                let mut applied = gen.apply(i, src);
                if level >= 3 {
                    applied = applied.reduce_light();
                }
                next.push(applied);
                next_labels.push(format!("X{}^({}) {}", i + 1, level, label));
            }
        }
        self.closures.push(next);
        self.labels.push(next_labels);
        self.generations.push(gen);
        Ok(self.generations.last().expect("just built"))
    }
}

/// Verification report for the constructed generations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VfReport {
    /// Per generation: true when X_i f^{j_{i'}} = δ/2 holds as an exact
    /// polynomial identity.
    pub kronecker_exact: Vec<bool>,
    /// Per generation: |jac det X| = 2^{-d} exact identity flags.
    pub det_identity_exact: Vec<bool>,
    /// Float residuals of the Kronecker identity at the probes.
    pub kronecker_residual: f64,
    pub det_identity_residual: f64,
    /// Max of |X^alpha f^j| - 1 over guard probes and closure components.
    pub sup_excess: f64,
    /// Max |c_i^{i'}| over inter-generation relations at the probes.
    pub max_basis_coefficient: f64,
    /// Closure sizes, expected to be m (d+1)^N.
    pub closure_sizes: Vec<usize>,
    pub probes_used: usize,
    pub probes_excluded: usize,
}

pub fn verify_identities(pipe: &VfPipeline, probes: &[Vec<f64>]) -> Result<VfReport> {
    let d = pipe.d;
    let mut kronecker_exact = Vec::new();
    let mut det_identity_exact = Vec::new();
    let mut kron_resid: f64 = 0.0;
    let mut det_resid: f64 = 0.0;

    let guarded: Vec<Vec<f64>> = probes
        .iter()
        .filter(|p| {
            pipe.generations
                .iter()
                .all(|g| g.guard.contains(p).unwrap_or(false))
        })
        .cloned()
        .collect();
    let excluded = probes.len() - guarded.len();
    if guarded.is_empty() {
        return Err(Error::EmptyGuard("no probes inside all guards".into()));
    }

    let half = BigRational::new(1.into(), 2.into());
    for (g_idx, gen) in pipe.generations.iter().enumerate() {
        let input = &pipe.closures[g_idx];
        // Exact Kronecker identity on the minor components.
        let mut exact = true;
        for i in 0..d {
            for (ip, &j) in gen.minor.iter().enumerate() {
                let val = gen.apply(i, &input[j]);
                let target = if i == ip { half.clone() } else { BigRational::zero() };
                if !val.equals_constant(&target) {
                    exact = false;
                }
                for p in &guarded {
                    if let Some(v) = val.eval_f64(p) {
                        let t = if i == ip { 0.5 } else { 0.0 };
                        kron_resid = kron_resid.max((v - t).abs());
                    }
                }
            }
        }
        kronecker_exact.push(exact);

        // Exact determinant identity |jac det X| = 2^{-d}.
        let field_matrix: Vec<Vec<RationalFunction>> = (0..d)
            .map(|l| (0..d).map(|i| gen.fields[i][l].clone()).collect())
            .collect();
        let detx = ratfn_det(&field_matrix)?;
        let jac = &gen.guard.jacobians[gen.guard.selected];
        let prod = jac.mul(&detx);
        let target = BigRational::new(1.into(), (1i64 << d).into());
        let exact_det = prod.equals_constant(&target) || prod.equals_constant(&(-target.clone()));
        det_identity_exact.push(exact_det);
        for p in &guarded {
            if let Some(v) = prod.eval_f64(p) {
                det_resid = det_resid.max((v.abs() - 2f64.powi(-(d as i32))).abs());
            }
        }
    }

    // Size estimate over the full closure at guard probes.
    let mut sup_excess = f64::NEG_INFINITY;
    let closure = pipe.closures.last().expect("nonempty");
    for comp in closure {
        for p in &guarded {
            if let Some(v) = comp.eval_f64(p) {
                sup_excess = sup_excess.max(v.abs() - 1.0);
            }
        }
    }

    // Inter-generation coefficients c_i^{i'} = 2 X_i^{(N)} X^{α_{i'}} f^{j_{i'}}.
    let mut max_c: f64 = 0.0;
    for (np, newer) in pipe.generations.iter().enumerate() {
        for (op, older) in pipe.generations.iter().enumerate() {
            if op >= np {
                continue;
            }
            let older_input = &pipe.closures[op];
            for i in 0..d {
                for &j in &older.minor {
                    let val = newer.apply(i, &older_input[j]);
                    for p in &guarded {
                        if let Some(v) = val.eval_f64(p) {
                            max_c = max_c.max(2.0 * v.abs());
                        }
                    }
                }
            }
        }
    }

    Ok(VfReport {
        kronecker_exact,
        det_identity_exact,
        kronecker_residual: kron_resid,
        det_identity_residual: det_resid,
        sup_excess,
        max_basis_coefficient: max_c,
        closure_sizes: pipe.closures.iter().map(|c| c.len()).collect(),
        probes_used: guarded.len(),
        probes_excluded: excluded,
    })
}

/// Grid cell for the discrete Chebyshev sublevel argument.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub weight: f64,
    pub jacobian: f64,
    pub volume: f64,
    pub in_guard: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebyshevReport {
    pub retained: Vec<usize>,
    pub threshold: f64,
    /// W(E_1) / W(E_0 ∩ U): at least 1/2 by the Chebyshev argument.
    pub weight_ratio: f64,
}

/// Discrete analogue of the sublevel selection: keep cells where
/// |jac| / W < 2 ∫|jac| / W(E_0 ∩ U). Exceeds half the weight by
/// construction.
pub fn chebyshev_subset(cells: &[GridCell]) -> Result<ChebyshevReport> {
    let mut total_w = 0.0;
    let mut total_jac = 0.0;
    for c in cells {
        if c.in_guard && c.weight > 0.0 {
            total_w += c.weight * c.volume;
            total_jac += c.jacobian.abs() * c.volume;
        }
    }
    if total_w <= 0.0 {
        return Err(Error::ZeroMeasure("weighted measure of the base set is zero".into()));
    }
    let threshold = 2.0 * total_jac / total_w;
    let mut retained = Vec::new();
    let mut kept_w = 0.0;
    for (i, c) in cells.iter().enumerate() {
        if c.in_guard && c.weight > 0.0 && c.jacobian.abs() / c.weight < threshold {
            retained.push(i);
            kept_w += c.weight * c.volume;
        }
    }
    Ok(ChebyshevReport {
        retained,
        threshold,
        weight_ratio: kept_w / total_w,
    })
}

/// The standard corpus map f = (x^1, x^2, (x^1)^2 + (x^2)^2) on [0, 1/2]^2.
pub fn corpus_map() -> Vec<RationalFunction> {
    let one = BigRational::one();
    let x1 = RatPoly::var(2, 0);
    let x2 = RatPoly::var(2, 1);
    let f3 = x1.mul(&x1).add(&x2.mul(&x2));
    let _ = one;
    vec![
        RationalFunction::from_poly(x1),
        RationalFunction::from_poly(x2),
        RationalFunction::from_poly(f3),
    ]
}

/// Uniform grid probes in [0, 1/2]^2 avoiding the boundary.
pub fn corpus_probes(per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..per_axis {
        for j in 0..per_axis {
            let x = 0.5 * (i as f64 + 0.5) / per_axis as f64;
            let y = 0.5 * (j as f64 + 0.5) / per_axis as f64;
            out.push(vec![x, y]);
        }
    }
    out
}
