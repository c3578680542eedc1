//! Newton-type diagram, hull membership, and the degeneracy search.
//!
//! For a trilinear form Q and an orthonormal basis triple, the diagram N_0
//! collects the lattice triples (α, β, γ) whose derivative coefficient is
//! nonzero (above a relative floor), together with the origin. Q is
//! nondegenerate at scaling parameter s when the point o_s — d1 copies of
//! s/d1, k copies of s/k, d copies of s/d — lies in the convex hull of N_0
//! for *every* orthonormal triple. Membership is decided by linear
//! programming; a failure is converted into a degeneracy witness: a
//! separating functional x, gauge-normalized so its v- and w-block sums
//! vanish, whose entries become the eigenvalues of diagonal one-parameter
//! subgroups (D_1, D_2, D_3) in the triple's bases. The witness is accepted
//! only after the decay check confirms that the normalized 𝒬 ratio tends to
//! zero along the subgroup.
//!
//! The intersection over the whole orthogonal group is not decidable by
//! finite sampling; the search combines seeded Haar-random triples, a
//! smoothed finite-scale relaxation of the hull margin, and a final
//! coefficient-vanishing polish. A degenerate verdict is certificate-backed;
//! a nondegenerate verdict is stated at the confidence of the search budget,
//! which the caller receives in the stats.

use nalgebra::{DMatrix, DVector};
use num::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve, LpNum, LpResult, StandardLp};
use crate::multilinear::{random_orthogonal, VectorList};
use crate::qcalc::{
    derivative_coefficient, script_q, BasisTriple, DerivativeTable, TrilinearForm,
};

pub use crate::qcalc::MultiindexTriple;

/// Rational scaling exponent s = dk/n with n = d + k.
pub fn scaling_exponent(d1: usize, k: usize, d: usize) -> num::Rational64 {
    let _ = d1;
    num::Rational64::new((d * k) as i64, (d + k) as i64)
}

/// The scaling point o_s: d1 copies of s/d1, k copies of s/k, d copies of
/// s/d, as exact rationals.
pub fn scaling_point(d1: usize, k: usize, d: usize, s: num::Rational64) -> Vec<num::Rational64> {
    let mut out = Vec::with_capacity(d1 + k + d);
    for _ in 0..d1 {
        out.push(s / num::Rational64::from_integer(d1 as i64));
    }
    for _ in 0..k {
        out.push(s / num::Rational64::from_integer(k as i64));
    }
    for _ in 0..d {
        out.push(s / num::Rational64::from_integer(d as i64));
    }
    out
}

pub fn scaling_point_f64(d1: usize, k: usize, d: usize, s: num::Rational64) -> Vec<f64> {
    scaling_point(d1, k, d, s)
        .into_iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect()
}

/// Diagram of one orthonormal basis triple: surviving lattice points and
/// their relative coefficient margins.
#[derive(Debug, Clone)]
pub struct DiagramSample {
    pub points: Vec<MultiindexTriple>,
    pub margins: Vec<f64>,
}

/// Origin plus every (α, β, γ) with |coefficient| > eps_coef * ||Q||.
pub fn n0_points(
    q: &TrilinearForm,
    bases: &BasisTriple,
    eps_coef: f64,
) -> Result<DiagramSample> {
    let dev = bases.orthonormal_deviation();
    if dev > 1e-10 {
        return Err(Error::NonOrthonormalBases(dev));
    }
    let (d1, k, d) = q.dims();
    let table = DerivativeTable::build(q, bases)?;
    let norm = q.norm().max(f64::MIN_POSITIVE);
    let mut points = vec![MultiindexTriple::origin(d1, k, d)];
    let mut margins = vec![1.0];
    for (triple, val) in &table.entries {
        let margin = val.abs() / norm;
        if margin > eps_coef {
            points.push(triple.clone());
            margins.push(margin);
        }
    }
    Ok(DiagramSample { points, margins })
}

/// Outcome of the hull membership decision for a query point.
#[derive(Debug, Clone)]
pub enum HullDecision {
    /// Convex weights over the input points reproducing the query.
    InHull {
        weights: Vec<f64>,
        residual: f64,
        /// Separation depth: how far the best gauge-normalized functional
        /// with sup-norm at most one falls short of separating (>= 0 inside,
        /// ~0 on the boundary).
        depth: f64,
    },
    /// Gauge-normalized separating functional with its margin
    /// x.query - max_p x.p > 0.
    Outside { functional: Vec<f64>, separation: f64 },
}

/// Best gauge-normalized separator with |x_i| <= 1:
/// maximize x.query - z subject to x.p <= z for every point.
/// Returns (separation, x). Positive separation certifies the query outside
/// the hull; the negative of the optimum is the interior depth.
pub fn separation_margin(
    dims: (usize, usize, usize),
    points: &[MultiindexTriple],
    query: &[f64],
    trace_target: Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    let lp = margin_lp::<f64>(
        dims,
        points,
        query,
        trace_target,
    );
    match solve(&lp) {
        LpResult::Optimal { x, objective } => {
            let sep = -objective.to_f64();
            let dtot = dims.0 + dims.1 + dims.2;
            let xs: Vec<f64> = (0..dtot).map(|i| x[i] - x[dtot + i]).collect();
            // Near-boundary optima are re-certified in exact arithmetic.
            if sep.abs() <= 10.0 * 1e-9 {
                let rlp = margin_lp::<BigRational>(
                    dims,
                    points,
                    query,
                    trace_target,
                );
                if let LpResult::Optimal { x, objective } = solve(&rlp) {
                    let sep = -objective.to_f64();
                    let xs: Vec<f64> =
                        (0..dtot).map(|i| (x[i].clone() - x[dtot + i].clone()).to_f64()).collect();
                    return Ok((sep, xs));
                }
            }
            Ok((sep, xs))
        }
        LpResult::Infeasible { .. } => Err(Error::DimensionMismatch(
            "margin LP cannot be infeasible".into(),
        )),
        LpResult::Unbounded => Err(Error::DimensionMismatch(
            "margin LP cannot be unbounded".into(),
        )),
    }
}

/// Standard-form margin LP, generic so the same construction runs in exact
/// rational arithmetic. Variables: x+ (D), x- (D), z+ , z-, point slacks,
/// box slacks for x+ and x-. Gauge rows force the v- and w-block sums of x
/// to zero; an optional row pins x.o_s (equivalently trace D_1).
fn margin_lp<T: LpNum>(
    (d1, k, d): (usize, usize, usize),
    points: &[MultiindexTriple],
    query: &[f64],
    trace_target: Option<f64>,
) -> StandardLp<T> {
    let dtot = d1 + k + d;
    let np = points.len();
    let nvars = 2 * dtot + 2 + np + 2 * dtot;
    let xq = |j: usize| T::from_f64_exact(query[j]);
    let mut a: Vec<Vec<T>> = Vec::new();
    let mut b: Vec<T> = Vec::new();
    // Point rows: sum_j (x+_j - x-_j) p_j - z+ + z- + s_p = 0.
    for (pi, p) in points.iter().enumerate() {
        let coords = p.as_point();
        let mut row = vec![T::zero(); nvars];
        for j in 0..dtot {
            row[j] = T::from_f64_exact(coords[j]);
            row[dtot + j] = T::from_f64_exact(-coords[j]);
        }
        row[2 * dtot] = T::one().neg();
        row[2 * dtot + 1] = T::one();
        row[2 * dtot + 2 + pi] = T::one();
        a.push(row);
        b.push(T::zero());
    }
    // Box rows: x+_j + u_j = 1 and x-_j + w_j = 1.
    for j in 0..2 * dtot {
        let mut row = vec![T::zero(); nvars];
        row[j] = T::one();
        row[2 * dtot + 2 + np + j] = T::one();
        a.push(row);
        b.push(T::one());
    }
    // Gauge rows: v-block and w-block sums of x vanish.
    for (lo, hi) in [(d1, d1 + k), (d1 + k, dtot)] {
        let mut row = vec![T::zero(); nvars];
        for j in lo..hi {
            row[j] = T::one();
            row[dtot + j] = T::one().neg();
        }
        a.push(row);
        b.push(T::zero());
    }
    // Optional trace pin: x.query = trace_target * (x.query scale).
    if let Some(t) = trace_target {
        let mut row = vec![T::zero(); nvars];
        for j in 0..dtot {
            row[j] = xq(j);
            row[dtot + j] = xq(j).neg();
        }
        a.push(row);
        b.push(T::from_f64_exact(t));
    }
    // Objective: maximize x.q - z => minimize z - x.q.
    let mut c = vec![T::zero(); nvars];
    for j in 0..dtot {
        c[j] = xq(j).neg();
        c[dtot + j] = xq(j);
    }
    c[2 * dtot] = T::one();
    c[2 * dtot + 1] = T::one().neg();
    StandardLp { a, b, c }
}

/// Decides hull membership of `query` against `points` (the origin should be
/// among them for diagram queries). Always decides: feasibility LP for the
/// weights, margin LP for the separator, exact-rational reruns near the
/// boundary.
pub fn hull_membership(
    dims: (usize, usize, usize),
    points: &[MultiindexTriple],
    query: &[f64],
) -> Result<HullDecision> {
    let dtot = dims.0 + dims.1 + dims.2;
    if query.len() != dtot {
        return Err(Error::DimensionMismatch(format!(
            "query length {} vs dims {:?}",
            query.len(),
            dims
        )));
    }
    if points.is_empty() {
        return Err(Error::DimensionMismatch("empty point set".into()));
    }
    let (sep, functional) = separation_margin(dims, points, query, None)?;
    if sep > 1e-9 {
        let g = gauge_normalize(dims, &functional);
        return Ok(HullDecision::Outside {
            separation: sep,
            functional: g,
        });
    }
    // Feasibility LP: convex weights reproducing the query.
    let lp = weights_lp::<f64>(points, query);
    let weights = match solve(&lp) {
        LpResult::Optimal { x, .. } => x,
        _ => {
            // Float disagreement with the margin LP: settle exactly.
            let rlp = weights_lp::<BigRational>(points, query);
            match solve(&rlp) {
                LpResult::Optimal { x, .. } => x.iter().map(|v| v.to_f64()).collect(),
                _ => {
                    let g = gauge_normalize(dims, &functional);
                    return Ok(HullDecision::Outside {
                        separation: sep,
                        functional: g,
                    });
                }
            }
        }
    };
    let residual = weight_residual(points, query, &weights);
    if residual > 1e-9 {
        // Boundary-precision case: exact arithmetic settles it.
        let rlp = weights_lp::<BigRational>(points, query);
        if let LpResult::Optimal { x, .. } = solve(&rlp) {
            let w: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
            let residual = weight_residual(points, query, &w);
            return Ok(HullDecision::InHull {
                weights: w,
                residual,
                depth: -sep,
            });
        }
    }
    Ok(HullDecision::InHull {
        weights,
        residual,
        depth: -sep,
    })
}

fn weights_lp<T: LpNum>(points: &[MultiindexTriple], query: &[f64]) -> StandardLp<T> {
    let dtot = query.len();
    let np = points.len();
    let mut a: Vec<Vec<T>> = Vec::new();
    let mut b: Vec<T> = Vec::new();
    let mut row = Vec::with_capacity(np);
    for _ in 0..np {
        row.push(T::one());
    }
    a.push(row);
    b.push(T::one());
    for j in 0..dtot {
        let mut row = Vec::with_capacity(np);
        for p in points {
            row.push(T::from_f64_exact(p.as_point()[j]));
        }
        a.push(row);
        b.push(T::from_f64_exact(query[j]));
    }
    StandardLp {
        a,
        b,
        c: vec![T::zero(); np],
    }
}

fn weight_residual(points: &[MultiindexTriple], query: &[f64], weights: &[f64]) -> f64 {
    let dtot = query.len();
    let mut resid: f64 = (weights.iter().sum::<f64>() - 1.0).abs();
    for j in 0..dtot {
        let mut s = 0.0;
        for (p, w) in points.iter().zip(weights) {
            s += w * p.as_point()[j];
        }
        resid = resid.max((s - query[j]).abs());
    }
    resid
}

/// Adds the block shift (a, .., a; b, .., b; c, .., c), a + b + c = 0, that
/// zeroes the v- and w-block sums. Dot products with diagram points and with
/// o_s are unchanged.
pub fn gauge_normalize((d1, k, d): (usize, usize, usize), x: &[f64]) -> Vec<f64> {
    let vsum: f64 = x[d1..d1 + k].iter().sum();
    let wsum: f64 = x[d1 + k..].iter().sum();
    let b = -vsum / k as f64;
    let c = -wsum / d as f64;
    let a = -b - c;
    let mut out = x.to_vec();
    for xi in out.iter_mut().take(d1) {
        *xi += a;
    }
    for xi in out.iter_mut().take(d1 + k).skip(d1) {
        *xi += b;
    }
    for xi in out.iter_mut().skip(d1 + k) {
        *xi += c;
    }
    out
}

/// Hilbert-Mumford degeneracy witness: orthonormal bases diagonalizing
/// D_1, D_2, D_3 with tr D_1 > 0 and tr D_2 = tr D_3 = 0.
#[derive(Debug, Clone)]
pub struct Witness {
    pub bases: BasisTriple,
    pub d1_eigs: Vec<f64>,
    pub d2_eigs: Vec<f64>,
    pub d3_eigs: Vec<f64>,
}

impl Witness {
    /// Builds a witness from a gauge-normalized separating functional at an
    /// orthonormal triple: the functional's entries are the eigenvalues.
    pub fn from_functional(bases: &BasisTriple, x: &[f64]) -> Self {
        let d1 = bases.u.dim();
        let k = bases.v.dim();
        Self {
            bases: bases.clone(),
            d1_eigs: x[..d1].to_vec(),
            d2_eigs: x[d1..d1 + k].to_vec(),
            d3_eigs: x[d1 + k..].to_vec(),
        }
    }

    pub fn traces(&self) -> (f64, f64, f64) {
        (
            self.d1_eigs.iter().sum(),
            self.d2_eigs.iter().sum(),
            self.d3_eigs.iter().sum(),
        )
    }

    pub fn check_traces(&self) -> Result<()> {
        let (t1, t2, t3) = self.traces();
        if t1 <= 1e-12 {
            return Err(Error::TraceViolation(format!("trace D1 = {t1:.3e} not positive")));
        }
        if t2.abs() > 1e-9 || t3.abs() > 1e-9 {
            return Err(Error::TraceViolation(format!(
                "traces D2, D3 = {t2:.3e}, {t3:.3e} not zero"
            )));
        }
        Ok(())
    }

    /// The bases scaled by e^{tau D_j}: eigenvector b_i scales by e^{tau l_i}.
    pub fn scaled_triple(&self, tau: f64) -> Result<BasisTriple> {
        let scale = |list: &VectorList, eigs: &[f64]| -> Result<VectorList> {
            VectorList::new(
                list.dim(),
                list.vectors()
                    .iter()
                    .zip(eigs)
                    .map(|(v, &l)| v * f64::exp(tau * l))
                    .collect(),
            )
        };
        BasisTriple::new(
            scale(&self.bases.u, &self.d1_eigs)?,
            scale(&self.bases.v, &self.d2_eigs)?,
            scale(&self.bases.w, &self.d3_eigs)?,
        )
    }

    /// Dense symmetric matrices D_1, D_2, D_3.
    pub fn d_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let build = |list: &VectorList, eigs: &[f64]| {
            let n = list.dim();
            let mut m = DMatrix::zeros(n, n);
            for (v, &l) in list.vectors().iter().zip(eigs) {
                m += l * v * v.transpose();
            }
            m
        };
        (
            build(&self.bases.u, &self.d1_eigs),
            build(&self.bases.v, &self.d2_eigs),
            build(&self.bases.w, &self.d3_eigs),
        )
    }
}

/// Result of evaluating the Hilbert-Mumford ratio along a witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub taus: Vec<f64>,
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub accepted: bool,
    /// Max deviation of |det e^{tau D_2} v| and |det e^{tau D_3} w| from 1.
    pub det_drift: f64,
}

/// Evaluates ratio(tau) = 𝒬[scaled bases] / det-power product on the grid
/// and fits the log-ratio slope; accepts when slope <= -slope_floor.
pub fn witness_check(
    q: &TrilinearForm,
    witness: &Witness,
    tau_grid: &[f64],
    slope_floor: f64,
) -> Result<DecayReport> {
    witness.check_traces()?;
    let (d1, k, d) = q.dims();
    let s = scaling_exponent(d1, k, d);
    let s_f = *s.numer() as f64 / *s.denom() as f64;
    let mut taus = Vec::new();
    let mut ratios = Vec::new();
    let mut det_drift: f64 = 0.0;
    for &tau in tau_grid {
        let bases = witness.scaled_triple(tau)?;
        let val = script_q(q, &bases)?;
        let denom = bases.det_product_power(s_f);
        det_drift = det_drift
            .max((bases.dets[1] - 1.0).abs())
            .max((bases.dets[2] - 1.0).abs());
        taus.push(tau);
        ratios.push(val / denom);
    }
    let (slope, intercept) = log_linear_fit(&taus, &ratios);
    Ok(DecayReport {
        taus,
        ratios,
        slope,
        intercept,
        accepted: slope <= -slope_floor,
        det_drift,
    })
}

/// Least-squares fit of ln(y) = slope * x + intercept.
pub fn log_linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lys: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = lys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&lys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// One certificate ensemble: convex weights over diagram points reproducing
/// o_s at a particular orthonormal triple.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub bases: BasisTriple,
    pub points: Vec<MultiindexTriple>,
    pub weights: Vec<f64>,
    pub coefficient_margins: Vec<f64>,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    Nondegenerate,
    Degenerate,
    Inconclusive,
}

/// Search statistics reported alongside every verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStats {
    pub triples_examined: usize,
    pub boundary_hits: usize,
    pub worst_depth: f64,
    pub best_separation: f64,
    pub best_smoothed_decay: f64,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub certificate: Vec<Ensemble>,
    pub witness: Option<(Witness, DecayReport)>,
    /// Best admissible direction found when no degeneracy exists; drives the
    /// corroboration harness for nondegenerate maps.
    pub least_decaying: Option<Witness>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub polish_iters: usize,
    /// Relative coefficient floor for diagram membership.
    pub eps_coef: f64,
    /// |separation| below this counts as the hull boundary.
    pub boundary_tol: f64,
    /// Separation above this triggers witness construction.
    pub degeneracy_margin: f64,
    /// Smoothed-decay threshold above which the search refuses to call the
    /// tensor nondegenerate.
    pub suspicion_floor: f64,
    pub tau_max: f64,
    pub tau_steps: usize,
    pub slope_floor: f64,
    /// Trace target for the least-decaying direction of nondegenerate maps.
    pub trace_target: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 200,
            polish_iters: 60,
            eps_coef: 1e-9,
            boundary_tol: 1e-9,
            degeneracy_margin: 1e-7,
            suspicion_floor: 0.02,
            tau_max: 10.0,
            tau_steps: 21,
            slope_floor: 0.05,
            trace_target: 0.1,
        }
    }
}

fn tau_grid(cfg: &VerdictConfig) -> Vec<f64> {
    let n = cfg.tau_steps.max(2);
    (0..n)
        .map(|i| cfg.tau_max * i as f64 / (n - 1) as f64)
        .collect()
}

/// Haar triple from a per-index stream seed: deterministic at any thread
/// count.
fn sampled_triple(dims: (usize, usize, usize), seed: u64, index: u64) -> BasisTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e3779b97f4a7c15));
    let (d1, k, d) = dims;
    let u = random_orthogonal(d1, &mut rng);
    let v = random_orthogonal(k, &mut rng);
    let w = random_orthogonal(d, &mut rng);
    BasisTriple::new(
        VectorList::from_rows(&u.transpose()),
        VectorList::from_rows(&v.transpose()),
        VectorList::from_rows(&w.transpose()),
    )
    .expect("orthogonal matrices are nonsingular")
}

/// Smoothed hull margin at probe scale tau0: include each point's constraint
/// offset by log|coefficient| / tau0, which interpolates between the raw
/// coefficient magnitudes (small tau0) and the thresholded diagram
/// (tau0 -> infinity). Smooth in the triple, so it can be hill-climbed.
fn smoothed_decay(
    q: &TrilinearForm,
    bases: &BasisTriple,
    o_s: &[f64],
    tau0: f64,
) -> Result<(f64, Vec<f64>)> {
    let (d1, k, d) = q.dims();
    let table = DerivativeTable::build(q, bases)?;
    let norm = q.norm().max(f64::MIN_POSITIVE);
    // Constraint x.p + log(|c_p|/||Q||)/tau0 <= z, encoded by shifting the
    // query side instead: maximize x.o_s - z.
    let mut points = vec![MultiindexTriple::origin(d1, k, d)];
    let mut offsets = vec![0.0];
    for (t, v) in &table.entries {
        let rel = v.abs() / norm;
        if rel < 1e-280 {
            continue;
        }
        points.push(t.clone());
        offsets.push(rel.ln() / tau0);
    }
    separation_margin_with_offsets((d1, k, d), &points, &offsets, o_s)
}

/// Margin LP with per-point constraint offsets: x.p + off_p <= z.
fn separation_margin_with_offsets(
    dims: (usize, usize, usize),
    points: &[MultiindexTriple],
    offsets: &[f64],
    query: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (d1, k, d) = dims;
    let dtot = d1 + k + d;
    let np = points.len();
    let nvars = 2 * dtot + 2 + np + 2 * dtot;
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        let coords = p.as_point();
        let mut row = vec![0.0; nvars];
        for j in 0..dtot {
            row[j] = coords[j];
            row[dtot + j] = -coords[j];
        }
        row[2 * dtot] = -1.0;
        row[2 * dtot + 1] = 1.0;
        row[2 * dtot + 2 + pi] = 1.0;
        a.push(row);
        b.push(-offsets[pi]);
    }
    for j in 0..2 * dtot {
        let mut row = vec![0.0; nvars];
        row[j] = 1.0;
        row[2 * dtot + 2 + np + j] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    for (lo, hi) in [(d1, d1 + k), (d1 + k, dtot)] {
        let mut row = vec![0.0; nvars];
        for j in lo..hi {
            row[j] = 1.0;
            row[dtot + j] = -1.0;
        }
        a.push(row);
        b.push(0.0);
    }
    let mut c = vec![0.0; nvars];
    for j in 0..dtot {
        c[j] = -query[j];
        c[dtot + j] = query[j];
    }
    c[2 * dtot] = 1.0;
    c[2 * dtot + 1] = -1.0;
    let lp = StandardLp { a, b, c };
    match solve(&lp) {
        LpResult::Optimal { x, objective } => {
            let xs: Vec<f64> = (0..dtot).map(|i| x[i] - x[dtot + i]).collect();
            Ok((-objective, xs))
        }
        _ => Err(Error::DimensionMismatch("offset margin LP failed".into())),
    }
}

/// Applies a small rotation generated by angle steps to one factor of the
/// triple. Factor: 0 = u, 1 = v, 2 = w.
fn rotate_factor(bases: &BasisTriple, factor: usize, i: usize, j: usize, angle: f64) -> BasisTriple {
    let list = match factor {
        0 => &bases.u,
        1 => &bases.v,
        _ => &bases.w,
    };
    let n = list.dim();
    let mut rot = DMatrix::identity(n, n);
    rot[(i, i)] = angle.cos();
    rot[(j, j)] = angle.cos();
    rot[(i, j)] = -angle.sin();
    rot[(j, i)] = angle.sin();
    // Rotate coordinates of every basis vector.
    let mapped = list.map(&rot);
    let (u, v, w) = match factor {
        0 => (mapped, bases.v.clone(), bases.w.clone()),
        1 => (bases.u.clone(), mapped, bases.w.clone()),
        _ => (bases.u.clone(), bases.v.clone(), mapped),
    };
    BasisTriple::new(u, v, w).expect("rotation preserves orthonormality")
}

/// Drives the coefficients the separator wants absent to zero by coordinate
/// descent over plane rotations of the triple. Returns the polished triple
/// and the residual sum of squares.
fn snap_alignment(
    q: &TrilinearForm,
    bases: &BasisTriple,
    drop_set: &[MultiindexTriple],
    iters: usize,
) -> (BasisTriple, f64) {
    let obj = |b: &BasisTriple| -> f64 {
        drop_set
            .iter()
            .map(|t| {
                let c = derivative_coefficient(q, b, t).unwrap_or(f64::INFINITY);
                c * c
            })
            .sum()
    };
    let mut cur = bases.clone();
    let mut val = obj(&cur);
    let mut step = 0.1;
    let dims = [cur.u.dim(), cur.v.dim(), cur.w.dim()];
    for _ in 0..iters {
        if val < 1e-30 {
            break;
        }
        let mut improved = false;
        for factor in 0..3 {
            let n = dims[factor];
            for i in 0..n {
                for j in (i + 1)..n {
                    for sgn in [1.0, -1.0] {
                        let cand = rotate_factor(&cur, factor, i, j, sgn * step);
                        let cval = obj(&cand);
                        if cval < val {
                            cur = cand;
                            val = cval;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            step *= 0.35;
            if step < 1e-13 {
                break;
            }
        }
    }
    (cur, val)
}

/// Full verdict search. See the module docs for semantics: Degenerate is
/// certificate-backed (exact LP plus decay check); Nondegenerate means every
/// examined triple kept o_s inside its hull and the smoothed search found no
/// decaying direction, at the stated budget.
pub fn verdict(q: &TrilinearForm, cfg: &VerdictConfig) -> Result<Verdict> {
    let (d1, k, d) = q.dims();
    let dims = (d1, k, d);
    let s = scaling_exponent(d1, k, d);
    let o_s = scaling_point_f64(d1, k, d, s);
    let grid = tau_grid(cfg);

    if q.norm() == 0.0 {
        // Hull of the bare origin never contains o_s (s > 0): degenerate,
        // with an isotropic expanding witness.
        let bases = BasisTriple::standard(d1, k, d);
        let x = gauge_normalize(dims, &vec![1.0; d1 + k + d]);
        let witness = Witness::from_functional(&bases, &x);
        let decay = witness_check(q, &witness, &grid, cfg.slope_floor)?;
        return Ok(Verdict {
            status: VerdictStatus::Degenerate,
            certificate: Vec::new(),
            witness: Some((witness, decay)),
            least_decaying: None,
            stats: SearchStats {
                triples_examined: 1,
                boundary_hits: 0,
                worst_depth: 0.0,
                best_separation: f64::INFINITY,
                best_smoothed_decay: f64::INFINITY,
                budget_exhausted: false,
            },
        });
    }

    // Stage 1: thresholded diagram over seeded triples (standard first).
    let mut triples: Vec<BasisTriple> = vec![BasisTriple::standard(d1, k, d)];
    triples.extend((0..cfg.n_samples as u64).map(|i| sampled_triple(dims, cfg.seed, i)));

    let evals: Vec<(usize, f64, Vec<f64>)> = triples
        .par_iter()
        .enumerate()
        .map(|(idx, bases)| {
            let sample = n0_points(q, bases, cfg.eps_coef)?;
            let (sep, x) = separation_margin(dims, &sample.points, &o_s, None)?;
            Ok((idx, sep, x))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut boundary_hits = 0usize;
    let mut worst_depth = f64::INFINITY;
    let mut worst_idx = 0usize;
    let mut best_sep = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for (idx, sep, _) in &evals {
        if sep.abs() <= cfg.boundary_tol {
            boundary_hits += 1;
        }
        let depth = -sep;
        if depth < worst_depth {
            worst_depth = depth;
            worst_idx = *idx;
        }
        if *sep > best_sep {
            best_sep = *sep;
            best_idx = *idx;
        }
    }

    // Stage 2: smoothed search from the most suspicious triples. The probe
    // scale tau0 keeps the landscape smooth for hill climbing; the final
    // suspicion value is re-measured at 4*tau0, where the log-coefficient
    // inflation (which is O(1/tau)) has mostly decayed, so nondegenerate
    // tensors fall back under the floor.
    let tau0 = cfg.tau_max.max(4.0);
    let tau_confirm = 4.0 * tau0;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.sort_by(|&a, &b| evals[b].1.partial_cmp(&evals[a].1).unwrap());
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut best_smoothed_triple = triples[best_idx].clone();
    for &idx in order.iter().take(4) {
        let mut cur = triples[idx].clone();
        let (mut val, _) = smoothed_decay(q, &cur, &o_s, tau0)?;
        let mut step = 0.3;
        for _ in 0..cfg.polish_iters {
            let mut improved = false;
            for factor in 0..3 {
                let n = [d1, k, d][factor];
                for i in 0..n {
                    for j in (i + 1)..n {
                        for sgn in [1.0, -1.0] {
                            let cand = rotate_factor(&cur, factor, i, j, sgn * step);
                            let (cval, _) = smoothed_decay(q, &cand, &o_s, tau0)?;
                            if cval > val + 1e-15 {
                                cur = cand;
                                val = cval;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if !improved {
                step *= 0.4;
                if step < 1e-9 {
                    break;
                }
            }
        }
        let (confirmed, _) = smoothed_decay(q, &cur, &o_s, tau_confirm)?;
        if confirmed > best_smoothed {
            best_smoothed = confirmed;
            best_smoothed_triple = cur;
        }
    }

    // Stage 3: if anything separates (or nearly separates after smoothing),
    // snap the candidate triple onto the alignment and certify.
    let mut candidate: Option<(BasisTriple, f64, Vec<f64>)> = None;
    if best_sep > cfg.degeneracy_margin {
        let (idx, sep, x) = &evals[best_idx];
        candidate = Some((triples[*idx].clone(), *sep, x.clone()));
    } else if best_smoothed > cfg.suspicion_floor {
        // The smoothed separator tells which coefficients block exact
        // separation; drive them to zero.
        let (_, x) = smoothed_decay(q, &best_smoothed_triple, &o_s, tau_confirm)?;
        let xg = gauge_normalize(dims, &x);
        let xq: f64 = xg.iter().zip(&o_s).map(|(a, b)| a * b).sum();
        let table = DerivativeTable::build(q, &best_smoothed_triple)?;
        let drop_set: Vec<MultiindexTriple> = table
            .entries
            .iter()
            .filter(|(t, _)| {
                let xp: f64 = xg.iter().zip(t.as_point()).map(|(a, b)| a * b).sum();
                xp >= xq - 1e-9
            })
            .map(|(t, _)| t.clone())
            .collect();
        if !drop_set.is_empty() {
            let (snapped, resid) = snap_alignment(q, &best_smoothed_triple, &drop_set, 200);
            if resid < (cfg.eps_coef * q.norm()).powi(2) {
                let sample = n0_points(q, &snapped, cfg.eps_coef)?;
                let (sep, x) = separation_margin(dims, &sample.points, &o_s, None)?;
                if sep > cfg.degeneracy_margin {
                    candidate = Some((snapped, sep, x));
                }
            }
        }
    }

    if let Some((bases, _sep, x)) = candidate {
        // Certify in exact arithmetic against the thresholded diagram, then
        // validate the decay.
        let sample = n0_points(q, &bases, cfg.eps_coef)?;
        match hull_membership(dims, &sample.points, &o_s)? {
            HullDecision::Outside { functional, .. } => {
                let witness = Witness::from_functional(&bases, &functional);
                let decay = witness_check(q, &witness, &grid, cfg.slope_floor)?;
                if decay.accepted {
                    return Ok(Verdict {
                        status: VerdictStatus::Degenerate,
                        certificate: Vec::new(),
                        witness: Some((witness, decay)),
                        least_decaying: None,
                        stats: SearchStats {
                            triples_examined: triples.len(),
                            boundary_hits,
                            worst_depth,
                            best_separation: best_sep.max(best_smoothed),
                            best_smoothed_decay: best_smoothed,
                            budget_exhausted: false,
                        },
                    });
                }
                // Separation without decay: fall through as inconclusive.
                let _ = x;
            }
            HullDecision::InHull { .. } => {}
        }
        return Ok(Verdict {
            status: VerdictStatus::Inconclusive,
            certificate: Vec::new(),
            witness: None,
            least_decaying: None,
            stats: SearchStats {
                triples_examined: triples.len(),
                boundary_hits,
                worst_depth,
                best_separation: best_sep.max(best_smoothed),
                best_smoothed_decay: best_smoothed,
                budget_exhausted: true,
            },
        });
    }

    if best_smoothed > cfg.suspicion_floor {
        // Smoothed search saw a decaying trend it could not certify.
        return Ok(Verdict {
            status: VerdictStatus::Inconclusive,
            certificate: Vec::new(),
            witness: None,
            least_decaying: None,
            stats: SearchStats {
                triples_examined: triples.len(),
                boundary_hits,
                worst_depth,
                best_separation: best_sep,
                best_smoothed_decay: best_smoothed,
                budget_exhausted: true,
            },
        });
    }

    // Nondegenerate: certificate from the worst (shallowest) triples.
    let mut certificate = Vec::new();
    let mut cert_indices = vec![worst_idx];
    if worst_idx != 0 {
        cert_indices.push(0); // include the standard triple's ensemble
    }
    for idx in cert_indices {
        let bases = &triples[idx];
        let sample = n0_points(q, bases, cfg.eps_coef)?;
        if let HullDecision::InHull {
            weights, depth, ..
        } = hull_membership(dims, &sample.points, &o_s)?
        {
            certificate.push(Ensemble {
                bases: bases.clone(),
                points: sample.points,
                weights,
                coefficient_margins: sample.margins,
                depth,
            });
        }
    }

    // Least-decaying admissible direction for the corroboration harness.
    let least = least_decaying_witness(q, &triples[worst_idx], &o_s, cfg.trace_target)?;

    Ok(Verdict {
        status: VerdictStatus::Nondegenerate,
        certificate,
        witness: None,
        least_decaying: Some(least),
        stats: SearchStats {
            triples_examined: triples.len(),
            boundary_hits,
            worst_depth,
            best_separation: best_sep,
            best_smoothed_decay: best_smoothed,
            budget_exhausted: false,
        },
    })
}

/// The admissible direction (tr D_1 pinned to `trace_target`) minimizing the
/// growth of the diagram support: flat for nondegenerate tensors.
pub fn least_decaying_witness(
    q: &TrilinearForm,
    bases: &BasisTriple,
    o_s: &[f64],
    trace_target: f64,
) -> Result<Witness> {
    let dims = q.dims();
    let sample = n0_points(q, bases, 1e-9)?;
    let s = scaling_exponent(dims.0, dims.1, dims.2);
    let s_f = *s.numer() as f64 / *s.denom() as f64;
    // After gauge normalization x.o_s = (s/d1) tr D_1, so pinning x.o_s pins
    // the trace.
    let pin = s_f / dims.0 as f64 * trace_target;
    let (_, x) = separation_margin(dims, &sample.points, o_s, Some(pin))?;
    let xg = gauge_normalize(dims, &x);
    Ok(Witness::from_functional(bases, &xg))
}

/// Stability margin of a nondegenerate tensor under perturbations of the
/// given radius: the sampled infimum of 𝒬' / det-power over random general
/// triples, minimized over sampled perturbations, plus the largest radius on
/// a grid that keeps the margin positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub radius: f64,
    pub margin: f64,
    pub largest_safe_radius: f64,
}

pub fn stability_margin(
    q: &TrilinearForm,
    status: &VerdictStatus,
    radius: f64,
    seed: u64,
    n_perturbations: usize,
    n_triples: usize,
) -> Result<StabilityReport> {
    if *status != VerdictStatus::Nondegenerate {
        return Err(Error::NotNondegenerate);
    }
    let (d1, k, d) = q.dims();
    let s = scaling_exponent(d1, k, d);
    let s_f = *s.numer() as f64 / *s.denom() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let margin_at = |qp: &TrilinearForm, rng: &mut ChaCha8Rng| -> Result<f64> {
        let mut min_ratio = f64::INFINITY;
        for _ in 0..n_triples {
            let bases = random_general_triple(d1, k, d, rng);
            let val = script_q(qp, &bases)?;
            let denom = bases.det_product_power(s_f);
            min_ratio = min_ratio.min(val / denom);
        }
        Ok(min_ratio)
    };

    let mut margin = f64::INFINITY;
    let steps = 5usize;
    let mut largest_safe = 0.0;
    for step in 0..=steps {
        let r = radius * step as f64 / steps as f64;
        let mut level_margin = f64::INFINITY;
        if step == 0 {
            level_margin = margin_at(q, &mut rng)?;
        } else {
            for _ in 0..n_perturbations.div_ceil(steps) {
                let mut g: Vec<f64> = (0..d1 * k * d)
                    .map(|_| crate::multilinear::gaussian(&mut rng))
                    .collect();
                let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                for x in &mut g {
                    *x *= r / gn;
                }
                let delta = TrilinearForm::new(d1, k, d, g)?;
                let qp = q.add(&delta)?;
                level_margin = level_margin.min(margin_at(&qp, &mut rng)?);
            }
        }
        if level_margin > 1e-9 {
            largest_safe = r;
        }
        if step as f64 / steps as f64 <= 1.0 {
            margin = margin.min(level_margin);
        }
    }
    Ok(StabilityReport {
        radius,
        margin,
        largest_safe_radius: largest_safe,
    })
}

/// Random general (non-orthonormal) triple with entries from a unit
/// Gaussian, retried until well-conditioned.
pub fn random_general_triple(
    d1: usize,
    k: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> BasisTriple {
    loop {
        let mk = |n: usize, rng: &mut ChaCha8Rng| {
            VectorList::new(
                n,
                (0..n)
                    .map(|_| DVector::from_fn(n, |_, _| crate::multilinear::gaussian(rng)))
                    .collect(),
            )
            .unwrap()
        };
        let (u, v, w) = (mk(d1, rng), mk(k, rng), mk(d, rng));
        if let Ok(t) = BasisTriple::new(u, v, w) {
            if t.dets.iter().all(|&x| x > 1e-3) {
                return t;
            }
        }
    }
}

/// Exact hull membership over rationals for integer lattice points and a
/// rational query; used by tests as an independent oracle path.
pub fn hull_membership_exact(
    points: &[MultiindexTriple],
    query: &[num::Rational64],
) -> Result<bool> {
    let dtot = query.len();
    let np = points.len();
    let big = |r: &num::Rational64| {
        BigRational::new((*r.numer()).into(), (*r.denom()).into())
    };
    let mut a: Vec<Vec<BigRational>> = Vec::new();
    let mut b: Vec<BigRational> = Vec::new();
    a.push(vec![num::One::one(); np]);
    b.push(num::One::one());
    for j in 0..dtot {
        let mut row = Vec::with_capacity(np);
        for p in points {
            row.push(BigRational::from_float(p.as_point()[j]).expect("lattice point"));
        }
        a.push(row);
        b.push(big(&query[j]));
    }
    let lp = StandardLp {
        a,
        b,
        c: vec![<BigRational as num::Zero>::zero(); np],
    };
    Ok(matches!(solve(&lp), LpResult::Optimal { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn hormander_tensor() -> TrilinearForm {
        TrilinearForm::new(1, 1, 2, vec![1.0, 0.0]).unwrap()
    }

    fn rotational_tensor() -> TrilinearForm {
        let mut q = TrilinearForm::zeros(2, 1, 2);
        q.set_entry(0, 0, 0, 1.0);
        q.set_entry(1, 0, 1, 1.0);
        q
    }

    fn mt(alpha: &[u16], beta: &[u16], gamma: &[u16]) -> MultiindexTriple {
        MultiindexTriple::new(alpha.to_vec(), beta.to_vec(), gamma.to_vec()).unwrap()
    }

    #[test]
    fn scaling_point_examples() {
        let r = num::Rational64::new(1, 2);
        let p = scaling_point_f64(1, 1, 1, r);
        assert_eq!(p, vec![0.5, 0.5, 0.5]);

        let r = num::Rational64::new(2, 3);
        let p = scaling_point_f64(1, 1, 2, r);
        assert_relative_eq!(p[0], 2.0 / 3.0);
        assert_relative_eq!(p[1], 2.0 / 3.0);
        assert_relative_eq!(p[2], 1.0 / 3.0);
        assert_relative_eq!(p[3], 1.0 / 3.0);

        let p = scaling_point_f64(3, 2, 2, num::Rational64::from_integer(0));
        assert!(p.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scaling_exponent_main_case() {
        // d1=1, k=1, d=2: s = dk/n = 2/3.
        assert_eq!(scaling_exponent(1, 1, 2), num::Rational64::new(2, 3));
        // d1=2, k=1, d=2: s = 2/3 as well.
        assert_eq!(scaling_exponent(2, 1, 2), num::Rational64::new(2, 3));
    }

    #[test]
    fn n0_zero_tensor_is_origin_only() {
        let q = TrilinearForm::zeros(1, 1, 2);
        let bases = BasisTriple::standard(1, 1, 2);
        let s = n0_points(&q, &bases, 1e-9).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0], MultiindexTriple::origin(1, 1, 2));
    }

    #[test]
    fn n0_degenerate_tensor_aligned_and_rotated() {
        let q = hormander_tensor();
        let aligned = BasisTriple::standard(1, 1, 2);
        let s = n0_points(&q, &aligned, 1e-9).unwrap();
        assert_eq!(s.points.len(), 2);
        assert!(s.points.contains(&mt(&[1], &[1], &[1, 0])));

        // w-basis rotated 45 degrees: both coefficients appear.
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let w = VectorList::new(
            2,
            vec![
                DVector::from_row_slice(&[c, c]),
                DVector::from_row_slice(&[-c, c]),
            ],
        )
        .unwrap();
        let rotated = BasisTriple::new(
            VectorList::standard_basis(1),
            VectorList::standard_basis(1),
            w,
        )
        .unwrap();
        let s = n0_points(&q, &rotated, 1e-9).unwrap();
        assert_eq!(s.points.len(), 3);
        assert!(s.points.contains(&mt(&[1], &[1], &[1, 0])));
        assert!(s.points.contains(&mt(&[1], &[1], &[0, 1])));
        for (p, m) in s.points.iter().zip(&s.margins) {
            if p.order() == 1 {
                assert_relative_eq!(*m, c, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn n0_rejects_nonorthonormal_bases() {
        let q = hormander_tensor();
        let bases = BasisTriple::new(
            VectorList::new(1, vec![DVector::from_row_slice(&[2.0])]).unwrap(),
            VectorList::standard_basis(1),
            VectorList::standard_basis(2),
        )
        .unwrap();
        assert!(matches!(
            n0_points(&q, &bases, 1e-9),
            Err(Error::NonOrthonormalBases(_))
        ));
    }

    #[test]
    fn hull_membership_in_hull_example() {
        // points {origin, (1,1,1,0), (1,1,0,1)}, query o_{2/3}.
        let points = vec![
            MultiindexTriple::origin(1, 1, 2),
            mt(&[1], &[1], &[1, 0]),
            mt(&[1], &[1], &[0, 1]),
        ];
        let q = scaling_point_f64(1, 1, 2, num::Rational64::new(2, 3));
        match hull_membership((1, 1, 2), &points, &q).unwrap() {
            HullDecision::InHull {
                weights, residual, ..
            } => {
                assert!(residual <= 1e-9);
                assert_relative_eq!(weights[0], 1.0 / 3.0, max_relative = 1e-9);
                assert_relative_eq!(weights[1], 1.0 / 3.0, max_relative = 1e-9);
                assert_relative_eq!(weights[2], 1.0 / 3.0, max_relative = 1e-9);
            }
            other => panic!("expected InHull, got {other:?}"),
        }
    }

    #[test]
    fn hull_membership_outside_example() {
        // points {origin, (1,1,1,0)}, query o_{2/3}: separated by the
        // gauge-normalized functional (1; 0; -1, 1).
        let points = vec![MultiindexTriple::origin(1, 1, 2), mt(&[1], &[1], &[1, 0])];
        let q = scaling_point_f64(1, 1, 2, num::Rational64::new(2, 3));
        match hull_membership((1, 1, 2), &points, &q).unwrap() {
            HullDecision::Outside {
                functional,
                separation,
            } => {
                assert_relative_eq!(separation, 2.0 / 3.0, max_relative = 1e-8);
                assert_relative_eq!(functional[0], 1.0, max_relative = 1e-8);
                assert!(functional[1].abs() < 1e-9);
                assert_relative_eq!(functional[2], -1.0, max_relative = 1e-8);
                assert_relative_eq!(functional[3], 1.0, max_relative = 1e-8);
            }
            other => panic!("expected Outside, got {other:?}"),
        }
    }

    #[test]
    fn hull_membership_origin_query() {
        let points = vec![MultiindexTriple::origin(1, 1, 2), mt(&[1], &[1], &[1, 0])];
        let q = vec![0.0; 4];
        match hull_membership((1, 1, 2), &points, &q).unwrap() {
            HullDecision::InHull {
                weights, residual, ..
            } => {
                assert!(residual <= 1e-12);
                assert_relative_eq!(weights[0], 1.0, max_relative = 1e-9);
            }
            other => panic!("expected InHull, got {other:?}"),
        }
    }

    #[test]
    fn hull_decisions_are_exclusive_and_verified() {
        // Re-substitution check on both branches for a handful of queries.
        let points = vec![
            MultiindexTriple::origin(1, 1, 2),
            mt(&[1], &[1], &[1, 0]),
            mt(&[1], &[1], &[0, 1]),
        ];
        // lam * o_s needs total point weight lam * 2/3, so it leaves the
        // hull exactly when lam > 3/2.
        for lam in [0.0, 0.3, 0.9, 1.2, 1.6, 2.5] {
            let q: Vec<f64> = scaling_point_f64(1, 1, 2, num::Rational64::new(2, 3))
                .iter()
                .map(|x| x * lam)
                .collect();
            match hull_membership((1, 1, 2), &points, &q).unwrap() {
                HullDecision::InHull {
                    weights, residual, ..
                } => {
                    assert!(residual <= 1e-9);
                    assert!(lam <= 1.5 + 1e-9, "lam = {lam} should be outside");
                    assert!(weights.iter().all(|&w| w >= -1e-12));
                }
                HullDecision::Outside {
                    functional,
                    separation,
                } => {
                    assert!(lam > 1.5, "lam = {lam} should be inside");
                    let xq: f64 = functional.iter().zip(&q).map(|(a, b)| a * b).sum();
                    let maxp = points
                        .iter()
                        .map(|p| {
                            functional
                                .iter()
                                .zip(p.as_point())
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert!(xq > maxp + 0.9 * separation);
                }
            }
        }
    }

    #[test]
    fn witness_check_degenerate_example() {
        // Witness D1 = [1], D2 = [0], D3 = diag(-1, 1) in the kernel basis:
        // ratio(tau) = sqrt(2) e^{-2 tau/3}.
        let q = hormander_tensor();
        let bases = BasisTriple::standard(1, 1, 2);
        let witness = Witness::from_functional(&bases, &[1.0, 0.0, -1.0, 1.0]);
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let report = witness_check(&q, &witness, &grid, 0.05).unwrap();
        assert!(report.accepted);
        assert_relative_eq!(report.slope, -2.0 / 3.0, epsilon = 1e-6);
        assert!(report.det_drift < 1e-9);
        assert_relative_eq!(report.ratios[0], 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn witness_check_rejects_nondegenerate_direction() {
        let q = rotational_tensor();
        let bases = BasisTriple::standard(2, 1, 2);
        // Admissible but non-decaying: D1 = I/2, D3 = 0.
        let witness = Witness::from_functional(&bases, &[0.5, 0.5, 0.0, 0.0, 0.0]);
        let grid: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let report = witness_check(&q, &witness, &grid, 0.05).unwrap();
        assert!(!report.accepted);
        // Ratio bounded below along the grid.
        assert!(report.ratios.iter().all(|&r| r > 0.5));
    }

    #[test]
    fn witness_check_zero_tensor_slope() {
        // Q = 0: numerator is identically 1, slope = -(s/d1) tr D1.
        let q = TrilinearForm::zeros(1, 1, 2);
        let bases = BasisTriple::standard(1, 1, 2);
        let witness = Witness::from_functional(&bases, &[1.0, 0.0, -0.5, 0.5]);
        let grid: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let report = witness_check(&q, &witness, &grid, 0.05).unwrap();
        // s = 2/3, d1 = 1, tr D1 = 1.
        assert_relative_eq!(report.slope, -2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn witness_trace_constraints_enforced() {
        let q = hormander_tensor();
        let bases = BasisTriple::standard(1, 1, 2);
        let bad = Witness::from_functional(&bases, &[1.0, 0.0, 0.5, 1.0]);
        assert!(matches!(
            witness_check(&q, &bad, &[0.0, 1.0], 0.05),
            Err(Error::TraceViolation(_))
        ));
        let no_growth = Witness::from_functional(&bases, &[-1.0, 0.0, -1.0, 1.0]);
        assert!(matches!(
            witness_check(&q, &no_growth, &[0.0, 1.0], 0.05),
            Err(Error::TraceViolation(_))
        ));
    }

    #[test]
    fn verdict_degenerate_worked_example() {
        let q = hormander_tensor();
        let v = verdict(&q, &VerdictConfig::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Degenerate);
        let (witness, decay) = v.witness.expect("degenerate verdict carries a witness");
        assert!(decay.accepted);
        assert_relative_eq!(decay.slope, -2.0 / 3.0, epsilon = 0.02);
        // Witness matches D1 = [1], D2 = [0], D3 = diag(-1, 1) up to
        // orthogonal equivalence: traces are invariants.
        let (t1, t2, t3) = witness.traces();
        assert_relative_eq!(t1, 1.0, epsilon = 1e-6);
        assert!(t2.abs() < 1e-9);
        assert!(t3.abs() < 1e-9);
        let eigs = {
            let mut e = witness.d3_eigs.clone();
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            e
        };
        assert_relative_eq!(eigs[0], -1.0, epsilon = 1e-6);
        assert_relative_eq!(eigs[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn verdict_nondegenerate_rotational_example() {
        let q = rotational_tensor();
        let v = verdict(&q, &VerdictConfig::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Nondegenerate);
        assert!(!v.certificate.is_empty());
        for ens in &v.certificate {
            let total: f64 = ens.weights.iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-9);
            let o_s = scaling_point_f64(2, 1, 2, scaling_exponent(2, 1, 2));
            let mut recon = vec![0.0; o_s.len()];
            for (p, wgt) in ens.points.iter().zip(&ens.weights) {
                for (r, c) in recon.iter_mut().zip(p.as_point()) {
                    *r += wgt * c;
                }
            }
            for (a, b) in recon.iter().zip(&o_s) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
        let least = v.least_decaying.expect("nondegenerate verdict reports a direction");
        let (t1, _, _) = least.traces();
        assert!(t1 > 0.0);
    }

    #[test]
    fn verdict_zero_tensor_degenerate() {
        let q = TrilinearForm::zeros(1, 1, 2);
        let v = verdict(&q, &VerdictConfig::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Degenerate);
    }

    #[test]
    fn verdict_degenerate_after_hidden_rotation() {
        // Conjugating the slots by rotations hides the alignment from the
        // standard triple; the smoothed search has to rediscover it.
        let base = hormander_tensor();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ow = random_orthogonal(2, &mut rng);
        let mut q = TrilinearForm::zeros(1, 1, 2);
        for i in 0..1 {
            for ip in 0..1 {
                for a in 0..2 {
                    let mut acc = 0.0;
                    for b in 0..2 {
                        acc += base.entry(i, ip, b) * ow[(b, a)];
                    }
                    q.set_entry(i, ip, a, acc);
                }
            }
        }
        let v = verdict(&q, &VerdictConfig::default()).unwrap();
        assert_eq!(v.status, VerdictStatus::Degenerate);
        let (_, decay) = v.witness.expect("witness");
        assert!(decay.accepted);
        assert_relative_eq!(decay.slope, -2.0 / 3.0, epsilon = 0.02);
    }

    #[test]
    fn stability_margin_requires_nondegenerate() {
        let q = hormander_tensor();
        assert!(matches!(
            stability_margin(&q, &VerdictStatus::Degenerate, 0.1, 0, 4, 16),
            Err(Error::NotNondegenerate)
        ));
    }

    #[test]
    fn stability_margin_rotational() {
        let q = rotational_tensor();
        let r0 = stability_margin(&q, &VerdictStatus::Nondegenerate, 0.0, 7, 4, 64).unwrap();
        assert!(r0.margin > 0.0);
        let r1 = stability_margin(&q, &VerdictStatus::Nondegenerate, 0.01, 7, 4, 64).unwrap();
        assert!(r1.margin > 0.0);
        assert!((r1.margin - r0.margin).abs() <= 0.1 * r0.margin.max(1.0));
        // Radius reaching the zero tensor can collapse the margin.
        let r2 = stability_margin(&q, &VerdictStatus::Nondegenerate, 2.0 * q.norm(), 7, 4, 32)
            .unwrap();
        assert!(r2.largest_safe_radius <= 2.0 * q.norm());
    }

    #[test]
    fn gauge_normalization_zeroes_block_sums() {
        let x = vec![0.3, -0.2, 0.7, 1.1, -0.4];
        let g = gauge_normalize((2, 1, 2), &x);
        let vsum: f64 = g[2..3].iter().sum();
        let wsum: f64 = g[3..].iter().sum();
        assert!(vsum.abs() < 1e-12);
        assert!(wsum.abs() < 1e-12);
        // Dot products with graded points are unchanged.
        let p = mt(&[1, 0], &[1], &[0, 1]);
        let before: f64 = x.iter().zip(p.as_point()).map(|(a, b)| a * b).sum();
        let after: f64 = g.iter().zip(p.as_point()).map(|(a, b)| a * b).sum();
        assert_relative_eq!(before, after, epsilon = 1e-12);
    }

    #[test]
    fn n0_invariant_under_basis_permutation() {
        // Permuting basis vectors relabels multiindices; the multiset of
        // coefficient margins is unchanged.
        let q = hormander_tensor();
        let std_triple = BasisTriple::standard(1, 1, 2);
        let swapped = BasisTriple::new(
            VectorList::standard_basis(1),
            VectorList::standard_basis(1),
            VectorList::new(
                2,
                vec![
                    DVector::from_row_slice(&[0.0, 1.0]),
                    DVector::from_row_slice(&[1.0, 0.0]),
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let a = n0_points(&q, &std_triple, 1e-9).unwrap();
        let b = n0_points(&q, &swapped, 1e-9).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        let sorted = |m: &[f64]| {
            let mut v = m.to_vec();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v
        };
        assert_eq!(sorted(&a.margins), sorted(&b.margins));
    }

    #[test]
    fn exact_hull_oracle_agrees() {
        let points = vec![
            MultiindexTriple::origin(1, 1, 2),
            mt(&[1], &[1], &[1, 0]),
            mt(&[1], &[1], &[0, 1]),
        ];
        let s = num::Rational64::new(2, 3);
        let q = scaling_point(1, 1, 2, s);
        assert!(hull_membership_exact(&points, &q).unwrap());
        let fewer = &points[..2];
        assert!(!hull_membership_exact(fewer, &q).unwrap());
    }
}
