//! Empirical corroboration harnesses.
//!
//! Knapp side: from a degeneracy witness (D_1, D_2, D_3) on the bilinear
//! model x_1 + Θ(t, x_0), build for each τ the ellipsoid F = B_{ω(τ)} with
//! ω(τ) spanned by (e^{τ D_3} w_i, 0) and (0, e^{-τ D_2} v_i), restrict the
//! parameter ellipsoid B_{e^{τ D_1} u} to the sublevel-filtered subset B'
//! where the slice volume |L_t B_ω| is comparable to its supremum, and
//! estimate the incidence ratio
//!
//! ```text
//! ∫ χ_F(x) χ_G(γ̃_t(x)) dx dt / (|F|^{1/q'} |G|^{1/p})
//! ```
//!
//! whose log grows linearly in τ for degenerate maps (slope ε/p with ε the
//! witness decay rate) and stays flat for nondegenerate ones.
//!
//! Testing side: quadrature of the testing integral
//! ∫ |η|^{p'} ||d_x π||_ω^{-(p'-1)} dt for unit-determinant bases ω, plus a
//! sup search over sampled cutoff points and stretch families; degenerate
//! maps reveal themselves by a monotone growth trend along the
//! witness-aligned stretches.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{log_linear_fit, Witness};
use crate::error::{Error, Result};
use crate::multilinear::VectorList;
use crate::qcalc::TrilinearForm;
use crate::radonmap::{rational_f64, BasePoint, ExponentSet, PolynomialMap};

/// Volume of the k-dimensional Euclidean unit ball.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * std::f64::consts::PI / k as f64,
    }
}

/// Volume of L B_ω via the Gram determinant |B_k| sqrt(det (LΩ)(LΩ)^T).
pub fn ellipsoid_image_volume(l: &DMatrix<f64>, omega: &VectorList) -> f64 {
    let k = l.nrows();
    let om = omega.as_columns(); // n x n
    let a = l * om;
    let gram = &a * a.transpose();
    let det = gram.determinant().max(0.0);
    unit_ball_volume(k) * det.sqrt()
}

/// The same volume through the tuple-sum identity
/// |B_k| sqrt((1/k!) Σ |det(L ω_{i_1}, .., L ω_{i_k})|^2); quadratic in the
/// number of tuples, used as the cross-check route.
pub fn ellipsoid_image_volume_tuple_sum(l: &DMatrix<f64>, omega: &VectorList) -> f64 {
    let k = l.nrows();
    let n = omega.len();
    let images: Vec<DVector<f64>> = omega.vectors().iter().map(|w| l * w).collect();
    let mut tuples = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::new();
        for t in &tuples {
            for i in 0..n {
                let mut t2: Vec<usize> = t.clone();
                t2.push(i);
                next.push(t2);
            }
        }
        tuples = next;
    }
    let mut acc = 0.0;
    for t in &tuples {
        let m = DMatrix::from_fn(k, k, |r, c| images[t[c]][r]);
        let d = m.determinant();
        acc += d * d;
    }
    let kfact: f64 = (2..=k).map(|i| i as f64).product::<f64>().max(1.0);
    unit_ball_volume(k) * (acc / kfact).sqrt()
}

fn ball_point(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| crate::multilinear::gaussian(rng));
    let norm = g.norm().max(1e-300);
    let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    g * (r / norm)
}

/// Sublevel filter for a scalar function on an ellipsoid: the constant c
/// such that at most `epsilon` of the sampled mass has |P| < c sup|P|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SublevelFilter {
    pub c: f64,
    pub sup: f64,
    pub retained_fraction: f64,
}

pub fn sublevel_filter(
    p: &dyn Fn(&DVector<f64>) -> f64,
    ellipsoid: &DMatrix<f64>,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> SublevelFilter {
    let dim = ellipsoid.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..n_samples)
        .map(|_| {
            let t = ellipsoid * ball_point(dim, &mut rng);
            p(&t).abs()
        })
        .collect();
    let sup = values.iter().cloned().fold(0.0_f64, f64::max);
    if sup == 0.0 {
        // Identically zero: by convention keep everything.
        return SublevelFilter {
            c: 0.0,
            sup: 0.0,
            retained_fraction: 1.0,
        };
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((epsilon * n_samples as f64) as usize).min(n_samples - 1);
    let c = values[idx] / sup;
    let retained = values.iter().filter(|&&v| v >= c * sup).count() as f64 / n_samples as f64;
    SublevelFilter {
        c,
        sup,
        retained_fraction: retained,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            n_samples: 4000,
            seed: 1,
        }
    }
}

/// One Knapp example at scale τ (δ = e^{-τ}).
#[derive(Debug, Clone)]
pub struct KnappFamily {
    pub tau: f64,
    pub delta: f64,
    /// Columns span F = B_ω in model coordinates (x_0, x_1).
    pub omega: DMatrix<f64>,
    /// Columns span the parameter ellipsoid B in R^{d1}.
    pub param: DMatrix<f64>,
    pub f_volume: f64,
    pub param_volume: f64,
    /// Sublevel filter on the slice volume over the parameter ellipsoid.
    pub filter: SublevelFilter,
    /// |det| of the three scaled blocks (u, v, w).
    pub dets: [f64; 3],
}

/// Jacobian of the model in x: L_t = [Θ(t, .) | I_k], a k x n matrix.
pub fn slice_matrix(theta: &TrilinearForm, t: &DVector<f64>) -> DMatrix<f64> {
    let (_, k, d) = theta.dims();
    let mut l = DMatrix::zeros(k, d + k);
    for ip in 0..k {
        for ipp in 0..d {
            let mut acc = 0.0;
            for i in 0..t.len() {
                acc += theta.entry(i, ip, ipp) * t[i];
            }
            l[(ip, ipp)] = acc;
        }
        l[(ip, d + ip)] = 1.0;
    }
    l
}

/// Builds the Knapp family for a witness at scale τ. The v and w blocks keep
/// unit determinant for every τ (traceless D_2, D_3); the parameter block
/// expands like e^{τ tr D_1}.
pub fn knapp_family(
    theta: &TrilinearForm,
    witness: &Witness,
    tau: f64,
    filter_cfg: &FilterConfig,
) -> Result<KnappFamily> {
    witness.check_traces()?;
    let (d1, k, d) = theta.dims();
    if witness.bases.u.dim() != d1 || witness.bases.v.dim() != k || witness.bases.w.dim() != d {
        return Err(Error::DimensionMismatch(
            "witness dimensions do not match the model tensor".into(),
        ));
    }
    let n = d + k;
    // ω columns: (e^{τ D_3} w_i, 0) then (0, e^{-τ D_2} v_i).
    let mut omega = DMatrix::zeros(n, n);
    for (i, (w, &lam)) in witness
        .bases
        .w
        .vectors()
        .iter()
        .zip(&witness.d3_eigs)
        .enumerate()
    {
        let col = w * f64::exp(tau * lam);
        omega.view_mut((0, i), (d, 1)).copy_from(&col);
    }
    for (i, (v, &lam)) in witness
        .bases
        .v
        .vectors()
        .iter()
        .zip(&witness.d2_eigs)
        .enumerate()
    {
        let col = v * f64::exp(-tau * lam);
        omega.view_mut((d, d + i), (k, 1)).copy_from(&col);
    }
    // Parameter ellipsoid columns e^{τ D_1} u_i.
    let mut param = DMatrix::zeros(d1, d1);
    for (i, (u, &lam)) in witness
        .bases
        .u
        .vectors()
        .iter()
        .zip(&witness.d1_eigs)
        .enumerate()
    {
        let col = u * f64::exp(tau * lam);
        param.view_mut((0, i), (d1, 1)).copy_from(&col);
    }

    let det_w: f64 = witness
        .d3_eigs
        .iter()
        .map(|l| f64::exp(tau * l))
        .product();
    let det_v: f64 = witness
        .d2_eigs
        .iter()
        .map(|l| f64::exp(-tau * l))
        .product();
    let det_u: f64 = witness
        .d1_eigs
        .iter()
        .map(|l| f64::exp(tau * l))
        .product();

    // Traceless D_2 and D_3 keep the v and w blocks at unit determinant for
    // every tau; checked at every build.
    if (det_v.abs() - 1.0).abs() > 1e-7 || (det_w.abs() - 1.0).abs() > 1e-7 {
        return Err(Error::TraceViolation(format!(
            "scaled block determinants drifted: |det v| = {det_v:.12}, |det w| = {det_w:.12}"
        )));
    }
    let f_volume = unit_ball_volume(n) * omega.determinant().abs();
    let param_volume = unit_ball_volume(d1) * param.determinant().abs();
    let omega_list = VectorList::from_rows(&omega.transpose());
    let slice_vol = |t: &DVector<f64>| {
        let l = slice_matrix(theta, t);
        ellipsoid_image_volume(&l, &omega_list)
    };
    let filter = sublevel_filter(
        &slice_vol,
        &param,
        filter_cfg.epsilon,
        filter_cfg.n_samples,
        filter_cfg.seed,
    );
    Ok(KnappFamily {
        tau,
        delta: f64::exp(-tau),
        omega,
        param,
        f_volume,
        param_volume,
        filter,
        dets: [det_u.abs(), det_v.abs(), det_w.abs()],
    })
}

impl KnappFamily {
    /// Membership of t in the filtered parameter set B'.
    pub fn in_filtered_params(&self, theta: &TrilinearForm, t: &DVector<f64>) -> bool {
        if self.filter.sup == 0.0 {
            return true;
        }
        let omega_list = VectorList::from_rows(&self.omega.transpose());
        let v = ellipsoid_image_volume(&slice_matrix(theta, t), &omega_list);
        v >= self.filter.c * self.filter.sup
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMethod {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncidenceEstimate {
    pub ratio: f64,
    pub stderr_rel: f64,
    pub numerator: f64,
    pub f_volume: f64,
    pub g_volume: f64,
    pub hit_fraction: f64,
}

/// Estimates the incidence ratio for one Knapp family. Membership in G uses
/// the exact slice test: y in L_t B_ω iff y^T (A A^T)^{-1} y <= 1 for
/// A = L_t Ω.
pub fn incidence_ratio(
    theta: &TrilinearForm,
    family: &KnappFamily,
    exps: &ExponentSet,
    method: SampleMethod,
    n_samples: usize,
    seed: u64,
) -> Result<IncidenceEstimate> {
    let (d1, k, d) = theta.dims();
    let n = d + k;
    let omega_list = VectorList::from_rows(&family.omega.transpose());

    // Indicator of gamma_t(x) in G for x described by ball coordinates xi.
    let hit = |xi: &DVector<f64>, tc: &DVector<f64>| -> (bool, f64) {
        let t = &family.param * tc;
        let l = slice_matrix(theta, &t);
        let vol = ellipsoid_image_volume(&l, &omega_list);
        let in_b_prime = if family.filter.sup == 0.0 {
            true
        } else {
            vol >= family.filter.c * family.filter.sup
        };
        if !in_b_prime {
            return (false, vol);
        }
        let x = &family.omega * xi;
        let y = &l * x;
        let a = &l * &family.omega;
        let gram = &a * a.transpose();
        match gram.clone().try_inverse() {
            Some(inv) => {
                let q = (y.transpose() * inv * &y)[(0, 0)];
                (q <= 1.0 + 1e-9, vol)
            }
            None => (y.norm() <= 1e-12, vol),
        }
    };

    let (hits, total, sum_vol_kept, se_hit) = match method {
        SampleMethod::MonteCarlo => {
            let chunk = 4096usize;
            let n_chunks = n_samples.div_ceil(chunk);
            let results: Vec<(usize, usize, f64)> = (0..n_chunks)
                .into_par_iter()
                .map(|ci| {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        seed ^ (ci as u64).wrapping_mul(0x9e3779b97f4a7c15),
                    );
                    let m = chunk.min(n_samples - ci * chunk);
                    let mut h = 0usize;
                    let mut svk = 0.0;
                    for _ in 0..m {
                        let xi = ball_point(n, &mut rng);
                        let tc = ball_point(d1, &mut rng);
                        let (is_hit, vol) = hit(&xi, &tc);
                        if is_hit {
                            h += 1;
                        }
                        if family.filter.sup == 0.0
                            || vol >= family.filter.c * family.filter.sup
                        {
                            svk += vol;
                        }
                    }
                    (h, m, svk)
                })
                .collect();
            let mut hits = 0usize;
            let mut total = 0usize;
            let mut sum_vol_kept = 0.0;
            for (h, m, svk) in results {
                hits += h;
                total += m;
                sum_vol_kept += svk;
            }
            let p = hits as f64 / total.max(1) as f64;
            let se = (p * (1.0 - p) / total.max(1) as f64).sqrt();
            (hits, total, sum_vol_kept, se)
        }
        SampleMethod::Grid => {
            // Tensor grids over the ball coordinates via cube rejection.
            let per_axis_x = (n_samples as f64).powf(1.0 / (n + d1) as f64).ceil() as usize;
            let per_axis_x = per_axis_x.clamp(4, 24);
            let xs = ball_grid(n, per_axis_x);
            let ts = ball_grid(d1, per_axis_x);
            let mut hits = 0usize;
            let mut total = 0usize;
            let mut sum_vol_kept = 0.0;
            for tc in &ts {
                let t = &family.param * tc;
                let l = slice_matrix(theta, &t);
                let vol = ellipsoid_image_volume(&l, &omega_list);
                let kept = family.filter.sup == 0.0
                    || vol >= family.filter.c * family.filter.sup;
                if kept {
                    sum_vol_kept += vol * xs.len() as f64;
                }
                for xi in &xs {
                    let (is_hit, _) = hit(xi, tc);
                    if is_hit {
                        hits += 1;
                    }
                    total += 1;
                }
            }
            // Nominal uncertainty from the grid resolution.
            let se = 1.0 / per_axis_x as f64 / (total as f64).sqrt();
            (hits, total, sum_vol_kept, se)
        }
    };

    if total == 0 {
        return Err(Error::InsufficientSamples(1.0));
    }
    let hit_fraction = hits as f64 / total as f64;
    let numerator = family.f_volume * family.param_volume * hit_fraction;
    let g_volume = family.param_volume * sum_vol_kept / total as f64;
    let qp = rational_f64(exps.q_dual);
    let pb = rational_f64(exps.p);
    let denominator = family.f_volume.powf(1.0 / qp) * g_volume.powf(1.0 / pb);
    if denominator <= 0.0 {
        return Err(Error::InsufficientSamples(1.0));
    }
    let ratio = numerator / denominator;
    let stderr_rel = if hit_fraction > 0.0 {
        se_hit / hit_fraction
    } else {
        1.0
    };
    if stderr_rel > 0.2 {
        return Err(Error::InsufficientSamples(stderr_rel));
    }
    Ok(IncidenceEstimate {
        ratio,
        stderr_rel,
        numerator,
        f_volume: family.f_volume,
        g_volume,
        hit_fraction,
    })
}

fn ball_grid(dim: usize, per_axis: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let p = DVector::from_fn(dim, |i, _| {
            -1.0 + 2.0 * (idx[i] as f64 + 0.5) / per_axis as f64
        });
        if p.norm() <= 1.0 {
            out.push(p);
        }
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == dim {
                return out;
            }
        }
    }
}

/// Blowup regression over a τ grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioSeries {
    pub taus: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn knapp_sweep(
    theta: &TrilinearForm,
    witness: &Witness,
    taus: &[f64],
    exps: &ExponentSet,
    filter_cfg: &FilterConfig,
    method: SampleMethod,
    n_samples: usize,
    seed: u64,
) -> Result<RatioSeries> {
    if taus.len() < 5 {
        return Err(Error::InsufficientSamples(1.0));
    }
    let mut ratios = Vec::with_capacity(taus.len());
    let mut stderrs = Vec::with_capacity(taus.len());
    for (i, &tau) in taus.iter().enumerate() {
        let mut cfg = filter_cfg.clone();
        cfg.seed = filter_cfg.seed ^ (i as u64).wrapping_mul(0x517cc1b727220a95);
        let fam = knapp_family(theta, witness, tau, &cfg)?;
        let est = incidence_ratio(
            theta,
            &fam,
            exps,
            method,
            n_samples,
            seed ^ (i as u64).wrapping_mul(0x2545f4914f6cdd1d),
        )?;
        if est.ratio <= 0.0 {
            return Err(Error::InsufficientSamples(1.0));
        }
        ratios.push(est.ratio);
        stderrs.push(est.stderr_rel * est.ratio);
    }
    let (slope, _) = log_linear_fit(taus, &ratios);
    // OLS slope standard error from log-residuals.
    let lys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let nf = taus.len() as f64;
    let mx = taus.iter().sum::<f64>() / nf;
    let my = lys.iter().sum::<f64>() / nf;
    let sxx: f64 = taus.iter().map(|x| (x - mx).powi(2)).sum();
    let mut sse = 0.0;
    for (x, y) in taus.iter().zip(&lys) {
        let pred = my + slope * (x - mx);
        sse += (y - pred).powi(2);
    }
    let dof = (taus.len() as f64 - 2.0).max(1.0);
    let slope_stderr = (sse / dof / sxx.max(1e-300)).sqrt();
    Ok(RatioSeries {
        taus: taus.to_vec(),
        ratios,
        stderrs,
        slope,
        slope_stderr,
    })
}

// ---------------------------------------------------------------------------
// Testing integral.
// ---------------------------------------------------------------------------

/// Cutoff specification: box or smooth bump in t (and a box in x for the
/// sup search sampling).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaSpec {
    pub t_radius: f64,
    pub x_radius: f64,
    pub smooth: bool,
}

impl Default for EtaSpec {
    fn default() -> Self {
        Self {
            t_radius: 1.0,
            x_radius: 1.0,
            smooth: false,
        }
    }
}

impl EtaSpec {
    pub fn eta_t(&self, t: &DVector<f64>) -> f64 {
        let mut val = 1.0;
        for i in 0..t.len() {
            let u = t[i].abs() / self.t_radius;
            if u > 1.0 {
                return 0.0;
            }
            if self.smooth {
                val *= (std::f64::consts::FRAC_PI_2 * u).cos().powi(2);
            }
        }
        val
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// ||d_x π||_ω = sqrt(det (M Ω)(M Ω)^T) with M = D_x φ, by Cauchy-Binet
/// equal to the (1/k!)-normalized tuple sum of squared determinants.
pub fn dxpi_norm(map: &PolynomialMap, x: &DVector<f64>, t: &DVector<f64>, omega: &VectorList) -> f64 {
    let m = map.jacobian_x(x, t);
    let om = omega.as_columns();
    let a = &m * om;
    let gram = &a * a.transpose();
    gram.determinant().max(0.0).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestingValue {
    pub value: f64,
    pub capped: bool,
}

/// Quadrature of ∫ |η|^{p'} ||d_x π||_ω^{-(p'-1)} dt over the cutoff
/// support, tensorized Gauss-Legendre. The integrand is capped at 1e12 and
/// flagged, since degenerate configurations genuinely diverge.
pub fn testing_integral(
    map: &PolynomialMap,
    x: &DVector<f64>,
    omega: &VectorList,
    p_dual: f64,
    eta: &EtaSpec,
    order: usize,
) -> Result<TestingValue> {
    let det = omega.det_magnitude()?;
    if (det - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDeterminant(det));
    }
    let d1 = map.d1();
    let (nodes, weights) = gauss_legendre(order);
    let r = eta.t_radius;
    let mut idx = vec![0usize; d1];
    let mut total = 0.0;
    let mut capped = false;
    loop {
        let t = DVector::from_fn(d1, |i, _| r * nodes[idx[i]]);
        let mut wgt = 1.0;
        for i in 0..d1 {
            wgt *= r * weights[idx[i]];
        }
        let e = eta.eta_t(&t);
        if e > 0.0 {
            let norm = dxpi_norm(map, x, &t, omega);
            let mut integrand = e.powf(p_dual) * norm.powf(-(p_dual - 1.0));
            if !integrand.is_finite() || integrand > 1e12 {
                integrand = 1e12;
                capped = true;
            }
            total += wgt * integrand;
        }
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < order {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == d1 {
                return Ok(TestingValue {
                    value: total,
                    capped,
                });
            }
        }
    }
}

/// Unit-determinant stretch basis derived from a witness: kernel directions
/// scaled by e^{τ(λ_3i + ρ)}, row-space directions by e^{-τ ρ d / k}. The
/// determinant is one for every τ and ρ.
pub fn witness_stretch_basis(
    kernel: &VectorList,
    rowspace: &VectorList,
    witness: &Witness,
    tau: f64,
    rho: f64,
) -> Result<VectorList> {
    let n = kernel.dim();
    let d = kernel.len();
    let k = rowspace.len();
    if d + k != n {
        return Err(Error::DimensionMismatch(
            "kernel and row space must complement each other".into(),
        ));
    }
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    // Kernel part: witness w-basis in kernel coordinates, mapped to x-space.
    let zmat = kernel.as_columns(); // n x d
    for (wv, &lam) in witness.bases.w.vectors().iter().zip(&witness.d3_eigs) {
        let xvec = &zmat * wv;
        cols.push(xvec * f64::exp(tau * (lam + rho)));
    }
    // Row-space part: witness v-basis mapped through the row-space frame.
    let rmat = rowspace.as_columns(); // n x k
    for (vv, &lam) in witness.bases.v.vectors().iter().zip(&witness.d2_eigs) {
        let xvec = &rmat * vv;
        cols.push(xvec * f64::exp(-tau * (lam + rho * d as f64 / k as f64)));
    }
    VectorList::new(n, cols)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StretchSweep {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub rho: f64,
    pub monotone_increasing: bool,
    pub tail_log_slope: f64,
    pub any_capped: bool,
}

/// Sweeps the testing integral along the witness-derived stretch family.
pub fn testing_stretch_sweep(
    map: &PolynomialMap,
    x: &DVector<f64>,
    kernel: &VectorList,
    rowspace: &VectorList,
    witness: &Witness,
    taus: &[f64],
    rho: f64,
    p_dual: f64,
    eta: &EtaSpec,
    order: usize,
) -> Result<StretchSweep> {
    let mut values = Vec::with_capacity(taus.len());
    let mut any_capped = false;
    for &tau in taus {
        let omega = witness_stretch_basis(kernel, rowspace, witness, tau, rho)?;
        let tv = testing_integral(map, x, &omega, p_dual, eta, order)?;
        any_capped |= tv.capped;
        values.push(tv.value);
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    // Tail slope over the last third of the grid.
    let cut = (2 * taus.len()) / 3;
    let (tail_slope, _) = log_linear_fit(&taus[cut..], &values[cut..]);
    Ok(StretchSweep {
        taus: taus.to_vec(),
        values,
        rho,
        monotone_increasing: monotone,
        tail_log_slope: tail_slope,
        any_capped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestingSupReport {
    pub sup: f64,
    pub baseline: f64,
    pub argmax_tau: f64,
    pub argmax_rho: f64,
    pub unbounded_trend: bool,
    pub budget_exhausted: bool,
    pub sweeps: Vec<StretchSweep>,
}

/// Sup search over sampled cutoff points and stretch families. The witness
/// families (ρ = 0 pure, ρ = 1/2 compensated) carry the blowup direction
/// when the map is degenerate; random unit-determinant stretches of bounded
/// exponent cover the rest of the budget.
pub fn testing_sup_search(
    map: &PolynomialMap,
    base: &BasePoint,
    kernel: &VectorList,
    rowspace: &VectorList,
    witness: &Witness,
    p_dual: f64,
    eta: &EtaSpec,
    taus: &[f64],
    budget: usize,
    seed: u64,
    order: usize,
) -> Result<TestingSupReport> {
    let x0 = base.x_vec();
    let std_omega = VectorList::standard_basis(map.n());
    let baseline = testing_integral(map, &x0, &std_omega, p_dual, eta, order)?.value;

    let mut sup = baseline;
    let mut argmax_tau = 0.0;
    let mut argmax_rho = 0.0;
    let mut sweeps = Vec::new();
    let mut unbounded = false;
    for rho in [0.0, 0.5] {
        let sweep = testing_stretch_sweep(
            map, &x0, kernel, rowspace, witness, taus, rho, p_dual, eta, order,
        )?;
        for (t, v) in sweep.taus.iter().zip(&sweep.values) {
            if *v > sup {
                sup = *v;
                argmax_tau = *t;
                argmax_rho = rho;
            }
        }
        if sweep.monotone_increasing && sweep.tail_log_slope > 0.05 {
            unbounded = true;
        }
        sweeps.push(sweep);
    }

    // Random unit-determinant stretches at sampled x within the cutoff.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0usize;
    while used < budget {
        let mut x = x0.clone();
        for i in 0..x.len() {
            x[i] += eta.x_radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        let q = crate::multilinear::random_orthogonal(map.n(), &mut rng);
        let mut sigma: Vec<f64> = (0..map.n())
            .map(|_| 2.0 * rng.random::<f64>() - 1.0)
            .collect();
        let mean = sigma.iter().sum::<f64>() / sigma.len() as f64;
        for s in &mut sigma {
            *s -= mean;
        }
        let cols: Vec<DVector<f64>> = (0..map.n())
            .map(|i| q.column(i) * f64::exp(sigma[i]))
            .collect();
        let omega = VectorList::new(map.n(), cols)?;
        if let Ok(tv) = testing_integral(map, &x, &omega, p_dual, eta, order) {
            if tv.value > sup {
                sup = tv.value;
                argmax_tau = 0.0;
                argmax_rho = f64::NAN;
            }
        }
        used += 1;
    }

    Ok(TestingSupReport {
        sup,
        baseline,
        argmax_tau,
        argmax_rho,
        unbounded_trend: unbounded,
        budget_exhausted: used >= budget,
        sweeps,
    })
}
