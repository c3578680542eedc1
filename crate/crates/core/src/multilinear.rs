//! Basis replacement and kernel-basis machinery.
//!
//! Everything here revolves around the frame identity
//! `Σ ⟨x,v_i⟩⟨v_i,y⟩ = Σ ⟨x,u_i⟩⟨u_i,y⟩`: realignment against a subspace
//! chain (a Cholesky factorization in disguise), orthogonalization through
//! the Gram eigenbasis, and the equivalence test that recovers the orthogonal
//! matrix connecting two frames. The kernel basis routine produces a
//! *staircase* orthonormal basis of `ker M` (vector `i` supported on the
//! first `k + i` coordinates), which is deterministic and varies continuously
//! with `M` — nearby matrices yield nearby bases.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative rank / independence threshold: sigma_min > RANK_RTOL * sigma_max.
pub const RANK_RTOL: f64 = 1e-10;

/// An ordered list of vectors in R^dim, at most dim of them.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorList {
    dim: usize,
    vectors: Vec<DVector<f64>>,
}

impl VectorList {
    pub fn new(dim: usize, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected vectors of length {dim}"
            )));
        }
        Ok(Self { dim, vectors })
    }

    pub fn from_rows(rows: &DMatrix<f64>) -> Self {
        Self {
            dim: rows.ncols(),
            vectors: (0..rows.nrows()).map(|i| rows.row(i).transpose()).collect(),
        }
    }

    pub fn standard_basis(dim: usize) -> Self {
        Self {
            dim,
            vectors: (0..dim)
                .map(|i| DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &DVector<f64> {
        &self.vectors[i]
    }

    /// Matrix with the list's vectors as rows (len x dim).
    pub fn as_rows(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |i, j| self.vectors[i][j])
    }

    /// Matrix with the list's vectors as columns (dim x len).
    pub fn as_columns(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.len(), |i, j| self.vectors[j][i])
    }

    /// Frame operator Σ v_i v_i^T (dim x dim).
    pub fn frame_operator(&self) -> DMatrix<f64> {
        let rows = self.as_rows();
        rows.transpose() * rows
    }

    /// Certifies linear independence: sigma_min > RANK_RTOL * sigma_max.
    pub fn certify_independent(&self) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if self.len() > self.dim {
            return Err(Error::DependentInput(format!(
                "{} vectors in dimension {}",
                self.len(),
                self.dim
            )));
        }
        let svals = self.as_rows().singular_values();
        let smax = svals.max();
        let smin = svals.min();
        if smax == 0.0 || smin <= RANK_RTOL * smax {
            return Err(Error::DependentInput(format!(
                "sigma_min/sigma_max = {:.3e}",
                if smax == 0.0 { 0.0 } else { smin / smax }
            )));
        }
        Ok(())
    }

    /// |det| of the square matrix of vectors; error if the list is not square.
    pub fn det_magnitude(&self) -> Result<f64> {
        if self.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "determinant needs {} vectors in dimension {}",
                self.dim, self.dim
            )));
        }
        Ok(self.as_rows().determinant().abs())
    }

    /// Max deviation of the Gram matrix from the identity.
    pub fn orthonormal_deviation(&self) -> f64 {
        let rows = self.as_rows();
        let gram = &rows * rows.transpose();
        let mut dev: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((gram[(i, j)] - target).abs());
            }
        }
        dev
    }

    /// Applies a matrix to every vector, returning the image list.
    pub fn map(&self, a: &DMatrix<f64>) -> VectorList {
        VectorList {
            dim: a.nrows(),
            vectors: self.vectors.iter().map(|v| a * v).collect(),
        }
    }
}

/// Decreasing chain V_1 ⊇ V_2 ⊇ ... ⊇ V_l, each space given by an
/// orthonormal spanning set.
#[derive(Debug, Clone)]
pub struct SubspaceChain {
    spaces: Vec<VectorList>,
}

impl SubspaceChain {
    /// Orthonormalizes each spanning set and verifies the nesting
    /// `V_{j+1} ⊆ V_j` by projection residual.
    pub fn new(spans: Vec<VectorList>) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::ChainViolation("empty chain".into()));
        }
        let dim = spans[0].dim();
        let mut spaces = Vec::with_capacity(spans.len());
        for s in &spans {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch("chain spaces share one ambient dimension".into()));
            }
            spaces.push(orthonormalize(s)?);
        }
        for w in spaces.windows(2) {
            let (big, small) = (&w[0], &w[1]);
            if small.len() > big.len() {
                return Err(Error::ChainViolation(
                    "chain dimensions must be non-increasing".into(),
                ));
            }
            let p = big.as_columns(); // dim x m, orthonormal columns
            for v in small.vectors() {
                let resid = (v - &p * (p.transpose() * v)).norm();
                if resid > 1e-8 {
                    return Err(Error::ChainViolation(format!(
                        "nesting residual {resid:.3e}"
                    )));
                }
            }
        }
        Ok(Self { spaces })
    }

    pub fn spaces(&self) -> &[VectorList] {
        &self.spaces
    }

    pub fn top(&self) -> &VectorList {
        &self.spaces[0]
    }
}

/// Gram-Schmidt; rejects dependent input.
pub fn orthonormalize(list: &VectorList) -> Result<VectorList> {
    list.certify_independent()?;
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(list.len());
    for v in list.vectors() {
        let mut w = v.clone();
        for e in &out {
            let c = e.dot(&w);
            w -= c * e;
        }
        // Re-orthogonalize once; classical single-pass GS loses digits.
        for e in &out {
            let c = e.dot(&w);
            w -= c * e;
        }
        let n = w.norm();
        if n <= RANK_RTOL * v.norm().max(1.0) {
            return Err(Error::DependentInput("Gram-Schmidt breakdown".into()));
        }
        out.push(w / n);
    }
    VectorList::new(list.dim(), out)
}

/// Realigns a basis of V_1 against a decreasing subspace chain while
/// preserving the frame identity: the output `u` satisfies
/// `Σ⟨x,u_i⟩⟨u_i,y⟩ = Σ⟨x,v_i⟩⟨v_i,y⟩` and, for each chain space V_j, the
/// final dim V_j output vectors span V_j.
///
/// The construction is the Cholesky factorization of the frame operator in a
/// chain-adapted orthonormal basis.
pub fn realign_basis(v: &VectorList, chain: &SubspaceChain) -> Result<VectorList> {
    v.certify_independent()?;
    let m = v.len();
    let dim = v.dim();
    if chain.top().len() != m {
        return Err(Error::ChainViolation(
            "chain must start at the span of the input basis".into(),
        ));
    }
    // The top chain space must coincide with span(v).
    let p = chain.top().as_columns();
    for vi in v.vectors() {
        let resid = (vi - &p * (p.transpose() * vi)).norm();
        if resid > 1e-8 * vi.norm().max(1.0) {
            return Err(Error::ChainViolation(
                "input basis does not span the top chain space".into(),
            ));
        }
    }

    // Chain-adapted orthonormal basis e_1..e_m, built from the bottom of the
    // chain so that the final dim(V_j) vectors span V_j.
    let mut reversed: Vec<DVector<f64>> = Vec::with_capacity(m);
    for space in chain.spaces().iter().rev() {
        for cand in space.vectors() {
            let mut w = cand.clone();
            for e in &reversed {
                let c = e.dot(&w);
                w -= c * e;
            }
            for e in &reversed {
                let c = e.dot(&w);
                w -= c * e;
            }
            let n = w.norm();
            if n > 1e-8 {
                reversed.push(w / n);
            }
        }
    }
    if reversed.len() != m {
        return Err(Error::ChainViolation(format!(
            "adapted basis has {} of {} vectors",
            reversed.len(),
            m
        )));
    }
    reversed.reverse();
    let e_mat = DMatrix::from_fn(dim, m, |i, j| reversed[j][i]);

    // Coordinates of v_i in the adapted basis and the frame matrix there.
    let coords = e_mat.transpose() * v.as_columns(); // m x m, column i = coords of v_i
    let b = &coords * coords.transpose();
    let chol = nalgebra::Cholesky::new(b)
        .ok_or_else(|| Error::DependentInput("frame operator not positive definite".into()))?;
    let l = chol.l();
    let u_cols = e_mat * l; // dim x m, column i = u_i
    VectorList::new(
        dim,
        (0..m).map(|i| u_cols.column(i).into_owned()).collect(),
    )
}

/// Replaces a linearly independent list by a mutually orthogonal one with
/// the same span and the same frame operator (eigenvector recombination of
/// the Gram matrix).
pub fn orthogonalize_preserving(v: &VectorList) -> Result<VectorList> {
    v.certify_independent()?;
    let m = v.len();
    let rows = v.as_rows();
    let gram = &rows * rows.transpose();
    let eig = nalgebra::SymmetricEigen::new(gram);
    // v'_i = Σ_j O_ij v_j with O = P^T, P = eigenvector matrix.
    let o = eig.eigenvectors.transpose();
    let new_rows = &o * rows;
    VectorList::new(
        v.dim(),
        (0..m).map(|i| new_rows.row(i).transpose()).collect(),
    )
}

/// Outcome of the frame equivalence test.
#[derive(Debug, Clone)]
pub enum FrameEquivalence {
    /// `v_i = Σ_j O_ij w_j` with `O` orthogonal to the reported deviation.
    Equivalent {
        o: DMatrix<f64>,
        orthogonality_deviation: f64,
    },
    /// A refuting linear functional: `Σ|L(v_i)|^2 != Σ|L(w_i)|^2`.
    Distinct {
        probe: DVector<f64>,
        sum_v: f64,
        sum_w: f64,
    },
}

/// Decides whether two independent lists generate the same frame
/// (equivalently, are related by an orthogonal mixing matrix).
pub fn frame_equivalent(v: &VectorList, w: &VectorList) -> Result<FrameEquivalence> {
    if v.len() != w.len() || v.dim() != w.dim() {
        return Err(Error::DimensionMismatch(
            "frame test needs equal lengths and dimensions".into(),
        ));
    }
    v.certify_independent()?;
    w.certify_independent()?;
    let fv = v.frame_operator();
    let fw = w.frame_operator();
    let delta = &fv - &fw;
    let scale = fv.norm().max(fw.norm()).max(1e-300);
    if delta.norm() <= 1e-9 * scale {
        // O = V W^+ maps the w-frame onto the v-frame.
        let vm = v.as_rows();
        let wm = w.as_rows();
        let wwt = &wm * wm.transpose();
        let inv = wwt
            .try_inverse()
            .ok_or_else(|| Error::DependentInput("w frame not invertible".into()))?;
        let o = vm * wm.transpose() * inv;
        let dev = (&o * o.transpose() - DMatrix::identity(v.len(), v.len())).norm();
        Ok(FrameEquivalence::Equivalent {
            o,
            orthogonality_deviation: dev,
        })
    } else {
        // Probe along the dominant eigenvector of the frame difference.
        let eig = nalgebra::SymmetricEigen::new(delta);
        let mut best = 0;
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i].abs() > eig.eigenvalues[best].abs() {
                best = i;
            }
        }
        let probe = eig.eigenvectors.column(best).into_owned();
        let sum_v: f64 = v.vectors().iter().map(|x| probe.dot(x).powi(2)).sum();
        let sum_w: f64 = w.vectors().iter().map(|x| probe.dot(x).powi(2)).sum();
        Ok(FrameEquivalence::Distinct { probe, sum_v, sum_w })
    }
}

/// Dual basis: v_i . v*_j = delta_ij, det v* = (det v)^{-1}.
pub fn dual_basis(v: &VectorList) -> Result<VectorList> {
    if v.len() != v.dim() {
        return Err(Error::DimensionMismatch(
            "dual basis requires a square basis".into(),
        ));
    }
    let m = v.as_rows();
    let svals = m.singular_values();
    if svals.min() <= RANK_RTOL * svals.max() {
        return Err(Error::SingularBasis(format!(
            "condition {:.3e}",
            svals.max() / svals.min().max(1e-300)
        )));
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularBasis("inversion failed".into()))?;
    // Rows of (M^{-1})^T are the dual vectors.
    Ok(VectorList::from_rows(&inv.transpose()))
}

/// Orthonormal basis of ker M for a full-rank k x n matrix, k < n, in
/// staircase canonical form: z_i is supported on coordinates 1..k+i, ordered
/// by the staircase index, sign-fixed so the first non-negligible coordinate
/// is positive. The construction is continuous in M away from rank drops of
/// leading minors, so nearby matrices yield nearby bases.
pub fn kernel_onb(m: &DMatrix<f64>) -> Result<VectorList> {
    let k = m.nrows();
    let n = m.ncols();
    if k >= n {
        return Err(Error::BadDimensions(format!("kernel_onb needs k < n, got {k} x {n}")));
    }
    let svals = m.singular_values();
    if svals.min() <= RANK_RTOL * svals.max() {
        return Err(Error::RankDeficient(format!(
            "sigma_min = {:.3e}",
            svals.min()
        )));
    }
    let d = n - k;
    let scale = svals.max().max(1.0);
    let mut zs: Vec<DVector<f64>> = Vec::with_capacity(d);
    // Scan coordinate prefixes in increasing order; the intersection
    // ker M ∩ span(e_1..e_l) modulo the chosen vectors grows by at most one
    // dimension per step, so extracting a vector exactly when it becomes
    // nontrivial yields the echelon basis, unique up to sign.
    for l in 1..=n {
        if zs.len() == d {
            break;
        }
        // Constraints: M z = 0, z^j = 0 for j > l, z . z_prev = 0, padded
        // with zero rows so the full right-singular basis is available.
        let rows = (k + (n - l) + zs.len()).max(n);
        let mut a = DMatrix::zeros(rows, n);
        a.view_mut((0, 0), (k, n)).copy_from(m);
        for (r, j) in (l..n).enumerate() {
            a[(k + r, j)] = 1.0;
        }
        for (r, z) in zs.iter().enumerate() {
            a.view_mut((k + (n - l) + r, 0), (1, n))
                .copy_from(&z.transpose());
        }
        let svd = a.clone().svd(false, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let sigma_min = if sv.len() >= n { sv[n - 1] } else { 0.0 };
        if sigma_min > 1e-8 * scale {
            continue;
        }
        let vt = svd.v_t.as_ref().expect("requested right singular vectors");
        let z = vt.row(vt.nrows() - 1).transpose();
        let norm = z.norm();
        if norm < 0.5 {
            continue;
        }
        let mut z = z / norm;
        // Clean the trailing coordinates and re-project for orthogonality.
        for j in l..n {
            z[j] = 0.0;
        }
        for prev in &zs {
            let c = prev.dot(&z);
            z -= c * prev;
        }
        let zn = z.norm();
        if zn < 1e-6 {
            continue;
        }
        z /= zn;
        if (m * &z).norm() > 1e-7 * scale {
            continue;
        }
        sign_fix(&mut z);
        zs.push(z);
    }
    if zs.len() != d {
        return Err(Error::RankDeficient(format!(
            "staircase extraction found {} of {} kernel directions",
            zs.len(),
            d
        )));
    }
    VectorList::new(n, zs)
}

fn sign_fix(z: &mut DVector<f64>) {
    let maxabs = z.amax();
    for i in 0..z.len() {
        if z[i].abs() > 1e-9 * maxabs {
            if z[i] < 0.0 {
                *z = -z.clone();
            }
            return;
        }
    }
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign convention R_ii > 0).
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        // Box-Muller from uniform draws keeps us independent of distribution
        // crates and exactly reproducible.
        gaussian(rng)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..dim {
        if r[(i, i)] < 0.0 {
            for j in 0..dim {
                q[(j, i)] = -q[(j, i)];
            }
        }
    }
    q
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn vl(rows: &[&[f64]]) -> VectorList {
        let dim = rows[0].len();
        VectorList::new(
            dim,
            rows.iter().map(|r| DVector::from_row_slice(r)).collect(),
        )
        .unwrap()
    }

    fn frame_close(a: &VectorList, b: &VectorList, tol: f64) {
        let fa = a.frame_operator();
        let fb = b.frame_operator();
        assert!(
            (fa.clone() - fb.clone()).norm() <= tol * fa.norm().max(1.0),
            "frames differ: {:.3e}",
            (fa - fb).norm()
        );
    }

    #[test]
    fn realign_identity_case() {
        let v = VectorList::standard_basis(2);
        let chain = SubspaceChain::new(vec![VectorList::standard_basis(2)]).unwrap();
        let u = realign_basis(&v, &chain).unwrap();
        frame_close(&v, &u, 1e-12);
    }

    #[test]
    fn realign_against_nested_chain() {
        let v = vl(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let chain = SubspaceChain::new(vec![
            VectorList::standard_basis(2),
            vl(&[&[0.0, 1.0]]),
        ])
        .unwrap();
        let u = realign_basis(&v, &chain).unwrap();
        frame_close(&v, &u, 1e-12);
        // Last vector must be parallel to (0,1).
        let u2 = u.vector(1);
        assert!(u2[0].abs() < 1e-12 * u2.norm());
        // Determinant magnitude preserved (square case).
        assert_relative_eq!(
            u.det_magnitude().unwrap(),
            v.det_magnitude().unwrap(),
            max_relative = 1e-12
        );
        // Frame identity on random probes.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| gaussian(&mut rng));
            let y = DVector::from_fn(2, |_, _| gaussian(&mut rng));
            let sv: f64 = v.vectors().iter().map(|vi| x.dot(vi) * vi.dot(&y)).sum();
            let su: f64 = u.vectors().iter().map(|ui| x.dot(ui) * ui.dot(&y)).sum();
            assert_relative_eq!(sv, su, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn realign_rejects_dependent_input() {
        let v = vl(&[&[1.0, 0.0], &[2.0, 0.0]]);
        let chain = SubspaceChain::new(vec![VectorList::standard_basis(2)]).unwrap();
        assert!(matches!(
            realign_basis(&v, &chain),
            Err(Error::DependentInput(_))
        ));
    }

    #[test]
    fn chain_nesting_is_checked() {
        let bad = SubspaceChain::new(vec![
            vl(&[&[1.0, 0.0]]),
            vl(&[&[0.0, 1.0]]),
        ]);
        assert!(matches!(bad, Err(Error::ChainViolation(_))));
    }

    #[test]
    fn orthogonalize_preserves_frame_and_det() {
        let v = vl(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let w = orthogonalize_preserving(&v).unwrap();
        frame_close(&v, &w, 1e-12);
        for i in 0..w.len() {
            for j in (i + 1)..w.len() {
                assert!(w.vector(i).dot(w.vector(j)).abs() < 1e-10);
            }
        }
        assert_relative_eq!(
            w.det_magnitude().unwrap(),
            v.det_magnitude().unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn orthogonalize_fixes_diagonal_gram() {
        let v = vl(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let w = orthogonalize_preserving(&v).unwrap();
        frame_close(&v, &w, 1e-14);
        // Already orthogonal input: output vectors match up to order/sign.
        let mut norms: Vec<f64> = w.vectors().iter().map(|x| x.norm()).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(norms[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(norms[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn frame_equivalence_accepts_rotation() {
        let w = VectorList::standard_basis(2);
        let th: f64 = 30f64.to_radians();
        let v = vl(&[
            &[th.cos(), th.sin()],
            &[-th.sin(), th.cos()],
        ]);
        match frame_equivalent(&v, &w).unwrap() {
            FrameEquivalence::Equivalent {
                o,
                orthogonality_deviation,
            } => {
                assert!(orthogonality_deviation < 1e-10);
                assert_relative_eq!(o[(0, 0)], th.cos(), max_relative = 1e-10);
                assert_relative_eq!(o[(0, 1)], th.sin(), max_relative = 1e-10);
            }
            _ => panic!("rotation must be frame equivalent"),
        }
    }

    #[test]
    fn frame_equivalence_identity() {
        let v = vl(&[&[1.0, 2.0], &[0.5, -1.0]]);
        match frame_equivalent(&v, &v).unwrap() {
            FrameEquivalence::Equivalent { o, .. } => {
                assert!((o - DMatrix::identity(2, 2)).norm() < 1e-9);
            }
            _ => panic!("identical lists are equivalent"),
        }
    }

    #[test]
    fn frame_equivalence_refutes_scaling() {
        let w = VectorList::standard_basis(2);
        let v = vl(&[&[2.0, 0.0], &[0.0, 1.0]]);
        match frame_equivalent(&v, &w).unwrap() {
            FrameEquivalence::Distinct { probe, sum_v, sum_w } => {
                // The probe concentrates on the stretched direction.
                assert!(probe[0].abs() > 0.99);
                assert_relative_eq!(sum_v / sum_w, 4.0, max_relative = 1e-9);
            }
            _ => panic!("scaled frame must be refuted"),
        }
    }

    #[test]
    fn dual_basis_examples() {
        let std2 = VectorList::standard_basis(2);
        let d = dual_basis(&std2).unwrap();
        frame_close(&std2, &d, 1e-14);

        let v = vl(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let d = dual_basis(&v).unwrap();
        assert_relative_eq!(d.vector(0)[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(d.vector(1)[1], 0.25, max_relative = 1e-14);
        assert_relative_eq!(
            v.det_magnitude().unwrap() * d.det_magnitude().unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn dual_basis_gram_product_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v = VectorList::new(
                3,
                (0..3)
                    .map(|_| DVector::from_fn(3, |_, _| gaussian(&mut rng)))
                    .collect(),
            )
            .unwrap();
            if v.certify_independent().is_err() {
                continue;
            }
            let d = dual_basis(&v).unwrap();
            let prod = v.as_rows() * d.as_rows().transpose();
            assert!((prod - DMatrix::identity(3, 3)).norm() < 1e-10);
            let dd = dual_basis(&d).unwrap();
            assert!((dd.as_rows() - v.as_rows()).norm() < 1e-9 * v.as_rows().norm());
        }
    }

    #[test]
    fn kernel_onb_canonical_order() {
        let m = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let z = kernel_onb(&m).unwrap();
        assert_eq!(z.len(), 2);
        assert!((z.vector(0) - DVector::from_row_slice(&[1.0, 0.0, 0.0])).norm() < 1e-12);
        assert!((z.vector(1) - DVector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn kernel_onb_lipschitz_in_m() {
        let m0 = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let z0 = kernel_onb(&m0).unwrap();
        let t = 0.01;
        let mt = DMatrix::from_row_slice(1, 3, &[t, 1.0, 0.0]);
        let zt = kernel_onb(&mt).unwrap();
        for i in 0..2 {
            assert!(
                (z0.vector(i) - zt.vector(i)).norm() < 5.0 * t,
                "kernel basis moved too far"
            );
        }
    }

    #[test]
    fn kernel_onb_two_by_three() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let z = kernel_onb(&m).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z.vector(0) - DVector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn kernel_onb_rejects_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(kernel_onb(&m), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn kernel_onb_orthonormal_and_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = DMatrix::from_fn(2, 5, |_, _| gaussian(&mut rng));
            let z = kernel_onb(&m).unwrap();
            assert!(z.orthonormal_deviation() < 1e-12);
            for zi in z.vectors() {
                assert!((&m * zi).norm() < 1e-10 * m.norm());
            }
        }
    }

    #[test]
    fn haar_sampler_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(4, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(4, 4)).norm() < 1e-10);
    }

    #[test]
    fn frame_equivalent_accepts_orthogonalized_self() {
        let v = vl(&[&[1.0, 0.5, 0.0], &[0.0, 1.0, -0.5]]);
        let w = orthogonalize_preserving(&v).unwrap();
        match frame_equivalent(&v, &w).unwrap() {
            FrameEquivalence::Equivalent {
                orthogonality_deviation,
                ..
            } => assert!(orthogonality_deviation < 1e-10),
            _ => panic!("orthogonalization preserves the frame"),
        }
    }
}
