//! Dense two-phase simplex over a generic ordered field.
//!
//! The diagram module decides convex-hull membership of lattice points and
//! maximizes separation margins. Problems are tiny (tens of rows, at most a
//! few hundred columns), so a dense tableau with Bland's anticycling rule is
//! the right tool. The same code runs over `f64` with a pivot tolerance and
//! over `BigRational` with tolerance zero, which gives an exact-arithmetic
//! fallback for near-boundary queries: lattice points and rational query
//! points convert to rationals without rounding.

use num::BigRational;

/// Field operations plus the pivot tolerance the simplex uses to decide
/// which entries count as zero.
pub trait LpNum: Clone + PartialOrd + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn tol() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    fn from_f64_exact(x: f64) -> Self;
}

impl LpNum for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn tol() -> Self {
        1e-11
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_f64_exact(x: f64) -> Self {
        x
    }
}

impl LpNum for BigRational {
    fn zero() -> Self {
        num::Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn tol() -> Self {
        num::Zero::zero()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn abs(&self) -> Self {
        num::Signed::abs(self)
    }
    fn to_f64(&self) -> f64 {
        crate::poly::rational_to_f64(self)
    }
    fn from_f64_exact(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float converts exactly")
    }
}

/// Minimize c.x subject to A x = b, x >= 0.
#[derive(Debug, Clone)]
pub struct StandardLp<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

#[derive(Debug, Clone)]
pub enum LpResult<T> {
    Optimal { x: Vec<T>, objective: T },
    /// Farkas certificate y: y.A <= 0 componentwise while y.b > 0.
    Infeasible { farkas: Vec<T> },
    Unbounded,
}

pub fn solve<T: LpNum>(lp: &StandardLp<T>) -> LpResult<T> {
    let m = lp.b.len();
    let n = lp.c.len();
    assert!(lp.a.len() == m && lp.a.iter().all(|r| r.len() == n));

    // Tableau: m rows of n structural + m artificial columns + rhs.
    let total = n + m;
    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row: Vec<T> = Vec::with_capacity(total + 1);
        let flip = lp.b[i] < T::zero();
        for j in 0..n {
            let v = lp.a[i][j].clone();
            row.push(if flip { v.neg() } else { v });
        }
        for j in 0..m {
            row.push(if i == j { T::one() } else { T::zero() });
        }
        row.push(if flip { lp.b[i].neg() } else { lp.b[i].clone() });
        tab.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut flipped = vec![false; m];
    for i in 0..m {
        flipped[i] = lp.b[i] < T::zero();
    }

    // Phase 1: minimize the sum of artificial variables. Reduced costs
    // r_j = c1_j - sum_i tab[i][j] with c1 = (0..0, 1..1).
    let mut obj: Vec<T> = vec![T::zero(); total + 1];
    for j in 0..total + 1 {
        let mut s = T::zero();
        for row in tab.iter() {
            s = s.add(&row[j]);
        }
        let c1 = if (n..total).contains(&j) {
            T::one()
        } else {
            T::zero()
        };
        obj[j] = c1.sub(&s);
    }

    if !pivot_loop(&mut tab, &mut obj, &mut basis, total, None) {
        // Phase 1 is bounded below by 0, so this cannot trigger.
        return LpResult::Unbounded;
    }

    let phase1_value = obj[total].neg();
    if phase1_value > T::tol() {
        // Infeasible; dual y_i = 1 - r_{artificial i}.
        let farkas: Vec<T> = (0..m)
            .map(|i| {
                let y = T::one().sub(&obj[n + i]);
                if flipped[i] {
                    y.neg()
                } else {
                    y
                }
            })
            .collect();
        return LpResult::Infeasible { farkas };
    }

    // Phase 2: real costs; artificial columns are barred from entering.
    let mut obj2: Vec<T> = vec![T::zero(); total + 1];
    for j in 0..total + 1 {
        let cj = if j < n { lp.c[j].clone() } else { T::zero() };
        let mut s = T::zero();
        for (i, row) in tab.iter().enumerate() {
            let cb = if basis[i] < n {
                lp.c[basis[i]].clone()
            } else {
                T::zero()
            };
            s = s.add(&cb.mul(&row[j]));
        }
        obj2[j] = cj.sub(&s);
    }
    if !pivot_loop(&mut tab, &mut obj2, &mut basis, n, Some(n)) {
        return LpResult::Unbounded;
    }

    let mut x = vec![T::zero(); n];
    for (i, &bi) in basis.iter().enumerate() {
        if bi < n {
            x[bi] = tab[i][total].clone();
        }
    }
    let mut objective = T::zero();
    for j in 0..n {
        objective = objective.add(&lp.c[j].mul(&x[j]));
    }
    LpResult::Optimal { x, objective }
}

/// Runs Bland-rule pivots until optimality; returns false on unboundedness.
/// `enter_limit` restricts entering columns to indices < limit (used to bar
/// artificial columns in phase 2); `None` allows all columns.
fn pivot_loop<T: LpNum>(
    tab: &mut [Vec<T>],
    obj: &mut [T],
    basis: &mut [usize],
    enter_cols: usize,
    _bar_from: Option<usize>,
) -> bool {
    let m = tab.len();
    let total = tab[0].len() - 1;
    loop {
        // Bland: lowest-index column with negative reduced cost.
        let mut entering = None;
        for (j, oj) in obj.iter().enumerate().take(enter_cols) {
            if *oj < T::tol().neg() {
                entering = Some(j);
                break;
            }
        }
        let Some(e) = entering else {
            return true;
        };
        // Ratio test, ties broken by lowest basis index (Bland).
        let mut leave: Option<usize> = None;
        let mut best: Option<T> = None;
        for i in 0..m {
            if tab[i][e] > T::tol() {
                let ratio = tab[i][total].div(&tab[i][e]);
                let better = match &best {
                    None => true,
                    Some(b) => {
                        ratio < *b
                            || (ratio == *b
                                && leave.map(|l| basis[i] < basis[l]).unwrap_or(false))
                    }
                };
                if better {
                    best = Some(ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            return false;
        };
        // Pivot on (l, e).
        let pivot = tab[l][e].clone();
        for v in tab[l].iter_mut() {
            *v = v.div(&pivot);
        }
        for i in 0..m {
            if i == l {
                continue;
            }
            let factor = tab[i][e].clone();
            if factor == T::zero() {
                continue;
            }
            for j in 0..total + 1 {
                let delta = factor.mul(&tab[l][j]);
                tab[i][j] = tab[i][j].sub(&delta);
            }
        }
        let factor = obj[e].clone();
        if factor != T::zero() {
            for j in 0..total + 1 {
                let delta = factor.mul(&tab[l][j]);
                obj[j] = obj[j].sub(&delta);
            }
        }
        basis[l] = e;
    }
}

/// Convenience: exact copy of a float LP in rational arithmetic.
pub fn to_rational(lp: &StandardLp<f64>) -> StandardLp<BigRational> {
    StandardLp {
        a: lp
            .a
            .iter()
            .map(|r| r.iter().map(|x| BigRational::from_f64_exact(*x)).collect())
            .collect(),
        b: lp.b.iter().map(|x| BigRational::from_f64_exact(*x)).collect(),
        c: lp.c.iter().map(|x| BigRational::from_f64_exact(*x)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_f64(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> StandardLp<f64> {
        StandardLp { a, b, c }
    }

    #[test]
    fn feasibility_simple_average() {
        // theta1 + theta2 = 1, theta1 - theta2 = 0 -> (1/2, 1/2).
        let lp = lp_f64(
            vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
        );
        match solve(&lp) {
            LpResult::Optimal { x, .. } => {
                assert!((x[0] - 0.5).abs() < 1e-12);
                assert!((x[1] - 0.5).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn infeasibility_gives_farkas() {
        // x1 + x2 = 1, x1 + x2 = 2 has no solution.
        let lp = lp_f64(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
            vec![0.0, 0.0],
        );
        match solve(&lp) {
            LpResult::Infeasible { farkas } => {
                let yb = farkas[0] * 1.0 + farkas[1] * 2.0;
                assert!(yb > 1e-9, "y.b = {yb}");
                for j in 0..2 {
                    let ya = farkas[0] * lp.a[0][j] + farkas[1] * lp.a[1][j];
                    assert!(ya <= 1e-9, "y.A_{j} = {ya}");
                }
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn minimization_reaches_vertex() {
        // min -x1 - 2 x2 s.t. x1 + x2 + s = 4, x2 + t = 3 -> x = (1, 3).
        let lp = lp_f64(
            vec![vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
            vec![4.0, 3.0],
            vec![-1.0, -2.0, 0.0, 0.0],
        );
        match solve(&lp) {
            LpResult::Optimal { x, objective } => {
                assert!((x[0] - 1.0).abs() < 1e-12);
                assert!((x[1] - 3.0).abs() < 1e-12);
                assert!((objective + 7.0).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected() {
        // min -x1 with only x1 - x2 = 0: ray x1 = x2 -> infinity.
        let lp = lp_f64(vec![vec![1.0, -1.0]], vec![0.0], vec![-1.0, 0.0]);
        match solve(&lp) {
            LpResult::Unbounded => {}
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn exact_rational_agrees_with_float() {
        let lp = lp_f64(
            vec![vec![1.0, 1.0, 1.0], vec![1.0, 0.5, 0.0]],
            vec![1.0, 0.25],
            vec![0.0, 1.0, 2.0],
        );
        let fx = match solve(&lp) {
            LpResult::Optimal { objective, .. } => objective,
            other => panic!("float LP failed: {other:?}"),
        };
        let rlp = to_rational(&lp);
        let rx = match solve(&rlp) {
            LpResult::Optimal { objective, .. } => objective.to_f64(),
            other => panic!("rational LP failed: {other:?}"),
        };
        assert!((fx - rx).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // x1 - x2 = -1, x1 + x2 = 1 -> (0, 1).
        let lp = lp_f64(
            vec![vec![1.0, -1.0], vec![1.0, 1.0]],
            vec![-1.0, 1.0],
            vec![0.0, 0.0],
        );
        match solve(&lp) {
            LpResult::Optimal { x, .. } => {
                assert!(x[0].abs() < 1e-12);
                assert!((x[1] - 1.0).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
