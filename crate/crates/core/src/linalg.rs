//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Pivot ratio below which an LU factorization is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Squared Frobenius norm, i.e. tr(M M^H).
pub fn frob2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

/// Real diagonal of `m` if every off-diagonal entry and every diagonal
/// imaginary part is exactly zero.
pub fn real_diagonal(m: &CMat) -> Option<Vec<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            if (i != j && (z.re != 0.0 || z.im != 0.0)) || (i == j && z.im != 0.0) {
                return None;
            }
        }
    }
    Some((0..n).map(|i| m[(i, i)].re).collect())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scaled_identity(n: usize, s: f64) -> CMat {
    CMat::from_diagonal_element(n, n, C64::new(s, 0.0))
}

/// Solves `a x = b` by partial-pivot LU, refusing numerically singular `a`.
pub fn lu_solve(a: &CMat, b: &CMat) -> Option<CMat> {
    let lu = a.clone().lu();
    let u = lu.u();
    let pivots = u.diagonal();
    let max = pivots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min = pivots.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min / max > SINGULAR_PIVOT_RATIO) {
        return None;
    }
    lu.solve(b)
}

/// Computes `(G G^H + S)^{-1} G` for an `N x K` matrix `G` and Hermitian `S`.
///
/// A diagonal `S` with strictly positive entries is handled through the
/// push-through identity `S^{-1} G (I + G^H S^{-1} G)^{-1}`, which only
/// factors a `K x K` positive-definite matrix and stays accurate when `S` is
/// tiny relative to `G G^H`. Any other shift goes through a direct `N x N`
/// LU. Returns `None` when the system is numerically singular.
pub fn regularized_solve(g: &CMat, shift: &CMat) -> Option<CMat> {
    if let Some(d) = real_diagonal(shift) {
        if d.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return push_through(g, &d);
        }
    }
    let a = g * g.adjoint() + shift;
    lu_solve(&a, g)
}

fn push_through(g: &CMat, d: &[f64]) -> Option<CMat> {
    let (n, k) = g.shape();
    let mut scaled = g.clone();
    for i in 0..n {
        let inv = 1.0 / d[i];
        for j in 0..k {
            scaled[(i, j)] *= inv;
        }
    }
    let mut inner = g.adjoint() * &scaled;
    for i in 0..k {
        inner[(i, i)] += C64::new(1.0, 0.0);
    }
    // Enforce exact Hermitian symmetry before Cholesky.
    let inner = (&inner + inner.adjoint()).scale(0.5);
    let chol = inner.cholesky()?;
    // scaled * inner^{-1} = (inner^{-1} scaled^H)^H since inner is Hermitian.
    let right = chol.solve(&scaled.adjoint());
    Some(right.adjoint())
}

/// Minimum-norm solution of `A x = b` through the SVD pseudo-inverse.
pub fn min_norm_solve(a: &CMat, b: &CVec) -> CVec {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut x = CVec::zeros(a.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > eps {
            let coeff = u.column(i).dotc(b) / C64::new(s, 0.0);
            x += v_t.row(i).adjoint() * coeff;
        }
    }
    x
}
