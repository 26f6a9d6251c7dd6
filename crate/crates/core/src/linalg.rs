//! Dense complex kernels shared by both engines: products, Schur-based
//! Sylvester solves and restarted GMRES.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    /// Conjugate transpose.
    H,
}

/// `c = alpha * op(a) * op(b) + beta * c` on column-major storage.
pub fn gemm(alpha: Complex64, a: &CMat, opa: Op, b: &CMat, opb: Op, beta: Complex64, c: &mut CMat) {
    use matrixmultiply::CGemmOption as G;
    let (am, ak) = match opa {
        Op::N => (a.nrows(), a.ncols()),
        Op::H => (a.ncols(), a.nrows()),
    };
    let (bk, bn) = match opb {
        Op::N => (b.nrows(), b.ncols()),
        Op::H => (b.ncols(), b.nrows()),
    };
    assert_eq!(ak, bk, "inner dimensions");
    assert_eq!((c.nrows(), c.ncols()), (am, bn), "output shape");
    if am == 0 || bn == 0 {
        return;
    }
    if ak == 0 {
        c.scale_mut_complex(beta);
        return;
    }
    // column-major: element (i, j) at i + j * nrows; zgemm has no conjugate
    // flag, so adjoint operands are conjugated into a copy and read transposed
    let conj_a;
    let (pa, rsa, csa) = match opa {
        Op::N => (a.as_ptr(), 1isize, a.nrows() as isize),
        Op::H => {
            conj_a = a.map(|v| v.conj());
            (conj_a.as_ptr(), a.nrows() as isize, 1isize)
        }
    };
    let conj_b;
    let (pb, rsb, csb) = match opb {
        Op::N => (b.as_ptr(), 1isize, b.nrows() as isize),
        Op::H => {
            conj_b = b.map(|v| v.conj());
            (conj_b.as_ptr(), b.nrows() as isize, 1isize)
        }
    };
    let ldc = c.nrows() as isize;
    // SAFETY: Complex64 is repr(C) {re, im}, identical in layout to [f64; 2];
    // strides and shapes describe exactly the owned buffers checked above.
    unsafe {
        matrixmultiply::zgemm(
            G::Standard,
            G::Standard,
            am,
            ak,
            bn,
            [alpha.re, alpha.im],
            pa as *const [f64; 2],
            rsa,
            csa,
            pb as *const [f64; 2],
            rsb,
            csb,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            ldc,
        );
    }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl ScaleComplex for CMat {
    fn scale_mut_complex(&mut self, s: Complex64) {
        for v in self.iter_mut() {
            *v *= s;
        }
    }
}

pub fn matmul(a: &CMat, opa: Op, b: &CMat, opb: Op) -> CMat {
    let m = if opa == Op::N { a.nrows() } else { a.ncols() };
    let n = if opb == Op::N { b.ncols() } else { b.nrows() };
    let mut c = CMat::zeros(m, n);
    gemm(ONE, a, opa, b, opb, ZERO, &mut c);
    c
}

/// Complex Schur factors `A = Q T Q†` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct Schur {
    pub q: CMat,
    pub t: CMat,
}

impl Schur {
    pub fn new(a: CMat) -> Self {
        let n = a.nrows();
        if n == 0 {
            return Schur {
                q: CMat::zeros(0, 0),
                t: CMat::zeros(0, 0),
            };
        }
        let (q, mut t) = nalgebra::linalg::Schur::new(a).unpack();
        for j in 0..n {
            for i in j + 1..n {
                t[(i, j)] = ZERO;
            }
        }
        Schur { q, t }
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }
}

/// Solve `T Y + s * Y T† = F` for upper-triangular `T`, overwriting `f` with `Y`.
///
/// Pivots `T_ii + s * conj(T_jj)` smaller than `tiny` are handled per
/// `on_tiny`: `None` aborts (returns the offending pair), `Some(d)` substitutes `d`.
pub fn triangular_sylvester(
    t: &CMat,
    s: f64,
    f: &mut CMat,
    tiny: f64,
    on_tiny: Option<Complex64>,
) -> Result<(), (usize, usize)> {
    let n = t.nrows();
    debug_assert_eq!(f.nrows(), n);
    debug_assert_eq!(f.ncols(), n);
    // B = s T† is lower triangular; column j of Y B couples y_j to y_k, k > j.
    for j in (0..n).rev() {
        // rhs_j -= sum_{k>j} y_k * B[k, j] = sum_{k>j} y_k * s * conj(T[j, k])
        for k in j + 1..n {
            let w = t[(j, k)].conj() * s;
            if w == ZERO {
                continue;
            }
            let (yk, fj) = column_pair(f, k, j);
            for (x, &y) in fj.iter_mut().zip(yk.iter()) {
                *x -= w * y;
            }
        }
        let shift = t[(j, j)].conj() * s;
        // (T + shift I) y_j = rhs_j, column-oriented back substitution
        for i in (0..n).rev() {
            let mut d = t[(i, i)] + shift;
            if d.norm() <= tiny {
                match on_tiny {
                    Some(sub) => d = sub,
                    None => return Err((i, j)),
                }
            }
            let yi = f[(i, j)] / d;
            f[(i, j)] = yi;
            if yi != ZERO {
                for r in 0..i {
                    let tri = t[(r, i)];
                    f[(r, j)] -= tri * yi;
                }
            }
        }
    }
    Ok(())
}

/// Borrow column `k` immutably and column `j` mutably (`k != j`).
fn column_pair(m: &mut CMat, k: usize, j: usize) -> (&[Complex64], &mut [Complex64]) {
    let n = m.nrows();
    let data = m.as_mut_slice();
    if k > j {
        let (lo, hi) = data.split_at_mut(k * n);
        (&hi[..n], &mut lo[j * n..(j + 1) * n])
    } else {
        let (lo, hi) = data.split_at_mut(j * n);
        (&lo[k * n..(k + 1) * n], &mut hi[..n])
    }
}

pub fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm2(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    /// Final true residual ‖b − A x‖ / ‖b‖.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Right-preconditioned restarted GMRES for `A x = b`.
///
/// `apply(v, out)` computes `out = A v`; `precond(v, out)` computes
/// `out = M⁻¹ v`.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[Complex64],
    x0: Vec<Complex64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome
where
    A: FnMut(&[Complex64], &mut [Complex64]),
    P: FnMut(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let m = restart.max(1);
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut x = x0;
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut iterations = 0;
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![ZERO; m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![ZERO; m];
    let mut g = vec![ZERO; m + 1];

    let residual = |x: &[Complex64], r: &mut [Complex64], apply: &mut A| {
        apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    };

    loop {
        let beta = residual(&x, &mut r, &mut apply);
        if beta <= tol * bnorm || iterations >= max_iter {
            return GmresOutcome {
                x,
                iterations,
                relative_residual: beta / bnorm,
                converged: beta <= tol * bnorm,
            };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        for row in h.iter_mut() {
            row.iter_mut().for_each(|v| *v = ZERO);
        }
        g.iter_mut().for_each(|v| *v = ZERO);
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..m {
            precond(&basis[j], &mut z);
            apply(&z, &mut w);
            iterations += 1;
            // modified Gram-Schmidt, one reorthogonalization pass
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(v, &w);
                    h[i][j] += hij;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= hij * vk;
                    }
                }
            }
            let hn = norm2(&w);
            h[j + 1][j] = Complex64::new(hn, 0.0);
            for i in 0..j {
                let (a, bb) = (h[i][j], h[i + 1][j]);
                h[i][j] = cs[i] * a + sn[i] * bb;
                h[i + 1][j] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rr == 0.0 {
                cs[j] = 1.0;
                sn[j] = ZERO;
            } else if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = ONE;
            } else {
                cs[j] = a.norm() / rr;
                sn[j] = (a / a.norm()) * bb.conj() / rr;
            }
            h[j][j] = cs[j] * a + sn[j] * bb;
            h[j + 1][j] = ZERO;
            let gj = g[j];
            g[j] = cs[j] * gj;
            g[j + 1] = -sn[j].conj() * gj;
            k_used = j + 1;
            let est = g[j + 1].norm();
            if est <= tol * bnorm || hn == 0.0 || iterations >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for l in i + 1..k_used {
                acc -= h[i][l] * y[l];
            }
            y[i] = if h[i][i] == ZERO { ZERO } else { acc / h[i][i] };
        }
        let mut comb = vec![ZERO; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (c, vk) in comb.iter_mut().zip(v) {
                *c += yi * vk;
            }
        }
        precond(&comb, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

/// Eigenvalues of a Hermitian matrix (only the lower triangle is read), ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(n, m, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn gemm_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(5, 3, &mut rng);
        let b = random(3, 4, &mut rng);
        let bh = random(4, 3, &mut rng);
        let ah = random(3, 5, &mut rng);
        let close = |x: &CMat, y: &CMat| (x - y).norm() < 1e-12;
        assert!(close(&matmul(&a, Op::N, &b, Op::N), &(&a * &b)));
        assert!(close(&matmul(&a, Op::N, &bh, Op::H), &(&a * bh.adjoint())));
        assert!(close(&matmul(&ah, Op::H, &b, Op::N), &(ah.adjoint() * &b)));
        assert!(close(&matmul(&ah, Op::H, &bh, Op::H), &(ah.adjoint() * bh.adjoint())));
    }

    #[test]
    fn schur_sylvester_solves_both_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 9;
        // shift so that no pivot vanishes
        let a = random(n, n, &mut rng) - CMat::identity(n, n) * Complex64::new(3.0, 0.0);
        let sch = Schur::new(a.clone());
        assert!((&sch.q * &sch.t * sch.q.adjoint() - &a).norm() < 1e-12);
        let f = random(n, n, &mut rng);
        for s in [1.0, -1.0] {
            let mut y = sch.q.adjoint() * &f * &sch.q;
            triangular_sylvester(&sch.t, s, &mut y, 1e-300, None).unwrap();
            let x = &sch.q * y * sch.q.adjoint();
            let lhs = &a * &x + (&x * a.adjoint()) * Complex64::new(s, 0.0);
            assert!((lhs - &f).norm() < 1e-10, "sign {s}");
        }
    }

    #[test]
    fn gmres_solves_preconditioned_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let a = random(n, n, &mut rng) * Complex64::new(0.2, 0.0) + CMat::identity(n, n) * Complex64::new(2.0, 1.0);
        let xs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b = &a * nalgebra::DVector::from_vec(xs.clone());
        let diag: Vec<Complex64> = (0..n).map(|i| a[(i, i)]).collect();
        let out = gmres(
            |v, o| {
                let r = &a * nalgebra::DVector::from_column_slice(v);
                o.copy_from_slice(r.as_slice());
            },
            |v, o| {
                for i in 0..n {
                    o[i] = v[i] / diag[i];
                }
            },
            b.as_slice(),
            vec![ZERO; n],
            1e-12,
            10,
            500,
        );
        assert!(out.converged, "{out:?}");
        for (u, v) in out.x.iter().zip(&xs) {
            assert!((u - v).norm() < 1e-8);
        }
    }

    #[test]
    fn hermitian_spectrum() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
            ],
        );
        let ev = hermitian_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }
}
