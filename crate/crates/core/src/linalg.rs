//! Small dense helpers: matrix exponential, PSD clamping and products with
//! block-diagonal transition matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Padé [6/6] coefficients `c_k = (12-k)! 6! / (12! k! (6-k)!)`.
const PADE6: [f64; 7] = [
    1.0,
    0.5,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Matrix exponential by scaling and squaring with a fixed [6/6] Padé
/// approximant.
///
/// The argument is scaled until its 1-norm is at most ½, where the
/// truncation error of the [6/6] approximant is below 1e-16.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 0.5f64.powi(squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let mut power = ident.clone();
    let mut even = ident.clone() * PADE6[0];
    let mut odd = DMatrix::<f64>::zeros(n, n);
    for (k, c) in PADE6.iter().enumerate().skip(1) {
        power = &power * &scaled;
        if k % 2 == 0 {
            even += &power * *c;
        } else {
            odd += &power * *c;
        }
    }
    // exp(x) ≈ (E + O)(E - O)^{-1} with E, O the even and odd parts.
    let numer = &even + &odd;
    let denom = &even - &odd;
    let mut result = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is well conditioned for ‖A‖ ≤ ½");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Projects a symmetric matrix onto the PSD cone by zeroing negative
/// eigenvalues. Returns the Frobenius norm of the change.
pub fn clamp_psd(a: &mut DMatrix<f64>) -> f64 {
    symmetrize(a);
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return 0.0;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    let change = (&rebuilt - &*a).norm();
    *a = rebuilt;
    symmetrize(a);
    change
}

/// A factor `L` with `L Lᵀ = A` for symmetric PSD `A`.
///
/// The matrix is first equilibrated by its diagonal, since state
/// coordinates of high-order kernels differ in scale by many decades. Uses
/// Cholesky when possible and falls back to an eigendecomposition with
/// negative eigenvalues clipped to zero.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let scale = DVector::from_iterator(n, (0..n).map(|i| {
        let d = a[(i, i)];
        if d > 0.0 {
            d.sqrt()
        } else {
            1.0
        }
    }));
    let mut b = a.clone();
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] /= scale[i] * scale[j];
        }
    }
    symmetrize(&mut b);
    let mut l = match b.clone().cholesky() {
        Some(chol) => chol.l(),
        None => {
            let eig = SymmetricEigen::new(b);
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        }
    };
    for i in 0..n {
        l.row_mut(i).scale_mut(scale[i]);
    }
    l
}

/// One diagonal block of a block-diagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub offset: usize,
    pub mat: DMatrix<f64>,
}

impl Block {
    pub fn size(&self) -> usize {
        self.mat.nrows()
    }
}

/// `out = A x` for block-diagonal `A`.
pub(crate) fn block_mul_vec(blocks: &[Block], x: &DVector<f64>, out: &mut DVector<f64>) {
    for b in blocks {
        let n = b.size();
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += b.mat[(r, c)] * x[b.offset + c];
            }
            out[b.offset + r] = acc;
        }
    }
}

/// `out = Aᵀ x` for block-diagonal `A`.
pub(crate) fn block_tr_mul_vec(blocks: &[Block], x: &DVector<f64>, out: &mut DVector<f64>) {
    for b in blocks {
        let n = b.size();
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += b.mat[(c, r)] * x[b.offset + c];
            }
            out[b.offset + r] = acc;
        }
    }
}

/// `out = op(A) P op(A)ᵀ` for block-diagonal `A`, where `op` transposes the
/// blocks when `transpose` is set. `scratch` must be the same shape as `p`.
///
/// Costs `O(M² b)` for block size `b` instead of `O(M³)`.
pub(crate) fn block_congruence(
    blocks: &[Block],
    transpose: bool,
    p: &DMatrix<f64>,
    scratch: &mut DMatrix<f64>,
    out: &mut DMatrix<f64>,
) {
    let m = p.nrows();
    let entry = |b: &Block, r: usize, c: usize| if transpose { b.mat[(c, r)] } else { b.mat[(r, c)] };
    // scratch = op(A) P, column by column.
    {
        let src = p.as_slice();
        let dst = scratch.as_mut_slice();
        for j in 0..m {
            let col = &src[j * m..(j + 1) * m];
            let out_col = &mut dst[j * m..(j + 1) * m];
            for b in blocks {
                let n = b.size();
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += entry(b, r, c) * col[b.offset + c];
                    }
                    out_col[b.offset + r] = acc;
                }
            }
        }
    }
    // out = scratch op(A)ᵀ: column (o + r) of out is Σ_c scratch[:, o + c] op(A)[r, c].
    {
        let src = scratch.as_slice();
        let dst = out.as_mut_slice();
        dst.fill(0.0);
        for b in blocks {
            let n = b.size();
            for r in 0..n {
                let j = b.offset + r;
                for c in 0..n {
                    let w = entry(b, r, c);
                    if w == 0.0 {
                        continue;
                    }
                    let s = &src[(b.offset + c) * m..(b.offset + c + 1) * m];
                    let d = &mut dst[j * m..(j + 1) * m];
                    for (di, si) in d.iter_mut().zip(s) {
                        *di += w * si;
                    }
                }
            }
        }
    }
}

pub(crate) fn assemble_block_diag(blocks: &[Block], dim: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim, dim);
    for b in blocks {
        out.view_mut((b.offset, b.offset), (b.size(), b.size())).copy_from(&b.mat);
    }
    out
}
