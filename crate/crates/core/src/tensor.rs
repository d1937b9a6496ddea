//! Dense complex matrix and third-order tensor algebra.
//!
//! Matrices are `nalgebra` column-major matrices of `Complex64`; `vec` stacks
//! columns, and every index map below (unfoldings, `kron_rearrange`, the
//! permutation between full and block unfoldings) is written against that
//! convention. Indices in comments are zero-based.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{arg_err, dim_err, Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Column stacking.
pub fn vec(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: reshapes `v` into a `rows`×`cols` matrix, column-major.
pub fn unvec(v: &[Complex64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return dim_err(format!(
            "cannot reshape a vector of length {} into {rows}x{cols}",
            v.len()
        ));
    }
    Ok(ComplexMatrix::from_column_slice(rows, cols, v))
}

/// Kronecker product `A ⊗ B`.
///
/// Entry `(ia·rb + ib, ja·cb + jb)` is `A(ia, ja)·B(ib, jb)`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for ja in 0..ca {
        for ia in 0..ra {
            let s = a[(ia, ja)];
            if s == ZERO {
                continue;
            }
            for jb in 0..cb {
                for ib in 0..rb {
                    out[(ia * rb + ib, ja * cb + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Block Kronecker product `[H⁽¹⁾⊗G⁽¹⁾, …, H⁽Q⁾⊗G⁽Q⁾]`.
///
/// Both operands are split into `q` equal column blocks. The two block widths
/// may differ, which is needed for products such as `Ī |⊗| H` where the
/// left blocks are `K` wide and the right blocks `N̄` wide.
pub fn block_kron(h: &ComplexMatrix, g: &ComplexMatrix, q: usize) -> Result<ComplexMatrix> {
    if q == 0 {
        return arg_err("block count must be positive");
    }
    if h.ncols() % q != 0 || g.ncols() % q != 0 {
        return dim_err(format!(
            "column counts {} and {} are not both divisible by {q}",
            h.ncols(),
            g.ncols()
        ));
    }
    let lh = h.ncols() / q;
    let lg = g.ncols() / q;
    let rows = h.nrows() * g.nrows();
    let block_cols = lh * lg;
    let mut out = ComplexMatrix::zeros(rows, block_cols * q);
    for b in 0..q {
        let hb = h.columns(b * lh, lh).into_owned();
        let gb = g.columns(b * lg, lg).into_owned();
        out.columns_mut(b * block_cols, block_cols)
            .copy_from(&kron(&hb, &gb));
    }
    Ok(out)
}

/// `Ī = [I_K, …, I_K]` (`K × KQ`), the left operand of `Ī |⊗| H`.
pub fn stacked_identity(k: usize, q: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(k, k * q, |i, j| if j % k == i { ONE } else { ZERO })
}

/// Columns `[b·width, (b+1)·width)` of `m`.
pub fn column_block(m: &ComplexMatrix, b: usize, width: usize) -> ComplexMatrix {
    m.columns(b * width, width).into_owned()
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Tensor mode selector for unfoldings and mode products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => arg_err(format!("tensor mode must be 1, 2 or 3, got {n}")),
        }
    }
}

/// Dense third-order complex tensor.
///
/// Storage is `i + d1·(j + d2·k)`, so each frontal slice is a contiguous
/// column-major `d1`×`d2` matrix and the 1-mode unfolding is the raw buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Self {
            dims: (d1, d2, d3),
            data: vec![ZERO; d1 * d2 * d3],
        }
    }

    /// Stacks equally shaped matrices along the third dimension.
    pub fn from_slices(slices: &[ComplexMatrix]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return arg_err("at least one frontal slice is required");
        };
        let (d1, d2) = first.shape();
        let mut data = Vec::with_capacity(d1 * d2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (d1, d2) {
                return dim_err(format!(
                    "slice {k} has shape {:?}, expected ({d1}, {d2})",
                    s.shape()
                ));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: (d1, d2, slices.len()),
            data,
        })
    }

    pub fn from_fn(
        d1: usize,
        d2: usize,
        d3: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut t = Self::zeros(d1, d2, d3);
        for k in 0..d3 {
            for j in 0..d2 {
                for i in 0..d1 {
                    t.data[i + d1 * (j + d2 * k)] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        match mode {
            Mode::One => self.dims.0,
            Mode::Two => self.dims.1,
            Mode::Three => self.dims.2,
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let (d1, d2, _) = self.dims;
        self.data[i + d1 * (j + d2 * k)]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Frontal slice `T..k`.
    pub fn slice(&self, k: usize) -> ComplexMatrix {
        let (d1, d2, _) = self.dims;
        let len = d1 * d2;
        ComplexMatrix::from_column_slice(d1, d2, &self.data[k * len..(k + 1) * len])
    }

    pub fn slices(&self) -> Vec<ComplexMatrix> {
        (0..self.dims.2).map(|k| self.slice(k)).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Entrywise sum of two equally shaped tensors.
    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return dim_err(format!(
                "cannot add tensors of shapes {:?} and {:?}",
                self.dims, other.dims
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub(crate) fn add_assign_unchecked(&mut self, other: &Tensor3) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// n-mode unfolding.
///
/// * mode 1: `d1 × d2·d3`, `[T..1, …, T..K]`
/// * mode 2: `d2 × d1·d3`, `[T..1ᵀ, …, T..Kᵀ]`
/// * mode 3: `d3 × d1·d2`, row `k` is `vec(T..k)ᵀ`
pub fn unfold(t: &Tensor3, mode: Mode) -> ComplexMatrix {
    let (d1, d2, d3) = t.dims;
    match mode {
        Mode::One => ComplexMatrix::from_column_slice(d1, d2 * d3, &t.data),
        Mode::Two => ComplexMatrix::from_fn(d2, d1 * d3, |j, c| {
            let (i, k) = (c % d1, c / d1);
            t.get(i, j, k)
        }),
        Mode::Three => ComplexMatrix::from_fn(d3, d1 * d2, |k, c| t.data[c + d1 * d2 * k]),
    }
}

/// Inverse of [`unfold`] for a tensor of shape `dims`.
pub fn fold(m: &ComplexMatrix, mode: Mode, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (d1, d2, d3) = dims;
    let expected = match mode {
        Mode::One => (d1, d2 * d3),
        Mode::Two => (d2, d1 * d3),
        Mode::Three => (d3, d1 * d2),
    };
    if m.shape() != expected {
        return dim_err(format!(
            "mode-{mode:?} unfolding of a {dims:?} tensor must be {expected:?}, got {:?}",
            m.shape()
        ));
    }
    let t = match mode {
        Mode::One => Tensor3 {
            dims,
            data: m.as_slice().to_vec(),
        },
        Mode::Two => Tensor3::from_fn(d1, d2, d3, |i, j, k| m[(j, i + d1 * k)]),
        Mode::Three => Tensor3::from_fn(d1, d2, d3, |i, j, k| m[(k, i + d1 * j)]),
    };
    Ok(t)
}

/// `T ×ₙ A`, defined by `unfold(result, n) = A·unfold(T, n)`.
pub fn n_mode_product(t: &Tensor3, a: &ComplexMatrix, mode: Mode) -> Result<Tensor3> {
    let size = t.dim(mode);
    if a.ncols() != size {
        return dim_err(format!(
            "mode-{mode:?} product needs {size} columns, matrix has {}",
            a.ncols()
        ));
    }
    let (d1, d2, d3) = t.dims;
    let dims = match mode {
        Mode::One => (a.nrows(), d2, d3),
        Mode::Two => (d1, a.nrows(), d3),
        Mode::Three => (d1, d2, a.nrows()),
    };
    fold(&(a * unfold(t, mode)), mode, dims)
}

/// Source column of the permutation between full and block 1/2-mode unfoldings.
///
/// Column `(q·K + k)·N̄ + n` of the block unfolding `S₁` is column
/// `(k·Q + q)·N̄ + n` of the full unfolding `[𝒮]₍₁₎`.
pub fn permutation_source_index(nbar: usize, q_count: usize, k_count: usize, col: usize) -> usize {
    let n = col % nbar;
    let r = col / nbar;
    let (q, k) = (r / k_count, r % k_count);
    (k * q_count + q) * nbar + n
}

/// Permutation `P` (`N̄QK × N̄KQ`) with `S_n = [𝒮]₍ₙ₎·P` for n ∈ {1, 2} and
/// `Ī |⊗| H = (I_K ⊗ H)·P`.
///
/// Equal to `[I_K⊗e₁⁽Q⁾, …, I_K⊗e_Q⁽Q⁾] ⊗ I_N̄`, a perfect shuffle that
/// regroups columns from (block, group) order to (group, block) order.
pub fn permutation_p(nbar: usize, q_count: usize, k_count: usize) -> ComplexMatrix {
    let size = nbar * q_count * k_count;
    let mut p = ComplexMatrix::zeros(size, size);
    for col in 0..size {
        p[(permutation_source_index(nbar, q_count, k_count, col), col)] = ONE;
    }
    p
}

/// Thin SVD `m = U·diag(s)·Vᴴ` with `s` non-increasing.
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

fn to_faer(m: &ComplexMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD of a nonempty matrix.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    if m.is_empty() {
        return dim_err("SVD of an empty matrix");
    }
    if m.iter().any(|z| !z.is_finite()) {
        return Err(Error::NumericalFailure("SVD input has non-finite entries".into()));
    }
    let f = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    let s = f.S().column_vector().iter().map(|z| z.re).collect();
    Ok(Svd {
        u: from_faer(f.U()),
        s,
        v: from_faer(f.V()),
    })
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    to_faer(m)
        .singular_values()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))
}

/// Moore–Penrose pseudo-inverse via SVD.
///
/// Singular values below `max(rows, cols)·ε·σ_max` are treated as zero.
/// Non-finite input yields a matrix of NaNs.
pub fn pinv(m: &ComplexMatrix) -> ComplexMatrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return ComplexMatrix::zeros(cols, rows);
    }
    let Ok(Svd { u, s, v }) = svd(m) else {
        return ComplexMatrix::from_element(cols, rows, Complex64::new(f64::NAN, f64::NAN));
    };
    let sigma_max = s.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return ComplexMatrix::zeros(cols, rows);
    }
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let keep = s.iter().take_while(|&&x| x > tol).count();
    // V·Σ⁺·Uᴴ over the retained singular directions.
    let mut vs = v.columns(0, keep).into_owned();
    for (j, &x) in s.iter().take(keep).enumerate() {
        vs.column_mut(j).scale_mut(1.0 / x);
    }
    vs * u.columns(0, keep).adjoint()
}

/// Dominant singular triple of a matrix.
#[derive(Debug, Clone)]
pub struct RankOne {
    pub u: ComplexVector,
    pub sigma: f64,
    pub v: ComplexVector,
}

impl RankOne {
    /// `σ·u·vᴴ`.
    pub fn to_matrix(&self) -> ComplexMatrix {
        (&self.u * self.v.adjoint()) * Complex64::new(self.sigma, 0.0)
    }
}

/// Best rank-one approximation `σ·u·vᴴ` in Frobenius norm.
///
/// The phase of the pair is fixed so that the first entry of `u` with
/// magnitude above `1e-12` is real and nonnegative.
pub fn rank_one_approx(m: &ComplexMatrix) -> Result<RankOne> {
    if m.is_empty() || m.iter().all(|z| *z == ZERO) {
        return Err(Error::DegenerateInput(
            "rank-one approximation of an all-zero matrix".into(),
        ));
    }
    let Svd { u, s, v } = svd(m)?;
    let sigma = s[0];
    if !sigma.is_finite() {
        return Err(Error::NumericalFailure(
            "non-finite singular value in rank-one approximation".into(),
        ));
    }
    let mut u = u.column(0).into_owned();
    let mut v = v.column(0).into_owned();

    if let Some(pivot) = u.iter().find(|z| z.norm() > 1e-12) {
        let phase = Complex64::from_polar(1.0, -pivot.arg());
        u *= phase;
        v *= phase;
        // Exact zero imaginary part on the pivot.
        if let Some(p) = u.iter_mut().find(|z| z.norm() > 1e-12) {
            *p = Complex64::new(p.norm(), 0.0);
        }
    }
    Ok(RankOne { u, sigma, v })
}

/// Rearranges a Kronecker-structured block `Z⁽q⁾ ≈ H⁽q⁾ ⊗ G⁽q⁾`
/// (`M_R·M_T × N̄²`) into `Z̄⁽q⁾ ≈ vec(G⁽q⁾)·vec(H⁽q⁾)ᵀ` (`M_R·N̄ × M_T·N̄`).
///
/// `Z̄(m_R + n₂·M_R, m_T + n₁·M_T) = Z(m_R + m_T·M_R, n₂ + n₁·N̄)`.
pub fn kron_rearrange(
    zq: &ComplexMatrix,
    m_r: usize,
    m_t: usize,
    nbar: usize,
) -> Result<ComplexMatrix> {
    if zq.shape() != (m_r * m_t, nbar * nbar) {
        return dim_err(format!(
            "Kronecker block must be {}x{}, got {:?}",
            m_r * m_t,
            nbar * nbar,
            zq.shape()
        ));
    }
    let mut out = ComplexMatrix::zeros(m_r * nbar, m_t * nbar);
    for n1 in 0..nbar {
        for n2 in 0..nbar {
            for mt in 0..m_t {
                for mr in 0..m_r {
                    out[(mr + n2 * m_r, mt + n1 * m_t)] = zq[(mr + mt * m_r, n2 + n1 * nbar)];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{c, random_matrix, random_tensor, rng};

    fn real(rows: usize, cols: usize, vals: &[f64]) -> ComplexMatrix {
        // row-major literal for readability
        ComplexMatrix::from_fn(rows, cols, |i, j| c(vals[i * cols + j], 0.0))
    }

    fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        assert_eq!(a.shape(), b.shape());
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn vec_is_column_major() {
        let m = real(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let v: Vec<f64> = vec(&m).iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
        let one = ComplexMatrix::from_element(1, 1, c(0.5, -2.0));
        assert_eq!(vec(&one)[0], c(0.5, -2.0));
    }

    #[test]
    fn unvec_inverts_vec() {
        let v: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| c(x, 0.0)).collect();
        assert_eq!(unvec(&v, 2, 2).unwrap(), real(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        let col = unvec(&v, 4, 1).unwrap();
        assert_eq!(col.as_slice(), &v[..]);
        assert!(matches!(unvec(&v[..3], 2, 2), Err(Error::Dimension(_))));

        let m = random_matrix(&mut rng(1), 3, 2);
        assert_eq!(unvec(vec(&m).as_slice(), 3, 2).unwrap(), m);
    }

    #[test]
    fn kron_index_formula() {
        let a = real(2, 1, &[1.0, 2.0]);
        let b = real(2, 1, &[1.0, 0.0]);
        let k = kron(&a, &b);
        let got: Vec<f64> = k.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 0.0, 2.0, 0.0]);

        let a = random_matrix(&mut rng(2), 3, 2);
        let id1 = ComplexMatrix::identity(1, 1);
        assert_eq!(kron(&a, &id1), a);
    }

    #[test]
    fn kron_vec_identity() {
        let mut r = rng(3);
        let (a, b, cm) = (
            random_matrix(&mut r, 2, 2),
            random_matrix(&mut r, 2, 2),
            random_matrix(&mut r, 2, 2),
        );
        let lhs = vec(&(&a * &b * &cm));
        let rhs = kron(&cm.transpose(), &a) * vec(&b);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn block_kron_cases() {
        let mut r = rng(4);
        let h = random_matrix(&mut r, 2, 3);
        let g = random_matrix(&mut r, 3, 3);
        assert_eq!(block_kron(&h, &g, 1).unwrap(), kron(&h, &g));

        // L = 1 collapses to the column-wise (Khatri-Rao) product
        let kr = block_kron(&h, &g, 3).unwrap();
        for j in 0..3 {
            let col = kron(&h.columns(j, 1).into_owned(), &g.columns(j, 1).into_owned());
            assert_eq!(kr.column(j).into_owned(), col.column(0).into_owned());
        }

        // M_T = M_R = 2, N̄ = 2, Q = 2 against explicit per-block products
        let h = random_matrix(&mut r, 2, 4);
        let g = random_matrix(&mut r, 2, 4);
        let bk = block_kron(&h, &g, 2).unwrap();
        assert_eq!(bk.shape(), (4, 8));
        for q in 0..2 {
            let expect = kron(&column_block(&h, q, 2), &column_block(&g, q, 2));
            assert_eq!(column_block(&bk, q, 4), expect);
        }

        assert!(matches!(
            block_kron(&h, &random_matrix(&mut r, 2, 3), 2),
            Err(Error::Dimension(_))
        ));
    }

    fn example_tensor() -> Tensor3 {
        let s1 = real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s2 = real(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        Tensor3::from_slices(&[s1, s2]).unwrap()
    }

    #[test]
    fn unfold_examples() {
        let t = example_tensor();
        assert_eq!(
            unfold(&t, Mode::One),
            real(2, 4, &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0])
        );
        assert_eq!(
            unfold(&t, Mode::Three),
            real(2, 4, &[1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0])
        );
        // [T..1ᵀ, T..2ᵀ]
        assert_eq!(
            unfold(&t, Mode::Two),
            real(2, 4, &[1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0])
        );

        let m = random_matrix(&mut rng(5), 3, 2);
        let single = Tensor3::from_slices(std::slice::from_ref(&m)).unwrap();
        assert_eq!(unfold(&single, Mode::One), m);
    }

    #[test]
    fn mode_from_integer() {
        assert_eq!(Mode::try_from(2).unwrap(), Mode::Two);
        assert!(matches!(Mode::try_from(0), Err(Error::Argument(_))));
        assert!(matches!(Mode::try_from(4), Err(Error::Argument(_))));
    }

    #[test]
    fn fold_examples() {
        let t = random_tensor(&mut rng(6), 2, 3, 4);
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            assert_eq!(fold(&unfold(&t, mode), mode, t.dims()).unwrap(), t);
        }
        let one = ComplexMatrix::from_element(1, 1, c(2.0, 1.0));
        let f = fold(&one, Mode::Two, (1, 1, 1)).unwrap();
        assert_eq!(f.get(0, 0, 0), c(2.0, 1.0));

        let ex = example_tensor();
        let back = fold(&unfold(&ex, Mode::Three), Mode::Three, (2, 2, 2)).unwrap();
        assert_eq!(back.slice(0), real(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(back.slice(1), real(2, 2, &[5.0, 6.0, 7.0, 8.0]));

        assert!(matches!(
            fold(&one, Mode::One, (2, 1, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mode_products() {
        let mut r = rng(7);
        let t = random_tensor(&mut r, 2, 2, 2);
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            let id = ComplexMatrix::identity(2, 2);
            assert_eq!(n_mode_product(&t, &id, mode).unwrap(), t);
        }
        let a = random_matrix(&mut r, 3, 2);
        let b = random_matrix(&mut r, 2, 2);
        let ab = n_mode_product(&n_mode_product(&t, &a, Mode::One).unwrap(), &b, Mode::Two).unwrap();
        let ba = n_mode_product(&n_mode_product(&t, &b, Mode::Two).unwrap(), &a, Mode::One).unwrap();
        let diff = ab.as_slice().iter().zip(ba.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);

        let scalar = Tensor3::from_fn(1, 1, 1, |_, _, _| c(2.0, 0.0));
        let three = ComplexMatrix::from_element(1, 1, c(3.0, 0.0));
        let out = n_mode_product(&scalar, &three, Mode::One).unwrap();
        assert_eq!(out.get(0, 0, 0), c(6.0, 0.0));

        assert!(matches!(
            n_mode_product(&t, &random_matrix(&mut r, 2, 3), Mode::Three),
            Err(Error::Dimension(_))
        ));
    }

    /// Literal `[A_1, …, A_n] ⊗ I_N̄` construction used as an oracle.
    fn shuffle_oracle(nbar: usize, q: usize, k: usize) -> ComplexMatrix {
        let mut blocks = Vec::new();
        for qi in 0..q {
            let mut e = ComplexMatrix::zeros(q, 1);
            e[(qi, 0)] = ONE;
            blocks.push(kron(&ComplexMatrix::identity(k, k), &e));
        }
        let mut outer = ComplexMatrix::zeros(k * q, k * q);
        for (b, blk) in blocks.iter().enumerate() {
            outer.columns_mut(b * k, k).copy_from(blk);
        }
        kron(&outer, &ComplexMatrix::identity(nbar, nbar))
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(permutation_p(3, 1, 1), ComplexMatrix::identity(3, 3));
        let p = permutation_p(1, 2, 2);
        let expect = real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(p, expect);
        for (nbar, q, k) in [(2, 3, 4), (1, 4, 2), (3, 2, 5)] {
            assert_eq!(permutation_p(nbar, q, k), shuffle_oracle(nbar, q, k));
        }
    }

    #[test]
    fn permutation_is_orthogonal() {
        for (nbar, q, k) in [(2, 3, 4), (1, 1, 5), (4, 2, 3)] {
            let p = permutation_p(nbar, q, k);
            let n = p.nrows();
            assert_eq!(&p * p.transpose(), ComplexMatrix::identity(n, n));
            assert_eq!(p.transpose() * &p, ComplexMatrix::identity(n, n));
            for row in p.row_iter() {
                assert_eq!(row.iter().filter(|z| **z == ONE).count(), 1);
                assert_eq!(row.iter().filter(|z| **z != ZERO).count(), 1);
            }
        }
    }

    #[test]
    fn permutation_relates_block_and_full_kron() {
        // Ī |⊗| H = (I_K ⊗ H)·P
        let (nbar, q, k, m_t) = (2, 3, 4, 2);
        let h = random_matrix(&mut rng(8), m_t, nbar * q);
        let ibar = ComplexMatrix::from_fn(k, k * q, |i, j| if i == j % k { ONE } else { ZERO });
        let lhs = block_kron(&ibar, &h, q).unwrap();
        let rhs = kron(&ComplexMatrix::identity(k, k), &h) * permutation_p(nbar, q, k);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pinv_examples() {
        let id = ComplexMatrix::identity(4, 4);
        assert!(max_abs_diff(&pinv(&id), &id) < 1e-14);

        // column-orthogonal M with MᴴM = c·I
        let qr = random_matrix(&mut rng(9), 4, 4).qr();
        let orth = qr.q().columns(0, 3).into_owned() * c(3.0, 0.0);
        let expect = orth.adjoint() / c(9.0, 0.0);
        assert!(max_abs_diff(&pinv(&orth), &expect) < 1e-12);

        // rank-deficient 4×3
        let mut r = rng(10);
        let a = random_matrix(&mut r, 4, 2);
        let b = random_matrix(&mut r, 2, 3);
        let m = &a * &b;
        let mp = pinv(&m);
        assert!(max_abs_diff(&(&m * &mp * &m), &m) / m.norm() < 1e-10);
        assert_eq!(pinv(&ComplexMatrix::zeros(2, 3)), ComplexMatrix::zeros(3, 2));
    }

    #[test]
    fn rank_one_exact_and_degenerate() {
        let mut r = rng(11);
        let g = random_matrix(&mut r, 3, 1);
        let h = random_matrix(&mut r, 4, 1);
        let m = &g * h.transpose();
        let r1 = rank_one_approx(&m).unwrap();
        assert!((r1.sigma - g.norm() * h.norm()).abs() < 1e-12);
        // u ∝ g, v ∝ h*
        let ug = r1.u.dotc(&g).norm();
        assert!((ug - g.norm()).abs() < 1e-12);
        let vh = r1.v.dotc(&h.conjugate()).norm();
        assert!((vh - h.norm()).abs() < 1e-12);
        assert!(max_abs_diff(&r1.to_matrix(), &m) < 1e-12);
        assert!(r1.u[0].im == 0.0 && r1.u[0].re >= 0.0);

        let id = ComplexMatrix::identity(2, 2);
        let r1 = rank_one_approx(&id).unwrap();
        assert!((r1.sigma - 1.0).abs() < 1e-14);
        assert!(((&id - r1.to_matrix()).norm_squared() - 1.0).abs() < 1e-12);

        assert!(matches!(
            rank_one_approx(&ComplexMatrix::zeros(2, 2)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rank_one_inputs_are_reproduced() {
        for seed in 0..200 {
            let mut r = rng(1000 + seed);
            let dim = 2 + (seed as usize % 4);
            let a = random_matrix(&mut r, dim, 1);
            let b = random_matrix(&mut r, dim + 1, 1);
            let m = &a * b.adjoint();
            let r1 = rank_one_approx(&m).unwrap();
            assert!((&m - r1.to_matrix()).norm() <= 1e-12 * m.norm(), "seed {seed}");
            assert!((r1.sigma - m.norm()).abs() <= 1e-12 * m.norm());
        }
    }

    #[test]
    fn kron_rearrange_examples() {
        let mut r = rng(12);
        let h = random_matrix(&mut r, 2, 2);
        let g = random_matrix(&mut r, 2, 2);
        let zbar = kron_rearrange(&kron(&h, &g), 2, 2, 2).unwrap();
        let expect = vec(&g) * vec(&h).transpose();
        assert!(max_abs_diff(&zbar, &expect) < 1e-15);
        let sv = zbar.singular_values();
        let mut s: Vec<f64> = sv.iter().cloned().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[1] / s[0] < 1e-12);

        let one = ComplexMatrix::from_element(1, 1, c(1.5, 0.5));
        assert_eq!(kron_rearrange(&one, 1, 1, 1).unwrap(), one);

        assert!(matches!(
            kron_rearrange(&random_matrix(&mut r, 4, 3), 2, 2, 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn kron_rearrange_inverse_loop_oracle() {
        // Brute-force inverse map: rebuild H⊗G entrywise from vec(G)·vec(H)ᵀ.
        let mut r = rng(13);
        let (m_r, m_t, nbar) = (3, 2, 2);
        let h = random_matrix(&mut r, m_t, nbar);
        let g = random_matrix(&mut r, m_r, nbar);
        let outer = vec(&g) * vec(&h).transpose();
        let mut rebuilt = ComplexMatrix::zeros(m_r * m_t, nbar * nbar);
        for row in 0..m_r * m_t {
            for col in 0..nbar * nbar {
                let (mr, mt) = (row % m_r, row / m_r);
                let (n2, n1) = (col % nbar, col / nbar);
                rebuilt[(row, col)] = outer[(mr + n2 * m_r, mt + n1 * m_t)];
            }
        }
        assert!(max_abs_diff(&rebuilt, &kron(&h, &g)) < 1e-15);
        assert_eq!(kron_rearrange(&rebuilt, m_r, m_t, nbar).unwrap(), outer);
    }
}
