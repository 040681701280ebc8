//! Symmetric linear operators exposed through matrix-vector products only.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use super::dense::SymmetricMatrix;
use super::rng::{sample_unit_sphere, SeededRng};
use crate::error::{Error, Result};

type MatvecFn = dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync;

#[derive(Clone)]
enum Kernel {
    Zero,
    Identity,
    Diagonal(Arc<Vec<f64>>),
    Dense(Arc<DMatrix<f64>>),
    Csr(Arc<CsrMatrix<f64>>),
    /// `sum_i w_i A_i`, evaluated term by term.
    Combination(Arc<Vec<(f64, Arc<CsrMatrix<f64>>)>>),
    Custom(Arc<MatvecFn>),
}

/// A symmetric operator `v -> scale * K v + shift * v` where `K` is one of
/// a handful of storage kinds.
///
/// Every application increments an atomic counter, so a shared operator can
/// be probed from several threads while still reporting its total cost.
/// Clones share the underlying storage but start a fresh counter.
pub struct SparseSymOperator {
    n: usize,
    kernel: Kernel,
    scale: f64,
    shift: f64,
    nnz_hint: usize,
    matvecs: AtomicU64,
}

impl Clone for SparseSymOperator {
    fn clone(&self) -> Self {
        self.with_kernel(self.kernel.clone(), self.scale, self.shift)
    }
}

impl fmt::Debug for SparseSymOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kernel {
            Kernel::Zero => "zero",
            Kernel::Identity => "identity",
            Kernel::Diagonal(_) => "diagonal",
            Kernel::Dense(_) => "dense",
            Kernel::Csr(_) => "csr",
            Kernel::Combination(_) => "combination",
            Kernel::Custom(_) => "custom",
        };
        f.debug_struct("SparseSymOperator")
            .field("n", &self.n)
            .field("kind", &kind)
            .field("scale", &self.scale)
            .field("shift", &self.shift)
            .field("nnz_hint", &self.nnz_hint)
            .field("matvecs", &self.matvec_count())
            .finish()
    }
}

impl SparseSymOperator {
    fn new(n: usize, kernel: Kernel, nnz_hint: usize) -> Self {
        assert!(n >= 1, "operator dimension must be positive");
        Self {
            n,
            kernel,
            scale: 1.0,
            shift: 0.0,
            nnz_hint,
            matvecs: AtomicU64::new(0),
        }
    }

    fn with_kernel(&self, kernel: Kernel, scale: f64, shift: f64) -> Self {
        Self {
            n: self.n,
            kernel,
            scale,
            shift,
            nnz_hint: self.nnz_hint,
            matvecs: AtomicU64::new(0),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(n, Kernel::Zero, 0)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, Kernel::Identity, n)
    }

    pub fn diagonal(diag: Vec<f64>) -> Self {
        let n = diag.len();
        Self::new(n, Kernel::Diagonal(Arc::new(diag)), n)
    }

    pub fn from_dense(a: &SymmetricMatrix) -> Self {
        let n = a.dim();
        Self::new(n, Kernel::Dense(Arc::new(a.as_matrix().clone())), n * n)
    }

    /// Wraps a CSR matrix holding both triangles. Fails if it is not square
    /// or not exactly symmetric.
    pub fn from_csr(a: CsrMatrix<f64>) -> Result<Self> {
        Self::from_shared_csr(Arc::new(a))
    }

    pub fn from_shared_csr(a: Arc<CsrMatrix<f64>>) -> Result<Self> {
        check_csr_symmetric(&a)?;
        let nnz = a.nnz();
        Ok(Self::new(a.nrows(), Kernel::Csr(a), nnz))
    }

    /// `v -> sum_i weights[i] * mats[i] v`, never materializing the sum.
    /// Terms with zero weight are skipped.
    pub fn linear_combination(
        n: usize,
        weights: &[f64],
        mats: &[Arc<CsrMatrix<f64>>],
    ) -> Result<Self> {
        if weights.len() != mats.len() {
            return Err(Error::DimensionMismatch {
                expected: mats.len(),
                got: weights.len(),
            });
        }
        for a in mats {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.nrows(),
                });
            }
        }
        let terms: Vec<_> = weights
            .iter()
            .zip(mats)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, a)| (*w, Arc::clone(a)))
            .collect();
        let nnz = terms.iter().map(|(_, a)| a.nnz()).sum();
        Ok(Self::new(n, Kernel::Combination(Arc::new(terms)), nnz))
    }

    /// Operator given by an arbitrary closure. The closure must be linear
    /// and symmetric; `symmetry_defect` can probe this.
    pub fn from_fn(
        n: usize,
        nnz_hint: usize,
        f: impl Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self::new(n, Kernel::Custom(Arc::new(f)), nnz_hint)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_hint(&self) -> usize {
        self.nnz_hint
    }

    pub fn matvec_count(&self) -> u64 {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_matvec_count(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
    }

    /// `c * self`, sharing storage.
    pub fn scaled(&self, c: f64) -> Self {
        self.with_kernel(self.kernel.clone(), self.scale * c, self.shift * c)
    }

    /// `self + c I`, sharing storage.
    pub fn shifted(&self, c: f64) -> Self {
        self.with_kernel(self.kernel.clone(), self.scale, self.shift + c)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        self.apply_into(x, &mut out);
        out
    }

    /// `out = self x`.
    pub fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        assert_eq!(x.len(), self.n, "operator/vector dimension mismatch");
        assert_eq!(out.len(), self.n, "operator/output dimension mismatch");
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        match &self.kernel {
            Kernel::Zero => out.fill(0.0),
            Kernel::Identity => out.copy_from(x),
            Kernel::Diagonal(d) => {
                for i in 0..self.n {
                    out[i] = d[i] * x[i];
                }
            }
            Kernel::Dense(a) => a.mul_to(x, out),
            Kernel::Csr(a) => csr_mul_into(a, x, out, 1.0, false),
            Kernel::Combination(terms) => {
                out.fill(0.0);
                for (w, a) in terms.iter() {
                    csr_mul_into(a, x, out, *w, true);
                }
            }
            Kernel::Custom(f) => f(x, out),
        }
        if self.scale != 1.0 {
            *out *= self.scale;
        }
        if self.shift != 0.0 {
            out.axpy(self.shift, x, 1.0);
        }
    }

    /// Materializes the operator column by column. Intended for small `n`.
    pub fn to_dense(&self) -> SymmetricMatrix {
        let n = self.n;
        let mut cols = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        let mut out = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut out);
            cols.set_column(j, &out);
            e[j] = 0.0;
        }
        SymmetricMatrix::symmetrize(&cols).expect("square by construction")
    }

    /// Largest normalized asymmetry `|a^T(Op b) - b^T(Op a)| / (|a| |b| |Op|_est)`
    /// over `probes` random pairs. `|Op|_est` is the largest `|Op x| / |x|` seen.
    pub fn symmetry_defect(&self, probes: usize, rng: &mut SeededRng) -> f64 {
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let a = sample_unit_sphere(self.n, rng);
            let b = sample_unit_sphere(self.n, rng);
            let oa = self.apply(&a);
            let ob = self.apply(&b);
            let norm_est = oa.norm().max(ob.norm()).max(f64::MIN_POSITIVE);
            worst = worst.max((a.dot(&ob) - b.dot(&oa)).abs() / norm_est);
        }
        worst
    }
}

fn csr_mul_into(a: &CsrMatrix<f64>, x: &DVector<f64>, out: &mut DVector<f64>, w: f64, add: bool) {
    for (i, row) in a.row_iter().enumerate() {
        let mut acc = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[j];
        }
        if add {
            out[i] += w * acc;
        } else {
            out[i] = w * acc;
        }
    }
}

fn check_csr_symmetric(a: &CsrMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let t = a.transpose();
    if t.row_offsets() != a.row_offsets()
        || t.col_indices() != a.col_indices()
        || t.values() != a.values()
    {
        return Err(Error::InvalidArgument(
            "CSR matrix is not exactly symmetric".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra_sparse::CooMatrix;

    fn random_sparse(n: usize, density: f64, rng: &mut SeededRng) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            for j in i..n {
                if rng.uniform() < density {
                    let v = rng.standard_normal();
                    coo.push(i, j, v);
                    if i != j {
                        coo.push(j, i, v);
                    }
                }
            }
        }
        CsrMatrix::from(&coo)
    }

    #[test]
    fn library_operators_pass_symmetry_probe() {
        let mut rng = SeededRng::new(4);
        let dense = SymmetricMatrix::from_upper_fn(12, |_, _| rng.standard_normal());
        let csr = Arc::new(random_sparse(12, 0.3, &mut rng));
        let csr2 = Arc::new(random_sparse(12, 0.3, &mut rng));
        let ops = vec![
            SparseSymOperator::zero(12),
            SparseSymOperator::identity(12),
            SparseSymOperator::diagonal((0..12).map(|i| i as f64 - 3.0).collect()),
            SparseSymOperator::from_dense(&dense),
            SparseSymOperator::from_shared_csr(Arc::clone(&csr)).unwrap(),
            SparseSymOperator::linear_combination(12, &[0.3, 0.7], &[csr, csr2])
                .unwrap()
                .scaled(0.5)
                .shifted(-2.0),
        ];
        for op in &ops {
            assert!(op.symmetry_defect(10, &mut rng) <= 1e-8, "{op:?}");
        }
    }

    #[test]
    fn counts_matvecs() {
        let op = SparseSymOperator::identity(3);
        let x = DVector::from_element(3, 1.0);
        op.apply(&x);
        op.apply(&x);
        assert_eq!(op.matvec_count(), 2);
        assert_eq!(op.clone().matvec_count(), 0);
        op.reset_matvec_count();
        assert_eq!(op.matvec_count(), 0);
    }

    #[test]
    fn scale_and_shift_compose() {
        let op = SparseSymOperator::diagonal(vec![1.0, 2.0]).scaled(3.0).shifted(1.0);
        let y = op.apply(&DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(y.as_slice(), &[4.0, 7.0]);
        // Scaling after a shift scales the shift too.
        let z = SparseSymOperator::identity(2).shifted(1.0).scaled(2.0);
        assert_eq!(z.apply(&DVector::from_vec(vec![1.0, 0.0]))[0], 4.0);
    }

    #[test]
    fn combination_matches_dense_sum() {
        let mut rng = SeededRng::new(10);
        let mats: Vec<_> = (0..3).map(|_| Arc::new(random_sparse(10, 0.4, &mut rng))).collect();
        let w = [0.2, 0.5, 0.3];
        let op = SparseSymOperator::linear_combination(10, &w, &mats).unwrap();
        let mut expected = DMatrix::zeros(10, 10);
        for (wi, a) in w.iter().zip(&mats) {
            expected += DMatrix::from(a.as_ref()) * *wi;
        }
        let got = op.to_dense();
        assert!((got.as_matrix() - expected).amax() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_csr() {
        let mut coo = CooMatrix::new(2, 2);
        coo.push(0, 1, 1.0);
        assert!(SparseSymOperator::from_csr(CsrMatrix::from(&coo)).is_err());
    }
}
