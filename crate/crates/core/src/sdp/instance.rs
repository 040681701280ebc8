use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    dense_eigh, op_norm_bounds, SeededRng, SparseSymOperator, SymmetricMatrix, DEFAULT_DENSE_LIMIT,
};
use crate::projections::{SimplexWeights, SpectrahedronAction};

/// One upper-triangle entry of a constraint matrix (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub constraint: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Triplet {
    fn key(&self) -> (usize, usize, usize) {
        (self.constraint, self.row, self.col)
    }
}

/// Feasibility instance: symmetric `A_1, ..., A_m` of size `n`.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    n: usize,
    m: usize,
    triplets: Vec<Triplet>,
    constraints: Vec<Arc<CsrMatrix<f64>>>,
    omega: Option<f64>,
}

/// The width `max_i |A_i|_op`, exact or bracketed by Lanczos estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Width {
    pub omega: f64,
    /// The true width lies in `[omega, omega + slack]`.
    pub slack: f64,
}

impl Width {
    pub fn upper(&self) -> f64 {
        self.omega + self.slack
    }
}

impl SdpInstance {
    /// Builds an instance from upper-triangle triplets. Order does not
    /// matter; the stored triplets are sorted by `(constraint, row, col)`.
    pub fn from_triplets(n: usize, m: usize, mut triplets: Vec<Triplet>) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m must be ≥ 1"));
        }
        if n == 0 {
            return Err(invalid("n must be ≥ 1"));
        }
        for t in &triplets {
            if t.constraint >= m || t.row >= n || t.col >= n {
                return Err(invalid(format!(
                    "triplet ({}, {}, {}) out of range for n = {n}, m = {m}",
                    t.constraint + 1,
                    t.row + 1,
                    t.col + 1
                )));
            }
            if t.row > t.col {
                return Err(invalid(format!(
                    "triplet ({}, {}, {}) lies below the diagonal",
                    t.constraint + 1,
                    t.row + 1,
                    t.col + 1
                )));
            }
            if !t.value.is_finite() {
                return Err(invalid("triplet value is not finite"));
            }
        }
        triplets.sort_by_key(Triplet::key);
        if let Some(w) = triplets.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(invalid(format!(
                "duplicate entry ({}, {}, {})",
                w[0].constraint + 1,
                w[0].row + 1,
                w[0].col + 1
            )));
        }

        let mut coos: Vec<CooMatrix<f64>> = (0..m).map(|_| CooMatrix::new(n, n)).collect();
        for t in &triplets {
            let coo = &mut coos[t.constraint];
            coo.push(t.row, t.col, t.value);
            if t.row != t.col {
                coo.push(t.col, t.row, t.value);
            }
        }
        let constraints = coos.iter().map(|c| Arc::new(CsrMatrix::from(c))).collect();
        Ok(Self {
            n,
            m,
            triplets,
            constraints,
            omega: None,
        })
    }

    /// Builds an instance from dense matrices, keeping their nonzero upper triangles.
    pub fn from_dense(mats: &[SymmetricMatrix]) -> Result<Self> {
        let n = mats.first().map_or(0, SymmetricMatrix::dim);
        let mut triplets = Vec::new();
        for (i, a) in mats.iter().enumerate() {
            if a.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.dim(),
                });
            }
            for col in 0..n {
                for row in 0..=col {
                    let value = a.get(row, col);
                    if value != 0.0 {
                        triplets.push(Triplet {
                            constraint: i,
                            row,
                            col,
                            value,
                        });
                    }
                }
            }
        }
        Self::from_triplets(n, mats.len(), triplets)
    }

    /// Attaches a known width, checked against [`SdpInstance::width`].
    pub fn with_omega(mut self, omega: f64, rng: &mut SeededRng) -> Result<Self> {
        let w = self.width(DEFAULT_DENSE_LIMIT, rng)?;
        let tol = 1e-9 * w.omega.max(1.0) + w.slack;
        if !(omega >= w.omega - tol && omega <= w.upper() + tol) {
            return Err(invalid(format!(
                "declared width {omega} disagrees with computed [{}, {}]",
                w.omega,
                w.upper()
            )));
        }
        self.omega = Some(omega);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn constraints(&self) -> &[Arc<CsrMatrix<f64>>] {
        &self.constraints
    }

    pub fn declared_omega(&self) -> Option<f64> {
        self.omega
    }

    pub fn dense_constraint(&self, i: usize) -> SymmetricMatrix {
        let mut a = SymmetricMatrix::zeros(self.n);
        for t in self.triplets.iter().filter(|t| t.constraint == i) {
            a.set(t.row, t.col, t.value);
        }
        a
    }

    /// `max_i |A_i|_op`: exact below `dense_limit`, otherwise from Lanczos
    /// bounds with relative tolerance 1e-6 folded into `slack`. A declared
    /// width is returned as is.
    pub fn width(&self, dense_limit: usize, rng: &mut SeededRng) -> Result<Width> {
        if let Some(omega) = self.omega {
            return Ok(Width { omega, slack: 0.0 });
        }
        let mut best = Width {
            omega: 0.0,
            slack: 0.0,
        };
        for i in 0..self.m {
            let w = if self.n <= dense_limit {
                let eig = dense_eigh(&self.dense_constraint(i))?;
                Width {
                    omega: eig.lambda_max().abs().max(eig.lambda_min().abs()),
                    slack: 0.0,
                }
            } else {
                let op = SparseSymOperator::from_shared_csr(Arc::clone(&self.constraints[i]))?;
                let b = op_norm_bounds(&op, 1e-6, rng)?;
                Width {
                    omega: b.op_norm(),
                    slack: b.max_slack().max(b.min_slack()),
                }
            };
            if w.upper() > best.upper() {
                best = w;
            }
        }
        Ok(best)
    }

    /// `sum_i y_i A_i` as a dense matrix.
    pub fn adjoint_dense(&self, y: &[f64]) -> Result<SymmetricMatrix> {
        self.check_weights(y)?;
        let mut a = SymmetricMatrix::zeros(self.n);
        for t in &self.triplets {
            let w = y[t.constraint];
            if w != 0.0 {
                let v = a.get(t.row, t.col) + w * t.value;
                a.set(t.row, t.col, v);
            }
        }
        Ok(a)
    }

    fn check_weights(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: y.len(),
            });
        }
        Ok(())
    }
}

/// `A* y = sum_i y_i A_i` as an operator that never materializes the sum.
pub fn adjoint_apply(inst: &SdpInstance, y: &SimplexWeights) -> Result<SparseSymOperator> {
    adjoint_operator(inst, &y.weights())
}

/// [`adjoint_apply`] for arbitrary (not necessarily simplex) weights.
pub fn adjoint_operator(inst: &SdpInstance, y: &[f64]) -> Result<SparseSymOperator> {
    inst.check_weights(y)?;
    SparseSymOperator::linear_combination(inst.n, y, &inst.constraints)
}

fn csr_quad_form(a: &CsrMatrix<f64>, x: &DVector<f64>) -> f64 {
    a.row_iter()
        .enumerate()
        .map(|(r, row)| {
            let s: f64 = row.col_indices().iter().zip(row.values()).map(|(c, v)| v * x[*c]).sum();
            x[r] * s
        })
        .sum()
}

/// Costs `c_i = <A_i, X>` for `i = 1..m`.
pub fn costs(inst: &SdpInstance, x: &SpectrahedronAction) -> Result<Vec<f64>> {
    if x.dim() != inst.n {
        return Err(Error::DimensionMismatch {
            expected: inst.n,
            got: x.dim(),
        });
    }
    Ok(match x {
        SpectrahedronAction::Rank1(f) => inst.constraints.iter().map(|a| csr_quad_form(a, f)).collect(),
        SpectrahedronAction::Dense(d) => {
            let mut c = vec![0.0; inst.m];
            for t in &inst.triplets {
                let mult = if t.row == t.col { 1.0 } else { 2.0 };
                c[t.constraint] += mult * t.value * d.get(t.row, t.col);
            }
            c
        }
    })
}
