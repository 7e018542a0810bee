use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::SdpError;

/// Symmetric matrix stored as its nonzero entries, both triangles included.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Collects the nonzero entries of the symmetric part of `m`.
    ///
    /// Entries with magnitude at or below `drop_tol` are discarded.
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "SparseSym requires a square matrix");
        let dim = m.nrows();
        let mut entries = Vec::new();
        for c in 0..dim {
            for r in 0..dim {
                let v = 0.5 * (m[(r, c)] + m[(c, r)]);
                if v.abs() > drop_tol {
                    entries.push((r, c, v));
                }
            }
        }
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `tr(self · w)` for an arbitrary (not necessarily symmetric) `w`.
    #[inline]
    pub fn trace_product(&self, w: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(p, q, v)| v * w[(q, p)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }

    /// `target += scale · self`
    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(p, q, v) in &self.entries {
            target[(p, q)] += scale * v;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(p, q, v)| (p, q, factor * v)).collect(),
        }
    }

    fn negated(&self) -> Self {
        self.scaled(-1.0)
    }
}

/// One diagonal block of an LMI: `constant + Σ y_i terms_i ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    label: String,
    constant: DMatrix<f64>,
    terms: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn new(label: impl Into<String>, constant: DMatrix<f64>) -> Self {
        Self {
            label: label.into(),
            constant,
            terms: Vec::new(),
        }
    }

    /// Adds `y[var] · coeff`. Empty coefficients are skipped.
    pub fn push_term(&mut self, var: usize, coeff: SparseSym) {
        if !coeff.is_empty() {
            self.terms.push((var, coeff));
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &[(usize, SparseSym)] {
        &self.terms
    }

    /// The block matrix at `y`.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (var, coeff) in &self.terms {
            coeff.add_scaled_to(&mut m, y[*var]);
        }
        m
    }

    /// Smallest eigenvalue of the block at `y`.
    pub fn min_eigenvalue(&self, y: &[f64]) -> f64 {
        let m = self.evaluate(y);
        let m = 0.5 * (&m + m.transpose());
        SymmetricEigen::new(m).eigenvalues.min()
    }

    pub(crate) fn negated_terms(&self) -> Vec<(usize, SparseSym)> {
        self.terms.iter().map(|(v, c)| (*v, c.negated())).collect()
    }
}

/// Maximize `objectiveᵀ y` subject to every block being positive semidefinite.
#[derive(Debug, Clone)]
pub struct Sdp {
    nvars: usize,
    objective: DVector<f64>,
    blocks: Vec<LmiBlock>,
}

impl Sdp {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            objective: DVector::zeros(nvars),
            blocks: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn set_objective(&mut self, objective: DVector<f64>) {
        assert_eq!(objective.len(), self.nvars);
        self.objective = objective;
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn add_block(&mut self, block: LmiBlock) -> Result<(), SdpError> {
        let dim = block.dim();
        if block.constant.ncols() != dim {
            return Err(SdpError::Dimension {
                label: block.label.clone(),
                reason: format!("constant is {}x{}", dim, block.constant.ncols()),
            });
        }
        for (var, coeff) in &block.terms {
            if *var >= self.nvars {
                return Err(SdpError::VariableIndex {
                    index: *var,
                    nvars: self.nvars,
                });
            }
            if coeff.dim() != dim {
                return Err(SdpError::Dimension {
                    label: block.label.clone(),
                    reason: format!("coefficient of variable {var} has dimension {}", coeff.dim()),
                });
            }
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    /// Total dimension of the block-diagonal constraint.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(LmiBlock::dim).sum()
    }

    /// Smallest eigenvalue over every block, together with the block index
    /// where it occurs.
    pub fn worst_block(&self, y: &[f64]) -> Option<(usize, f64)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| (k, b.min_eigenvalue(y)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}
