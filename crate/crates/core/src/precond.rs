//! Preconditioner representations and their relative-gradient updates.
//!
//! A preconditioner P is carried through its Cholesky factor P = Q^T Q, where
//! Q is upper triangular with a positive diagonal. Such matrices form a Lie
//! group under multiplication, so Q is learned with multiplicative
//! (relative-gradient) steps Q <- Q - mu * grad * Q, which keeps updates
//! equivariant across the numerical scale of the underlying curvature.
//! Dense, Kronecker-factored, limited-memory triangular, and direct-sum
//! layouts are supported.

use std::ops::Range;

use thiserror::Error;

use crate::linalg::tri::{
    solve_mat_upper, solve_upper_t_mat, times_upper, times_upper_t, triu_gram_diff,
    triu_outer_diff, triu_outer_sym, upper_matvec, upper_t_matvec, upper_t_times, upper_times,
    upper_times_upper,
};
use crate::linalg::{kron, tri_solve, unvec_cols, vec_cols, Matrix, TriMode};

/// Preconditioner estimation criterion.
///
/// C1 fits the secant equation through the inverse preconditioner, C2 fits it
/// through the preconditioner, and C3 balances preconditioned gradient
/// perturbations against parameter perturbations. Only C3 is meaningful for
/// indefinite curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    C1,
    C2,
    C3,
}

/// Step-size normalization for factor updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepNorm {
    /// Divide by the largest absolute entry of the gradient.
    MaxAbs,
    /// Divide by the largest absolute diagonal entry; guarantees the updated
    /// factor stays in the group for step0 < 1.
    MaxAbsDiag,
}

/// A matched pair of parameter and gradient perturbations measured on one
/// mini-batch.
#[derive(Debug, Clone)]
pub struct PerturbationPair {
    pub dtheta: Vec<f64>,
    pub dg: Vec<f64>,
}

impl PerturbationPair {
    pub fn new(dtheta: Vec<f64>, dg: Vec<f64>) -> Self {
        assert_eq!(dtheta.len(), dg.len(), "perturbation length mismatch");
        PerturbationPair { dtheta, dg }
    }

    pub fn dim(&self) -> usize {
        self.dtheta.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("criterion {criterion:?} is only supported for dense blocks")]
    UnsupportedCriterion { criterion: Criterion },
    #[error("layout covers {layout} parameters but vector has {vector}")]
    CoverageMismatch { layout: usize, vector: usize },
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
}

/// Upper-triangular Cholesky factor Q with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TriFactor {
    q: Matrix,
}

impl TriFactor {
    /// Identity factor, the customary starting point for estimation.
    pub fn identity(n: usize) -> Self {
        TriFactor {
            q: Matrix::identity(n),
        }
    }

    /// Validates an upper-triangular matrix with positive diagonal.
    pub fn from_upper(q: Matrix) -> Result<Self, LayoutError> {
        if !q.is_square() {
            return Err(LayoutError::InvalidFactor("factor must be square".into()));
        }
        for i in 0..q.rows() {
            if !(q[(i, i)] > 0.0) {
                return Err(LayoutError::InvalidFactor(format!(
                    "diagonal entry {} is not positive",
                    i
                )));
            }
            for j in 0..i {
                if q[(i, j)] != 0.0 {
                    return Err(LayoutError::InvalidFactor(format!(
                        "entry ({}, {}) below the diagonal is nonzero",
                        i, j
                    )));
                }
            }
        }
        if !q.is_finite() {
            return Err(LayoutError::InvalidFactor("non-finite entry".into()));
        }
        Ok(TriFactor { q })
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    /// The implied preconditioner P = Q^T Q.
    pub fn preconditioner(&self) -> Matrix {
        self.q.matmul_at(&self.q)
    }

    /// Preconditioned gradient Q^T (Q g).
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.dim(), "apply dimension mismatch");
        upper_t_matvec(&self.q, &upper_matvec(&self.q, g))
    }

    /// Relative gradient of the chosen criterion's instantaneous cost with
    /// respect to a multiplicative perturbation of Q. Upper triangular.
    pub fn relative_gradient(
        &self,
        criterion: Criterion,
        dtheta: &[f64],
        dg: &[f64],
    ) -> Matrix {
        let n = self.dim();
        assert_eq!(dtheta.len(), n, "dtheta dimension mismatch");
        assert_eq!(dg.len(), n, "dg dimension mismatch");
        match criterion {
            Criterion::C3 => {
                let a = upper_matvec(&self.q, dg);
                let b = self.solve_qt(dtheta);
                triu_outer_diff(&a, &b).scale(2.0)
            }
            Criterion::C1 => {
                // e1 = dg - P^{-1} dtheta; grad = 2 triu(u w^T + w u^T)
                // with u = Q^{-T} dtheta and w = Q^{-T} e1.
                let u = self.solve_qt(dtheta);
                let pinv_dtheta = self.solve_q(&u);
                let e1: Vec<f64> = dg
                    .iter()
                    .zip(&pinv_dtheta)
                    .map(|(g, p)| g - p)
                    .collect();
                let w = self.solve_qt(&e1);
                triu_outer_sym(&u, &w).scale(2.0)
            }
            Criterion::C2 => {
                // e2 = P dg - dtheta; grad = 2 triu(a c^T + c a^T)
                // with a = Q dg and c = Q e2.
                let a = upper_matvec(&self.q, dg);
                let pdg = upper_t_matvec(&self.q, &a);
                let e2: Vec<f64> = pdg.iter().zip(dtheta).map(|(p, t)| p - t).collect();
                let c = upper_matvec(&self.q, &e2);
                triu_outer_sym(&a, &c).scale(2.0)
            }
        }
    }

    /// One relative-gradient step Q - (step0 / denom) * grad * Q.
    ///
    /// A zero gradient denominator means the instantaneous cost is already
    /// stationary and the factor is returned unchanged. With `MaxAbs`
    /// normalization the step is halved up to ten times if a diagonal entry
    /// would turn nonpositive, then the update is skipped. Non-finite
    /// gradients (possible when an ill-suited criterion diverges) also skip.
    pub fn updated(&self, grad: &Matrix, step0: f64, norm: StepNorm) -> TriFactor {
        match update_upper(&self.q, grad, step0, norm) {
            Some(q) => TriFactor { q },
            None => self.clone(),
        }
    }

    fn solve_qt(&self, b: &[f64]) -> Vec<f64> {
        tri_solve(&self.q, b, TriMode::Transposed).expect("factor diagonal is positive")
    }

    fn solve_q(&self, b: &[f64]) -> Vec<f64> {
        tri_solve(&self.q, b, TriMode::Normal).expect("factor diagonal is positive")
    }
}

/// Shared update rule for upper-triangular factors. Returns None when the
/// update must be skipped.
fn update_upper(q: &Matrix, grad: &Matrix, step0: f64, norm: StepNorm) -> Option<Matrix> {
    assert!(
        step0 > 0.0 && step0 < 1.0,
        "normalized step size must lie in (0, 1)"
    );
    let n = q.rows();
    assert_eq!(grad.rows(), n, "gradient dimension mismatch");
    assert_eq!(grad.cols(), n, "gradient dimension mismatch");
    let denom = match norm {
        StepNorm::MaxAbs => grad.max_abs(),
        StepNorm::MaxAbsDiag => grad.max_abs_diag(),
    };
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let gq = upper_times_upper(grad, q);
    if !gq.is_finite() {
        return None;
    }
    let mut mu = step0 / denom;
    let max_halvings = 10;
    for attempt in 0..=max_halvings {
        let mut candidate = q.clone();
        let mut diag_positive = true;
        for i in 0..n {
            let crow = candidate.row_mut(i);
            let grow = gq.row(i);
            for j in i..n {
                crow[j] -= mu * grow[j];
            }
            diag_positive &= crow[i] > 0.0;
        }
        let finite = candidate.is_finite();
        if diag_positive && finite {
            return Some(candidate);
        }
        if norm == StepNorm::MaxAbsDiag {
            // A finite candidate always keeps a positive diagonal under this
            // normalization: the diagonal of grad*Q is grad_ii * q_ii and
            // mu * |grad_ii| <= step0 < 1. Only overflow can land here.
            assert!(
                !finite,
                "max_abs_diag normalization with step0 < 1 cannot leave the group"
            );
            return None;
        }
        if attempt == max_halvings {
            break;
        }
        mu *= 0.5;
    }
    None
}

/// Kronecker-factored preconditioner P = P2 (x) P1 for a p x q parameter
/// matrix, with P1 = Q1^T Q1 (p x p) and P2 = Q2^T Q2 (q x q).
#[derive(Debug, Clone, PartialEq)]
pub struct KronFactor {
    q1: TriFactor,
    q2: TriFactor,
}

impl KronFactor {
    pub fn identity(p: usize, q: usize) -> Self {
        KronFactor {
            q1: TriFactor::identity(p),
            q2: TriFactor::identity(q),
        }
    }

    pub fn new(q1: TriFactor, q2: TriFactor) -> Self {
        KronFactor { q1, q2 }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.q1.dim(), self.q2.dim())
    }

    pub fn factor1(&self) -> &TriFactor {
        &self.q1
    }

    pub fn factor2(&self) -> &TriFactor {
        &self.q2
    }

    /// Preconditioned update direction P1 G P2 for a matrix-shaped gradient.
    pub fn apply_matrix(&self, g: &Matrix) -> Matrix {
        let (p, q) = self.shape();
        assert_eq!((g.rows(), g.cols()), (p, q), "kron apply shape mismatch");
        let t = times_upper_t(&upper_times(self.q1.matrix(), g), self.q2.matrix());
        times_upper(&upper_t_times(self.q1.matrix(), &t), self.q2.matrix())
    }

    /// Relative gradients of the criterion-3 instantaneous cost for both
    /// factors. B is obtained from two triangular solves of
    /// Q2^T B Q1 = dTheta^T rather than explicit inversion.
    pub fn relative_gradients_c3(&self, dtheta: &Matrix, dg: &Matrix) -> (Matrix, Matrix) {
        let (p, q) = self.shape();
        assert_eq!((dtheta.rows(), dtheta.cols()), (p, q), "shape mismatch");
        assert_eq!((dg.rows(), dg.cols()), (p, q), "shape mismatch");
        let a = times_upper_t(&upper_times(self.q1.matrix(), dg), self.q2.matrix());
        let y = solve_upper_t_mat(self.q2.matrix(), &dtheta.transpose())
            .expect("factor diagonal is positive");
        let b = solve_mat_upper(&y, self.q1.matrix()).expect("factor diagonal is positive");
        let g1 = triu_gram_diff(&a, &b.transpose()).scale(2.0);
        let g2 = triu_gram_diff(&a.transpose(), &b).scale(2.0);
        (g1, g2)
    }

    pub fn updated(&self, g1: &Matrix, g2: &Matrix, step0: f64, norm: StepNorm) -> KronFactor {
        KronFactor {
            q1: self.q1.updated(g1, step0, norm),
            q2: self.q2.updated(g2, step0, norm),
        }
    }

    /// Expands the implied preconditioner P2 (x) P1. Test and reporting use.
    pub fn preconditioner(&self) -> Matrix {
        kron(&self.q2.preconditioner(), &self.q1.preconditioner())
    }
}

/// Limited-memory triangular factor
/// Q = [[Q11, Q12], [0, diag(q22)]] with positive diagonal, where Q11 is
/// r x r upper triangular. Approximates a full Cholesky factor with
/// O(r n) storage worth of free entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitedMemoryTriFactor {
    q: Matrix,
    rank: usize,
}

impl LimitedMemoryTriFactor {
    pub fn identity(n: usize, rank: usize) -> Self {
        assert!(rank <= n, "rank must not exceed the dimension");
        LimitedMemoryTriFactor {
            q: Matrix::identity(n),
            rank,
        }
    }

    pub fn from_assembled(q: Matrix, rank: usize) -> Result<Self, LayoutError> {
        let factor = TriFactor::from_upper(q)?;
        let q = factor.q;
        if rank > q.rows() {
            return Err(LayoutError::InvalidFactor(
                "rank exceeds the dimension".into(),
            ));
        }
        for i in rank..q.rows() {
            for j in (i + 1)..q.cols() {
                if q[(i, j)] != 0.0 {
                    return Err(LayoutError::InvalidFactor(format!(
                        "entry ({}, {}) outside the limited-memory pattern is nonzero",
                        i, j
                    )));
                }
            }
        }
        Ok(LimitedMemoryTriFactor { q, rank })
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The assembled upper-triangular factor.
    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn preconditioner(&self) -> Matrix {
        self.q.matmul_at(&self.q)
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        upper_t_matvec(&self.q, &upper_matvec(&self.q, g))
    }

    /// Dense criterion-3 relative gradient projected onto the structure's
    /// free entries. The projection stays in the Lie subalgebra, so the
    /// multiplicative update preserves the sparsity pattern exactly.
    pub fn relative_gradient_c3(&self, dtheta: &[f64], dg: &[f64]) -> Matrix {
        let n = self.dim();
        assert_eq!(dtheta.len(), n);
        assert_eq!(dg.len(), n);
        let a = upper_matvec(&self.q, dg);
        let b = tri_solve(&self.q, dtheta, TriMode::Transposed)
            .expect("factor diagonal is positive");
        let mut grad = triu_outer_diff(&a, &b).scale(2.0);
        for i in self.rank..n {
            for j in (i + 1)..n {
                grad[(i, j)] = 0.0;
            }
        }
        grad
    }

    pub fn updated(&self, grad: &Matrix, step0: f64, norm: StepNorm) -> Self {
        match update_upper(&self.q, grad, step0, norm) {
            Some(q) => LimitedMemoryTriFactor { q, rank: self.rank },
            None => self.clone(),
        }
    }
}

/// One block of a direct-sum preconditioner layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense(TriFactor),
    /// Kronecker block over a parameter matrix stored column-major in its
    /// slice of the parameter vector.
    Kron(KronFactor),
    LimitedMemory(LimitedMemoryTriFactor),
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Dense(f) => f.dim(),
            Block::Kron(k) => {
                let (p, q) = k.shape();
                p * q
            }
            Block::LimitedMemory(l) => l.dim(),
        }
    }
}

/// Direct sum of block preconditioners over an ordered partition of the
/// parameter vector. Blocks are laid out back to back, so the slice map is
/// gap-free and non-overlapping by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerLayout {
    blocks: Vec<Block>,
    spans: Vec<Range<usize>>,
    dim: usize,
}

impl PreconditionerLayout {
    pub fn new(blocks: Vec<Block>) -> Self {
        assert!(!blocks.is_empty(), "layout needs at least one block");
        let mut spans = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for b in &blocks {
            let d = b.dim();
            spans.push(offset..offset + d);
            offset += d;
        }
        PreconditionerLayout {
            blocks,
            spans,
            dim: offset,
        }
    }

    /// Single dense block over the whole parameter vector.
    pub fn dense(n: usize) -> Self {
        PreconditionerLayout::new(vec![Block::Dense(TriFactor::identity(n))])
    }

    pub fn limited_memory(n: usize, rank: usize) -> Self {
        PreconditionerLayout::new(vec![Block::LimitedMemory(LimitedMemoryTriFactor::identity(
            n, rank,
        ))])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    /// Whether every block is dense (criteria 1 and 2 require this).
    pub fn is_all_dense(&self) -> bool {
        self.blocks.iter().all(|b| matches!(b, Block::Dense(_)))
    }

    /// Preconditioned gradient: each block preconditions its own slice.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>, LayoutError> {
        if g.len() != self.dim {
            return Err(LayoutError::CoverageMismatch {
                layout: self.dim,
                vector: g.len(),
            });
        }
        let mut out = vec![0.0; g.len()];
        for (block, span) in self.blocks.iter().zip(&self.spans) {
            let slice = &g[span.clone()];
            let result = match block {
                Block::Dense(f) => f.apply(slice),
                Block::LimitedMemory(l) => l.apply(slice),
                Block::Kron(k) => {
                    let (p, q) = k.shape();
                    let gm = unvec_cols(slice, p, q);
                    vec_cols(&k.apply_matrix(&gm))
                }
            };
            out[span.clone()].copy_from_slice(&result);
        }
        Ok(out)
    }

    /// One estimation step from a perturbation pair. Criteria 1 and 2 are
    /// only available when every block is dense.
    pub fn update(
        &mut self,
        criterion: Criterion,
        pair: &PerturbationPair,
        step0: f64,
        norm: StepNorm,
    ) -> Result<(), LayoutError> {
        if pair.dim() != self.dim {
            return Err(LayoutError::CoverageMismatch {
                layout: self.dim,
                vector: pair.dim(),
            });
        }
        if criterion != Criterion::C3 && !self.is_all_dense() {
            return Err(LayoutError::UnsupportedCriterion { criterion });
        }
        for (block, span) in self.blocks.iter_mut().zip(&self.spans) {
            let dt = &pair.dtheta[span.clone()];
            let dg = &pair.dg[span.clone()];
            match block {
                Block::Dense(f) => {
                    let grad = f.relative_gradient(criterion, dt, dg);
                    *f = f.updated(&grad, step0, norm);
                }
                Block::LimitedMemory(l) => {
                    let grad = l.relative_gradient_c3(dt, dg);
                    *l = l.updated(&grad, step0, norm);
                }
                Block::Kron(k) => {
                    let (p, q) = k.shape();
                    let dt_m = unvec_cols(dt, p, q);
                    let dg_m = unvec_cols(dg, p, q);
                    let (g1, g2) = k.relative_gradients_c3(&dt_m, &dg_m);
                    *k = k.updated(&g1, &g2, step0, norm);
                }
            }
        }
        Ok(())
    }

    /// Expands the implied full preconditioner as a direct sum. Intended for
    /// tests and metric reporting at desk scale.
    pub fn implied_preconditioner(&self) -> Matrix {
        let mut p = Matrix::zeros(self.dim, self.dim);
        for (block, span) in self.blocks.iter().zip(&self.spans) {
            let pb = match block {
                Block::Dense(f) => f.preconditioner(),
                Block::LimitedMemory(l) => l.preconditioner(),
                Block::Kron(k) => k.preconditioner(),
            };
            for i in 0..pb.rows() {
                for j in 0..pb.cols() {
                    p[(span.start + i, span.start + j)] = pb[(i, j)];
                }
            }
        }
        p
    }
}

/// Instantaneous criterion cost of the layout's implied preconditioner on a
/// single perturbation pair. For criterion 3 this is
/// dg^T P dg + dtheta^T P^{-1} dtheta.
pub fn criterion_cost(
    criterion: Criterion,
    layout: &PreconditionerLayout,
    pair: &PerturbationPair,
) -> Result<f64, LayoutError> {
    if pair.dim() != layout.dim() {
        return Err(LayoutError::CoverageMismatch {
            layout: layout.dim(),
            vector: pair.dim(),
        });
    }
    match criterion {
        Criterion::C3 => {
            let pdg = layout.apply(&pair.dg)?;
            let quad_g: f64 = pair.dg.iter().zip(&pdg).map(|(a, b)| a * b).sum();
            let mut quad_t = 0.0;
            for (block, span) in layout.blocks().iter().zip(layout.spans()) {
                let dt = &pair.dtheta[span.clone()];
                quad_t += match block {
                    Block::Dense(f) => {
                        let b = tri_solve(f.matrix(), dt, TriMode::Transposed)
                            .expect("factor diagonal is positive");
                        b.iter().map(|v| v * v).sum::<f64>()
                    }
                    Block::LimitedMemory(l) => {
                        let b = tri_solve(l.matrix(), dt, TriMode::Transposed)
                            .expect("factor diagonal is positive");
                        b.iter().map(|v| v * v).sum::<f64>()
                    }
                    Block::Kron(k) => {
                        let (p, q) = k.shape();
                        let dt_m = unvec_cols(dt, p, q);
                        let y = solve_upper_t_mat(k.factor1().matrix(), &dt_m)
                            .expect("factor diagonal is positive");
                        let b = solve_mat_upper(&y, k.factor2().matrix())
                            .expect("factor diagonal is positive");
                        b.as_slice().iter().map(|v| v * v).sum::<f64>()
                    }
                };
            }
            Ok(quad_g + quad_t)
        }
        Criterion::C1 => {
            if !layout.is_all_dense() {
                return Err(LayoutError::UnsupportedCriterion { criterion });
            }
            let mut cost = 0.0;
            for (block, span) in layout.blocks().iter().zip(layout.spans()) {
                if let Block::Dense(f) = block {
                    let dt = &pair.dtheta[span.clone()];
                    let dg = &pair.dg[span.clone()];
                    let u = tri_solve(f.matrix(), dt, TriMode::Transposed)
                        .expect("factor diagonal is positive");
                    let pinv_dt = tri_solve(f.matrix(), &u, TriMode::Normal)
                        .expect("factor diagonal is positive");
                    cost += dg
                        .iter()
                        .zip(&pinv_dt)
                        .map(|(g, p)| (g - p) * (g - p))
                        .sum::<f64>();
                }
            }
            Ok(cost)
        }
        Criterion::C2 => {
            let pdg = layout.apply(&pair.dg)?;
            Ok(pair
                .dtheta
                .iter()
                .zip(&pdg)
                .map(|(t, p)| (p - t) * (p - t))
                .sum())
        }
    }
}
