use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

/// Shape of one block of the primal variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Symmetric positive semidefinite `n x n` matrix.
    Psd(usize),
    /// Nonnegative vector of length `n`.
    Nonneg(usize),
}

impl BlockKind {
    pub fn size(&self) -> usize {
        match self {
            BlockKind::Psd(n) | BlockKind::Nonneg(n) => *n,
        }
    }
}

/// Symmetric coefficient matrix of one block.
///
/// `Sparse` lists entries `(i, j, v)` of a symmetric matrix once; an
/// off-diagonal entry stands for both `(i, j)` and `(j, i)`. Duplicates add.
/// Nonnegative blocks only accept diagonal sparse entries.
#[derive(Clone, Debug, PartialEq)]
pub enum Coeff {
    Dense(RMat),
    Sparse(Vec<(usize, usize, f64)>),
}

impl Coeff {
    pub fn diag(i: usize, v: f64) -> Self {
        Coeff::Sparse(vec![(i, i, v)])
    }

    /// Coefficient whose inner product with `X` is `X_ij`.
    pub fn entry(i: usize, j: usize) -> Self {
        if i == j {
            Coeff::Sparse(vec![(i, i, 1.0)])
        } else {
            Coeff::Sparse(vec![(i, j, 0.5)])
        }
    }

    pub(crate) fn frob_sq(&self) -> f64 {
        match self {
            Coeff::Dense(m) => m.norm_squared(),
            Coeff::Sparse(e) => e.iter().map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v }).sum(),
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        match self {
            Coeff::Dense(m) => *m *= s,
            Coeff::Sparse(e) => e.iter_mut().for_each(|x| x.2 *= s),
        }
    }
}

/// Value of one block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Psd(RMat),
    Nonneg(RVec),
}

impl BlockValue {
    pub fn zeros(kind: BlockKind) -> Self {
        match kind {
            BlockKind::Psd(n) => BlockValue::Psd(RMat::zeros(n, n)),
            BlockKind::Nonneg(n) => BlockValue::Nonneg(RVec::zeros(n)),
        }
    }

    pub fn identity(kind: BlockKind, s: f64) -> Self {
        match kind {
            BlockKind::Psd(n) => BlockValue::Psd(RMat::identity(n, n) * s),
            BlockKind::Nonneg(n) => BlockValue::Nonneg(RVec::from_element(n, s)),
        }
    }

    pub fn as_psd(&self) -> &RMat {
        match self {
            BlockValue::Psd(m) => m,
            BlockValue::Nonneg(_) => panic!("block is a nonnegative vector"),
        }
    }

    pub fn as_nonneg(&self) -> &RVec {
        match self {
            BlockValue::Nonneg(v) => v,
            BlockValue::Psd(_) => panic!("block is a PSD matrix"),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            BlockValue::Psd(m) => m.norm_squared(),
            BlockValue::Nonneg(v) => v.norm_squared(),
        }
    }

    pub fn dot(&self, other: &BlockValue) -> f64 {
        match (self, other) {
            (BlockValue::Psd(a), BlockValue::Psd(b)) => crate::linalg::frob(a, b),
            (BlockValue::Nonneg(a), BlockValue::Nonneg(b)) => a.dot(b),
            _ => panic!("block kinds differ"),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &BlockValue) {
        match (self, other) {
            (BlockValue::Psd(a), BlockValue::Psd(b)) => *a += b * s,
            (BlockValue::Nonneg(a), BlockValue::Nonneg(b)) => *a += b * s,
            _ => panic!("block kinds differ"),
        }
    }

    pub(crate) fn scaled(&self, s: f64) -> BlockValue {
        match self {
            BlockValue::Psd(m) => BlockValue::Psd(m * s),
            BlockValue::Nonneg(v) => BlockValue::Nonneg(v * s),
        }
    }

    /// `<coeff, self>`.
    pub fn inner(&self, coeff: &Coeff) -> f64 {
        match (coeff, self) {
            (Coeff::Dense(c), BlockValue::Psd(x)) => crate::linalg::frob(c, x),
            (Coeff::Sparse(e), BlockValue::Psd(x)) => {
                e.iter().map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { v * (x[(i, j)] + x[(j, i)]) }).sum()
            }
            (Coeff::Sparse(e), BlockValue::Nonneg(x)) => e.iter().map(|&(i, _, v)| v * x[i]).sum(),
            (Coeff::Dense(_), BlockValue::Nonneg(_)) => panic!("dense coefficient on a vector block"),
        }
    }

    /// `self += s * coeff`.
    pub fn add_coeff(&mut self, s: f64, coeff: &Coeff) {
        match (coeff, self) {
            (Coeff::Dense(c), BlockValue::Psd(x)) => *x += c * s,
            (Coeff::Sparse(e), BlockValue::Psd(x)) => {
                for &(i, j, v) in e {
                    x[(i, j)] += s * v;
                    if i != j {
                        x[(j, i)] += s * v;
                    }
                }
            }
            (Coeff::Sparse(e), BlockValue::Nonneg(x)) => {
                for &(i, _, v) in e {
                    x[i] += s * v;
                }
            }
            (Coeff::Dense(_), BlockValue::Nonneg(_)) => panic!("dense coefficient on a vector block"),
        }
    }
}

/// Index of a block within a [`ConicProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<(BlockId, Coeff)>,
    pub rhs: f64,
}

/// Standard primal conic program
///
/// ```text
/// min  sum_b <C_b, X_b>
/// s.t. sum_b <A_ib, X_b> = b_i,   X_b in K_b
/// ```
///
/// with `K_b` the PSD cone or the nonnegative orthant. Its dual is
/// `max b^T y  s.t.  C - sum_i y_i A_i = S in K`.
#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<Option<Coeff>>,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> BlockId {
        self.blocks.push(kind);
        self.objective.push(None);
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_psd(&mut self, n: usize) -> BlockId {
        self.add_block(BlockKind::Psd(n))
    }

    pub fn add_nonneg(&mut self, n: usize) -> BlockId {
        self.add_block(BlockKind::Nonneg(n))
    }

    /// Adds `coeff` to the objective of `block`.
    pub fn add_objective(&mut self, block: BlockId, coeff: Coeff) {
        let slot = &mut self.objective[block.0];
        *slot = Some(match slot.take() {
            None => coeff,
            Some(old) => merge(old, coeff, self.blocks[block.0]),
        });
    }

    pub fn add_constraint(&mut self, terms: Vec<(BlockId, Coeff)>, rhs: f64) {
        self.constraints.push(Constraint { terms, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let check = |kind: BlockKind, c: &Coeff, what: &str| -> Result<()> {
            let n = kind.size();
            match (kind, c) {
                (BlockKind::Psd(_), Coeff::Dense(m)) => {
                    if m.shape() != (n, n) {
                        return Err(Error::Dimension(format!(
                            "{what}: {}x{} coefficient on a {n}x{n} block",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    let asym = (m - m.transpose()).amax();
                    if asym > 1e-10 * (1.0 + m.amax()) {
                        return Err(Error::Dimension(format!("{what}: coefficient not symmetric ({asym:e})")));
                    }
                }
                (BlockKind::Nonneg(_), Coeff::Dense(_)) => {
                    return Err(Error::Dimension(format!("{what}: dense coefficient on a vector block")))
                }
                (kind, Coeff::Sparse(e)) => {
                    for &(i, j, _) in e {
                        if i >= n || j >= n || (matches!(kind, BlockKind::Nonneg(_)) && i != j) {
                            return Err(Error::Dimension(format!(
                                "{what}: entry ({i}, {j}) outside block of size {n}"
                            )));
                        }
                    }
                }
            }
            Ok(())
        };
        for (b, obj) in self.objective.iter().enumerate() {
            if let Some(c) = obj {
                check(self.blocks[b], c, "objective")?;
            }
        }
        for (i, con) in self.constraints.iter().enumerate() {
            for (blk, c) in &con.terms {
                if blk.0 >= self.blocks.len() {
                    return Err(Error::Dimension(format!("constraint {i} references missing block {}", blk.0)));
                }
                check(self.blocks[blk.0], c, &format!("constraint {i}"))?;
            }
            if !con.rhs.is_finite() {
                return Err(Error::Dimension(format!("constraint {i} has non-finite right-hand side")));
            }
        }
        Ok(())
    }
}

fn merge(a: Coeff, b: Coeff, kind: BlockKind) -> Coeff {
    match (a, b) {
        (Coeff::Sparse(mut x), Coeff::Sparse(y)) => {
            x.extend(y);
            Coeff::Sparse(x)
        }
        (a, b) => {
            let mut v = BlockValue::zeros(kind);
            v.add_coeff(1.0, &a);
            v.add_coeff(1.0, &b);
            Coeff::Dense(v.as_psd().clone())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: Status,
    pub x: Vec<BlockValue>,
    pub y: RVec,
    /// Dual slack blocks; these are the PSD certificates.
    pub s: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|p - d| / (1 + |p| + |d|)`.
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn block(&self, id: BlockId) -> &BlockValue {
        &self.x[id.0]
    }
}
