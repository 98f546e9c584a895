use super::problem::{BlockId, BlockValue, Coeff, ConicProblem, Status};
use super::solver::{solve_with, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{max_hermitian_defect, min_eig_sym, CMat, RMat, RVec};

/// `H -> [[Re H, -Im H], [Im H, Re H]]`.
pub fn embed_hermitian(h: &CMat) -> Result<RMat> {
    let defect = max_hermitian_defect(h);
    let scale = h.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    if defect > 1e-10 * (1.0 + scale) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(embed_unchecked(h))
}

/// Real embedding without the Hermitian check; callers symmetrize first.
pub fn embed_unchecked(h: &CMat) -> RMat {
    let n = h.nrows();
    RMat::from_fn(2 * n, 2 * n, |i, j| {
        let v = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

/// Inverse of [`embed_hermitian`] that averages the redundant copies.
pub fn hermitian_from_embedding(x: &RMat) -> CMat {
    let n = x.nrows() / 2;
    CMat::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(n + i, n + j)]);
        let im = 0.5 * (x[(n + i, j)] - x[(i, n + j)]);
        num_complex::Complex64::new(re, im)
    })
}

/// Epigraph of `Tr{Lambda U^{-1}}`: a `2T` PSD block `Y = [[V, I], [I, U]]`.
///
/// The block contributes `sum_i lambda_i V_ii` to the objective and pins its
/// off-diagonal block to the identity. Callers tie `U` to their own
/// constraints through [`Epigraph::u_entry`].
#[derive(Clone, Copy, Debug)]
pub struct Epigraph {
    pub block: BlockId,
    pub dim: usize,
}

impl Epigraph {
    /// Coefficient picking `U_ij` out of the epigraph block.
    pub fn u_entry(&self, i: usize, j: usize) -> (BlockId, Coeff) {
        (self.block, Coeff::entry(self.dim + i, self.dim + j))
    }

    pub fn u_value(&self, x: &BlockValue) -> RMat {
        let y = x.as_psd();
        y.view((self.dim, self.dim), (self.dim, self.dim)).into_owned()
    }

    pub fn v_value(&self, x: &BlockValue) -> RMat {
        let y = x.as_psd();
        y.view((0, 0), (self.dim, self.dim)).into_owned()
    }
}

pub fn epigraph_inverse_trace(problem: &mut ConicProblem, weights: &RVec) -> Epigraph {
    let t = weights.len();
    let block = problem.add_psd(2 * t);
    problem.add_objective(block, Coeff::Sparse((0..t).map(|i| (i, i, weights[i])).collect()));
    for i in 0..t {
        for j in 0..t {
            problem.add_constraint(vec![(block, Coeff::entry(i, t + j))], if i == j { 1.0 } else { 0.0 });
        }
    }
    Epigraph { block, dim: t }
}

/// One LMI block `F_0 + sum_i x_i F_i >= 0`.
#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub f0: RMat,
    pub fi: Vec<RMat>,
}

/// `min c^T x  s.t.  F_0^k + sum_i x_i F_i^k >= 0,  g_j^T x <= h_j`.
///
/// Solved as the dual of a standard-form program, so `x` has no equality
/// constraints of its own; encode them as two inequalities if needed.
#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    pub c: RVec,
    pub blocks: Vec<LmiBlock>,
    pub inequalities: Vec<(RVec, f64)>,
}

#[derive(Clone, Debug)]
pub struct LmiSolution {
    pub status: Status,
    pub x: RVec,
    pub objective: f64,
    pub relative_gap: f64,
    /// Smallest eigenvalue of each LMI at `x`.
    pub block_min_eigs: Vec<f64>,
}

impl LmiProblem {
    pub fn evaluate(&self, x: &RVec) -> Vec<RMat> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut f = blk.f0.clone();
                for (xi, fi) in x.iter().zip(&blk.fi) {
                    f += fi * *xi;
                }
                f
            })
            .collect()
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<LmiSolution> {
        let m = self.c.len();
        for blk in &self.blocks {
            if blk.fi.len() != m {
                return Err(Error::Dimension(format!("LMI block has {} matrices for {m} variables", blk.fi.len())));
            }
        }
        // Dual slack S = C - sum y_i A_i reproduces the LMI with y = -x:
        // A_i = (F_i, -g_i), b = c.
        let mut p = ConicProblem::new();
        let ids: Vec<BlockId> = self.blocks.iter().map(|b| p.add_psd(b.f0.nrows())).collect();
        let lp = (!self.inequalities.is_empty()).then(|| p.add_nonneg(self.inequalities.len()));
        for (blk, id) in self.blocks.iter().zip(&ids) {
            p.add_objective(*id, Coeff::Dense(blk.f0.clone()));
        }
        if let Some(lp) = lp {
            p.add_objective(
                lp,
                Coeff::Sparse(self.inequalities.iter().enumerate().map(|(j, (_, h))| (j, j, *h)).collect()),
            );
        }
        for i in 0..m {
            let mut terms: Vec<(BlockId, Coeff)> =
                self.blocks.iter().zip(&ids).map(|(blk, id)| (*id, Coeff::Dense(blk.fi[i].clone()))).collect();
            if let Some(lp) = lp {
                terms.push((
                    lp,
                    Coeff::Sparse(self.inequalities.iter().enumerate().map(|(j, (g, _))| (j, j, -g[i])).collect()),
                ));
            }
            p.add_constraint(terms, self.c[i]);
        }
        let sol = solve_with(&p, opts)?;
        let x = -&sol.y;
        let block_min_eigs = self.evaluate(&x).iter().map(min_eig_sym).collect();
        Ok(LmiSolution {
            status: sol.status,
            objective: self.c.dot(&x),
            x,
            relative_gap: sol.relative_gap,
            block_min_eigs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, sym_eig};

    #[test]
    fn embedding_examples() {
        let id = embed_hermitian(&CMat::identity(3, 3)).unwrap();
        assert_eq!(id, RMat::identity(6, 6));
        let h = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]);
        let e = embed_hermitian(&h).unwrap();
        let (vals, _) = sym_eig(&e);
        let expect = [0.0, 0.0, 2.0, 2.0];
        for (v, x) in vals.iter().zip(expect) {
            assert!((v - x).abs() < 1e-12);
        }
        assert!((e.trace() - 2.0 * h.trace().re).abs() < 1e-12);
        let back = hermitian_from_embedding(&e);
        assert!((back - h).norm() < 1e-15);
    }

    #[test]
    fn embedding_rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(embed_hermitian(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn scalar_lmi_with_bound() {
        // min x  s.t. [x] >= 0, x >= 2
        let lmi = LmiProblem {
            c: RVec::from_vec(vec![1.0]),
            blocks: vec![LmiBlock { f0: RMat::zeros(1, 1), fi: vec![RMat::identity(1, 1)] }],
            inequalities: vec![(RVec::from_vec(vec![-1.0]), -2.0)],
        };
        let sol = lmi.solve(&SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-6, "{}", sol.x[0]);
    }
}
