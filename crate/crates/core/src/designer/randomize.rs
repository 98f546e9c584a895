//! Recovery of a binary-feasible vector from a lifted relaxation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{sym_eig, RMat, RVec};

#[derive(Clone, Debug, PartialEq)]
pub struct Recovered {
    pub value: RVec,
    /// The lifted matrix passed the rank-one test and the closed-form
    /// extraction was used.
    pub rank_one: bool,
}

/// Moves a binary vector into `lo <= 1^T x <= hi`, switching on the entries
/// with the largest `score` first and switching off those with the smallest.
pub fn repair_cardinality(x: &RVec, score: &RVec, lo: usize, hi: usize) -> RVec {
    let mut out = x.clone();
    let mut count = out.iter().filter(|&&v| v == 1.0).count();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));
    for &i in &order {
        if count >= lo {
            break;
        }
        if out[i] == 0.0 {
            out[i] = 1.0;
            count += 1;
        }
    }
    for &i in order.iter().rev() {
        if count <= hi {
            break;
        }
        if out[i] == 1.0 {
            out[i] = 0.0;
            count -= 1;
        }
    }
    out
}

fn round_and_repair(x: &RVec, lo: usize, hi: usize) -> RVec {
    let bin = x.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    repair_cardinality(&bin, x, lo, hi)
}

/// `(1^T X_1 1)^{-1/2} X_1 1`, clipped to the box.
fn closed_form(x1: &RMat) -> RVec {
    let col = x1.column_sum();
    let total = col.sum();
    if total <= 0.0 {
        return RVec::zeros(x1.nrows());
    }
    (col / total.sqrt()).map(|v| v.clamp(0.0, 1.0))
}

/// Recovers a vector from the lifted solution `[[X_1, x], [x^T, 1]]`.
///
/// If `X_1` passes the rank-one test (`lambda_1 / lambda_2 >= ratio`) the
/// closed-form extraction is returned as is. Otherwise `samples` Gaussian
/// draws with mean `x` and covariance `X_1 - x x^T` are rounded, repaired
/// into `lo <= 1^T v <= hi`, and the one with the lowest `objective` is kept;
/// the rounded closed-form vector always takes part.
pub fn recover_vector(
    lifted: &RMat,
    ratio: f64,
    (lo, hi): (usize, usize),
    samples: usize,
    seed: u64,
    objective: impl Fn(&RVec) -> f64,
) -> Recovered {
    let n = lifted.nrows() - 1;
    let x1 = lifted.view((0, 0), (n, n)).into_owned();
    let (vals, _) = sym_eig(&x1);
    let top = vals[n - 1];
    let second = if n > 1 { vals[n - 2].max(0.0) } else { 0.0 };
    if top > 0.0 && (second == 0.0 || top / second >= ratio) {
        return Recovered { value: closed_form(&x1), rank_one: true };
    }

    let naive = round_and_repair(&closed_form(&x1), lo, hi);
    let mut best_val = objective(&naive);
    let mut best = naive;

    let mean = lifted.view((0, n), (n, 1)).column(0).into_owned();
    let cov = &x1 - &mean * mean.transpose();
    let (cv, cq) = sym_eig(&cov);
    let factor = &cq * RMat::from_diagonal(&cv.map(|v| v.max(0.0).sqrt()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let z = RVec::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let draw = &mean + &factor * z;
        let cand = round_and_repair(&draw, lo, hi);
        let val = objective(&cand);
        if val < best_val {
            best_val = val;
            best = cand;
        }
    }
    Recovered { value: best, rank_one: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lift(v: &RVec) -> RMat {
        let n = v.len();
        let mut t = RVec::zeros(n + 1);
        t.rows_mut(0, n).copy_from(v);
        t[n] = 1.0;
        &t * t.transpose()
    }

    #[test]
    fn rank_one_input_returns_closed_form() {
        let a = RVec::from_vec(vec![1.0, 0.0, 1.0, 0.3]);
        let r = recover_vector(&lift(&a), 1e4, (1, 3), 10, 0, |_| 0.0);
        assert!(r.rank_one);
        assert!((r.value - a).norm() < 1e-12);
    }

    #[test]
    fn repair_examples() {
        let x = RVec::from_vec(vec![1.0, 1.0, 1.0, 0.0]);
        let s = RVec::from_vec(vec![0.9, 0.6, 0.7, 0.1]);
        assert_eq!(repair_cardinality(&x, &s, 1, 2).as_slice(), &[1.0, 0.0, 1.0, 0.0]);
        let x = RVec::zeros(4);
        assert_eq!(repair_cardinality(&x, &s, 2, 4).as_slice(), &[1.0, 0.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn randomized_output_is_feasible(seed in 0u64..1000, lo in 0usize..3, extra in 0usize..3) {
            let n = 6;
            let hi = (lo + extra).min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = RMat::from_fn(n + 1, n + 1, |_, _| StandardNormal.sample(&mut rng));
            let mut m = &g * g.transpose();
            let corner = m[(n, n)];
            m /= corner;
            let r = recover_vector(&m, 1e4, (lo, hi), 20, seed, |v| v.sum());
            let count = r.value.iter().filter(|&&v| v == 1.0).count();
            prop_assert!(r.value.iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert!(count >= lo && count <= hi);
        }
    }
}
