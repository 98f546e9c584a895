//! The outer ADMM loop, binary finalization and fixed-partition designs.

use rayon::prelude::*;
use serde::Serialize;

use super::randomize::repair_cardinality;
use super::subproblems::{penalty, update_a, update_b, update_dual, update_w, AdmmState, Beamformer, DesignContext};
use super::{benchmark_partition, DesignParams, Strategy};
use crate::error::{Error, Result};
use crate::fim::{bcrb, likelihood_fim_general, noise_precision, relaxed_noise_precision, Bcrb, FimBlocks};
use crate::linalg::{CMat, RVec};
use crate::scene::Scene;

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Penalized objective: normalized BCRB plus the binary and consensus
    /// penalties.
    pub objective: f64,
    /// `Tr{Lambda J^{-1}} / Tr{Lambda Sigma_theta}`.
    pub normalized_bcrb: f64,
    /// `Tr{Lambda J^{-1}}` in rad².
    pub weighted_bcrb: f64,
    pub root_bcrb_deg: f64,
    pub a: Vec<f64>,
    pub a_rank_one: bool,
    pub b_rank_one: bool,
    pub stalled: bool,
}

#[derive(Clone, Debug)]
pub struct Design {
    pub strategy: Strategy,
    /// Binary partition, `1` = transmit.
    pub a: RVec,
    pub beamformer: Beamformer,
    pub bcrb: Bcrb,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

impl Design {
    pub fn w(&self) -> &CMat {
        &self.beamformer.w
    }

    pub fn root_bcrb_deg(&self) -> f64 {
        self.bcrb.mean_root_deg()
    }
}

/// Rounds at `threshold` and repairs the cardinality using the fractional
/// values as margins.
pub fn finalize_partition(a: &RVec, threshold: f64, lo: usize, hi: usize) -> RVec {
    let bin = a.map(|v| if v >= threshold { 1.0 } else { 0.0 });
    repair_cardinality(&bin, a, lo, hi)
}

fn true_bcrb(ctx: &DesignContext, a: &RVec, w: &CMat) -> Result<Bcrb> {
    let scene = ctx.scene;
    let r_n = scene.noise_covariance(a, w);
    let precision = noise_precision(&r_n, a, scene.radar_noise)?;
    let b = a.map(|v| 1.0 - v);
    let fl = likelihood_fim_general(&ctx.pm, a, &b, &precision, &(w * w.adjoint()), scene.snapshots);
    bcrb(&FimBlocks::new(fl, &ctx.priors)?, &ctx.params.weights)
}

/// Beamformer design at a fixed binary partition.
///
/// The noise covariance depends on `W` through self-interference, so the
/// relaxation is re-solved with `R_n` refreshed from the previous beamformer
/// and the best design under its own `R_n` is kept.
pub fn solve_beamformer_at(ctx: &DesignContext, a: &RVec) -> Result<(Beamformer, Bcrb)> {
    solve_with_refresh(ctx, a, ctx.params.refresh_passes)
}

fn solve_with_refresh(ctx: &DesignContext, a: &RVec, passes: usize) -> Result<(Beamformer, Bcrb)> {
    let scene = ctx.scene;
    if a.iter().any(|&v| v != 0.0 && v != 1.0) {
        let index = a.iter().position(|&v| v != 0.0 && v != 1.0).unwrap_or(0);
        return Err(Error::NonBinaryPartition { index, value: a[index] });
    }
    let b = a.map(|v| 1.0 - v);
    let mut r_n = scene.noise_covariance(a, &CMat::zeros(scene.n, 1));
    let mut best: Option<(Beamformer, Bcrb)> = None;
    for _ in 0..passes.max(1) {
        let precision = noise_precision(&r_n, a, scene.radar_noise)?;
        let bf = update_w(ctx, a, &b, &precision)?;
        let bc = true_bcrb(ctx, a, &bf.w)?;
        r_n = scene.noise_covariance(a, &bf.w);
        match &best {
            Some((_, old)) if bc.weighted >= old.weighted => break,
            Some((_, old)) => {
                let small = (old.weighted - bc.weighted) <= 1e-4 * old.weighted;
                best = Some((bf, bc));
                if small {
                    break;
                }
            }
            None => best = Some((bf, bc)),
        }
    }
    Ok(best.expect("at least one pass"))
}

/// Alternating ADMM over `W`, `a`, `b` and `mu`, followed by binary
/// finalization and a beamformer re-solve at the final partition.
pub fn run_algorithm1(scene: &Scene, params: DesignParams) -> Result<Design> {
    let ctx = DesignContext::new(scene, params)?;
    let n = scene.n;
    let sigma2 = scene.radar_noise;
    let (rho1, rho2) = (ctx.params.rho1, ctx.params.rho2);
    let lo = scene.k();
    let hi = n - scene.min_receive();

    let mut st = AdmmState::initial(n, sigma2);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    for it in 0..ctx.params.max_iterations {
        let precision = relaxed_noise_precision(&st.r_n, &st.a, sigma2)?;
        let bf = match update_w(&ctx, &st.a, &st.b, &precision) {
            Ok(bf) => bf,
            Err(e) if it > 0 => {
                log::warn!("beamformer step failed at iteration {it}, finalizing: {e}");
                break;
            }
            Err(e) => return Err(e),
        };
        let ua = update_a(&ctx, &st, &bf, &precision, it)?;
        st.a = ua.value;
        let ub = update_b(&ctx, &st, &bf, &precision, it)?;
        st.b = ub.value;
        st.mu = update_dual(&st.mu, &st.a, &st.b, rho2);
        st.r_n = scene.noise_covariance(&st.a, &bf.w);

        let precision = relaxed_noise_precision(&st.r_n, &st.a, sigma2)?;
        let fl = likelihood_fim_general(&ctx.pm, &st.a, &st.b, &precision, &bf.r_w, scene.snapshots);
        let bc = bcrb(&FimBlocks::new(fl, &ctx.priors)?, &ctx.params.weights)?;
        let normalized = bc.weighted / ctx.scaling.reference;
        let objective = normalized + penalty(&st.a, &st.b, &st.mu, rho1, rho2);
        log::debug!("iteration {it}: objective {objective:.6e}, normalized BCRB {normalized:.4e}");
        let prev = trace.last().map(|r| r.objective);
        trace.push(IterationRecord {
            iteration: it,
            objective,
            normalized_bcrb: normalized,
            weighted_bcrb: bc.weighted,
            root_bcrb_deg: bc.mean_root_deg(),
            a: st.a.iter().copied().collect(),
            a_rank_one: ua.rank_one,
            b_rank_one: ub.rank_one,
            stalled: ua.stalled || ub.stalled,
        });
        if let Some(p) = prev {
            if (objective - p).abs() <= ctx.params.tolerance * p.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
    }

    let mut a = finalize_partition(&st.a, ctx.params.threshold, lo, hi);
    let (mut beamformer, mut bcrb) = solve_beamformer_at(&ctx, &a)?;
    if ctx.params.local_search {
        // The fixed layouts are also tried as starting points.
        for s in [Strategy::Even, Strategy::Heu] {
            let Some(alt) = benchmark_partition(s, n) else { continue };
            let ones = alt.iter().filter(|&&v| v == 1.0).count();
            if alt == a || ones < lo || ones > hi {
                continue;
            }
            if let Ok((bf, bc)) = solve_beamformer_at(&ctx, &alt) {
                if bc.weighted < bcrb.weighted {
                    (a, beamformer, bcrb) = (alt, bf, bc);
                }
            }
        }
        (a, beamformer, bcrb) = local_search(&ctx, a, beamformer, bcrb);
    }
    Ok(Design { strategy: Strategy::Prop, a, beamformer, bcrb, trace, converged })
}

/// Best-improvement descent over single flips and transmit/receive swaps
/// that keep `K <= 1^T a <= N - T`. Moves are screened with a single
/// beamformer solve under `R_n` without self-interference; the leading
/// candidates are then re-solved with the full refresh and the first that
/// improves is taken. Moves whose beamformer problem fails are skipped.
pub fn local_search(ctx: &DesignContext, a: RVec, bf: Beamformer, bc: Bcrb) -> (RVec, Beamformer, Bcrb) {
    const CONFIRM: usize = 3;
    let n = ctx.scene.n;
    let (lo, hi) = (ctx.scene.k(), n - ctx.scene.min_receive());
    let mut current = (a, bf, bc);
    for _ in 0..4 * n {
        let a = &current.0;
        let ones = a.iter().filter(|&&v| v == 1.0).count();
        let mut moves: Vec<RVec> = Vec::new();
        for i in 0..n {
            let next = if a[i] == 1.0 { ones - 1 } else { ones + 1 };
            if (lo..=hi).contains(&next) {
                let mut m = a.clone();
                m[i] = 1.0 - m[i];
                moves.push(m);
            }
        }
        for i in (0..n).filter(|&i| a[i] == 1.0) {
            for j in (0..n).filter(|&j| a[j] == 0.0) {
                let mut m = a.clone();
                m[i] = 0.0;
                m[j] = 1.0;
                moves.push(m);
            }
        }
        let mut screened: Vec<(RVec, Beamformer, Bcrb)> = moves
            .into_par_iter()
            .filter_map(|m| solve_with_refresh(ctx, &m, 1).ok().map(|(bf, bc)| (m, bf, bc)))
            .collect();
        screened.sort_by(|x, y| x.2.weighted.total_cmp(&y.2.weighted));
        let target = current.2.weighted * (1.0 - 1e-9);
        let improved = screened.into_iter().take(CONFIRM).find_map(|(m, bf, bc)| {
            let full = if ctx.params.refresh_passes > 1 { solve_beamformer_at(ctx, &m).ok() } else { None };
            let (bf, bc) = match full {
                Some((fbf, fbc)) if fbc.weighted < bc.weighted => (fbf, fbc),
                _ => (bf, bc),
            };
            (bc.weighted < target).then_some((m, bf, bc))
        });
        match improved {
            Some(cand) => current = cand,
            None => break,
        }
    }
    current
}

/// Runs one partition strategy on a scene.
pub fn design(scene: &Scene, strategy: Strategy, params: DesignParams) -> Result<Design> {
    match benchmark_partition(strategy, scene.n) {
        None => run_algorithm1(scene, params),
        Some(a) => {
            let ones = a.iter().filter(|&&v| v == 1.0).count();
            let (lo, hi) = (scene.k(), scene.n - scene.min_receive());
            if ones < lo || ones > hi {
                return Err(Error::Infeasible(format!(
                    "{strategy} partition has {ones} transmit antennas, outside [{lo}, {hi}]"
                )));
            }
            let ctx = DesignContext::new(scene, params)?;
            let (beamformer, bcrb) = solve_beamformer_at(&ctx, &a)?;
            Ok(Design { strategy, a, beamformer, bcrb, trace: Vec::new(), converged: true })
        }
    }
}
