use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::problem::SparseSym;
use crate::{Sdp, SdpBackend, SdpError, SdpSolution, SolveStatus};

/// Tuning knobs for [`InteriorPoint`].
#[derive(Debug, Clone)]
pub struct IpmSettings {
    pub max_iterations: usize,
    /// Relative duality gap target.
    pub gap_tolerance: f64,
    /// Relative primal/dual residual target.
    pub feasibility_tolerance: f64,
    /// Norm of the primal iterate beyond which the LMI is declared infeasible.
    pub divergence_threshold: f64,
    /// Stop as soon as the dual iterate is feasible and its objective reaches
    /// this value. Used for margin-seeking feasibility problems.
    pub objective_target: Option<f64>,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 120,
            gap_tolerance: 1e-8,
            feasibility_tolerance: 1e-8,
            divergence_threshold: 1e13,
            objective_target: None,
            verbose: false,
        }
    }
}

/// Primal-dual path-following solver (HKM direction, Mehrotra corrector).
///
/// Works on the pair
///
/// ```text
/// (P) min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0
/// (D) max bᵀy     s.t. Z = C − Σ y_i A_i ⪰ 0
/// ```
///
/// with `C = F0` and `A_i = −F_i` for the LMI `F0 + Σ y_i F_i ⪰ 0`.
#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub settings: IpmSettings,
}

impl InteriorPoint {
    pub fn new(settings: IpmSettings) -> Self {
        Self { settings }
    }
}

struct Block {
    c: DMatrix<f64>,
    a: Vec<(usize, SparseSym)>,
}

impl Block {
    fn dual_slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut z = self.c.clone();
        for (var, coeff) in &self.a {
            coeff.add_scaled_to(&mut z, -y[*var]);
        }
        z
    }
}

/// Iterations without improvement of the best iterate before giving up on
/// reaching the full tolerance.
const STAGNATION_WINDOW: usize = 8;

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in (c + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// Largest `α` with `m + α·d ⪰ 0`, or infinity if unbounded.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l();
    let li_d = l.solve_lower_triangular(d)?;
    let s = l.solve_lower_triangular(&li_d.transpose())?;
    let s = 0.5 * (&s + s.transpose());
    let lmin = SymmetricEigen::new(s).eigenvalues.min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1.0);
    let mut reg = 1e-14 * scale;
    for _ in 0..8 {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    z: Vec<DMatrix<f64>>,
}

impl InteriorPoint {
    fn initial_point(&self, blocks: &[Block], b: &DVector<f64>, y0: Option<&DVector<f64>>) -> Iterate {
        let mut x = Vec::with_capacity(blocks.len());
        let mut z = Vec::with_capacity(blocks.len());
        let feasible_start = y0.and_then(|y0| {
            let zs: Option<Vec<_>> = blocks
                .iter()
                .map(|blk| {
                    let zk = blk.dual_slack(y0);
                    Cholesky::new(zk.clone()).map(|_| zk)
                })
                .collect();
            zs.map(|zs| (y0.clone(), zs))
        });
        for blk in blocks {
            let n = blk.c.nrows() as f64;
            let mut xi: f64 = 10.0f64.max(n.sqrt());
            let mut eta: f64 = 10.0f64.max(n.sqrt());
            let norm_c = blk.c.norm();
            for (var, coeff) in &blk.a {
                let na = coeff.frobenius_norm();
                xi = xi.max(n * (1.0 + b[*var].abs()) / (1.0 + na));
                eta = eta.max((1.0 + na.max(norm_c)) / n.sqrt());
            }
            x.push(DMatrix::identity(blk.c.nrows(), blk.c.nrows()) * xi);
            z.push(DMatrix::identity(blk.c.nrows(), blk.c.nrows()) * eta);
        }
        match feasible_start {
            Some((y, zs)) => Iterate { x, y, z: zs },
            None => Iterate {
                x,
                y: DVector::zeros(b.len()),
                z,
            },
        }
    }
}

impl SdpBackend for InteriorPoint {
    fn name(&self) -> &str {
        "interior-point (HKM, Mehrotra)"
    }

    fn solve_from(&self, problem: &Sdp, y0: Option<&DVector<f64>>) -> Result<SdpSolution, SdpError> {
        let m = problem.nvars();
        let b = problem.objective().clone();
        let blocks: Vec<Block> = problem
            .blocks()
            .iter()
            .filter(|blk| !blk.terms().is_empty())
            .map(|blk| Block {
                c: blk.constant().clone(),
                a: blk.negated_terms(),
            })
            .collect();
        let total_dim: usize = blocks.iter().map(|blk| blk.c.nrows()).sum();
        if total_dim == 0 {
            return Err(SdpError::Numerical("problem has no variable blocks".into()));
        }
        let s = &self.settings;
        let norm_b = b.norm();
        let norm_c = blocks.iter().map(|blk| blk.c.norm_squared()).sum::<f64>().sqrt();

        let mut it = self.initial_point(&blocks, &b, y0);
        let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        // Best dual-feasible iterate seen, kept for graceful exits when the
        // iteration breaks down close to the optimum.
        let mut best: Option<(f64, usize, SdpSolution)> = None;
        let fallback_tol = 1e3 * s.gap_tolerance.max(s.feasibility_tolerance);
        let fallback = |best: Option<(f64, usize, SdpSolution)>, err: SdpError| match best {
            Some((score, _, sol)) if score < fallback_tol => Ok(sol),
            _ => Err(err),
        };

        for iter in 0..s.max_iterations {
            // Residuals.
            let mut ax = DVector::zeros(m);
            let mut rd = Vec::with_capacity(blocks.len());
            let mut pobj = 0.0;
            let mut xz = 0.0;
            let mut dinf2 = 0.0;
            for (k, blk) in blocks.iter().enumerate() {
                for (var, coeff) in &blk.a {
                    ax[*var] += coeff.trace_product(&it.x[k]);
                }
                let r = blk.dual_slack(&it.y) - &it.z[k];
                dinf2 += r.norm_squared();
                rd.push(r);
                pobj += inner(&blk.c, &it.x[k]);
                xz += inner(&it.x[k], &it.z[k]);
            }
            let rp = &b - &ax;
            let dobj = b.dot(&it.y);
            let mu = xz / total_dim as f64;
            let pinf = rp.norm() / (1.0 + norm_b);
            let dinf = dinf2.sqrt() / (1.0 + norm_c);
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            last = (gap, pinf, dinf);

            let xnorm = it.x.iter().map(|x| x.norm()).fold(0.0, f64::max);
            if s.verbose {
                eprintln!(
                    "{iter:4} pobj {pobj:+.8e} dobj {dobj:+.8e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e} |X| {xnorm:.2e}"
                );
            }
            if xnorm > s.divergence_threshold {
                return Err(SdpError::Infeasible { iterations: iter });
            }
            let solution = |status| SdpSolution {
                y: it.y.clone(),
                status,
                iterations: iter,
                primal_objective: pobj,
                dual_objective: dobj,
                relative_gap: gap,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
            };
            if gap < s.gap_tolerance && pinf < s.feasibility_tolerance && dinf < s.feasibility_tolerance {
                return Ok(solution(SolveStatus::Optimal));
            }
            if dinf < 100.0 * s.feasibility_tolerance {
                let score = gap.max(pinf);
                if best.as_ref().is_none_or(|b| score < b.0) {
                    best = Some((score, iter, solution(SolveStatus::NearOptimal)));
                }
            }
            if let Some((score, at, _)) = &best {
                if *score < fallback_tol && iter >= at + STAGNATION_WINDOW {
                    return fallback(best, SdpError::Numerical("stagnated".into()));
                }
            }
            if let Some(target) = s.objective_target {
                if dinf < s.feasibility_tolerance && dobj >= target {
                    return Ok(solution(SolveStatus::Optimal));
                }
            }

            let Some(zinv) = it.z.iter().map(spd_inverse).collect::<Option<Vec<DMatrix<f64>>>>() else {
                return fallback(
                    best,
                    SdpError::Numerical(format!("dual slack lost definiteness at iteration {iter}")),
                );
            };

            // Schur complement M_ij = Σ_k tr(A_ik X_k A_jk Z_k⁻¹).
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for (k, blk) in blocks.iter().enumerate() {
                let n = blk.c.nrows();
                let xk = &it.x[k];
                let zi = &zinv[k];
                let mut t = DMatrix::<f64>::zeros(n, n);
                for (ia, (va, ca)) in blk.a.iter().enumerate() {
                    t.fill(0.0);
                    for &(p, q, v) in ca.entries() {
                        // t += v · X[:,p] · Zinv[q,:]
                        for c in 0..n {
                            let f = v * zi[(q, c)];
                            if f == 0.0 {
                                continue;
                            }
                            let col = xk.column(p);
                            let mut tc = t.column_mut(c);
                            tc.axpy(f, &col, 1.0);
                        }
                    }
                    for (vb, cb) in blk.a[ia..].iter() {
                        let val = cb.trace_product(&t);
                        schur[(*va, *vb)] += val;
                        if va != vb {
                            schur[(*vb, *va)] += val;
                        }
                    }
                }
            }
            // Variables absent from every block keep the matrix singular;
            // anchor them so the solve is well posed.
            for i in 0..m {
                if schur[(i, i)] == 0.0 {
                    schur[(i, i)] = 1.0;
                }
            }
            let Some(chol) = factor_schur(&schur) else {
                return fallback(
                    best,
                    SdpError::Numerical(format!("Schur complement not positive definite at iteration {iter}")),
                );
            };

            let direction = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| {
                let mut rhs = b.clone();
                let mut w = Vec::with_capacity(blocks.len());
                for (k, blk) in blocks.iter().enumerate() {
                    let mut lhs = &it.x[k] * &rd[k];
                    if let Some(corr) = corr {
                        lhs += &corr[k];
                    }
                    let mut wk = &lhs * &zinv[k];
                    wk -= &zinv[k] * sigma_mu;
                    for (var, coeff) in &blk.a {
                        rhs[*var] += coeff.trace_product(&wk);
                    }
                    w.push(wk);
                }
                let dy = chol.solve(&rhs);
                let mut dz = Vec::with_capacity(blocks.len());
                let mut dx = Vec::with_capacity(blocks.len());
                for (k, blk) in blocks.iter().enumerate() {
                    let mut dzk = rd[k].clone();
                    for (var, coeff) in &blk.a {
                        coeff.add_scaled_to(&mut dzk, -dy[*var]);
                    }
                    // dX = σμZ⁻¹ − X − X dZ Z⁻¹ − corr Z⁻¹
                    let mut dxk = &zinv[k] * sigma_mu - &it.x[k];
                    dxk -= &it.x[k] * &dzk * &zinv[k];
                    if let Some(corr) = corr {
                        dxk -= &corr[k] * &zinv[k];
                    }
                    symmetrize(&mut dxk);
                    dz.push(dzk);
                    dx.push(dxk);
                }
                (dx, dy, dz)
            };

            let step_lengths = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| -> Option<(f64, f64)> {
                let mut ap = f64::INFINITY;
                let mut ad = f64::INFINITY;
                for k in 0..blocks.len() {
                    ap = ap.min(max_step(&it.x[k], &dx[k])?);
                    ad = ad.min(max_step(&it.z[k], &dz[k])?);
                }
                Some((ap, ad))
            };

            // Predictor.
            let (dx_a, _dy_a, dz_a) = direction(0.0, None);
            let Some((ap, ad)) = step_lengths(&dx_a, &dz_a) else {
                return fallback(
                    best,
                    SdpError::Numerical(format!("iterate lost definiteness at iteration {iter}")),
                );
            };
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut xz_aff = 0.0;
            for k in 0..blocks.len() {
                let xa = &it.x[k] + &dx_a[k] * ap;
                let za = &it.z[k] + &dz_a[k] * ad;
                xz_aff += inner(&xa, &za);
            }
            let mu_aff = xz_aff / total_dim as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector.
            let corr: Vec<DMatrix<f64>> = dx_a.iter().zip(&dz_a).map(|(dx, dz)| dx * dz).collect();
            let (dx, dy, dz) = direction(sigma * mu, Some(&corr));
            let Some((ap2, ad2)) = step_lengths(&dx, &dz) else {
                return fallback(
                    best,
                    SdpError::Numerical(format!("iterate lost definiteness at iteration {iter}")),
                );
            };
            let gamma = 0.9 + 0.09 * ap.min(ad);
            let ap2 = (gamma * ap2).min(1.0);
            let ad2 = (gamma * ad2).min(1.0);

            for k in 0..blocks.len() {
                it.x[k] += &dx[k] * ap2;
                symmetrize(&mut it.x[k]);
                it.z[k] += &dz[k] * ad2;
                symmetrize(&mut it.z[k]);
            }
            it.y += &dy * ad2;

            if ap2 < 1e-10 && ad2 < 1e-10 {
                break;
            }
        }

        let (gap, pinf, dinf) = last;
        fallback(
            best,
            SdpError::Stalled {
                iterations: s.max_iterations,
                relative_gap: gap,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
            },
        )
    }
}
