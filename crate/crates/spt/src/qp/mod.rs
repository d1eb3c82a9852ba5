//! Finite-dimensional approximation of the long-only optimum over concave
//! generating functions: random families of min-log-affine functions, a
//! Monte Carlo quadratic program over the probability simplex, a projected
//! gradient solver with a Frank-Wolfe optimality certificate, and the
//! resulting portfolio.

use crate::error::{Error, Result};
use crate::exec;
use crate::mc::{self, McEstimate};
use crate::model::Model;
use crate::portfolio::{Concavity, GeneratedPortfolio, GrowthRateReport};
use crate::simplex::{self, SimplexPoint, TangentVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A family of exponentially concave functions
/// `phi_m(x) = min_k log(w_mk' x)` with strictly positive hyperplane
/// coefficients.
///
/// Families drawn with the same seed and plane count are nested: the first
/// `M` members do not depend on how many more follow, so refinement means
/// appending.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogAffineFamily {
    pub d: usize,
    /// `coeffs[m][k]` is the k-th hyperplane of the m-th function.
    pub coeffs: Vec<Vec<Vec<f64>>>,
}

impl LogAffineFamily {
    pub fn from_coeffs(coeffs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let d = coeffs
            .first()
            .and_then(|m| m.first())
            .map(|w| w.len())
            .ok_or_else(|| Error::InvalidInput("empty coefficient array".into()))?;
        for m in &coeffs {
            for w in m {
                if w.len() != d || w.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidInput(
                        "hyperplane coefficients must be strictly positive, equal length".into(),
                    ));
                }
            }
        }
        Ok(Self { d, coeffs })
    }

    pub fn n_funcs(&self) -> usize {
        self.coeffs.len()
    }

    /// Index of the active (minimizing) hyperplane, lowest index on ties.
    fn active(&self, m: usize, x: &SimplexPoint) -> usize {
        let mut best = 0;
        let mut best_dot = f64::INFINITY;
        for (k, w) in self.coeffs[m].iter().enumerate() {
            let dot: f64 = w.iter().zip(x.coords()).map(|(wi, xi)| wi * xi).sum();
            if dot < best_dot {
                best_dot = dot;
                best = k;
            }
        }
        best
    }

    /// `phi_m(x) = min_k log(w_mk' x)`.
    pub fn phi(&self, m: usize, x: &SimplexPoint) -> f64 {
        self.coeffs[m]
            .iter()
            .map(|w| {
                w.iter()
                    .zip(x.coords())
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
            .ln()
    }

    /// A version of the supergradient: `w_k* / (w_k*' x)` for the active
    /// hyperplane `k*`. Unique almost everywhere.
    pub fn supergradient(&self, m: usize, x: &SimplexPoint) -> TangentVector {
        let k = self.active(m, x);
        let w = &self.coeffs[m][k];
        let dot: f64 = w.iter().zip(x.coords()).map(|(wi, xi)| wi * xi).sum();
        TangentVector::new(w.iter().map(|wi| wi / dot).collect())
    }
}

/// Draws a family of `m_funcs` functions, each the minimum of `k_planes`
/// hyperplanes whose coefficient vectors are `d` times uniform simplex
/// points. Function `m` has its own RNG stream, so families with the same
/// seed are nested under growing `m_funcs`.
///
/// Note that every coefficient vector drawn this way sums to `d`, so all
/// hyperplanes take the value 1 at the barycenter. For `d = 2` that pins
/// the kink of every member to x = 1/2 and caps how well mixtures can
/// approximate a general concave optimum; see
/// [`generate_family_scaled`] for the enrichment that removes the cap.
pub fn generate_family(
    m_funcs: usize,
    k_planes: usize,
    d: usize,
    seed: u64,
) -> Result<LogAffineFamily> {
    generate_family_scaled(m_funcs, k_planes, d, seed, 1.0)
}

/// [`generate_family`] with an extra log-uniform scale in
/// `[1/scale_span, scale_span]` applied to each hyperplane.
///
/// Scaling a hyperplane leaves its gradient field unchanged but moves the
/// regions where it is active inside the minimum, freeing the kink
/// locations that the normalized construction fixes to a common level
/// set. Every member remains a minimum of log-affine functions, hence an
/// exponentially concave extreme point; this is the family to use when
/// refining towards the concave-generated optimum.
pub fn generate_family_scaled(
    m_funcs: usize,
    k_planes: usize,
    d: usize,
    seed: u64,
    scale_span: f64,
) -> Result<LogAffineFamily> {
    if m_funcs == 0 || k_planes == 0 {
        return Err(Error::InvalidParameter(
            "need at least one function and one hyperplane".into(),
        ));
    }
    if d < 2 {
        return Err(Error::InvalidParameter("need dimension at least 2".into()));
    }
    if !(scale_span >= 1.0) {
        return Err(Error::InvalidParameter(
            "scale span must be at least 1".into(),
        ));
    }
    let log_span = scale_span.ln();
    let coeffs = exec::map_chunks(m_funcs, |m| {
        let mut rng = exec::chunk_rng(seed, m as u64);
        let mut planes = Vec::with_capacity(k_planes);
        for _ in 0..k_planes {
            // d * Dirichlet(1,...,1) via normalized exponentials
            loop {
                let e: Vec<f64> = (0..d)
                    .map(|_| {
                        let u: f64 = rand::Rng::random(&mut rng);
                        -(1.0 - u).ln()
                    })
                    .collect();
                let sum: f64 = e.iter().sum();
                if sum > 0.0 && e.iter().all(|&v| v > 0.0) {
                    let scale = if log_span > 0.0 {
                        rand::Rng::random_range(&mut rng, -log_span..log_span).exp()
                    } else {
                        1.0
                    };
                    planes.push(
                        e.iter()
                            .map(|&v| scale * d as f64 * v / sum)
                            .collect::<Vec<f64>>(),
                    );
                    break;
                }
            }
        }
        planes
    });
    LogAffineFamily::from_coeffs(coeffs)
}

/// Assembled Monte Carlo quadratic program
/// `min over the simplex of mu' Q mu / 2 - mu' r`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub n_samples: usize,
    pub seed: u64,
    /// Smallest eigenvalue of the assembled matrix before flooring.
    pub min_eigenvalue: f64,
    /// Mean of `l' c l` over the same samples: the constant dropped from
    /// the objective, needed to translate objectives into growth rates.
    pub mean_ell_c_ell: McEstimate,
}

struct AssembleChunk {
    q: DMatrix<f64>,
    r: DVector<f64>,
    sw: f64,
    sw2: f64,
    swf: f64,
    sw2f: f64,
    sw2f2: f64,
    bad: Option<usize>,
}

/// Monte Carlo assembly of the quadratic program: samples the invariant
/// density (through the matched proposal) and averages
/// `Q_ij(x) = 2 grad phi_i' c grad phi_j (x)` and
/// `r_i(x) = 2 grad phi_i' c l (x)`.
///
/// The averaged matrix is symmetrized and its eigenvalues floored at zero.
pub fn assemble_qp(m: &Model, fam: &LogAffineFamily, n: usize, seed: u64) -> Result<QpProblem> {
    if fam.d != m.dim() {
        return Err(Error::InvalidInput(
            "family dimension does not match model".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let nf = fam.n_funcs();
    let d = m.dim();
    let (gammas, ref_logw) = mc::proposal_setup(m)?;
    let chunks = exec::chunk_sizes(n);
    let parts: Vec<AssembleChunk> = exec::map_chunks(chunks.len(), |ci| {
        let (idx, len) = chunks[ci];
        let pts = mc::proposal_chunk(m, &gammas, ref_logw, seed, idx, len);
        let mut part = AssembleChunk {
            q: DMatrix::zeros(nf, nf),
            r: DVector::zeros(nf),
            sw: 0.0,
            sw2: 0.0,
            swf: 0.0,
            sw2f: 0.0,
            sw2f2: 0.0,
            bad: None,
        };
        let mut grads = DMatrix::zeros(d, nf);
        for (j, (x, w)) in pts.iter().enumerate() {
            let c = m.covariance(x);
            let ell = m.ell(x);
            for mi in 0..nf {
                let g = fam.supergradient(mi, x);
                for i in 0..d {
                    grads[(i, mi)] = g.comps()[i];
                }
            }
            let ell_v = DVector::from_column_slice(ell.comps());
            let c_ell = &c * &ell_v;
            let c_grads = &c * &grads;
            let f = ell_v.dot(&c_ell);
            if !w.is_finite() || !f.is_finite() || grads.iter().any(|v| !v.is_finite()) {
                part.bad.get_or_insert(idx * exec::CHUNK + j);
                continue;
            }
            // Q(x) = 2 grads' c grads, r(x) = 2 grads' c l
            part.q.gemm_tr(2.0 * w, &grads, &c_grads, 1.0);
            part.r.gemv_tr(2.0 * w, &grads, &c_ell, 1.0);
            part.sw += w;
            part.sw2 += w * w;
            part.swf += w * f;
            part.sw2f += w * w * f;
            part.sw2f2 += w * w * f * f;
        }
        part
    });

    let mut q = DMatrix::zeros(nf, nf);
    let mut r = DVector::zeros(nf);
    let (mut sw, mut sw2, mut swf, mut sw2f, mut sw2f2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &parts {
        if let Some(i) = p.bad {
            return Err(Error::NumericalError(format!(
                "non-finite accumulation at sample {i}"
            )));
        }
        q += &p.q;
        r += &p.r;
        sw += p.sw;
        sw2 += p.sw2;
        swf += p.swf;
        sw2f += p.sw2f;
        sw2f2 += p.sw2f2;
    }
    if !(sw > 0.0) {
        return Err(Error::NumericalError(
            "all importance weights vanished".into(),
        ));
    }
    q /= sw;
    r /= sw;
    // symmetrize, then floor eigenvalues at zero
    q = (&q + &q.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(q.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalError("eigendecomposition of Q failed".into()))?;
    let min_eigenvalue = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let lf = l.max(0.0);
        for i in 0..nf {
            scaled[(i, j)] *= lf;
        }
    }
    q = &scaled * eig.eigenvectors.transpose();
    q = (&q + &q.transpose()) * 0.5;

    let f_mean = swf / sw;
    let var = (sw2f2 - 2.0 * f_mean * sw2f + f_mean * f_mean * sw2).max(0.0) / (sw * sw);
    Ok(QpProblem {
        q,
        r,
        n_samples: n,
        seed,
        min_eigenvalue,
        mean_ell_c_ell: McEstimate {
            value: f_mean,
            stderr: var.sqrt(),
            n,
        },
    })
}

/// Solution of the simplex-constrained quadratic program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    /// Optimal mixture over the family (closed probability simplex).
    pub mu: Vec<f64>,
    /// `mu' Q mu / 2 - mu' r` at the solution.
    pub objective: f64,
    /// Final Frank-Wolfe gap.
    pub fw_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl QpSolution {
    /// Growth-rate value implied by the objective: the quadratic program
    /// minimizes `|l - grad psi|^2` up to the dropped constant, so the
    /// achieved growth rate is `-objective / 2`.
    pub fn lambda_from_objective(&self) -> f64 {
        -0.5 * self.objective
    }
}

/// Minimizes `mu' Q mu / 2 - mu' r` over the probability simplex by
/// monotone projected gradient descent with backtracking, starting from
/// the uniform mixture. Terminates when the Frank-Wolfe gap
/// `max_j (-grad_j) - mu' (-grad)` drops to `tol` (default 1e-8) or after
/// `max_iter` iterations (default 100000), in which case the best iterate
/// is still returned with `converged = false`.
pub fn solve_qp(qp: &QpProblem, tol: Option<f64>, max_iter: Option<usize>) -> Result<QpSolution> {
    let tol = tol.unwrap_or(1e-8);
    let max_iter = max_iter.unwrap_or(100_000);
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let nf = qp.r.len();
    let objective = |mu: &DVector<f64>| 0.5 * (&qp.q * mu).dot(mu) - qp.r.dot(mu);

    let mut mu = DVector::from_element(nf, 1.0 / nf as f64);
    let mut obj = objective(&mu);
    // Lipschitz constant of the gradient = largest eigenvalue
    let lip =
        qp.q.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-30);
    let base_step = 1.0 / lip;
    let mut fw_gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..max_iter {
        iterations = it + 1;
        let grad = &qp.q * &mu - &qp.r;
        let min_grad = grad.iter().cloned().fold(f64::INFINITY, f64::min);
        fw_gap = grad.dot(&mu) - min_grad;
        if fw_gap <= tol {
            converged = true;
            break;
        }
        let mut step = base_step;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = mu
                .iter()
                .zip(grad.iter())
                .map(|(m, g)| m - step * g)
                .collect();
            let proj = simplex::project_to_closed_simplex(&trial)?;
            let cand = DVector::from_vec(proj);
            let cand_obj = objective(&cand);
            if cand_obj <= obj + 1e-14 * (1.0 + obj.abs()) {
                // monotone step; exact stall means a flat face, stop there
                let moved = (&cand - &mu).amax();
                mu = cand;
                let prev = obj;
                obj = cand_obj;
                accepted = true;
                if moved < 1e-16 && (prev - obj).abs() < 1e-16 * (1.0 + prev.abs()) {
                    accepted = false; // no progress possible
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(QpSolution {
        mu: mu.iter().cloned().collect(),
        objective: obj,
        fw_gap,
        iterations,
        converged,
    })
}

/// The portfolio generated by `exp(psi)` with `psi = sum_m mu_m phi_m`:
/// a convex combination of exponentially concave functions, hence itself
/// exponentially concave and long-only.
pub fn qp_portfolio(
    m: &Model,
    fam: &LogAffineFamily,
    sol: &QpSolution,
) -> Result<GeneratedPortfolio> {
    if fam.d != m.dim() {
        return Err(Error::InvalidInput(
            "family dimension does not match model".into(),
        ));
    }
    if sol.mu.len() != fam.n_funcs() {
        return Err(Error::InvalidInput(
            "mixture length does not match family size".into(),
        ));
    }
    let fam1 = Arc::new(fam.clone());
    let fam2 = fam1.clone();
    let mu1 = sol.mu.clone();
    let mu2 = sol.mu.clone();
    let bary = SimplexPoint::barycenter(m.dim());
    let shift: f64 = (0..fam.n_funcs())
        .map(|mi| sol.mu[mi] * fam.phi(mi, &bary))
        .sum();
    Ok(GeneratedPortfolio::from_log_g(
        "qp-mixture",
        Arc::new(move |x| {
            mu1.iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(mi, &w)| w * fam1.phi(mi, x))
                .sum::<f64>()
                - shift
        }),
    )
    .with_grad(Arc::new(move |x| {
        let d = x.dim();
        let mut g = vec![0.0; d];
        for (mi, &w) in mu2.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let sg = fam2.supergradient(mi, x);
            for (gi, si) in g.iter_mut().zip(sg.comps()) {
                *gi += w * si;
            }
        }
        TangentVector::new(g)
    }))
    .with_smooth(false)
    .with_concavity(Concavity::Yes))
}

/// Fresh Monte Carlo estimate of the quadratic-program objective at a
/// given mixture, with a standard error; used for statistical comparisons
/// between families.
pub fn objective_mc(
    m: &Model,
    fam: &LogAffineFamily,
    mu: &[f64],
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    let mu = mu.to_vec();
    let fam = fam.clone();
    mc::expect_p(
        m,
        &move |x: &SimplexPoint| {
            let c = m.covariance(x);
            let ell = m.ell(x);
            let d = x.dim();
            let mut g = vec![0.0; d];
            for (mi, &w) in mu.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let sg = fam.supergradient(mi, x);
                for (gi, si) in g.iter_mut().zip(sg.comps()) {
                    *gi += w * si;
                }
            }
            // psi' c psi - 2 psi' c l, the sampled objective integrand
            let mut quad = 0.0;
            let mut cross = 0.0;
            for i in 0..d {
                let mut ci_g = 0.0;
                let mut ci_l = 0.0;
                for j in 0..d {
                    ci_g += c[(i, j)] * g[j];
                    ci_l += c[(i, j)] * ell.comps()[j];
                }
                quad += g[i] * ci_g;
                cross += g[i] * ci_l;
            }
            quad - 2.0 * cross
        },
        n,
        seed,
    )
}

/// Growth-rate estimate for the mixture portfolio by plugging its gradient
/// into the concave-optimal growth integral. Also reports the lower-bound
/// diagnostic `lambda >= |grad psi|^2 / 2` (soft, within noise).
pub fn lambda_e_estimate(
    m: &Model,
    gp: &GeneratedPortfolio,
    n: usize,
    seed: u64,
) -> Result<GrowthRateReport> {
    crate::portfolio::lambda_mc(m, gp, n, seed)
}

/// Everything needed to reproduce and reuse a QP run, serialized as JSON
/// by the command-line tool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpBundle {
    pub d: usize,
    pub m_funcs: usize,
    pub k_planes: usize,
    pub n_samples: usize,
    pub family_seed: u64,
    pub assembly_seed: u64,
    pub family: LogAffineFamily,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub solution: QpSolution,
    /// Mean of `l' c l` over the assembly samples (the constant dropped
    /// from the objective) and its standard error.
    pub mean_ell_c_ell: McEstimate,
    /// Half that mean: the unconstrained growth-rate estimate.
    pub half_mean_ell_c_ell: f64,
    /// Growth rate implied by the objective.
    pub lambda_e_from_objective: f64,
    /// Independent growth-rate estimate of the mixture portfolio.
    pub lambda_e: McEstimate,
}

impl QpBundle {
    /// Rebuilds the mixture portfolio recorded in the bundle.
    pub fn portfolio(&self, m: &Model) -> Result<GeneratedPortfolio> {
        qp_portfolio(m, &self.family, &self.solution)
    }
}

/// Brute-force oracle for small problems: enumerates every support set of
/// the KKT system and returns the best feasible stationary point. Exact
/// for convex objectives; exponential in the number of variables.
pub fn solve_qp_active_set_oracle(q: &DMatrix<f64>, r: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let nf = r.len();
    if nf > 20 {
        return Err(Error::InvalidParameter(
            "active-set enumeration is limited to 20 variables".into(),
        ));
    }
    let objective = |mu: &DVector<f64>| 0.5 * (q * mu).dot(mu) - r.dot(mu);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u64..(1 << nf) {
        let support: Vec<usize> = (0..nf).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        // solve [Q_S, 1; 1', 0] [mu_S; nu] = [r_S; 1]
        let mut a = DMatrix::zeros(s + 1, s + 1);
        let mut b = DVector::zeros(s + 1);
        for (ii, &i) in support.iter().enumerate() {
            for (jj, &j) in support.iter().enumerate() {
                a[(ii, jj)] = q[(i, j)];
            }
            a[(ii, s)] = 1.0;
            a[(s, ii)] = 1.0;
            b[ii] = r[i];
        }
        b[s] = 1.0;
        let sol = match a.lu().solve(&b) {
            Some(v) => v,
            None => continue,
        };
        let mut mu = DVector::zeros(nf);
        let mut feasible = true;
        for (ii, &i) in support.iter().enumerate() {
            if sol[ii] < -1e-12 {
                feasible = false;
                break;
            }
            mu[i] = sol[ii].max(0.0);
        }
        if !feasible {
            continue;
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            continue;
        }
        let obj = objective(&mu);
        if best.as_ref().is_none_or(|(b0, _)| obj < *b0) {
            best = Some((obj, mu.iter().cloned().collect()));
        }
    }
    best.map(|(obj, mu)| (mu, obj))
        .ok_or_else(|| Error::NumericalError("no feasible stationary point found".into()))
}

#[cfg(test)]
mod tests;
