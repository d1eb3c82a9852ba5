//! Portfolio construction: functionally generated portfolios via the
//! master formula, the closed-form unconstrained optimum, growth-rate
//! estimators and rank-based checks.

mod two_asset;

pub use two_asset::{
    concavity_criterion, solve_two_asset_long_only, sqrt_cp_concavity_check, TwoAssetSolution,
};

use crate::error::{Error, Result};
use crate::exec;
use crate::mc::{self, McEstimate};
use crate::model::{self, DirichletParams, Model, Preset};
use crate::simplex::{self, SimplexPoint, TangentVector};
use std::sync::Arc;

/// Tri-state concavity tag for a generating function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concavity {
    Yes,
    No,
    Unknown,
}

type LogGFn = Arc<dyn Fn(&SimplexPoint) -> f64 + Send + Sync>;
type GradLogGFn = Arc<dyn Fn(&SimplexPoint) -> TangentVector + Send + Sync>;
type HessLogGFn = Arc<dyn Fn(&SimplexPoint) -> nalgebra::DMatrix<f64> + Send + Sync>;

/// Anything that produces portfolio weights in feedback form.
pub trait WeightRule: Send + Sync {
    fn name(&self) -> &str;
    /// Weights at `x`; must sum to 1.
    fn weights(&self, x: &SimplexPoint) -> Vec<f64>;
}

/// A portfolio generated by a function `G = exp(phi)` on the simplex.
#[derive(Clone)]
pub struct GeneratedPortfolio {
    name: String,
    log_g: LogGFn,
    grad: Option<GradLogGFn>,
    /// Ambient Hessian of `phi = log G`, when available analytically.
    hess: Option<HessLogGFn>,
    pub smooth: bool,
    pub concave: Concavity,
}

impl GeneratedPortfolio {
    /// The market portfolio, generated by `G = 1`.
    pub fn market() -> Self {
        Self {
            name: "market".into(),
            log_g: Arc::new(|_| 0.0),
            grad: Some(Arc::new(|x| TangentVector::zero(x.dim()))),
            hess: Some(Arc::new(|x| nalgebra::DMatrix::zeros(x.dim(), x.dim()))),
            smooth: true,
            concave: Concavity::Yes,
        }
    }

    /// Portfolio generated by an arbitrary log-generating function; the
    /// gradient falls back on finite differences.
    pub fn from_log_g(name: impl Into<String>, log_g: LogGFn) -> Self {
        Self {
            name: name.into(),
            log_g,
            grad: None,
            hess: None,
            smooth: true,
            concave: Concavity::Unknown,
        }
    }

    pub fn with_grad(mut self, grad: GradLogGFn) -> Self {
        self.grad = Some(grad);
        self
    }

    pub fn with_hess(mut self, hess: HessLogGFn) -> Self {
        self.hess = Some(hess);
        self
    }

    pub fn with_concavity(mut self, c: Concavity) -> Self {
        self.concave = c;
        self
    }

    pub fn with_smooth(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    /// `G(x) = prod_i (x^i)^{c_i}`, with analytic derivatives. Concave for
    /// nonnegative exponents summing to at most one.
    pub fn power_product(coeffs: Vec<f64>) -> Self {
        let concave = if coeffs.iter().all(|&c| c >= 0.0) && coeffs.iter().sum::<f64>() <= 1.0 {
            Concavity::Yes
        } else {
            Concavity::Unknown
        };
        let c1 = coeffs.clone();
        let c2 = coeffs.clone();
        let c3 = coeffs;
        Self {
            name: "power-product".into(),
            log_g: Arc::new(move |x| c1.iter().zip(x.coords()).map(|(c, xi)| c * xi.ln()).sum()),
            grad: Some(Arc::new(move |x| {
                TangentVector::new(c2.iter().zip(x.coords()).map(|(c, xi)| c / xi).collect())
            })),
            hess: Some(Arc::new(move |x| {
                let d = x.dim();
                let mut h = nalgebra::DMatrix::zeros(d, d);
                for i in 0..d {
                    h[(i, i)] = -c3[i] / (x[i] * x[i]);
                }
                h
            })),
            smooth: true,
            concave,
        }
    }

    /// `G(x) = w' x` for positive weights, with analytic derivatives.
    pub fn linear(w: Vec<f64>) -> Self {
        let w1 = w.clone();
        let w2 = w.clone();
        let w3 = w;
        Self {
            name: "linear".into(),
            log_g: Arc::new(move |x| {
                w1.iter()
                    .zip(x.coords())
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>()
                    .ln()
            }),
            grad: Some(Arc::new(move |x| {
                let dot: f64 = w2.iter().zip(x.coords()).map(|(wi, xi)| wi * xi).sum();
                TangentVector::new(w2.iter().map(|wi| wi / dot).collect())
            })),
            hess: Some(Arc::new(move |x| {
                let d = x.dim();
                let dot: f64 = w3.iter().zip(x.coords()).map(|(wi, xi)| wi * xi).sum();
                let mut h = nalgebra::DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        h[(i, j)] = -w3[i] * w3[j] / (dot * dot);
                    }
                }
                h
            })),
            smooth: true,
            concave: Concavity::Yes,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn log_g(&self, x: &SimplexPoint) -> f64 {
        (self.log_g)(x)
    }

    /// Tangent gradient of `log G` (analytic when supplied, else central
    /// finite differences).
    pub fn grad_log_g(&self, x: &SimplexPoint) -> TangentVector {
        match &self.grad {
            Some(g) => g(x),
            None => {
                let f = self.log_g.clone();
                simplex::grad_fd(&move |p| f(p), x, None).expect("interior point")
            }
        }
    }

    /// `-LG/G` at `x`: the local drift contribution of the generating
    /// function. Requires smoothness; uses the analytic Hessian when
    /// available and tangent finite differences otherwise.
    pub fn neg_lg_over_g(&self, m: &Model, x: &SimplexPoint) -> Result<f64> {
        if !self.smooth {
            return Err(Error::InvalidInput(
                "generating function is not twice differentiable".into(),
            ));
        }
        let c = m.covariance(x);
        let grad = self.grad_log_g(x);
        let quad = model::quad_form(&c, grad.comps());
        let trace = match &self.hess {
            Some(h) => {
                let hm = h(x);
                let d = x.dim();
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += c[(i, j)] * hm[(i, j)];
                    }
                }
                acc
            }
            None => {
                let f = self.log_g.clone();
                let h = 1e-4 * x.min_coord();
                let hess = simplex::hess_fd(&move |p| f(p), x, h)?;
                model::tangent_trace(&c, &hess)
            }
        };
        // LG/G = (sum c_ij (d_ij phi + d_i phi d_j phi)) / 2
        Ok(-0.5 * (trace + quad))
    }

    /// Portfolio weights at `x` via the master formula.
    pub fn weights(&self, x: &SimplexPoint) -> Vec<f64> {
        master_formula_weights(&self.grad_log_g(x), x)
    }
}

impl WeightRule for GeneratedPortfolio {
    fn name(&self) -> &str {
        &self.name
    }

    fn weights(&self, x: &SimplexPoint) -> Vec<f64> {
        GeneratedPortfolio::weights(self, x)
    }
}

/// The master formula: `pi^i = x^i (g_i + 1 - sum_j x^j g_j)` for any
/// representative `g` of the tangent gradient of `log G`. Adding a
/// constant vector to `g` leaves the weights unchanged.
pub fn master_formula_weights(grad: &TangentVector, x: &SimplexPoint) -> Vec<f64> {
    let g = grad.comps();
    let dot: f64 = x.coords().iter().zip(g).map(|(xi, gi)| xi * gi).sum();
    x.coords()
        .iter()
        .zip(g)
        .map(|(xi, gi)| xi * (gi + 1.0 - dot))
        .collect()
}

/// The growth-optimal unconstrained portfolio, generated by
/// `G = exp(log R)` with `l = grad log R`. The additive normalization is
/// fixed by `log G(barycenter) = 0`.
pub fn unconstrained_optimum(m: &Model) -> GeneratedPortfolio {
    let m1 = m.clone();
    let m2 = m.clone();
    let bary = SimplexPoint::barycenter(m.dim());
    let shift = m.log_ell_potential(&bary);
    let mut gp = GeneratedPortfolio::from_log_g(
        "unconstrained",
        Arc::new(move |x| m1.log_ell_potential(x) - shift),
    )
    .with_grad(Arc::new(move |x| m2.ell(x)));
    if let Some(Preset::Dirichlet(p)) = &m.preset {
        let gamma = p.gamma();
        gp = gp.with_hess(Arc::new(move |x| {
            let d = x.dim();
            let mut h = nalgebra::DMatrix::zeros(d, d);
            for i in 0..d {
                h[(i, i)] = -0.5 * gamma[i] / (x[i] * x[i]);
            }
            h
        }));
    }
    gp
}

/// Closed-form optimal growth rate for the Dirichlet preset, in nats per
/// unit time, evaluated through log-gamma.
pub fn lambda_dirichlet_closed_form(p: &DirichletParams) -> Result<f64> {
    let d = p.a.len();
    let gamma = p.gamma();
    for (i, g) in gamma.iter().enumerate() {
        if *g <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "closed-form growth rate needs gamma > 1; gamma_{i} = {g}"
            )));
        }
    }
    let ln_b_a = model::ln_beta(&p.a);
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let alpha = p.alpha.get(i, j);
            if alpha == 0.0 {
                continue;
            }
            let mut r1 = p.a.clone();
            r1[i] += p.b[i] - 2.0;
            r1[j] += p.b[j];
            let mut r2 = p.a.clone();
            r2[i] += p.b[i] - 1.0;
            r2[j] += p.b[j] - 1.0;
            let t1 = gamma[i] * gamma[i] * (model::ln_beta(&r1) - ln_b_a).exp();
            let t2 = gamma[i] * gamma[j] * (model::ln_beta(&r2) - ln_b_a).exp();
            total += alpha * (t1 - t2);
        }
    }
    Ok(total / 8.0)
}

/// Monte Carlo growth-rate estimate of a feedback portfolio under the
/// worst-case dynamics.
#[derive(Debug, Clone)]
pub struct GrowthRateReport {
    /// Closed-form reference value, when the caller knows one.
    pub lambda_closed_form: Option<f64>,
    /// Estimate of the quadratic-form growth integral.
    pub lambda_mc: McEstimate,
    /// Independent estimate via `int (-LG/G) p`, for smooth generators.
    pub ibp_estimate: Option<McEstimate>,
    /// Half the mean of `h' c h`: a lower-bound diagnostic for portfolios
    /// whose gradient equals `h` modulo constants.
    pub half_grad_norm: McEstimate,
    /// Half the mean of `l' c l`: the unconstrained growth-rate estimate.
    pub half_ell_norm: McEstimate,
    pub method: String,
}

impl GrowthRateReport {
    pub fn with_closed_form(mut self, v: f64) -> Self {
        self.lambda_closed_form = Some(v);
        self
    }

    /// Soft consistency check: |closed form - MC| within 4 standard
    /// errors, when a closed form is present.
    pub fn consistent_with_closed_form(&self) -> Option<bool> {
        self.lambda_closed_form
            .map(|cf| (cf - self.lambda_mc.value).abs() <= 4.0 * self.lambda_mc.stderr)
    }
}

/// Estimates the growth rate of `rule` under the worst-case measure:
/// `g = E[l' c l - (l - h)' c (l - h)] / 2` with `h = pi(x)/x`.
///
/// For smooth generated portfolios the integration-by-parts estimator
/// `E[-LG/G]` of the same quantity is computed on the same samples.
pub fn lambda_mc(
    m: &Model,
    rule: &dyn WeightRule,
    n: usize,
    seed: u64,
) -> Result<GrowthRateReport> {
    lambda_mc_inner(m, rule, None, n, seed)
}

/// [`lambda_mc`] with the integration-by-parts cross-estimate for a
/// generated portfolio.
pub fn lambda_mc_generated(
    m: &Model,
    gp: &GeneratedPortfolio,
    n: usize,
    seed: u64,
) -> Result<GrowthRateReport> {
    lambda_mc_inner(m, gp, if gp.smooth { Some(gp) } else { None }, n, seed)
}

fn lambda_mc_inner(
    m: &Model,
    rule: &dyn WeightRule,
    ibp: Option<&GeneratedPortfolio>,
    n: usize,
    seed: u64,
) -> Result<GrowthRateReport> {
    let k = if ibp.is_some() { 4 } else { 3 };
    let ests = mc::expect_p_multi(
        m,
        k,
        &|x| {
            let c = m.covariance(x);
            let ell = m.ell(x);
            let w = rule.weights(x);
            let h: Vec<f64> = w.iter().zip(x.coords()).map(|(wi, xi)| wi / xi).collect();
            let resid: Vec<f64> = h.iter().zip(ell.comps()).map(|(hi, li)| hi - li).collect();
            let ell_c_ell = model::quad_form(&c, ell.comps());
            let resid_q = model::quad_form(&c, &resid);
            let h_c_h = model::quad_form(&c, &h);
            let mut out = vec![0.5 * (ell_c_ell - resid_q), 0.5 * h_c_h, 0.5 * ell_c_ell];
            if let Some(gp) = ibp {
                out.push(gp.neg_lg_over_g(m, x).unwrap_or(f64::NAN));
            }
            out
        },
        n,
        seed,
    )?;
    Ok(GrowthRateReport {
        lambda_closed_form: None,
        lambda_mc: ests[0],
        half_grad_norm: ests[1],
        half_ell_norm: ests[2],
        ibp_estimate: ests.get(3).copied(),
        method: "self-normalized importance sampling against the invariant density".into(),
    })
}

/// Tests whether weights depend on `x` only through its ranking: samples
/// random points and permutations and compares `weights(sigma x)` with the
/// permuted `weights(x)` to 1e-9.
pub fn is_rank_based_portfolio(
    rule: &dyn WeightRule,
    d: usize,
    n_checks: usize,
    seed: u64,
) -> Result<bool> {
    let points = simplex::sample_dirichlet(&vec![1.0; d], n_checks.max(1), seed)?;
    let mut rng = exec::chunk_rng(seed, 0xfeed);
    for x in &points {
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            perm.swap(i, j);
        }
        let xs = x.permute(&perm);
        let w = rule.weights(x);
        let ws = rule.weights(&xs);
        for i in 0..d {
            if (ws[i] - w[perm[i]]).abs() > 1e-9 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
