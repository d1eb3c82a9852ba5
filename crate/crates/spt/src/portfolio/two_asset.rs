//! Explicit solution of the long-only growth problem over feedback
//! portfolios for two assets, and the concavity criterion deciding whether
//! that solution is generated by a concave function.

use super::WeightRule;
use crate::error::{Error, Result};
use crate::model::{Model, Preset};
use crate::quad;
use crate::simplex::SimplexPoint;
use std::sync::Arc;

const EDGE: f64 = 1e-12;

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The optimal long-only feedback portfolio for d = 2.
///
/// `pi1` follows the reduced drift `l~` where the unconstrained optimum is
/// already long-only and saturates at 1 (below `theta1`) or 0 (above
/// `theta2`). The cutoffs are stored in x-coordinate space.
#[derive(Clone)]
pub struct TwoAssetSolution {
    /// Upper edge of the region where all wealth sits in asset 1.
    pub theta1: f64,
    /// Lower edge of the region where all wealth sits in asset 2.
    pub theta2: f64,
    /// Growth rate of the clipped portfolio (nats per unit time).
    pub lambda_long: f64,
    /// Quadrature error bound for `lambda_long`.
    pub lambda_long_err: f64,
    /// Growth rate of the unconstrained optimum, same quadrature.
    pub lambda_unconstrained: f64,
    /// Whether the solution is generated by a concave function.
    pub concave_generated: bool,
    ell_tilde: Curve,
}

impl TwoAssetSolution {
    /// Reduced drift field `l~(x) = (log p~ c~)'(x) / 2`.
    pub fn ell_tilde(&self, x: f64) -> f64 {
        (self.ell_tilde)(x)
    }

    /// The clipped log-generator slope: `l~` limited to `[-1/(1-x), 1/x]`.
    pub fn varphi(&self, x: f64) -> f64 {
        let l = (self.ell_tilde)(x);
        l.clamp(-1.0 / (1.0 - x), 1.0 / x)
    }

    /// Weight of asset 1 at `x = x^1`.
    pub fn pi1(&self, x: f64) -> f64 {
        let l = (self.ell_tilde)(x);
        if l > 1.0 / x {
            1.0
        } else if l < -1.0 / (1.0 - x) {
            0.0
        } else {
            x + x * (1.0 - x) * l
        }
    }
}

impl WeightRule for TwoAssetSolution {
    fn name(&self) -> &str {
        "two-asset-long-only"
    }

    fn weights(&self, x: &SimplexPoint) -> Vec<f64> {
        let p = self.pi1(x[0]);
        vec![p, 1.0 - p]
    }
}

/// Reduced quantities of a two-asset model: `c~`, unnormalized `p~` and
/// `l~` with its derivative.
struct Reduced {
    c_tilde: Curve,
    p_tilde: Curve,
    ell: Curve,
    ell_prime: Curve,
}

fn reduce(m: &Model) -> Result<Reduced> {
    if m.dim() != 2 {
        return Err(Error::InvalidInput(format!(
            "two-asset solver requires d = 2, got d = {}",
            m.dim()
        )));
    }
    let pt = |x: f64| SimplexPoint::new(vec![x, 1.0 - x]).expect("interior point");
    let mc = m.clone();
    let c_tilde: Curve = Arc::new(move |x| mc.covariance(&pt(x))[(0, 0)]);
    let mp = m.clone();
    let p_tilde: Curve = Arc::new(move |x| mp.log_p(&pt(x)).exp());
    let me = m.clone();
    let ell: Curve = Arc::new(move |x| {
        let t = me.ell(&pt(x));
        t.comps()[0] - t.comps()[1]
    });
    let ell_prime: Curve = match &m.preset {
        Some(Preset::Dirichlet(p)) => {
            let g = p.gamma();
            let (g1, g2) = (g[0], g[1]);
            Arc::new(move |x: f64| -0.5 * (g1 / (x * x) + g2 / ((1.0 - x) * (1.0 - x))))
        }
        Some(Preset::GenVolStab(p)) => {
            let (g1, g2, beta) = (p.gamma[0], p.gamma[1], p.beta);
            let gsum = g1 + g2;
            Arc::new(move |x: f64| {
                let y = 1.0 - x;
                let s = x.powf(2.0 * beta) + y.powf(2.0 * beta);
                let diff = x.powf(2.0 * beta - 1.0) - y.powf(2.0 * beta - 1.0);
                let diff_d =
                    (2.0 * beta - 1.0) * (x.powf(2.0 * beta - 2.0) + y.powf(2.0 * beta - 2.0));
                (1.0 - 0.5 * gsum) * (diff_d / s - 2.0 * beta * diff * diff / (s * s))
                    - 0.5 * g1 / (x * x)
                    - 0.5 * g2 / (y * y)
            })
        }
        _ => {
            let e = ell.clone();
            Arc::new(move |x: f64| {
                let h = 1e-6 * x.min(1.0 - x);
                (e(x + h) - e(x - h)) / (2.0 * h)
            })
        }
    };
    Ok(Reduced {
        c_tilde,
        p_tilde,
        ell,
        ell_prime,
    })
}

/// Cutoffs of the clipped solution in x-space: closed forms for the
/// presets, grid scan with bisection refinement otherwise.
fn cutoffs(m: &Model, ell: &Curve) -> (f64, f64) {
    match &m.preset {
        Some(Preset::Dirichlet(p)) => {
            let g = p.gamma();
            let (g1, g2) = (g[0], g[1]);
            let lo = if g1 > 2.0 {
                (g1 - 2.0) / (g1 + g2 - 2.0)
            } else {
                0.0
            };
            let hi = if g2 > 2.0 { g1 / (g1 + g2 - 2.0) } else { 1.0 };
            (lo, hi)
        }
        Some(Preset::GenVolStab(p)) => {
            let (g1, g2, b) = (p.gamma[0], p.gamma[1], p.beta);
            let lo = if g1 > 2.0 {
                let theta = (g2 / (g1 - 2.0)).powf(1.0 / (2.0 * b));
                1.0 / (1.0 + theta)
            } else {
                0.0
            };
            let hi = if g2 > 2.0 {
                let theta = ((g2 - 2.0) / g1).powf(1.0 / (2.0 * b));
                1.0 / (1.0 + theta)
            } else {
                1.0
            };
            (lo, hi)
        }
        _ => {
            let upper_excess = |x: f64| ell(x) - 1.0 / x;
            let lower_excess = |x: f64| ell(x) + 1.0 / (1.0 - x);
            (
                scan_last_root(&upper_excess, 0.0),
                1.0 - scan_last_root(&|x| -lower_excess(1.0 - x), 0.0),
            )
        }
    }
}

/// Largest sign change of `f` (positive to nonpositive) on a fine grid of
/// (0,1), refined by bisection; `default` when `f` never turns positive.
fn scan_last_root(f: &dyn Fn(f64) -> f64, default: f64) -> f64 {
    const N: usize = 4096;
    let grid = |k: usize| (k as f64 + 0.5) / (N as f64 + 1.0);
    let mut last = None;
    let mut prev = f(grid(0));
    for k in 1..N {
        let cur = f(grid(k));
        if prev > 0.0 && cur <= 0.0 {
            last = Some((grid(k - 1), grid(k)));
        }
        prev = cur;
    }
    match last {
        None => default,
        Some((mut lo, mut hi)) => {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Solves the long-only problem over feedback portfolios for a two-asset
/// model. The growth rate is computed by adaptive quadrature (absolute
/// tolerance 1e-8), with the integration interval split at the cutoffs
/// where the integrand has kinks.
pub fn solve_two_asset_long_only(m: &Model) -> Result<TwoAssetSolution> {
    let red = reduce(m)?;
    let (theta1, theta2) = cutoffs(m, &red.ell);

    // normalizer of the reduced density
    let z = if m.density.normalized {
        1.0
    } else {
        let p = red.p_tilde.clone();
        let rough = p(0.5).max(1e-300);
        let (z, _) = quad::integrate(&|x| p(x), EDGE, 1.0 - EDGE, 1e-10 * rough.max(1.0))?;
        if !(z > 0.0) {
            return Err(Error::NumericalError(
                "reduced density has nonpositive mass".into(),
            ));
        }
        z
    };

    let ell = red.ell.clone();
    let c = red.c_tilde.clone();
    let p = red.p_tilde.clone();
    let clipped = move |x: f64| {
        let l = ell(x);
        let phi = l.clamp(-1.0 / (1.0 - x), 1.0 / x);
        // l^2 - (l - phi)^2 = phi (2 l - phi)
        0.5 * phi * (2.0 * l - phi) * c(x) * p(x) / z
    };
    let (lambda_long, lambda_long_err) =
        quad::integrate_split(&clipped, EDGE, 1.0 - EDGE, &[theta1, theta2], 1e-8)?;

    let ell = red.ell.clone();
    let c = red.c_tilde.clone();
    let p = red.p_tilde.clone();
    let unclipped = move |x: f64| {
        let l = ell(x);
        0.5 * l * l * c(x) * p(x) / z
    };
    let (lambda_unconstrained, _) =
        quad::integrate_split(&unclipped, EDGE, 1.0 - EDGE, &[theta1, theta2], 1e-8)?;

    let concave_generated = concavity_from_reduced(&red);

    Ok(TwoAssetSolution {
        theta1,
        theta2,
        lambda_long,
        lambda_long_err,
        lambda_unconstrained,
        concave_generated,
        ell_tilde: red.ell,
    })
}

/// Decides whether the two-asset long-only optimum is generated by a
/// concave function: `l~^2 + l~' <= 0` on the set where the solution is
/// unclipped, evaluated on a fine grid with tolerance 1e-9.
pub fn concavity_criterion(m: &Model) -> Result<bool> {
    let red = reduce(m)?;
    Ok(concavity_from_reduced(&red))
}

fn concavity_from_reduced(red: &Reduced) -> bool {
    const N: usize = 8192;
    let mut max_s = f64::NEG_INFINITY;
    for k in 0..N {
        let x = (k as f64 + 0.5) / N as f64;
        if x <= 1e-9 || x >= 1.0 - 1e-9 {
            continue;
        }
        let l = (red.ell)(x);
        if l >= 1.0 / x || l <= -1.0 / (1.0 - x) {
            continue; // outside the unclipped region
        }
        let s = l * l + (red.ell_prime)(x);
        if s > max_s {
            max_s = s;
        }
    }
    max_s <= 1e-9
}

/// Cross-check route for the concavity criterion: the second derivative of
/// `sqrt(c~ p~)`, estimated by central differences, must be nonpositive on
/// the unclipped region. `tol` is the relative slack allowed for
/// finite-difference noise.
pub fn sqrt_cp_concavity_check(m: &Model, tol: f64) -> Result<bool> {
    let red = reduce(m)?;
    let g = {
        let c = red.c_tilde.clone();
        let p = red.p_tilde.clone();
        move |x: f64| (c(x) * p(x)).sqrt()
    };
    const N: usize = 4096;
    for k in 0..N {
        let x = (k as f64 + 0.5) / N as f64;
        if x <= 1e-4 || x >= 1.0 - 1e-4 {
            continue;
        }
        let l = (red.ell)(x);
        if l >= 1.0 / x || l <= -1.0 / (1.0 - x) {
            continue;
        }
        let h = 1e-5 * x.min(1.0 - x);
        let second = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        if second / g(x) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}
