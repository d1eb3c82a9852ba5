//! Adaptive one-dimensional quadrature (Gauss–Kronrod 7–15 panels with
//! recursive bisection).

use crate::error::{Error, Result};

// G7/K15 nodes and weights on [-1, 1]; nodes are symmetric around 0.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = WGK[7] * f(c);
    let mut gauss = WG[3] * f(c);
    for j in 0..7 {
        let x = h * XGK[j];
        let fsum = f(c - x) + f(c + x);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= h;
    gauss *= h;
    (kronrod, (kronrod - gauss).abs())
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// Returns the estimate and an error bound. Panels are bisected until the
/// local error fits the proportional share of the budget; exceeding the
/// depth limit with the budget blown is a `NumericalError`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<(f64, f64)> {
    if !(abs_tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut total = 0.0;
    let mut err_total = 0.0;
    // (a, b, tol, depth) work stack
    let mut stack = vec![(a, b, abs_tol, 0u32)];
    const MAX_DEPTH: u32 = 60;
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (val, err) = gk15(f, lo, hi);
        if !val.is_finite() {
            return Err(Error::NumericalError(format!(
                "integrand not finite on [{lo}, {hi}]"
            )));
        }
        if err <= tol || depth >= MAX_DEPTH {
            if err > tol && depth >= MAX_DEPTH {
                return Err(Error::NumericalError(format!(
                    "quadrature did not converge on [{lo}, {hi}]: error {err} > {tol}"
                )));
            }
            total += val;
            err_total += err;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol, depth + 1));
            stack.push((mid, hi, 0.5 * tol, depth + 1));
        }
    }
    Ok((total, err_total))
}

/// Integrates over `[a, b]` splitting first at the interior `breaks`
/// (kinks of the integrand), each piece to a proportional tolerance.
pub fn integrate_split(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
) -> Result<(f64, f64)> {
    let mut pts = vec![a];
    for &t in breaks {
        if t > a && t < b {
            pts.push(t);
        }
    }
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pieces = pts.len() - 1;
    let mut total = 0.0;
    let mut err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = integrate(f, w[0], w[1], abs_tol / pieces as f64)?;
        total += v;
        err += e;
    }
    Ok((total, err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_polynomial_exactly() {
        let (v, _) = integrate(&|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 4.0 - 4.0 + 2.0, epsilon = 1e-12);
    }

    #[test]
    fn integrates_oscillatory_function() {
        let (v, _) = integrate(&|x: f64| (20.0 * x).sin(), 0.0, 1.0, 1e-10).unwrap();
        let exact = (1.0 - (20.0f64).cos()) / 20.0;
        assert_abs_diff_eq!(v, exact, epsilon = 1e-9);
    }

    #[test]
    fn handles_integrable_endpoint_singularity() {
        // x^(-1/5) on (0,1]: integral 5/4
        let (v, _) = integrate(&|x: f64| x.powf(-0.2), 1e-12, 1.0, 1e-8).unwrap();
        assert_abs_diff_eq!(v, 1.25, epsilon = 1e-6);
    }

    #[test]
    fn split_handles_kinks() {
        let f = |x: f64| (x - 0.3).abs();
        let (v, _) = integrate_split(&f, 0.0, 1.0, &[0.3], 1e-12).unwrap();
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
    }
}
