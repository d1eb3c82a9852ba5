//! Geometry of the open probability simplex: points, rankings, tangent
//! vectors, Euclidean projection, Dirichlet sampling and finite-difference
//! differentials.

use crate::error::{Error, Result};
use crate::exec;
use rand_distr::{Distribution, Gamma};

/// Coordinate floor used when nudging projections into the open simplex.
///
/// Densities and the worst-case drift blow up on the boundary, so all
/// downstream code requires strict interiority.
pub const EPS_FLOOR: f64 = 1e-10;

/// A point of the open simplex: strictly positive coordinates summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Validates and wraps a coordinate vector.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidInput(
                "simplex point needs at least two coordinates".into(),
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        if coords.iter().any(|&c| c <= 0.0) {
            return Err(Error::InvalidInput(
                "simplex point coordinates must be strictly positive".into(),
            ));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "coordinates sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { coords })
    }

    /// The barycenter (1/d, ..., 1/d).
    pub fn barycenter(d: usize) -> Self {
        Self {
            coords: vec![1.0 / d as f64; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Smallest coordinate; distance scale to the boundary.
    pub fn min_coord(&self) -> f64 {
        self.coords.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Applies a permutation: `result[i] = self[perm[i]]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        Self {
            coords: perm.iter().map(|&j| self.coords[j]).collect(),
        }
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

/// Market weights sorted in descending order together with the permutation
/// sending rank to original index.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    /// Coordinates in non-increasing order.
    pub sorted: Vec<f64>,
    /// `perm[k]` is the original index holding rank `k` (0-based). Ties are
    /// broken by the lowest original index.
    pub perm: Vec<usize>,
}

/// Ranks a point; ties go to the lexicographically smallest index.
pub fn rank(x: &SimplexPoint) -> RankVector {
    let mut idx: Vec<usize> = (0..x.dim()).collect();
    idx.sort_by(|&i, &j| {
        x[j].partial_cmp(&x[i])
            .expect("simplex coordinates are finite")
            .then(i.cmp(&j))
    });
    RankVector {
        sorted: idx.iter().map(|&i| x[i]).collect(),
        perm: idx,
    }
}

/// A tangent vector to the simplex, identified modulo multiples of the
/// all-ones vector. Equality is tested on the zero-mean representative.
#[derive(Debug, Clone)]
pub struct TangentVector {
    comps: Vec<f64>,
}

impl TangentVector {
    pub fn new(comps: Vec<f64>) -> Self {
        Self { comps }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            comps: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// Raw components of whatever representative this vector carries.
    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    /// The canonical zero-mean representative.
    pub fn centered(&self) -> Vec<f64> {
        let mean = self.comps.iter().sum::<f64>() / self.comps.len() as f64;
        self.comps.iter().map(|c| c - mean).collect()
    }

    /// Max-norm distance between zero-mean representatives.
    pub fn distance(&self, other: &TangentVector) -> f64 {
        let a = self.centered();
        let b = other.centered();
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Whether the two vectors agree modulo constants within `tol`.
    pub fn approx_eq(&self, other: &TangentVector, tol: f64) -> bool {
        self.dim() == other.dim() && self.distance(other) <= tol
    }
}

/// Exact Euclidean projection onto the closed simplex (sort-based).
///
/// Output coordinates may be exactly zero; see [`project_to_simplex`] for
/// the open-simplex variant.
pub fn project_to_closed_simplex(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::InvalidInput("empty input".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "projection input must be finite".into(),
        ));
    }
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cssv += ui;
        let t = (cssv - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            rho = i + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0);
    Ok(y.iter().map(|&v| (v - theta).max(0.0)).collect())
}

/// Euclidean projection onto the closed simplex followed by a nudge into
/// the open simplex: coordinates are floored at [`EPS_FLOOR`] and the
/// result renormalized.
pub fn project_to_simplex(y: &[f64]) -> Result<SimplexPoint> {
    let mut p = project_to_closed_simplex(y)?;
    for v in &mut p {
        if *v < EPS_FLOOR {
            *v = EPS_FLOOR;
        }
    }
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    SimplexPoint::new(p)
}

/// Draws `n` Dirichlet(alpha) samples via normalized gamma variates.
///
/// Deterministic given `(alpha, n, seed)` and independent of the number of
/// threads: draws are produced in fixed-size chunks, one RNG stream per
/// chunk.
pub fn sample_dirichlet(alpha: &[f64], n: usize, seed: u64) -> Result<Vec<SimplexPoint>> {
    if alpha.len() < 2 {
        return Err(Error::InvalidParameter(
            "dirichlet needs at least two components".into(),
        ));
    }
    if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidParameter(
            "dirichlet parameters must be positive and finite".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;

    let chunks = exec::chunk_sizes(n);
    let blocks = exec::map_chunks(chunks.len(), |k| {
        let (idx, len) = chunks[k];
        let mut rng = exec::chunk_rng(seed, idx as u64);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(dirichlet_draw(&gammas, &mut rng));
        }
        out
    });
    Ok(blocks.into_iter().flatten().collect())
}

fn dirichlet_draw(gammas: &[Gamma<f64>], rng: &mut impl rand::Rng) -> SimplexPoint {
    loop {
        let mut g: Vec<f64> = gammas.iter().map(|gm| gm.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
        // Tiny shape parameters can underflow a gamma draw to exactly zero;
        // retry rather than emit a boundary point.
        if sum > 0.0 && g.iter().all(|&v| v > 0.0) {
            for v in &mut g {
                *v /= sum;
            }
            if let Ok(p) = SimplexPoint::new(g) {
                return p;
            }
        }
    }
}

/// Central finite-difference tangent gradient of `f` at `x`.
///
/// Differentiates along the tangent directions `e_i - e_d`; the returned
/// representative has d-th component 0. `h` defaults to `1e-6 * min(x)`
/// when `None`.
pub fn grad_fd(
    f: &dyn Fn(&SimplexPoint) -> f64,
    x: &SimplexPoint,
    h: Option<f64>,
) -> Result<TangentVector> {
    let d = x.dim();
    let h = h.unwrap_or(1e-6 * x.min_coord());
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    if x.min_coord() <= h {
        return Err(Error::BoundaryError(format!(
            "point within step {h} of the simplex boundary"
        )));
    }
    let mut comps = vec![0.0; d];
    for i in 0..d - 1 {
        let shift = |s: f64| -> Result<f64> {
            let mut c = x.coords().to_vec();
            c[i] += s;
            c[d - 1] -= s;
            Ok(f(&SimplexPoint::new(c)?))
        };
        comps[i] = (shift(h)? - shift(-h)?) / (2.0 * h);
    }
    Ok(TangentVector::new(comps))
}

/// Finite-difference tangent Hessian entry H[k][l] of `f` at `x`, along the
/// directions `e_k - e_d` and `e_l - e_d`, for k, l < d-1.
pub(crate) fn hess_fd(
    f: &dyn Fn(&SimplexPoint) -> f64,
    x: &SimplexPoint,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = x.dim();
    if x.min_coord() <= 2.0 * h {
        return Err(Error::BoundaryError(
            "point too close to the boundary for second differences".into(),
        ));
    }
    let eval = |steps: &[(usize, f64)]| -> Result<f64> {
        let mut c = x.coords().to_vec();
        for &(i, s) in steps {
            c[i] += s;
            c[d - 1] -= s;
        }
        Ok(f(&SimplexPoint::new(c)?))
    };
    let f0 = f(x);
    let mut hess = vec![vec![0.0; d - 1]; d - 1];
    for k in 0..d - 1 {
        hess[k][k] = (eval(&[(k, h)])? - 2.0 * f0 + eval(&[(k, -h)])?) / (h * h);
        for l in 0..k {
            let v =
                (eval(&[(k, h), (l, h)])? - eval(&[(k, h), (l, -h)])? - eval(&[(k, -h), (l, h)])?
                    + eval(&[(k, -h), (l, -h)])?)
                    / (4.0 * h * h);
            hess[k][l] = v;
            hess[l][k] = v;
        }
    }
    Ok(hess)
}
