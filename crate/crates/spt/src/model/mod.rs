//! Market model specification: the product covariance class, the
//! generalized volatility-stabilized covariance, invariant densities, the
//! worst-case drift field and structural diagnostics.

mod diagnostics;
mod preset;

pub(crate) use diagnostics::tangent_trace;
pub use diagnostics::{
    assumption_diagnostics, check_graph_connectivity, is_rank_based_spec, DiagnosticsReport,
    GraphReport, TruncatedIntegral,
};
pub use preset::{
    ln_beta, model_from_json, AlphaPair, DirichletParams, GvsParams, LogitNormalParams, Preset,
};

use crate::error::{Error, Result};
use crate::simplex::{self, SimplexPoint, TangentVector};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// One-dimensional volatility factor on (0, 1).
#[derive(Clone)]
pub enum Factor {
    /// `x^b`
    Power { b: f64 },
    /// `x^a (1-x)^b`
    PowerBeta { a: f64, b: f64 },
    /// Constant factor. Violates the vanishing-at-zero requirement; kept
    /// for structural experiments and degenerate test cases.
    Const(f64),
    /// Arbitrary positive function; derivatives fall back to central
    /// finite differences.
    Custom(ScalarFn),
}

impl Factor {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Factor::Power { b } if *b == 1.0 => x,
            Factor::Power { b } => x.powf(*b),
            Factor::PowerBeta { a, b } => x.powf(*a) * (1.0 - x).powf(*b),
            Factor::Const(c) => *c,
            Factor::Custom(f) => f(x),
        }
    }

    /// Logarithmic derivative `(log f)'`.
    pub fn dlog(&self, x: f64) -> f64 {
        match self {
            Factor::Power { b } => b / x,
            Factor::PowerBeta { a, b } => a / x - b / (1.0 - x),
            Factor::Const(_) => 0.0,
            Factor::Custom(f) => {
                let h = 1e-6 * x.min(1.0 - x);
                ((f(x + h)).ln() - (f(x - h)).ln()) / (2.0 * h)
            }
        }
    }
}

/// Symmetric grid of pair interaction functions, stored once per unordered
/// pair so symmetry holds by construction.
#[derive(Clone)]
pub struct PairGrid {
    d: usize,
    entries: Vec<PairEntry>,
}

#[derive(Clone)]
pub enum PairEntry {
    Const(f64),
    /// Function of the reduced point `x^{-ij}` (coordinates other than i
    /// and j, in increasing index order).
    Custom(FieldFn),
}

impl PairGrid {
    pub fn constant(d: usize, alpha: f64) -> Self {
        let n = d * (d - 1) / 2;
        Self {
            d,
            entries: vec![PairEntry::Const(alpha); n],
        }
    }

    pub fn from_matrix(d: usize, mat: &[Vec<f64>]) -> Result<Self> {
        if mat.len() != d || mat.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter("pair matrix must be d x d".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (mat[i][j] - mat[j][i]).abs() > 1e-14 {
                    return Err(Error::InvalidParameter(format!(
                        "pair matrix must be symmetric; entries ({i},{j}) differ"
                    )));
                }
                if mat[i][j] < 0.0 {
                    return Err(Error::InvalidParameter(
                        "pair interactions must be nonnegative".into(),
                    ));
                }
            }
        }
        let mut grid = Self::constant(d, 0.0);
        for i in 0..d {
            for j in i + 1..d {
                grid.set_const(i, j, mat[i][j]);
            }
        }
        Ok(grid)
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        // index into the upper triangle stored row by row
        lo * self.d - lo * (lo + 1) / 2 + (hi - lo - 1)
    }

    pub fn set_const(&mut self, i: usize, j: usize, alpha: f64) {
        let s = self.slot(i, j);
        self.entries[s] = PairEntry::Const(alpha);
    }

    pub fn set_custom(&mut self, i: usize, j: usize, f: FieldFn) {
        let s = self.slot(i, j);
        self.entries[s] = PairEntry::Custom(f);
    }

    /// Evaluates `f_ij(x^{-ij})`.
    pub fn eval(&self, i: usize, j: usize, x: &SimplexPoint) -> f64 {
        match &self.entries[self.slot(i, j)] {
            PairEntry::Const(a) => *a,
            PairEntry::Custom(f) => {
                let reduced: Vec<f64> = x
                    .coords()
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, &v)| v)
                    .collect();
                f(&reduced)
            }
        }
    }
}

/// The common scale field `g` of the product covariance.
#[derive(Clone)]
pub enum GlobalField {
    One,
    Custom {
        f: FieldFn,
        /// Ambient gradient of `log g`; finite differences when absent.
        grad_log: Option<GradFn>,
    },
}

impl GlobalField {
    pub fn eval(&self, x: &SimplexPoint) -> f64 {
        match self {
            GlobalField::One => 1.0,
            GlobalField::Custom { f, .. } => f(x.coords()),
        }
    }

    fn grad_log(&self, x: &SimplexPoint) -> TangentVector {
        match self {
            GlobalField::One => TangentVector::zero(x.dim()),
            GlobalField::Custom { f, grad_log } => match grad_log {
                Some(g) => TangentVector::new(g(x.coords())),
                None => {
                    let f = f.clone();
                    simplex::grad_fd(&move |p: &SimplexPoint| f(p.coords()).ln(), x, None)
                        .expect("interior point")
                }
            },
        }
    }
}

/// Product-form covariance: `c_ij = -f_ij(x^{-ij}) f_i(x^i) f_j(x^j) g(x)`
/// off the diagonal, diagonal fixed by zero row sums.
#[derive(Clone)]
pub struct TractableSpec {
    pub d: usize,
    pub g: GlobalField,
    pub f: Vec<Factor>,
    pub pair: PairGrid,
}

impl TractableSpec {
    pub fn new(g: GlobalField, f: Vec<Factor>, pair: PairGrid) -> Result<Self> {
        let d = f.len();
        if d < 2 {
            return Err(Error::InvalidParameter("need at least two assets".into()));
        }
        if pair.d != d {
            return Err(Error::InvalidParameter(
                "pair grid dimension does not match factor count".into(),
            ));
        }
        Ok(Self { d, g, f, pair })
    }

    /// Soft validation of the structural requirements on the factors.
    /// Returns human-readable findings rather than failing construction,
    /// so that deliberately degenerate specs can still be diagnosed.
    pub fn validate(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        for (i, f) in self.f.iter().enumerate() {
            let near_zero = f.eval(1e-6);
            if near_zero.abs() > 1e-3 {
                warnings.push(format!(
                    "f_{i}(1e-6) = {near_zero:.3e}; factors should vanish at 0"
                ));
            }
            if f.eval(0.5) <= 0.0 {
                warnings.push(format!("f_{i} is not strictly positive on (0,1)"));
            }
        }
        warnings
    }

    fn covariance(&self, x: &SimplexPoint) -> DMatrix<f64> {
        let d = self.d;
        let g = self.g.eval(x);
        let fv: Vec<f64> = (0..d).map(|i| self.f[i].eval(x[i])).collect();
        let mut c = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i + 1..d {
                let v = -self.pair.eval(i, j, x) * fv[i] * fv[j] * g;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                if j != i {
                    row += c[(i, j)];
                }
            }
            c[(i, i)] = -row;
        }
        c
    }

    /// `log g(x) + sum_i log f_i(x^i)`.
    fn log_gf(&self, x: &SimplexPoint) -> f64 {
        let mut s = self.g.eval(x).ln();
        for i in 0..self.d {
            s += self.f[i].eval(x[i]).ln();
        }
        s
    }

    /// Ambient gradient of `log(g prod f_i)`, which solves `c y = div c`.
    fn c_inv_div_c(&self, x: &SimplexPoint) -> TangentVector {
        let mut y = self.g.grad_log(x).comps().to_vec();
        for i in 0..self.d {
            y[i] += self.f[i].dlog(x[i]);
        }
        TangentVector::new(y)
    }
}

/// How `K~^2` enters the generalized volatility-stabilized covariance.
#[derive(Clone)]
pub enum KTilde {
    One,
    Custom {
        f: FieldFn,
        grad_log: Option<GradFn>,
    },
}

impl KTilde {
    fn eval(&self, x: &SimplexPoint) -> f64 {
        match self {
            KTilde::One => 1.0,
            KTilde::Custom { f, .. } => f(x.coords()),
        }
    }

    fn grad_log(&self, x: &SimplexPoint) -> Vec<f64> {
        match self {
            KTilde::One => vec![0.0; x.dim()],
            KTilde::Custom { f, grad_log } => match grad_log {
                Some(g) => g(x.coords()),
                None => {
                    let f = f.clone();
                    simplex::grad_fd(&move |p: &SimplexPoint| f(p.coords()).ln(), x, None)
                        .expect("interior point")
                        .comps()
                        .to_vec()
                }
            },
        }
    }
}

/// Generalized volatility-stabilized covariance. For `beta != 1/2` this
/// lies outside the product class but still admits an explicit drift
/// potential.
#[derive(Clone)]
pub struct GvsCov {
    pub gamma: Vec<f64>,
    pub beta: f64,
    pub sigma2: f64,
    pub k_tilde: KTilde,
}

impl GvsCov {
    fn d(&self) -> usize {
        self.gamma.len()
    }

    /// `sum_k (x^k)^{2 beta}`.
    fn s2b(&self, x: &SimplexPoint) -> f64 {
        x.coords().iter().map(|&v| v.powf(2.0 * self.beta)).sum()
    }

    fn covariance(&self, x: &SimplexPoint) -> DMatrix<f64> {
        let d = self.d();
        let b = self.beta;
        let k2 = self.k_tilde.eval(x).powi(2);
        let s: f64 = x.coords().iter().map(|&v| v.powf(2.0 * (1.0 - b))).sum();
        let pow: Vec<f64> = x.coords().iter().map(|&v| v.powf(1.0 - 2.0 * b)).collect();
        let mut c = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i + 1..d {
                let v = -self.sigma2 * k2 * x[i] * x[j] * (pow[i] + pow[j] - s);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                if j != i {
                    row += c[(i, j)];
                }
            }
            c[(i, i)] = -row;
        }
        c
    }

    /// Ambient gradient of
    /// `log(K~^2 |x|_{2b}^{2(1+(d-1)b)-d} prod (x^i)^{2(1-b)})`.
    fn c_inv_div_c(&self, x: &SimplexPoint) -> TangentVector {
        let d = self.d() as f64;
        let b = self.beta;
        let s = self.s2b(x);
        let expo = 2.0 + 2.0 * (d - 1.0) * b - d;
        let mut y = self.k_tilde.grad_log(x);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = 2.0 * *yi + expo * x[i].powf(2.0 * b - 1.0) / s + 2.0 * (1.0 - b) / x[i];
        }
        TangentVector::new(y)
    }

    /// `log(|x|_{2b}^{1 - |gamma|_1/2} prod (x^i)^{gamma^i/2})`, the
    /// potential whose gradient is the drift field.
    fn log_ell_potential(&self, x: &SimplexPoint) -> f64 {
        let gsum: f64 = self.gamma.iter().sum();
        let s = self.s2b(x);
        let mut v = (1.0 - 0.5 * gsum) * s.ln() / (2.0 * self.beta);
        for i in 0..self.d() {
            v += 0.5 * self.gamma[i] * x[i].ln();
        }
        v
    }

    fn ell(&self, x: &SimplexPoint) -> TangentVector {
        let gsum: f64 = self.gamma.iter().sum();
        let s = self.s2b(x);
        let comps = (0..self.d())
            .map(|i| {
                (1.0 - 0.5 * gsum) * x[i].powf(2.0 * self.beta - 1.0) / s
                    + 0.5 * self.gamma[i] / x[i]
            })
            .collect();
        TangentVector::new(comps)
    }
}

/// Covariance structure of a model.
#[derive(Clone)]
pub enum Covariance {
    Tractable(TractableSpec),
    GenVolStab(GvsCov),
}

/// Invariant density, possibly known only up to its normalizing constant.
#[derive(Clone)]
pub struct InvariantDensity {
    log_p: FieldFn,
    grad_log_p: Option<GradFn>,
    /// Whether `log_p` includes the exact normalizer.
    pub normalized: bool,
}

impl InvariantDensity {
    pub fn new(log_p: FieldFn, grad_log_p: Option<GradFn>, normalized: bool) -> Self {
        Self {
            log_p,
            grad_log_p,
            normalized,
        }
    }

    pub fn log_p(&self, x: &SimplexPoint) -> f64 {
        (self.log_p)(x.coords())
    }

    pub fn grad_log_p(&self, x: &SimplexPoint) -> TangentVector {
        match &self.grad_log_p {
            Some(g) => TangentVector::new(g(x.coords())),
            None => {
                let f = self.log_p.clone();
                simplex::grad_fd(&move |p: &SimplexPoint| f(p.coords()), x, None)
                    .expect("interior point")
            }
        }
    }
}

/// A market model: covariance structure plus invariant density.
#[derive(Clone)]
pub struct Model {
    d: usize,
    pub cov: Covariance,
    pub density: InvariantDensity,
    /// Preset metadata, used for closed forms and structural checks.
    pub preset: Option<Preset>,
    /// Dirichlet proposal parameters for importance sampling against `p`.
    proposal: Vec<f64>,
    /// Soft findings from construction-time validation.
    pub warnings: Vec<String>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("d", &self.d)
            .field(
                "cov",
                &match &self.cov {
                    Covariance::Tractable(_) => "tractable",
                    Covariance::GenVolStab(_) => "gen_vol_stab",
                },
            )
            .field("preset", &self.preset)
            .finish_non_exhaustive()
    }
}

impl Model {
    /// Assembles a custom model from covariance and density. The proposal
    /// defaults to the uniform Dirichlet unless overridden.
    pub fn from_parts(cov: Covariance, density: InvariantDensity) -> Result<Self> {
        let d = match &cov {
            Covariance::Tractable(t) => t.d,
            Covariance::GenVolStab(g) => g.d(),
        };
        if d < 2 {
            return Err(Error::InvalidParameter("need at least two assets".into()));
        }
        let mut warnings = Vec::new();
        if let Covariance::Tractable(t) = &cov {
            warnings.extend(t.validate());
        }
        Ok(Self {
            d,
            cov,
            density,
            preset: None,
            proposal: vec![1.0; d],
            warnings,
        })
    }

    pub fn with_proposal(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.d || alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidParameter(
                "proposal must be a positive vector of length d".into(),
            ));
        }
        self.proposal = alpha;
        Ok(self)
    }

    pub(crate) fn set_preset(&mut self, preset: Preset, proposal: Vec<f64>) {
        self.preset = Some(preset);
        self.proposal = proposal;
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Dirichlet parameters of the importance-sampling proposal matched to
    /// this model (the invariant density itself when it is a Dirichlet).
    pub fn proposal_alpha(&self) -> &[f64] {
        &self.proposal
    }

    /// The covariance matrix `c(x)`: symmetric, PSD, zero row sums.
    pub fn covariance(&self, x: &SimplexPoint) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Tractable(t) => t.covariance(x),
            Covariance::GenVolStab(g) => g.covariance(x),
        }
    }

    /// Symmetric PSD square root of `c(x)` via eigendecomposition with
    /// eigenvalues floored at zero.
    pub fn sqrt_covariance(&self, x: &SimplexPoint) -> Result<DMatrix<f64>> {
        let c = self.covariance(x);
        psd_sqrt(&c)
    }

    /// Any solution `y` of `c(x) y = div c(x)`, given in closed form.
    pub fn c_inv_div_c(&self, x: &SimplexPoint) -> TangentVector {
        match &self.cov {
            Covariance::Tractable(t) => t.c_inv_div_c(x),
            Covariance::GenVolStab(g) => g.c_inv_div_c(x),
        }
    }

    /// `div c` by central finite differences of the covariance entries
    /// along tangent directions; used to cross-validate the closed form.
    pub fn div_c_fd(&self, x: &SimplexPoint, h: f64) -> Result<DVector<f64>> {
        let d = self.d;
        if x.min_coord() <= h {
            return Err(Error::BoundaryError(
                "point too close to the boundary for the requested step".into(),
            ));
        }
        let shift = |j: usize, i: usize, s: f64| -> DMatrix<f64> {
            let mut c = x.coords().to_vec();
            c[j] += s;
            c[i] -= s;
            self.covariance(&SimplexPoint::new(c).expect("interior shift"))
        };
        let mut div = DVector::zeros(d);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                if j == i {
                    continue;
                }
                let plus = shift(j, i, h);
                let minus = shift(j, i, -h);
                acc += (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
            }
            div[i] = acc;
        }
        Ok(div)
    }

    pub fn log_p(&self, x: &SimplexPoint) -> f64 {
        self.density.log_p(x)
    }

    pub fn grad_log_p(&self, x: &SimplexPoint) -> TangentVector {
        self.density.grad_log_p(x)
    }

    /// The worst-case drift field `l = (grad log p + c^{-1} div c) / 2`.
    pub fn ell(&self, x: &SimplexPoint) -> TangentVector {
        if let Covariance::GenVolStab(g) = &self.cov {
            // closed form; equal to the generic combination, with the
            // K~ contributions cancelling exactly
            return g.ell(x);
        }
        let gp = self.grad_log_p(x);
        let dc = self.c_inv_div_c(x);
        TangentVector::new(
            gp.comps()
                .iter()
                .zip(dc.comps())
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    /// `log R(x)` with `l = grad log R`; for the product class this is
    /// `(log p + log g + sum log f_i) / 2`.
    pub fn log_ell_potential(&self, x: &SimplexPoint) -> f64 {
        match &self.cov {
            Covariance::Tractable(t) => 0.5 * (self.log_p(x) + t.log_gf(x)),
            Covariance::GenVolStab(g) => g.log_ell_potential(x),
        }
    }

    /// Quadratic form `v' c(x) v` of a tangent vector.
    pub fn quad_form(&self, x: &SimplexPoint, v: &TangentVector) -> f64 {
        let c = self.covariance(x);
        quad_form(&c, v.comps())
    }
}

/// `v' c v` for a raw component vector.
pub fn quad_form(c: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += c[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// Symmetric PSD square root with eigenvalue flooring at zero.
///
/// The input is assumed to annihilate the all-ones vector (zero row sums);
/// the result is double-centered so it does too, up to machine precision.
pub fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.nrows() == 2 {
        // rank-one case: c = c11 [[1,-1],[-1,1]] has eigenvalue 2 c11 on
        // (1,-1)/sqrt(2), so the root is sqrt(c11/2) times that pattern
        let s = (c[(0, 0)].max(0.0) / 2.0).sqrt();
        return Ok(DMatrix::from_row_slice(2, 2, &[s, -s, -s, s]));
    }
    let eig = nalgebra::linalg::SymmetricEigen::try_new(c.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalError("eigendecomposition failed".into()))?;
    let vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l > 0.0 { l.sqrt() } else { 0.0 })
        .collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, s) in vals.iter().enumerate() {
        for i in 0..c.nrows() {
            scaled[(i, j)] *= *s;
        }
    }
    let mut s = &scaled * v.transpose();
    let d = c.nrows();
    let row_means: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| s[(i, j)]).sum::<f64>() / d as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / d as f64;
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] += grand - row_means[i] - row_means[j];
        }
    }
    Ok(s)
}
