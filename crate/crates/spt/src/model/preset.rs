//! Preset model families with closed-form densities and drift fields, plus
//! the JSON model-file loader.

use super::{
    Covariance, Factor, GlobalField, GvsCov, InvariantDensity, KTilde, Model, PairGrid,
    TractableSpec,
};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::Arc;

/// Pairwise interaction constants: one shared value or a full matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum AlphaPair {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl AlphaPair {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            AlphaPair::Scalar(a) => *a,
            AlphaPair::Matrix(m) => m[i][j],
        }
    }

    fn grid(&self, d: usize) -> Result<PairGrid> {
        match self {
            AlphaPair::Scalar(a) => {
                if *a < 0.0 {
                    return Err(Error::InvalidParameter(
                        "pair constant must be nonnegative".into(),
                    ));
                }
                Ok(PairGrid::constant(d, *a))
            }
            AlphaPair::Matrix(m) => PairGrid::from_matrix(d, m),
        }
    }
}

/// Dirichlet-density market with power factors `f_i(x) = x^{b_i}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DirichletParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: AlphaPair,
}

impl DirichletParams {
    /// The drift exponents `gamma_i = a_i + b_i - 1`.
    pub fn gamma(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a + b - 1.0)
            .collect()
    }

    /// Growth-theory conditions that are not enforced at construction.
    pub fn condition_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for (i, g) in self.gamma().iter().enumerate() {
            if *g <= 1.0 {
                w.push(format!(
                    "gamma_{i} = {g} <= 1: growth-rate theory requires gamma > 1"
                ));
            }
        }
        for (i, b) in self.b.iter().enumerate() {
            if *b < 1.0 {
                w.push(format!("b_{i} = {b} < 1: factor exponents should be >= 1"));
            }
        }
        w
    }
}

/// Generalized volatility-stabilized market.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GvsParams {
    pub gamma: Vec<f64>,
    pub beta: f64,
    pub sigma2: f64,
}

impl GvsParams {
    pub fn condition_warnings(&self) -> Vec<String> {
        let bound = (2.0 * (1.0 - self.beta)).max(1.0);
        self.gamma
            .iter()
            .enumerate()
            .filter(|(_, g)| **g <= bound)
            .map(|(i, g)| {
                format!("gamma_{i} = {g} <= max(2(1-beta), 1) = {bound}: growth conditions fail")
            })
            .collect()
    }
}

/// Logit-normal density with beta-like factors
/// `f_i(x) = x^{a_i} (1-x)^{b_i}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogitNormalParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    /// Constant pair interaction (the density does not pin it down).
    pub pair_alpha: f64,
}

impl LogitNormalParams {
    pub fn condition_warnings(&self) -> Vec<String> {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .filter(|(_, (a, b))| **a <= 2.0 || **b <= 2.0)
            .map(|(i, _)| format!("a_{i}, b_{i} must exceed 2 for the growth conditions"))
            .collect()
    }
}

/// Preset identification carried by models built from parameter sets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Preset {
    Dirichlet(DirichletParams),
    GenVolStab(GvsParams),
    LogitNormal(LogitNormalParams),
}

/// `log B(r) = sum ln Gamma(r_i) - ln Gamma(sum r_i)`.
pub fn ln_beta(r: &[f64]) -> f64 {
    let total: f64 = r.iter().sum();
    r.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(total)
}

impl Model {
    /// Dirichlet preset: `p = Dirichlet(a)`, `f_i(x) = x^{b_i}`, constant
    /// pair interactions.
    pub fn dirichlet(params: DirichletParams) -> Result<Self> {
        let d = params.a.len();
        if d < 2 || params.b.len() != d {
            return Err(Error::InvalidParameter(
                "dirichlet preset needs matching a and b of length >= 2".into(),
            ));
        }
        if params.a.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "dirichlet exponents a must be positive".into(),
            ));
        }
        if params.b.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "factor exponents b must be positive".into(),
            ));
        }
        let spec = TractableSpec::new(
            GlobalField::One,
            params.b.iter().map(|&b| Factor::Power { b }).collect(),
            params.alpha.grid(d)?,
        )?;
        let a = params.a.clone();
        let lb = ln_beta(&a);
        let a_log = a.clone();
        let log_p = Arc::new(move |x: &[f64]| {
            let mut s = -lb;
            for (xi, ai) in x.iter().zip(&a_log) {
                s += (ai - 1.0) * xi.ln();
            }
            s
        });
        let a_grad = a.clone();
        let grad = Arc::new(move |x: &[f64]| {
            x.iter()
                .zip(&a_grad)
                .map(|(xi, ai)| (ai - 1.0) / xi)
                .collect()
        });
        let density = InvariantDensity::new(log_p, Some(grad), true);
        let mut model = Model::from_parts(Covariance::Tractable(spec), density)?;
        model.warnings.extend(params.condition_warnings());
        let proposal = params.a.clone();
        model.set_preset(Preset::Dirichlet(params), proposal);
        Ok(model)
    }

    /// Generalized volatility-stabilized preset with `K~ = 1`.
    pub fn gen_vol_stab(params: GvsParams) -> Result<Self> {
        Model::gen_vol_stab_with_k(params, KTilde::One)
    }

    /// Generalized volatility-stabilized preset with a custom bounded
    /// positive field `K~`.
    pub fn gen_vol_stab_with_k(params: GvsParams, k_tilde: KTilde) -> Result<Self> {
        let d = params.gamma.len();
        if d < 2 {
            return Err(Error::InvalidParameter(
                "gen_vol_stab needs gamma of length >= 2".into(),
            ));
        }
        if !(params.beta > 0.0) || !(params.sigma2 > 0.0) {
            return Err(Error::InvalidParameter(
                "beta and sigma2 must be positive".into(),
            ));
        }
        if params.gamma.iter().any(|&g| g <= 1.0 - 2.0 * params.beta) {
            return Err(Error::InvalidParameter(
                "gamma must exceed 1 - 2 beta for an integrable density".into(),
            ));
        }
        let cov = GvsCov {
            gamma: params.gamma.clone(),
            beta: params.beta,
            sigma2: params.sigma2,
            k_tilde: k_tilde.clone(),
        };
        let gamma = params.gamma.clone();
        let beta = params.beta;
        let gsum: f64 = gamma.iter().sum();
        let b_exp = d as f64 - gsum - 2.0 * (d as f64 - 1.0) * beta;
        let kt = k_tilde.clone();
        let gamma_p = gamma.clone();
        let log_p = Arc::new(move |x: &[f64]| {
            let s: f64 = x.iter().map(|&v| v.powf(2.0 * beta)).sum();
            let mut lp = b_exp * s.ln() / (2.0 * beta);
            for (xi, gi) in x.iter().zip(&gamma_p) {
                lp += (gi + 2.0 * (beta - 1.0)) * xi.ln();
            }
            let k = match &kt {
                KTilde::One => 1.0,
                KTilde::Custom { f, .. } => f(x),
            };
            lp - 2.0 * k.ln()
        });
        let kt_g = k_tilde;
        let gamma_g = gamma.clone();
        let grad = Arc::new(move |x: &[f64]| {
            let s: f64 = x.iter().map(|&v| v.powf(2.0 * beta)).sum();
            let kgrad: Vec<f64> = match &kt_g {
                KTilde::One => vec![0.0; x.len()],
                KTilde::Custom { f, grad_log } => match grad_log {
                    Some(g) => g(x),
                    None => {
                        let f = f.clone();
                        let p =
                            crate::simplex::SimplexPoint::new(x.to_vec()).expect("interior point");
                        crate::simplex::grad_fd(
                            &move |q: &crate::simplex::SimplexPoint| f(q.coords()).ln(),
                            &p,
                            None,
                        )
                        .expect("interior point")
                        .comps()
                        .to_vec()
                    }
                },
            };
            x.iter()
                .zip(&gamma_g)
                .zip(&kgrad)
                .map(|((xi, gi), kg)| {
                    b_exp * xi.powf(2.0 * beta - 1.0) / s + (gi + 2.0 * (beta - 1.0)) / xi
                        - 2.0 * kg
                })
                .collect()
        });
        let density = InvariantDensity::new(log_p, Some(grad), false);
        let mut model = Model::from_parts(Covariance::GenVolStab(cov), density)?;
        model.warnings.extend(params.condition_warnings());
        let proposal: Vec<f64> = params
            .gamma
            .iter()
            .map(|&g| g + 2.0 * params.beta - 1.0)
            .collect();
        model.set_preset(Preset::GenVolStab(params), proposal);
        Ok(model)
    }

    /// Logit-normal preset.
    pub fn logit_normal(params: LogitNormalParams) -> Result<Self> {
        let d = params.a.len();
        if d < 2 || params.b.len() != d || params.mu.len() != d {
            return Err(Error::InvalidParameter(
                "logit_normal needs a, b, mu of equal length >= 2".into(),
            ));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| params.sigma[i][j]);
        if (sigma.clone() - sigma.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidParameter("sigma must be symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("sigma must be positive definite".into()))?;
        let sigma_inv = chol.inverse();
        let ln_det = chol.determinant().ln();

        let spec = TractableSpec::new(
            GlobalField::One,
            params
                .a
                .iter()
                .zip(&params.b)
                .map(|(&a, &b)| Factor::PowerBeta { a, b })
                .collect(),
            AlphaPair::Scalar(params.pair_alpha).grid(d)?,
        )?;

        let mu = DVector::from_vec(params.mu.clone());
        let si = sigma_inv.clone();
        let mu_c = mu.clone();
        let log_p = Arc::new(move |x: &[f64]| {
            let mut logit = DVector::zeros(x.len());
            let mut jac = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                logit[i] = (xi / (1.0 - xi)).ln();
                jac -= xi.ln() + (1.0 - xi).ln();
            }
            let z = &logit - &mu_c;
            let quad = (si.clone() * &z).dot(&z);
            -0.5 * (x.len() as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * ln_det + jac
                - 0.5 * quad
        });
        let si2 = sigma_inv;
        let grad = Arc::new(move |x: &[f64]| {
            let mut logit = DVector::zeros(x.len());
            for (i, &xi) in x.iter().enumerate() {
                logit[i] = (xi / (1.0 - xi)).ln();
            }
            let z = &logit - &mu;
            let w = si2.clone() * z;
            x.iter()
                .enumerate()
                .map(|(i, &xi)| -1.0 / xi + 1.0 / (1.0 - xi) - w[i] / (xi * (1.0 - xi)))
                .collect()
        });
        // the coordinatewise-logit normalizer is not exact on the simplex,
        // so the density is treated as unnormalized
        let density = InvariantDensity::new(log_p, Some(grad), false);
        let mut model = Model::from_parts(Covariance::Tractable(spec), density)?;
        model.warnings.extend(params.condition_warnings());
        model.set_preset(Preset::LogitNormal(params), vec![1.5; d]);
        Ok(model)
    }

    /// Builds the model described by a preset parameter set.
    pub fn from_preset(preset: Preset) -> Result<Self> {
        match preset {
            Preset::Dirichlet(p) => Model::dirichlet(p),
            Preset::GenVolStab(p) => Model::gen_vol_stab(p),
            Preset::LogitNormal(p) => Model::logit_normal(p),
        }
    }
}

// ----- JSON model files ------------------------------------------------

fn get_key<'a>(v: &'a serde_json::Value, key: &str) -> Result<&'a serde_json::Value> {
    v.get(key)
        .ok_or_else(|| Error::InvalidParameter(format!("model file: missing key \"{key}\"")))
}

fn as_usize(v: &serde_json::Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::InvalidParameter(format!("key \"{key}\": expected an integer")))
}

fn as_f64(v: &serde_json::Value, key: &str) -> Result<f64> {
    v.as_f64()
        .filter(|f| f.is_finite())
        .ok_or_else(|| Error::InvalidParameter(format!("key \"{key}\": expected a finite number")))
}

/// Scalar broadcast to length d, or an explicit length-d array.
fn vec_or_scalar(v: &serde_json::Value, key: &str, d: usize) -> Result<Vec<f64>> {
    if let Some(arr) = v.as_array() {
        if arr.len() != d {
            return Err(Error::InvalidParameter(format!(
                "key \"{key}\": expected {d} entries, found {}",
                arr.len()
            )));
        }
        arr.iter().map(|e| as_f64(e, key)).collect()
    } else {
        Ok(vec![as_f64(v, key)?; d])
    }
}

fn matrix(v: &serde_json::Value, key: &str, d: usize) -> Result<Vec<Vec<f64>>> {
    let rows = v.as_array().ok_or_else(|| {
        Error::InvalidParameter(format!("key \"{key}\": expected a {d}x{d} matrix"))
    })?;
    if rows.len() != d {
        return Err(Error::InvalidParameter(format!(
            "key \"{key}\": expected {d} rows, found {}",
            rows.len()
        )));
    }
    rows.iter()
        .map(|r| vec_or_scalar(r, key, d))
        .collect::<Result<Vec<_>>>()
}

/// Parses a model description of the form
/// `{ "preset": "dirichlet" | "gen_vol_stab" | "logit_normal", "d": ...,
/// parameters..., "sigma2": ... }`. Errors cite the offending key.
pub fn model_from_json(text: &str) -> Result<Model> {
    let v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::InvalidParameter(format!("model file is not valid JSON: {e}")))?;
    let preset = get_key(&v, "preset")?
        .as_str()
        .ok_or_else(|| Error::InvalidParameter("key \"preset\": expected a string".into()))?
        .to_string();
    let d = as_usize(get_key(&v, "d")?, "d")?;
    if d < 2 {
        return Err(Error::InvalidParameter(
            "key \"d\": must be at least 2".into(),
        ));
    }
    let sigma2 = match v.get("sigma2") {
        Some(s) => as_f64(s, "sigma2")?,
        None => 1.0,
    };
    match preset.as_str() {
        "dirichlet" => {
            let a = vec_or_scalar(get_key(&v, "a")?, "a", d)?;
            let b = match v.get("b") {
                Some(b) => vec_or_scalar(b, "b", d)?,
                None => vec![1.0; d],
            };
            let alpha = match v.get("alpha_pair") {
                Some(m) => AlphaPair::Matrix(matrix(m, "alpha_pair", d)?),
                None => AlphaPair::Scalar(sigma2),
            };
            Model::dirichlet(DirichletParams { a, b, alpha })
        }
        "gen_vol_stab" => {
            let gamma = vec_or_scalar(get_key(&v, "gamma")?, "gamma", d)?;
            let beta = as_f64(get_key(&v, "beta")?, "beta")?;
            Model::gen_vol_stab(GvsParams {
                gamma,
                beta,
                sigma2,
            })
        }
        "logit_normal" => {
            let a = vec_or_scalar(get_key(&v, "a")?, "a", d)?;
            let b = vec_or_scalar(get_key(&v, "b")?, "b", d)?;
            let mu = match v.get("mu") {
                Some(m) => vec_or_scalar(m, "mu", d)?,
                None => vec![0.0; d],
            };
            let sigma = match v.get("sigma") {
                Some(s) if s.is_array() => matrix(s, "sigma", d)?,
                Some(s) => {
                    let scale = as_f64(s, "sigma")?;
                    (0..d)
                        .map(|i| (0..d).map(|j| if i == j { scale } else { 0.0 }).collect())
                        .collect()
                }
                None => (0..d)
                    .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            };
            Model::logit_normal(LogitNormalParams {
                a,
                b,
                mu,
                sigma,
                pair_alpha: sigma2,
            })
        }
        other => Err(Error::InvalidParameter(format!(
            "key \"preset\": unknown preset \"{other}\" (expected dirichlet, gen_vol_stab or logit_normal)"
        ))),
    }
}
