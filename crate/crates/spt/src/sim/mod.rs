//! Simulation of market weights under the worst-case dynamics, wealth
//! integration for feedback portfolios, pathwise growth rates and capital
//! distribution curves.

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{AlphaPair, Covariance, Model, Preset};
use crate::portfolio::WeightRule;
use crate::simplex::{self, SimplexPoint};
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// How the diffusion term is factored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NoiseModel {
    /// Symmetric PSD square root of `c(x)` (matches the dynamics exactly).
    #[default]
    SpectralSqrt,
    /// Explicit factor for the volatility-stabilized family
    /// (`f_i(x) = x`, constant pair interactions): equal in law, cheaper.
    VolStabFactor,
}

/// Time-stepping configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Record every `record_stride`-th step (plus the initial state).
    pub record_stride: usize,
    pub noise: NoiseModel,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, seed: u64) -> Self {
        Self {
            dt,
            t_max,
            seed,
            record_stride: 1,
            noise: NoiseModel::SpectralSqrt,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    fn validate(&self) -> Result<usize> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.t_max < self.dt && self.t_max != 0.0 {
            return Err(Error::InvalidParameter("t_max must be at least dt".into()));
        }
        Ok((self.t_max / self.dt).round() as usize)
    }
}

/// Market-weight states recorded along one path.
#[derive(Debug, Clone)]
pub struct RecordedPath {
    pub times: Vec<f64>,
    pub states: Vec<SimplexPoint>,
    /// Steps whose pre-projection state left the closed simplex.
    pub boundary_hits: usize,
    pub n_steps: usize,
}

/// Log relative wealth along one path for one portfolio.
#[derive(Debug, Clone)]
pub struct WealthPath {
    pub name: String,
    pub times: Vec<f64>,
    pub log_v: Vec<f64>,
    /// Steps where the portfolio return hit the -100% guard.
    pub guard_trips: usize,
    pub n_steps: usize,
    /// Terminal growth estimate `log V_T / T`.
    pub growth: f64,
    /// Batch-means standard error of the growth estimate (20 batches).
    pub growth_stderr: f64,
}

impl WealthPath {
    /// Whether guard trips exceeded 0.1% of steps, suggesting the step
    /// size is too coarse.
    pub fn step_size_warning(&self) -> bool {
        self.n_steps > 0 && (self.guard_trips as f64) > 1e-3 * self.n_steps as f64
    }
}

struct Stepper<'a> {
    m: &'a Model,
    dt: f64,
    sqrt_dt: f64,
    noise: NoiseModel,
    vol_scale: Option<f64>,
}

impl<'a> Stepper<'a> {
    fn new(m: &'a Model, cfg: &SimConfig) -> Result<Self> {
        let vol_scale = match cfg.noise {
            NoiseModel::SpectralSqrt => None,
            NoiseModel::VolStabFactor => {
                let scale = vol_stab_scale(m).ok_or_else(|| {
                    Error::InvalidParameter(
                        "the factor noise model requires a volatility-stabilized preset \
                         (dirichlet with unit factor exponents and one shared pair constant)"
                            .into(),
                    )
                })?;
                Some(scale.sqrt())
            }
        };
        Ok(Self {
            m,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            noise: cfg.noise,
            vol_scale,
        })
    }

    /// One Euler step with externally supplied standard normal draws.
    /// Returns the new state and whether projection had to pull the raw
    /// update back from outside the closed simplex.
    fn step(&self, x: &SimplexPoint, z: &[f64]) -> Result<(SimplexPoint, bool)> {
        let d = x.dim();
        let c = self.m.covariance(x);
        let ell = self.m.ell(x);
        let ell_centered = ell.centered();
        let mut raw = x.coords().to_vec();
        // drift c l dt
        for i in 0..d {
            let mut drift = 0.0;
            for j in 0..d {
                drift += c[(i, j)] * ell_centered[j];
            }
            raw[i] += drift * self.dt;
        }
        match self.noise {
            NoiseModel::SpectralSqrt => {
                let sigma = crate::model::psd_sqrt(&c)?;
                let zv = DVector::from_column_slice(z);
                let noise = sigma * zv;
                for i in 0..d {
                    raw[i] += self.sqrt_dt * noise[i];
                }
            }
            NoiseModel::VolStabFactor => {
                // S_ij = scale * sqrt(x_j) (delta_ij - x_i), S S' = c
                let scale = self.vol_scale.expect("validated at construction");
                let sq: Vec<f64> = x.coords().iter().map(|&v| v.sqrt()).collect();
                let dot: f64 = sq.iter().zip(z).map(|(s, zi)| s * zi).sum();
                for i in 0..d {
                    raw[i] += self.sqrt_dt * scale * (sq[i] * z[i] - x[i] * dot);
                }
            }
        }
        for v in &raw {
            if !v.is_finite() {
                return Err(Error::NumericalError("non-finite state in SDE step".into()));
            }
        }
        let outside = raw.iter().any(|&v| v <= 0.0) || {
            let s: f64 = raw.iter().sum();
            (s - 1.0).abs() > 1e-9
        };
        Ok((simplex::project_to_simplex(&raw)?, outside))
    }
}

/// `sigma^2` when the model is the plain volatility-stabilized family.
fn vol_stab_scale(m: &Model) -> Option<f64> {
    match (&m.preset, &m.cov) {
        (Some(Preset::Dirichlet(p)), Covariance::Tractable(_)) => {
            if p.b.iter().all(|&b| b == 1.0) {
                match &p.alpha {
                    AlphaPair::Scalar(a) => Some(*a),
                    AlphaPair::Matrix(_) => None,
                }
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Simulates the worst-case dynamics from `x0`, recording every
/// `record_stride`-th state.
pub fn simulate_weights(m: &Model, x0: &SimplexPoint, cfg: &SimConfig) -> Result<RecordedPath> {
    let (path, _) = simulate_with_wealth(m, x0, cfg, &[])?;
    Ok(path)
}

/// Simulates one market path and integrates relative wealth for each
/// portfolio along it (common random numbers by construction).
///
/// Wealth uses the exactly self-financing discrete update
/// `log V += log(1 + sum_i pi^i dX^i / X^i)`, with the argument of the
/// logarithm floored at 1e-12 (trips are counted per portfolio).
pub fn simulate_with_wealth(
    m: &Model,
    x0: &SimplexPoint,
    cfg: &SimConfig,
    portfolios: &[&dyn WeightRule],
) -> Result<(RecordedPath, Vec<WealthPath>)> {
    if x0.dim() != m.dim() {
        return Err(Error::InvalidInput(
            "x0 dimension does not match model".into(),
        ));
    }
    let n_steps = cfg.validate()?;
    let stepper = Stepper::new(m, cfg)?;
    let mut rng = exec::chunk_rng(cfg.seed, 0);
    let d = m.dim();

    let mut x = x0.clone();
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut boundary_hits = 0;
    let mut log_v = vec![0.0f64; portfolios.len()];
    let mut guard = vec![0usize; portfolios.len()];
    let mut wealth_records: Vec<Vec<f64>> = vec![vec![0.0]; portfolios.len()];

    let mut z = vec![0.0f64; d];
    for step_idx in 0..n_steps {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let (x_new, outside) = stepper.step(&x, &z).map_err(|e| match e {
            Error::NumericalError(msg) => Error::NumericalError(format!("{msg} (step {step_idx})")),
            other => other,
        })?;
        if outside {
            boundary_hits += 1;
        }
        for (pi, rule) in portfolios.iter().enumerate() {
            let w = rule.weights(&x);
            let mut ret = 0.0;
            for i in 0..d {
                ret += w[i] * (x_new[i] - x[i]) / x[i];
            }
            if ret <= -1.0 + 1e-12 {
                ret = -1.0 + 1e-12;
                guard[pi] += 1;
            }
            log_v[pi] += ret.ln_1p();
        }
        x = x_new;
        if (step_idx + 1) % cfg.record_stride == 0 || step_idx + 1 == n_steps {
            times.push((step_idx + 1) as f64 * cfg.dt);
            states.push(x.clone());
            for (pi, rec) in wealth_records.iter_mut().enumerate() {
                rec.push(log_v[pi]);
            }
        }
    }

    let path = RecordedPath {
        times: times.clone(),
        states,
        boundary_hits,
        n_steps,
    };
    let wealth = portfolios
        .iter()
        .enumerate()
        .map(|(pi, rule)| {
            let (growth, growth_stderr) = growth_rate(&times, &wealth_records[pi]);
            WealthPath {
                name: rule.name().to_string(),
                times: times.clone(),
                log_v: wealth_records[pi].clone(),
                guard_trips: guard[pi],
                n_steps,
                growth,
                growth_stderr,
            }
        })
        .collect();
    Ok((path, wealth))
}

/// Terminal growth rate `log V_T / T` with a batch-means standard error
/// over 20 batches of the recorded increments.
pub fn growth_rate(times: &[f64], log_v: &[f64]) -> (f64, f64) {
    let n = log_v.len();
    if n < 2 || times[n - 1] <= times[0] {
        return (0.0, 0.0);
    }
    let total_t = times[n - 1] - times[0];
    let growth = (log_v[n - 1] - log_v[0]) / total_t;
    let n_batches = 20.min(n - 1);
    if n_batches < 2 {
        return (growth, 0.0);
    }
    let mut slopes = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let i0 = b * (n - 1) / n_batches;
        let i1 = (b + 1) * (n - 1) / n_batches;
        let dt = times[i1] - times[i0];
        if dt > 0.0 {
            slopes.push((log_v[i1] - log_v[i0]) / dt);
        }
    }
    let k = slopes.len() as f64;
    let mean: f64 = slopes.iter().sum::<f64>() / k;
    let var: f64 = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (growth, (var / k).sqrt())
}

/// Per-rank statistics of ranked Dirichlet draws.
#[derive(Debug, Clone, Serialize)]
pub struct CapCurve {
    pub alpha: f64,
    pub d: usize,
    pub n_draws: usize,
    /// Mean weight at each rank (descending).
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

/// Capital distribution curve: ranks symmetric Dirichlet(alpha) draws in
/// descending order and aggregates per-rank mean and quantiles.
pub fn capital_distribution_curve(
    alpha: f64,
    d: usize,
    n_draws: usize,
    seed: u64,
) -> Result<CapCurve> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let samples = simplex::sample_dirichlet(&vec![alpha; d], n_draws, seed)?;
    // per-rank column store for quantiles
    let mut by_rank: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); d];
    for s in &samples {
        let mut sorted = s.coords().to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (k, v) in sorted.into_iter().enumerate() {
            by_rank[k].push(v);
        }
    }
    let quantile = |col: &[f64], q: f64| -> f64 {
        let idx = ((col.len() - 1) as f64 * q).round() as usize;
        col[idx]
    };
    let mut mean = Vec::with_capacity(d);
    let mut q05 = Vec::with_capacity(d);
    let mut q50 = Vec::with_capacity(d);
    let mut q95 = Vec::with_capacity(d);
    for col in by_rank.iter_mut() {
        let m = col.iter().sum::<f64>() / col.len() as f64;
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mean.push(m);
        q05.push(quantile(col, 0.05));
        q50.push(quantile(col, 0.50));
        q95.push(quantile(col, 0.95));
    }
    Ok(CapCurve {
        alpha,
        d,
        n_draws,
        mean,
        q05,
        q50,
        q95,
    })
}

/// Deterministic single step with forced noise, for scheme verification.
#[cfg(test)]
pub(crate) fn step_with_noise(
    m: &Model,
    x: &SimplexPoint,
    dt: f64,
    z: &[f64],
    noise: NoiseModel,
) -> Result<SimplexPoint> {
    let cfg = SimConfig {
        dt,
        t_max: dt,
        seed: 0,
        record_stride: 1,
        noise,
    };
    let stepper = Stepper::new(m, &cfg)?;
    Ok(stepper.step(x, z)?.0)
}
