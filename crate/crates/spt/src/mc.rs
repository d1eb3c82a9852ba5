//! Self-normalized importance-sampling estimators against the invariant
//! density, with deterministic chunked streams.
//!
//! The proposal is the Dirichlet distribution matched to the model (the
//! density itself for Dirichlet presets, in which case all weights are
//! constant and the estimator reduces to a plain Monte Carlo mean).

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{ln_beta, Model};
use crate::simplex::SimplexPoint;
use rand_distr::{Distribution, Gamma};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    /// Whether the relative sampling noise exceeds one half.
    pub fn high_variance(&self) -> bool {
        self.stderr > 0.5 * self.value.abs() && self.stderr > 0.0
    }
}

/// Per-component accumulator for the self-normalized estimator:
/// value = sum(w f) / sum(w),
/// se^2  = sum(w^2 (f - value)^2) / sum(w)^2.
#[derive(Clone, Default)]
struct Acc {
    swf: f64,
    sw2f: f64,
    sw2f2: f64,
}

struct ChunkSums {
    sw: f64,
    sw2: f64,
    comps: Vec<Acc>,
    bad_sample: Option<usize>,
}

/// Estimates `E_p[f_k(X)]` for the `k` components returned by `f`,
/// sharing one sample stream so that differences of components have the
/// right joint noise.
pub fn expect_p_multi(
    m: &Model,
    k: usize,
    f: &(dyn Fn(&SimplexPoint) -> Vec<f64> + Sync),
    n: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let alpha = m.proposal_alpha().to_vec();
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    let log_q = dirichlet_logpdf(&alpha);
    // reference log-weight keeps exponentials in range for unnormalized p
    let bary = SimplexPoint::barycenter(m.dim());
    let ref_logw = m.log_p(&bary) - log_q(&bary);

    let chunks = exec::chunk_sizes(n);
    let sums: Vec<ChunkSums> = exec::map_chunks(chunks.len(), |ci| {
        let (idx, len) = chunks[ci];
        let mut rng = exec::chunk_rng(seed, idx as u64);
        let mut s = ChunkSums {
            sw: 0.0,
            sw2: 0.0,
            comps: vec![Acc::default(); k],
            bad_sample: None,
        };
        for j in 0..len {
            let x = draw(&gammas, &mut rng);
            let w = (m.log_p(&x) - log_q(&x) - ref_logw).exp();
            let vals = f(&x);
            debug_assert_eq!(vals.len(), k);
            if !w.is_finite() || vals.iter().any(|v| !v.is_finite()) {
                s.bad_sample.get_or_insert(idx * exec::CHUNK + j);
                continue;
            }
            s.sw += w;
            s.sw2 += w * w;
            for (acc, &v) in s.comps.iter_mut().zip(&vals) {
                acc.swf += w * v;
                acc.sw2f += w * w * v;
                acc.sw2f2 += w * w * v * v;
            }
        }
        s
    });

    let mut sw = 0.0;
    let mut sw2 = 0.0;
    let mut comps = vec![Acc::default(); k];
    for s in &sums {
        if let Some(i) = s.bad_sample {
            return Err(Error::NumericalError(format!(
                "non-finite integrand or weight at sample {i}"
            )));
        }
        sw += s.sw;
        sw2 += s.sw2;
        for (a, b) in comps.iter_mut().zip(&s.comps) {
            a.swf += b.swf;
            a.sw2f += b.sw2f;
            a.sw2f2 += b.sw2f2;
        }
    }
    if !(sw > 0.0) {
        return Err(Error::NumericalError(
            "all importance weights vanished".into(),
        ));
    }
    Ok(comps
        .into_iter()
        .map(|a| {
            let value = a.swf / sw;
            let var = (a.sw2f2 - 2.0 * value * a.sw2f + value * value * sw2).max(0.0) / (sw * sw);
            McEstimate {
                value,
                stderr: var.sqrt(),
                n,
            }
        })
        .collect())
}

/// Scalar convenience wrapper around [`expect_p_multi`].
pub fn expect_p(
    m: &Model,
    f: &(dyn Fn(&SimplexPoint) -> f64 + Sync),
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(expect_p_multi(m, 1, &|x| vec![f(x)], n, seed)?.remove(0))
}

/// Draws `len` proposal points with their self-normalization weights,
/// using the stream belonging to `chunk`.
pub(crate) fn proposal_chunk(
    m: &Model,
    gammas: &[Gamma<f64>],
    ref_logw: f64,
    seed: u64,
    chunk: usize,
    len: usize,
) -> Vec<(SimplexPoint, f64)> {
    let alpha = m.proposal_alpha().to_vec();
    let log_q = dirichlet_logpdf(&alpha);
    let mut rng = exec::chunk_rng(seed, chunk as u64);
    (0..len)
        .map(|_| {
            let x = draw(gammas, &mut rng);
            let w = (m.log_p(&x) - log_q(&x) - ref_logw).exp();
            (x, w)
        })
        .collect()
}

pub(crate) fn proposal_setup(m: &Model) -> Result<(Vec<Gamma<f64>>, f64)> {
    let alpha = m.proposal_alpha().to_vec();
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::InvalidParameter(e.to_string())))
        .collect::<Result<_>>()?;
    let log_q = dirichlet_logpdf(&alpha);
    let bary = SimplexPoint::barycenter(m.dim());
    let ref_logw = m.log_p(&bary) - log_q(&bary);
    Ok((gammas, ref_logw))
}

fn draw(gammas: &[Gamma<f64>], rng: &mut impl rand::Rng) -> SimplexPoint {
    loop {
        let mut g: Vec<f64> = gammas.iter().map(|gm| gm.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
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

fn dirichlet_logpdf(alpha: &[f64]) -> impl Fn(&SimplexPoint) -> f64 + '_ {
    let lb = ln_beta(alpha);
    move |x: &SimplexPoint| {
        let mut s = -lb;
        for (xi, ai) in x.coords().iter().zip(alpha) {
            s += (ai - 1.0) * xi.ln();
        }
        s
    }
}
