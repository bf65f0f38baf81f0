//! Curvature estimates from Hessian-vector products.
//!
//! `Hv` is a central difference of analytic gradients along `v̂ = v/‖v‖`, so
//! the network code stays first-order. The truncation error is `O(h²)` and
//! vanishes for quadratic losses.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, norm};
use crate::objective::{check_dim, Objective};
use crate::rng;

/// Largest parameter count for which [`TraceMode::Auto`] enumerates the basis.
pub const EXACT_TRACE_LIMIT: usize = 512;

/// Finite-difference step used when none is given: `1e-4·(1 + ‖θ‖)`.
pub fn default_hvp_step(params: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(params))
}

/// Hessian-vector product of the data loss at `params`.
pub fn hvp<O: Objective + ?Sized>(obj: &O, params: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dim(obj, params)?;
    if v.len() != params.len() {
        return Err(Error::Shape(format!(
            "direction has length {}, parameters {}",
            v.len(),
            params.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidConfig(format!("HVP step must be positive, got {h}")));
    }
    let v_norm = norm(v);
    if !(v_norm > 0.0) || !v_norm.is_finite() {
        return Err(Error::InvalidConfig("HVP direction must be non-zero and finite".into()));
    }
    let step = h / v_norm;
    let plus: Vec<f64> = params.iter().zip(v).map(|(p, d)| p + step * d).collect();
    let minus: Vec<f64> = params.iter().zip(v).map(|(p, d)| p - step * d).collect();
    let (_, g_plus) = obj.loss_grad(&plus)?;
    let (_, g_minus) = obj.loss_grad(&minus)?;
    let scale = v_norm / (2.0 * h);
    let out: Vec<f64> = g_plus.iter().zip(&g_minus).map(|(a, b)| (a - b) * scale).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("Hessian-vector product"));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "probes")]
pub enum TraceMode {
    /// Sum of `eᵢᵀHeᵢ` over every coordinate.
    Exact,
    /// Hutchinson estimate with this many Rademacher probes.
    Rademacher(usize),
    /// Exact up to [`EXACT_TRACE_LIMIT`] parameters, Rademacher otherwise.
    Auto(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub estimate: f64,
    /// Zero in exact mode and for a single probe.
    pub stderr: f64,
    pub probes: usize,
    pub exact: bool,
}

fn rademacher(dim: usize, seed: u64, probe: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, probe as u64);
    (0..dim).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Hessian trace; probes run in parallel, each keyed by its index.
pub fn hessian_trace<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    mode: TraceMode,
    seed: u64,
    h: f64,
) -> Result<TraceEstimate> {
    check_dim(obj, params)?;
    let dim = params.len();
    let exact = match mode {
        TraceMode::Exact => {
            if dim > EXACT_TRACE_LIMIT {
                return Err(Error::InvalidConfig(format!(
                    "exact trace needs at most {EXACT_TRACE_LIMIT} parameters, model has {dim}"
                )));
            }
            true
        }
        TraceMode::Auto(_) => dim <= EXACT_TRACE_LIMIT,
        TraceMode::Rademacher(_) => false,
    };
    if exact {
        let diag = (0..dim)
            .into_par_iter()
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                Ok(hvp(obj, params, &e, h)?[i])
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(TraceEstimate {
            estimate: diag.iter().sum(),
            stderr: 0.0,
            probes: dim,
            exact: true,
        });
    }
    let probes = match mode {
        TraceMode::Rademacher(n) | TraceMode::Auto(n) => n,
        TraceMode::Exact => unreachable!(),
    };
    if probes == 0 {
        return Err(Error::InvalidConfig("Hutchinson estimate needs at least one probe".into()));
    }
    let samples = (0..probes)
        .into_par_iter()
        .map(|k| {
            let z = rademacher(dim, seed, k);
            Ok(dot(&z, &hvp(obj, params, &z, h)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = probes as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = if probes > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(TraceEstimate {
        estimate: mean,
        stderr,
        probes,
        exact: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpairs {
    /// Ordered by decreasing magnitude, signs kept.
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl Eigenpairs {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Top-`k` Hessian eigenvalues by power iteration with deflation.
///
/// Each eigenvalue is declared converged once successive Rayleigh quotients
/// differ by less than `tol`; otherwise the last iterate is returned with its
/// `converged` flag cleared.
pub fn top_eigenvalues<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
    h: f64,
) -> Result<Eigenpairs> {
    check_dim(obj, params)?;
    let dim = params.len();
    if k == 0 || k > dim {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= k <= {dim} eigenvalues, got {k}"
        )));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidConfig("power iteration needs iters >= 1 and tol > 0".into()));
    }
    let mut out = Eigenpairs {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        converged: Vec::with_capacity(k),
        iterations: Vec::with_capacity(k),
    };
    let apply = |x: &[f64], found: &Eigenpairs| -> Result<Vec<f64>> {
        let mut y = hvp(obj, params, x, h)?;
        for (lambda, u) in found.values.iter().zip(&found.vectors) {
            let c = lambda * dot(u, x);
            for (yi, ui) in y.iter_mut().zip(u) {
                *yi -= c * ui;
            }
        }
        Ok(y)
    };
    for j in 0..k {
        let mut r = rng::stream(seed, 0xe16e_0000 + j as u64);
        let mut v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        orthogonalize(&mut v, &out.vectors);
        normalize(&mut v)?;
        let mut lambda = f64::NAN;
        let mut converged = false;
        let mut iters = 0;
        while iters < max_iters {
            iters += 1;
            let hv = apply(&v, &out)?;
            let rq = dot(&v, &hv);
            let mut next = hv;
            orthogonalize(&mut next, &out.vectors);
            let delta = (rq - lambda).abs();
            lambda = rq;
            if normalize(&mut next).is_err() {
                // `v` lies in the null space of the deflated operator.
                converged = true;
                break;
            }
            v = next;
            if delta < tol {
                converged = true;
                break;
            }
        }
        out.values.push(lambda);
        out.vectors.push(v);
        out.converged.push(converged);
        out.iterations.push(iters);
    }
    Ok(out)
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let c = dot(u, v);
        for (vi, ui) in v.iter_mut().zip(u) {
            *vi -= c * ui;
        }
    }
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if !(n > 1e-300) || !n.is_finite() {
        return Err(Error::non_finite("power iteration vector"));
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(())
}
