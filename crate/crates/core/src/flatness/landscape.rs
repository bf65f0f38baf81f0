//! Loss surfaces along one or two directions through parameter space.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, norm};
use crate::objective::{check_dim, Objective};
use crate::optim::{erm_step, sam_step};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    pub half_range: f64,
    /// Grid points per axis; odd and at least 3 so the center is on the grid.
    pub steps: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// SAM radius for the second column; `None` skips it.
    #[serde(default)]
    pub sam_rho: Option<f64>,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            half_range: 1.0,
            steps: 21,
            weight_decay: 0.0,
            sam_rho: Some(0.05),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub c1: f64,
    pub c2: f64,
    pub erm_loss: f64,
    pub sam_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub dims: usize,
    pub steps: usize,
    pub points: Vec<LandscapePoint>,
}

impl LandscapeGrid {
    pub fn center(&self) -> &LandscapePoint {
        let mid = self.steps / 2;
        let idx = if self.dims == 1 { mid } else { mid * self.steps + mid };
        &self.points[idx]
    }

    /// `c1,c2,erm_loss,sam_loss`; the SAM column is empty when not computed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c1,c2,erm_loss,sam_loss\n");
        for p in &self.points {
            let sam = p.sam_loss.map(fmt_g).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", fmt_g(p.c1), fmt_g(p.c2), fmt_g(p.erm_loss), sam));
        }
        s
    }
}

/// Six significant digits, like C's `%g`.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent");
        let mantissa = trim_zeros(mantissa);
        let e: i32 = e.parse().expect("exponent digits");
        format!("{mantissa}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Gram-Schmidt; fails if the directions are linearly dependent.
pub fn orthonormalize(directions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(directions.len());
    for d in directions {
        let mut v = d.clone();
        for u in &out {
            let c = dot(u, &v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= c * ui;
            }
        }
        let n = norm(&v);
        if !(n > 1e-12) {
            return Err(Error::InvalidConfig("slice directions are linearly dependent".into()));
        }
        v.iter_mut().for_each(|x| *x /= n);
        out.push(v);
    }
    Ok(out)
}

/// `count` orthonormal Gaussian directions.
pub fn random_directions(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let raw: Vec<Vec<f64>> = (0..count)
        .map(|j| {
            let mut r = rng::stream(seed, 0xd1_0000 + j as u64);
            (0..dim).map(|_| StandardNormal.sample(&mut r)).collect()
        })
        .collect();
    orthonormalize(&raw)
}

/// Evaluates the regularized ERM loss, and optionally the first-order SAM
/// loss, on the grid `θ + c₁d₁ (+ c₂d₂)`.
///
/// The SAM column reports `max(L(θ'), L(θ' + ε*))`: the ball maximum is never
/// below its center value, and the first-order ascent step alone does not
/// guarantee that on a curved loss.
pub fn landscape_slice<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    directions: &[Vec<f64>],
    cfg: &SliceConfig,
) -> Result<LandscapeGrid> {
    check_dim(obj, params)?;
    if directions.is_empty() || directions.len() > 2 {
        return Err(Error::InvalidConfig("a slice needs one or two directions".into()));
    }
    if cfg.steps < 3 || cfg.steps.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("steps must be odd and >= 3, got {}", cfg.steps)));
    }
    if !(cfg.half_range > 0.0) {
        return Err(Error::InvalidConfig("half_range must be positive".into()));
    }
    if let Some(rho) = cfg.sam_rho {
        if !(rho >= 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be non-negative, got {rho}")));
        }
    }
    for (i, d) in directions.iter().enumerate() {
        if d.len() != params.len() {
            return Err(Error::Shape(format!("direction {i} has the wrong length")));
        }
        if (norm(d) - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidConfig(format!("direction {i} is not unit length")));
        }
        for e in &directions[..i] {
            if dot(d, e).abs() > 1e-8 {
                return Err(Error::InvalidConfig("slice directions are not orthogonal".into()));
            }
        }
    }
    let n = cfg.steps;
    let mid = (n / 2) as f64;
    let coord = |k: usize| cfg.half_range * (k as f64 - mid) / mid;
    let cells: Vec<(f64, f64)> = if directions.len() == 1 {
        (0..n).map(|i| (coord(i), 0.0)).collect()
    } else {
        (0..n * n).map(|k| (coord(k / n), coord(k % n))).collect()
    };
    let points = cells
        .into_par_iter()
        .map(|(c1, c2)| {
            let mut theta = params.to_vec();
            if c1 != 0.0 {
                for (t, d) in theta.iter_mut().zip(&directions[0]) {
                    *t += c1 * d;
                }
            }
            if c2 != 0.0 {
                for (t, d) in theta.iter_mut().zip(&directions[1]) {
                    *t += c2 * d;
                }
            }
            let (erm_loss, _) = erm_step(obj, &theta, cfg.weight_decay, None)?;
            let sam_loss = match cfg.sam_rho {
                Some(rho) => Some(sam_step(obj, &theta, rho, cfg.weight_decay, None)?.loss.max(erm_loss)),
                None => None,
            };
            Ok(LandscapePoint {
                c1,
                c2,
                erm_loss,
                sam_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeGrid {
        dims: directions.len(),
        steps: n,
        points,
    })
}
