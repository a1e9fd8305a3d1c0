//! Exponential squeezing of the low bands for large hopping and the
//! semiclassical bracket field |{Q₀, Q̄₀}|.

use num_complex::Complex64 as C64;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::bands::fmt12;
use crate::basis::{FloquetPoint, Truncation};
use crate::error::{invalid, Result};
use crate::fourier_ops::assemble_d;
use crate::lattice::{y_to_z, TwistConfig, SQRT3};
use crate::linalg;
use crate::potential::PotentialCoeffs;

/// Values below this are treated as numerical zero and left out of fits.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, Serialize)]
pub struct Nondegeneracy {
    pub value: f64,
    pub pass: bool,
}

/// Re ∂_zU(0) ≠ 0.
pub fn nondegeneracy_check(pot: &PotentialCoeffs) -> Nondegeneracy {
    let value = pot.eval_dz(C64::new(0.0, 0.0), 1).re;
    Nondegeneracy {
        value,
        pass: value.abs() > 1e-10,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares y = slope·x + intercept.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SqueezeReport {
    pub beta: (C64, C64),
    pub k: C64,
    /// |α| = |α₁₂| at each sample, ascending.
    pub alpha_abs: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
    /// Fit of log E_j against |α| for each j, over samples above the noise floor.
    pub fits: Vec<Option<LineFit>>,
    /// Samples of E₁ dropped for lying below the noise floor.
    pub excluded: Vec<f64>,
    /// E₁ non-increasing up to a 1% relative wiggle.
    pub monotone: bool,
    /// Number of E_j below the envelope E₁(|α|₀)·e^{slope₁(|α|−|α|₀)/2}.
    pub band_counts: Vec<usize>,
}

impl SqueezeReport {
    /// CSV `alpha_abs,E1..Ej`.
    pub fn to_csv(&self) -> String {
        let j = self.energies.first().map_or(0, Vec::len);
        let mut s = String::from("alpha_abs");
        for i in 1..=j {
            let _ = write!(s, ",E{i}");
        }
        s.push('\n');
        for (a, e) in self.alpha_abs.iter().zip(&self.energies) {
            s.push_str(&fmt12(*a));
            for v in e {
                let _ = write!(s, ",{}", fmt12(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// Bands at one k along the ray α = tβ, t ∈ ts.
#[allow(clippy::too_many_arguments)]
pub fn squeeze_experiment(
    beta: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    k: &FloquetPoint,
    ts: &[f64],
    j_max: usize,
    trunc: Truncation,
) -> Result<SqueezeReport> {
    if !nondegeneracy_check(pot).pass {
        return Err(invalid(
            "the potential fails the nondegeneracy condition Re dU(0) != 0",
        ));
    }
    let mut ts = ts.to_vec();
    ts.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let energies: Vec<Vec<f64>> = ts
        .par_iter()
        .map(|&t| {
            let d = assemble_d((beta.0 * t, beta.1 * t), k, twist, pot, trunc)?;
            let s = linalg::smallest_singular(&d.data, j_max, false)?;
            Ok(s.values.iter().map(|v| v / SQRT3).collect())
        })
        .collect::<Result<_>>()?;
    let alpha_abs: Vec<f64> = ts.iter().map(|t| (beta.0 * t).norm()).collect();
    let mut fits = Vec::with_capacity(j_max);
    let mut excluded = Vec::new();
    for j in 0..j_max {
        let (xs, ys): (Vec<f64>, Vec<f64>) = alpha_abs
            .iter()
            .zip(&energies)
            .filter(|(_, e)| e[j] > NOISE_FLOOR)
            .map(|(a, e)| (*a, e[j].ln()))
            .unzip();
        if j == 0 {
            excluded = alpha_abs
                .iter()
                .zip(&energies)
                .filter(|(_, e)| e[0] <= NOISE_FLOOR)
                .map(|(a, _)| *a)
                .collect();
        }
        fits.push(fit_line(&xs, &ys));
    }
    let monotone = energies.windows(2).all(|w| w[1][0] <= w[0][0] * 1.01);
    let band_counts = match (fits[0], alpha_abs.first(), energies.first()) {
        (Some(f), Some(&a0), Some(e0)) => alpha_abs
            .iter()
            .zip(&energies)
            .map(|(a, e)| {
                let env = e0[0] * (0.5 * f.slope * (a - a0)).exp();
                e.iter().filter(|&&v| v <= env).count()
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(SqueezeReport {
        beta,
        k: k.k(),
        alpha_abs,
        energies,
        fits,
        excluded,
        monotone,
        band_counts,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BracketGrid {
    pub beta: (C64, C64),
    pub p: i64,
    pub ratio: String,
    pub g: usize,
    /// Sample points z and the field value 8|V|·|Im(V̄^{1/2}∂_zV)|.
    pub points: Vec<(C64, f64)>,
}

impl BracketGrid {
    /// Heatmap CSV `x,y,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for (z, v) in &self.points {
            let _ = writeln!(s, "{},{},{}", fmt12(z.re), fmt12(z.im), fmt12(*v));
        }
        s
    }
}

/// V = β₁₂²U(pz)U(−pz) + β₂₃²U(p̃z)U(−p̃z) with p̃ = p·r, and ∂_zV.
fn v_and_dz(beta: (C64, C64), p: i64, pt: i64, pot: &PotentialCoeffs, z: C64) -> (C64, C64) {
    let term = |b: C64, s: i64| {
        let (a, c) = (pot.eval(z, s), pot.eval(z, -s));
        (
            b * b * a * c,
            b * b * (pot.eval_dz(z, s) * c + a * pot.eval_dz(z, -s)),
        )
    };
    let (v1, d1) = term(beta.0, p);
    let (v2, d2) = term(beta.1, pt);
    (v1 + v2, d1 + d2)
}

/// The bracket field at one point; `branch` = ±1 picks the square root.
pub fn bracket_value(
    beta: (C64, C64),
    p: i64,
    pt: i64,
    pot: &PotentialCoeffs,
    z: C64,
    branch: f64,
) -> f64 {
    let (v, dv) = v_and_dz(beta, p, pt, pot, z);
    let root = v.conj().sqrt() * branch;
    8.0 * v.norm() * (root * dv).im.abs()
}

pub fn scaled_partner(p: i64, ratio: Rational64) -> Result<i64> {
    let pr = ratio * p;
    if !pr.is_integer() {
        return Err(invalid(format!("p·r = {pr} must be an integer")));
    }
    Ok(pr.to_integer())
}

/// Field on a g×g grid over one period cell of ℂ/Γ (y ∈ [−π, π)²).
pub fn bracket_field(
    beta: (C64, C64),
    p: i64,
    ratio: Rational64,
    pot: &PotentialCoeffs,
    g: usize,
) -> Result<BracketGrid> {
    let pt = scaled_partner(p, ratio)?;
    let h = 2.0 * PI / g as f64;
    let zs: Vec<C64> = (0..g)
        .flat_map(|i| (0..g).map(move |j| y_to_z(-PI + h * i as f64, -PI + h * j as f64)))
        .collect();
    let points = zs
        .par_iter()
        .map(|&z| (z, bracket_value(beta, p, pt, pot, z, 1.0)))
        .collect();
    Ok(BracketGrid {
        beta,
        p,
        ratio: format!("{}/{}", ratio.numer(), ratio.denom()),
        g,
        points,
    })
}
