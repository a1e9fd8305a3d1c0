//! Traces of powers of B_k: direct matrix traces, the closed ℓ = 2 forms,
//! and the combinatorial residue sum over closed admissible tuples.
//!
//! Normalization: the matrix B_k acts on one Floquet space of the large
//! lattice Γ. Its trace is nine times the per-sector trace used by the
//! closed forms, so reported traces divide by [`SECTOR_FACTOR`]; the raw
//! value stays available.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use num_rational::Rational64;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::lattice::{derive_config, gamma_mode, omega_pow, sigma, SQRT3};

pub const SECTOR_FACTOR: f64 = 9.0;

/// tr(B^ℓ) of the matrix, without normalization.
pub fn numeric_trace_raw(b: &Array2<C64>, ell: usize) -> Result<C64> {
    if ell < 2 {
        return Err(invalid("traces are defined for ell >= 2"));
    }
    let mut p = b.clone();
    for _ in 2..ell {
        p = p.dot(b);
    }
    let n = b.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += p[(i, j)] * b[(j, i)];
        }
    }
    Ok(s)
}

/// Per-sector trace τ_ℓ = tr(B^ℓ)/9.
pub fn numeric_trace(b: &Array2<C64>, ell: usize) -> Result<C64> {
    Ok(numeric_trace_raw(b, ell)? / SECTOR_FACTOR)
}

/// Closed forms for tr(B²) with h = ζ₂/ζ₁. `rescaled` returns the trace of
/// the rescaled operator; otherwise the unrescaled 𝒮₄ = (p/ζ₁)⁴ tr(B²).
pub fn closed_form_s4(r: C64, h: Rational64, p: i64, zeta1: f64, rescaled: bool) -> Result<C64> {
    if h.is_zero() {
        return Err(invalid("h = 0 is not a twist ratio"));
    }
    let k = 4.0 * PI / (9.0 * SQRT3 * (p * p) as f64);
    let r2 = r * r;
    let one = C64::new(1.0, 0.0);
    let body = if h == -Rational64::one() {
        (one + r2) * (one + r2)
    } else if h.is_one() {
        one - r2 + r2 * r2
    } else {
        let hf = h.to_f64().expect("finite ratio");
        r2 * r2 / (hf * hf) + r2 * 3.0 / (1.0 - hf + hf * hf) + one
    };
    let t = body * k;
    Ok(if rescaled {
        t
    } else {
        t * (p as f64 / zeta1).powi(4)
    })
}

pub const HOPS: [(i64, i64); 3] = [(1, 1), (-2, 1), (1, -2)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StepKind {
    /// Weight n = p: −(α,β) and (γ,δ) are hopping directions.
    P,
    /// Weight n = p̃: (α,β) and −(γ,δ) are hopping directions.
    PTilde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Step {
    pub kind: StepKind,
    pub n: i64,
    pub first: (i64, i64),
    pub second: (i64, i64),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct AdmissibleTuple {
    pub steps: Vec<Step>,
}

fn neg(v: (i64, i64)) -> (i64, i64) {
    (-v.0, -v.1)
}

/// ω-exponent of the potential coefficient carried by a shift direction:
/// (−1,−1) ↦ 0, (2,−1) ↦ 1, (−1,2) ↦ 2, and the same for the negatives.
fn weight_exponent(v: (i64, i64)) -> i64 {
    match v {
        (-1, -1) | (1, 1) => 0,
        (2, -1) | (-2, 1) => 1,
        (-1, 2) | (1, -2) => 2,
        _ => unreachable!("not a hopping direction: {v:?}"),
    }
}

impl AdmissibleTuple {
    pub fn ell(&self) -> usize {
        self.steps.len()
    }

    /// Number of steps with weight p̃.
    pub fn s(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::PTilde)
            .count()
    }

    /// m_π = (2/3) Σ (γ_i + β_i).
    pub fn m(&self) -> Rational64 {
        let t: i64 = self.steps.iter().map(|s| s.second.0 + s.first.1).sum();
        Rational64::new(2 * t, 3)
    }

    /// Offsets after each of the 2ℓ shifts.
    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let mut pos = (0, 0);
        let mut out = Vec::with_capacity(2 * self.steps.len());
        for s in &self.steps {
            for v in [s.first, s.second] {
                pos = (pos.0 + s.n * v.0, pos.1 + s.n * v.1);
                out.push(pos);
            }
        }
        out
    }

    /// ω-exponent of the product of potential coefficients along the path.
    pub fn weight_power(&self) -> i64 {
        self.steps
            .iter()
            .map(|s| weight_exponent(s.first) + weight_exponent(s.second))
            .sum()
    }

    /// Coefficient 3^ℓ r^{2s} ω^{weight} of the path.
    pub fn coefficient(&self, r: C64) -> C64 {
        let r2s = (0..self.s()).fold(C64::new(1.0, 0.0), |a, _| a * r * r);
        r2s * omega_pow(self.weight_power()) * 3f64.powi(self.ell() as i32)
    }

    pub fn rotated(&self) -> Self {
        let rot = |v: (i64, i64)| sigma(v.0, v.1);
        Self {
            steps: self
                .steps
                .iter()
                .map(|s| Step {
                    first: rot(s.first),
                    second: rot(s.second),
                    ..*s
                })
                .collect(),
        }
    }
}

fn step_options(p: i64, pt: i64) -> Vec<Step> {
    let mut out = Vec::with_capacity(18);
    for &a in &HOPS {
        for &b in &HOPS {
            out.push(Step {
                kind: StepKind::P,
                n: p,
                first: neg(a),
                second: b,
            });
        }
    }
    for &a in &HOPS {
        for &b in &HOPS {
            out.push(Step {
                kind: StepKind::PTilde,
                n: pt,
                first: a,
                second: neg(b),
            });
        }
    }
    out
}

/// Closed admissible tuples of length ℓ, by depth-first search with a reach
/// bound on the remaining steps.
pub fn enumerate_theta(ell: usize, p: i64, pt: i64) -> Result<Vec<AdmissibleTuple>> {
    if !(2..=3).contains(&ell) {
        return Err(invalid("tuple enumeration supports ell in {2, 3}"));
    }
    let opts = step_options(p, pt);
    let reach = 4 * p.abs().max(pt.abs());
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(ell);
    fn dfs(
        opts: &[Step],
        left: usize,
        pos: (i64, i64),
        reach: i64,
        stack: &mut Vec<Step>,
        out: &mut Vec<AdmissibleTuple>,
    ) {
        if left == 0 {
            if pos == (0, 0) {
                out.push(AdmissibleTuple {
                    steps: stack.clone(),
                });
            }
            return;
        }
        let bound = reach * left as i64;
        if pos.0.abs() > bound || pos.1.abs() > bound {
            return;
        }
        for s in opts {
            let np = (
                pos.0 + s.n * (s.first.0 + s.second.0),
                pos.1 + s.n * (s.first.1 + s.second.1),
            );
            stack.push(*s);
            dfs(opts, left - 1, np, reach, stack, out);
            stack.pop();
        }
    }
    dfs(&opts, ell, (0, 0), reach, &mut stack, &mut out);
    Ok(out)
}

/// Brute-force count over every step assignment, used as an oracle.
pub fn brute_force_count(ell: usize, p: i64, pt: i64) -> usize {
    let opts = step_options(p, pt);
    let total = opts.len().pow(ell as u32);
    (0..total)
        .filter(|&code| {
            let mut c = code;
            let mut pos = (0, 0);
            for _ in 0..ell {
                let s = opts[c % opts.len()];
                c /= opts.len();
                pos.0 += s.n * (s.first.0 + s.second.0);
                pos.1 += s.n * (s.first.1 + s.second.1);
            }
            pos == (0, 0)
        })
        .count()
}

/// Σ_poles conj(w_j) Res(g, w_j) for g(w) = Π_j 1/(w + γ_{P_j}).
/// Simple poles use the product formula; repeated poles use a trapezoid
/// contour of radius half the distance to the nearest other pole.
pub fn pole_sum(offsets: &[(i64, i64)]) -> Result<C64> {
    let g: Vec<C64> = offsets
        .iter()
        .map(|&(a, b)| gamma_mode(a as f64, b as f64))
        .collect();
    let mut distinct: Vec<((i64, i64), usize)> = Vec::new();
    for &o in offsets {
        match distinct.iter_mut().find(|(d, _)| *d == o) {
            Some((_, c)) => *c += 1,
            None => distinct.push((o, 1)),
        }
    }
    let eval = |w: C64| -> C64 { g.iter().fold(C64::new(1.0, 0.0), |acc, gi| acc / (w + gi)) };
    let mut total = C64::new(0.0, 0.0);
    for &(o, mult) in &distinct {
        let w0 = -gamma_mode(o.0 as f64, o.1 as f64);
        let res = if mult == 1 {
            g.iter()
                .zip(offsets)
                .filter(|(_, &oo)| oo != o)
                .fold(C64::new(1.0, 0.0), |acc, (gi, _)| acc / (w0 + gi))
        } else {
            let sep = distinct
                .iter()
                .filter(|(d, _)| *d != o)
                .map(|(d, _)| (gamma_mode(d.0 as f64, d.1 as f64) + w0).norm())
                .fold(f64::INFINITY, f64::min);
            let rho = if sep.is_finite() { sep / 2.0 } else { 1.0 };
            if rho < 1e-9 {
                return Err(crate::error::Error::Contract(
                    "pole cluster below contour resolution".into(),
                ));
            }
            let m = 128;
            (0..m)
                .map(|t| {
                    let e = C64::from_polar(1.0, 2.0 * PI * t as f64 / m as f64);
                    eval(w0 + e * rho) * e * rho
                })
                .sum::<C64>()
                / m as f64
        };
        total += w0.conj() * res;
    }
    Ok(total)
}

/// Contribution of one tuple to the raw trace.
pub fn tuple_contribution(t: &AdmissibleTuple, r: C64) -> Result<C64> {
    let pref = -2.0 * PI / (9.0 * SQRT3);
    Ok(t.coefficient(r) * pole_sum(&t.offsets())? * pref)
}

/// Orbit contribution C(π) + C(σπ) + C(σ²π) from the single residue
/// evaluation of π, using the rotation invariance of the summand.
pub fn orbit_contribution(t: &AdmissibleTuple, r: C64) -> Result<C64> {
    Ok(tuple_contribution(t, r)? * 3.0)
}

/// Raw combinatorial trace (same normalization as [`numeric_trace_raw`]).
pub fn combinatorial_trace_raw(ell: usize, p: i64, pt: i64, r: C64) -> Result<C64> {
    enumerate_theta(ell, p, pt)?
        .iter()
        .map(|t| tuple_contribution(t, r))
        .sum()
}

/// Per-sector combinatorial trace.
pub fn combinatorial_trace(ell: usize, p: i64, pt: i64, r: C64) -> Result<C64> {
    Ok(combinatorial_trace_raw(ell, p, pt, r)? / SECTOR_FACTOR)
}

#[derive(Clone, Debug, Serialize)]
pub struct RationalApprox {
    pub num: i64,
    pub den: i64,
    pub distance: f64,
    pub conforming: bool,
}

/// Best rational approximation q ≈ τ√3/π with denominator ≤ max_den.
pub fn rationality_check(tau: C64, max_den: i64) -> RationalApprox {
    let x = tau.re * SQRT3 / PI;
    let (n, d) = best_rational(x, max_den.max(1));
    let distance = (x - n as f64 / d as f64).abs() + tau.im.abs() * SQRT3 / PI;
    RationalApprox {
        num: n,
        den: d,
        distance,
        conforming: distance < 1e-8,
    }
}

/// Continued-fraction best approximation with bounded denominator
/// (convergents and the last admissible semiconvergent).
fn best_rational(x: f64, max_den: i64) -> (i64, i64) {
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        let ai = a as i64;
        let q2 = ai.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            let k = (max_den - q0) / q1.max(1);
            let (ps, qs) = (k * p1 + p0, k * q1 + q0);
            let e1 = (x - p1 as f64 / q1 as f64).abs();
            let e2 = (x - ps as f64 / qs as f64).abs();
            return if qs > 0 && e2 < e1 {
                (ps, qs)
            } else {
                (p1, q1)
            };
        }
        let p2 = ai * p1 + p0;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let f = v - a;
        if f.abs() < 1e-15 {
            break;
        }
        v = 1.0 / f;
    }
    (p1, q1)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscontinuityRow {
    pub n: u32,
    pub ratio_num: i64,
    pub ratio_den: i64,
    pub p_n: i64,
    pub p_tilde_n: i64,
    /// Unrescaled 𝒮₄ from the closed form.
    pub s4_closed: f64,
    /// Unrescaled 𝒮₄ from the tuple residue sum.
    pub s4_combinatorial: f64,
    pub s4_over_p2: f64,
}

/// The limiting constant (4π/(9√3ζ₁⁴))(r⁴/h² + 3r²/(1−h+h²) + 1) of 𝒮₄/p_n².
pub fn discontinuity_limit(h: f64, r: f64, zeta1: f64) -> f64 {
    4.0 * PI / (9.0 * SQRT3 * zeta1.powi(4))
        * (r.powi(4) / (h * h) + 3.0 * r * r / (1.0 - h + h * h) + 1.0)
}

/// ζ₂⁽ⁿ⁾/ζ₁ = h·3ⁿ/(3ⁿ−1) for n = 1..n_max.
pub fn discontinuity_sequence(
    zeta1: f64,
    h: Rational64,
    n_max: u32,
    r: f64,
) -> Result<Vec<DiscontinuityRow>> {
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let t = 3i64.pow(n);
        let hn = h * Rational64::new(t, t - 1);
        let tw = derive_config(zeta1, hn)?;
        let rr = C64::new(tw.effective_hop_ratio(C64::new(r, 0.0)).re, 0.0);
        let closed = closed_form_s4(rr, tw.ratio, tw.p, tw.zeta1, false)?.re;
        let comb =
            combinatorial_trace(2, tw.p, tw.p_tilde, rr)?.re * (tw.p as f64 / tw.zeta1).powi(4);
        rows.push(DiscontinuityRow {
            n,
            ratio_num: *hn.numer(),
            ratio_den: *hn.denom(),
            p_n: tw.p,
            p_tilde_n: tw.p_tilde,
            s4_closed: closed,
            s4_combinatorial: comb,
            s4_over_p2: comb / (tw.p * tw.p) as f64,
        });
    }
    Ok(rows)
}
