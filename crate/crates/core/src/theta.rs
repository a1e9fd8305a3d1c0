//! The Jacobi theta function θ = θ₁(·|ω), the multipliers F_k and G_k, the
//! Weierstrass ℘ function of Γ₃, flat-band Bloch functions from one kernel
//! element, and Chern numbers of the flat-band bundle.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::bands::{reduce_to_cell, zero_locator, KernelZero};
use crate::basis::{FloquetPoint, ModeBasis, Truncation};
use crate::birman_schwinger::assemble_bk;
use crate::error::{invalid, Error, Result};
use crate::fourier_ops::{analyze_grid, apply_d, assemble_d, synthesize, synthesize_grid};
use crate::lattice::{omega, rect_to_k, y_to_z, z_s, TwistConfig, SQRT3};
use crate::linalg;
use crate::potential::PotentialCoeffs;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThetaValue {
    pub value: C64,
    pub terms_used: usize,
}

const TERM_CAP: usize = 200;

/// θ and its first three derivatives from the series
/// θ(ζ) = −Σ_n exp(πi(n+½)²ω + 2πi(n+½)(ζ+½)).
pub fn theta_derivs(zeta: C64) -> ([C64; 4], usize) {
    let w = omega();
    let ipi = C64::new(0.0, PI);
    let mut acc = [C64::new(0.0, 0.0); 4];
    let mut used = 0;
    for n in 0..TERM_CAP as i64 {
        let mut biggest = 0.0f64;
        for m in [n, -n - 1] {
            let h = m as f64 + 0.5;
            let e = (ipi * h * h * w + ipi * 2.0 * h * (zeta + 0.5)).exp();
            let f = ipi * 2.0 * h;
            let t = [-e, -e * f, -e * f * f, -e * f * f * f];
            for (a, b) in acc.iter_mut().zip(t) {
                *a += b;
            }
            biggest = biggest.max(e.norm() * (1.0 + f.norm()).powi(3));
            used += 1;
        }
        let scale = acc[0].norm().max(acc[1].norm()).max(1e-300);
        if biggest < 1e-17 * scale && n > 1 {
            break;
        }
    }
    (acc, used)
}

pub fn theta1(zeta: C64) -> ThetaValue {
    let (d, used) = theta_derivs(zeta);
    ThetaValue {
        value: d[0],
        terms_used: used,
    }
}

/// ζ(z) = 3z/(4πiω), mapping Γ₃ onto ℤ + ωℤ.
fn zeta_of(z: C64) -> C64 {
    z * 3.0 / (C64::new(0.0, 4.0 * PI) * omega())
}

fn theta_quotient(z: C64, k: C64) -> Option<C64> {
    let den = theta1(zeta_of(z)).value;
    if den.norm() < 1e-8 {
        return None;
    }
    Some(theta1(zeta_of(z) + k / (SQRT3 * omega())).value / den)
}

/// F_k(z) = e^{−(i/2)(ωz + z̄)k} θ(ζ(z) + k/(√3ω))/θ(ζ(z)); None at a pole.
/// The holomorphic factor ωz is the one that makes F_k Γ₃-periodic.
pub fn f_k(z: C64, k: C64) -> Option<C64> {
    let pre = (C64::new(0.0, -0.5) * (omega() * z + z.conj()) * k).exp();
    theta_quotient(z, k).map(|q| pre * q)
}

/// G_k(z) = e^{(i/2)(k̄ − kω)z} θ(ζ(z) + k/(√3ω))/θ(ζ(z)) = e^{i⟨z,k⟩}F_k(z);
/// None at a pole.
pub fn g_k(z: C64, k: C64) -> Option<C64> {
    let pre = (C64::new(0.0, 0.5) * (k.conj() - k * omega()) * z).exp();
    theta_quotient(z, k).map(|q| pre * q)
}

/// Multiplier e_a(k) = e^{πi a₁²ω + 2πi a₁ k/(√3ω)} (−1)^{a₁−a₂} for
/// a = √3(ω²a₁ − ωa₂) ∈ Γ₃*.
pub fn e_a(a1: i64, a2: i64, k: C64) -> C64 {
    let ipi = C64::new(0.0, PI);
    let s = if (a1 - a2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    };
    (ipi * (a1 * a1) as f64 * omega() + ipi * 2.0 * a1 as f64 * k / (SQRT3 * omega())).exp() * s
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeierstrassValue {
    pub p: C64,
    pub dp: C64,
}

/// ℘ and ℘′ of Γ₃ via −(log θ∘ζ)″ plus the constant that removes the
/// constant Laurent term.
pub fn weierstrass_p(z: C64) -> Option<WeierstrassValue> {
    let c0 = 3.0 / (C64::new(0.0, 4.0 * PI) * omega());
    let (t, _) = theta_derivs(z * c0);
    if t[0].norm() < 1e-8 {
        return None;
    }
    let (d0, _) = theta_derivs(C64::new(0.0, 0.0));
    let shift = c0 * c0 * d0[3] / (3.0 * d0[1]);
    let l1 = t[1] / t[0];
    let l2 = t[2] / t[0] - l1 * l1;
    let l3 = t[3] / t[0] - 3.0 * t[2] * t[1] / (t[0] * t[0]) + 2.0 * l1 * l1 * l1;
    Some(WeierstrassValue {
        p: -c0 * c0 * l2 + shift,
        dp: -c0 * c0 * c0 * l3,
    })
}

#[derive(Clone, Debug)]
pub struct BlochFunction {
    pub coeffs: Vec<C64>,
    pub basis: ModeBasis,
    pub floquet: FloquetPoint,
    /// ‖(D(α)+k)w‖/‖w‖ in physical units.
    pub residual: f64,
}

/// Values of the periodic representative on the y-grid, with sup norm.
fn grid_fields(u: &[C64], basis: &ModeBasis, g: usize) -> (Vec<Array2<C64>>, f64) {
    let f: Vec<_> = (0..basis.comps.len())
        .map(|c| synthesize_grid(u, basis, c, g))
        .collect();
    let sup = f
        .iter()
        .flat_map(|a| a.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    (f, sup)
}

fn yz(i: usize, j: usize, g: usize) -> C64 {
    let h = 2.0 * PI / g as f64;
    y_to_z(h * i as f64, h * j as f64)
}

/// Multiplies each component by `mult(z)` on the grid and projects back
/// onto the basis modes.
fn multiply_on_grid(fields: &[Array2<C64>], basis: &ModeBasis, mult: &Array2<C64>) -> Vec<C64> {
    let mut out = Vec::with_capacity(basis.dim());
    for (c, f) in fields.iter().enumerate() {
        let prod = f * mult;
        out.extend(analyze_grid(&prod, &basis.comps[c]));
    }
    out
}

fn fk_grid(k: C64, z_star: C64, g: usize) -> Result<Array2<C64>> {
    let mut m = Array2::zeros((g, g));
    for i in 0..g {
        for j in 0..g {
            m[(i, j)] = f_k(yz(i, j, g) - z_star, k).ok_or_else(|| {
                Error::Contract(
                    "a synthesis grid point sits on a pole of F_k; change the grid size".into(),
                )
            })?;
        }
    }
    Ok(m)
}

/// Grid size for products with F_k: not a multiple of 3, so no grid point
/// hits a rotation fixed point of ℂ/Γ₃.
pub const DEFAULT_GRID: usize = 128;

/// w = F_k(z − z*)u for a kernel element u of D(α) on the Floquet space
/// `base`; w lies in ker(D(α) + k) on the same space.
#[allow(clippy::too_many_arguments)]
pub fn bloch_from_kernel(
    u: &[C64],
    basis: &ModeBasis,
    base: &FloquetPoint,
    z_star: C64,
    k_rect: (f64, f64),
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    zero_tol: f64,
) -> Result<BlochFunction> {
    let g = DEFAULT_GRID;
    let (fields, sup) = grid_fields(u, basis, g);
    let at = synthesize(u, basis, &[z_star]);
    let val = at[0].iter().map(|v| v.norm()).fold(0.0, f64::max);
    if val > zero_tol * sup {
        return Err(invalid(format!(
            "u does not vanish at z* = {z_star}: |u(z*)| = {val:.3e}, sup |u| = {sup:.3e}"
        )));
    }
    let floquet = FloquetPoint {
        shift: base.shift,
        frac: (base.frac.0 + k_rect.0, base.frac.1 + k_rect.1),
    };
    let coeffs = if k_rect == (0.0, 0.0) {
        u.to_vec()
    } else {
        let mult = fk_grid(rect_to_k(k_rect.0, k_rect.1), z_star, g)?;
        multiply_on_grid(&fields, basis, &mult)
    };
    let dw = apply_d(alpha, &floquet, twist, pot, basis, &coeffs);
    let nrm = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let residual = nrm(&dw) / (SQRT3 * nrm(&coeffs));
    Ok(BlochFunction {
        coeffs,
        basis: basis.clone(),
        floquet,
        residual,
    })
}

/// Kernel frame at one Floquet point, with the integer label shift used to
/// compare periodic parts across points.
#[derive(Clone, Debug)]
pub struct Frame {
    pub shift: (i64, i64),
    pub basis: ModeBasis,
    pub vecs: Vec<Array1<C64>>,
}

/// ⟨a_i, b_j⟩ over the periodic parts; `extra` adds to b's label shift.
pub fn frame_overlap(a: &Frame, b: &Frame, extra: (i64, i64)) -> Array2<C64> {
    let m = a.vecs.len();
    let mut o = Array2::zeros((m, b.vecs.len()));
    let ds = (
        b.shift.0 + extra.0 - a.shift.0,
        b.shift.1 + extra.1 - a.shift.1,
    );
    for (c, comp) in a.basis.comps.iter().enumerate() {
        let bcomp = &b.basis.comps[c];
        for (ia, &(mm, nn)) in comp.modes.iter().enumerate() {
            if let Some(ib) = bcomp.position((mm + ds.0, nn + ds.1)) {
                let ga = a.basis.offsets[c] + ia;
                let gb = b.basis.offsets[c] + ib;
                for i in 0..m {
                    let x = a.vecs[i][ga].conj();
                    for j in 0..b.vecs.len() {
                        o[(i, j)] += x * b.vecs[j][gb];
                    }
                }
            }
        }
    }
    o
}

fn det(m: &Array2<C64>) -> C64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => {
            use ndarray_linalg::Determinant;
            m.det().unwrap_or(C64::new(0.0, 0.0))
        }
    }
}

#[derive(Clone, Debug)]
pub enum FrameMethod {
    /// Kernel vectors of D(α)+k: B_k inverse iteration at 1/α₁₂² plus lift
    /// when m = 1, smallest right singular vectors of D(α)+k otherwise.
    Kernel,
    /// F_k(z − z*)u from one kernel element u on `base` with zero z*.
    Theta {
        u: Vec<C64>,
        basis: ModeBasis,
        base: FloquetPoint,
        z_star: C64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct ChernReport {
    pub alpha: C64,
    pub multiplicity: usize,
    pub grid: usize,
    pub raw_curvature_sum: f64,
    pub chern: i64,
    pub drift: f64,
    /// Smallest |det| of a normalized link overlap before phase extraction.
    pub min_link: f64,
}

fn normalize(mut v: Array1<C64>) -> Array1<C64> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|x| x / n);
    v
}

fn orthonormal_frame(vs: Vec<Array1<C64>>) -> Vec<Array1<C64>> {
    if vs.len() == 1 {
        return vs.into_iter().map(normalize).collect();
    }
    let n = vs[0].len();
    let mut x = Array2::zeros((n, vs.len()));
    for (j, v) in vs.iter().enumerate() {
        x.column_mut(j).assign(v);
    }
    linalg::orthonormalize(&mut x);
    x.columns().into_iter().map(|c| c.to_owned()).collect()
}

#[allow(clippy::too_many_arguments)]
fn frame_at(
    k: (f64, f64),
    alpha12: C64,
    r: C64,
    m: usize,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    method: &FrameMethod,
) -> Result<Frame> {
    match method {
        FrameMethod::Kernel => {
            let fp = FloquetPoint::reduced(k.0, k.1);
            if m == 1 {
                let bk = assemble_bk(r, &fp, twist, pot, trunc)?;
                let lam0 = (alpha12 * alpha12).inv();
                let (_, v) = linalg::eig_nearest(&bk.op.data, lam0, 1e-13)?;
                let u = bk.lift(&v, alpha12);
                Ok(Frame {
                    shift: fp.shift,
                    basis: bk.layer_basis().clone(),
                    vecs: vec![normalize(u)],
                })
            } else {
                let d = assemble_d((alpha12, alpha12 * r), &fp, twist, pot, trunc)?;
                let s = linalg::smallest_singular(&d.data, m, true)?;
                let v = s.vectors.expect("requested");
                let vecs = v.columns().into_iter().map(|c| c.to_owned()).collect();
                Ok(Frame {
                    shift: fp.shift,
                    basis: d.cols,
                    vecs,
                })
            }
        }
        FrameMethod::Theta {
            u,
            basis,
            base,
            z_star,
        } => {
            let b = bloch_from_kernel(
                u,
                basis,
                base,
                *z_star,
                k,
                (alpha12, alpha12 * r),
                twist,
                pot,
                1e-2,
            )?;
            Ok(Frame {
                shift: base.shift,
                basis: b.basis,
                vecs: orthonormal_frame(vec![Array1::from(b.coeffs)]),
            })
        }
    }
}

/// Fukui–Hatsugai–Suzuki link-variable Chern number over ℂ/Γ₃* on a
/// grid × grid lattice of (k₁, k₂) ∈ [0, 3)², offset by half a cell plus
/// `offset` (in cells). Sign convention: c₁ = (i/2π)∫tr Θ, which is minus
/// the Berry flux over 2π.
#[allow(clippy::too_many_arguments)]
pub fn chern_number(
    alpha12: C64,
    r: C64,
    m: usize,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    grid: usize,
    trunc: Truncation,
    offset: (f64, f64),
    method: &FrameMethod,
) -> Result<ChernReport> {
    if alpha12.norm() == 0.0 || m == 0 {
        return Err(invalid(
            "the Chern number needs a magic parameter with a nontrivial flat band",
        ));
    }
    if matches!(method, FrameMethod::Theta { .. }) && m != 1 {
        return Err(invalid(
            "theta frames are implemented for simple flat bands",
        ));
    }
    let h = 3.0 / grid as f64;
    let pts: Vec<(usize, usize)> = (0..grid)
        .flat_map(|i| (0..grid).map(move |j| (i, j)))
        .collect();
    let frames: Vec<Frame> = pts
        .par_iter()
        .map(|&(i, j)| {
            let k = (
                (i as f64 + 0.5 + offset.0) * h,
                (j as f64 + 0.5 + offset.1) * h,
            );
            frame_at(k, alpha12, r, m, twist, pot, trunc, method)
        })
        .collect::<Result<_>>()?;
    let at = |i: usize, j: usize| &frames[(i % grid) * grid + (j % grid)];
    // label shift picked up when wrapping around a period of Γ₃*
    let wrap = |i: usize, j: usize| (if i >= grid { 3 } else { 0 }, if j >= grid { 3 } else { 0 });
    let link = |i0: usize, j0: usize, i1: usize, j1: usize| -> (C64, f64) {
        let (w0, w1) = (wrap(i0, j0), wrap(i1, j1));
        let extra = (w1.0 - w0.0, w1.1 - w0.1);
        let d = det(&frame_overlap(at(i0, j0), at(i1, j1), extra));
        (d / d.norm(), d.norm())
    };
    let mut total = 0.0;
    let mut min_link = f64::INFINITY;
    for i in 0..grid {
        for j in 0..grid {
            let (a, na) = link(i, j, i + 1, j);
            let (b, nb) = link(i + 1, j, i + 1, j + 1);
            let (c, nc) = link(i, j + 1, i + 1, j + 1);
            let (d, nd) = link(i, j, i, j + 1);
            min_link = min_link.min(na).min(nb).min(nc).min(nd);
            total += (a * b * c.conj() * d.conj()).arg();
        }
    }
    if min_link.is_nan() || min_link <= 1e-8 {
        return Err(Error::Contract(format!(
            "kernel frames lose rank between neighbouring grid points (min overlap {min_link:.2e}); refine the grid"
        )));
    }
    let c = -total / (2.0 * PI);
    Ok(ChernReport {
        alpha: alpha12,
        multiplicity: m,
        grid,
        raw_curvature_sum: total,
        chern: c.round() as i64,
        drift: (c - c.round()).abs(),
        min_link,
    })
}

/// Gramian G_lm(k) = ⟨F_k(z+z_l)u, F_k(z+z_m)u⟩ over the y-torus.
pub fn gramian(
    u: &[C64],
    basis: &ModeBasis,
    shifts: &[C64],
    k: C64,
    g: usize,
) -> Result<Array2<C64>> {
    let (fields, _) = grid_fields(u, basis, g);
    let mults: Vec<Array2<C64>> = shifts
        .iter()
        .map(|&s| fk_grid(k, -s, g))
        .collect::<Result<_>>()?;
    let n = shifts.len();
    let mut out = Array2::zeros((n, n));
    for l in 0..n {
        for m in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for f in &fields {
                for ((a, fl), fm) in f.iter().zip(mults[l].iter()).zip(mults[m].iter()) {
                    s += (fl * a).conj() * fm * a;
                }
            }
            out[(l, m)] = s / (g * g) as f64;
        }
    }
    Ok(out)
}

/// Kernel vector of D(α) in the layer basis of `k` (smallest right singular
/// vector), for callers that need a single element.
pub fn kernel_vector(
    alpha: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<(Vec<C64>, ModeBasis, f64)> {
    let d = assemble_d(alpha, k, twist, pot, trunc)?;
    let s = linalg::smallest_singular(&d.data, 1, true)?;
    let v = s.vectors.expect("requested").column(0).to_vec();
    Ok((v, d.cols, s.values[0] / SQRT3))
}

/// A kernel function at a rotation-invariant point together with a zero to
/// seed the theta construction. Sectors are tried in order and the one with
/// the cleanest zero near ±z_S wins.
pub fn flat_band_seed(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<(Vec<C64>, ModeBasis, FloquetPoint, KernelZero)> {
    let zs = z_s();
    let dist = |z: C64| {
        (reduce_to_cell(z) - zs)
            .norm()
            .min((reduce_to_cell(z) + zs).norm())
    };
    let mut best: Option<(Vec<C64>, ModeBasis, FloquetPoint, KernelZero)> = None;
    for r in 0..3 {
        let base = FloquetPoint::sector(r);
        let (u, basis, _) = kernel_vector(alpha, &base, twist, pot, trunc)?;
        let Some(z) = zero_locator(&u, &basis, 1e-3)?
            .into_iter()
            .min_by(|a, b| dist(a.z).total_cmp(&dist(b.z)))
        else {
            continue;
        };
        if best
            .as_ref()
            .is_none_or(|b| z.relative_value < b.3.relative_value)
        {
            best = Some((u, basis, base, z));
        }
    }
    best.ok_or_else(|| {
        Error::Contract("no sector kernel function has a zero; alpha is not magic".into())
    })
}
