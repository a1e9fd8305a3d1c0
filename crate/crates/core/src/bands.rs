//! Band structures, protected-state sector diagnostics, the Wronskian,
//! band-touching location and zeros of kernel functions.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::basis::{rotation_basis, FloquetPoint, ModeBasis, Truncation};
use crate::error::{Error, Result};
use crate::fourier_ops::{assemble_antichiral, assemble_d, assemble_h, synthesize};
use crate::lattice::{mod3, y_to_z, z_s, z_to_y, Case, TwistConfig, SQRT3};
use crate::linalg;
use crate::potential::PotentialCoeffs;

/// Default 15×15 band grid in rectangular units, k_i = −1.4 + 0.2·i; the
/// nodes include every integer pair in [−1, 1]², hence all protected points.
pub fn default_band_grid() -> Vec<FloquetPoint> {
    rect_grid(15, -1.4, 0.2)
}

/// Default 11×11 scan grid for the anti-chiral gap, k_i = −1.5 + 3i/11.
pub fn default_antichiral_grid() -> Vec<FloquetPoint> {
    rect_grid(11, -1.5, 3.0 / 11.0)
}

pub fn rect_grid(n: usize, start: f64, step: f64) -> Vec<FloquetPoint> {
    let at = |i: usize| start + step * i as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| FloquetPoint::reduced(at(i), at(j))))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BandGrid {
    pub ks: Vec<C64>,
    /// Per k, the j_max smallest nonnegative energies, ascending.
    pub bands: Vec<Vec<f64>>,
    pub alpha: (C64, C64),
    pub alpha_tilde: (C64, C64),
    pub zeta: (f64, f64),
    pub n: i64,
}

impl BandGrid {
    pub fn max_band(&self, j: usize) -> f64 {
        self.bands.iter().map(|b| b[j]).fold(0.0, f64::max)
    }

    pub fn min_band(&self, j: usize) -> f64 {
        self.bands
            .iter()
            .map(|b| b[j])
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV `k_re,k_im,E1..Ej`.
    pub fn to_csv(&self) -> String {
        let j = self.bands.first().map_or(0, Vec::len);
        let mut s = String::from("k_re,k_im");
        for i in 1..=j {
            let _ = write!(s, ",E{i}");
        }
        s.push('\n');
        for (k, b) in self.ks.iter().zip(&self.bands) {
            let _ = write!(s, "{},{}", fmt12(k.re), fmt12(k.im));
            for e in b {
                let _ = write!(s, ",{}", fmt12(*e));
            }
            s.push('\n');
        }
        s
    }
}

/// Fixed 12-significant-digit formatting used by every CSV writer.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.11e}")
}

/// Energies of the chiral model are the singular values of D(α)+k; with
/// α̃ ≠ 0 they are the nonnegative eigenvalues of H_k. Values are physical
/// (rectangular/√3). The Γ₃ Floquet spaces carry each Γ-band once, so no
/// 9-fold inflation appears here.
#[allow(clippy::too_many_arguments)]
pub fn band_structure(
    alpha: (C64, C64),
    alpha_tilde: (C64, C64),
    twist: &TwistConfig,
    pot_u: &PotentialCoeffs,
    pot_v: &PotentialCoeffs,
    ks: &[FloquetPoint],
    j_max: usize,
    trunc: Truncation,
) -> Result<BandGrid> {
    let chiral = alpha_tilde.0.norm() == 0.0 && alpha_tilde.1.norm() == 0.0;
    let bands: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|k| -> Result<Vec<f64>> {
            if chiral {
                let d = assemble_d(alpha, k, twist, pot_u, trunc)?;
                let s = linalg::smallest_singular(&d.data, j_max, false)?;
                Ok(s.values.iter().map(|v| v / SQRT3).collect())
            } else {
                let h = assemble_h(alpha, alpha_tilde, k, twist, pot_u, pot_v, trunc)?;
                let ev = linalg::eigvalsh(&h.data)?;
                Ok(ev
                    .iter()
                    .filter(|&&e| e >= 0.0)
                    .take(j_max)
                    .map(|e| e / SQRT3)
                    .collect())
            }
        })
        .collect::<Result<_>>()?;
    Ok(BandGrid {
        ks: ks.iter().map(FloquetPoint::k).collect(),
        bands,
        alpha,
        alpha_tilde,
        zeta: (twist.zeta1, twist.zeta1 * ratio_f64(twist)),
        n: trunc.n,
    })
}

fn ratio_f64(t: &TwistConfig) -> f64 {
    *t.ratio.numer() as f64 / *t.ratio.denom() as f64
}

/// Distinct protected sectors r ∈ {p, 0, −q} mod 3 with the number of
/// protected states each must carry.
pub fn protected_sectors(twist: &TwistConfig) -> Vec<(i64, usize)> {
    let mut out: Vec<(i64, usize)> = Vec::new();
    for r in [twist.p, 0, -twist.q] {
        match out.iter_mut().find(|(s, _)| mod3(*s) == mod3(r)) {
            Some(e) => e.1 += 1,
            None => out.push((r, 1)),
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorKernel {
    pub r: i64,
    pub expected: usize,
    pub dim: usize,
    /// Smallest physical singular values of D(α) on the sector.
    pub sigmas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtectedReport {
    pub case_tag: Case,
    pub sectors: Vec<SectorKernel>,
    /// Case I: one sector with dim ≥ 2 and another with dim ≥ 1;
    /// Case II: three sectors with dim ≥ 1.
    pub pattern_ok: bool,
}

struct SectorSolve {
    sigmas: Vec<f64>,
    vectors: Array2<C64>,
    basis: ModeBasis,
}

/// a·q for a q with at most three nonzeros per column; a dense product is
/// quadratic in the basis size for no gain.
fn times_sparse(a: &Array2<C64>, q: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.nrows(), q.ncols()));
    for (j, qc) in q.columns().into_iter().enumerate() {
        let mut oc = out.column_mut(j);
        for (i, &w) in qc.iter().enumerate() {
            if w.norm() != 0.0 {
                oc.scaled_add(w, &a.column(i));
            }
        }
    }
    out
}

/// D(α) restricted to L²_{r,0}: the Floquet space at k = −ir intersected
/// with the ℓ = 0 rotation sector.
fn sector_solve(
    alpha: (C64, C64),
    r: i64,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    count: usize,
) -> Result<SectorSolve> {
    let d = assemble_d(alpha, &FloquetPoint::sector(r), twist, pot, trunc)?;
    let q = rotation_basis(&d.cols, 0)?;
    let dq = times_sparse(&d.data, &q);
    let s = linalg::smallest_singular(&dq, count, true)?;
    let v = q.dot(&s.vectors.expect("requested"));
    Ok(SectorSolve {
        sigmas: s.values.iter().map(|x| x / SQRT3).collect(),
        vectors: v,
        basis: d.cols,
    })
}

pub fn protected_states(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    tol: f64,
) -> Result<ProtectedReport> {
    let mut sectors = Vec::new();
    for (r, expected) in protected_sectors(twist) {
        let s = sector_solve(alpha, r, twist, pot, trunc, expected + 2)?;
        let dim = s.sigmas.iter().filter(|&&v| v < tol).count();
        sectors.push(SectorKernel {
            r,
            expected,
            dim,
            sigmas: s.sigmas,
        });
    }
    let mut dims: Vec<usize> = sectors.iter().map(|s| s.dim).collect();
    dims.sort_unstable_by(|a, b| b.cmp(a));
    let pattern_ok = match twist.case_tag {
        Case::CaseI => dims.len() == 2 && dims[0] >= 2 && dims[1] >= 1,
        Case::CaseII => dims.len() == 3 && dims.iter().all(|&d| d >= 1),
    };
    Ok(ProtectedReport {
        case_tag: twist.case_tag,
        sectors,
        pattern_ok,
    })
}

fn phase_fix(v: &mut Array1<C64>) {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(C64::new(1.0, 0.0));
    let ph = big.conj() / big.norm();
    v.mapv_inplace(|x| x * ph / n);
}

#[derive(Clone, Debug, Serialize)]
pub struct WronskianReport {
    pub value: C64,
    pub modulus: f64,
    /// Some sector has more near-zero singular values than protected states.
    pub degenerate: bool,
    pub sector_sigmas: Vec<(i64, Vec<f64>)>,
}

/// W(α) = det[φ, ψ, ρ](z_S) from unit-norm, phase-fixed protected states.
pub fn wronskian(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    tol: f64,
) -> Result<WronskianReport> {
    let mut cols: Vec<[C64; 3]> = Vec::with_capacity(3);
    let mut degenerate = false;
    let mut sector_sigmas = Vec::new();
    for (r, expected) in protected_sectors(twist) {
        let s = sector_solve(alpha, r, twist, pot, trunc, expected + 1)?;
        if s.sigmas.get(expected).is_some_and(|&v| v < 10.0 * tol) {
            degenerate = true;
        }
        for j in 0..expected {
            let mut v = s.vectors.column(j).to_owned();
            phase_fix(&mut v);
            let vals = synthesize(v.as_slice().expect("contiguous"), &s.basis, &[z_s()]);
            cols.push([vals[0][0], vals[0][1], vals[0][2]]);
        }
        sector_sigmas.push((r, s.sigmas));
    }
    let m = Array2::from_shape_fn((3, 3), |(i, j)| cols[j][i]);
    let value = det3(&m);
    Ok(WronskianReport {
        value,
        modulus: value.norm(),
        degenerate,
        sector_sigmas,
    })
}

fn det3(m: &Array2<C64>) -> C64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

#[derive(Clone, Debug, Serialize)]
pub struct WronskianScanRow {
    pub alpha: f64,
    pub modulus: f64,
    pub degenerate: bool,
}

/// |W| along real α12 with α23 = r·α12.
pub fn wronskian_scan(
    alphas: &[f64],
    ratio_r: C64,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    tol: f64,
) -> Result<Vec<WronskianScanRow>> {
    alphas
        .par_iter()
        .map(|&a| {
            let a12 = C64::new(a, 0.0);
            let w = wronskian((a12, a12 * ratio_r), twist, pot, trunc, tol)?;
            Ok(WronskianScanRow {
                alpha: a,
                modulus: w.modulus,
                degenerate: w.degenerate,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TouchCandidate {
    pub r: i64,
    pub k: C64,
    pub sigmas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TouchReport {
    pub k0: C64,
    pub r: i64,
    pub candidates: Vec<TouchCandidate>,
    /// Smallest second singular value at the other candidates.
    pub gap_elsewhere: f64,
}

/// The unique point among {−ip, 0, iq} where the first two bands meet.
pub fn band_touch_locator(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    tol: f64,
) -> Result<TouchReport> {
    let candidates: Vec<TouchCandidate> = protected_sectors(twist)
        .par_iter()
        .map(|&(r, _)| {
            let k = FloquetPoint::sector(r);
            let d = assemble_d(alpha, &k, twist, pot, trunc)?;
            let s = linalg::smallest_singular(&d.data, 3, false)?;
            Ok(TouchCandidate {
                r,
                k: k.k(),
                sigmas: s.values.iter().map(|v| v / SQRT3).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let hits: Vec<&TouchCandidate> = candidates.iter().filter(|c| c.sigmas[1] < tol).collect();
    if hits.len() != 1 {
        return Err(Error::Contract(format!(
            "{} touching candidates below {tol:e} (second singular values {:?}); alpha may not be simple or N is too small",
            hits.len(),
            candidates.iter().map(|c| c.sigmas[1]).collect::<Vec<_>>()
        )));
    }
    let hit = hits[0].clone();
    let gap_elsewhere = candidates
        .iter()
        .filter(|c| c.r != hit.r)
        .map(|c| c.sigmas[1])
        .fold(f64::INFINITY, f64::min);
    Ok(TouchReport {
        k0: hit.k,
        r: hit.r,
        candidates,
        gap_elsewhere,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelZero {
    pub z: C64,
    pub order: i64,
    /// max_c |u_c(z)| / sup|u|.
    pub relative_value: f64,
}

const ZERO_GRID: usize = 48;

/// Winding number of the already-sampled closed polygon.
fn winding(vals: &[C64]) -> i64 {
    let mut total = 0.0;
    for i in 0..vals.len() {
        let a = vals[i];
        let b = vals[(i + 1) % vals.len()];
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

/// Zeros of a vector-valued Fourier series over one cell of ℂ/Γ₃ (y in a
/// 2π/3 square), located by winding numbers of the dominant component on a
/// 48×48 grid, refined on sub-grids and polished by Newton steps. Zeros of
/// the dominant component where the other components do not vanish are
/// discarded.
pub fn zero_locator(coeffs: &[C64], basis: &ModeBasis, value_tol: f64) -> Result<Vec<KernelZero>> {
    if coeffs.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::Contract(
            "zero_locator needs a nonzero function".into(),
        ));
    }
    let h = 2.0 * PI / 3.0 / ZERO_GRID as f64;
    // deterministic jiggle keeps 0 and ±z_S off cell edges
    let origin = (-PI / 3.0 + 0.137 * h, -PI / 3.0 + 0.291 * h);
    let node = |i: usize, j: usize| y_to_z(origin.0 + h * i as f64, origin.1 + h * j as f64);
    let nodes: Vec<C64> = (0..=ZERO_GRID)
        .flat_map(|i| (0..=ZERO_GRID).map(move |j| (i, j)))
        .map(|(i, j)| node(i, j))
        .collect();
    let vals: Vec<Vec<C64>> = nodes
        .par_chunks(64)
        .flat_map_iter(|c| synthesize(coeffs, basis, c))
        .collect();
    let ncomp = basis.comps.len();
    let sups: Vec<f64> = (0..ncomp)
        .map(|c| vals.iter().map(|v| v[c].norm()).fold(0.0, f64::max))
        .collect();
    let sup = sups.iter().copied().fold(0.0, f64::max);
    let dom = (0..ncomp)
        .max_by(|&a, &b| sups[a].total_cmp(&sups[b]))
        .expect("components");
    let at = |i: usize, j: usize| vals[i * (ZERO_GRID + 1) + j][dom];
    let mut zeros = Vec::new();
    for i in 0..ZERO_GRID {
        for j in 0..ZERO_GRID {
            let order = winding(&[at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
            if order == 0 {
                continue;
            }
            let y0 = (origin.0 + h * i as f64, origin.1 + h * j as f64);
            let z = refine_zero(coeffs, basis, dom, y0, h);
            let v = synthesize(coeffs, basis, &[z]);
            let rel = v[0].iter().map(|x| x.norm()).fold(0.0, f64::max) / sup;
            let seen = zeros
                .iter()
                .any(|w: &KernelZero| reduce_to_cell(w.z - z).norm() < 1e-6);
            if rel < value_tol && !seen {
                zeros.push(KernelZero {
                    z,
                    order,
                    relative_value: rel,
                });
            }
        }
    }
    Ok(zeros)
}

fn refine_zero(
    coeffs: &[C64],
    basis: &ModeBasis,
    dom: usize,
    mut y0: (f64, f64),
    mut h: f64,
) -> C64 {
    let f = |y: (f64, f64)| synthesize(coeffs, basis, &[y_to_z(y.0, y.1)])[0][dom];
    // two rounds of 8×8 sub-grid winding localization
    for _ in 0..2 {
        let s = h / 8.0;
        let mut found = None;
        'outer: for a in 0..8 {
            for b in 0..8 {
                let c = (y0.0 + s * a as f64, y0.1 + s * b as f64);
                let w = winding(&[
                    f(c),
                    f((c.0 + s, c.1)),
                    f((c.0 + s, c.1 + s)),
                    f((c.0, c.1 + s)),
                ]);
                if w != 0 {
                    found = Some(c);
                    break 'outer;
                }
            }
        }
        match found {
            Some(c) => {
                y0 = c;
                h = s;
            }
            None => break,
        }
    }
    // Newton on the dominant component, then Gauss-Newton on all of them so
    // that a common zero is preferred over a zero of one component
    let mut y = (y0.0 + h / 2.0, y0.1 + h / 2.0);
    let e = 1e-7;
    for _ in 0..20 {
        let v = f(y);
        let d1 = (f((y.0 + e, y.1)) - f((y.0 - e, y.1))) / (2.0 * e);
        let d2 = (f((y.0, y.1 + e)) - f((y.0, y.1 - e))) / (2.0 * e);
        let det = d1.re * d2.im - d2.re * d1.im;
        if det.abs() < 1e-300 {
            break;
        }
        let s1 = (v.re * d2.im - d2.re * v.im) / det;
        let s2 = (d1.re * v.im - v.re * d1.im) / det;
        y = (y.0 - s1, y.1 - s2);
        if s1.hypot(s2) < 1e-14 {
            break;
        }
    }
    let all = |y: (f64, f64)| synthesize(coeffs, basis, &[y_to_z(y.0, y.1)]).remove(0);
    let resid = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
    for _ in 0..20 {
        let v = all(y);
        let p1 = all((y.0 + e, y.1));
        let m1 = all((y.0 - e, y.1));
        let p2 = all((y.0, y.1 + e));
        let m2 = all((y.0, y.1 - e));
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for c in 0..v.len() {
            let j1 = (p1[c] - m1[c]) / (2.0 * e);
            let j2 = (p2[c] - m2[c]) / (2.0 * e);
            a11 += j1.norm_sqr();
            a22 += j2.norm_sqr();
            a12 += (j1.conj() * j2).re;
            b1 += (j1.conj() * v[c]).re;
            b2 += (j2.conj() * v[c]).re;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let s1 = (a22 * b1 - a12 * b2) / det;
        let s2 = (a11 * b2 - a12 * b1) / det;
        let next = (y.0 - s1, y.1 - s2);
        if resid(&all(next)) >= resid(&v) {
            break;
        }
        y = next;
        if s1.hypot(s2) < 1e-14 {
            break;
        }
    }
    y_to_z(y.0, y.1)
}

/// Representative of z in the cell centred at 0, for comparing zeros with ±z_S.
pub fn reduce_to_cell(z: C64) -> C64 {
    let t = 2.0 * PI / 3.0;
    let (y1, y2) = z_to_y(z);
    let r = |y: f64| y - t * (y / t).round();
    y_to_z(r(y1), r(y2))
}

#[derive(Clone, Debug, Serialize)]
pub struct AntichiralGap {
    pub min_sigma: f64,
    pub argmin_k: C64,
    pub per_k: Vec<f64>,
}

/// min over the grid of σ_min(D_ac,k), physical units.
pub fn antichiral_gap_scan(
    alpha_tilde: (C64, C64),
    twist: &TwistConfig,
    pot_v: &PotentialCoeffs,
    ks: &[FloquetPoint],
    trunc: Truncation,
) -> Result<AntichiralGap> {
    let per_k: Vec<f64> = ks
        .par_iter()
        .map(|k| {
            let d = assemble_antichiral(alpha_tilde, k, twist, pot_v, trunc)?;
            Ok(linalg::smallest_singular(&d.data, 1, false)?.values[0] / SQRT3)
        })
        .collect::<Result<_>>()?;
    let (i, &min_sigma) = per_k
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    Ok(AntichiralGap {
        min_sigma,
        argmin_k: ks[i].k(),
        per_k,
    })
}
