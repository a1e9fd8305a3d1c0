//! The scalar Birman–Schwinger operator B_k, magic parameters and their
//! verification.
//!
//! Eliminating layers 1 and 3 from (D(α)+k)u = 0 with α = α₁₂(1, r) gives
//! B_k u₂ = α₁₂⁻² u₂ with
//! B_k = R₂ U(−p) R₁ U(p) + r² R₂ U(p̃) R₃ U(−p̃), R_c = (2D_z̄ + k)⁻¹ on layer c.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::basis::{layer_basis, FloquetPoint, ModeBasis, Truncation};
use crate::error::{invalid, Error, Result};
use crate::fourier_ops::{assemble_d, d_couplings, dirac_diagonal, Coupling, OperatorMatrix};
use crate::lattice::{mod3, TwistConfig, SQRT3};
use crate::linalg;
use crate::potential::PotentialCoeffs;
use crate::samples;

/// Exclusion radius around Γ* for resolvent-based operators.
pub const EXCLUSION_RADIUS: f64 = 1e-6;

/// Relative threshold below which eigenvalues of B_k count as numerical
/// nullspace.
pub const NULL_THRESHOLD: f64 = 1e-10;

/// Relative radius used to merge numerically split eigenvalue clusters.
pub const CLUSTER_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct MagicParameter {
    pub alpha12: C64,
    pub ratio_r: C64,
    pub multiplicity: usize,
    pub verified: bool,
    pub residual: f64,
    /// Number of B_k eigenvalues merged into this entry.
    pub cluster: usize,
}

/// B_k together with the data needed to lift eigenvectors to kernel
/// elements of D(α)+k.
#[derive(Clone, Debug)]
pub struct BirmanSchwinger {
    pub op: OperatorMatrix,
    pub ratio_r: C64,
    basis3: ModeBasis,
    diag: [Vec<C64>; 3],
    couplings: [Coupling; 4],
}

pub fn assemble_bk(
    ratio_r: C64,
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<BirmanSchwinger> {
    if pot.sym_j != -1 {
        return Err(invalid(
            "the tunnelling potential must carry the translation weight of sym_j = -1",
        ));
    }
    if k.dist_to_dual_lattice() < EXCLUSION_RADIUS {
        return Err(invalid(format!(
            "k = {:?} lies within {EXCLUSION_RADIUS:e} of the dual lattice; B_k is undefined there",
            k.rect()
        )));
    }
    let basis3 = layer_basis(twist, k, trunc);
    let diag = [0, 1, 2].map(|c| dirac_diagonal(&basis3.comps[c], k));
    let one = C64::new(1.0, 0.0);
    let couplings = d_couplings((one, one), twist, pot, &basis3);
    let n = basis3.comps[1].len();
    let mut b = Array2::<C64>::zeros((n, n));
    let r2 = ratio_r * ratio_r;
    let [c01, c10, c12, c21] = &couplings;
    for j in 0..n {
        for &(t0, w1) in &c01.cols[j] {
            let w = w1 / diag[0][t0];
            for &(t1, w2) in &c10.cols[t0] {
                b[(t1, j)] += w2 * w;
            }
        }
        for &(t2, w1) in &c21.cols[j] {
            let w = r2 * w1 / diag[2][t2];
            for &(t1, w2) in &c12.cols[t2] {
                b[(t1, j)] += w2 * w;
            }
        }
    }
    for (i, mut row) in b.rows_mut().into_iter().enumerate() {
        let d = diag[1][i];
        row.mapv_inplace(|v| v / d);
    }
    let rows = ModeBasis::new(trunc, &[basis3.comps[1].class]);
    let op = OperatorMatrix {
        data: b,
        rows: rows.clone(),
        cols: rows,
        k: *k,
        label: "B_k".into(),
    };
    Ok(BirmanSchwinger {
        op,
        ratio_r,
        basis3,
        diag,
        couplings,
    })
}

impl BirmanSchwinger {
    /// Three-layer basis of D(α)+k.
    pub fn layer_basis(&self) -> &ModeBasis {
        &self.basis3
    }

    /// Lifts a B_k eigenvector u₂ (eigenvalue 1/α₁₂²) to (u₁, u₂, u₃) in
    /// ker(D(α)+k): u₁ = −α₁₂ R₁U(p)u₂, u₃ = −α₂₃ R₃U(−p̃)u₂.
    pub fn lift(&self, u2: &Array1<C64>, alpha12: C64) -> Array1<C64> {
        let b = &self.basis3;
        let mut out = Array1::zeros(b.dim());
        let alpha23 = alpha12 * self.ratio_r;
        let [c01, _, _, c21] = &self.couplings;
        for (j, &v) in u2.iter().enumerate() {
            out[b.offsets[1] + j] = v;
            for &(t, w) in &c01.cols[j] {
                out[b.offsets[0] + t] -= alpha12 * w * v / self.diag[0][t];
            }
            for &(t, w) in &c21.cols[j] {
                out[b.offsets[2] + t] -= alpha23 * w * v / self.diag[2][t];
            }
        }
        out
    }
}

/// Magic parameters α₁₂ = ±λ^{−1/2} from the spectrum of B_k, sorted by |α|
/// then by principal argument.
pub fn magic_from_bk(bk: &BirmanSchwinger, count: Option<usize>) -> Result<Vec<MagicParameter>> {
    let vals = linalg::eigenvalues(&bk.op.data).map_err(|e| {
        Error::Linalg(format!(
            "{e}; |B|_F = {:.3e}, dim {}",
            linalg::frobenius(&bk.op.data),
            bk.op.data.nrows()
        ))
    })?;
    Ok(magic_from_eigenvalues(
        &vals,
        linalg::frobenius(&bk.op.data),
        bk.ratio_r,
        count,
    ))
}

pub fn magic_from_eigenvalues(
    vals: &[C64],
    norm: f64,
    ratio_r: C64,
    count: Option<usize>,
) -> Vec<MagicParameter> {
    let mut out = Vec::new();
    for &l in vals {
        if l.norm() < NULL_THRESHOLD * norm {
            continue;
        }
        let a = l.sqrt().inv();
        for s in [a, -a] {
            out.push(MagicParameter {
                alpha12: s,
                ratio_r,
                multiplicity: 1,
                verified: false,
                residual: f64::NAN,
                cluster: 1,
            });
        }
    }
    sort_magic(&mut out);
    if let Some(c) = count {
        out.truncate(c);
    }
    out
}

fn principal_arg(z: C64) -> f64 {
    let a = z.arg();
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

pub fn sort_magic(v: &mut [MagicParameter]) {
    v.sort_by(|a, b| {
        a.alpha12
            .norm()
            .total_cmp(&b.alpha12.norm())
            .then(principal_arg(a.alpha12).total_cmp(&principal_arg(b.alpha12)))
    });
}

/// Merges entries whose α agree to `rel_tol`·|α|; `cluster` counts members.
pub fn cluster_magic(list: &[MagicParameter], rel_tol: f64) -> Vec<MagicParameter> {
    let mut out: Vec<MagicParameter> = Vec::new();
    let mut sums: Vec<C64> = Vec::new();
    'outer: for m in list {
        for (i, o) in out.iter_mut().enumerate() {
            if (o.alpha12 - m.alpha12).norm() <= rel_tol * m.alpha12.norm() {
                o.cluster += 1;
                sums[i] += m.alpha12;
                o.alpha12 = sums[i] / o.cluster as f64;
                continue 'outer;
            }
        }
        out.push(m.clone());
        sums.push(m.alpha12);
    }
    sort_magic(&mut out);
    out
}

/// Keeps one of each ±α pair: Re α > 0, or Re α = 0 with Im α > 0.
pub fn right_half_plane(list: &[MagicParameter]) -> Vec<MagicParameter> {
    list.iter()
        .filter(|m| m.alpha12.re > 0.0 || (m.alpha12.re == 0.0 && m.alpha12.im > 0.0))
        .cloned()
        .collect()
}

/// Deterministic Floquet samples spread over [−1.5, 1.5)², at distance at
/// least `margin` (rectangular units) from ℤ², hence away from Γ* and the
/// protected points.
pub fn generic_k_samples(count: usize, margin: f64) -> Vec<FloquetPoint> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count {
        let (a, b) = samples::r2(i);
        i += 1;
        let (k1, k2) = (-1.5 + 3.0 * a, -1.5 + 3.0 * b);
        if (k1 - k1.round()).hypot(k2 - k2.round()) < margin {
            continue;
        }
        out.push(FloquetPoint::reduced(k1, k2));
    }
    out
}

/// Physical singular values (ascending) of D(α)+k.
pub fn d_singular_values(
    alpha: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
    count: usize,
) -> Result<Vec<f64>> {
    let d = assemble_d(alpha, k, twist, pot, trunc)?;
    let s = linalg::smallest_singular(&d.data, count, false)?;
    Ok(s.values.iter().map(|v| v / SQRT3).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub verified: bool,
    pub residual: f64,
    pub per_k: Vec<f64>,
}

/// σ_min(D(α)+k) < tol at every sample.
pub fn verify_magic(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    k_samples: &[FloquetPoint],
    trunc: Truncation,
    tol: f64,
) -> Result<Verification> {
    let per_k: Vec<f64> = k_samples
        .par_iter()
        .map(|k| d_singular_values(alpha, k, twist, pot, trunc, 1).map(|v| v[0]))
        .collect::<Result<_>>()?;
    let residual = per_k.iter().copied().fold(0.0, f64::max);
    Ok(Verification {
        verified: residual < tol,
        residual,
        per_k,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Multiplicity {
    pub value: usize,
    pub unresolved: bool,
    pub counts: Vec<usize>,
    pub sigmas: Vec<Vec<f64>>,
}

/// min over sampled k of #{σ_j(D(α)+k) < tol}; the samples must avoid the
/// protected points and Γ₃*.
pub fn multiplicity(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    k_samples: &[FloquetPoint],
    trunc: Truncation,
    tol: f64,
) -> Result<Multiplicity> {
    for k in k_samples {
        let (a, b) = k.rect();
        let near = |x: f64| (x - x.round()).abs();
        if near(a).hypot(near(b)) < 1e-3 && mod3(a.round() as i64 - b.round() as i64) == 0 {
            return Err(invalid(
                "multiplicity samples must avoid the protected points",
            ));
        }
    }
    let sigmas: Vec<Vec<f64>> = k_samples
        .par_iter()
        .map(|k| d_singular_values(alpha, k, twist, pot, trunc, 4))
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = sigmas
        .iter()
        .map(|s| s.iter().filter(|&&v| v < tol).count())
        .collect();
    let value = counts.iter().copied().min().unwrap_or(0);
    if value == 0 {
        return Err(Error::Contract(format!(
            "alpha = {} is not magic at tolerance {tol:e}: some sample has a trivial kernel",
            alpha.0
        )));
    }
    let unresolved = sigmas.iter().flatten().any(|&v| v >= tol && v < 10.0 * tol);
    Ok(Multiplicity {
        value,
        unresolved,
        counts,
        sigmas,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub ratio_num: i64,
    pub ratio_den: i64,
    pub hop_ratio: C64,
    pub alpha: C64,
    pub multiplicity: Option<usize>,
    pub residual: Option<f64>,
    pub n: i64,
    pub error: Option<String>,
}

/// One discovery row set per (twist ratio, hopping ratio) pair at a fixed
/// generic k; `verify` adds residual and multiplicity per entry.
pub fn sweep(
    points: &[(num_rational::Rational64, C64)],
    pot: &PotentialCoeffs,
    count: usize,
    trunc: Truncation,
    verify: Option<(usize, f64)>,
) -> Vec<SweepRow> {
    let k = FloquetPoint::reduced(0.31, -0.17);
    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|&(ratio, hop)| {
            let fail = |e: Error| {
                vec![SweepRow {
                    ratio_num: *ratio.numer(),
                    ratio_den: *ratio.denom(),
                    hop_ratio: hop,
                    alpha: C64::new(f64::NAN, f64::NAN),
                    multiplicity: None,
                    residual: None,
                    n: trunc.n,
                    error: Some(e.to_string()),
                }]
            };
            let run = || -> Result<Vec<SweepRow>> {
                let twist = crate::lattice::derive_config(1.0, ratio)?;
                let r = twist.effective_hop_ratio(hop);
                let bk = assemble_bk(r, &k, &twist, pot, trunc)?;
                let list =
                    right_half_plane(&cluster_magic(&magic_from_bk(&bk, None)?, CLUSTER_TOL));
                let mut out = Vec::new();
                for m in list.into_iter().take(count) {
                    let alpha = (m.alpha12, m.alpha12 * r);
                    let (mult, res) = match verify {
                        Some((ns, tol)) => {
                            let ks = generic_k_samples(ns, 0.1);
                            let v = verify_magic(alpha, &twist, pot, &ks, trunc, tol)?;
                            let mu = if v.verified {
                                multiplicity(alpha, &twist, pot, &ks, trunc, tol)
                                    .ok()
                                    .map(|m| m.value)
                            } else {
                                None
                            };
                            (mu, Some(v.residual))
                        }
                        None => (None, None),
                    };
                    out.push(SweepRow {
                        ratio_num: *ratio.numer(),
                        ratio_den: *ratio.denom(),
                        hop_ratio: hop,
                        alpha: m.alpha12,
                        multiplicity: mult,
                        residual: res,
                        n: trunc.n,
                        error: None,
                    });
                }
                Ok(out)
            };
            run().unwrap_or_else(fail)
        })
        .collect();
    rows.into_iter().flatten().collect()
}
