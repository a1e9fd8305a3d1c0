//! Truncated operators in rectangular Fourier coordinates.
//!
//! All matrices are √3 times the physical operator: the Dirac symbol is
//! γ_μ + κ = ω²(m + k₁) − ω(n + k₂) and a potential coefficient c enters as
//! √3 c. Physical singular values are the rectangular ones divided by √3.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rustfft::{num_complex::Complex, FftPlanner};
use std::sync::Arc;

use crate::basis::{layer_basis, ComponentBasis, FloquetPoint, ModeBasis, Truncation};
use crate::error::{invalid, Result};
use crate::lattice::{gamma_mode, z_to_y, TwistConfig, SQRT3};
use crate::potential::PotentialCoeffs;

/// Dense operator together with the bases of its domain and range.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub data: Array2<C64>,
    pub rows: ModeBasis,
    pub cols: ModeBasis,
    pub k: FloquetPoint,
    pub label: String,
}

/// Sparse column-wise coupling: for each source index, its (target, weight)
/// list.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub ntgt: usize,
    pub cols: Vec<Vec<(usize, C64)>>,
}

impl Coupling {
    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.ntgt, self.cols.len()));
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, w) in col {
                a[(i, j)] += w;
            }
        }
        a
    }

    pub fn scaled(mut self, s: C64) -> Self {
        self.cols.iter_mut().flatten().for_each(|(_, w)| *w *= s);
        self
    }
}

/// Multiplication by u(scale·z) from `src` to `tgt` modes; couplings leaving
/// the box are dropped.
pub fn multiplication(
    pot: &PotentialCoeffs,
    scale: i64,
    tgt: &ComponentBasis,
    src: &ComponentBasis,
) -> Coupling {
    let shifts: Vec<((i64, i64), C64)> = pot
        .coeffs
        .iter()
        .map(|(&nm, &c)| (pot.mode_of(nm, scale), c * SQRT3))
        .collect();
    let cols = src
        .modes
        .iter()
        .map(|&(m, n)| {
            shifts
                .iter()
                .filter_map(|&((a, b), w)| tgt.position((m + a, n + b)).map(|i| (i, w)))
                .collect()
        })
        .collect();
    Coupling {
        ntgt: tgt.len(),
        cols,
    }
}

/// Diagonal γ_μ + κ for one component.
pub fn dirac_diagonal(comp: &ComponentBasis, k: &FloquetPoint) -> Vec<C64> {
    let kap = k.kappa();
    comp.modes
        .iter()
        .map(|&(m, n)| gamma_mode(m as f64, n as f64) + kap)
        .collect()
}

/// The Dirac operator 2D_z̄ + k on every component of `basis`.
pub fn assemble_dirac(k: &FloquetPoint, basis: &ModeBasis) -> OperatorMatrix {
    let n = basis.dim();
    let mut a = Array2::zeros((n, n));
    for (c, comp) in basis.comps.iter().enumerate() {
        for (i, d) in dirac_diagonal(comp, k).into_iter().enumerate() {
            let g = basis.offsets[c] + i;
            a[(g, g)] = d;
        }
    }
    OperatorMatrix {
        data: a,
        rows: basis.clone(),
        cols: basis.clone(),
        k: *k,
        label: "dirac".into(),
    }
}

/// Scalar multiplication operator on a single-component basis.
pub fn assemble_multiplication(
    pot: &PotentialCoeffs,
    scale: i64,
    basis: &ComponentBasis,
) -> Array2<C64> {
    multiplication(pot, scale, basis, basis).to_dense()
}

fn add_block(dst: &mut Array2<C64>, r0: usize, c0: usize, blk: &Array2<C64>) {
    let (m, n) = blk.dim();
    dst.slice_mut(ndarray::s![r0..r0 + m, c0..c0 + n])
        .zip_mut_with(blk, |a, b| *a += b);
}

fn require_u_type(pot: &PotentialCoeffs) -> Result<()> {
    if pot.sym_j != -1 {
        return Err(invalid(
            "the tunnelling potential must carry the translation weight of sym_j = -1",
        ));
    }
    Ok(())
}

/// The four off-diagonal couplings of D(α): (0←1) α₁₂U(pz), (1←0) α₁₂U(−pz),
/// (1←2) α₂₃U(p̃z), (2←1) α₂₃U(−p̃z).
pub fn d_couplings(
    alpha: (C64, C64),
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    basis: &ModeBasis,
) -> [Coupling; 4] {
    let (p, pt) = (twist.p, twist.p_tilde);
    let c = &basis.comps;
    [
        multiplication(pot, p, &c[0], &c[1]).scaled(alpha.0),
        multiplication(pot, -p, &c[1], &c[0]).scaled(alpha.0),
        multiplication(pot, pt, &c[1], &c[2]).scaled(alpha.1),
        multiplication(pot, -pt, &c[2], &c[1]).scaled(alpha.1),
    ]
}

/// D(α) + k on the Floquet space at k (rectangular units).
pub fn assemble_d(
    alpha: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<OperatorMatrix> {
    require_u_type(pot)?;
    let basis = layer_basis(twist, k, trunc);
    Ok(assemble_d_on(alpha, k, twist, pot, &basis))
}

pub fn assemble_d_on(
    alpha: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    basis: &ModeBasis,
) -> OperatorMatrix {
    let mut op = assemble_dirac(k, basis);
    let o = &basis.offsets;
    let [c01, c10, c12, c21] = d_couplings(alpha, twist, pot, basis);
    add_block(&mut op.data, o[0], o[1], &c01.to_dense());
    add_block(&mut op.data, o[1], o[0], &c10.to_dense());
    add_block(&mut op.data, o[1], o[2], &c12.to_dense());
    add_block(&mut op.data, o[2], o[1], &c21.to_dense());
    op.label = "D(alpha)+k".into();
    op
}

/// W(α̃) couplings: (0←1) α̃₁₂V(pz), (1←2) α̃₂₃V(p̃z) and their adjoints.
fn w_block(
    alpha_t: (C64, C64),
    twist: &TwistConfig,
    pot_v: &PotentialCoeffs,
    basis: &ModeBasis,
) -> Array2<C64> {
    let n = basis.dim();
    let o = &basis.offsets;
    let c = &basis.comps;
    let mut w = Array2::zeros((n, n));
    let v01 = multiplication(pot_v, twist.p, &c[0], &c[1])
        .scaled(alpha_t.0)
        .to_dense();
    let v12 = multiplication(pot_v, twist.p_tilde, &c[1], &c[2])
        .scaled(alpha_t.1)
        .to_dense();
    add_block(&mut w, o[0], o[1], &v01);
    add_block(&mut w, o[1], o[0], &crate::linalg::adjoint(&v01));
    add_block(&mut w, o[1], o[2], &v12);
    add_block(&mut w, o[2], o[1], &crate::linalg::adjoint(&v12));
    w
}

/// H_k(α, α̃) = [[W, (D+k)*], [D+k, W]] on six components.
pub fn assemble_h(
    alpha: (C64, C64),
    alpha_t: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot_u: &PotentialCoeffs,
    pot_v: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<OperatorMatrix> {
    let d = assemble_d(alpha, k, twist, pot_u, trunc)?;
    let basis3 = d.rows.clone();
    let n = basis3.dim();
    let w = w_block(alpha_t, twist, pot_v, &basis3);
    let mut h = Array2::zeros((2 * n, 2 * n));
    add_block(&mut h, 0, 0, &w);
    add_block(&mut h, n, n, &w);
    add_block(&mut h, n, 0, &d.data);
    add_block(&mut h, 0, n, &crate::linalg::adjoint(&d.data));
    let classes: Vec<_> = basis3
        .comps
        .iter()
        .chain(basis3.comps.iter())
        .map(|c| c.class)
        .collect();
    let b6 = ModeBasis::new(trunc, &classes);
    Ok(OperatorMatrix {
        data: h,
        rows: b6.clone(),
        cols: b6,
        k: *k,
        label: "H(alpha,alpha~)".into(),
    })
}

/// The anti-chiral block D_ac,k with rows (e₁, e₅, e₃) and columns
/// (e₂, e₄, e₆).
pub fn assemble_antichiral(
    alpha_t: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot_v: &PotentialCoeffs,
    trunc: Truncation,
) -> Result<OperatorMatrix> {
    let l = layer_basis(twist, k, trunc);
    let [l1, l2, l3] = [l.comps[0].class, l.comps[1].class, l.comps[2].class];
    let rows = ModeBasis::new(trunc, &[l1, l2, l3]);
    let cols = ModeBasis::new(trunc, &[l2, l1, l3]);
    let (r, c) = (&rows.comps, &cols.comps);
    let v01 = multiplication(pot_v, twist.p, &r[0], &c[0])
        .scaled(alpha_t.0)
        .to_dense();
    let v12 = multiplication(pot_v, twist.p_tilde, &r[1], &c[2])
        .scaled(alpha_t.1)
        .to_dense();
    // the adjoint blocks map layer 1 → 2 and layer 2 → 3
    let v10 = crate::linalg::adjoint(
        &multiplication(pot_v, twist.p, &c[1], &r[1])
            .scaled(alpha_t.0)
            .to_dense(),
    );
    let v21 = crate::linalg::adjoint(
        &multiplication(pot_v, twist.p_tilde, &c[0], &r[2])
            .scaled(alpha_t.1)
            .to_dense(),
    );
    let mut a = Array2::zeros((rows.dim(), cols.dim()));
    let (ro, co) = (&rows.offsets, &cols.offsets);
    add_block(&mut a, ro[0], co[0], &v01);
    add_block(&mut a, ro[1], co[1], &v10);
    add_block(&mut a, ro[1], co[2], &v12);
    add_block(&mut a, ro[2], co[0], &v21);
    let zc = |comp: &ComponentBasis| -> Vec<C64> {
        dirac_diagonal(comp, k).iter().map(|d| d.conj()).collect()
    };
    // (e₁ ← e₄) and (e₃ ← e₆): 2D_z + k̄; (e₅ ← e₂): 2D_z̄ + k
    for (i, d) in zc(&r[0]).into_iter().enumerate() {
        let j = c[1].position(r[0].modes[i]).expect("same class");
        a[(ro[0] + i, co[1] + j)] += d;
    }
    for (i, d) in zc(&r[2]).into_iter().enumerate() {
        let j = c[2].position(r[2].modes[i]).expect("same class");
        a[(ro[2] + i, co[2] + j)] += d;
    }
    for (i, d) in dirac_diagonal(&r[1], k).into_iter().enumerate() {
        let j = c[0].position(r[1].modes[i]).expect("same class");
        a[(ro[1] + i, co[0] + j)] += d;
    }
    Ok(OperatorMatrix {
        data: a,
        rows,
        cols,
        k: *k,
        label: "D_ac".into(),
    })
}

/// Hermitian anti-chiral Hamiltonian [[0, D_ac], [D_ac*, 0]].
pub fn antichiral_hamiltonian(dac: &OperatorMatrix) -> Array2<C64> {
    let (m, n) = dac.data.dim();
    let mut h = Array2::zeros((m + n, m + n));
    add_block(&mut h, 0, m, &dac.data);
    add_block(&mut h, m, 0, &crate::linalg::adjoint(&dac.data));
    h
}

/// Point values of Σ_μ c_μ e^{iμ·y} per component at each z.
pub fn synthesize(coeffs: &[C64], basis: &ModeBasis, zs: &[C64]) -> Vec<Vec<C64>> {
    zs.iter()
        .map(|&z| {
            let (y1, y2) = z_to_y(z);
            basis
                .comps
                .iter()
                .enumerate()
                .map(|(c, comp)| {
                    comp.modes
                        .iter()
                        .enumerate()
                        .map(|(i, &(m, n))| {
                            coeffs[basis.offsets[c] + i]
                                * C64::from_polar(1.0, m as f64 * y1 + n as f64 * y2)
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Field of one component on the uniform y-grid y = 2π(i, j)/g, by FFT.
/// Entry [i][j] is the value at (y₁, y₂) = 2π(i, j)/g.
pub fn synthesize_grid(coeffs: &[C64], basis: &ModeBasis, comp: usize, g: usize) -> Array2<C64> {
    let cb = &basis.comps[comp];
    let mut buf = vec![Complex::new(0.0, 0.0); g * g];
    for (i, &(m, n)) in cb.modes.iter().enumerate() {
        let a = m.rem_euclid(g as i64) as usize;
        let b = n.rem_euclid(g as i64) as usize;
        let c = coeffs[basis.offsets[comp] + i];
        buf[a * g + b] += Complex::new(c.re, c.im);
    }
    let mut planner = FftPlanner::new();
    let f = planner.plan_fft_inverse(g);
    fft2(&mut buf, g, &f);
    Array2::from_shape_fn((g, g), |(i, j)| {
        let v = buf[i * g + j];
        C64::new(v.re, v.im)
    })
}

/// Fourier coefficients (Σ/g² normalization) of grid samples, read off at
/// the modes of one component.
pub fn analyze_grid(field: &Array2<C64>, comp: &ComponentBasis) -> Vec<C64> {
    let g = field.nrows();
    let mut buf: Vec<Complex<f64>> = field.iter().map(|v| Complex::new(v.re, v.im)).collect();
    let mut planner = FftPlanner::new();
    let f = planner.plan_fft_forward(g);
    fft2(&mut buf, g, &f);
    let norm = (g * g) as f64;
    comp.modes
        .iter()
        .map(|&(m, n)| {
            let v = buf[m.rem_euclid(g as i64) as usize * g + n.rem_euclid(g as i64) as usize];
            C64::new(v.re / norm, v.im / norm)
        })
        .collect()
}

fn fft2(buf: &mut [Complex<f64>], g: usize, f: &Arc<dyn rustfft::Fft<f64>>) {
    for row in buf.chunks_mut(g) {
        f.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); g];
    for j in 0..g {
        for i in 0..g {
            col[i] = buf[i * g + j];
        }
        f.process(&mut col);
        for i in 0..g {
            buf[i * g + j] = col[i];
        }
    }
}

/// L² norm squared over the y-torus, normalized by its area.
pub fn grid_norm_sqr(fields: &[Array2<C64>]) -> f64 {
    fields
        .iter()
        .map(|f| f.iter().map(|v| v.norm_sqr()).sum::<f64>() / (f.len() as f64))
        .sum()
}

/// (D(α)+k)u without forming the dense matrix.
pub fn apply_d(
    alpha: (C64, C64),
    k: &FloquetPoint,
    twist: &TwistConfig,
    pot: &PotentialCoeffs,
    basis: &ModeBasis,
    u: &[C64],
) -> Vec<C64> {
    let o = &basis.offsets;
    let mut out = vec![C64::new(0.0, 0.0); basis.dim()];
    for (c, comp) in basis.comps.iter().enumerate() {
        for (i, d) in dirac_diagonal(comp, k).into_iter().enumerate() {
            out[o[c] + i] = d * u[o[c] + i];
        }
    }
    let [c01, c10, c12, c21] = d_couplings(alpha, twist, pot, basis);
    for (cp, src, tgt) in [(&c01, 1, 0), (&c10, 0, 1), (&c12, 2, 1), (&c21, 1, 2)] {
        for (j, col) in cp.cols.iter().enumerate() {
            let v = u[o[src] + j];
            for &(i, w) in col {
                out[o[tgt] + i] += w * v;
            }
        }
    }
    out
}
