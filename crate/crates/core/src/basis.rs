//! Truncated Fourier bases in rectangular coordinates, Floquet points and
//! symmetry-sector bookkeeping.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::collections::HashMap;

use crate::error::{invalid, Result};
use crate::lattice::{gamma_mode, mod3, omega_pow, sigma, TwistConfig, SQRT3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BoxShape {
    /// |m| ≤ N and |n| ≤ N.
    Square,
    /// max(|m|, |n|, |m+n|) ≤ N. Closed under σ.
    Hex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Truncation {
    pub n: i64,
    pub shape: BoxShape,
}

impl Truncation {
    pub fn hex(n: i64) -> Self {
        Self {
            n,
            shape: BoxShape::Hex,
        }
    }

    pub fn square(n: i64) -> Self {
        Self {
            n,
            shape: BoxShape::Square,
        }
    }

    pub fn contains(&self, m: i64, n: i64) -> bool {
        match self.shape {
            BoxShape::Square => m.abs() <= self.n && n.abs() <= self.n,
            BoxShape::Hex => m.abs() <= self.n && n.abs() <= self.n && (m + n).abs() <= self.n,
        }
    }

    /// Box modes, row-major by (m, n), optionally restricted to a residue class.
    pub fn modes(&self, class: Option<(i64, i64)>) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for m in -self.n..=self.n {
            for n in -self.n..=self.n {
                if !self.contains(m, n) {
                    continue;
                }
                if let Some((a, b)) = class {
                    if mod3(m - a) != 0 || mod3(n - b) != 0 {
                        continue;
                    }
                }
                out.push((m, n));
            }
        }
        out
    }
}

/// Floquet parameter in rectangular components, split as an integer shift
/// plus a fractional remainder. The shift is absorbed into the residue
/// classes of the basis; only the remainder enters the Dirac diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FloquetPoint {
    pub shift: (i64, i64),
    pub frac: (f64, f64),
}

impl FloquetPoint {
    /// Rounds to the nearest integer shift.
    pub fn reduced(k1: f64, k2: f64) -> Self {
        let s = (k1.round(), k2.round());
        Self {
            shift: (s.0 as i64, s.1 as i64),
            frac: (k1 - s.0, k2 - s.1),
        }
    }

    /// Keeps the whole momentum on the diagonal.
    pub fn unshifted(k1: f64, k2: f64) -> Self {
        Self {
            shift: (0, 0),
            frac: (k1, k2),
        }
    }

    pub fn from_k(k: C64) -> Self {
        let (a, b) = crate::lattice::k_to_rect(k);
        Self::reduced(a, b)
    }

    /// The rotation-invariant point k = −ir, i.e. (k₁, k₂) = (r, r), whose
    /// Floquet space is the translation sector L²_r.
    pub fn sector(r: i64) -> Self {
        Self {
            shift: (r, r),
            frac: (0.0, 0.0),
        }
    }

    pub fn rect(&self) -> (f64, f64) {
        (
            self.shift.0 as f64 + self.frac.0,
            self.shift.1 as f64 + self.frac.1,
        )
    }

    pub fn k(&self) -> C64 {
        let (a, b) = self.rect();
        crate::lattice::rect_to_k(a, b)
    }

    /// Rectangular Dirac offset κ = ω² f₁ − ω f₂.
    pub fn kappa(&self) -> C64 {
        gamma_mode(self.frac.0, self.frac.1)
    }

    /// Physical distance from k to the dual lattice Γ*.
    pub fn dist_to_dual_lattice(&self) -> f64 {
        let (a, b) = self.rect();
        (gamma_mode(a - a.round(), b - b.round()) / SQRT3).norm()
    }
}

/// Mode list of one vector component.
#[derive(Clone, Debug)]
pub struct ComponentBasis {
    pub class: Option<(i64, i64)>,
    pub modes: Vec<(i64, i64)>,
    index: HashMap<(i64, i64), usize>,
}

impl ComponentBasis {
    pub fn new(trunc: &Truncation, class: Option<(i64, i64)>) -> Self {
        let class = class.map(|(a, b)| (mod3(a), mod3(b)));
        let modes = trunc.modes(class);
        let index = modes.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        Self {
            class,
            modes,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn position(&self, mode: (i64, i64)) -> Option<usize> {
        self.index.get(&mode).copied()
    }

    pub fn sigma_closed(&self) -> bool {
        self.modes
            .iter()
            .all(|&(m, n)| self.index.contains_key(&sigma(m, n)))
    }
}

/// Multi-component basis; global index = offset[c] + local index.
#[derive(Clone, Debug)]
pub struct ModeBasis {
    pub trunc: Truncation,
    pub comps: Vec<ComponentBasis>,
    pub offsets: Vec<usize>,
}

impl ModeBasis {
    pub fn new(trunc: Truncation, classes: &[Option<(i64, i64)>]) -> Self {
        let comps: Vec<_> = classes
            .iter()
            .map(|&c| ComponentBasis::new(&trunc, c))
            .collect();
        let mut offsets = Vec::with_capacity(comps.len());
        let mut acc = 0;
        for c in &comps {
            offsets.push(acc);
            acc += c.len();
        }
        Self {
            trunc,
            comps,
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.iter().map(|c| c.len()).sum()
    }

    /// (component, mode) of a global index.
    pub fn locate(&self, i: usize) -> (usize, (i64, i64)) {
        let c = self
            .offsets
            .iter()
            .rposition(|&o| o <= i)
            .expect("index in range");
        (c, self.comps[c].modes[i - self.offsets[c]])
    }
}

/// ℒ_a layer weights (ω^{p(a₁+a₂)}, 1, ω̄^{q(a₁+a₂)}) expressed as ω-exponents
/// per unit of a₁ + a₂.
pub fn layer_weight_exponents(twist: &TwistConfig) -> [i64; 3] {
    [twist.p, 0, -twist.q]
}

/// Residue classes (mod 3) that make each layer an ℒ_a-eigenvector with
/// eigenvalue ω^{r(a₁+a₂)}. Found by testing the phase condition on the
/// generators a = (1,0) and (0,1) for every residue pair.
pub fn layer_classes(twist: &TwistConfig, r: i64) -> [(i64, i64); 3] {
    let w = layer_weight_exponents(twist);
    let mut out = [(0, 0); 3];
    for (layer, &e) in w.iter().enumerate() {
        let mut found = None;
        'search: for c1 in 0..3 {
            for c2 in 0..3 {
                // ℒ_a e^{iμ·y} = ω^{e(a₁+a₂) + μ·a} e^{iμ·y}
                let ok = [(1, 0), (0, 1)].iter().all(|&(a1, a2): &(i64, i64)| {
                    let phase = omega_pow(e * (a1 + a2) + c1 * a1 + c2 * a2);
                    (phase - omega_pow(r * (a1 + a2))).norm() < 1e-12
                });
                if ok {
                    found = Some((c1, c2));
                    break 'search;
                }
            }
        }
        out[layer] = found.expect("every phase is attained by some residue class");
    }
    out
}

/// Classes of the three layers for the Floquet space at `k`: the L²₀ pattern
/// translated by the integer part of k.
pub fn floquet_classes(twist: &TwistConfig, k: &FloquetPoint) -> [(i64, i64); 3] {
    let base = layer_classes(twist, 0);
    base.map(|(a, b)| (mod3(a + k.shift.0), mod3(b + k.shift.1)))
}

/// Basis of D(α)+k for the three layers.
pub fn layer_basis(twist: &TwistConfig, k: &FloquetPoint, trunc: Truncation) -> ModeBasis {
    let c = floquet_classes(twist, k);
    ModeBasis::new(trunc, &[Some(c[0]), Some(c[1]), Some(c[2])])
}

/// Orthonormal columns spanning the rotation sector 𝒞u = ω̄^ℓ u, where
/// (𝒞f)_μ = f_σ(μ). Requires every component to be σ-closed.
pub fn rotation_basis(basis: &ModeBasis, ell: i64) -> Result<Array2<C64>> {
    for c in &basis.comps {
        if !c.sigma_closed() {
            return Err(invalid(
                "rotation sectors need a sigma-closed (hex) mode box",
            ));
        }
    }
    let mut cols: Vec<Vec<(usize, C64)>> = Vec::new();
    for (ci, comp) in basis.comps.iter().enumerate() {
        let mut seen = vec![false; comp.len()];
        for (i, &(m, n)) in comp.modes.iter().enumerate() {
            if seen[i] {
                continue;
            }
            let s1 = sigma(m, n);
            if s1 == (m, n) {
                seen[i] = true;
                if mod3(ell) == 0 {
                    cols.push(vec![(basis.offsets[ci] + i, C64::new(1.0, 0.0))]);
                }
                continue;
            }
            let s2 = sigma(s1.0, s1.1);
            let idx = [i, comp.position(s1).unwrap(), comp.position(s2).unwrap()];
            let mut col = Vec::with_capacity(3);
            for (jj, &ix) in idx.iter().enumerate() {
                seen[ix] = true;
                col.push((
                    basis.offsets[ci] + ix,
                    omega_pow(-(jj as i64) * ell) / SQRT3,
                ));
            }
            cols.push(col);
        }
    }
    let mut q = Array2::zeros((basis.dim(), cols.len()));
    for (j, col) in cols.iter().enumerate() {
        for &(i, v) in col {
            q[(i, j)] = v;
        }
    }
    Ok(q)
}

/// Matrix of the rotation 𝒞 on a σ-closed basis.
pub fn rotation_matrix(basis: &ModeBasis) -> Result<Array2<C64>> {
    let n = basis.dim();
    let mut c = Array2::zeros((n, n));
    for (ci, comp) in basis.comps.iter().enumerate() {
        for (i, &(m, nn)) in comp.modes.iter().enumerate() {
            let j = comp
                .position(sigma(m, nn))
                .ok_or_else(|| invalid("rotation needs a sigma-closed mode box"))?;
            c[(basis.offsets[ci] + i, basis.offsets[ci] + j)] = C64::new(1.0, 0.0);
        }
    }
    Ok(c)
}
