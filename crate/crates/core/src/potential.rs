//! Finite Fourier tunnelling potentials
//! u(z) = Σ c_nm exp((i/2)(−√3(n+m) Re z − (2j + 3(n−m)) Im z)).
//!
//! A coefficient c_nm is the Fourier mode (j+3n, j−3m) in rectangular
//! coordinates. The symmetry parameters (j, ℓ) fix the translation weight
//! u(z+a) = ω^{j(a₁+a₂)} u(z) on Γ₃ and the rotation weight u(ωz) = ω̄^ℓ u(z).

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::lattice::{omega, omega_pow, CellIndex, SQRT3};
use crate::samples;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Reflection {
    None,
    /// conj(u(z̄)) = u(z), the U-type reflection.
    ConjBar,
    /// conj(u(z)) = u(−z) = u(z̄), the V-type reflection.
    ConjNeg,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialCoeffs {
    pub sym_j: i64,
    pub sym_ell: i64,
    pub reflection: Reflection,
    #[serde(skip)]
    pub coeffs: BTreeMap<(i64, i64), C64>,
}

const ORBIT_TOL: f64 = 1e-12;

fn tau(j: i64, (n, m): (i64, i64)) -> (i64, i64) {
    (-m, n - m + j)
}

/// Closes a seed map under c_τ(x) = ω^ℓ c_x, τ(n,m) = (−m, n−m+j).
pub fn close_symmetry(
    seed: &BTreeMap<(i64, i64), C64>,
    sym_j: i64,
    sym_ell: i64,
) -> Result<PotentialCoeffs> {
    if !(-1..=1).contains(&sym_j) || !(-1..=1).contains(&sym_ell) {
        return Err(invalid("sym_j and sym_ell must lie in {-1, 0, 1}"));
    }
    let w = omega_pow(sym_ell);
    let mut out: BTreeMap<(i64, i64), C64> = BTreeMap::new();
    for (&x, &c) in seed {
        let orbit = [x, tau(sym_j, x), tau(sym_j, tau(sym_j, x))];
        let vals = [c, c * w, c * w * w];
        if orbit[1] == x && (vals[1] - c).norm() > ORBIT_TOL {
            return Err(invalid(format!(
                "coefficient at fixed point {x:?} must vanish for sym_ell = {sym_ell}"
            )));
        }
        for (pt, v) in orbit.iter().zip(vals) {
            match out.get(pt) {
                Some(old) if (old - v).norm() > ORBIT_TOL * (1.0 + v.norm()) => {
                    return Err(invalid(format!(
                        "conflicting seed values on the orbit {:?} -> {:?} -> {:?}",
                        orbit[0], orbit[1], orbit[2]
                    )));
                }
                _ => {
                    out.insert(*pt, v);
                }
            }
        }
    }
    out.retain(|_, c| c.norm() > 0.0);
    Ok(PotentialCoeffs {
        sym_j,
        sym_ell,
        reflection: Reflection::None,
        coeffs: out,
    })
}

impl PotentialCoeffs {
    pub fn with_reflection(mut self, r: Reflection) -> Self {
        self.reflection = r;
        self
    }

    pub fn zero() -> Self {
        Self {
            sym_j: -1,
            sym_ell: -1,
            reflection: Reflection::None,
            coeffs: BTreeMap::new(),
        }
    }

    /// Standard potential U₀(z) = Σ_j ω^j exp((z ω̄^j − z̄ ω^j)/2).
    pub fn u0() -> Self {
        let seed = BTreeMap::from([((0, 0), C64::new(1.0, 0.0))]);
        close_symmetry(&seed, -1, -1)
            .expect("U0 seed is consistent")
            .with_reflection(Reflection::ConjBar)
    }

    /// Reference AA potential: the (j, ℓ) = (−1, 0) closure of c₀₀ = 1.
    pub fn v0() -> Self {
        let seed = BTreeMap::from([((0, 0), C64::new(1.0, 0.0))]);
        close_symmetry(&seed, -1, 0)
            .expect("V0 seed is consistent")
            .with_reflection(Reflection::ConjNeg)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut p = self.clone();
        p.coeffs.values_mut().for_each(|c| *c *= factor);
        p
    }

    /// Rectangular Fourier mode of the coefficient c_nm at the given scale.
    pub fn mode_of(&self, (n, m): (i64, i64), scale: i64) -> (i64, i64) {
        (scale * (self.sym_j + 3 * n), scale * (self.sym_j - 3 * m))
    }

    /// Frequency vector k of the term c_nm, so that the term is e^{i⟨z,k⟩}.
    fn freq(&self, (n, m): (i64, i64)) -> C64 {
        C64::new(
            -SQRT3 * (n + m) as f64 / 2.0,
            -(2 * self.sym_j + 3 * (n - m)) as f64 / 2.0,
        )
    }

    /// u(scale·z) by direct summation.
    pub fn eval(&self, z: C64, scale: i64) -> C64 {
        let sz = z * scale as f64;
        self.coeffs
            .iter()
            .map(|(&nm, &c)| {
                let k = self.freq(nm);
                c * C64::from_polar(1.0, sz.re * k.re + sz.im * k.im)
            })
            .sum()
    }

    /// ∂_z of z ↦ u(scale·z).
    pub fn eval_dz(&self, z: C64, scale: i64) -> C64 {
        let s = scale as f64;
        let sz = z * s;
        self.coeffs
            .iter()
            .map(|(&nm, &c)| {
                let k = self.freq(nm);
                c * C64::new(0.0, 0.5)
                    * k.conj()
                    * s
                    * C64::from_polar(1.0, sz.re * k.re + sz.im * k.im)
            })
            .sum()
    }

    /// ∂_z̄ of z ↦ u(scale·z).
    pub fn eval_dzbar(&self, z: C64, scale: i64) -> C64 {
        let s = scale as f64;
        let sz = z * s;
        self.coeffs
            .iter()
            .map(|(&nm, &c)| {
                let k = self.freq(nm);
                c * C64::new(0.0, 0.5) * k * s * C64::from_polar(1.0, sz.re * k.re + sz.im * k.im)
            })
            .sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub translation: f64,
    pub rotation: f64,
    pub reflection: Option<f64>,
    pub passed: bool,
}

/// Checks the translation, rotation and (if flagged) reflection identities of
/// z ↦ u(scale·z) on 64 deterministic sample points.
pub fn validate_symmetries(pot: &PotentialCoeffs, scale: i64, tol: f64) -> SymmetryReport {
    let shifts = [(1, 0), (0, 1), (-1, 2), (2, 3)];
    let rot = omega_pow(-pot.sym_ell);
    let (mut tr, mut ro, mut re) = (0.0f64, 0.0f64, 0.0f64);
    for (s, t) in samples::r2_box(64, -3.0, 3.0) {
        let z = C64::new(s, t);
        let u = pot.eval(z, scale);
        for &(a1, a2) in &shifts {
            let a = CellIndex::new(a1, a2).embed();
            let w = omega_pow(pot.sym_j * scale * (a1 + a2));
            tr = tr.max((pot.eval(z + a, scale) - w * u).norm());
        }
        ro = ro.max((pot.eval(omega() * z, scale) - rot * u).norm());
        re = re.max(match pot.reflection {
            Reflection::None => 0.0,
            Reflection::ConjBar => (pot.eval(z.conj(), scale).conj() - u).norm(),
            Reflection::ConjNeg => {
                let c = u.conj();
                (pot.eval(-z, scale) - c)
                    .norm()
                    .max((pot.eval(z.conj(), scale) - c).norm())
            }
        });
    }
    let reflection = (pot.reflection != Reflection::None).then_some(re);
    SymmetryReport {
        translation: tr,
        rotation: ro,
        reflection,
        passed: tr < tol && ro < tol && re < tol,
    }
}

/// One slot of the generalized potential class: coefficients together with
/// the translation/rotation weights that slot must carry.
#[derive(Clone, Debug)]
pub struct PotentialSlot {
    pub name: String,
    pub pot: PotentialCoeffs,
}

#[derive(Clone, Debug, Default)]
pub struct GeneralizedPotential {
    pub slots: Vec<PotentialSlot>,
}

impl GeneralizedPotential {
    pub fn push(&mut self, name: &str, pot: PotentialCoeffs) {
        self.slots.push(PotentialSlot {
            name: name.to_string(),
            pot,
        });
    }

    /// Per-slot symmetry validation.
    pub fn validate(&self, tol: f64) -> Vec<(String, SymmetryReport)> {
        self.slots
            .iter()
            .map(|s| (s.name.clone(), validate_symmetries(&s.pot, 1, tol)))
            .collect()
    }
}

fn parse_real(tok: &str) -> Result<f64> {
    let bad = || invalid(format!("bad number {tok:?}"));
    match tok.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => tok.parse().map_err(|_| bad()),
    }
}

/// Loads a potential definition:
///
/// ```text
/// sym_j = -1
/// sym_ell = -1
/// reflection = conj_bar        # none | conj_bar | conj_neg
/// coeff = 0 0 1 0              # n m re im [w^k]
/// ```
///
/// Real and imaginary parts accept fractions such as `1/2`; an optional
/// trailing `w^k` multiplies the entry by ω^k. The seed is closed under the
/// orbit relation.
pub fn parse_potential(text: &str) -> Result<PotentialCoeffs> {
    let (mut j, mut ell, mut refl) = (None, None, Reflection::None);
    let mut seed = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected key = value", lineno + 1)))?;
        let val = val.trim();
        match key.trim() {
            "sym_j" => j = Some(val.parse::<i64>().map_err(|_| invalid("bad sym_j"))?),
            "sym_ell" => ell = Some(val.parse::<i64>().map_err(|_| invalid("bad sym_ell"))?),
            "reflection" => {
                refl = match val {
                    "none" => Reflection::None,
                    "conj_bar" => Reflection::ConjBar,
                    "conj_neg" => Reflection::ConjNeg,
                    _ => return Err(invalid(format!("unknown reflection {val:?}"))),
                }
            }
            "coeff" => {
                let t: Vec<&str> = val.split_whitespace().collect();
                if !(4..=5).contains(&t.len()) {
                    return Err(invalid(format!(
                        "line {}: coeff needs n m re im [w^k]",
                        lineno + 1
                    )));
                }
                let n: i64 = t[0].parse().map_err(|_| invalid("bad n"))?;
                let m: i64 = t[1].parse().map_err(|_| invalid("bad m"))?;
                let mut c = C64::new(parse_real(t[2])?, parse_real(t[3])?);
                if let Some(w) = t.get(4) {
                    let k: i64 = w
                        .strip_prefix("w^")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| invalid(format!("bad omega power {w:?}")))?;
                    c *= omega_pow(k);
                }
                if seed.insert((n, m), c).is_some() {
                    return Err(invalid(format!("duplicate coefficient ({n}, {m})")));
                }
            }
            other => return Err(invalid(format!("unknown key {other:?}"))),
        }
    }
    let j = j.ok_or_else(|| invalid("missing sym_j"))?;
    let ell = ell.ok_or_else(|| invalid("missing sym_ell"))?;
    Ok(close_symmetry(&seed, j, ell)?.with_reflection(refl))
}

/// Resolves "U0", "V0", "zero" or a path to a potential file.
pub fn load_potential(spec: &str) -> Result<PotentialCoeffs> {
    match spec {
        "U0" => Ok(PotentialCoeffs::u0()),
        "V0" => Ok(PotentialCoeffs::v0()),
        "zero" => Ok(PotentialCoeffs::zero()),
        path => parse_potential(&std::fs::read_to_string(path)?),
    }
}
