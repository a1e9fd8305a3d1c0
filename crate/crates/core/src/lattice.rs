//! Lattices Γ, Γ₃, Γ*, the twist-angle arithmetic and the rotation action on
//! dual indices.
//!
//! Conventions: Γ = 4πi(ωℤ ⊕ ω²ℤ), Γ₃ = Γ/3, Γ* = (1/√3)(ω²ℤ ⊕ ωℤ) and
//! Γ₃* = 3Γ*. Rectangular coordinates are z = 2i(ωy₁ + ω²y₂), so Γ is the
//! period lattice 2πℤ² in y and a Fourier mode (m, n) is e^{i(my₁+ny₂)}.

use num_complex::Complex64 as C64;
use num_rational::Rational64;
use num_traits::Zero;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Result};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// ω = e^{2πi/3}.
pub fn omega() -> C64 {
    C64::new(-0.5, SQRT3 / 2.0)
}

/// ω^k, exact table lookup so that 1 + ω + ω² cancels to rounding.
pub fn omega_pow(k: i64) -> C64 {
    match k.rem_euclid(3) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(-0.5, SQRT3 / 2.0),
        _ => C64::new(-0.5, -SQRT3 / 2.0),
    }
}

pub fn mod3(x: i64) -> i64 {
    x.rem_euclid(3)
}

/// ⟨z, w⟩ = Re(z w̄), the real inner product on ℂ ≅ ℝ².
pub fn pairing(z: C64, w: C64) -> f64 {
    (z * w.conj()).re
}

/// a = (4πi/3)(ω a₁ + ω² a₂) ∈ Γ₃.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CellIndex {
    pub a1: i64,
    pub a2: i64,
}

impl CellIndex {
    pub fn new(a1: i64, a2: i64) -> Self {
        Self { a1, a2 }
    }

    pub fn embed(&self) -> C64 {
        C64::new(0.0, 4.0 * PI / 3.0) * (omega() * self.a1 as f64 + omega_pow(2) * self.a2 as f64)
    }
}

/// k = (1/√3)(ω² k₁ − ω k₂) ∈ Γ*.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct DualIndex {
    pub k1: i64,
    pub k2: i64,
}

impl DualIndex {
    pub fn new(k1: i64, k2: i64) -> Self {
        Self { k1, k2 }
    }

    pub fn embed(&self) -> C64 {
        rect_to_k(self.k1 as f64, self.k2 as f64)
    }

    /// Membership in Γ₃* = 3Γ*.
    pub fn in_gamma3_dual(&self) -> bool {
        mod3(self.k1) == 0 && mod3(self.k2) == 0
    }
}

/// γ_(m,n) = ω² m − ω n: the rectangular Dirac symbol, √3 times the
/// physical dual vector.
pub fn gamma_mode(m: f64, n: f64) -> C64 {
    omega_pow(2) * m - omega() * n
}

/// Physical k from rectangular components (k₁, k₂).
pub fn rect_to_k(k1: f64, k2: f64) -> C64 {
    gamma_mode(k1, k2) / SQRT3
}

/// Rectangular components (k₁, k₂) of a physical k.
pub fn k_to_rect(k: C64) -> (f64, f64) {
    (-k.im - SQRT3 * k.re, -k.im + SQRT3 * k.re)
}

/// y-coordinates of a point z, z = 2i(ωy₁ + ω²y₂).
pub fn z_to_y(z: C64) -> (f64, f64) {
    let s = z.re / SQRT3;
    ((-z.im - s) / 2.0, (-z.im + s) / 2.0)
}

pub fn y_to_z(y1: f64, y2: f64) -> C64 {
    C64::new(0.0, 2.0) * (omega() * y1 + omega_pow(2) * y2)
}

/// The stacking point z_S = (γ₂ − γ₁)/3 with γ_j = (4πi/3)ω^j, a rotation
/// fixed point of ℂ/Γ₃. Its value is 4π√3/9.
pub fn z_s() -> C64 {
    let g = |j: i64| C64::new(0.0, 4.0 * PI / 3.0) * omega_pow(j);
    (g(2) - g(1)) / 3.0
}

/// σ(m, n) = (−(n + m), m); γ_σ(μ) = ω γ_μ.
pub fn sigma(m: i64, n: i64) -> (i64, i64) {
    (-(n + m), m)
}

pub fn sigma_orbit(m: i64, n: i64) -> [(i64, i64); 3] {
    let s1 = sigma(m, n);
    let s2 = sigma(s1.0, s1.1);
    [(m, n), s1, s2]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    CaseI,
    CaseII,
}

/// Commensurable twist configuration ζ₂/ζ₁ = 3^j r₁/r₂.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistConfig {
    /// Effective first twist angle (ζ₂ of the input when flipped).
    pub zeta1: f64,
    /// Effective ratio; the reciprocal of the input when flipped.
    #[serde(serialize_with = "ser_ratio")]
    pub ratio: Rational64,
    pub j: i32,
    pub r1: i64,
    pub r2: i64,
    pub p: i64,
    pub q: i64,
    pub p_tilde: i64,
    /// Layer order reversed so that p ≢ 0 mod 3. Hopping roles swap:
    /// α₁₂ ↔ α₂₃, hence a hopping ratio r becomes 1/r.
    pub flipped: bool,
    pub case_tag: Case,
    /// p and q before any flip.
    pub raw_p: i64,
    pub raw_q: i64,
}

fn ser_ratio<S: serde::Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
}

/// Writes ratio = 3^j r₁/r₂ with r₁, r₂ ≢ 0 mod 3 and r₂ > 0.
pub fn parse_ratio(ratio: Rational64) -> Result<(i32, i64, i64)> {
    if ratio.is_zero() {
        return Err(invalid("twist ratio must be nonzero"));
    }
    let (mut num, mut den) = (*ratio.numer(), *ratio.denom());
    if den < 0 {
        num = -num;
        den = -den;
    }
    let mut j = 0;
    while num % 3 == 0 {
        num /= 3;
        j += 1;
    }
    while den % 3 == 0 {
        den /= 3;
        j -= 1;
    }
    Ok((j, num, den))
}

/// Parses "a/b" or "a" into an exact rational.
pub fn parse_fraction(s: &str) -> Result<Rational64> {
    let s = s.trim();
    let bad = || invalid(format!("not a rational number: {s:?}"));
    let r = match s.split_once('/') {
        Some((a, b)) => {
            let a: i64 = a.trim().parse().map_err(|_| bad())?;
            let b: i64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0 {
                return Err(bad());
            }
            Rational64::new(a, b)
        }
        None => Rational64::from_integer(s.parse().map_err(|_| bad())?),
    };
    Ok(r)
}

fn pq(j: i32, r1: i64, r2: i64) -> (i64, i64) {
    if j > 0 {
        (r2, 0)
    } else {
        (3i64.pow((-j) as u32) * r2, r1)
    }
}

fn classify(p: i64, q: i64) -> Case {
    let mut v = [mod3(-q), mod3(p), 0];
    v.sort_unstable();
    if v[0] != v[1] && v[1] != v[2] {
        Case::CaseII
    } else {
        Case::CaseI
    }
}

pub fn derive_config(zeta1: f64, ratio: Rational64) -> Result<TwistConfig> {
    if !(zeta1.is_finite() && zeta1 != 0.0) {
        return Err(invalid("zeta1 must be finite and nonzero"));
    }
    let (j, r1, r2) = parse_ratio(ratio)?;
    let (raw_p, raw_q) = pq(j, r1, r2);
    let (zeta1, ratio, flipped) = if mod3(raw_p) == 0 {
        (
            zeta1 * (*ratio.numer() as f64) / (*ratio.denom() as f64),
            ratio.recip(),
            true,
        )
    } else {
        (zeta1, ratio, false)
    };
    let (j, r1, r2) = parse_ratio(ratio)?;
    let (p, q) = pq(j, r1, r2);
    let pt = Rational64::from_integer(p) * ratio;
    if !pt.is_integer() {
        return Err(invalid(format!(
            "p*ratio is not an integer for ratio {ratio}"
        )));
    }
    let p_tilde = pt.to_integer();
    debug_assert!(mod3(p) != 0 && mod3(p_tilde - q) == 0);
    Ok(TwistConfig {
        zeta1,
        ratio,
        j,
        r1,
        r2,
        p,
        q,
        p_tilde,
        flipped,
        case_tag: classify(p, q),
        raw_p,
        raw_q,
    })
}

impl TwistConfig {
    /// Hopping ratio α₂₃/α₁₂ in the stored (possibly flipped) layer order.
    pub fn effective_hop_ratio(&self, r: C64) -> C64 {
        if self.flipped {
            r.inv()
        } else {
            r
        }
    }

    /// Rescaled ratio h = ζ₂/ζ₁ as a float.
    pub fn h(&self) -> f64 {
        *self.ratio.numer() as f64 / *self.ratio.denom() as f64
    }

    /// Translation classes r ∈ ℤ₃ of the three protected states e₁, e₂, e₃.
    pub fn protected_classes(&self) -> [i64; 3] {
        [mod3(self.p), 0, mod3(-self.q)]
    }

    pub fn describe(&self) -> String {
        format!(
            "ratio {} (j={}, r1={}, r2={}) p={} q={} p~={} {:?}{}",
            self.ratio,
            self.j,
            self.r1,
            self.r2,
            self.p,
            self.q,
            self.p_tilde,
            self.case_tag,
            if self.flipped { " flipped" } else { "" }
        )
    }
}
