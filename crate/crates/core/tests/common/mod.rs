//! Oracle helpers shared by the integration tests. Nothing here calls the
//! operator assembly of the library.
#![allow(dead_code)]

use ndarray::Array2;
use std::f64::consts::PI;
use ttg::linalg;
use ttg::potential::PotentialCoeffs;
use ttg::C64;

pub const S3: f64 = 1.732_050_807_568_877_2;

pub fn w() -> C64 {
    C64::new(-0.5, S3 / 2.0)
}

/// z from y-coordinates, z = 2i(ωy₁ + ω²y₂).
pub fn z_of(y1: f64, y2: f64) -> C64 {
    C64::new(0.0, 2.0) * (w() * y1 + w().conj() * y2)
}

/// Physical dual vector K with ⟨z, K⟩ = μ·y(z), from the linear map y ↦ z.
pub fn dual_of(m: f64, n: f64) -> C64 {
    // columns of y ↦ (x, y) are z_of(1,0) and z_of(0,1); the gradient of
    // μ·y in (x, y) is the transposed inverse applied to μ
    let (a, b) = (z_of(1.0, 0.0), z_of(0.0, 1.0));
    let det = a.re * b.im - b.re * a.im;
    let gx = (b.im * m - a.im * n) / det;
    let gy = (-b.re * m + a.re * n) / det;
    C64::new(gx, gy)
}

/// ⟨e^{iμ·y}, f e^{iν·y}⟩ by the midpoint rule on a g×g y-grid.
pub fn project(f: &dyn Fn(C64) -> C64, mu: (i64, i64), nu: (i64, i64), g: usize) -> C64 {
    let h = 2.0 * PI / g as f64;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..g {
        for j in 0..g {
            let (y1, y2) = (h * i as f64, h * j as f64);
            let ph = ((nu.0 - mu.0) as f64 * y1 + (nu.1 - mu.1) as f64 * y2) * C64::i();
            s += f(z_of(y1, y2)) * ph.exp();
        }
    }
    s / (g * g) as f64
}

/// Eigenvalues of (2D_z̄ + k)⁻¹ [[0, U(z)], [U(−z), 0]] on Γ-periodic plane
/// waves |μ_j| ≤ m; the magic parameters are their negative inverses.
pub fn bilayer_magic(m: i64) -> Vec<C64> {
    let u = PotentialCoeffs::u0();
    // Fourier coefficients of U(±z) on the Γ-torus by exact quadrature
    let g = 24;
    let mut coef = Vec::new();
    for a in -4..=4i64 {
        for b in -4..=4i64 {
            let plus = project(&|z| u.eval(z, 1), (0, 0), (a, b), g);
            let minus = project(&|z| u.eval(-z, 1), (0, 0), (a, b), g);
            if plus.norm() > 1e-12 || minus.norm() > 1e-12 {
                coef.push(((a, b), plus, minus));
            }
        }
    }
    let modes: Vec<(i64, i64)> = (-m..=m)
        .flat_map(|a| (-m..=m).map(move |b| (a, b)))
        .collect();
    let pos = |mode: (i64, i64)| modes.iter().position(|&x| x == mode);
    let n = modes.len();
    let k = C64::new(0.123, 0.217);
    let mut t = Array2::<C64>::zeros((2 * n, 2 * n));
    for (j, &nu) in modes.iter().enumerate() {
        for &((a, b), plus, minus) in &coef {
            if let Some(i) = pos((nu.0 + a, nu.1 + b)) {
                let dirac = dual_of((nu.0 + a) as f64, (nu.1 + b) as f64) + k;
                t[(i, n + j)] += plus / dirac;
                t[(n + i, j)] += minus / dirac;
            }
        }
    }
    linalg::eigenvalues(&t)
        .unwrap()
        .into_iter()
        .filter(|l| l.norm() > 1e-8)
        .map(|l| -l.inv())
        .collect()
}

/// Smallest positive real magic parameter of the bilayer oracle.
pub fn leading_bilayer_magic(m: i64) -> C64 {
    bilayer_magic(m)
        .into_iter()
        .filter(|a| a.re > 0.0 && a.im.abs() < 1e-6)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("the bilayer has a real magic parameter")
}
