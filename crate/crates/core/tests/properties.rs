use num_rational::Rational64;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use ttg::asymptotics::bracket_value;
use ttg::bands::fmt12;
use ttg::basis::{layer_basis, layer_classes, rotation_basis, FloquetPoint, ModeBasis, Truncation};
use ttg::fourier_ops::{assemble_d, assemble_d_on, assemble_h, grid_norm_sqr, synthesize_grid};
use ttg::lattice::*;
use ttg::linalg;
use ttg::potential::{close_symmetry, validate_symmetries, PotentialCoeffs};
use ttg::theta::{f_k, g_k, theta1};
use ttg::C64;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn twist_ratio() -> impl Strategy<Value = Rational64> {
    prop::sample::select(vec![
        (1, 1),
        (7, 4),
        (3, 1),
        (3, 2),
        (4, 1),
        (2, 1),
        (-1, 1),
        (5, 2),
    ])
    .prop_map(|(a, b)| Rational64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rect_coordinates_round_trip(k1 in -5.0..5.0f64, k2 in -5.0..5.0f64) {
        let (a, b) = k_to_rect(rect_to_k(k1, k2));
        prop_assert!((a - k1).abs() < 1e-12 && (b - k2).abs() < 1e-12);
        let (y1, y2) = z_to_y(y_to_z(k1, k2));
        prop_assert!((y1 - k1).abs() < 1e-12 && (y2 - k2).abs() < 1e-12);
    }

    #[test]
    fn dual_lattice_pairs_to_multiples_of_two_pi(a1 in -6i64..6, a2 in -6i64..6, k1 in -6i64..6, k2 in -6i64..6) {
        let a = CellIndex::new(a1, a2).embed() * 3.0;
        let k = DualIndex::new(k1, k2).embed();
        let t = pairing(a, k) / (2.0 * PI);
        prop_assert!((t - t.round()).abs() < 1e-10);
        // Γ₃ against Γ₃* as well
        let t3 = pairing(CellIndex::new(a1, a2).embed(), DualIndex::new(3 * k1, 3 * k2).embed()) / (2.0 * PI);
        prop_assert!((t3 - t3.round()).abs() < 1e-10);
    }

    #[test]
    fn sigma_rotates_the_dual_symbol(m in -20i64..20, n in -20i64..20) {
        let (a, b) = sigma(m, n);
        let lhs = gamma_mode(a as f64, b as f64);
        prop_assert!((lhs - omega() * gamma_mode(m as f64, n as f64)).norm() < 1e-10);
        let o = sigma_orbit(m, n);
        prop_assert_eq!(sigma(o[2].0, o[2].1), (m, n));
    }

    #[test]
    fn derived_twist_is_consistent(r in twist_ratio(), z1 in 0.5..4.0f64) {
        let t = derive_config(z1, r).unwrap();
        prop_assert!((t.p_tilde as f64 - t.p as f64 * t.h()).abs() < 1e-12);
        let s = t.protected_classes();
        prop_assert_eq!(s[1], 0);
    }

    #[test]
    fn closure_always_satisfies_the_symmetries(
        j in -1i64..=1,
        seeds in prop::collection::vec(((-3i64..3, -3i64..3), c64()), 1..4),
    ) {
        // ℓ = −1 never has to vanish on fixed points of the orbit map
        let mut seed = BTreeMap::new();
        for (x, c) in seeds {
            seed.insert(x, c);
        }
        if let Ok(p) = close_symmetry(&seed, j, -1) {
            let r = validate_symmetries(&p, 1, 1e-9);
            prop_assert!(r.translation < 1e-9 && r.rotation < 1e-9, "{:?}", r);
            let again = close_symmetry(&p.coeffs, j, -1).unwrap();
            prop_assert_eq!(again.coeffs.len(), p.coeffs.len());
        }
    }

    #[test]
    fn theta_quasi_periodicity(re in -1.0..1.0f64, im in -0.8..0.8f64) {
        let z = C64::new(re, im);
        let t = theta1(z).value;
        let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-300);
        prop_assert!(rel(theta1(z + 1.0).value, -t) < 1e-10);
        let m = -(C64::new(0.0, -PI) * omega() + C64::new(0.0, -2.0 * PI) * z).exp();
        prop_assert!(rel(theta1(z + omega()).value, m * t) < 1e-10);
        prop_assert!(rel(theta1(-z).value, -t) < 1e-10);
    }

    #[test]
    fn multipliers_are_periodic(y1 in -3.0..3.0f64, y2 in -3.0..3.0f64, k1 in -1.5..1.5f64, k2 in -1.5..1.5f64) {
        let z = y_to_z(y1, y2);
        let k = rect_to_k(k1, k2);
        let t = 2.0 * PI / 3.0;
        for g in [y_to_z(t, 0.0), y_to_z(0.0, t), y_to_z(-t, 2.0 * t)] {
            if let (Some(f0), Some(f1), Some(g0), Some(g1)) = (f_k(z, k), f_k(z + g, k), g_k(z, k), g_k(z + g, k)) {
                prop_assert!((f1 - f0).norm() < 1e-10 * (1.0 + f0.norm()));
                let ph = C64::new(0.0, pairing(g, k)).exp();
                prop_assert!((g1 - ph * g0).norm() < 1e-10 * (1.0 + g0.norm()));
            }
        }
    }

    #[test]
    fn fmt12_round_trips(x in -1e6..1e6f64) {
        let back: f64 = fmt12(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
    }

    #[test]
    fn bracket_field_is_rotation_invariant(y1 in -3.0..3.0f64, y2 in -3.0..3.0f64) {
        let z = y_to_z(y1, y2);
        let u = PotentialCoeffs::u0();
        for pt in [1i64, 2, 3, 4] {
            let f0 = bracket_value((C64::new(1.0, 0.0), C64::new(1.0, 0.0)), 1, pt, &u, z, 1.0);
            let f1 = bracket_value((C64::new(1.0, 0.0), C64::new(1.0, 0.0)), 1, pt, &u, omega() * z, 1.0);
            prop_assert!((f0 - f1).abs() < 1e-10 * (1.0 + f0.abs()));
            let flip = bracket_value((C64::new(1.0, 0.0), C64::new(1.0, 0.0)), 1, pt, &u, z, -1.0);
            prop_assert!((f0 - flip).abs() < 1e-12 * (1.0 + f0.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parseval_on_the_synthesis_grid(seed in prop::collection::vec(c64(), 61)) {
        let basis = ModeBasis::new(Truncation::hex(8), &[Some((1, 2))]);
        let c: Vec<C64> = (0..basis.dim()).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sqrt().recip()).collect();
        let g = synthesize_grid(&c, &basis, 0, 128);
        let lhs = grid_norm_sqr(&[g]);
        let rhs: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((lhs - rhs).abs() < 1e-6 * rhs);
    }

    #[test]
    fn chiral_spectrum_is_symmetric(a in c64(), b in c64(), k1 in -1.4..1.4f64, k2 in -1.4..1.4f64, r in twist_ratio()) {
        let t = derive_config(1.0, r).unwrap();
        let k = FloquetPoint::reduced(k1, k2);
        let u = PotentialCoeffs::u0();
        let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let h = assemble_h((a, b), zero, &k, &t, &u, &PotentialCoeffs::v0(), Truncation::hex(5)).unwrap();
        let mut e = linalg::eigvalsh(&h.data).unwrap();
        e.sort_by(f64::total_cmp);
        let n = e.len();
        for i in 0..n {
            prop_assert!((e[i] + e[n - 1 - i]).abs() < 1e-10);
        }
        let d = assemble_d((a, b), &k, &t, &u, Truncation::hex(5)).unwrap();
        let mut s = linalg::singular_values(&d.data).unwrap();
        s.sort_by(f64::total_cmp);
        for (i, sv) in s.iter().enumerate() {
            prop_assert!((sv - e[n / 2 + i]).abs() < 1e-10);
        }
    }

    #[test]
    fn rotation_sectors_are_structurally_decoupled(a in c64(), b in c64(), r in twist_ratio(), sector in 0i64..3) {
        let t = derive_config(1.0, r).unwrap();
        let k = FloquetPoint::sector(sector);
        let d = assemble_d((a, b), &k, &t, &PotentialCoeffs::u0(), Truncation::hex(7)).unwrap();
        let qs: Vec<_> = (0..3).map(|l| rotation_basis(&d.rows, l).unwrap()).collect();
        for l in 0..3 {
            let mut live = 0;
            for m in 0..3 {
                let blk = linalg::adjoint(&qs[m]).dot(&d.data).dot(&qs[l]);
                let norm = linalg::frobenius(&blk);
                if norm > 1e-12 {
                    live += 1;
                }
            }
            prop_assert_eq!(live, 1);
        }
    }

    #[test]
    fn translation_sectors_are_decoupled(a in c64(), b in c64(), r in twist_ratio(), k1 in -0.5..0.5f64, k2 in -0.5..0.5f64) {
        // on the unfiltered basis, entries between different ℒ_a-sectors are exact zeros
        let t = derive_config(1.0, r).unwrap();
        let k = FloquetPoint::unshifted(k1, k2);
        let full = ModeBasis::new(Truncation::square(4), &[None, None, None]);
        let d = assemble_d_on((a, b), &k, &t, &PotentialCoeffs::u0(), &full);
        // a character of Γ₃/Γ is fixed by the class offset from the L²₀ pattern
        let base = layer_classes(&t, 0);
        let sector_of = |i: usize| {
            let (c, (m, n)) = full.locate(i);
            (mod3(m - base[c].0), mod3(n - base[c].1))
        };
        for i in 0..full.dim() {
            for j in 0..full.dim() {
                if d.data[(i, j)].norm() != 0.0 {
                    prop_assert_eq!(sector_of(i), sector_of(j));
                }
            }
        }
    }
}

#[test]
fn rotation_projector_is_idempotent() {
    let t = derive_config(1.0, Rational64::new(7, 4)).unwrap();
    let b = layer_basis(&t, &FloquetPoint::sector(1), Truncation::hex(6));
    for l in 0..3 {
        let q = rotation_basis(&b, l).unwrap();
        let p = q.dot(&linalg::adjoint(&q));
        let diff = &p.dot(&p) - &p;
        assert!(linalg::frobenius(&diff) < 1e-13);
    }
}

#[test]
fn reference_potentials_pass_their_validators() {
    let u = validate_symmetries(&PotentialCoeffs::u0(), 1, 1e-12);
    assert!(u.passed, "{u:?}");
    let v = validate_symmetries(&PotentialCoeffs::v0(), 1, 1e-12);
    assert!(v.passed, "{v:?}");
    let mut bad = PotentialCoeffs::u0();
    bad.sym_ell = 0;
    assert!(validate_symmetries(&bad, 1, 1e-12).rotation > 0.1);
}
