//! Acceptance run: one PASS/FAIL line per criterion with the measured numbers.
//! Exits 0 regardless of the outcome unless ACCEPTANCE_STRICT=1 is set.

use num_rational::Rational64;
use std::f64::consts::PI;
use std::time::Instant;
use ttg::asymptotics::squeeze_experiment;
use ttg::bands::{
    antichiral_gap_scan, band_structure, band_touch_locator, default_antichiral_grid,
    protected_states, rect_grid, wronskian,
};
use ttg::basis::{layer_classes, FloquetPoint, ModeBasis, Truncation};
use ttg::birman_schwinger::{
    assemble_bk, cluster_magic, generic_k_samples, magic_from_bk, multiplicity, right_half_plane,
    verify_magic,
};
use ttg::fourier_ops::{assemble_d, assemble_d_on, assemble_h, grid_norm_sqr, synthesize_grid};
use ttg::lattice::{derive_config, mod3, omega, pairing, rect_to_k, y_to_z, Case, TwistConfig};
use ttg::linalg;
use ttg::potential::{validate_symmetries, PotentialCoeffs};
use ttg::theta::{bloch_from_kernel, chern_number, f_k, flat_band_seed, g_k, theta1, FrameMethod};
use ttg::traces::{closed_form_s4, combinatorial_trace, discontinuity_sequence, numeric_trace};
use ttg::C64;

mod common;

use common::{leading_bilayer_magic, S3};

type Outcome = (bool, String);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Deterministic uniform samples in [0, 1).
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Real magic parameters shared between criteria.
struct Magics {
    equal: Vec<f64>,
    equal_trunc: Truncation,
    seven_four: Vec<f64>,
    seven_four_trunc: Truncation,
}

fn twist47() -> TwistConfig {
    derive_config(4.0, Rational64::new(7, 4)).unwrap()
}

fn twist11() -> TwistConfig {
    derive_config(1.0, Rational64::from_integer(1)).unwrap()
}

fn real_magics(list: &[ttg::birman_schwinger::MagicParameter], below: f64) -> Vec<f64> {
    list.iter()
        .filter(|m| m.alpha12.im.abs() < 1e-6 && m.alpha12.re > 0.0 && m.alpha12.re < below)
        .map(|m| m.alpha12.re)
        .collect()
}

fn c1() -> Outcome {
    let t = derive_config(1.0, Rational64::from_integer(2)).unwrap();
    let target = PI / S3;
    let k = FloquetPoint::reduced(0.31, -0.17);
    let errs: Vec<f64> = [12, 16, 20]
        .iter()
        .map(|&n| {
            let bk =
                assemble_bk(c(1.0), &k, &t, &PotentialCoeffs::u0(), Truncation::hex(n)).unwrap();
            (numeric_trace(&bk.op.data, 2).unwrap().re - target).abs() / target
        })
        .collect();
    let ok = errs[2] < 0.01 && errs[0] > errs[1] && errs[1] > errs[2];
    (
        ok,
        format!(
            "relative errors N=12,16,20: {:.3e} {:.3e} {:.3e}",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn c2() -> Outcome {
    let mut worst = 0.0f64;
    for h in [
        Rational64::from_integer(1),
        Rational64::from_integer(-1),
        Rational64::from_integer(2),
        Rational64::new(3, 2),
    ] {
        for r in [0.0, 0.5, 1.0] {
            let t = derive_config(1.0, h).unwrap();
            let re = t.effective_hop_ratio(c(r));
            let comb = combinatorial_trace(2, t.p, t.p_tilde, re).unwrap();
            let closed = closed_form_s4(re, t.ratio, t.p, t.zeta1, true).unwrap();
            worst = worst.max((comb - closed).norm());
        }
    }
    (
        worst < 1e-10,
        format!("max |combinatorial - closed| = {worst:.3e} over 12 cases"),
    )
}

fn c3() -> Outcome {
    let t = derive_config(1.0, Rational64::from_integer(2)).unwrap();
    let mut rel = Vec::new();
    for n in [20, 24] {
        let tr: Vec<C64> = [(0.31, -0.17), (-0.23, 0.44)]
            .iter()
            .map(|&(a, b)| {
                let bk = assemble_bk(
                    c(1.0),
                    &FloquetPoint::reduced(a, b),
                    &t,
                    &PotentialCoeffs::u0(),
                    Truncation::hex(n),
                )
                .unwrap();
                numeric_trace(&bk.op.data, 2).unwrap()
            })
            .collect();
        rel.push((tr[0] - tr[1]).norm() / tr[0].norm());
    }
    (
        rel[0] < 1e-2 && rel[1] < 1e-3,
        format!("relative spread N=20: {:.3e}, N=24: {:.3e}", rel[0], rel[1]),
    )
}

fn c4(magics: &mut Magics) -> Outcome {
    let u = PotentialCoeffs::u0();
    let k = FloquetPoint::reduced(0.31, -0.17);
    let mut notes = Vec::new();
    let mut ok = true;

    // equal angles: discovery, 25-point verification and a double magic
    let t = twist11();
    let tr = magics.equal_trunc;
    let list = right_half_plane(&cluster_magic(
        &magic_from_bk(&assemble_bk(c(1.0), &k, &t, &u, tr).unwrap(), None).unwrap(),
        1e-6,
    ));
    let real = real_magics(&list, 4.0);
    let first = real.first().copied().unwrap_or(f64::NAN);
    let ks = generic_k_samples(25, 0.1);
    let v = verify_magic((c(first), c(first)), &t, &u, &ks, tr, 1e-6).unwrap();
    let m = multiplicity((c(first), c(first)), &t, &u, &ks[..8], tr, 1e-6).unwrap();
    ok &= (first - 0.82825).abs() < 5e-3 && v.verified && m.value == 2;
    notes.push(format!(
        "(1,1): alpha {first:.6}, residual {:.2e}, multiplicity {}",
        v.residual, m.value
    ));
    magics.equal = real
        .into_iter()
        .filter(|&a| {
            verify_magic((c(a), c(a)), &t, &u, &ks[..6], tr, 1e-6)
                .map(|v| v.verified)
                .unwrap_or(false)
        })
        .collect();

    // (4,7): discovery at N=42, inverse iteration on B_k at the finer box
    let t = twist47();
    let coarse = Truncation::hex(42);
    let fine = magics.seven_four_trunc;
    let list = right_half_plane(&cluster_magic(
        &magic_from_bk(&assemble_bk(c(1.0), &k, &t, &u, coarse).unwrap(), None).unwrap(),
        1e-6,
    ));
    let found = real_magics(&list, 1.97);
    let bk = assemble_bk(c(1.0), &k, &t, &u, fine).unwrap();
    let ks = generic_k_samples(12, 0.1);
    let mut verified = Vec::new();
    for a0 in &found {
        let (lam, _) = linalg::eig_nearest(&bk.op.data, c(a0 * a0).inv(), 1e-13).unwrap();
        let a = lam.sqrt().inv().re;
        let v = verify_magic((c(a), c(a)), &t, &u, &ks, fine, 1e-6).unwrap();
        if v.verified {
            verified.push(a);
        }
        notes.push(format!("(4,7): alpha {a:.7}, residual {:.2e}", v.residual));
    }
    for target in [1.8999, 1.9288] {
        match verified.iter().find(|&&a| (a - target).abs() < 5e-3) {
            Some(&a) => {
                let m = multiplicity((c(a), c(a)), &t, &u, &ks[..6], fine, 1e-6).unwrap();
                ok &= m.value == 1;
                notes.push(format!("{target}: multiplicity {}", m.value));
            }
            None => {
                ok = false;
                notes.push(format!("{target}: not recovered"));
            }
        }
    }
    magics.seven_four = verified;
    (ok, notes.join("; "))
}

fn c5() -> Outcome {
    let oracle = leading_bilayer_magic(10);
    let bk = assemble_bk(
        c(0.0),
        &FloquetPoint::reduced(0.31, -0.17),
        &twist11(),
        &PotentialCoeffs::u0(),
        Truncation::hex(18),
    )
    .unwrap();
    let lib = right_half_plane(&magic_from_bk(&bk, None).unwrap());
    let first = lib
        .iter()
        .find(|m| m.alpha12.im.abs() < 1e-6)
        .unwrap()
        .alpha12;
    let d = (first - oracle).norm();
    (
        d < 1e-4,
        format!(
            "library {:.8}, oracle {:.8}, difference {d:.2e}",
            first.re, oracle.re
        ),
    )
}

fn c6(magics: &Magics) -> Outcome {
    let u = PotentialCoeffs::u0();
    let mut ok = true;
    let mut notes = Vec::new();
    for (t, list, tr) in [
        (twist11(), &magics.equal, magics.equal_trunc),
        (twist47(), &magics.seven_four, magics.seven_four_trunc),
    ] {
        let w = |a: f64| wronskian((c(a), c(a)), &t, &u, tr, 1e-8).unwrap().modulus;
        for &a in list {
            let m = w(a);
            ok &= m < 1e-6;
            notes.push(format!("|W({a:.5})| = {m:.2e}"));
        }
        for pair in list.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let m = w(mid);
            ok &= m > 0.1;
            notes.push(format!("midpoint |W({mid:.5})| = {m:.2e}"));
        }
    }
    (ok, notes.join("; "))
}

fn c7() -> Outcome {
    let u = PotentialCoeffs::u0();
    let alphas = [
        C64::new(0.37, 0.11),
        C64::new(0.23, -0.41),
        C64::new(1.13, 0.29),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (a, b, case) in [
        (3, 1, Case::CaseI),
        (3, 2, Case::CaseI),
        (1, 1, Case::CaseII),
        (4, 1, Case::CaseII),
    ] {
        let t = derive_config(1.0, Rational64::new(a, b)).unwrap();
        let mut good = t.case_tag == case;
        for &al in &alphas {
            good &= protected_states((al, al), &t, &u, Truncation::hex(12), 1e-8)
                .unwrap()
                .pattern_ok;
        }
        ok &= good;
        notes.push(format!(
            "{a}/{b} {:?} {}",
            t.case_tag,
            if good { "ok" } else { "mismatch" }
        ));
    }
    (ok, notes.join(", "))
}

fn c8(magics: &Magics) -> Outcome {
    let t = twist47();
    let mut ok = !magics.seven_four.is_empty();
    let mut notes = Vec::new();
    for &a in &magics.seven_four {
        if (a - 1.8999).abs() > 5e-3 && (a - 1.9288).abs() > 5e-3 {
            continue;
        }
        match band_touch_locator(
            (c(a), c(a)),
            &t,
            &PotentialCoeffs::u0(),
            Truncation::hex(60),
            1e-6,
        ) {
            Ok(rep) => {
                let s2 = rep.candidates.iter().find(|x| x.r == rep.r).unwrap().sigmas[1];
                ok &= rep.gap_elsewhere > 1e-3;
                notes.push(format!(
                    "{a:.5}: K0 = {:.4} sigma2 {s2:.2e}, gap {:.2e}",
                    rep.k0, rep.gap_elsewhere
                ));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{a:.5}: {e}"));
            }
        }
    }
    (ok, notes.join("; "))
}

fn c9(magics: &Magics) -> Outcome {
    let Some(&a) = magics
        .seven_four
        .iter()
        .find(|&&a| (a - 1.8999).abs() < 5e-3)
    else {
        return (false, "no simple magic available".into());
    };
    let rep = chern_number(
        c(a),
        c(1.0),
        1,
        &twist47(),
        &PotentialCoeffs::u0(),
        24,
        Truncation::hex(42),
        (0.0, 0.0),
        &FrameMethod::Kernel,
    )
    .unwrap();
    (
        rep.chern == -1 && rep.drift < 0.05,
        format!("alpha {a:.5}: chern {}, drift {:.2e}", rep.chern, rep.drift),
    )
}

fn c10(magics: &Magics) -> Outcome {
    let mut rng = Lcg(20261014);
    let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-300);
    let (mut th, mut fk, mut gk) = (0.0f64, 0.0f64, 0.0f64);
    let third = 2.0 * PI / 3.0;
    let gens = [y_to_z(third, 0.0), y_to_z(0.0, third)];
    for _ in 0..100 {
        let z = C64::new(-1.0 + 2.0 * rng.next(), -0.8 + 1.6 * rng.next());
        let t = theta1(z).value;
        th = th.max(rel(theta1(z + 1.0).value, -t));
        let mult = -(C64::new(0.0, -PI) * omega() + C64::new(0.0, -2.0 * PI) * z).exp();
        th = th.max(rel(theta1(z + omega()).value, mult * t));
        let z = y_to_z(-3.0 + 6.0 * rng.next(), -3.0 + 6.0 * rng.next());
        let k = rect_to_k(-1.5 + 3.0 * rng.next(), -1.5 + 3.0 * rng.next());
        for g in gens {
            if let (Some(f0), Some(f1), Some(g0), Some(g1)) =
                (f_k(z, k), f_k(z + g, k), g_k(z, k), g_k(z + g, k))
            {
                fk = fk.max(rel(f1, f0));
                gk = gk.max(rel(g1, C64::new(0.0, pairing(g, k)).exp() * g0));
            }
        }
    }
    let mut ok = th < 1e-10 && fk < 1e-10 && gk < 1e-10;
    let mut note = format!("theta {th:.1e}, F_k {fk:.1e}, G_k {gk:.1e}");
    match magics
        .seven_four
        .iter()
        .find(|&&a| (a - 1.8999).abs() < 5e-3)
    {
        Some(&a) => {
            let (t, u) = (twist47(), PotentialCoeffs::u0());
            let al = (c(a), c(a));
            let (v, basis, base, zero) = flat_band_seed(al, &t, &u, Truncation::hex(90)).unwrap();
            let b = bloch_from_kernel(&v, &basis, &base, zero.z, (0.31, -0.17), al, &t, &u, 1e-3)
                .unwrap();
            ok &= b.residual < 1e-6;
            note.push_str(&format!(
                "; Bloch residual {:.2e} from zero {:.5}",
                b.residual, zero.z
            ));
        }
        None => {
            ok = false;
            note.push_str("; no simple magic available");
        }
    }
    (ok, note)
}

fn c11() -> Outcome {
    let t = twist11();
    let v = PotentialCoeffs::v0();
    let grid = default_antichiral_grid();
    let mins: Vec<f64> = [1.0, 5.0]
        .iter()
        .map(|&a| {
            antichiral_gap_scan((c(a), c(a)), &t, &v, &grid, Truncation::hex(24))
                .unwrap()
                .min_sigma
        })
        .collect();
    (
        mins[0] > 0.01 && mins[1] > 0.01,
        format!("min sigma (1,1): {:.4}, (5,5): {:.4}", mins[0], mins[1]),
    )
}

fn c12() -> Outcome {
    let u = PotentialCoeffs::u0();
    let ts: Vec<f64> = (0..11).map(|i| 3.0 + 0.5 * i as f64).collect();
    let k = FloquetPoint::reduced(0.31, -0.17);
    let mut fits = Vec::new();
    for h in [1, 4] {
        let t = derive_config(1.0, Rational64::from_integer(h)).unwrap();
        let rep =
            squeeze_experiment((c(1.0), c(1.0)), &t, &u, &k, &ts, 6, Truncation::hex(20)).unwrap();
        fits.push(rep.fits[0]);
    }
    let (Some(a), Some(b)) = (fits[0], fits[1]) else {
        return (false, "no usable fit".into());
    };
    let ok = a.slope < 0.0 && a.r_squared > 0.99 && a.slope < b.slope;
    (
        ok,
        format!(
            "ratio 1: slope {:.3}, R^2 {:.3}; ratio 4: slope {:.3}, R^2 {:.3}",
            a.slope, a.r_squared, b.slope, b.r_squared
        ),
    )
}

fn c13() -> Outcome {
    // (4π/(9√3))(r⁴/h² + 3r²/(1−h+h²) + 1) at h = 2, r = 1
    let (h, r) = (2.0f64, 1.0f64);
    let limit =
        4.0 * PI / (9.0 * S3) * (r.powi(4) / (h * h) + 3.0 * r * r / (1.0 - h + h * h) + 1.0);
    let rows = discontinuity_sequence(1.0, Rational64::from_integer(2), 4, 1.0).unwrap();
    let v: Vec<f64> = rows.iter().map(|r| r.s4_over_p2).collect();
    let last_ratio = (v[3] / v[2] - 1.0).abs();
    let errs: Vec<f64> = v.iter().map(|x| (x - limit).abs()).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let ok = last_ratio < 0.05 && errs[3] / limit < 0.05 && decreasing && limit > 0.0;
    (
        ok,
        format!(
            "values {:.4} {:.4} {:.4} {:.4}, limit {limit:.5}, last step {:.1}%, last error {:.1}%",
            v[0],
            v[1],
            v[2],
            v[3],
            100.0 * last_ratio,
            100.0 * errs[3] / limit
        ),
    )
}

fn c14() -> Outcome {
    let mut notes = Vec::new();
    let u = PotentialCoeffs::u0();
    let sym = validate_symmetries(&u, 1, 1e-12).passed
        && validate_symmetries(&PotentialCoeffs::v0(), 1, 1e-12).passed;
    notes.push(format!("validators {sym}"));

    let mut rng = Lcg(7);
    let mut zeros_ok = true;
    let mut chiral = 0.0f64;
    for (a, b) in [(1, 1), (7, 4), (3, 1), (3, 2)] {
        let t = derive_config(1.0, Rational64::new(a, b)).unwrap();
        let al = (
            C64::new(rng.next(), rng.next()),
            C64::new(rng.next(), rng.next()),
        );
        let k = FloquetPoint::unshifted(rng.next() - 0.5, rng.next() - 0.5);
        let full = ModeBasis::new(Truncation::square(4), &[None, None, None]);
        let d = assemble_d_on(al, &k, &t, &u, &full);
        let base = layer_classes(&t, 0);
        let sector = |i: usize| {
            let (c, (m, n)) = full.locate(i);
            (mod3(m - base[c].0), mod3(n - base[c].1))
        };
        for i in 0..full.dim() {
            for j in 0..full.dim() {
                if sector(i) != sector(j) && d.data[(i, j)].norm() != 0.0 {
                    zeros_ok = false;
                }
            }
        }
        let zero = (c(0.0), c(0.0));
        let h = assemble_h(
            al,
            zero,
            &FloquetPoint::reduced(0.2, 0.1),
            &t,
            &u,
            &PotentialCoeffs::v0(),
            Truncation::hex(5),
        )
        .unwrap();
        let mut e = linalg::eigvalsh(&h.data).unwrap();
        e.sort_by(f64::total_cmp);
        let n = e.len();
        for i in 0..n {
            chiral = chiral.max((e[i] + e[n - 1 - i]).abs());
        }
    }
    notes.push(format!("sector zeros {zeros_ok}"));
    notes.push(format!("chiral asymmetry {chiral:.1e}"));

    let basis = ModeBasis::new(Truncation::hex(8), &[Some((1, 2))]);
    let coeffs: Vec<C64> = (0..basis.dim())
        .map(|i| C64::new(rng.next() - 0.5, rng.next() - 0.5) / (1.0 + i as f64).sqrt())
        .collect();
    let lhs = grid_norm_sqr(&[synthesize_grid(&coeffs, &basis, 0, 128)]);
    let rhs: f64 = coeffs.iter().map(|v| v.norm_sqr()).sum();
    let parseval = (lhs - rhs).abs() / rhs;
    notes.push(format!("Parseval {parseval:.1e}"));

    let t = twist11();
    let ks = rect_grid(5, -0.7, 0.3);
    let al = (c(0.5), c(0.5));
    let csv = || {
        band_structure(
            al,
            (c(0.0), c(0.0)),
            &t,
            &u,
            &PotentialCoeffs::v0(),
            &ks,
            3,
            Truncation::hex(6),
        )
        .unwrap()
        .to_csv()
    };
    let same = csv() == csv();
    notes.push(format!("CSV identical {same}"));

    // D itself: the assembled operator at the same inputs is bitwise stable
    let d1 = assemble_d(al, &ks[3], &t, &u, Truncation::hex(6)).unwrap();
    let d2 = assemble_d(al, &ks[3], &t, &u, Truncation::hex(6)).unwrap();
    let stable = d1.data == d2.data;
    let ok = sym && zeros_ok && chiral < 1e-10 && parseval < 1e-6 && same && stable;
    (ok, notes.join(", "))
}

fn main() {
    let mut magics = Magics {
        equal: Vec::new(),
        equal_trunc: Truncation::hex(24),
        seven_four: Vec::new(),
        seven_four_trunc: Truncation::hex(54),
    };
    let mut failed = 0;
    let mut report = |id: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {id:>2} {title}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "closed-form trace", &mut c1);
    report(2, "combinatorial trace", &mut c2);
    report(3, "k-independence", &mut c3);
    report(4, "magic recovery", &mut || c4(&mut magics));
    report(5, "bilayer limit", &mut c5);
    report(6, "Wronskian", &mut || c6(&magics));
    report(7, "protected states", &mut c7);
    report(8, "band touching", &mut || c8(&magics));
    report(9, "Chern number", &mut || c9(&magics));
    report(10, "theta identities", &mut || c10(&magics));
    report(11, "anti-chiral gap", &mut c11);
    report(12, "squeezing", &mut c12);
    report(13, "discontinuity", &mut c13);
    report(14, "property suite", &mut c14);
    println!("acceptance: {} of 14 passed", 14 - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
