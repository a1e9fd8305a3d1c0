//! One function per subcommand. Each writes its artifacts and returns a
//! short text summary for standard output.

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;

use super::config::RunConfig;
use super::output::{write_all, Artifacts};
use super::CommandKind;
use crate::asymptotics::{bracket_field, squeeze_experiment};
use crate::bands::{
    antichiral_gap_scan, band_structure, band_touch_locator, default_antichiral_grid,
    default_band_grid, fmt12, wronskian_scan,
};
use crate::basis::FloquetPoint;
use crate::birman_schwinger::{
    assemble_bk, cluster_magic, generic_k_samples, magic_from_bk, multiplicity, right_half_plane,
    sweep, verify_magic, CLUSTER_TOL,
};
use crate::error::{invalid, Error, Result};
use crate::lattice::{omega, rect_to_k, y_to_z, TwistConfig};
use crate::samples::r2;
use crate::theta::{
    bloch_from_kernel, chern_number, f_k, flat_band_seed, g_k, theta1, FrameMethod,
};
use crate::traces::{
    closed_form_s4, combinatorial_trace, discontinuity_limit, discontinuity_sequence, numeric_trace,
};

pub fn run(kind: CommandKind, cfg: &RunConfig) -> Result<String> {
    let workers = cfg.usize("workers")?;
    if workers > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let started = Instant::now();
    let mut arts = Artifacts::new();
    let (summary, pending) = match kind {
        CommandKind::Magic => magic(cfg, &mut arts)?,
        CommandKind::Bands => (bands(cfg, &mut arts)?, None),
        CommandKind::WronskianScan => (wscan(cfg, &mut arts)?, None),
        CommandKind::Trace => (trace(cfg, &mut arts)?, None),
        CommandKind::ThetaCheck => (theta_check(cfg, &mut arts)?, None),
        CommandKind::Chern => (chern(cfg, &mut arts)?, None),
        CommandKind::Touch => (touch(cfg, &mut arts)?, None),
        CommandKind::Squeeze => (squeeze(cfg, &mut arts)?, None),
        CommandKind::Bracket => (bracket(cfg, &mut arts)?, None),
        CommandKind::Antichiral => (antichiral(cfg, &mut arts)?, None),
        CommandKind::Sweep => (sweep_cmd(cfg, &mut arts)?, None),
        CommandKind::Discontinuity => (discontinuity(cfg, &mut arts)?, None),
    };
    let dir = write_all(cfg, kind.name(), &arts, started)?;
    if let Some(e) = pending {
        eprint!("{summary}");
        return Err(e);
    }
    Ok(format!("{summary}artifacts: {}\n", dir.display()))
}

fn cplx(z: C64) -> String {
    format!("{},{}", fmt12(z.re), fmt12(z.im))
}

struct Setup {
    twist: TwistConfig,
    r: C64,
    trunc: crate::basis::Truncation,
    pot: crate::potential::PotentialCoeffs,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let twist = cfg.twist()?;
    let r = twist.effective_hop_ratio(cfg.hop_ratio()?);
    Ok(Setup {
        twist,
        r,
        trunc: cfg.truncation()?,
        pot: cfg.pot_u()?,
    })
}

fn k_point(cfg: &RunConfig) -> Result<FloquetPoint> {
    let (a, b) = cfg.real_pair("k.point")?;
    Ok(FloquetPoint::reduced(a, b))
}

fn magic(cfg: &RunConfig, arts: &mut Artifacts) -> Result<(String, Option<Error>)> {
    let s = setup(cfg)?;
    let bk = assemble_bk(s.r, &k_point(cfg)?, &s.twist, &s.pot, s.trunc)?;
    let list = right_half_plane(&cluster_magic(&magic_from_bk(&bk, None)?, CLUSTER_TOL));
    let tol = cfg.f64("tol.magic")?;
    let ks = generic_k_samples(cfg.usize("k.samples")?, 0.1);
    let mut csv = String::from("alpha_re,alpha_im,cluster,verified,residual,multiplicity\n");
    let mut text = format!("{}\n", s.twist.describe());
    let mut unresolved = Vec::new();
    for m in list.into_iter().take(cfg.usize("magic.count")?) {
        let alpha = (m.alpha12, m.alpha12 * s.r);
        let v = verify_magic(alpha, &s.twist, &s.pot, &ks, s.trunc, tol)?;
        let mult = if v.verified {
            let mu = multiplicity(alpha, &s.twist, &s.pot, &ks, s.trunc, tol)?;
            if mu.unresolved {
                unresolved.push(m.alpha12);
            }
            Some(mu.value)
        } else {
            None
        };
        let ms = mult.map_or("".to_string(), |v| v.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{ms}",
            cplx(m.alpha12),
            m.cluster,
            v.verified,
            fmt12(v.residual)
        );
        let _ = writeln!(
            text,
            "alpha = {:.10} {:+.10}i  cluster {}  verified {}  residual {:.3e}  multiplicity {ms}",
            m.alpha12.re, m.alpha12.im, m.cluster, v.verified, v.residual
        );
    }
    arts.add("magic.csv", csv);
    let pending = (!unresolved.is_empty()).then(|| {
        Error::Contract(format!(
            "unresolved multiplicity at {unresolved:?}; increase trunc.n"
        ))
    });
    Ok((text, pending))
}

fn bands(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let alpha = cfg.pair("alpha", s.r)?;
    let alpha_t = cfg.pair("alpha_tilde", s.r)?;
    let g = band_structure(
        alpha,
        alpha_t,
        &s.twist,
        &s.pot,
        &cfg.pot_v()?,
        &default_band_grid(),
        cfg.usize("bands.jmax")?,
        s.trunc,
    )?;
    arts.add("bands.csv", g.to_csv());
    arts.json("bands.json", &g);
    Ok(format!(
        "{}\nmax E1 = {:.6e}, min E1 = {:.6e}\n",
        s.twist.describe(),
        g.max_band(0),
        g.min_band(0)
    ))
}

fn wscan(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let (a, b, n) = (
        cfg.f64("scan.alpha_min")?,
        cfg.f64("scan.alpha_max")?,
        cfg.usize("scan.steps")?,
    );
    if n < 2 || b <= a {
        return Err(invalid(
            "scan needs alpha_min < alpha_max and at least 2 steps",
        ));
    }
    let alphas: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let rows = wronskian_scan(
        &alphas,
        s.r,
        &s.twist,
        &s.pot,
        s.trunc,
        cfg.f64("tol.kernel")?,
    )?;
    let mut csv = String::from("alpha,abs_w,degenerate\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt12(r.alpha),
            fmt12(r.modulus),
            r.degenerate
        );
    }
    arts.add("wronskian.csv", csv);
    let best = rows
        .iter()
        .min_by(|x, y| x.modulus.total_cmp(&y.modulus))
        .expect("nonempty scan");
    Ok(format!(
        "min |W| = {:.3e} at alpha = {:.6}\n",
        best.modulus, best.alpha
    ))
}

#[derive(Serialize)]
struct TraceReport {
    ell: usize,
    h: String,
    hop_ratio: C64,
    numeric: Option<C64>,
    closed_form: Option<C64>,
    combinatorial: Option<C64>,
    n: i64,
}

fn trace(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let ell = cfg.usize("trace.ell")?;
    let which = cfg.get("trace.compare");
    if !["all", "numeric", "closed", "combinatorial"].contains(&which) {
        return Err(invalid(format!(
            "trace.compare must be all|numeric|closed|combinatorial, got {which:?}"
        )));
    }
    let want = |w: &str| which == "all" || which == w;
    let numeric = if want("numeric") {
        let bk = assemble_bk(s.r, &k_point(cfg)?, &s.twist, &s.pot, s.trunc)?;
        Some(numeric_trace(&bk.op.data, ell)?)
    } else {
        None
    };
    let closed = if want("closed") && ell == 2 {
        Some(closed_form_s4(
            s.r,
            s.twist.ratio,
            s.twist.p,
            s.twist.zeta1,
            true,
        )?)
    } else {
        None
    };
    let comb = if want("combinatorial") && (2..=3).contains(&ell) {
        Some(combinatorial_trace(ell, s.twist.p, s.twist.p_tilde, s.r)?)
    } else {
        None
    };
    let rep = TraceReport {
        ell,
        h: s.twist.ratio.to_string(),
        hop_ratio: s.r,
        numeric,
        closed_form: closed,
        combinatorial: comb,
        n: s.trunc.n,
    };
    arts.json("trace.json", &rep);
    let show =
        |v: Option<C64>| v.map_or("n/a".to_string(), |z| format!("{:.10}{:+.3e}i", z.re, z.im));
    Ok(format!(
        "tr(B^{ell}) numeric {}  closed {}  combinatorial {}\n",
        show(numeric),
        show(closed),
        show(comb)
    ))
}

#[derive(Serialize, Default)]
struct ThetaCheck {
    points: usize,
    theta_shift_one: f64,
    theta_shift_omega: f64,
    f_k_periodicity: f64,
    g_k_multiplier: f64,
    bloch: Option<BlochCheck>,
}

#[derive(Serialize)]
struct BlochCheck {
    alpha: C64,
    z_star: C64,
    zero_order: i64,
    target_k: C64,
    residual: f64,
}

/// Max relative residuals of the quasi-periodicity identities over R2 points.
fn identity_residuals(points: usize) -> ThetaCheck {
    let w = omega();
    let gens = {
        let t = 2.0 * std::f64::consts::PI / 3.0;
        [y_to_z(t, 0.0), y_to_z(0.0, t)]
    };
    let mut out = ThetaCheck {
        points,
        ..Default::default()
    };
    let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-300);
    for i in 0..points {
        let (a, b) = r2(i);
        let zeta = C64::new(-1.0 + 2.0 * a, -0.8 + 1.6 * b);
        let t = theta1(zeta).value;
        out.theta_shift_one = out.theta_shift_one.max(rel(theta1(zeta + 1.0).value, -t));
        let m = -(C64::new(0.0, -std::f64::consts::PI) * w
            + C64::new(0.0, -2.0 * std::f64::consts::PI) * zeta)
            .exp();
        out.theta_shift_omega = out
            .theta_shift_omega
            .max(rel(theta1(zeta + w).value, m * t));
        let z = y_to_z(-3.0 + 6.0 * a, -3.0 + 6.0 * b);
        let (c, d) = r2(i + 7919);
        let k = rect_to_k(-1.5 + 3.0 * c, -1.5 + 3.0 * d);
        for g in gens {
            if let (Some(f0), Some(f1), Some(g0), Some(g1)) =
                (f_k(z, k), f_k(z + g, k), g_k(z, k), g_k(z + g, k))
            {
                out.f_k_periodicity = out.f_k_periodicity.max(rel(f1, f0));
                let ph = C64::new(0.0, crate::lattice::pairing(g, k)).exp();
                out.g_k_multiplier = out.g_k_multiplier.max(rel(g1, ph * g0));
            }
        }
    }
    out
}

/// Theta identities on sample points, then a Bloch function built from a kernel zero.
fn theta_check(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let mut rep = identity_residuals(cfg.usize("theta.points")?);
    let mut text = format!(
        "max residuals: theta(z+1) {:.2e}  theta(z+w) {:.2e}  F_k periodicity {:.2e}  G_k multiplier {:.2e}\n",
        rep.theta_shift_one, rep.theta_shift_omega, rep.f_k_periodicity, rep.g_k_multiplier
    );
    let s = setup(cfg)?;
    let alpha = cfg.pair("alpha", s.r)?;
    if alpha.0.norm() > 0.0 {
        let (u, basis, base, z) = flat_band_seed(alpha, &s.twist, &s.pot, s.trunc)?;
        let kr = cfg.real_pair("k.point")?;
        let b = bloch_from_kernel(&u, &basis, &base, z.z, kr, alpha, &s.twist, &s.pot, 1e-3)?;
        let _ = writeln!(
            text,
            "bloch_from_kernel: zero {} (order {}), residual {:.3e}",
            z.z, z.order, b.residual
        );
        rep.bloch = Some(BlochCheck {
            alpha: alpha.0,
            z_star: z.z,
            zero_order: z.order,
            target_k: rect_to_k(kr.0, kr.1),
            residual: b.residual,
        });
    }
    arts.json("theta_check.json", &rep);
    Ok(text)
}

fn chern(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let alpha = cfg.pair("alpha", s.r)?;
    if alpha.0.norm() == 0.0 {
        return Err(invalid("chern needs a magic alpha"));
    }
    let m = cfg.usize("chern.multiplicity")?;
    let method = match cfg.get("chern.method") {
        "kernel" => FrameMethod::Kernel,
        "theta" => {
            let (u, basis, base, z) = flat_band_seed(alpha, &s.twist, &s.pot, s.trunc)?;
            FrameMethod::Theta {
                u,
                basis,
                base,
                z_star: z.z,
            }
        }
        other => {
            return Err(invalid(format!(
                "chern.method must be kernel or theta, got {other:?}"
            )))
        }
    };
    let ratio = if alpha.0.norm() > 0.0 {
        alpha.1 / alpha.0
    } else {
        s.r
    };
    let rep = chern_number(
        alpha.0,
        ratio,
        m,
        &s.twist,
        &s.pot,
        cfg.usize("chern.grid")?,
        s.trunc,
        (0.0, 0.0),
        &method,
    )?;
    arts.json("chern.json", &rep);
    Ok(format!(
        "chern = {} (drift {:.3e}, grid {})\n",
        rep.chern, rep.drift, rep.grid
    ))
}

fn touch(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let alpha = cfg.pair("alpha", s.r)?;
    let rep = band_touch_locator(alpha, &s.twist, &s.pot, s.trunc, cfg.f64("tol.magic")?)?;
    arts.json("touch.json", &rep);
    Ok(format!(
        "K0 = {} (r = {}), gap elsewhere {:.3e}\n",
        rep.k0, rep.r, rep.gap_elsewhere
    ))
}

fn squeeze(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let beta = cfg.pair("squeeze.beta", s.r)?;
    let (a, b, n) = (
        cfg.f64("squeeze.t_min")?,
        cfg.f64("squeeze.t_max")?,
        cfg.usize("squeeze.steps")?,
    );
    if n < 2 || b <= a {
        return Err(invalid("squeeze needs t_min < t_max and at least 2 steps"));
    }
    let ts: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let rep = squeeze_experiment(
        beta,
        &s.twist,
        &s.pot,
        &k_point(cfg)?,
        &ts,
        cfg.usize("squeeze.jmax")?,
        s.trunc,
    )?;
    arts.add("squeeze.csv", rep.to_csv());
    arts.json("squeeze.json", &rep);
    let f = rep.fits[0];
    Ok(match f {
        Some(f) => format!("log E1 fit: slope {:.4}, R^2 {:.4}\n", f.slope, f.r_squared),
        None => "log E1 fit: not enough samples above the noise floor\n".into(),
    })
}

fn bracket(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let twist = cfg.twist()?;
    let beta = cfg.pair("bracket.beta", C64::new(1.0, 0.0))?;
    let g = bracket_field(
        beta,
        cfg.i64("bracket.p")?,
        twist.ratio,
        &cfg.pot_u()?,
        cfg.usize("bracket.grid")?,
    )?;
    arts.add("bracket.csv", g.to_csv());
    #[derive(Serialize)]
    struct Sidecar<'a> {
        grid: usize,
        beta: (C64, C64),
        p: i64,
        ratio: &'a str,
    }
    arts.json(
        "bracket.json",
        &Sidecar {
            grid: g.g,
            beta: g.beta,
            p: g.p,
            ratio: &g.ratio,
        },
    );
    let max = g.points.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(format!(
        "bracket field on {}x{} grid, max {:.4e}\n",
        g.g, g.g, max
    ))
}

fn antichiral(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let s = setup(cfg)?;
    let at = cfg.pair("alpha_tilde", s.r)?;
    let rep = antichiral_gap_scan(
        at,
        &s.twist,
        &cfg.pot_v()?,
        &default_antichiral_grid(),
        s.trunc,
    )?;
    arts.json("antichiral.json", &rep);
    Ok(format!(
        "min sigma(D_ac) = {:.6e} at k = {}\n",
        rep.min_sigma, rep.argmin_k
    ))
}

fn sweep_cmd(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let ratios = cfg.fractions("sweep.ratios")?;
    let hops: Vec<C64> = cfg
        .get("sweep.hop_ratios")
        .split(',')
        .map(|h| {
            super::config::parse_complex(h).ok_or_else(|| invalid(format!("bad hop ratio {h:?}")))
        })
        .collect::<Result<_>>()?;
    let points: Vec<_> = ratios
        .iter()
        .flat_map(|&r| hops.iter().map(move |&h| (r, h)))
        .collect();
    let rows = sweep(
        &points,
        &cfg.pot_u()?,
        cfg.usize("sweep.count")?,
        cfg.truncation()?,
        Some((cfg.usize("k.samples")?, cfg.f64("tol.magic")?)),
    );
    let mut csv =
        String::from("ratio,hop_re,hop_im,alpha_re,alpha_im,multiplicity,residual,n,error\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{}/{},{},{},{},{},{},{}",
            r.ratio_num,
            r.ratio_den,
            cplx(r.hop_ratio),
            cplx(r.alpha),
            r.multiplicity.map_or(String::new(), |m| m.to_string()),
            r.residual.map_or(String::new(), fmt12),
            r.n,
            r.error.clone().unwrap_or_default().replace(',', ";")
        );
    }
    arts.add("sweep.csv", csv);
    Ok(format!("{} sweep rows\n", rows.len()))
}

fn discontinuity(cfg: &RunConfig, arts: &mut Artifacts) -> Result<String> {
    let twist = cfg.twist()?;
    let r = cfg.hop_ratio()?.re;
    let rows = discontinuity_sequence(
        twist.zeta1,
        twist.ratio,
        cfg.usize("discontinuity.n_max")? as u32,
        r,
    )?;
    let limit = discontinuity_limit(twist.h(), r, twist.zeta1);
    let mut csv = String::from("n,ratio,p_n,p_tilde_n,s4_closed,s4_combinatorial,s4_over_p2\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{}/{},{},{},{},{},{}",
            row.n,
            row.ratio_num,
            row.ratio_den,
            row.p_n,
            row.p_tilde_n,
            fmt12(row.s4_closed),
            fmt12(row.s4_combinatorial),
            fmt12(row.s4_over_p2)
        );
    }
    arts.add("discontinuity.csv", csv);
    #[derive(Serialize)]
    struct Report<'a> {
        limit: f64,
        rows: &'a [crate::traces::DiscontinuityRow],
    }
    arts.json("discontinuity.json", &Report { limit, rows: &rows });
    let last = rows.last().map_or(f64::NAN, |r| r.s4_over_p2);
    Ok(format!(
        "S4/p_n^2 at n = {}: {:.8}, limit {:.8}\n",
        rows.len(),
        last,
        limit
    ))
}
