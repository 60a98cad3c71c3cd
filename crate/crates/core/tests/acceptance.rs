//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use poisson_minimax::boundary::{solve_boundaries, Boundaries, DpConfig, DEFAULT_CONTACT_TOL};
use poisson_minimax::detector::{detect, Detection, EventStream};
use poisson_minimax::fmt::to_json;
use poisson_minimax::fode::{solve_fode, FodeConfig};
use poisson_minimax::lfd::{
    find_lfd, gamma_mc, jbar_integrand, LfdConfig, LfdReport, LfdStatus, PsiGrid,
};
use poisson_minimax::model::{classify_regime, Costs, Model, PriorOdds, Regime};
use poisson_minimax::pathsim::{
    estimate_horizon_mean, simulate_exit_observed, ExitRecord, Interval, Side, DEFAULT_MAX_JUMPS,
};
use poisson_minimax::rng::RngStream;

// Targets and tolerances.
const ALPHA: (f64, f64) = (0.297, 0.005);
const BETA: (f64, f64) = (2.390, 0.02);
const RATIO: (f64, f64) = (0.124, 0.005);
const GAMMA: (f64, f64) = (-0.788, 0.05);
const PHI0: (f64, f64) = (0.977, 0.02);
const L_LOWER: (f64, f64) = (0.304, 0.01);
const L_UPPER: (f64, f64) = (2.440, 0.03);
const H_ONE: (f64, f64) = (-0.03, 0.02);
const SIGMAS: f64 = 3.0;
const ANCHOR_INSET: f64 = 1e-3;
const FODE_SEGMENT_TOL: f64 = 1e-8;
const GAMMA_PATHS: u64 = 1_000_000;
const MARTINGALE_PATHS: u64 = 100_000;
const REPLAY_STREAMS: u64 = 10_000;
const SOLVE_BUDGET: Duration = Duration::from_secs(60);
const GAMMA_BUDGET: Duration = Duration::from_secs(120);
const LFD_BUDGET: Duration = Duration::from_secs(600);

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

struct Check {
    ok: bool,
    detail: String,
}

fn within(x: f64, (target, tol): (f64, f64)) -> bool {
    (x - target).abs() <= tol
}

fn instance() -> (Model, Costs) {
    (Model::new(1.0, 5.0).unwrap(), Costs::new(2.0, 2.0).unwrap())
}

struct Shared {
    boundaries: Boundaries,
    solve_time: Duration,
    report: LfdReport,
    lfd_time: Duration,
    json_pool_a: String,
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn shared() -> Shared {
    let (m, c) = instance();
    let start = Instant::now();
    let (boundaries, _) =
        solve_boundaries(&m, &c, &DpConfig::for_problem(&m, &c), DEFAULT_CONTACT_TOL).unwrap();
    let solve_time = start.elapsed();

    let start = Instant::now();
    let report = in_pool(4, || find_lfd(&m, &c, &LfdConfig::for_problem(&m, &c)).unwrap());
    let lfd_time = start.elapsed();
    let json_pool_a = to_json(&report).unwrap();
    Shared {
        boundaries,
        solve_time,
        report,
        lfd_time,
        json_pool_a,
    }
}

fn c1(s: &Shared) -> Check {
    let b = s.boundaries;
    let ok = within(b.alpha_star, ALPHA)
        && within(b.beta_star, BETA)
        && within(b.ratio(), RATIO)
        && s.solve_time < SOLVE_BUDGET;
    Check {
        ok,
        detail: format!(
            "alpha* = {:.4} (want {} ± {}), beta* = {:.4} (want {} ± {}), ratio = {:.4} (want {} ± {}), {:.1?}",
            b.alpha_star, ALPHA.0, ALPHA.1, b.beta_star, BETA.0, BETA.1, b.ratio(), RATIO.0, RATIO.1, s.solve_time
        ),
    }
}

fn c2(s: &Shared) -> Check {
    let (m, c) = instance();
    let start = Instant::now();
    let r = s.boundaries.ratio();
    let sol = solve_fode(&m, &c, r, &FodeConfig::default()).unwrap();
    let mc = gamma_mc(&m, &c, r, GAMMA_PATHS, LfdConfig::for_problem(&m, &c).seed).unwrap();
    let elapsed = start.elapsed();
    let agree = (mc.value - sol.gamma_star).abs() <= SIGMAS * mc.se;
    Check {
        ok: within(mc.value, GAMMA) && within(sol.gamma_star, GAMMA) && agree && elapsed < GAMMA_BUDGET,
        detail: format!(
            "ODE {:.4}, MC {:.4} ± {:.4} (want {} ± {}, mutual |diff| {:.2} se), {:.1?}",
            sol.gamma_star,
            mc.value,
            mc.se,
            GAMMA.0,
            GAMMA.1,
            (mc.value - sol.gamma_star).abs() / mc.se,
            elapsed
        ),
    }
}

fn c3(s: &Shared) -> Check {
    let r = &s.report;
    match (r.phi0, r.likelihood_interval) {
        (Some(phi0), Some((lo, hi))) => Check {
            ok: within(phi0, PHI0) && within(lo, L_LOWER) && within(hi, L_UPPER) && s.lfd_time < LFD_BUDGET,
            detail: format!(
                "phi0 = {phi0:.4} (want {} ± {}), L-interval ({lo:.4}, {hi:.4}) (want ({} ± {}, {} ± {})), {:.1?}",
                PHI0.0, PHI0.1, L_LOWER.0, L_LOWER.1, L_UPPER.0, L_UPPER.1, s.lfd_time
            ),
        },
        _ => Check {
            ok: false,
            detail: format!("no root reported (status {:?})", r.status),
        },
    }
}

fn c4(s: &Shared) -> Check {
    let r = &s.report;
    let (Some(h1), Some(phi0), Some(conf)) = (r.h_at_even_odds, r.phi0, r.confirmation) else {
        return Check {
            ok: false,
            detail: "missing h(1) or root".into(),
        };
    };
    let differs = phi0 != 1.0 && h1.h < -SIGMAS * h1.se;
    Check {
        ok: within(h1.h, H_ONE) && differs,
        detail: format!(
            "h(1) = {:.4} ± {:.4} (want {} ± {}), root {phi0:.4} with independent h = {:.4} ± {:.4}",
            h1.h, h1.se, H_ONE.0, H_ONE.1, conf.h, conf.se
        ),
    }
}

fn c5(s: &Shared) -> Check {
    let (_, c) = instance();
    let r = &s.report;
    let (Some((lo, hi)), Some(g), Some(b)) = (r.endpoints, r.gamma_star, r.boundaries) else {
        return Check {
            ok: false,
            detail: "missing endpoint evaluations".into(),
        };
    };
    let expect_lo = b.alpha_star * (1.0 + ANCHOR_INSET);
    let expect_hi = b.beta_star * (1.0 - ANCHOR_INSET);
    assert_eq!(lo.phi, expect_lo);
    assert!((hi.phi - expect_hi).abs() <= 1e-15 * expect_hi);
    let ok_lo = (lo.h - c.a()).abs() <= SIGMAS * lo.se;
    let ok_hi = (hi.h - g.fode).abs() <= SIGMAS * hi.se;
    Check {
        ok: ok_lo && ok_hi,
        detail: format!(
            "h(alpha*(1+1e-3)) = {:.5} ± {:.5} vs a = {} ({:.1} se) [{}]; h(beta*(1-1e-3)) = {:.4} ± {:.4} vs gamma* = {:.4} ({:.1} se) [{}]",
            lo.h,
            lo.se,
            c.a(),
            (lo.h - c.a()).abs() / lo.se,
            if ok_lo { "ok" } else { "off" },
            hi.h,
            hi.se,
            g.fode,
            (hi.h - g.fode).abs() / hi.se,
            if ok_hi { "ok" } else { "off" },
        ),
    }
}

fn c6() -> Check {
    // Exact boundary case lambda1 - lambda0 = 1/a + 1/b included.
    let instances = [(1.0, 1.5, 2.0, 3.0), (1.0, 2.0, 2.0, 2.0), (2.0, 2.5, 1.0, 4.0), (0.5, 1.0, 5.0, 0.5)];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (l0, l1, a, b) in instances {
        let m = Model::new(l0, l1).unwrap();
        let c = Costs::new(a, b).unwrap();
        ok &= classify_regime(&m, &c) == Regime::Trivial;
        let k = b / a;
        let cfg = LfdConfig {
            psi_grid: Some(PsiGrid { min: k / 10.0, max: 10.0 * k, count: 100 }),
            ..LfdConfig::for_problem(&m, &c)
        };
        let r = find_lfd(&m, &c, &cfg).unwrap();
        ok &= r.status == LfdStatus::Trivial && r.phi0 == Some(k);
        ok &= r.saddle.curve.len() == 100;
        let stop_now = ExitRecord {
            tau: 0.0,
            side: Side::Lower,
            l_exit: 1.0,
            int_l_dt: 0.0,
            n_jumps: 0,
        };
        for p in &r.saddle.curve {
            let oracle = (b).min(a * p.psi) / (1.0 + p.psi);
            ok &= p.jbar == oracle && jbar_integrand(&stop_now, &c, p.psi) == oracle;
            worst = worst.max((p.jbar - oracle).abs());
        }
    }
    Check {
        ok,
        detail: format!("{} instances, phi0 = b/a exactly, max |Jbar - min(b, a psi)/(1+psi)| = {worst:e}", instances.len()),
    }
}

fn c7() -> Check {
    let (_, c) = instance();
    let mut worst = 0.0f64;
    for (l0, l1) in [(1.0, 5.0), (2.0, 3.0), (0.5, 4.0)] {
        let m = Model::new(l0, l1).unwrap();
        let lo = l0 / l1;
        let sol = solve_fode(&m, &c, 0.5 * lo, &FodeConfig::default()).unwrap();
        let exponent = -l0 / (l1 - l0);
        for (phi, f0) in sol.grid.iter().zip(&sol.f0) {
            if *phi >= lo {
                worst = worst.max((f0 - phi.powf(exponent)).abs());
            }
        }
    }
    Check {
        ok: worst < FODE_SEGMENT_TOL,
        detail: format!("max |f0 - phi^(-l0/(l1-l0))| = {worst:.2e} over 3 pairs (want < {FODE_SEGMENT_TOL:e})"),
    }
}

fn c8() -> Check {
    let (m, c) = instance();
    let seed = LfdConfig::for_problem(&m, &c).seed;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let e = estimate_horizon_mean(&m, t, MARTINGALE_PATHS, seed).unwrap();
        let z = (e.value - 1.0) / e.se;
        ok &= z.abs() <= SIGMAS;
        parts.push(format!("T={t}: {:.4} ± {:.4} (z = {z:+.2})", e.value, e.se));
    }
    Check {
        ok,
        detail: parts.join(", "),
    }
}

fn c9(s: &Shared) -> Check {
    let g = s.report.gamma_star.unwrap();
    let (m, c) = instance();
    let r = s.boundaries.ratio();
    let sol = solve_fode(&m, &c, r, &FodeConfig::default()).unwrap();
    let f0 = *sol.f0.last().unwrap();
    let p = gamma_mc(&m, &c, r, GAMMA_PATHS, LfdConfig::for_problem(&m, &c).seed).unwrap().p_lower;
    assert_eq!(p.value, g.mc_p_lower);
    let prod = p.value * f0;
    let se = p.se * f0;
    Check {
        ok: (prod - 1.0).abs() <= SIGMAS * se,
        detail: format!("p_lower * f0(r) = {prod:.5} ± {se:.5}"),
    }
}

fn c10(s: &Shared) -> Check {
    let sd = &s.report.saddle;
    let phi0 = s.report.phi0.unwrap_or(f64::NAN);
    Check {
        ok: sd.curve.len() == 50 && sd.max_excess_se <= SIGMAS && sd.peak_near_phi0,
        detail: format!(
            "max (Jbar(psi) - Jbar(phi0))/se = {:.2}; grid maximum within 3 se reached within one step ({:.3} in log) of phi0 = {phi0:.4}: {}; literal argmax psi = {:.4}",
            sd.max_excess_se, sd.log_step, sd.peak_near_phi0, sd.argmax_psi
        ),
    }
}

fn c11(s: &Shared) -> Check {
    let (m, c) = instance();
    let again = in_pool(1, || find_lfd(&m, &c, &LfdConfig::for_problem(&m, &c)).unwrap());
    let json_b = to_json(&again).unwrap();
    Check {
        ok: json_b == s.json_pool_a,
        detail: format!("4-thread and 1-thread reports, {} bytes each, identical: {}", json_b.len(), json_b == s.json_pool_a),
    }
}

fn c12(s: &Shared) -> Check {
    let (m, c) = instance();
    let b = s.boundaries;
    let psi = s.report.phi0.unwrap_or(1.0);
    let iv: Interval = b.likelihood_interval(psi).unwrap();
    let prior = PriorOdds::new(psi).unwrap();
    let mut mismatches = 0;
    let mut sides = [0u64; 2];
    for i in 0..REPLAY_STREAMS {
        let mut times = Vec::new();
        let rec = simulate_exit_observed(&m, &iv, 1.0, &mut RngStream::new(0xAC, i), DEFAULT_MAX_JUMPS, |t| times.push(t))
            .unwrap();
        sides[(rec.side == Side::Upper) as usize] += 1;
        match detect(&m, &c, &b, prior, &EventStream::new(times).unwrap()) {
            Ok(Detection::Exit(o)) if o.stopped_at.to_bits() == rec.tau.to_bits() && o.exit_side == rec.side => {}
            _ => mismatches += 1,
        }
    }
    Check {
        ok: mismatches == 0,
        detail: format!(
            "{REPLAY_STREAMS} streams ({} lower, {} upper), {mismatches} mismatches in (tau, side)",
            sides[0], sides[1]
        ),
    }
}

fn main() {
    let start = Instant::now();
    let s = shared();
    let checks: Vec<Criterion> = vec![
        ("boundaries", Box::new(|| c1(&s))),
        ("gamma*", Box::new(|| c2(&s))),
        ("least favorable prior", Box::new(|| c3(&s))),
        ("asymmetry", Box::new(|| c4(&s))),
        ("endpoint anchors", Box::new(|| c5(&s))),
        ("trivial regime", Box::new(c6)),
        ("closed-form f0 segment", Box::new(c7)),
        ("martingale", Box::new(c8)),
        ("Dynkin identity", Box::new(|| c9(&s))),
        ("saddle", Box::new(|| c10(&s))),
        ("determinism", Box::new(|| c11(&s))),
        ("replay", Box::new(|| c12(&s))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let r = check();
        if !r.ok {
            failed += 1;
        }
        println!("criterion {:>2} {:<22} {}  {}", i + 1, name, if r.ok { "PASS" } else { "FAIL" }, r.detail);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1?}",
        checks.len() - failed,
        checks.len(),
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
