//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! Run with `cargo test -p pwl-rotor --test acceptance`.

use std::io::Write as _;
use std::process::Command as Process;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pwl_rotor::conjugacy::{
    break_count_growth, break_orbit_partition, build_conjugacy, derivative_growth,
    invariant_density, is_conjugate_to_rigid, verify_invariance, ConjugacyVerdict, OrbitOutcome,
};
use pwl_rotor::families::{
    coelho, coelho_rho, gmm_critical_beta, herman_offset_two_param, herman_shifted, refraction,
    refraction_map, rigid,
};
use pwl_rotor::rotation::{birkhoff_enclosure, mode_lock_interval, periodic_points, Stability};
use pwl_rotor::scaling::{
    herman_offset_reference_slopes, least_squares, pinch_boundaries, r1, scaling_residual,
    ScalingOptions, ScalingReport,
};
use pwl_rotor::{BigRational, PwlLift, Scalar};
use pwl_rotor_cli::{render, run, Command, Format, JobConfig};

type Q = BigRational;

fn q(p: i64, d: i64) -> Q {
    Q::from_ratio(p, d)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn beta0() -> f64 {
    gmm_critical_beta(&2.0).unwrap()
}

fn partition<S: Scalar>(f: &PwlLift<S>, q: u64) -> pwl_rotor::conjugacy::OrbitPartition<S> {
    match break_orbit_partition(f, Some(q), 64).unwrap() {
        OrbitOutcome::Periodic(p) => p,
        other => panic!("breaks not periodic: {other:?}"),
    }
}

fn criterion_1() -> Outcome {
    let f = refraction_map(&2.0, &beta0()).unwrap().canonicalize();
    let verdict = is_conjugate_to_rigid(&f, 64).unwrap();
    let g = f.power(5).unwrap();
    let (lo, hi) = g.displacement_range(&4.0);
    let rigid = g.canonicalize().rigid_shift() == Some(4.0);
    let residual = lo.abs().max(hi.abs());
    let part = partition(&f, 5);
    let all_breaks: Vec<usize> = (0..f.len()).collect();
    let product = f.jump_product(&f.genuine_breaks()).unwrap();
    let one_orbit = part.orbit_count() == 1 && part.orbits[0].breaks.len() == 4;
    let pass = verdict == ConjugacyVerdict::Conjugate { p: 4, q: 5 }
        && residual <= 1e-10
        && rigid
        && one_orbit
        && f.genuine_breaks() == all_breaks
        && (product - 1.0).abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "verdict {verdict:?}, canonical F^5 = x + 4: {rigid}, |F^5 - x - 4| <= {residual:.2e}, orbits {}, jump product - 1 = {:.2e}",
            part.orbit_count(),
            product - 1.0
        ),
    )
}

fn criterion_2() -> Outcome {
    // slopes 2 and 1/2, reciprocal, so the rotation number is 1/2
    let f = coelho(q(1, 3), q(1, 3)).unwrap().instantiate(&q(0, 1)).unwrap();
    let g = f.power(2).unwrap().canonicalize();
    let identity = g.rigid_shift() == Some(q(1, 1));
    let part = partition(&f, 2);
    let h = build_conjugacy(&f, &part).unwrap();
    let mut worst_ok = true;
    for i in 0..1000 {
        let x = q(i, 1000) + q(1, 7919);
        let r = h.eval(&f.eval(&x)) - h.eval(&x) - q(1, 2);
        worst_ok &= r == r.floor();
    }
    outcome(
        identity && worst_ok && (part.p, part.q) == (1, 2),
        format!("coelho(1/3, 1/3): F^2 = x + 1 exactly: {identity}; h∘f = r_1/2∘h at 1000 points: {worst_ok}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0e1);
    let mut misses = Vec::new();
    let mut widest = 0.0f64;
    for _ in 0..20 {
        let a: f64 = rng.gen_range(0.1..0.9);
        let b: f64 = rng.gen_range(0.1..0.9);
        let f = coelho(a, b).unwrap().instantiate(&0.0).unwrap();
        let enc = birkhoff_enclosure(&f, 1_000_000);
        let (lo, hi) = enc.bounds_f64();
        widest = widest.max(hi - lo);
        let rho = coelho_rho(a, b).unwrap();
        if !enc.contains(rho) || hi - lo > 2e-6 * (1.0 + 1e-9) {
            misses.push(format!("({a:.4}, {b:.4}): [{lo}, {hi}] vs {rho}"));
        }
    }
    outcome(
        misses.is_empty(),
        format!("20 samples, widest enclosure {widest:.3e}, misses {misses:?}"),
    )
}

fn criterion_4() -> Outcome {
    let fam = refraction(2.0).unwrap();
    let b0 = beta0();
    let locked = mode_lock_interval(&fam, 4, 5, (1.2, 1.27), 1e-9).unwrap();
    let w45 = locked.width();
    let around = locked.lo_param - 1e-9 <= b0 && b0 <= locked.hi_param + 1e-9;
    let six = mode_lock_interval(&fam, 5, 6, (1.125, 1.16), 1e-9).unwrap();
    let w56 = six.width();
    let meets = six.lo_param < 1.131 && six.hi_param >= 1.122;
    outcome(
        w45 < 1e-8 && around && w56 > 1e-3 && meets,
        format!(
            "4/5 width {w45:.2e} around β0 = {b0:.10}: {around}; 5/6 on [{:.5}, {:.5}] width {w56:.4}",
            six.lo_param, six.hi_param
        ),
    )
}

fn scaling_points() -> Vec<(&'static str, pwl_rotor::families::FamilySpec<f64>, f64)> {
    vec![
        ("rigid", rigid(0.25), 0.0),
        ("herman_shifted", herman_shifted(2f64.sqrt()).unwrap(), 0.0),
        ("refraction", refraction(2.0).unwrap(), beta0()),
    ]
}

fn herman_sweep_fit() -> f64 {
    let cfg = JobConfig::from_json_str(
        r#"{"family": {"family": "herman_shifted", "params": {"lambda": "sqrt(2)"}},
            "range": [-0.2, 0.2], "points": 1000, "m": 100000}"#,
    )
    .unwrap();
    let rep = run(Command::Sweep, &cfg).unwrap();
    let rows = rep.json["rows"].as_array().unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in rows {
        let mid = 0.5 * (r["rho_lo"].as_f64().unwrap() + r["rho_hi"].as_f64().unwrap());
        xs.push(r["mu"].as_f64().unwrap());
        ys.push(mid);
    }
    least_squares(&xs, &ys).0
}

fn criterion_5(reports: &[ScalingReport]) -> Outcome {
    let lam = 2f64.sqrt();
    let herman_exact = (1.0 + lam).powi(2) / (4.0 * lam);
    let oracles = [Some(1.0), Some(herman_exact), None];
    let mut pass = true;
    let mut parts = Vec::new();
    for (rep, oracle) in reports.iter().zip(oracles) {
        let agree = (rep.r1 - rep.r1_emp).abs() <= 1e-3 * rep.r1.abs().max(1.0);
        let exact = oracle.is_none_or(|o| (rep.r1 - o).abs() <= 1e-9);
        pass &= agree && exact;
        parts.push(format!("{} R1 {:.7} emp {:.7}", rep.family, rep.r1, rep.r1_emp));
    }
    let refr = reports[2].r1;
    let near_regression = (refr - (-0.312)).abs() <= 0.02;
    let fit = herman_sweep_fit();
    let fit_ok = (reports[1].r1 - fit).abs() <= 0.01 && (fit - 1.027).abs() <= 0.002 + 0.01;
    pass &= near_regression && fit_ok;
    parts.push(format!("refraction vs -0.312: {near_regression}; herman LS fit over |μ| <= 0.2: {fit:.5}"));
    outcome(pass, parts.join("; "))
}

fn criterion_6(reports: &[ScalingReport]) -> Outcome {
    let points = scaling_points();
    let windows = [1e-2, 5e-3, 2.5e-3];
    let mut pass = true;
    let mut parts = Vec::new();
    for idx in [1, 2] {
        let (name, fam, mu) = &points[idx];
        let r2: Vec<f64> = std::thread::scope(|s| {
            let handles: Vec<_> = windows
                .iter()
                .map(|&w| s.spawn(move || scaling_residual(fam, mu, &reports[idx], w, 41, 4_000_000).unwrap().r2))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let hi = r2.iter().cloned().fold(f64::MIN, f64::max);
        let lo = r2.iter().cloned().fold(f64::MAX, f64::min);
        pass &= lo > 0.0 && hi / lo <= 2.0;
        parts.push(format!("{name} R2 {r2:.3?}"));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let lam = 2f64.sqrt();
    let f = herman_shifted(lam).unwrap().instantiate(&0.0).unwrap();
    let d = invariant_density(&f, 2).unwrap();
    let c = 1.0 / (1.0 + lam);
    let expect = [(1.0 + lam) / 2.0, (1.0 + 1.0 / lam) / 2.0];
    let shape = d.points.len() == 2 && d.points[0].abs() <= 1e-12 && (d.points[1] - c).abs() <= 1e-12;
    let values = shape && (0..2).all(|i| (d.densities[i] - expect[i]).abs() <= 1e-12);
    let float_err = verify_invariance(&f, &d, 1000);

    let lam_q = q(3, 2);
    let fq = herman_shifted(lam_q).unwrap().instantiate(&q(0, 1)).unwrap();
    let dq = invariant_density(&fq, 2).unwrap();
    let exact_err = verify_invariance(&fq, &dq, 1000);
    outcome(
        values && float_err <= 1e-12 && exact_err == q(0, 1),
        format!(
            "densities {:?}, float discrepancy {float_err:.2e}, exact discrepancy {exact_err}",
            d.densities
        ),
    )
}

fn growth_bounded<S: Scalar>(name: &str, f: &PwlLift<S>, q: u64) -> (bool, String) {
    let k = f.genuine_breaks().len();
    let counts = break_count_growth(f, 50).unwrap();
    let slopes = derivative_growth(f, 50).unwrap();
    let bound = (0..q.saturating_sub(1)).fold(1.0, |acc, _| acc * f.max_slope().to_f64());
    let count_max = *counts.iter().max().unwrap();
    let slope_max = slopes.iter().map(Scalar::to_f64).fold(0.0, f64::max);
    let ok = count_max as u64 <= q * k as u64 && slope_max <= bound * (1.0 + 1e-9);
    (
        ok,
        format!("{name}: breaks <= {count_max} (qK = {}), slope <= {slope_max:.4} (s_M^(q-1) = {bound:.4})", q * k as u64),
    )
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let cases: Vec<(bool, String)> = vec![
        growth_bounded("refraction β0", &refraction_map(&2.0, &beta0()).unwrap().canonicalize(), 5),
        growth_bounded(
            "herman_shifted 3/2",
            &herman_shifted(q(3, 2)).unwrap().instantiate(&q(0, 1)).unwrap(),
            2,
        ),
        growth_bounded(
            "coelho 1/3",
            &coelho(q(1, 3), q(1, 3)).unwrap().instantiate(&q(0, 1)).unwrap(),
            2,
        ),
    ];
    for (ok, s) in cases {
        pass &= ok;
        parts.push(s);
    }

    // locked but not conjugate: distortion along the period-6 orbits is unbounded
    let f = refraction_map(&2.0, &1.14).unwrap();
    let orbit = periodic_points(&f, 5, 6).unwrap();
    let repelling = orbit.iter().find(|p| p.stability() == Stability::Repelling);
    let attracting = orbit.iter().find(|p| p.stability() == Stability::Attracting);
    match (repelling, attracting) {
        (Some(r), Some(a)) => {
            let g = f.power(6 * 40).unwrap();
            let up = g.slope_at(&r.point);
            let down = g.slope_at(&a.point);
            let ok = up > 1e3 && down < 1e-3;
            pass &= ok;
            parts.push(format!(
                "β = 1.14: (F^240)' = {up:.3e} at the repelling point, {down:.3e} at the stable one"
            ));
        }
        _ => {
            pass = false;
            parts.push(format!("β = 1.14: no hyperbolic period-6 pair among {} points", orbit.len()));
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let lam = 0.5;
    let two = herman_offset_two_param(lam);
    let grid = [-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.02];
    let rep = pinch_boundaries(
        &two,
        1,
        2,
        &grid,
        (-0.05, 0.05),
        1e-10,
        Some(herman_offset_reference_slopes(lam)),
    );
    let mut pass = true;
    let mut worst = 0.0f64;
    for row in &rep.rows {
        let (Some(lo), Some(hi), Some((rlo, rhi))) = (row.mu_lo, row.mu_hi, row.reference) else {
            pass = false;
            continue;
        };
        let err = (lo - rlo).abs().max((hi - rhi).abs());
        if row.d != 0.0 {
            pass &= err <= 3.0 * row.d * row.d;
            worst = worst.max(err / (row.d * row.d));
        }
    }
    let w0 = rep.width_at_zero.unwrap_or(f64::INFINITY);
    pass &= w0 <= 1e-8;
    outcome(pass, format!("max error / d^2 = {worst:.3}, width at d = 0: {w0:.2e}"))
}

fn sweep_bytes(workers: usize) -> String {
    let cfg = JobConfig::from_json_str(&format!(
        r#"{{"family": {{"family": "refraction", "params": {{"alpha": 2}}}},
            "range": [1.1, 1.3], "points": 200, "m": 20000, "workers": {workers}}}"#
    ))
    .unwrap();
    render(&run(Command::Sweep, &cfg).unwrap(), &cfg, Format::Csv).unwrap()
}

fn binary_sweep(workers: usize, dir: &std::path::Path) -> Vec<u8> {
    let config = dir.join("sweep.json");
    std::fs::write(
        &config,
        json!({"family": {"family": "herman_shifted", "params": {"lambda": "sqrt(2)"}},
               "range": [-0.1, 0.1], "points": 64, "m": 5000})
        .to_string(),
    )
    .unwrap();
    let out = dir.join(format!("sweep-{workers}.csv"));
    let status = Process::new(env!("CARGO_BIN_EXE_pwl-rotor"))
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--format", "csv", "--workers", &workers.to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(out).unwrap()
}

fn criterion_10() -> Outcome {
    let one = sweep_bytes(1);
    let four = sweep_bytes(4);
    let dir = tempfile::tempdir().unwrap();
    let same_bin = binary_sweep(1, dir.path()) == binary_sweep(3, dir.path());

    // refraction is decreasing in β, so midpoints must be non-increasing
    let mids: Vec<f64> = one
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("mu"))
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            0.5 * (v[1] + v[2])
        })
        .collect();
    let monotone = mids.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        one == four && same_bin && monotone && mids.len() == 200,
        format!(
            "library output identical for 1 and 4 workers: {}; binary output identical for 1 and 3: {same_bin}; \
             midpoints monotone over {} points: {monotone}",
            one == four,
            mids.len()
        ),
    )
}

fn report(n: usize, o: &Outcome) {
    let mut err = std::io::stderr().lock();
    let tag = if o.pass { "PASS" } else { "FAIL" };
    writeln!(err, "acceptance criterion {n:>2}: {tag} | {}", o.detail).unwrap();
}

#[test]
fn acceptance_criteria() {
    let results: Vec<(usize, Outcome)> = std::thread::scope(|s| {
        let simple: Vec<(usize, std::thread::ScopedJoinHandle<'_, Outcome>)> = vec![
            (1, s.spawn(criterion_1)),
            (2, s.spawn(criterion_2)),
            (3, s.spawn(criterion_3)),
            (4, s.spawn(criterion_4)),
            (7, s.spawn(criterion_7)),
            (8, s.spawn(criterion_8)),
            (9, s.spawn(criterion_9)),
            (10, s.spawn(criterion_10)),
        ];
        let scaling = s.spawn(|| {
            let opts = ScalingOptions::default();
            let reports: Vec<ScalingReport> = std::thread::scope(|t| {
                let hs: Vec<_> = scaling_points()
                    .into_iter()
                    .map(|(_, fam, mu)| t.spawn(move || r1(&fam, &mu, &opts).unwrap()))
                    .collect();
                hs.into_iter().map(|h| h.join().unwrap()).collect()
            });
            let (c5, c6) = std::thread::scope(|t| {
                let a = t.spawn(|| criterion_5(&reports));
                let b = t.spawn(|| criterion_6(&reports));
                (a.join().unwrap(), b.join().unwrap())
            });
            vec![(5, c5), (6, c6)]
        });
        let mut all: Vec<(usize, Outcome)> = simple
            .into_iter()
            .map(|(n, h)| (n, h.join().unwrap()))
            .collect();
        all.extend(scaling.join().unwrap());
        all
    });
    let mut results = results;
    results.sort_by_key(|(n, _)| *n);
    for (n, o) in &results {
        report(*n, o);
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn cli_rejects_unknown_keys_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"family": {"family": "rigid", "params": {"omega": 0.5}}, "oops": 1}"#).unwrap();
    let status = Process::new(env!("CARGO_BIN_EXE_pwl-rotor"))
        .args(["rho", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_not_conjugate_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("refr.json");
    let cfg: Value = json!({"family": {"family": "refraction", "params": {"alpha": 2}}, "mu": 1.14, "q_max": 20});
    std::fs::write(&config, cfg.to_string()).unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_pwl-rotor"))
        .args(["conjugacy", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let body: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["verdict"]["verdict"], "not_conjugate");
}
