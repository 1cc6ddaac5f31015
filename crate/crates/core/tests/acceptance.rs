//! Acceptance criteria, run sequentially by a plain `main` (no libtest
//! harness). One `PASS`/`FAIL` line per criterion; the process exits
//! nonzero if any criterion fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use randcert::bounds::{evaluate_assignment, ksep_bound_r2, mprod_bound_r2, CriterionKind};
use randcert::certify::{certify_all, test_criterion, VerdictKind};
use randcert::confidence::{cantelli_two_sided, chernoff_error_bar, error_bar, Method};
use randcert::estimation::{
    e_hat_t_exact, moment_estimate, p_hat_k_exact, variance_coefficients_exact,
    variance_upper_bound, Hypothesis, SettingStats,
};
use randcert::moments::{bell_product_r4, ghz_moment_closed, moment_design, noisy_ghz_r2};
use randcert::planner::{
    certification_budget, min_total_budget, required_m, required_m_continuous,
};
use randcert::sampling::{run_experiment, RecordMode};
use randcert::states::{fidelity_to_p, make_noisy_ghz, Block, BlockProduct, Densify, StateModel};
use randcert::ExactRational;

static FAILED: AtomicUsize = AtomicUsize::new(0);

fn report(criterion: u32, pass: bool, detail: &str) {
    if !pass {
        FAILED.fetch_add(1, Ordering::SeqCst);
    }
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    )
    .unwrap();
    out.flush().unwrap();
}

fn main() -> ExitCode {
    let criteria: [fn(); 10] = [
        criterion_01_mproducibility_tables,
        criterion_02_closed_form_vs_design,
        criterion_03_saturation_fixtures,
        criterion_04_estimator_identities,
        criterion_05_budget_reproduction,
        criterion_06_chernoff_cantelli_ratio,
        criterion_07_scaling_law,
        criterion_08_coverage,
        criterion_09_end_to_end,
        criterion_10_reproducibility,
    ];
    for (i, f) in criteria.iter().enumerate() {
        if catch_unwind(AssertUnwindSafe(f)).is_err() {
            report(i as u32 + 1, false, "panicked");
        }
    }
    let failed = FAILED.load(Ordering::SeqCst);
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn q(n: i64, d: i64) -> ExactRational {
    ExactRational::new(n, d)
}

fn dense(s: impl Into<StateModel>) -> StateModel {
    StateModel::Dense(s.into().densify().unwrap())
}

// reference m-producibility tables, rows m = 2..=10
const TABLE_11: [(i64, i64); 9] = [
    (1, 729),
    (4, 2187),
    (4, 2187),
    (16, 6561),
    (176, 59049),
    (64, 19683),
    (64, 19683),
    (256, 59049),
    (256, 59049),
];
const TABLE_20: [(i64, i64); 9] = [
    (1, 59049),
    (1, 59049),
    (1, 59049),
    (65536, 3486784401),
    (65536, 3486784401),
    (45056, 1162261467),
    (1849, 43046721),
    (65536, 1162261467),
    (361, 4782969),
];

fn criterion_01_mproducibility_tables() {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut structural = Vec::new();
    for (n, table) in [(11usize, &TABLE_11), (20, &TABLE_20)] {
        for (i, &(num, den)) in table.iter().enumerate() {
            let m = i + 2;
            let (value, a) = mprod_bound_r2(n, m).unwrap();
            let weight: usize = a.iter().enumerate().map(|(j, k)| (j + 1) * k).sum();
            if weight != n || a.len() != m || evaluate_assignment(&a, 2).unwrap() != value {
                structural.push(format!("N={n} m={m}"));
            }
            if value != q(num, den) {
                mismatches.push(format!(
                    "N={n} m={m}: computed {value}, expected {num}/{den}"
                ));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut detail = format!(
        "18 rows, {} exact matches, {} assignment failures, {elapsed:.3}s",
        18 - mismatches.len(),
        structural.len()
    );
    if !mismatches.is_empty() {
        // the reference N=20, m=6 assignment (k2=1, k6=3) is itself admissible
        let reference = evaluate_assignment(&[0, 1, 0, 0, 0, 3], 2).unwrap();
        detail += &format!(
            "; mismatches: [{}]; the reference N=20 m=6 assignment (k2=1,k6=3) evaluates to {reference} > 65536/3486784401, \
             so the tabulated fraction is not the maximum",
            mismatches.join("; ")
        );
    }
    report(
        1,
        mismatches.is_empty() && structural.is_empty() && elapsed < 1.0,
        &detail,
    );
}

fn criterion_02_closed_form_vs_design() {
    let start = Instant::now();
    let mut worst = 0f64;
    for (t, hi) in [(2u32, 8usize), (4, 7)] {
        for n in 2..=hi {
            let s = dense(make_noisy_ghz(n, 0.0).unwrap());
            let d = moment_design(&s, t).unwrap();
            worst = worst.max((d - ghz_moment_closed(n, t).unwrap().to_f64()).abs());
        }
    }
    for n in [2usize, 4, 6] {
        let s = dense(BlockProduct::new(vec![Block::bell(); n / 2]).unwrap());
        let want = ExactRational::inv_pow(5, (n / 2) as u32);
        assert_eq!(bell_product_r4(n).unwrap(), want);
        worst = worst.max((moment_design(&s, 4).unwrap() - want.to_f64()).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        worst <= 1e-12 && elapsed < 60.0,
        &format!("max |closed - design| = {worst:.2e} (tol 1e-12), {elapsed:.2}s"),
    );
}

fn criterion_03_saturation_fixtures() {
    let mut worst = 0f64;
    let mut cases = 0;
    for n in 4..=10usize {
        for k in 2..=n / 2 {
            let s = dense(BlockProduct::ksep_saturating(n, k).unwrap());
            let d = moment_design(&s, 2).unwrap();
            worst = worst.max((d - ksep_bound_r2(n, k).unwrap().to_f64()).abs());
            cases += 1;
        }
    }
    report(
        3,
        worst <= 1e-12,
        &format!("{cases} (N, k) fixtures, max deviation {worst:.2e} (tol 1e-12)"),
    );
}

type Poly = Vec<ExactRational>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![ExactRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].clone() + x.clone() * y.clone();
        }
    }
    out
}

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![ExactRational::zero(); a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] = out[i].clone() + x.clone();
    }
    for (i, x) in b.iter().enumerate() {
        out[i] = out[i].clone() + x.clone();
    }
    out
}

fn poly_scale(a: &Poly, c: &ExactRational) -> Poly {
    a.iter().map(|x| x.clone() * c.clone()).collect()
}

fn poly_pow(a: &Poly, e: u64) -> Poly {
    (0..e).fold(vec![ExactRational::one()], |acc, _| poly_mul(&acc, a))
}

fn trim(mut a: Poly) -> Poly {
    while a.len() > 1 && a.last().is_some_and(ExactRational::is_zero) {
        a.pop();
    }
    a
}

fn binom(n: u64, k: u64) -> ExactRational {
    (0..k).fold(ExactRational::one(), |acc, i| {
        acc * q((n - i) as i64, (i + 1) as i64)
    })
}

/// `E_binomial[f(Y)]` as a polynomial in `P`.
fn binomial_expectation(k: u64, f: impl Fn(u64) -> ExactRational) -> Poly {
    let p: Poly = vec![ExactRational::zero(), ExactRational::one()];
    let one_minus_p: Poly = vec![ExactRational::one(), q(-1, 1)];
    let mut acc = vec![ExactRational::zero()];
    for y in 0..=k {
        let w = poly_mul(&poly_pow(&p, y), &poly_pow(&one_minus_p, k - y));
        acc = poly_add(&acc, &poly_scale(&w, &(binom(k, y) * f(y))));
    }
    trim(acc)
}

fn criterion_04_estimator_identities() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for k_shots in 1..=6u64 {
        for power in 1..=k_shots {
            let lhs = binomial_expectation(k_shots, |y| {
                p_hat_k_exact(&SettingStats::new(k_shots, y).unwrap(), power).unwrap()
            });
            let mut want = vec![ExactRational::zero(); power as usize + 1];
            want[power as usize] = ExactRational::one();
            if lhs != want {
                failures.push(format!("E[P_{power}] at K={k_shots}"));
            }
        }
    }
    let e_poly: Poly = vec![q(-1, 1), q(2, 1)];
    for k_shots in 2..=10u64 {
        let lhs = binomial_expectation(k_shots, |y| {
            e_hat_t_exact(&SettingStats::new(k_shots, y).unwrap(), 2)
                .unwrap()
                .pow(2)
        });
        let (a, b, c) = variance_coefficients_exact(k_shots).unwrap();
        let rhs = trim(poly_add(
            &poly_add(
                &poly_scale(&poly_pow(&e_poly, 4), &a),
                &poly_scale(&poly_pow(&e_poly, 2), &b),
            ),
            &vec![c],
        ));
        if lhs != rhs {
            failures.push(format!("variance identity at K={k_shots}"));
        }
    }
    let k3 = variance_coefficients_exact(3).unwrap();
    let k3_ok = k3 == (ExactRational::zero(), q(2, 3), q(1, 3));
    let elapsed = start.elapsed().as_secs_f64();
    report(
        4,
        failures.is_empty() && k3_ok && elapsed < 10.0,
        &format!(
            "unbiasedness K<=6 and variance identity K=2..10 exact ({} failures), K=3 coefficients ({}, {}, {}), {elapsed:.2}s",
            failures.len(),
            k3.0,
            k3.1,
            k3.2
        ),
    );
}

fn criterion_05_budget_reproduction() {
    // (N, F, criterion, reference M, reference K); noise taken as p = 1 - F
    let cases = [
        (11usize, 0.76, CriterionKind::KSep(4), 3685u64, 125u64),
        (11, 0.76, CriterionKind::KSep(3), 571082, 105),
        (20, 0.44, CriterionKind::KSep(9), 11062, 4875),
        (20, 0.44, CriterionKind::MProducible(5), 18752, 4420),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, f, c, m_p, k_p) in cases {
        let plan = certification_budget(
            n,
            c,
            noisy_ghz_r2(n, 1.0 - f).unwrap(),
            0.9,
            Method::CantelliOneSided,
            20_000,
        )
        .unwrap();
        let tot_p = (m_p * k_p) as f64;
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        let ok = rel(plan.m_tot as f64, tot_p) <= 0.02
            && rel(plan.m as f64, m_p as f64) <= 0.05
            && rel(plan.k as f64, k_p as f64) <= 0.05;
        pass &= ok;
        parts.push(format!(
            "N={n} {c}: {}x{}={} vs {m_p}x{k_p}={tot_p} ({:+.2}%)",
            plan.m,
            plan.k,
            plan.m_tot,
            100.0 * (plan.m_tot as f64 / tot_p - 1.0)
        ));
    }
    report(5, pass, &parts.join("; "));
}

fn criterion_06_chernoff_cantelli_ratio() {
    let v = variance_upper_bound(10, 10, Hypothesis::Global)
        .unwrap()
        .value;
    let m = 1_000_000_000usize;
    let mut pass = true;
    let mut parts = Vec::new();
    for (g, want) in [(0.95, 2.29), (0.99, 4.33)] {
        let cantelli = cantelli_two_sided(v / m as f64, g).unwrap();
        let chernoff = chernoff_error_bar(m, 10, g, v).unwrap();
        let ratio = cantelli / chernoff.delta;
        pass &= (ratio - want).abs() <= 0.01 && chernoff.valid;
        parts.push(format!("gamma={g}: {ratio:.4} (want {want} +- 0.01)"));
    }
    report(
        6,
        pass,
        &format!("Cantelli/Chernoff half-width ratio {}", parts.join(", ")),
    );
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_07_scaling_law() {
    let start = Instant::now();
    let ns: Vec<usize> = (10..=40).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let tot: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let p = min_total_budget(n, 0.9, 0.1, Method::CantelliTwoSided, 1_000_000).unwrap();
            (p.m_tot as f64).ln()
        })
        .collect();
    let s_opt = slope(&xs, &tot);
    let small_k: Vec<f64> = ns
        .iter()
        .map(|&n| (required_m(n, 2, 0.9, 0.1, Method::CantelliTwoSided).unwrap() as f64).ln())
        .collect();
    let s_small = slope(&xs, &small_k);
    // large-K regime holds while K exceeds ~(15/8)^N; N <= 30 at K = 1e12
    let ns_large: Vec<f64> = (10..=30).map(|n| n as f64).collect();
    let large_k: Vec<f64> = (10..=30)
        .map(|n| {
            required_m_continuous(n, 1_000_000_000_000, 0.9, 0.1)
                .unwrap()
                .ln()
        })
        .collect();
    let s_large = slope(&ns_large, &large_k);
    let elapsed = start.elapsed().as_secs_f64();
    let tol = 0.05;
    let ok_opt = (s_opt - 1.5f64.ln()).abs() <= tol;
    let ok_large = (s_large - 1.2f64.ln()).abs() <= tol;
    let ok_small = (s_small - 2.25f64.ln()).abs() <= tol;
    let mut detail = format!(
        "slope ln M_tot_opt = {s_opt:.4} vs ln 1.5 = {:.4} [{}]; large-K slope {s_large:.4} vs ln 1.2 = {:.4} [{}]; \
         K=2 slope {s_small:.4} vs ln 2.25 = {:.4} [{}]; {elapsed:.1}s",
        1.5f64.ln(),
        if ok_opt { "ok" } else { "out" },
        1.2f64.ln(),
        if ok_large { "ok" } else { "out" },
        2.25f64.ln(),
        if ok_small { "ok" } else { "out" },
    );
    if !ok_opt {
        detail += "; at K_opt ~ R4^(-1/2) the budget is dominated by K R4 / R2^2, which grows by \
                   sqrt(8/15)*9/4 = 1.643 per qubit (ln 0.497), so 1.5^N is not the fitted law";
    }
    report(7, ok_opt && ok_large && ok_small && elapsed < 60.0, &detail);
}

fn criterion_08_coverage() {
    const REPS: u64 = 500;
    let (m, k, gamma) = (200usize, 10u64, 0.9);
    let floor_cov = gamma - 3.0 * (0.09f64 / REPS as f64).sqrt();
    let ceil_false = 0.1 + 3.0 * (0.09f64 / REPS as f64).sqrt();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [3usize, 5] {
        let state: StateModel = make_noisy_ghz(n, 0.0).unwrap().into();
        let truth = ghz_moment_closed(n, 2).unwrap().to_f64();
        let estimates: Vec<f64> = (0..REPS)
            .map(|seed| {
                let stats: Vec<SettingStats> =
                    run_experiment(&state, m, k, 1000 + seed, RecordMode::Compact)
                        .unwrap()
                        .iter()
                        .map(|r| r.stats().unwrap())
                        .collect();
                moment_estimate(&stats, 2).unwrap().value
            })
            .collect();
        let vb = variance_upper_bound(n, k, Hypothesis::Global)
            .unwrap()
            .value;
        for method in Method::ALL {
            let delta = error_bar(method, m, k, gamma, vb).unwrap().delta;
            let cov = estimates
                .iter()
                .filter(|e| (*e - truth).abs() <= delta)
                .count() as f64
                / REPS as f64;
            pass &= cov >= floor_cov;
            parts.push(format!("GHZ_{n} {method} {cov:.3}"));
        }
    }
    for n in [3usize, 5] {
        let state: StateModel = BlockProduct::new(vec![Block::single(); n]).unwrap().into();
        let estimates: Vec<_> = (0..REPS)
            .map(|seed| {
                let stats: Vec<SettingStats> =
                    run_experiment(&state, m, k, 5000 + seed, RecordMode::Compact)
                        .unwrap()
                        .iter()
                        .map(|r| r.stats().unwrap())
                        .collect();
                moment_estimate(&stats, 2).unwrap()
            })
            .collect();
        for method in Method::ALL {
            let hits = estimates
                .iter()
                .filter(|e| {
                    test_criterion(e, n, CriterionKind::FullSep, gamma, method)
                        .unwrap()
                        .verdict
                        == VerdictKind::Violated
                })
                .count();
            let rate = hits as f64 / REPS as f64;
            pass &= rate <= ceil_false;
            parts.push(format!(
                "product_{n} FullSep {method} false-violation {rate:.3}"
            ));
        }
    }
    report(
        8,
        pass,
        &format!(
            "M={m} K={k}, {REPS} experiments each; coverage floor {floor_cov:.4}, false-violation ceiling {ceil_false:.4}; {}",
            parts.join(", ")
        ),
    );
}

fn criterion_09_end_to_end() {
    const REPS: u64 = 100;
    let n = 11;
    let p = fidelity_to_p(n, 0.76).unwrap();
    let plan = certification_budget(
        n,
        CriterionKind::MProducible(4),
        noisy_ghz_r2(n, p).unwrap(),
        0.9,
        Method::CantelliOneSided,
        20_000,
    )
    .unwrap();
    let state: StateModel = make_noisy_ghz(n, p).unwrap().into();
    let mut hits = 0;
    let mut mean_conf = 0.0;
    for seed in 0..REPS {
        let stats: Vec<SettingStats> = run_experiment(
            &state,
            plan.m as usize,
            plan.k,
            9000 + seed,
            RecordMode::Compact,
        )
        .unwrap()
        .iter()
        .map(|r| r.stats().unwrap())
        .collect();
        let rep = certify_all(&stats, n, 0.9, Method::CantelliOneSided).unwrap();
        let v = rep
            .verdicts
            .iter()
            .find(|v| v.criterion == CriterionKind::MProducible(4))
            .unwrap();
        mean_conf += v.confidence / REPS as f64;
        if rep.summary_depth.is_some_and(|d| d >= 5) {
            hits += 1;
        }
    }
    let rate = hits as f64 / REPS as f64;
    let mut detail = format!(
        "NoisyGhz(11, F=0.76) at planned {}x{}: depth >= 5 certified in {hits}/{REPS} (need >= 85%), mean confidence {mean_conf:.3}",
        plan.m, plan.k
    );
    if rate < 0.85 {
        detail += "; the plan sets delta to the full expected violation, so confidence reaches gamma only when the \
                   estimate lands at or above its mean (about half the time)";
    }
    report(9, rate >= 0.85, &detail);
}

/// Runs the command-line front end in-process on a dedicated rayon pool.
fn cli(threads: usize, args: &[&str]) -> (i32, Vec<u8>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let mut argv = vec!["randcert"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = pool.install(|| randcert::cli::run(argv, &mut out, &mut err));
    (code, out)
}

fn criterion_10_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let sim = |seed: &str, threads| {
        cli(
            threads,
            &[
                "--reproducible",
                "simulate",
                "--n",
                "7",
                "--p",
                "0.1",
                "--m",
                "60",
                "--k",
                "25",
                "--seed",
                seed,
            ],
        )
    };
    let runs = [sim("42", 1), sim("42", 1), sim("42", 2), sim("42", 4)];
    let records_equal = runs[0].0 == 0 && runs.iter().all(|r| *r == runs[0]);
    let differs = sim("43", 1).1 != runs[0].1;
    let file = dir.path().join("r.jsonl");
    std::fs::write(&file, &runs[0].1).unwrap();
    let f = file.to_str().unwrap();
    let cert = |threads| cli(threads, &["--reproducible", "certify", "--input", f]);
    let est = |threads| {
        cli(
            threads,
            &[
                "--reproducible",
                "estimate",
                "--input",
                f,
                "--subset",
                "0,1,2",
            ],
        )
    };
    let (c1, c2, c3) = (cert(1), cert(1), cert(3));
    let (e1, e2) = (est(1), est(2));
    let docs_equal = c1.0 == 0 && c1 == c2 && c1 == c3 && e1.0 == 0 && e1 == e2;
    report(
        10,
        records_equal && docs_equal && differs,
        &format!(
            "record files identical across runs and 1/2/4 worker threads: {records_equal}; certify/estimate documents \
             identical: {docs_equal}; different seed changes records: {differs}"
        ),
    );
}
