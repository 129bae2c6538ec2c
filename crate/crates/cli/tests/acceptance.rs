//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed; exits non-zero on any failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use sdncmv_cli::formats;
use sdncmv_cli::pipeline::{mean_se, ReplicationResult};
use sdncmv_core::netstrength::{
    clime_column, fisher_transform, sample_cov, symmetrize_min_magnitude, tune_lambda_dens, ClimeColumnSolver,
    ClimeSettings,
};
use sdncmv_core::plr::{
    fit_plr, fit_plr_traced, kkt_violation, sigmoid, smooth_gradient, smooth_loss, PlrData, PlrFitSettings, PlrModel,
};
use sdncmv_core::seed::{rng_from, Rng};
use sdncmv_core::synthgen::{gen_temporal_cov, MatrixNormal, TemporalKind};
use sdncmv_core::types::ZERO_THRESHOLD;
use sdncmv_core::{edge_index, EdgeIndexMap};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sdncmv"));
    c.env_remove("SDNCMV_JOBS");
    c
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn wishart(rng: &mut Rng, p: usize, q: usize) -> DMatrix<f64> {
    let x = DMatrix::<f64>::from_fn(p, q, |_, _| StandardNormal.sample(rng));
    &x * x.transpose() / q as f64
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Desk-scale scenario 1 replications through the CLI.
fn desk_runs() -> Result<Vec<ReplicationResult>, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("desk");
    run(&[
        "replicate", "--table", "table2", "--scenario", "1", "--replications", "20", "--p", "50", "--q", "50",
        "--n1", "20", "--n2", "20", "--n1-test", "20", "--n2-test", "20", "--B", "100", "--seed", "2024", "--out",
        s(&out),
    ])?;
    (1..=20)
        .map(|r| formats::read_json_file(&out.join("replications").join(format!("rep_{r:04}.json"))).map_err(|e| e.to_string()))
        .collect()
}

fn criterion_1(runs: &[ReplicationResult]) -> Check {
    let err: Vec<f64> = runs.iter().map(|r| r.misclassification).collect();
    let (m, se) = mean_se(&err);
    ensure(m <= 0.05, || format!("mean misclassification {:.1}% ({:.1}) > 5%", 100.0 * m, 100.0 * se))?;
    Ok(format!("mean misclassification {:.1}% (se {:.1}) over {} replications", 100.0 * m, 100.0 * se, runs.len()))
}

fn criterion_2(runs: &[ReplicationResult]) -> Check {
    let tnr = mean_se(&runs.iter().map(|r| r.support.tnr).collect::<Vec<_>>()).0;
    let tdr = mean_se(&runs.iter().map(|r| r.support.tdr).collect::<Vec<_>>()).0;
    let base = mean_se(&runs.iter().map(|r| r.baseline_support.tdr).collect::<Vec<_>>()).0;
    let wins = runs.iter().filter(|r| r.support.tdr > r.baseline_support.tdr).count();
    let ties = runs.iter().filter(|r| r.support.tdr == r.baseline_support.tdr).count();
    let detail = format!(
        "mean TNR {tnr:.4}, mean TDR {tdr:.3} (single fit {base:.3}), strict TDR wins {wins}/{} ({ties} ties)",
        runs.len()
    );
    ensure(tnr >= 0.95 && tdr >= 0.75 && wins * 5 >= runs.len() * 4, || detail.clone())?;
    Ok(detail)
}

/// Generic LP on the split primal: β = u − v with u, v ≥ 0.
fn lp_oracle(sigma: &DMatrix<f64>, column: usize, lambda: f64) -> Option<f64> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
    let p = sigma.nrows();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let u: Vec<_> = (0..p).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let v: Vec<_> = (0..p).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for r in 0..p {
        let e = if r == column { 1.0 } else { 0.0 };
        let terms: Vec<_> = (0..p).flat_map(|j| [(u[j], sigma[(r, j)]), (v[j], -sigma[(r, j)])]).collect();
        lp.add_constraint(terms.clone(), ComparisonOp::Le, e + lambda);
        lp.add_constraint(terms, ComparisonOp::Ge, e - lambda);
    }
    match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => Some(sol.objective()),
        _ => None,
    }
}

fn criterion_3() -> Check {
    let mut rng = rng_from(3, &[0]);
    let mut worst_rel = 0.0f64;
    let mut solved = 0;
    for trial in 0..50 {
        let sigma = wishart(&mut rng, 5, 12);
        for &lambda in &[0.0, 0.05, 0.2] {
            for i in 0..5 {
                let beta = clime_column(&sigma, i, lambda, 1e-7).map_err(|e| format!("trial {trial}: {e}"))?;
                let res = ClimeColumnSolver::new(&sigma, i).residual(&beta);
                ensure(res <= lambda + 1e-7, || format!("trial {trial} col {i} λ {lambda}: residual {res}"))?;
                let oracle = lp_oracle(&sigma, i, lambda).ok_or(format!("oracle failed on trial {trial}"))?;
                let rel = (l1(&beta) - oracle).abs() / oracle.max(1e-12);
                worst_rel = worst_rel.max(rel);
                ensure(rel <= 1e-6, || format!("trial {trial} col {i} λ {lambda}: {} vs {oracle}", l1(&beta)))?;
                solved += 1;
            }
        }
    }
    Ok(format!("{solved} column LPs match the oracle, worst relative gap {worst_rel:.1e}"))
}

fn criterion_4() -> Check {
    let mut rng = rng_from(4, &[0]);
    let settings = ClimeSettings::default();
    let mut attainable = 0;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let sigma = wishart(&mut rng, 30, 60);
        let t = tune_lambda_dens(&sigma, &settings).map_err(|e| format!("covariance {k}: {e}"))?;
        if t.attainable {
            let gap = (t.estimate.density() - 0.5).abs();
            worst = worst.max(gap);
            ensure(gap <= 0.05, || format!("covariance {k}: density {}", t.estimate.density()))?;
            attainable += 1;
        }
    }
    Ok(format!("{attainable}/20 attainable, max |density − 0.5| = {worst:.3}"))
}

fn plr_problem(seed: u64, n: usize, d: usize, m: usize, signal: f64) -> PlrData {
    let mut rng = rng_from(seed, &[5]);
    let w = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let q = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let mut z: Vec<f64> = (0..n)
        .map(|k| {
            let s = signal * (w[(k, 0)] - 0.5 * w[(k, d - 1)]) + 0.2;
            f64::from(u8::from(rng.random::<f64>() < sigmoid(s)))
        })
        .collect();
    z[0] = 1.0;
    z[1] = 0.0;
    PlrData::new(q, w, z).unwrap()
}

/// Damped Newton on the unpenalized log-likelihood with intercept.
fn newton_mle(data: &PlrData) -> Option<Vec<f64>> {
    let n = data.n();
    let x = DMatrix::from_fn(n, 1 + data.n_features(), |k, c| if c == 0 { 1.0 } else { data.features()[(k, c - 1)] });
    let z = DVector::from_column_slice(data.labels());
    let nll = |b: &DVector<f64>| {
        (&x * b)
            .iter()
            .zip(z.iter())
            .map(|(&s, &z)| s.max(0.0) + (-s.abs()).exp().ln_1p() - z * s)
            .sum::<f64>()
    };
    let mut b = DVector::zeros(x.ncols());
    for _ in 0..200 {
        let p = (&x * &b).map(sigmoid);
        let g = x.tr_mul(&(&p - &z));
        if g.amax() < 1e-12 {
            return Some(b.iter().copied().collect());
        }
        let wx = DMatrix::from_fn(n, x.ncols(), |k, c| x[(k, c)] * p[k] * (1.0 - p[k]));
        let step = x.tr_mul(&wx).cholesky()?.solve(&g);
        let f0 = nll(&b);
        let mut t = 1.0;
        while nll(&(&b - t * &step)) > f0 && t > 1e-12 {
            t *= 0.5;
        }
        b -= t * step;
    }
    None
}

fn criterion_5() -> Check {
    let defaults = PlrFitSettings::default();
    // (a) monotone objective and (c) KKT at convergence
    let mut worst_kkt = 0.0f64;
    for seed in 0..100 {
        let data = plr_problem(seed, 40, 30, (seed % 3) as usize, 1.5);
        let mut rng = rng_from(seed, &[6]);
        let alpha = rng.random_range(0.0..=1.0);
        let lambda = 10f64.powf(rng.random_range(-3.0..-0.5));
        let (m, trace) = fit_plr_traced(&data, lambda, alpha, &defaults).map_err(|e| format!("problem {seed}: {e}"))?;
        for w in trace.objectives.windows(2) {
            ensure(w[1] <= w[0] + 1e-12, || format!("problem {seed}: objective rose {} -> {}", w[0], w[1]))?;
        }
        let v = kkt_violation(&m, &data).map_err(|e| e.to_string())?;
        worst_kkt = worst_kkt.max(v);
        ensure(v <= 1e-4, || format!("problem {seed}: KKT violation {v}"))?;
    }
    // (b) λ = 0 against Newton
    let tight = PlrFitSettings {
        tolerance: 1e-10,
        ..defaults.clone()
    };
    let mut compared = 0;
    let mut worst_coef = 0.0f64;
    for seed in 0..40 {
        let data = plr_problem(1000 + seed, 20, 3, 0, 0.8);
        let Some(oracle) = newton_mle(&data) else { continue };
        if oracle.iter().any(|v| v.abs() > 20.0) {
            continue;
        }
        let m = fit_plr(&data, 0.0, 0.5, &tight).map_err(|e| e.to_string())?;
        let got: Vec<f64> = std::iter::once(m.intercept).chain(m.beta.iter().copied()).collect();
        for (g, o) in got.iter().zip(&oracle) {
            worst_coef = worst_coef.max((g - o).abs());
        }
        compared += 1;
    }
    ensure(compared >= 20 && worst_coef <= 1e-4, || {
        format!("{compared} MLE comparisons, worst coefficient gap {worst_coef:.1e}")
    })?;
    // (d) gradient against central differences
    let mut worst_fd = 0.0f64;
    for seed in 0..20 {
        let data = plr_problem(2000 + seed, 30, 6, 2, 1.0);
        let mut rng = rng_from(seed, &[7]);
        let mut m = PlrModel::zero(&data, 0.0, 1.0, true);
        m.intercept = rng.random_range(-1.0..1.0);
        m.eta = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        m.beta = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g0, geta, gbeta) = smooth_gradient(&m, &data).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = std::iter::once(g0).chain(geta).chain(gbeta).collect();
        let h = 1e-5;
        for (c, &a) in analytic.iter().enumerate() {
            let bump = |m: &mut PlrModel, by: f64| match c {
                0 => m.intercept += by,
                1 | 2 => m.eta[c - 1] += by,
                _ => m.beta[c - 3] += by,
            };
            let (mut plus, mut minus) = (m.clone(), m.clone());
            bump(&mut plus, h);
            bump(&mut minus, -h);
            let fd = (smooth_loss(&plus, &data).unwrap() - smooth_loss(&minus, &data).unwrap()) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            worst_fd = worst_fd.max(rel);
        }
    }
    ensure(worst_fd <= 1e-4, || format!("finite-difference relative gap {worst_fd:.1e}"))?;
    Ok(format!(
        "100 fits monotone, max KKT {worst_kkt:.1e}; {compared} MLEs within {worst_coef:.1e}; gradient within {worst_fd:.1e}"
    ))
}

fn criterion_6() -> Check {
    ensure(fisher_transform(0.0) == 0.0, || "Fisher(0) != 0".into())?;
    let f = fisher_transform(0.5);
    ensure((f - 0.5 * 3f64.ln()).abs() < 1e-15, || format!("Fisher(0.5) = {f}"))?;

    let mut rng = rng_from(6, &[0]);
    for _ in 0..200 {
        let p = 2 + rng.random_range(0..6);
        let raw = DMatrix::from_fn(p, p, |_, _| {
            // adversarial: near-ties, opposite signs and exact zeros
            match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1e-12 * rng.random_range(-1.0..1.0),
                _ => rng.random_range(-2.0..2.0),
            }
        });
        // exact magnitude ties with opposite signs
        let mut raw = raw;
        raw[(p - 1, 0)] = -raw[(0, p - 1)];
        let sym = symmetrize_min_magnitude(&raw);
        for j in 0..p {
            ensure(sym[(j, j)] == raw[(j, j)], || format!("diagonal {j} changed"))?;
            for i in 0..j {
                let (upper, lower) = (raw[(i, j)], raw[(j, i)]);
                let pick = if upper.abs() <= lower.abs() { upper } else { lower };
                let expect = if pick.abs() <= ZERO_THRESHOLD { 0.0 } else { pick };
                ensure(sym[(i, j)] == expect && sym[(j, i)] == expect, || {
                    format!("({i},{j}): {} from {upper}, {lower}", sym[(i, j)])
                })?;
            }
        }
    }

    let order = [(1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4)];
    for (k, &(i, j)) in order.iter().enumerate() {
        let got = edge_index(i, j, 4).map_err(|e| e.to_string())?;
        ensure(got == k, || format!("edge_index({i},{j},4) = {got}, expected {k}"))?;
        ensure(EdgeIndexMap::new(4).pair(k).unwrap() == (i - 1, j - 1), || format!("pair({k})"))?;
    }

    let one = sample_cov(&DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0])).map_err(|e| e.to_string())?;
    ensure((one[(0, 0)] - 1.0).abs() < 1e-15, || format!("1×3 variance {}", one[(0, 0)]))?;
    let two = sample_cov(&DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 0.0])).map_err(|e| e.to_string())?;
    let expect = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 4.0]);
    ensure((two - &expect).amax() < 1e-15, || "2×3 covariance mismatch".into())?;
    Ok("Fisher values, 200 adversarial symmetrizations, p=4 enumeration and hand covariances exact".into())
}

fn criterion_7() -> Check {
    let temporal = gen_temporal_cov(TemporalKind::Ar(0.4), 2).map_err(|e| e.to_string())?;
    let spatial = DMatrix::from_row_slice(2, 2, &[1.5, 0.6, 0.6, 1.0]);
    let sampler = MatrixNormal::new(&temporal, &spatial).map_err(|e| e.to_string())?;
    let mut rng = rng_from(7, &[0]);
    let draws = 100_000;
    let mut acc = DMatrix::<f64>::zeros(4, 4);
    for _ in 0..draws {
        // column-major storage is vec()
        let v = DVector::from_column_slice(sampler.sample(&mut rng).as_slice());
        acc += &v * v.transpose();
    }
    let empirical = acc / draws as f64;
    let expected = temporal.kronecker(&spatial);
    let gap = (empirical - expected).amax();
    ensure(gap <= 0.05, || format!("max entry gap {gap:.4}"))?;
    Ok(format!("{draws} draws, max entry gap {gap:.4}"))
}

fn criterion_8() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dirs = Vec::new();
    for jobs in ["1", "2"] {
        let out = tmp.path().join(format!("jobs{jobs}"));
        run(&[
            "--jobs", jobs, "replicate", "--table", "table2", "--replications", "3", "--p", "10", "--q", "24",
            "--n1", "8", "--n2", "8", "--n1-test", "4", "--n2-test", "4", "--B", "10", "--path-length", "15",
            "--seed", "8", "--out", s(&out),
        ])?;
        dirs.push(out);
    }
    let mut compared = 0;
    for name in ["report.tsv", "report.txt", "summary.json", "seeds.tsv", "config.json"] {
        let a = std::fs::read(dirs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name} differs between --jobs 1 and 2"))?;
        compared += 1;
    }
    for r in 1..=3 {
        let name = format!("replications/rep_{r:04}.json");
        ensure(std::fs::read(dirs[0].join(&name)).ok() == std::fs::read(dirs[1].join(&name)).ok(), || {
            format!("{name} differs")
        })?;
        compared += 1;
    }
    Ok(format!("{compared} report files byte-identical across --jobs 1 and 2"))
}

fn main() {
    // `cargo test -- <filter>` and `--list` are ignored: the suite always runs whole.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let desk = if std::env::var_os("SDNCMV_ACCEPT_SKIP_DESK").is_some() { Err("skipped".to_string()) } else { desk_runs() };
    let checks: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("1 desk-scale misclassification", Box::new(|| criterion_1(desk.as_ref().map_err(Clone::clone)?))),
        ("2 desk-scale support recovery", Box::new(|| criterion_2(desk.as_ref().map_err(Clone::clone)?))),
        ("3 CLIME vs LP oracle", Box::new(criterion_3)),
        ("4 density tuning", Box::new(criterion_4)),
        ("5 PLR solver", Box::new(criterion_5)),
        ("6 exact formulas", Box::new(criterion_6)),
        ("7 Kronecker sampling", Box::new(criterion_7)),
        ("8 replicate determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {failed} failed, {:.0}s", started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
