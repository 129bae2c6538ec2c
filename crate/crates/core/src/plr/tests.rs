use super::*;
use crate::seed::rng_from;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn random_problem(seed: u64, n: usize, d: usize, m: usize, signal: f64) -> PlrData {
    let mut rng = rng_from(seed, &[99]);
    let w = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let q = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let mut z: Vec<f64> = (0..n)
        .map(|k| {
            let s = signal * (w[(k, 0)] - 0.5 * w[(k, d.min(2) - 1)]) + 0.3;
            if rng.random::<f64>() < sigmoid(s) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    z[0] = 1.0;
    z[1] = 0.0;
    PlrData::new(q, w, z).unwrap()
}

fn tight() -> PlrFitSettings {
    PlrFitSettings {
        tolerance: 1e-10,
        ..PlrFitSettings::default()
    }
}

#[test]
fn objective_hand_values() {
    let data = PlrData::new(DMatrix::zeros(4, 0), DMatrix::from_element(4, 2, 0.7), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let mut m = PlrModel::zero(&data, 0.0, 0.5, true);
    assert!((plr_objective(&m, &data).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    m.beta = vec![1.0, -1.0];
    m.lambda = 1.0;
    // the two features cancel, so the smooth part is still log 2
    assert!((plr_objective(&m, &data).unwrap() - (std::f64::consts::LN_2 + 2.0)).abs() < 1e-12);
    let wrong = PlrData::new(DMatrix::zeros(4, 0), DMatrix::zeros(4, 3), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(plr_objective(&m, &wrong), Err(Error::Dimension(_))));
}

#[test]
fn prediction_values() {
    let data = PlrData::new(DMatrix::zeros(2, 1), DMatrix::zeros(2, 2), vec![1.0, 0.0]).unwrap();
    let mut m = PlrModel::zero(&data, 0.0, 1.0, true);
    assert_eq!(m.predict_proba(&[3.0], &[1.0, 2.0]).unwrap(), 0.5);
    m.intercept = 3f64.ln();
    assert!((m.predict_proba(&[3.0], &[1.0, 2.0]).unwrap() - 0.75).abs() < 1e-15);
    assert!(m.predict_proba(&[3.0], &[1.0]).is_err());
    m.feature_index = vec![4, 1];
    m.beta = vec![0.5, -0.25];
    let full = [9.0, 2.0, 9.0, 9.0, 1.0];
    let direct = m.predict_proba(&[0.0], &[1.0, 2.0]).unwrap();
    assert_eq!(m.predict_proba_full(&[0.0], &full).unwrap(), direct);
    // a zero-coefficient extra feature changes nothing
    let mut ext = m.clone();
    ext.beta.push(0.0);
    ext.feature_index.push(3);
    assert_eq!(ext.predict_proba_full(&[0.0], &full).unwrap(), direct);
}

#[test]
fn threshold_matches_grid_search() {
    let mut rng = rng_from(3, &[1]);
    for _ in 0..200 {
        let a = rng.random_range(0.05..3.0);
        let b = rng.random_range(-3.0..3.0);
        let lam = rng.random_range(0.0..2.0);
        let alpha = rng.random_range(0.0..=1.0);
        let f = |x: f64| 0.5 * a * (x - b) * (x - b) + lam * alpha * x.abs() + lam * (1.0 - alpha) * x * x;
        let closed = elastic_net_threshold(a, b, lam, alpha);
        let mut best = (f64::INFINITY, 0.0);
        let steps = 60_000;
        for i in 0..=steps {
            let x = -4.0 + 8.0 * i as f64 / steps as f64;
            let v = f(x);
            if v < best.0 {
                best = (v, x);
            }
        }
        assert!((closed - best.1).abs() < 2e-4, "a={a} b={b} lam={lam} alpha={alpha}: {closed} vs {}", best.1);
        assert!(f(closed) <= best.0 + 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..10 {
        let data = random_problem(seed, 30, 6, 2, 1.0);
        let mut rng = rng_from(seed, &[2]);
        let mut m = PlrModel::zero(&data, 0.0, 1.0, true);
        m.intercept = rng.random_range(-1.0..1.0);
        m.eta = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        m.beta = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g0, geta, gbeta) = smooth_gradient(&m, &data).unwrap();
        let h = 1e-5;
        let fd = |bump: &dyn Fn(&mut PlrModel, f64)| {
            let mut plus = m.clone();
            bump(&mut plus, h);
            let mut minus = m.clone();
            bump(&mut minus, -h);
            (smooth_loss(&plus, &data).unwrap() - smooth_loss(&minus, &data).unwrap()) / (2.0 * h)
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3);
        assert!(close(g0, fd(&|m, h| m.intercept += h)));
        for i in 0..2 {
            assert!(close(geta[i], fd(&|m, h| m.eta[i] += h)));
        }
        for j in 0..6 {
            assert!(close(gbeta[j], fd(&|m, h| m.beta[j] += h)));
        }
    }
}

/// Damped Newton on the unpenalized negative log-likelihood.
fn newton_mle(data: &PlrData) -> Vec<f64> {
    let n = data.n();
    let x = DMatrix::from_fn(n, 1 + data.n_features(), |k, c| if c == 0 { 1.0 } else { data.features()[(k, c - 1)] });
    let nll = |b: &DVector<f64>| {
        let s = &x * b;
        s.iter().zip(data.labels()).map(|(&s, &z)| softplus(s) - z * s).sum::<f64>()
    };
    let mut b = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let s = &x * &b;
        let p = s.map(sigmoid);
        let g = x.tr_mul(&(p.clone() - DVector::from_column_slice(data.labels())));
        let wx = DMatrix::from_fn(n, x.ncols(), |k, c| x[(k, c)] * p[k] * (1.0 - p[k]));
        let hess = x.tr_mul(&wx);
        let step = hess.cholesky().unwrap().solve(&g);
        let mut t = 1.0;
        let f0 = nll(&b);
        while nll(&(&b - t * &step)) > f0 && t > 1e-12 {
            t *= 0.5;
        }
        b -= t * step;
        if g.amax() < 1e-13 {
            break;
        }
    }
    b.iter().copied().collect()
}

#[test]
fn unpenalized_fit_matches_newton() {
    let mut checked = 0;
    for seed in 0..25 {
        let data = random_problem(seed, 20, 3, 0, 0.8);
        let oracle = newton_mle(&data);
        if oracle.iter().any(|v| v.abs() > 20.0) {
            continue;
        }
        let m = fit_plr(&data, 0.0, 1.0, &tight()).unwrap();
        assert!((m.intercept - oracle[0]).abs() < 1e-4, "seed {seed}");
        for j in 0..3 {
            assert!((m.beta[j] - oracle[j + 1]).abs() < 1e-4, "seed {seed} j {j}");
        }
        checked += 1;
    }
    assert!(checked >= 15, "only {checked} non-separable problems");
}

#[test]
fn objective_is_monotone_and_kkt_holds() {
    for seed in 0..40 {
        let data = random_problem(seed, 40, 25, 1, 1.5);
        let mut rng = rng_from(seed, &[7]);
        let alpha = rng.random_range(0.0..=1.0);
        let lam = 10f64.powf(rng.random_range(-3.0..-0.5));
        let (m, trace) = fit_plr_traced(&data, lam, alpha, &PlrFitSettings::default()).unwrap();
        for w in trace.objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "seed {seed}: {} -> {}", w[0], w[1]);
        }
        assert!(kkt_violation(&m, &data).unwrap() <= 1e-4, "seed {seed}");
        // the returned model's objective matches the last traced value
        let last = *trace.objectives.last().unwrap();
        assert!((plr_objective(&m, &data).unwrap() - last).abs() < 1e-10);
    }
}

#[test]
fn no_intercept_mode() {
    let data = random_problem(5, 40, 4, 1, 1.0);
    let s = PlrFitSettings {
        fit_intercept: false,
        ..tight()
    };
    let m = fit_plr(&data, 0.01, 0.5, &s).unwrap();
    assert_eq!(m.intercept, 0.0);
    assert!(kkt_violation(&m, &data).unwrap() <= 1e-6);
}

#[test]
fn large_lambda_zeroes_beta_and_fits_confounders() {
    let data = random_problem(11, 50, 8, 2, 1.5);
    for alpha in [0.0, 0.4, 1.0] {
        let s = PlrFitSettings::default();
        let lmax = lambda_max(&data, alpha, &s).unwrap();
        let m = fit_plr(&data, lmax * 1.0001, alpha, &s).unwrap();
        if alpha > 0.0 {
            assert!(m.beta.iter().all(|&b| b == 0.0));
            let below = fit_plr(&data, lmax * 0.95, alpha, &s).unwrap();
            assert!(below.beta.iter().any(|&b| b != 0.0));
        }
        let reduced = fit_plr(&data.columns(&[]), 0.0, alpha, &tight()).unwrap();
        if alpha == 1.0 {
            for (a, b) in m.eta.iter().zip(&reduced.eta) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn ridge_treats_duplicates_equally() {
    let base = random_problem(2, 40, 3, 0, 1.0);
    let w = base.features();
    let dup = DMatrix::from_fn(40, 4, |k, c| w[(k, if c == 3 { 0 } else { c })]);
    let data = PlrData::new(DMatrix::zeros(40, 0), dup, base.labels().to_vec()).unwrap();
    let m = fit_plr(&data, 0.05, 0.0, &tight()).unwrap();
    assert!((m.beta[0] - m.beta[3]).abs() < 1e-6, "{:?}", m.beta);
    assert!(m.beta[0].abs() > 1e-3);
}

#[test]
fn rejects_bad_input() {
    let w = DMatrix::zeros(4, 2);
    assert!(PlrData::new(DMatrix::zeros(4, 0), w.clone(), vec![1.0, 0.0, 2.0, 0.0]).is_err());
    assert!(PlrData::new(DMatrix::zeros(3, 0), w.clone(), vec![1.0, 0.0, 1.0, 0.0]).is_err());
    let one_class = PlrData::new(DMatrix::zeros(4, 0), w, vec![1.0; 4]).unwrap();
    assert!(fit_plr(&one_class, 0.1, 1.0, &PlrFitSettings::default()).is_err());
}

#[test]
fn nonconvergence_reports_last_iterate() {
    let data = random_problem(4, 40, 5, 0, 2.0);
    let s = PlrFitSettings {
        max_iterations: 1,
        tolerance: 1e-14,
        ..PlrFitSettings::default()
    };
    match fit_plr(&data, 0.01, 1.0, &s) {
        Err(Error::NotConverged {
            iterations,
            last_coefficients,
            max_kkt_violation,
        }) => {
            assert_eq!(iterations, 1);
            assert_eq!(last_coefficients.len(), 6);
            assert!(max_kkt_violation.is_finite());
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn folds_are_stratified() {
    let z: Vec<f64> = (0..23).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let folds = stratified_folds(&z, 5, &mut rng_from(1, &[])).unwrap();
    for f in 0..5 {
        let members: Vec<usize> = (0..23).filter(|&i| folds[i] == f).collect();
        assert!(members.iter().any(|&i| z[i] == 1.0) && members.iter().any(|&i| z[i] == 0.0));
    }
    assert!(stratified_folds(&[1.0, 1.0, 0.0, 0.0, 0.0], 3, &mut rng_from(1, &[])).is_err());
}

#[test]
fn cv_on_pure_noise_is_sparse() {
    let mut total = 0.0;
    for seed in 0..20 {
        let mut rng = rng_from(seed, &[8]);
        let w = DMatrix::from_fn(60, 100, |_, _| StandardNormal.sample(&mut rng));
        let z = (0..60).map(|k| (k % 2) as f64).collect();
        let data = PlrData::new(DMatrix::zeros(60, 0), w, z).unwrap();
        let cv = cv_tune(&data, &PlrFitSettings::default(), &mut rng_from(seed, &[9])).unwrap();
        total += cv.model.beta.iter().filter(|&&b| b != 0.0).count() as f64 / 100.0;
    }
    let mean = total / 20.0;
    assert!(mean <= 0.05, "mean nonzero fraction {mean}");
}

#[test]
fn cv_finds_a_perfect_predictor() {
    let mut rng = rng_from(21, &[]);
    let z: Vec<f64> = (0..40).map(|k| (k % 2) as f64).collect();
    let mut w = DMatrix::from_fn(40, 30, |_, _| StandardNormal.sample(&mut rng));
    for k in 0..40 {
        w[(k, 17)] = if z[k] == 1.0 { 1.0 } else { -1.0 } + 0.1 * w[(k, 17)];
    }
    let data = PlrData::new(DMatrix::zeros(40, 0), w, z).unwrap();
    let s = PlrFitSettings::default();
    let a = cv_tune(&data, &s, &mut rng_from(5, &[])).unwrap();
    assert!(a.model.beta[17] != 0.0);
    let b = cv_tune(&data, &s, &mut rng_from(5, &[])).unwrap();
    assert_eq!((a.lambda, a.alpha), (b.lambda, b.alpha));
    assert_eq!(a.model, b.model);
}
