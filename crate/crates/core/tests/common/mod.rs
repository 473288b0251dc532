//! Property checks shared by the invariant suite and the acceptance run.
//! Each check returns `Err` with a description of the first failure.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

use spartsm::changepoint::{filter_intervals, run_changepoint, ChangepointConfig, Interval};
use spartsm::condexp::{estimate_cond_exp, nw_cond_exp, CondExpMethod};
use spartsm::eval::{coverage_experiment, power_curve, roc_from_scores, CoverageConfig, InferenceSetting, PowerConfig};
use spartsm::inference::{infer_from_objective, run_pipeline};
use spartsm::objective::{build_from_features, closed_form_with_fallback};
use spartsm::rng::{rng_from_seed, split_rng, SimRng};
use spartsm::simulate::{
    gaussian_oracle_family, sample_ggm_path, ChangeKind, Curve, GaussianOracle, OracleKind, PrecisionPath,
    SampleLayout, Theta0Style,
};
use spartsm::solver::{lasso_quadratic, LassoConfig};
use spartsm::{FeatureMap, InferenceConfig, LambdaChoice, TimeBasis, TimedDataset, WeightFunction};

pub type Check = std::result::Result<(), String>;

pub const CASES: u32 = 100;

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S, F>(strategy: S, test: F) -> Check
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> std::result::Result<(), TestCaseError>,
{
    runner(CASES).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn normal_rows(rng: &mut SimRng, n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn bases() -> Vec<TimeBasis> {
    vec![
        TimeBasis::Linear,
        TimeBasis::fourier(2).unwrap(),
        TimeBasis::fourier(4).unwrap(),
        TimeBasis::fourier(8).unwrap(),
    ]
}

pub fn basis_derivatives_match_differences() -> Check {
    let h = 1e-5;
    run((0..4usize, 0.01f64..0.99), |(which, t)| {
        let basis = &bases()[which];
        let pairs = [
            (basis.dphi(t), basis.phi(t + h), basis.phi(t - h)),
            (basis.d2phi(t), basis.dphi(t + h), basis.dphi(t - h)),
        ];
        for (analytic, plus, minus) in pairs {
            for r in 0..basis.dim() {
                let fd = (plus[r] - minus[r]) / (2.0 * h);
                let err = (analytic[r] - fd).abs() / analytic[r].abs().max(1.0);
                ensure(err <= 1e-6, || format!("{basis:?} at t = {t}, component {r}: {} vs {fd}", analytic[r]))?;
            }
        }
        Ok(())
    })
}

pub fn weight_vanishes_at_endpoints() -> Check {
    run((-10.0f64..10.0, 1e-3f64..10.0), |(a, width)| {
        let w = WeightFunction::new(a, a + width);
        ensure(w.g(w.t_start) == 0.0 && w.g(w.t_end) == 0.0, || format!("{w:?}"))
    })
}

pub fn single_coordinate_gives_single_feature() -> Check {
    let strat = (1usize..9).prop_flat_map(|d| (Just(d), 0..d, prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]));
    run(strat, |(d, i, v)| {
        let fmap = FeatureMap::gaussian_pairwise(d);
        let mut x = vec![0.0; d];
        x[i] = v;
        let f = fmap.evaluate(&x).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let nonzero: Vec<usize> = f.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect();
        ensure(nonzero == vec![fmap.index_of(i, i).unwrap()], || format!("nonzero features {nonzero:?}"))
    })
}

fn nw_inputs() -> impl Strategy<Value = (Vec<f64>, DMatrix<f64>, f64)> {
    (2usize..30, 1usize..4, -3.0f64..0.5).prop_flat_map(|(n, k, log_h)| {
        (
            proptest::collection::vec(0.0f64..1.0, n),
            proptest::collection::vec(-5.0f64..5.0, n * k),
            Just(k),
            Just(10f64.powf(log_h)),
        )
            .prop_map(|(t, f, k, h)| {
                let n = t.len();
                (t, DMatrix::from_row_slice(n, k, &f), h)
            })
    })
}

pub fn nw_stays_in_column_range() -> Check {
    run(nw_inputs(), |(t, f, h)| {
        let out = nw_cond_exp(&f, &t, h, false).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for j in 0..f.ncols() {
            let col = f.column(j);
            let (lo, hi) = (col.min(), col.max());
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            for v in out.column(j).iter() {
                ensure(*v >= lo - slack && *v <= hi + slack, || format!("{v} outside [{lo}, {hi}]"))?;
            }
        }
        Ok(())
    })
}

pub fn nw_commutes_with_row_permutation() -> Check {
    let strat = nw_inputs().prop_flat_map(|(t, f, h)| {
        let perm: Vec<usize> = (0..t.len()).collect();
        (Just(t), Just(f), Just(h), Just(perm).prop_shuffle())
    });
    run(strat, |(t, f, h, perm)| {
        let n = t.len();
        let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        let fp = DMatrix::from_fn(n, f.ncols(), |r, c| f[(perm[r], c)]);
        let a = nw_cond_exp(&f, &t, h, false).unwrap();
        let b = nw_cond_exp(&fp, &tp, h, false).unwrap();
        for r in 0..n {
            for c in 0..f.ncols() {
                let (x, y) = (a[(perm[r], c)], b[(r, c)]);
                ensure((x - y).abs() <= 1e-12 * (1.0 + x.abs()), || format!("row {r}: {x} vs {y}"))?;
            }
        }
        Ok(())
    })
}

pub fn nw_tiny_bandwidth_returns_rows() -> Check {
    let strat = (2usize..30, 1usize..4).prop_flat_map(|(n, k)| {
        let perm: Vec<usize> = (0..n).collect();
        (
            proptest::collection::vec(0.0f64..0.5, n),
            proptest::collection::vec(-5.0f64..5.0, n * k),
            Just(perm).prop_shuffle(),
            Just(k),
        )
    });
    run(strat, |(jitter, f, perm, k)| {
        let n = jitter.len();
        // Distinct times at least 0.5 / n apart.
        let t: Vec<f64> = (0..n).map(|i| (perm[i] as f64 + jitter[i]) / n as f64).collect();
        let f = DMatrix::from_row_slice(n, k, &f);
        let out = nw_cond_exp(&f, &t, 1e-6, false).unwrap();
        ensure((&out - &f).amax() <= 1e-12, || format!("max deviation {}", (&out - &f).amax()))
    })
}

fn paired_gaussian(seed: u64, n: usize, d: usize) -> TimedDataset {
    let mut rng = rng_from_seed(seed);
    let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let obs = normal_rows(&mut rng, n, d);
    TimedDataset::paired(&times, obs, d, Some((0.0, 1.0))).unwrap()
}

fn general_objective(ds: &TimedDataset, fmap: &FeatureMap, basis: &TimeBasis) -> spartsm::GeneralObjective {
    let features = fmap.feature_matrix(ds.observations()).unwrap();
    let ce = estimate_cond_exp(ds, &features, CondExpMethod::default()).unwrap();
    build_from_features(ds, &features, &ce.row_means(), basis, &WeightFunction::default()).unwrap()
}

pub fn objective_is_exactly_quadratic() -> Check {
    run((any::<u64>(), 5usize..40, 1usize..4, -3.0f64..3.0), |(seed, n, d, a)| {
        let ds = paired_gaussian(seed, n, d);
        let fmap = FeatureMap::gaussian_pairwise(d);
        let rows = general_objective(&ds, &fmap, &TimeBasis::Linear);
        let mut rng = rng_from_seed(seed ^ 0x5eed);
        let alpha = DVector::from_fn(rows.dim(), |_, _| rng.random_range(-2.0..2.0));
        let scaled = rows.value(&(&alpha * a));
        let q = rows.clone().quadratic();
        let expected = a * a * alpha.dot(&(&q.h * &alpha)) + 2.0 * a * q.c.dot(&alpha);
        let tol = 1e-10 * (1.0 + expected.abs());
        ensure((scaled - expected).abs() <= tol, || format!("{scaled} vs {expected}"))
    })
}

pub fn minimizer_ignores_row_order() -> Check {
    let strat = (any::<u64>(), 3usize..7, 8usize..15).prop_flat_map(|(seed, m, per)| {
        let perm: Vec<usize> = (0..per).collect();
        (Just(seed), Just(m), Just(per), proptest::collection::vec(Just(perm).prop_shuffle(), m))
    });
    run(strat, |(seed, m, per, perms)| {
        let d = 2;
        let mut rng = rng_from_seed(seed);
        let times: Vec<f64> = (0..m).map(|b| (b as f64 + 0.5) / m as f64).collect();
        let blocks: Vec<Vec<f64>> = (0..m).map(|_| normal_rows(&mut rng, per, d)).collect();
        let shuffled: Vec<Vec<f64>> = blocks
            .iter()
            .zip(&perms)
            .map(|(rows, perm)| perm.iter().flat_map(|&r| rows[r * d..(r + 1) * d].to_vec()).collect())
            .collect();
        let fmap = FeatureMap::gaussian_pairwise(d);
        let fit = |obs: Vec<Vec<f64>>| {
            let ds = TimedDataset::grouped(&times, obs, d, Some((0.0, 1.0))).unwrap();
            let prep = spartsm::estimate::prepare(&ds, &fmap, &TimeBasis::Linear, &WeightFunction::default(), CondExpMethod::GroupMean)
                .unwrap();
            closed_form_with_fallback(&prep.objective).unwrap().0
        };
        let (a, b) = (fit(blocks), fit(shuffled));
        let err = (&a - &b).amax();
        ensure(err <= 1e-8 * a.amax().max(1.0), || format!("minimizers differ by {err}"))
    })
}

/// Gradient at the true coefficients over `reps` datasets of size `n`, with
/// exact conditional means.
pub fn gradient_at_truth_samples(reps: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let oracle =
        gaussian_oracle_family(OracleKind::TimeMeanFixedVar, Curve::Affine { a: 1.0, b: 2.0 }, Curve::constant(1.0))
            .unwrap();
    let fmap = GaussianOracle::feature_map();
    let truth = DVector::from_vec(oracle.exact_dtheta(0.5).to_vec());
    (0..reps)
        .map(|r| {
            let mut rng = split_rng(seed, r as u64);
            let ds = oracle.sample_paired(n, &mut rng).unwrap();
            let features = fmap.feature_matrix(ds.observations()).unwrap();
            let means = DMatrix::from_fn(n, 2, |i, j| oracle.moments(ds.time(i))[j]);
            let rows =
                build_from_features(&ds, &features, &means, &TimeBasis::Linear, &WeightFunction::default()).unwrap();
            rows.gradient(&truth)
        })
        .collect()
}

pub fn gradient_has_zero_mean_at_truth() -> Check {
    let reps = 200;
    let grads = gradient_at_truth_samples(reps, 500, 2024);
    let p = grads[0].len();
    for j in 0..p {
        let vals: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        let bound = 4.0 * sd / (reps as f64).sqrt();
        if mean.abs() > bound {
            return Err(format!("coordinate {j}: mean gradient {mean} exceeds {bound}"));
        }
    }
    Ok(())
}

fn random_spd(seed: u64, p: usize) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(p + 3, p, |_, _| rng.random_range(-1.0..1.0));
    a.transpose() * a / p as f64 + DMatrix::identity(p, p) * 0.2
}

fn random_c(seed: u64, p: usize) -> DVector<f64> {
    let mut rng = rng_from_seed(seed.wrapping_add(1));
    DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
}

pub fn l1_norm_shrinks_along_path() -> Check {
    run((any::<u64>(), 2usize..11), |(seed, p)| {
        let (h, c) = (random_spd(seed, p), random_c(seed, p));
        let top = 2.0 * c.amax();
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let lambda = top * i as f64 / 9.0;
            let cfg = LassoConfig { lambda, tol: 1e-12, max_iter: 100_000, ..Default::default() };
            let sol = lasso_quadratic(&h, &c, &cfg, None).unwrap();
            let l1 = sol.alpha().lp_norm(1);
            ensure(l1 <= prev + 1e-8, || format!("l1 norm rose from {prev} to {l1} at lambda {lambda}"))?;
            prev = l1;
        }
        Ok(())
    })
}

pub fn screened_coordinates_stay_zero() -> Check {
    run((any::<u64>(), 2usize..11, 0.0f64..1.0), |(seed, p, frac)| {
        let mut h = random_spd(seed, p);
        let mut c = random_c(seed, p);
        let lambda = 1.0;
        let j = seed as usize % p;
        h.row_mut(j).fill(0.0);
        h.column_mut(j).fill(0.0);
        c[j] = 0.5 * frac * (lambda - 1e-9);
        let sol = lasso_quadratic(&h, &c, &LassoConfig::with_lambda(lambda), None).unwrap();
        ensure(sol.alpha_hat[j] == 0.0, || format!("coordinate {j} = {}", sol.alpha_hat[j]))
    })
}

pub fn penalized_objective_never_rises() -> Check {
    run((any::<u64>(), 2usize..11, 0.0f64..1.0), |(seed, p, lambda)| {
        let (h, c) = (random_spd(seed, p), random_c(seed, p));
        let mut prev = 0.0_f64;
        for iters in 1..=40 {
            let cfg = LassoConfig { lambda, max_iter: iters, tol: 1e-300, ..Default::default() };
            let f = lasso_quadratic(&h, &c, &cfg, None).unwrap().objective;
            ensure(f <= prev + 1e-12 * (1.0 + prev.abs()), || format!("objective rose from {prev} to {f} at {iters}"))?;
            prev = f;
        }
        Ok(())
    })
}

pub fn debiasing_recovers_unpenalized_minimizer() -> Check {
    run((any::<u64>(), 60usize..200, prop_oneof![Just(0.0), Just(0.1), Just(1.0)]), |(seed, n, lambda)| {
        let d = 2;
        let ds = paired_gaussian(seed, n, d);
        let fmap = FeatureMap::gaussian_pairwise(d);
        let obj = general_objective(&ds, &fmap, &TimeBasis::Linear).quadratic();
        let exact = closed_form_with_fallback(&obj).unwrap().0;
        let cfg = InferenceConfig { lambda_lasso: LambdaChoice::Fixed(lambda), lambda_j: Some(0.0), ..Default::default() };
        let report = infer_from_objective(&obj, &fmap, &cfg, None).unwrap();
        for c in &report.coordinates {
            let want = exact[c.feature_index];
            ensure((c.alpha_tilde - want).abs() <= 1e-8 * want.abs().max(1.0), || {
                format!("coordinate {}: {} vs {want}", c.feature_index, c.alpha_tilde)
            })?;
        }
        Ok(())
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

pub fn interval_width_scales_with_root_n() -> Check {
    let oracle =
        gaussian_oracle_family(OracleKind::TimeMeanFixedVar, Curve::Affine { a: 0.0, b: 1.0 }, Curve::constant(1.0))
            .unwrap();
    let fmap = GaussianOracle::feature_map();
    let cfg = InferenceConfig::default();
    let width = |n: usize, seed: u64| {
        let w: Vec<f64> = (0..40)
            .map(|r| {
                let ds = oracle.sample_paired(n, &mut split_rng(seed, r)).unwrap();
                let rep = run_pipeline(&ds, &fmap, &WeightFunction::default(), &cfg).unwrap();
                let ci = rep.coordinates[0].ci;
                ci[1] - ci[0]
            })
            .collect();
        median(w)
    };
    let ratio = width(1000, 1) / width(2000, 2);
    let target = std::f64::consts::SQRT_2;
    if (ratio / target - 1.0).abs() <= 0.15 {
        Ok(())
    } else {
        Err(format!("median width ratio {ratio}, expected {target} ± 15%"))
    }
}

pub fn reports_are_deterministic() -> Check {
    run((any::<u64>(), 50usize..150), |(seed, n)| {
        let ds = paired_gaussian(seed, n, 3);
        let fmap = FeatureMap::gaussian_pairwise(3);
        let cfg = InferenceConfig::default();
        let a = serde_json::to_string(&run_pipeline(&ds, &fmap, &WeightFunction::default(), &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_pipeline(&ds, &fmap, &WeightFunction::default(), &cfg).unwrap()).unwrap();
        ensure(a == b, || "reports differ".into())
    })
}

fn iv(start: f64, end: f64) -> Interval {
    Interval { start, end, peak_coordinate: 0, peak_time: start, peak_stat: 3.0, sign: 1.0 }
}

pub fn interval_filtering_is_idempotent() -> Check {
    let strat = (proptest::collection::vec(0.0f64..1.0, 0..20), 0.0f64..0.05, 0.0f64..0.05);
    run(strat, |(mut cuts, eps_sp, eps_pp)| {
        cuts.sort_by(f64::total_cmp);
        let raw: Vec<Interval> = cuts.chunks_exact(2).map(|w| iv(w[0], w[1])).collect();
        let once = filter_intervals(&raw, eps_sp, eps_pp);
        let twice = filter_intervals(&once, eps_sp, eps_pp);
        ensure(once == twice, || format!("{once:?} then {twice:?}"))
    })
}

/// Unit-variance series of length `len` on an equispaced grid, shifting
/// by `jump` at `t = 0.5`.
pub fn shift_series(rng: &mut SimRng, len: usize, jump: f64) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = (0..len).map(|i| (i as f64 + 0.5) / len as f64).collect();
    let obs = times
        .iter()
        .map(|&t| if t >= 0.5 { jump } else { 0.0 } + rng.sample::<f64, _>(StandardNormal))
        .collect();
    (times, obs)
}

pub fn identity_features() -> FeatureMap {
    FeatureMap::custom("identity", 1, 1, |x, out| out[0] = x[0])
}

/// Fraction of null replications whose statistic exceeds the threshold at
/// the grid point nearest `t = 0.5`.
pub fn null_exceedance(reps: usize, seed: u64) -> f64 {
    let fmap = identity_features();
    let cfg = ChangepointConfig::default();
    let hits: usize = (0..reps)
        .map(|r| {
            let (times, obs) = shift_series(&mut split_rng(seed, r as u64), 5000, 0.0);
            let ds = TimedDataset::paired(&times, obs, 1, Some((0.0, 1.0))).unwrap();
            let (_, rep) = run_changepoint(&ds, &fmap, &WeightFunction::default(), &cfg).unwrap();
            let g = rep.times.iter().map(|t| (t - 0.5).abs()).enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
            usize::from(rep.stats[g][0] > rep.threshold)
        })
        .sum();
    hits as f64 / reps as f64
}

pub fn null_exceedance_within_size() -> Check {
    let rate = null_exceedance(500, 77);
    if rate <= 0.05 + 0.03 {
        Ok(())
    } else {
        Err(format!("null exceedance {rate} above 0.08"))
    }
}

pub fn intervals_survive_affine_time_change() -> Check {
    let fmap = identity_features();
    let cfg = ChangepointConfig::default();
    runner(CASES)
        .run(&(any::<u64>(), -100.0f64..100.0, 0.1f64..1000.0), |(seed, shift, scale)| {
            let (times, obs) = shift_series(&mut rng_from_seed(seed), 1000, 1.0);
            let raw: Vec<f64> = times.iter().map(|t| shift + scale * t).collect();
            let unit = TimedDataset::paired(&times, obs.clone(), 1, Some((0.0, 1.0))).unwrap();
            let moved = TimedDataset::paired(&raw, obs, 1, Some((shift, shift + scale))).unwrap();
            let w = WeightFunction::default();
            let a = run_changepoint(&unit, &fmap, &w, &cfg).unwrap().1.filtered_intervals;
            let b = run_changepoint(&moved, &fmap, &w, &cfg).unwrap().1.filtered_intervals;
            ensure(a.len() == b.len(), || format!("{} vs {} intervals", a.len(), b.len()))?;
            for (x, y) in a.iter().zip(&b) {
                ensure((x.start - y.start).abs() < 1e-9 && (x.end - y.end).abs() < 1e-9, || format!("{x:?} vs {y:?}"))?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn random_path(seed: u64, d: usize, sine: bool, p: f64) -> PrecisionPath {
    let kind = if sine { ChangeKind::sine() } else { ChangeKind::LinearRamp { slope: 0.45 } };
    PrecisionPath::random(d, Theta0Style::Estimation, kind, p, &mut rng_from_seed(seed)).unwrap()
}

pub fn change_mask_matches_derivative() -> Check {
    run((any::<u64>(), 3usize..12, any::<bool>(), 0.02f64..0.3), |(seed, d, sine, p)| {
        let path = random_path(seed, d, sine, p);
        let fmap = FeatureMap::gaussian_pairwise(d);
        let moving: Vec<bool> = (0..fmap.dim())
            .map(|j| (0..=20).any(|g| path.feature_derivative(&fmap, g as f64 / 20.0)[j] != 0.0))
            .collect();
        let mask = path.feature_mask(&fmap);
        ensure(mask == moving, || "mask disagrees with the derivative".into())?;
        let edges: Vec<(usize, usize)> = (0..fmap.dim()).filter(|&j| mask[j]).map(|j| fmap.edge(j).unwrap()).collect();
        ensure(edges == path.change_mask(), || format!("{edges:?} vs {:?}", path.change_mask()))
    })
}

pub fn random_paths_reproduce_from_seed() -> Check {
    run((any::<u64>(), 3usize..12, any::<bool>(), 0.02f64..0.3), |(seed, d, sine, p)| {
        let (a, b) = (random_path(seed, d, sine, p), random_path(seed, d, sine, p));
        ensure(a.theta0 == b.theta0 && a.change_mask() == b.change_mask(), || "paths differ".into())?;
        let da = sample_ggm_path(&a, SampleLayout::Paired { n: 20 }, &mut rng_from_seed(seed)).unwrap();
        let db = sample_ggm_path(&b, SampleLayout::Paired { n: 20 }, &mut rng_from_seed(seed)).unwrap();
        ensure(da.observations() == db.observations() && da.times() == db.times(), || "samples differ".into())
    })
}

pub fn auc_ignores_monotone_transforms() -> Check {
    let strat = (2usize..40).prop_flat_map(|n| {
        (proptest::collection::vec(-3.0f64..3.0, n), proptest::collection::vec(any::<bool>(), n), 0.1f64..5.0, -5.0f64..5.0)
    });
    run(strat, |(scores, mut labels, a, b)| {
        labels[0] = true;
        labels[1] = false;
        let moved: Vec<f64> = scores.iter().map(|s| a * s.exp() + b).collect();
        let x = roc_from_scores(&scores, &labels).unwrap().auc;
        let y = roc_from_scores(&moved, &labels).unwrap().auc;
        ensure((x - y).abs() <= 1e-12, || format!("{x} vs {y}"))
    })
}

pub fn experiments_reproduce_bit_exactly() -> Check {
    let cov = CoverageConfig { setting: InferenceSetting::Random { p: 0.1 }, d: 6, n: 150, replications: 6, seed: 9, ..Default::default() };
    let a = coverage_experiment(&cov).map_err(|e| e.to_string())?;
    let b = coverage_experiment(&cov).map_err(|e| e.to_string())?;
    if serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
        return Err("coverage runs differ".into());
    }
    let pow = PowerConfig { effects: vec![0.0, 3.0], d: 6, n: 150, replications: 4, seed: 9, ..Default::default() };
    if power_curve(&pow).map_err(|e| e.to_string())? != power_curve(&pow).map_err(|e| e.to_string())? {
        return Err("power runs differ".into());
    }
    Ok(())
}

pub const ALL: &[(&str, fn() -> Check)] = &[
    ("basis derivatives match finite differences", basis_derivatives_match_differences),
    ("weight vanishes at endpoints", weight_vanishes_at_endpoints),
    ("single coordinate gives single feature", single_coordinate_gives_single_feature),
    ("kernel smoother stays in column range", nw_stays_in_column_range),
    ("kernel smoother commutes with row permutation", nw_commutes_with_row_permutation),
    ("kernel smoother with tiny bandwidth returns rows", nw_tiny_bandwidth_returns_rows),
    ("gradient has zero mean at truth", gradient_has_zero_mean_at_truth),
    ("objective is exactly quadratic", objective_is_exactly_quadratic),
    ("minimizer ignores row order", minimizer_ignores_row_order),
    ("l1 norm shrinks along the path", l1_norm_shrinks_along_path),
    ("screened coordinates stay zero", screened_coordinates_stay_zero),
    ("penalized objective never rises", penalized_objective_never_rises),
    ("debiasing recovers the unpenalized minimizer", debiasing_recovers_unpenalized_minimizer),
    ("interval width scales with root n", interval_width_scales_with_root_n),
    ("reports are deterministic", reports_are_deterministic),
    ("interval filtering is idempotent", interval_filtering_is_idempotent),
    ("null exceedance within size", null_exceedance_within_size),
    ("intervals survive affine time change", intervals_survive_affine_time_change),
    ("change mask matches derivative", change_mask_matches_derivative),
    ("random paths reproduce from seed", random_paths_reproduce_from_seed),
    ("auc ignores monotone transforms", auc_ignores_monotone_transforms),
    ("experiments reproduce bit exactly", experiments_reproduce_bit_exactly),
];
