use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqtrans::dag::parse_dag;
use seqtrans::dataset::Dataset;
use seqtrans::fairness::{
    cdp, decompose_individual, fit_logistic, AuditGroups, LogisticModel, LogisticOptions, CETERIS_PARIBUS_LABEL,
};
use seqtrans::gaussian::{sample_gaussian_stream, GaussianSpec};
use seqtrans::seqtransport::{fit_context, transport_individual, CounterfactualResult, FitOptions, StepRecord};

fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

fn synthetic_result(original: Vec<f64>, transported: Vec<f64>, order: &[usize]) -> CounterfactualResult {
    let variables = names(original.len());
    let steps = order
        .iter()
        .map(|&j| StepRecord {
            variable: variables[j].clone(),
            parents: Vec::new(),
            source_parents: Vec::new(),
            target_parents: Vec::new(),
            level: 0.5,
            value: original[j],
            transported: transported[j],
            widenings: 0,
        })
        .collect();
    CounterfactualResult {
        variables,
        original,
        transported,
        steps,
        warnings: Vec::new(),
    }
}

fn demo_model() -> LogisticModel {
    LogisticModel::new(names(2), vec![0.5, 0.5], 0.0, Some(-1.0)).unwrap()
}

#[test]
fn demo_individual_through_fitted_transport() {
    let g0 = GaussianSpec::from_slices(&[0.0, 0.0], &[&[1.0, 0.3], &[0.3, 1.0]]).unwrap();
    let g1 = GaussianSpec::from_slices(&[1.0, 1.0], &[&[1.0, 0.7], &[0.7, 1.0]]).unwrap();
    let n = 2000;
    let rows: Vec<Vec<f64>> = sample_gaussian_stream(&g0, n, 3, 0)
        .unwrap()
        .into_iter()
        .chain(sample_gaussian_stream(&g1, n, 3, 1).unwrap())
        .collect();
    let s = (0..2 * n).map(|i| (i >= n) as u8 as f64).collect();
    let data = Dataset::from_rows(&["x1", "x2"], &rows, "s", s).unwrap();
    let dag = parse_dag("s -> x1\ns -> x2\nx1 -> x2\n@sensitive s").unwrap();
    let ctx = fit_context(&data, &dag, FitOptions::default()).unwrap();
    let r = transport_individual(&ctx, &[-2.0, -1.0]).unwrap();
    let path = decompose_individual(&demo_model(), &r, 0.0, 1.0).unwrap();
    assert_eq!(format!("{:.4}", path.initial()), "0.1824");
    assert!((path.steps[0].delta * 100.0 + 10.66).abs() < 0.01);
    let labels: Vec<&str> = path.steps.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, [CETERIS_PARIBUS_LABEL, "x1", "x2"]);
    assert_eq!(path.delta_sum(), path.total());
    let end = demo_model().score(&r.transported, 1.0).unwrap();
    assert_eq!(path.last(), end);
}

#[test]
fn unaware_model_has_no_ceteris_paribus_effect() {
    let m = LogisticModel::new(names(3), vec![0.3, -1.2, 2.0], 0.4, None).unwrap();
    let r = synthetic_result(vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.5], &[2, 0, 1]);
    let path = decompose_individual(&m, &r, 0.0, 1.0).unwrap();
    assert_eq!(path.steps[0].delta, 0.0);
    assert_eq!(path.steps[0].before, path.steps[0].after);
}

#[test]
fn irls_solution_satisfies_score_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 3000;
    let mut rows = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let si = (rng.gen::<f64>() < 0.4) as u8 as f64;
        let x1: f64 = rng.gen_range(-2.0..3.0);
        let x2: f64 = 10.0 * rng.gen::<f64>() + si;
        let eta = -0.5 + 0.8 * x1 - 0.1 * x2 + 0.7 * si;
        y.push((rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64);
        rows.push(vec![x1, x2]);
        s.push(si);
    }
    let data = Dataset::from_rows(&["x1", "x2"], &rows, "s", s.clone()).unwrap();
    let fit = fit_logistic(&data, &y, &["x1", "x2"], true, LogisticOptions::default()).unwrap();
    let m = fit.model;
    assert!(m.converged);
    // d loglik / d theta = sum (y - p) z for z in {1, x1, x2, s}.
    let mut grad = [0.0f64; 4];
    for i in 0..n {
        let p = m.score(&rows[i], s[i]).unwrap();
        let r = y[i] - p;
        grad[0] += r;
        grad[1] += r * rows[i][0];
        grad[2] += r * rows[i][1];
        grad[3] += r * s[i];
    }
    for g in grad {
        assert!((g / n as f64).abs() < 1e-7, "{grad:?}");
    }
}

fn model_strategy(d: usize) -> impl Strategy<Value = LogisticModel> {
    (
        prop::collection::vec(-3.0f64..3.0, d),
        -2.0f64..2.0,
        prop::option::of(-3.0f64..3.0),
    )
        .prop_map(move |(w, b, ws)| LogisticModel::new(names(d), w, b, ws).unwrap())
}

proptest! {
    #[test]
    fn decomposition_telescopes(
        m in model_strategy(4),
        x in prop::collection::vec(-5.0f64..5.0, 4),
        xs in prop::collection::vec(-5.0f64..5.0, 4),
        order in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let r = synthetic_result(x.clone(), xs.clone(), &order);
        let path = decompose_individual(&m, &r, 0.0, 1.0).unwrap();
        prop_assert_eq!(path.steps.len(), 5);
        for w in path.steps.windows(2) {
            prop_assert_eq!(w[0].after, w[1].before);
        }
        prop_assert_eq!(path.initial(), m.score(&x, 0.0).unwrap());
        prop_assert_eq!(path.last(), m.score(&xs, 1.0).unwrap());
        prop_assert!((path.delta_sum() - path.total()).abs() <= 8.0 * f64::EPSILON);
        for (step, &j) in path.steps[1..].iter().zip(&order) {
            prop_assert_eq!(&step.label, &format!("x{}", j + 1));
        }
    }

    #[test]
    fn cdp_is_the_mean_of_individual_changes(
        m in model_strategy(2),
        a in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 1..30),
        b in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0, -4.0f64..4.0), 1..30),
    ) {
        let vars = names(2);
        let split = |v: &[(f64, f64, f64, f64)]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            v.iter().map(|&(p, q, r, s)| (vec![p, q], vec![r, s])).unzip()
        };
        let (xa, sa) = split(&a);
        let (xb, sb) = split(&b);
        let groups = AuditGroups { target_size: 7, ..AuditGroups::default() };
        let ra = cdp(&m, &vars, &xa, &sa, groups, true).unwrap();
        let rb = cdp(&m, &vars, &xb, &sb, groups, false).unwrap();
        let xall: Vec<Vec<f64>> = xa.iter().chain(&xb).cloned().collect();
        let sall: Vec<Vec<f64>> = sa.iter().chain(&sb).cloned().collect();
        let rall = cdp(&m, &vars, &xall, &sall, groups, false).unwrap();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        prop_assert!((rall.cdp - (na * ra.cdp + nb * rb.cdp) / (na + nb)).abs() < 1e-12);
        prop_assert!(rall.cdp > -1.0 && rall.cdp < 1.0);
        let ind = ra.individuals.unwrap();
        prop_assert_eq!(ind.len(), a.len());
        for (i, s) in ind.iter().enumerate() {
            prop_assert_eq!(s.score0, m.score(&xa[i], 0.0).unwrap());
            prop_assert_eq!(s.score1, m.score(&sa[i], 1.0).unwrap());
        }
        prop_assert!(rb.individuals.is_none());
        prop_assert_eq!(ra.n1, 7);
    }
}
