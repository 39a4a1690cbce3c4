//! Statistical and cross-module properties that need more than one module
//! or a large simulation.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use spatial_causal::bayes::{default_priors, fit_chains, ChainSettings, Model, ModelData};
use spatial_causal::datagen::{generate_network_dataset, Design, ScenarioConfig};
use spatial_causal::estimands::network_interference_effect;
use spatial_causal::harness::{
    read_table, run_motivating_pairs, write_table, EffectStats, Estimate, ExperimentSpec,
    ResultRow, ResultTable, TableFormat,
};
use spatial_causal::ols::{fit_ols, DesignMatrix};
use spatial_causal::scenario::{build_scenario, Node, Scenario, ScenarioDag};
use spatial_causal::spatial::{
    car_precision, joint_precision, AdjacencyStructure, JointPrecisionFactor, PrecisionKind,
};

fn topological(dag: &ScenarioDag) -> Vec<Node> {
    let mut order: Vec<Node> = Vec::new();
    while order.len() < dag.nodes().len() {
        for &n in dag.nodes() {
            if !order.contains(&n) && dag.parents(n).all(|p| order.contains(&p)) {
                order.push(n);
            }
        }
    }
    order
}

/// Draws from a linear-Gaussian model on the DAG with random edge weights.
fn simulate_sem(dag: &ScenarioDag, m: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut weight = std::collections::HashMap::new();
    for &(a, b) in dag.edges() {
        let magnitude: f64 = rng.random_range(0.5..1.5);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        weight.insert((a, b), sign * magnitude);
    }
    let mut cols = vec![DVector::zeros(m); Node::ALL.len()];
    for n in topological(dag) {
        let mut v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        for p in dag.parents(n) {
            v += &cols[p.index()] * weight[&(p, n)];
        }
        cols[n.index()] = v;
    }
    cols
}

fn partial_correlation(cols: &[DVector<f64>], x: Node, y: Node, cond: &[Node]) -> f64 {
    let m = cols[0].len();
    let mut columns = vec![DVector::from_element(m, 1.0)];
    columns.extend(cond.iter().map(|c| cols[c.index()].clone()));
    let names = (0..columns.len()).map(|j| format!("x{j}")).collect();
    let design = DesignMatrix::new(DMatrix::from_columns(&columns), names).unwrap();
    let rx = fit_ols(&cols[x.index()], &design).unwrap().residuals;
    let ry = fit_ols(&cols[y.index()], &design).unwrap().residuals;
    rx.dot(&ry) / (rx.norm() * ry.norm())
}

#[test]
fn d_separation_matches_partial_correlations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = 100_000;
    let bound = 3.0 * 4.0 / (m as f64).sqrt();
    let (mut tested, mut small) = (0, 0);
    for s in Scenario::ALL {
        let dag = build_scenario(s, true, true);
        let observed: Vec<Node> = dag
            .nodes()
            .iter()
            .copied()
            .filter(|n| !n.is_latent_root())
            .collect();
        let mut queries = Vec::new();
        for &x in &observed {
            for &y in &observed {
                if x.index() >= y.index() {
                    continue;
                }
                let rest: Vec<Node> = observed
                    .iter()
                    .copied()
                    .filter(|&n| n != x && n != y)
                    .collect();
                for mask in 0u32..1 << rest.len() {
                    let cond: Vec<Node> = (0..rest.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| rest[i])
                        .collect();
                    if matches!(dag.d_separated(x, y, &cond), Ok(true)) {
                        queries.push((x, y, cond));
                    }
                }
            }
        }
        // a handful per scenario, each under fresh coefficients
        for k in 0..queries.len().min(6) {
            let (x, y, cond) = &queries[(k * 7919) % queries.len()];
            let cols = simulate_sem(&dag, m, &mut rng);
            tested += 1;
            small += usize::from(partial_correlation(&cols, *x, *y, cond).abs() < bound);
        }
    }
    assert!(tested >= 30, "only {tested} separated queries");
    assert!(small as f64 >= 0.95 * tested as f64, "{small}/{tested}");
}

/// Kolmogorov-Smirnov distance between a sample and a normal law.
fn ks_distance(mut x: Vec<f64>, law: &Normal) -> f64 {
    x.sort_by(f64::total_cmp);
    let m = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = law.cdf(v);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn joint_sampler_linear_functionals_are_normal() {
    let adj = AdjacencyStructure::line(10).unwrap();
    let (tu, tz, pu, pz, rho) = (0.9, 1.4, 0.5, 0.8, -0.3);
    let factor = JointPrecisionFactor::new(&adj, tu, tz, pu, pz, rho).unwrap();
    let g = car_precision(&adj, tu, pu, PrecisionKind::ConditionalU).unwrap();
    let h = car_precision(&adj, tz, pz, PrecisionKind::ConditionalZ).unwrap();
    let cov = joint_precision(&g, &h, rho)
        .unwrap()
        .matrix()
        .clone()
        .try_inverse()
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (trials, m) = (200, 400);
    let critical = 1.6276 / (m as f64).sqrt();
    let mut passed = 0;
    for _ in 0..trials {
        let a = DVector::from_fn(20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sd = (a.transpose() * &cov * &a)[(0, 0)].sqrt();
        let values: Vec<f64> = (0..m)
            .map(|_| {
                let (u, z) = factor.sample(&mut rng);
                a.rows(0, 10).dot(&u) + a.rows(10, 10).dot(&z)
            })
            .collect();
        passed += usize::from(ks_distance(values, &Normal::new(0.0, sd).unwrap()) < critical);
    }
    assert!(passed as f64 >= 0.95 * trials as f64, "{passed}/{trials}");
}

#[test]
fn doubling_draws_shrinks_error_by_root_two() {
    let cfg = ScenarioConfig::network(Scenario::F);
    let graph = AdjacencyStructure::line(5).unwrap();
    let c = DMatrix::zeros(5, cfg.n_covariates());
    let u = DVector::zeros(5);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut spread = |draws: usize| {
        let est: Vec<f64> = (0..400)
            .map(|_| {
                network_interference_effect(&cfg, &graph, &c, &u, 1.0, 0.3, 0.6, draws, &mut rng)
                    .unwrap()[2]
            })
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    };
    let (sd1, sd2) = (spread(50), spread(100));
    let ratio = sd1 / sd2;
    let root2 = 2f64.sqrt();
    assert!(
        (0.8 * root2..=1.2 * root2).contains(&ratio),
        "doubling draws changed the spread by {ratio}"
    );
}

#[test]
fn chains_from_dispersed_starts_pass_the_gate() {
    let cfg = ScenarioConfig::network(Scenario::F);
    let graph = AdjacencyStructure::line(200).unwrap();
    let settings = ChainSettings {
        n_iter: 13_000,
        n_burnin: 7_000,
        thin: 10,
    };
    let seeds = 10;
    let mut converged = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let ds = generate_network_dataset(&graph, &cfg, cfg.n_covariates(), &mut rng).unwrap();
        let model = Model::new(
            ModelData::from_dataset(&ds),
            default_priors(&ds, &graph).unwrap(),
        )
        .unwrap();
        let fit = fit_chains(&model, &settings, 2, seed).unwrap();
        for s in fit.chains.iter().flat_map(|c| &c.draws) {
            assert_eq!(s.beta_u(), 1.0);
            assert!(s.phi_u < s.phi_z);
            model.validate_state(s).unwrap();
        }
        converged += usize::from(fit.converged());
    }
    assert!(converged * 10 >= 9 * seeds as usize, "{converged}/{seeds}");
}

#[test]
fn full_conditioning_removes_bias_in_the_pairs_study() {
    let spec = ExperimentSpec::new(Design::PairedBinary, 400, 300)
        .with_scenario(Scenario::F)
        .with_seed(17);
    let table = run_motivating_pairs(&spec).unwrap();
    let row = table.find("2f", "", "(Z,Zbar,U,Ubar)").unwrap();
    assert!(row.local.bias.abs() < 0.02, "{}", row.local.bias);
    assert!(
        row.interference.bias.abs() < 0.02,
        "{}",
        row.interference.bias
    );
}

fn estimates() -> impl Strategy<Value = Vec<Estimate>> {
    prop::collection::vec((-3.0f64..3.0, 0.01f64..2.0), 1..40).prop_map(|v| {
        v.into_iter()
            .map(|(value, hw)| Estimate {
                value,
                lower: value - hw,
                upper: value + hw,
            })
            .collect()
    })
}

fn row(local: EffectStats, interference: EffectStats, reps: usize, converged: usize) -> ResultRow {
    ResultRow {
        scenario: "2d".into(),
        variation: "phi_z=0.4".into(),
        method: "bayes".into(),
        model: "joint".into(),
        n: 200,
        n_reps: reps,
        n_converged: converged,
        n_failed: reps - converged,
        local,
        interference,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregates_are_internally_consistent(est in estimates(), truth in -2.0f64..2.0) {
        let s = EffectStats::from_estimates(&est, truth);
        prop_assert!((0.0..=100.0).contains(&s.coverage));
        prop_assert!(s.rmse + 1e-12 >= s.bias.abs());
        prop_assert!(s.coverage_consistent());
    }

    #[test]
    fn tables_round_trip_through_files(
        a in estimates(), b in estimates(), truth in -1.0f64..1.0, reps in 1usize..500, frac in 0.0f64..=1.0
    ) {
        let converged = (reps as f64 * frac) as usize;
        let mut table = ResultTable::new();
        table.rows.push(row(
            EffectStats::from_estimates(&a, truth),
            EffectStats::from_estimates(&b, truth),
            reps,
            converged,
        ));
        table.rows.push(row(EffectStats::from_estimates(&a, truth), EffectStats::MISSING, reps, reps));
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        write_table(&table, &csv, TableFormat::Csv).unwrap();
        let back = read_table(&csv).unwrap();
        prop_assert!(back.approx_eq(&table, 1e-12));
        prop_assert!(back.rows.iter().all(|r| r.n_converged <= r.n_reps));
        let md = dir.path().join("t.md");
        write_table(&table, &md, TableFormat::Markdown).unwrap();
        let lines = std::fs::read_to_string(&md).unwrap().lines().count();
        prop_assert_eq!(lines, 2 + table.len());
    }
}
