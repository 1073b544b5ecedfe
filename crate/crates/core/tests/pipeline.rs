use mi_cluster::clustering::{ClustererSpec, Method};
use mi_cluster::engine::{Engine, EngineKind, EngineOptions};
use mi_cluster::gmm::{classify, em_fit, Constraint};
use mi_cluster::harness::experiment::{run_experiment, ExperimentSpec};
use mi_cluster::harness::sim::{mu_a, mu_b, mu_c, ModelId, SimModelSpec};
use mi_cluster::linalg::Matrix;
use mi_cluster::mechanisms::{ampute, Dataset, MechanismSpec};
use mi_cluster::pooling::{ari, choose_k, pool};
use mi_cluster::RngSeed;
use rand_distr::{Distribution, StandardNormal};

fn blobs(centres: &[Vec<f64>], per: usize, seed: u64) -> Dataset {
    let mut rng = RngSeed(seed).rng();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            rows.push(centre.iter().map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect());
            labels.push(c);
        }
    }
    Dataset::complete(Matrix::from_rows(&rows).unwrap())
        .unwrap()
        .with_ref_labels(mi_cluster::gmm::Partition::from_labels(labels))
        .unwrap()
}

#[test]
fn mixture_recovers_separated_components() {
    let spec = SimModelSpec {
        means: vec![mu_a(4.0), mu_b(4.0), mu_c(4.0)],
        delta: 4.0,
        ..SimModelSpec::new(ModelId::I)
    };
    let d = spec.generate(&mut RngSeed(31).rng()).unwrap();
    let params = em_fit(d.values(), 3, Constraint::Homo, &mut RngSeed(32).rng()).unwrap();
    let p = classify(&params, d.values()).unwrap();
    assert!(ari(&p, d.ref_labels().unwrap()).unwrap() > 0.95);
}

#[test]
fn every_engine_preserves_observed_cells() {
    let sim = SimModelSpec::new(ModelId::VII);
    let full = sim.generate(&mut RngSeed(40).rng()).unwrap();
    let data = ampute(&full, &MechanismSpec::mcar(0.25), &mut RngSeed(41).rng()).unwrap();
    let opts = EngineOptions {
        burn_in: Some(20),
        thin: Some(5),
        l: Some(10),
        predictors: None,
    };
    for kind in [
        EngineKind::JmGl,
        EngineKind::JmNorm,
        EngineKind::FcsHomo,
        EngineKind::FcsHetero,
        EngineKind::FcsNorm,
    ] {
        let k = if kind.uses_k() { 3 } else { 1 };
        let engine = Engine::new(kind, k, 3, &opts).unwrap();
        let res = engine.impute(&data, RngSeed(42)).unwrap();
        assert_eq!(res.completed.len(), 3);
        for c in &res.completed {
            for i in 0..data.n() {
                for j in 0..data.p() {
                    let v = c.get(i, j);
                    assert!(v.is_finite(), "{kind}");
                    if data.is_observed(i, j) {
                        assert_eq!(v.to_bits(), data.values().get(i, j).to_bits(), "{kind}");
                    }
                }
            }
        }
    }
}

#[test]
fn mechanisms_hit_their_rates() {
    let sim = SimModelSpec::new(ModelId::I);
    let full = sim.generate(&mut RngSeed(50).rng()).unwrap();
    for (i, spec) in [
        MechanismSpec::mcar(0.1),
        MechanismSpec::mcar(0.4),
        MechanismSpec::mar1(0.25),
        MechanismSpec::mar2(0.4),
    ]
    .into_iter()
    .enumerate()
    {
        let d = ampute(&full, &spec, &mut RngSeed(51 + i as u64).rng()).unwrap();
        let maskable = match spec.kind {
            mi_cluster::mechanisms::MechanismKind::Mcar => (d.n() * d.p()) as f64,
            mi_cluster::mechanisms::MechanismKind::Mar { .. } => (d.n() * (d.p() - 1)) as f64,
        };
        let rate = d.missing_count() as f64 / maskable;
        assert!((rate - spec.tau).abs() < 0.02, "{spec:?}: {rate}");
    }
}

#[test]
fn mar_on_the_last_column_concentrates_missingness_by_cluster() {
    let sim = SimModelSpec::new(ModelId::X);
    let full = sim.generate(&mut RngSeed(60).rng()).unwrap();
    let d = ampute(&full, &MechanismSpec::mar2(0.4), &mut RngSeed(61).rng()).unwrap();
    let truth = full.ref_labels().unwrap();
    let mut missing = [0.0; 3];
    let mut cells = vec![0.0; 3];
    for i in 0..d.n() {
        let w = truth.labels()[i];
        for j in 0..d.p() {
            cells[w] += 1.0;
            missing[w] += f64::from(u8::from(!d.is_observed(i, j)));
        }
    }
    let fractions: Vec<f64> = missing.iter().zip(&cells).map(|(m, c)| m / c).collect();
    let spread = fractions.iter().cloned().fold(f64::MIN, f64::max) - fractions.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 0.05, "{fractions:?}");
}

#[test]
fn three_blobs_choose_three() {
    let centres = vec![vec![0.0, 0.0, 0.0], vec![6.0, 0.0, 0.0], vec![0.0, 6.0, 0.0]];
    let d = blobs(&centres, 60, 70);
    let data = ampute(&d, &MechanismSpec::mcar(0.1), &mut RngSeed(71).rng()).unwrap().without_ref_labels();
    let engine = Engine::new(EngineKind::JmNorm, 1, 5, &EngineOptions::default()).unwrap();
    let spec = ClustererSpec::new(Method::Kmeans, 2);
    let res = choose_k(&data, &engine, &spec, 5, 10, RngSeed(72)).unwrap();
    assert_eq!(res.table.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    assert_eq!(res.best_k, 3, "{:?}", res.table);
}

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ModelId::VII, Some(MechanismSpec::mcar(0.25)), EngineKind::FcsHomo);
    spec.m = 3;
    spec.engine_options.l = Some(5);
    spec.replicates = 3;
    spec.seed = 81;
    spec.instability_rounds = 2;
    spec.report_single = true;
    spec
}

#[test]
fn experiments_are_reproducible() {
    let spec = small_spec();
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a, b);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
    assert_eq!(a.rows.len(), 6);
    assert!(a.rows.windows(2).all(|w| w[0].replicate <= w[1].replicate));
}

#[test]
fn replicates_do_not_depend_on_each_other() {
    let spec = small_spec();
    let all = run_experiment(&spec).unwrap();
    let mut one = spec.clone();
    one.replicates = 1;
    let first = run_experiment(&one).unwrap();
    assert_eq!(first.rows[..], all.rows[..2]);
}

#[test]
fn reference_labels_never_reach_imputation_or_clustering() {
    let sim = SimModelSpec::new(ModelId::VII);
    let full = sim.generate(&mut RngSeed(90).rng()).unwrap();
    let with = ampute(&full, &MechanismSpec::mcar(0.25), &mut RngSeed(91).rng()).unwrap();
    assert!(with.ref_labels().is_some());
    let without = with.clone().without_ref_labels();
    let engine = Engine::new(EngineKind::JmGl, 3, 3, &EngineOptions {
        burn_in: Some(10),
        thin: Some(2),
        ..Default::default()
    })
    .unwrap();
    let a = engine.impute(&with, RngSeed(92)).unwrap();
    let b = engine.impute(&without, RngSeed(92)).unwrap();
    assert_eq!(a, b);
    let spec = ClustererSpec::mixture(3, Constraint::Homo);
    let pa = pool(&a.completed, &spec, 0, RngSeed(93)).unwrap();
    let pb = pool(&b.completed, &spec, 0, RngSeed(93)).unwrap();
    assert_eq!(pa.partition, pb.partition);
}
