use fair_core::align::Scorer;
use fair_core::cda::{init_cda, Adapter, Cda};
use fair_core::embdata::{synth_generate, EmbeddingDataset, SynthSpec};
use fair_core::eval::{compare_scorers, evaluate, EvalError};
use fair_core::fixture::reference_fixture;
use fair_core::selftrain::crop_subsample;
use fair_core::seed::{derive, TAG_ZEROSHOT};
use fair_core::{Execution, Matrix, EPS};
use fair_testkit::oracle;
use fair_testkit::{to_rows, Rows};

fn separable() -> EmbeddingDataset {
    synth_generate(&SynthSpec {
        classes: 3,
        cluster_separation: 50.0,
        image_noise: 0.0,
        crop_noise: 0.0,
        description_noise: 0.0,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn perfect_run_has_diagonal_confusion() {
    let ds = separable();
    let m = evaluate(&ds, &init_cda(&ds.classes).unwrap(), &Adapter::fresh(ds.header.d), Execution::Parallel).unwrap();
    assert_eq!(m.top1, 1.0);
    for (j, row) in m.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<u64>(), row[j]);
    }
}

#[test]
fn permuted_anchors_permute_confusion_columns() {
    let ds = separable();
    let cda = init_cda(&ds.classes).unwrap();
    let sigma = [1, 2, 0];
    let rows: Vec<Vec<f64>> = (0..3).map(|j| cda.anchors.row(sigma[j]).to_vec()).collect();
    let permuted = Cda { anchors: Matrix::from_rows(&rows), class_names: cda.class_names.clone() };
    let adapter = Adapter::fresh(ds.header.d);
    let base = evaluate(&ds, &cda, &adapter, Execution::Parallel).unwrap();
    let m = evaluate(&ds, &permuted, &adapter, Execution::Parallel).unwrap();
    assert_eq!(m.top1, 0.0);
    // anchor row j now carries class sigma[j], so truth t lands in column sigma^-1(t)
    for t in 0..3 {
        let col = sigma.iter().position(|&s| s == t).unwrap();
        assert_eq!(m.confusion[t][col], base.confusion[t][t]);
    }
}

#[test]
fn evaluate_matches_counting_oracle() {
    let ds = synth_generate(&SynthSpec { classes: 5, images: 80, dim: 12, cluster_separation: 0.4, seed: 31, ..SynthSpec::default() }).unwrap();
    let cda = init_cda(&ds.classes).unwrap();
    let adapter = Adapter { scale: (0..12).map(|t| 0.5 + t as f64 / 12.0).collect(), shift: vec![0.05; 12] };
    let m = evaluate(&ds, &cda, &adapter, Execution::Parallel).unwrap();
    let anchors = to_rows(&cda.anchors);
    let mut correct = 0;
    let mut confusion = vec![vec![0u64; 5]; 5];
    for im in &ds.images {
        let u: Vec<f64> = (0..12).map(|t| adapter.scale[t] * im.f_global[t] + adapter.shift[t]).collect();
        let pred = oracle::argmax(&oracle::clip(&u, &anchors));
        let truth = im.label.unwrap();
        confusion[truth][pred] += 1;
        if pred == truth {
            correct += 1;
        }
    }
    assert_eq!(m.confusion, confusion);
    assert_eq!(m.top1, correct as f64 / 80.0);
}

#[test]
fn missing_labels_are_rejected() {
    let mut ds = separable();
    ds.images[3].label = None;
    let err = evaluate(&ds, &init_cda(&ds.classes).unwrap(), &Adapter::fresh(ds.header.d), Execution::Sequential).unwrap_err();
    assert_eq!(err, EvalError::MissingLabels(3));
}

#[test]
fn single_prompt_like_description_makes_clip_and_cupl_agree() {
    let mut ds = synth_generate(&SynthSpec { descriptions: 1, cluster_separation: 0.5, seed: 2, ..SynthSpec::default() }).unwrap();
    for c in &mut ds.classes {
        c.descriptions = Matrix::from_rows(&[c.prompt_embedding.clone()]);
    }
    let t = compare_scorers(&ds, &init_cda(&ds.classes).unwrap(), 2, 8, 0, Execution::Parallel).unwrap();
    assert_eq!(t.scorers[&Scorer::Clip], t.scorers[&Scorer::Cupl]);
}

#[test]
fn single_crop_makes_wca_and_las_agree() {
    let ds = synth_generate(&SynthSpec { descriptions: 1, cluster_separation: 0.5, seed: 6, ..SynthSpec::default() }).unwrap();
    let t = compare_scorers(&ds, &init_cda(&ds.classes).unwrap(), 1, 1, 4, Execution::Parallel).unwrap();
    assert_eq!(t.scorers[&Scorer::Wca], t.scorers[&Scorer::Las]);
}

/// All four zero-shot scorers reimplemented with plain loops.
fn naive_top1(ds: &EmbeddingDataset, k: usize, n_use: usize, seed: u64) -> [f64; 4] {
    let prompts: Rows = ds.classes.iter().map(|c| c.prompt_embedding.clone()).collect();
    let descs: Vec<Rows> = ds.classes.iter().map(|c| to_rows(&c.descriptions)).collect();
    let anchors: Rows = descs
        .iter()
        .map(|rows| {
            let mut mean = vec![0.0; ds.header.d];
            for r in rows {
                for t in 0..mean.len() {
                    mean[t] += r[t] / rows.len() as f64;
                }
            }
            mean
        })
        .collect();
    let mut correct = [0usize; 4];
    for (i, im) in ds.images.iter().enumerate() {
        let subset = crop_subsample(im.crops.rows(), n_use, derive(seed, &[TAG_ZEROSHOT, i as u64]));
        let crops: Rows = subset.iter().map(|&s| im.crops.row(s).to_vec()).collect();
        let cls: Rows = subset.iter().map(|&s| im.crop_cls.row(s).to_vec()).collect();
        let w = oracle::wca_crop_weights(&im.f_global, &crops);
        let fw = oracle::fair_weights(&im.g_global, &cls, EPS).unwrap_or(vec![1.0 / n_use as f64; n_use]);
        let sel = oracle::topk(&fw, k);
        let mut scores: [Vec<f64>; 4] = Default::default();
        for j in 0..ds.num_classes() {
            let v = oracle::wca_desc_weights(&prompts[j], &descs[j]);
            scores[0].push(oracle::cos(&im.f_global, &prompts[j]));
            scores[1].push(oracle::cupl(&im.f_global, &descs[j]));
            scores[2].push(oracle::wca(&crops, &descs[j], &w, &v));
        }
        scores[3] = oracle::las(&crops, &anchors, &fw, &sel);
        for s in 0..4 {
            if oracle::argmax(&scores[s]) == im.label.unwrap() {
                correct[s] += 1;
            }
        }
    }
    correct.map(|c| c as f64 / ds.images.len() as f64)
}

#[test]
fn reference_fixture_scorers_match_naive_reimplementation() {
    let ds = reference_fixture();
    let table = compare_scorers(&ds, &init_cda(&ds.classes).unwrap(), 4, 16, 0, Execution::Parallel).unwrap();
    let naive = naive_top1(&ds, 4, 16, 0);
    for (slot, scorer) in Scorer::ALL.iter().enumerate() {
        assert_eq!(table.scorers[scorer].top1, naive[slot], "{}", scorer.name());
    }
}

#[test]
fn scorer_table_is_deterministic_in_its_seed() {
    let ds = synth_generate(&SynthSpec { seed: 40, ..SynthSpec::default() }).unwrap();
    let cda = init_cda(&ds.classes).unwrap();
    let a = compare_scorers(&ds, &cda, 3, 10, 7, Execution::Parallel).unwrap();
    let b = compare_scorers(&ds, &cda, 3, 10, 7, Execution::Sequential).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert!(a.summary_csv().starts_with("scorer,top1,macro_accuracy\nCLIP,"));
}
