//! Invariant checks driven by a single seed, so the same property can run
//! under proptest and from the acceptance harness.

use fair_core::align::{
    clip_score, cupl_score, cupl_scores, fair_crop_weights, las_score, predict_label, select_topk, wca_crop_weights,
    wca_desc_weights, wca_score, AlignError, CropWeights, ScoreVector, Scorer,
};
use fair_core::cda::{init_cda, load_checkpoint, save_checkpoint, Adapter, Cda, Checkpoint};
use fair_core::embdata::{read_dataset, synth_generate, validate_dataset, write_dataset, ClassRecord, EmbeddingDataset};
use fair_core::eval::{compare_scorers, evaluate, Metrics};
use fair_core::linalg::softmax;
use fair_core::selftrain::{
    adaptive_weight, compute_loss, fairness_loss, pseudo_label_batch, train, TrainConfig, TrainerState,
};
use fair_core::seed::{derive, TAG_CROPS};
use fair_core::{Execution, Matrix, EPS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gen::{self, ScoreInstance};
use crate::oracle::{self, LossInstance};
use crate::{all_close, close, to_matrix, to_rows, Rows};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Every scorer's output on one instance: CLIP, CuPL, WCA, LAS.
fn all_scores(inst: &ScoreInstance, crops: &Rows, f: &[f64]) -> Result<Vec<ScoreVector>, AlignError> {
    let cm = to_matrix(crops);
    let desc: Vec<Matrix> = inst.descriptions.iter().map(to_matrix).collect();
    let clip = clip_score(f, &to_matrix(&inst.prompts))?;
    let cupl = cupl_scores(f, desc.iter())?;
    let w = wca_crop_weights(f, &cm)?;
    let mut wca = Vec::new();
    for (j, dm) in desc.iter().enumerate() {
        let v = wca_desc_weights(&inst.prompts[j], dm)?;
        wca.push(wca_score(&cm, dm, &w, &v)?);
    }
    let fw = match fair_crop_weights(&inst.g, &to_matrix(&inst.crop_cls)) {
        Err(AlignError::DegenerateWeights { .. }) => CropWeights::uniform(inst.n()),
        other => other?,
    };
    let las = las_score(&cm, &to_matrix(&inst.anchors), &fw, &select_topk(&fw, inst.k)?)?;
    Ok(vec![clip, cupl, ScoreVector { values: wca, scorer: Scorer::Wca }, las])
}

/// Every scorer and weight scheme against its naive-loop oracle at `tol`.
pub fn scores_match_oracles(inst: &ScoreInstance, tol: f64) -> Check {
    let cm = to_matrix(&inst.crops);
    let anchors = to_matrix(&inst.anchors);

    let clip = clip_score(&inst.f, &to_matrix(&inst.prompts)).map_err(s)?;
    ensure!(all_close(&clip.values, &oracle::clip(&inst.f, &inst.prompts), tol), "clip {:?}", clip.values);

    let w = wca_crop_weights(&inst.f, &cm).map_err(s)?;
    let w_ref = oracle::wca_crop_weights(&inst.f, &inst.crops);
    ensure!(all_close(&w.values, &w_ref, tol), "wca crop weights {:?} vs {w_ref:?}", w.values);

    for (j, desc) in inst.descriptions.iter().enumerate() {
        let dm = to_matrix(desc);
        let cupl = cupl_score(&inst.f, &dm).map_err(s)?;
        let cupl_ref = oracle::cupl(&inst.f, desc);
        ensure!(close(cupl, cupl_ref, tol), "cupl class {j}: {cupl} vs {cupl_ref}");

        let v = wca_desc_weights(&inst.prompts[j], &dm).map_err(s)?;
        let v_ref = oracle::wca_desc_weights(&inst.prompts[j], desc);
        ensure!(all_close(&v.values, &v_ref, tol), "wca desc weights class {j}");

        let wca = wca_score(&cm, &dm, &w, &v).map_err(s)?;
        let wca_ref = oracle::wca(&inst.crops, desc, &w_ref, &v_ref);
        ensure!(close(wca, wca_ref, tol), "wca class {j}: {wca} vs {wca_ref}");
    }

    let fw = fair_crop_weights(&inst.g, &to_matrix(&inst.crop_cls));
    let fw = match (fw, oracle::fair_weights(&inst.g, &inst.crop_cls, EPS)) {
        (Ok(fw), Some(fw_ref)) => {
            ensure!(all_close(&fw.values, &fw_ref, tol), "fair weights {:?} vs {fw_ref:?}", fw.values);
            fw
        }
        (Err(AlignError::DegenerateWeights { .. }), None) => CropWeights::uniform(inst.n()),
        (got, want) => return Err(format!("fair weights disagree on degeneracy: {got:?} vs {want:?}")),
    };

    let sel = select_topk(&fw, inst.k).map_err(s)?;
    let sel_ref = oracle::topk(&fw.values, inst.k);
    ensure!(sel.indices == sel_ref, "top-k {:?} vs {sel_ref:?}", sel.indices);

    let las = las_score(&cm, &anchors, &fw, &sel).map_err(s)?;
    let las_ref = oracle::las(&inst.crops, &inst.anchors, &fw.values, &sel_ref);
    ensure!(all_close(&las.values, &las_ref, tol), "las {:?} vs {las_ref:?}", las.values);
    ensure!(predict_label(&las) == oracle::argmax(&las_ref), "las label");
    Ok(())
}

pub fn oracle_equivalence(seed: u64) -> Check {
    scores_match_oracles(&gen::score_instance(&mut gen::rng(seed)), 1e-12)
}

/// γ ≥ 0 everywhere, zero on ties, positive otherwise; and a batch whose two
/// anchors coincide gets γ = 0 and the lower label.
pub fn gamma_nonnegative_zero_on_tie(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    for _ in 0..32 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let (s1, s2) = (a.max(b), a.min(b));
        let g = adaptive_weight(s1, s2);
        ensure!(g >= 0.0, "gamma({s1}, {s2}) = {g}");
        ensure!(adaptive_weight(s1, s1) == 0.0, "gamma on tie at {s1}");
        if s1 > s2 && s1 != 0.0 {
            ensure!(g > 0.0, "gamma({s1}, {s2}) = {g} without a tie");
        }
    }

    let ds = synth_generate(&gen::small_spec(&mut rng)).map_err(s)?;
    let mut cda = init_cda(&ds.classes).map_err(s)?;
    let first = cda.anchors.row(0).to_vec();
    cda.anchors.row_mut(1).copy_from_slice(&first);
    let state = TrainerState::new(cda, Adapter::fresh(ds.header.d));
    let cfg = small_cfg(&mut rng, ds.header.crops_per_image);
    let images: Vec<_> = ds.images.iter().collect();
    let keys: Vec<u64> = (0..images.len() as u64).collect();
    let plb = pseudo_label_batch(&state, &images, &keys, &cfg).map_err(s)?;
    for b in 0..plb.len() {
        if plb.labels[b] <= 1 {
            ensure!(plb.labels[b] == 0, "tie between classes 0 and 1 went to class 1");
            ensure!(plb.gamma[b] == 0.0, "tied top-2 with gamma {}", plb.gamma[b]);
        }
    }
    Ok(())
}

/// Softmax weights are positive, sum to one and ignore a constant shift in
/// the similarities.
pub fn wca_weights_simplex(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let inst = gen::score_instance(&mut rng);
    let w = wca_crop_weights(&inst.f, &to_matrix(&inst.crops)).map_err(s)?;
    ensure!(w.values.iter().all(|&x| x > 0.0), "non-positive crop weight");
    ensure!((w.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "crop weights sum");
    let shift: f64 = rng.random_range(-5.0..5.0);
    let sims: Vec<f64> = inst.crops.iter().map(|c| oracle::cos(&inst.f, c) + shift).collect();
    ensure!(all_close(&w.values, &softmax(&sims), 1e-12), "crop weights change under a shift of {shift}");
    for (j, desc) in inst.descriptions.iter().enumerate() {
        let v = wca_desc_weights(&inst.prompts[j], &to_matrix(desc)).map_err(s)?;
        ensure!(v.values.iter().all(|&x| x > 0.0), "non-positive description weight");
        ensure!((v.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "description weights sum");
    }
    Ok(())
}

/// CLS-normalized weights sum to one when defined and follow a permutation
/// of the crops.
pub fn fair_weights_sum_and_permute(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let inst = gen::score_instance(&mut rng);
    let w = match fair_crop_weights(&inst.g, &to_matrix(&inst.crop_cls)) {
        Ok(w) => w,
        Err(AlignError::DegenerateWeights { .. }) => return Ok(()),
        Err(e) => return Err(s(e)),
    };
    ensure!((w.values.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "sum {}", w.values.iter().sum::<f64>());
    let perm = gen::permutation(&mut rng, inst.n());
    let permuted: Rows = perm.iter().map(|&i| inst.crop_cls[i].clone()).collect();
    let wp = fair_crop_weights(&inst.g, &to_matrix(&permuted)).map_err(s)?;
    for (i, &src) in perm.iter().enumerate() {
        ensure!(close(wp.values[i], w.values[src], 1e-12), "weight of crop {src} moved to {i} changed");
    }
    Ok(())
}

/// Positive rescaling of any score vector keeps its label.
pub fn argmax_positive_scaling(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let inst = gen::score_instance(&mut rng);
    let a = 10f64.powf(rng.random_range(-3.0..3.0));
    for sv in all_scores(&inst, &inst.crops, &inst.f).map_err(s)? {
        let scaled = ScoreVector { values: sv.values.iter().map(|v| a * v).collect(), scorer: sv.scorer };
        ensure!(predict_label(&sv) == predict_label(&scaled), "{} label changes under scaling by {a}", sv.scorer.name());
    }
    Ok(())
}

/// With `k = N` the mask is all ones; with uniform weights LAS is the column
/// mean of the cross-alignment matrix.
pub fn las_full_selection(seed: u64) -> Check {
    let inst = gen::score_instance(&mut gen::rng(seed));
    let (cm, anchors) = (to_matrix(&inst.crops), to_matrix(&inst.anchors));
    let all: Vec<usize> = (0..inst.n()).collect();
    let uniform = CropWeights::uniform(inst.n());
    let sel = select_topk(&uniform, inst.n()).map_err(s)?;
    let mut sorted = sel.indices.clone();
    sorted.sort_unstable();
    ensure!(sorted == all, "k = N did not select every crop");
    let las = las_score(&cm, &anchors, &uniform, &sel).map_err(s)?;
    for j in 0..inst.c() {
        let mean = inst.crops.iter().map(|c| oracle::cos(c, &inst.anchors[j])).sum::<f64>() / inst.n() as f64;
        ensure!(close(las.values[j], mean, 1e-12), "class {j}: {} vs column mean {mean}", las.values[j]);
    }
    if let Ok(fw) = fair_crop_weights(&inst.g, &to_matrix(&inst.crop_cls)) {
        let las = las_score(&cm, &anchors, &fw, &select_topk(&fw, inst.n()).map_err(s)?).map_err(s)?;
        let full = oracle::las(&inst.crops, &inst.anchors, &fw.values, &all);
        ensure!(all_close(&las.values, &full, 1e-12), "k = N differs from the unmasked sum");
    }
    Ok(())
}

/// CuPL over a single description is CLIP against that description.
pub fn cupl_single_description(seed: u64) -> Check {
    let inst = gen::score_instance(&mut gen::rng(seed));
    for j in 0..inst.c() {
        let row = Matrix::from_rows(&[inst.descriptions[j][0].clone()]);
        let cupl = cupl_score(&inst.f, &row).map_err(s)?;
        let clip = clip_score(&inst.f, &row).map_err(s)?.values[0];
        ensure!(cupl == clip, "class {j}: cupl {cupl} vs clip {clip}");
    }
    Ok(())
}

/// A fresh adapter is the identity, so every score is unchanged bit for bit.
pub fn fresh_adapter_identity(seed: u64) -> Check {
    let inst = gen::score_instance(&mut gen::rng(seed));
    let adapter = Adapter::fresh(inst.f.len());
    let f = adapter.apply(&inst.f);
    let crops = to_rows(&adapter.apply_rows(&to_matrix(&inst.crops)));
    ensure!(f == inst.f && crops == inst.crops, "fresh adapter moved a feature");
    let before = all_scores(&inst, &inst.crops, &inst.f).map_err(s)?;
    let after = all_scores(&inst, &crops, &f).map_err(s)?;
    ensure!(before == after, "scores changed under the fresh adapter");
    Ok(())
}

/// Uniform positive rescaling of the adapter leaves cosine scores unchanged.
pub fn adapter_rescale_invariance(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let inst = gen::score_instance(&mut rng);
    let a = 10f64.powf(rng.random_range(-2.0..2.0));
    let adapter = Adapter { scale: vec![a; inst.f.len()], shift: vec![0.0; inst.f.len()] };
    let f = adapter.apply(&inst.f);
    let crops = to_rows(&adapter.apply_rows(&to_matrix(&inst.crops)));
    let before = all_scores(&inst, &inst.crops, &inst.f).map_err(s)?;
    let after = all_scores(&inst, &crops, &f).map_err(s)?;
    for (x, y) in before.iter().zip(&after) {
        ensure!(all_close(&x.values, &y.values, 1e-12), "{} scores changed under scale {a}", x.scorer.name());
        let (s1, s2) = x.top2();
        if s1 - s2 > 1e-9 {
            ensure!(predict_label(x) == predict_label(y), "{} label changed", x.scorer.name());
        }
    }
    Ok(())
}

/// Anchors do not depend on description order.
pub fn init_cda_order_free(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let inst = gen::score_instance(&mut rng);
    let classes: Vec<ClassRecord> = inst
        .descriptions
        .iter()
        .enumerate()
        .map(|(j, d)| ClassRecord { name: format!("c{j}"), descriptions: to_matrix(d), prompt_embedding: inst.prompts[j].clone() })
        .collect();
    let shuffled: Vec<ClassRecord> = classes
        .iter()
        .map(|c| {
            let rows = to_rows(&c.descriptions);
            let perm = gen::permutation(&mut rng, rows.len());
            let rows: Rows = perm.iter().map(|&i| rows[i].clone()).collect();
            ClassRecord { descriptions: to_matrix(&rows), ..c.clone() }
        })
        .collect();
    let a = init_cda(&classes).map_err(s)?;
    let b = init_cda(&shuffled).map_err(s)?;
    ensure!(all_close(a.anchors.as_slice(), b.anchors.as_slice(), 1e-12), "anchors depend on description order");
    Ok(())
}

/// `L_reg` equals `ln c` at uniform and grows under any perturbation that
/// stays on the simplex.
pub fn fairness_minimized_at_uniform(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let c = rng.random_range(2..=12);
    let uniform = vec![1.0 / c as f64; c];
    let at_uniform = fairness_loss(&uniform);
    ensure!(close(at_uniform, (c as f64).ln(), 1e-12), "L_reg(uniform) = {at_uniform}");
    let mut delta: Vec<f64> = gen::gaussian_vec(&mut rng, c);
    let mean = delta.iter().sum::<f64>() / c as f64;
    delta.iter_mut().for_each(|x| *x -= mean);
    let limit = delta.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let t = rng.random_range(0.0..0.99) / (c as f64 * limit);
    let p: Vec<f64> = uniform.iter().zip(&delta).map(|(u, d)| u + t * d).collect();
    ensure!(p.iter().all(|&x| x > 0.0), "perturbation left the simplex");
    let perturbed = fairness_loss(&p);
    ensure!(perturbed >= at_uniform - 1e-12, "L_reg {perturbed} below ln c = {at_uniform}");
    Ok(())
}

fn small_cfg(rng: &mut ChaCha8Rng, crops: usize) -> TrainConfig {
    let n_use = rng.random_range(1..=crops);
    TrainConfig {
        n_use,
        k: rng.random_range(1..=n_use),
        batch_size: rng.random_range(1..=8),
        epochs: 2,
        learning_rate: 1e-2,
        seed: rng.random(),
        ..TrainConfig::default()
    }
}

fn oracle_instance(state: &TrainerState, strong: &Matrix, labels: &[usize], gamma: &[f64], cfg: &TrainConfig) -> LossInstance {
    LossInstance {
        anchors: to_rows(&state.cda.anchors),
        scale: state.adapter.scale.clone(),
        shift: state.adapter.shift.clone(),
        strong: to_rows(strong),
        labels: labels.to_vec(),
        gamma: gamma.to_vec(),
        logit_scale: cfg.logit_scale,
        ema: None,
        raw_dot: false,
    }
}

/// Switching the confidence weight off gives γ = 1 and the plain
/// cross-entropy.
pub fn unweighted_ablation(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let ds = synth_generate(&gen::small_spec(&mut rng)).map_err(s)?;
    let cfg = TrainConfig { pl_weight_on: false, logit_scale: rng.random_range(1.0..100.0), ..small_cfg(&mut rng, ds.header.crops_per_image) };
    let state = TrainerState::new(init_cda(&ds.classes).map_err(s)?, Adapter::fresh(ds.header.d));
    let images: Vec<_> = ds.images.iter().collect();
    let keys: Vec<u64> = (0..images.len() as u64).map(|i| derive(cfg.seed, &[TAG_CROPS, 1, i])).collect();
    let plb = pseudo_label_batch(&state, &images, &keys, &cfg).map_err(s)?;
    ensure!(plb.gamma.iter().all(|&g| g == 1.0), "gamma not forced to 1");
    let strong = Matrix::from_rows(&ds.images.iter().map(|im| im.strong.row(0).to_vec()).collect::<Vec<_>>());
    let out = compute_loss(&state, &plb, &strong, &cfg).map_err(s)?;
    let (l_st, l_reg) = oracle::loss(&oracle_instance(&state, &strong, &plb.labels, &vec![1.0; plb.len()], &cfg));
    ensure!(close(out.l_st, l_st, 1e-10) && close(out.l_reg, l_reg, 1e-10), "loss {} / {} vs oracle {l_st} / {l_reg}", out.l_st, out.l_reg);
    Ok(())
}

/// Rescaling the CLS inputs by positive factors changes neither the crop
/// weights nor the pseudo-labels.
pub fn pseudo_labels_cls_rescale(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let mut ds = synth_generate(&gen::small_spec(&mut rng)).map_err(s)?;
    let cfg = small_cfg(&mut rng, ds.header.crops_per_image);
    let state = TrainerState::new(init_cda(&ds.classes).map_err(s)?, Adapter::fresh(ds.header.d));
    let keys: Vec<u64> = (0..ds.images.len() as u64).collect();
    let before = pseudo_label_batch(&state, &ds.images.iter().collect::<Vec<_>>(), &keys, &cfg).map_err(s)?;
    for im in &mut ds.images {
        let a = rng.random_range(0.1..10.0);
        let b = rng.random_range(0.1..10.0);
        im.g_global.iter_mut().for_each(|x| *x *= a);
        im.crop_cls.as_mut_slice().iter_mut().for_each(|x| *x *= b);
    }
    let after = pseudo_label_batch(&state, &ds.images.iter().collect::<Vec<_>>(), &keys, &cfg).map_err(s)?;
    ensure!(before.labels == after.labels, "labels changed under CLS rescaling");
    for (x, y) in before.scores.iter().zip(&after.scores) {
        ensure!(all_close(x, y, 1e-12), "scores changed under CLS rescaling");
    }
    Ok(())
}

/// With the fixed classifier and a fresh adapter, labeling is stationary even
/// while the trainable anchors move.
pub fn fixed_classifier_stationary(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let ds = synth_generate(&gen::small_spec(&mut rng)).map_err(s)?;
    let cfg = TrainConfig { las_on: false, ..small_cfg(&mut rng, ds.header.crops_per_image) };
    let mut state = TrainerState::new(init_cda(&ds.classes).map_err(s)?, Adapter::fresh(ds.header.d));
    let images: Vec<_> = ds.images.iter().collect();
    let keys: Vec<u64> = (0..images.len() as u64).map(|i| derive(cfg.seed, &[i])).collect();
    let first = pseudo_label_batch(&state, &images, &keys, &cfg).map_err(s)?;
    let second = pseudo_label_batch(&state, &images, &keys, &cfg).map_err(s)?;
    ensure!(first == second, "repeated labeling differs");
    let (c, d) = (state.cda.num_classes(), state.cda.dim());
    state.cda.anchors = to_matrix(&gen::gaussian_rows(&mut rng, c, d));
    let moved = pseudo_label_batch(&state, &images, &keys, &cfg).map_err(s)?;
    ensure!(first == moved, "fixed-classifier labels follow the trainable anchors");
    Ok(())
}

pub fn dataset_round_trip(seed: u64) -> Check {
    let ds = gen::dataset(&mut gen::rng(seed));
    let mut bytes = Vec::new();
    write_dataset(&ds, &mut bytes).map_err(s)?;
    let back = read_dataset(bytes.as_slice()).map_err(s)?;
    ensure!(back == ds, "read(write(ds)) != ds");
    let mut again = Vec::new();
    write_dataset(&back, &mut again).map_err(s)?;
    ensure!(again == bytes, "write(read(bytes)) != bytes");
    Ok(())
}

pub fn checkpoint_round_trip(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let c = rng.random_range(2..=6);
    let d = rng.random_range(1..=8);
    let cda = Cda { anchors: to_matrix(&gen::gaussian_rows(&mut rng, c, d)), class_names: (0..c).map(|j| format!("k{j}")).collect() };
    let adapter = Adapter { scale: gen::gaussian_vec(&mut rng, d), shift: gen::gaussian_vec(&mut rng, d) };
    let ck = Checkpoint::new(&cda, &adapter, rng.random_range(0..100), format!("{:016x}", rng.random::<u64>()));
    let mut bytes = Vec::new();
    save_checkpoint(&ck, &mut bytes).map_err(s)?;
    ensure!(load_checkpoint(bytes.as_slice()).map_err(s)? == ck, "checkpoint round trip");
    Ok(())
}

/// Synthetic datasets are valid and a pure function of their spec.
pub fn synth_valid_and_pure(seed: u64) -> Check {
    let spec = gen::small_spec(&mut gen::rng(seed));
    let a = synth_generate(&spec).map_err(s)?;
    let violations = validate_dataset(&a);
    ensure!(violations.is_empty(), "{spec:?}: {violations:?}");
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_dataset(&a, &mut x).map_err(s)?;
    write_dataset(&synth_generate(&spec).map_err(s)?, &mut y).map_err(s)?;
    ensure!(x == y, "same spec produced different bytes");
    Ok(())
}

/// Confusion rows sum to the support and its trace gives top-1.
pub fn metrics_consistent(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let c = rng.random_range(2..=6);
    let n = rng.random_range(1..=40);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let m = Metrics::from_predictions(&pred, &truth, c).map_err(s)?;
    let trace: u64 = (0..c).map(|j| m.confusion[j][j]).sum();
    ensure!(m.top1 == trace as f64 / m.support.iter().sum::<u64>() as f64, "top1 != trace / support");
    for j in 0..c {
        ensure!(m.confusion[j].iter().sum::<u64>() == m.support[j], "row {j} sum != support");
    }
    let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
    ensure!(m.top1 == correct as f64 / n as f64, "top1 disagrees with direct count");
    Ok(())
}

fn labeled(rng: &mut ChaCha8Rng) -> Result<EmbeddingDataset, String> {
    synth_generate(&gen::small_spec(rng)).map_err(s)
}

/// Shuffling the images leaves the metrics unchanged.
pub fn evaluate_image_order(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let ds = labeled(&mut rng)?;
    let cda = init_cda(&ds.classes).map_err(s)?;
    let adapter = Adapter { scale: (0..ds.header.d).map(|_| rng.random_range(0.5..1.5)).collect(), shift: vec![0.01; ds.header.d] };
    let a = evaluate(&ds, &cda, &adapter, Execution::Sequential).map_err(s)?;
    let mut shuffled = ds.clone();
    let perm = gen::permutation(&mut rng, ds.images.len());
    shuffled.images = perm.iter().map(|&i| ds.images[i].clone()).collect();
    let b = evaluate(&shuffled, &cda, &adapter, Execution::Sequential).map_err(s)?;
    ensure!(a == b, "metrics depend on image order");
    Ok(())
}

/// The CLIP column of the scorer table is `evaluate` with prompt anchors.
pub fn clip_column_is_prompt_evaluate(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let ds = labeled(&mut rng)?;
    let cda = init_cda(&ds.classes).map_err(s)?;
    let n_use = rng.random_range(1..=ds.header.crops_per_image);
    let k = rng.random_range(1..=n_use);
    let table = compare_scorers(&ds, &cda, k, n_use, rng.random(), Execution::Sequential).map_err(s)?;
    let prompts = Cda { anchors: ds.prompt_matrix(), class_names: ds.class_names() };
    let direct = evaluate(&ds, &prompts, &Adapter::fresh(ds.header.d), Execution::Sequential).map_err(s)?;
    ensure!(table.scorers[&Scorer::Clip] == direct, "CLIP column differs from evaluate with prompt anchors");
    Ok(())
}

/// Training is a function of (data, config, seed) only: repeated and
/// differently scheduled runs agree bit for bit.
pub fn training_deterministic(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let ds = labeled(&mut rng)?;
    let cfg = small_cfg(&mut rng, ds.header.crops_per_image);
    let a = train(&ds, None, &TrainConfig { execution: Execution::Parallel, ..cfg.clone() }).map_err(s)?;
    let b = train(&ds, None, &TrainConfig { execution: Execution::Parallel, ..cfg.clone() }).map_err(s)?;
    let c = train(&ds, None, &TrainConfig { execution: Execution::Sequential, ..cfg }).map_err(s)?;
    ensure!(a == b, "two runs with one seed differ");
    ensure!(a == c, "sequential and parallel runs differ");
    Ok(())
}

/// Finite differences agree with the analytic gradients.
pub fn gradients_match_fd(seed: u64) -> Check {
    let mut rng = gen::rng(seed);
    let scale = [1.0, 10.0, 100.0][rng.random_range(0..3)];
    let inst = gen::loss_instance(&mut rng, 3, 5, 4, scale);
    let errors = crate::fd::check(&inst, 1e-5).map_err(s)?;
    let w = crate::fd::worst(&errors);
    ensure!(w.rel < 1e-4, "{} relative error {:.3e} at logit scale {scale}", w.block, w.rel);
    Ok(())
}

pub type Property = (&'static str, fn(u64) -> Check);

/// The invariant suite, in the order it is reported.
pub const ALL: &[Property] = &[
    ("gamma >= 0 and zero on ties", gamma_nonnegative_zero_on_tie),
    ("wca weights positive, sum 1, shift invariant", wca_weights_simplex),
    ("fair weights sum 1 and permute with crops", fair_weights_sum_and_permute),
    ("labels invariant under positive score scaling", argmax_positive_scaling),
    ("las with k = N collapses to the full sum", las_full_selection),
    ("cupl with M = 1 equals clip", cupl_single_description),
    ("fresh adapter is the identity on all scores", fresh_adapter_identity),
    ("uniform adapter rescale keeps cosine scores", adapter_rescale_invariance),
    ("init_cda ignores description order", init_cda_order_free),
    ("L_reg minimized at uniform with value ln c", fairness_minimized_at_uniform),
    ("pl weight off equals gamma = 1 cross-entropy", unweighted_ablation),
    ("pseudo-labels invariant under CLS rescaling", pseudo_labels_cls_rescale),
    ("fixed classifier labels are stationary", fixed_classifier_stationary),
    ("dataset format round-trips bit-exactly", dataset_round_trip),
    ("checkpoint format round-trips bit-exactly", checkpoint_round_trip),
    ("synthetic data valid and pure in its spec", synth_valid_and_pure),
    ("confusion trace and support match top-1", metrics_consistent),
    ("evaluate ignores image order", evaluate_image_order),
    ("clip column equals evaluate on prompts", clip_column_is_prompt_evaluate),
    ("training deterministic across runs and workers", training_deterministic),
    ("analytic gradients match finite differences", gradients_match_fd),
    ("scores match brute-force oracles", oracle_equivalence),
];
