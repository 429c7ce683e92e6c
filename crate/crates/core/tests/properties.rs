use std::collections::BTreeMap;

use proptest::prelude::*;

use mirage_core::audit::{
    certify, default_epsilon, forgetting_gap, run_audit, AuditConfig, DiagnosticPair, LayerMap, ModelTriple, Tolerance,
};
use mirage_core::geometry::{linear_cka, separability};
use mirage_core::ingest::{
    generate_gaussian_mixture, read_embedding_set, split_forget, write_embedding_set, EmbeddingSet, ModelTag,
    SyntheticSpec,
};
use mirage_core::probe::{lpr, LinearObjective, ProbeConfig};
use mirage_core::sandbox::{softmax, train, Mlp, MlpSpec, TrainConfig, TrainedModel, VflSpec};
use mirage_core::stats::std_normal_cdf;
use mirage_core::{ForgetSpec, Matrix, Rng};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.normal()).unwrap()
}

fn orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i]).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn labelled(rows: usize, cols: usize, classes: u32, seed: u64) -> EmbeddingSet {
    let labels: Vec<u32> = (0..rows).map(|i| i as u32 % classes).collect();
    EmbeddingSet::new(gaussian(rows, cols, seed), labels, "penultimate", ModelTag::Other).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), n in 1usize..6, k in 1usize..6, m in 1usize..6, p in 1usize..6) {
        let a = gaussian(n, k, seed);
        let b = gaussian(k, m, seed ^ 1);
        let c = gaussian(m, p, seed ^ 2);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn centering_is_idempotent(seed in any::<u64>(), rows in 1usize..20, cols in 1usize..6) {
        let once = gaussian(rows, cols, seed).column_center();
        let twice = once.column_center();
        for (x, y) in once.data().iter().zip(twice.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn normal_cdf_is_symmetric(z in -6.0f64..6.0) {
        prop_assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn same_seed_same_draws(seed in any::<u64>()) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..10_000 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn mef_round_trip_is_lossless_at_f32(values in prop::collection::vec(-1e6f32..1e6, 1..60), cols in 1usize..4) {
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let data: Vec<f64> = values[..rows * cols].iter().map(|&v| v as f64).collect();
        let labels: Vec<u32> = (0..rows as u32).collect();
        let set = EmbeddingSet::new(Matrix::new(rows, cols, data).unwrap(), labels, "mid", ModelTag::Unlearned).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_embedding_set(&set, dir.path()).unwrap();
        let back = read_embedding_set(dir.path()).unwrap();
        prop_assert_eq!(back.features, set.features);
        prop_assert_eq!(back.labels, set.labels);
        prop_assert_eq!(back.layer_tag, set.layer_tag);
        prop_assert_eq!(back.model_tag, set.model_tag);
    }

    #[test]
    fn split_forget_keeps_every_row(rows in 2usize..80, classes in 2u32..5, pick in any::<u64>(), by_class in any::<bool>()) {
        let set = labelled(rows, 2, classes, pick);
        let spec = if by_class {
            ForgetSpec::classes([(pick % classes as u64) as u32])
        } else {
            let k = 1 + (pick as usize % (rows - 1));
            ForgetSpec::samples(Rng::new(pick).sample_indices(rows, k))
        };
        if let Ok((u, r)) = split_forget(&set, &spec) {
            prop_assert_eq!(u.len() + r.len(), rows);
            let mut all: Vec<Vec<u64>> = (0..u.len()).map(|i| u.features.row(i).iter().map(|v| v.to_bits()).collect())
                .chain((0..r.len()).map(|i| r.features.row(i).iter().map(|v| v.to_bits()).collect()))
                .collect();
            let mut orig: Vec<Vec<u64>> = (0..rows).map(|i| set.features.row(i).iter().map(|v| v.to_bits()).collect()).collect();
            all.sort();
            orig.sort();
            prop_assert_eq!(all, orig);
        }
    }

    #[test]
    fn mixture_is_seeded(seed in any::<u64>()) {
        let spec = SyntheticSpec { n_per_class: 20, n_classes: 3, dim: 4, class_mean_scale: 2.0, noise_sigma: 1.0, seed };
        let a = generate_gaussian_mixture(&spec).unwrap();
        let b = generate_gaussian_mixture(&spec).unwrap();
        prop_assert_eq!(a.features.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.features.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn cka_symmetry_and_invariances(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let x = gaussian(40, 5, seed);
        let y = gaussian(40, 3, seed ^ 7);
        let base = linear_cka(&x, &y, 5000, 0).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
        prop_assert!((linear_cka(&y, &x, 5000, 0).unwrap().value - base).abs() <= 1e-9);
        let rotated = x.matmul(&orthogonal(5, seed ^ 9)).unwrap();
        prop_assert!((linear_cka(&rotated, &y, 5000, 0).unwrap().value - base).abs() <= 1e-9);
        let scaled = x.scale(alpha).unwrap();
        prop_assert!((linear_cka(&scaled, &y, 5000, 0).unwrap().value - base).abs() <= 1e-9);
        prop_assert!((linear_cka(&x, &x, 5000, 0).unwrap().value - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn separability_rotation_and_scale(seed in any::<u64>(), alpha in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0]) {
        let u = gaussian(30, 4, seed).add_row_vector(&[1.0, 0.0, -1.0, 0.5]).unwrap();
        let r = gaussian(50, 4, seed ^ 3);
        let base = separability(&u, &r, 5).unwrap().score;
        let q = orthogonal(4, seed ^ 4);
        let rotated = separability(&u.matmul(&q).unwrap(), &r.matmul(&q).unwrap(), 5).unwrap().score;
        prop_assert!(close(rotated, base, 1e-9));
        let scaled = separability(&u.scale(alpha).unwrap(), &r.scale(alpha).unwrap(), 5).unwrap().score;
        prop_assert!(close(scaled, base, 1e-9));
    }

    #[test]
    fn certify_is_monotone_in_epsilon(u in 0.0f64..1.0, r in 0.0f64..1.0, eps in 0.0f64..0.5, grow in 0.0f64..0.5) {
        let pairs = [DiagnosticPair::new("lpr", u, r), DiagnosticPair::new("separability", u, r)];
        let tight: BTreeMap<String, Tolerance> = [
            ("lpr".to_string(), Tolerance::Absolute(eps)),
            ("separability".to_string(), Tolerance::Relative { relative: eps }),
        ].into();
        let loose: BTreeMap<String, Tolerance> = [
            ("lpr".to_string(), Tolerance::Absolute(eps + grow)),
            ("separability".to_string(), Tolerance::Relative { relative: eps + grow }),
        ].into();
        let a = certify(&pairs, &tight).unwrap();
        let b = certify(&pairs, &loose).unwrap();
        for (t, l) in a.verdicts.iter().zip(&b.verdicts) {
            prop_assert!(!t.passed || l.passed);
        }
        prop_assert!(!a.passed || b.passed);
    }

    #[test]
    fn softmax_is_normalized(z in prop::collection::vec(-500.0f64..500.0, 2..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lpr_is_a_probability(seed in any::<u64>(), shift in 0.0f64..3.0) {
        let base = labelled(60, 3, 2, seed);
        let f = Matrix::from_fn(60, 3, |i, j| base.features.get(i, j) + if base.labels[i] == 0 { shift } else { 0.0 }).unwrap();
        let set = EmbeddingSet::new(f, base.labels.clone(), "penultimate", ModelTag::Other).unwrap();
        let acc = lpr(&set, &ForgetSpec::classes([0]), &ProbeConfig { max_iters: 50, seed, ..Default::default() }).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn probe_loss_never_increases(seed in any::<u64>(), reg_c in 0.05f64..5.0) {
        let x = gaussian(30, 3, seed);
        let y: Vec<bool> = (0..30).map(|i| (i * 7 + seed as usize) % 3 == 0).collect();
        let obj = LinearObjective::new(&x, &y, reg_c);
        let step = 1.0 / obj.lipschitz_bound();
        let mut params = vec![0.0; obj.n_params()];
        let mut grad = vec![0.0; params.len()];
        let mut last = obj.loss_and_grad(&params, &mut grad);
        for _ in 0..100 {
            params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= step * g);
            let now = obj.loss_and_grad(&params, &mut grad);
            prop_assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn single_party_is_a_plain_mlp(seed in any::<u64>(), w1 in 1usize..6, w2 in 1usize..6, w3 in 1usize..6, top in 1usize..6) {
        let vfl = VflSpec::equal_split(4, 1, &[w1, w2, w3], &[top, 3]).unwrap();
        let plain = MlpSpec { layer_dims: vec![4, w1, w2, w3, top, 3] };
        let model = TrainedModel {
            params: vfl.init_params(&mut Rng::new(seed)),
            vfl,
            history: Vec::new(),
            config: TrainConfig::default(),
        };
        let mlp = Mlp::init(&plain, &mut Rng::new(seed)).unwrap();
        let x = gaussian(10, 4, seed ^ 5);
        let logits = model.logits(&x);
        for i in 0..10 {
            prop_assert_eq!(logits.row(i), &mlp.logits(x.row(i))[..]);
        }
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let data = generate_gaussian_mixture(&SyntheticSpec {
        n_per_class: 40,
        n_classes: 3,
        dim: 6,
        class_mean_scale: 3.0,
        noise_sigma: 1.0,
        seed: 2,
    })
    .unwrap();
    let vfl = VflSpec::equal_split(6, 2, &[6, 6, 4], &[6, 3]).unwrap();
    for seed in 0..3 {
        let cfg = TrainConfig { epochs: 5, seed, ..TrainConfig::default() };
        let a = train(&data, &vfl, &cfg).unwrap();
        let b = train(&data, &vfl, &cfg).unwrap();
        let bits = |m: &TrainedModel| m.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

fn layer_map(model: ModelTag, seed: u64, shift: f64) -> LayerMap {
    let rows = 120;
    let labels: Vec<u32> = (0..rows).map(|i| (i % 3) as u32).collect();
    let mut rng = Rng::new(seed);
    ["mid", "penultimate"]
        .iter()
        .map(|&tag| {
            let f = Matrix::from_fn(rows, 4, |i, j| {
                rng.normal() + if labels[i] == 0 && j == 0 { shift } else { 0.0 }
            })
            .unwrap();
            (tag.to_string(), EmbeddingSet::new(f, labels.clone(), tag, model).unwrap())
        })
        .collect()
}

#[test]
fn report_consistency_when_nothing_was_unlearned() {
    let original = layer_map(ModelTag::Original, 1, 3.0);
    let retrained = layer_map(ModelTag::Retrained, 2, 0.0);
    let triple = ModelTriple::new(original.clone(), original, retrained).unwrap();
    let spec = ForgetSpec::classes([0]);
    let config = AuditConfig { seeds: vec![0, 1, 2], ..AuditConfig::default() };
    let report = run_audit(&triple, &spec, &config).unwrap();
    assert!((report.cka_unlearned_vs_original - 1.0).abs() <= 1e-9);
    assert_eq!(report.delta_lpr, forgetting_gap(report.lpr_unlearned.mean, report.lpr_retrained.mean));
    assert_eq!(report.delta_lpr, report.lpr_original.mean - report.lpr_retrained.mean);
    assert!(!report.certification.passed);

    let again = run_audit(&triple, &spec, &config).unwrap();
    assert_eq!(report.canonical_json().unwrap(), again.canonical_json().unwrap());
    assert_eq!(report.config.epsilon, default_epsilon());
}
