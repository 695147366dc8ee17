use emoceps::cepstra::ContextRepresentation;
use emoceps::data::{batch_indices, split_train_test, CorpusEntry, Emotion, Intensity, Normalizer, SplitMode};
use emoceps::nn::attention::attention_pool;
use emoceps::nn::{softmax, EarlyStopping, Model, ModelSpec, Progress};
use emoceps::FeatureKind;
use ndarray::{s, Array1, Array2};
use proptest::prelude::*;
use std::collections::{BTreeMap, HashSet};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_simplex(z in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let p = softmax(Array1::from(z).view());
        prop_assert!(p.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn attention_weights_are_a_simplex_with_zero_padding(
        (len, h, wa, v) in (1usize..10, 1usize..5).prop_flat_map(|(len, w)| {
            (Just(len), matrix(12, w), matrix(w, w), matrix(w, 1))
        })
    ) {
        let (pooled, alpha) = attention_pool(h.view(), len, wa.view(), v.view()).unwrap();
        prop_assert!((alpha.sum() - 1.0).abs() < 1e-9);
        prop_assert!(alpha.iter().skip(len).all(|&a| a == 0.0));
        prop_assert_eq!(pooled.len(), h.ncols());
    }

    #[test]
    fn padded_frames_never_change_predictions(
        len in 1usize..15,
        arch in prop::sample::select(vec!["L(4)/A", "L(4)", "F(4)/F(4)"]),
        seed in any::<u64>(),
        (x, noise) in (matrix(20, 3), matrix(20, 3)),
    ) {
        let model = Model::new(ModelSpec::new(arch.parse().unwrap(), 3, 3), seed).unwrap();
        let p = model.predict_proba(x.view(), len).unwrap();
        let mut y = x.clone();
        y.slice_mut(s![len.., ..]).assign(&(&noise.slice(s![len.., ..]) * 50.0));
        prop_assert_eq!(model.predict_proba(y.view(), len).unwrap(), p);
    }

    #[test]
    fn early_stopping_bounds(stream in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let mut es = EarlyStopping::default();
        let mut last_improvement = None;
        let mut stopped_at = None;
        for (e, &m) in stream.iter().enumerate() {
            let progress = es.observe(e, m);
            if progress == Progress::Improved {
                last_improvement = Some(e);
            }
            prop_assert!(es.epochs_since_improve() <= 15);
            if progress == Progress::Stop {
                stopped_at = Some(e);
                break;
            }
        }
        if let Some(stop) = stopped_at {
            let expected = last_improvement.map_or(14, |i| i + 15);
            prop_assert_eq!(stop, expected);
        }
        prop_assert!(es.best_epoch().is_some());
    }

    #[test]
    fn batches_cover_every_sample_once(n in 1usize..500, bs in 1usize..80, seed in any::<u64>(), epoch in 0usize..5) {
        let batches = batch_indices(n, bs, seed, epoch, true);
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == bs));
        let seen: HashSet<usize> = batches.iter().flatten().copied().collect();
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn stratified_split_partitions(counts in prop::collection::vec(3usize..12, 15), seed in any::<u64>()) {
        let mut entries = Vec::new();
        let strata: Vec<(Emotion, Intensity)> = Emotion::ALL
            .iter()
            .flat_map(|&e| {
                let levels: &[Intensity] = if e == Emotion::Neutral { &[Intensity::Normal] } else { &[Intensity::Normal, Intensity::Strong] };
                levels.iter().map(move |&i| (e, i))
            })
            .collect();
        for (k, &(emotion, intensity)) in strata.iter().enumerate() {
            for j in 0..counts[k] {
                entries.push(CorpusEntry { path: format!("{k}-{j}.wav").into(), emotion, intensity, speaker: format!("s{}", j % 3) });
            }
        }
        let (train, test) = split_train_test(&entries, 0.75, seed, SplitMode::Stratified).unwrap();
        prop_assert_eq!(train.len() + test.len(), entries.len());
        let train_paths: HashSet<_> = train.iter().map(|e| &e.path).collect();
        prop_assert!(test.iter().all(|e| !train_paths.contains(&e.path)));
        let mut per: BTreeMap<(Emotion, Intensity), usize> = BTreeMap::new();
        for e in &train {
            *per.entry((e.emotion, e.intensity)).or_default() += 1;
        }
        for (k, s) in strata.iter().enumerate() {
            let expected = (0.75 * counts[k] as f64).round() as usize;
            prop_assert_eq!(per.get(s).copied().unwrap_or(0), expected);
        }
    }

    #[test]
    fn normalizer_standardizes(x in matrix(30, 4), shift in -50.0f64..50.0, scale in 0.1f64..20.0) {
        let frames = x.mapv(|v| v * scale + shift);
        let rep = ContextRepresentation { true_length: 30, frames: frames.clone(), kind: FeatureKind::Mfcc };
        let norm = Normalizer::fit([&rep]).unwrap();
        let mut y = frames;
        norm.apply_in_place(&mut y).unwrap();
        for col in y.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
