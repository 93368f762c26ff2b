use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qedacvc_core::corpus::{parse_tsv, ParallelCorpus, Split, SplitRatios};
use qedacvc_core::gates::{GateKind, GateSpec};
use qedacvc_core::layers::{attention_weights, qpool_layer, PoolParams};
use qedacvc_core::model::{AblationMode, Example, Model, ModelConfig, FIRST_TAG, PAD};
use qedacvc_core::{build_gate, StateVector};

fn gate_strategy(n: usize) -> impl Strategy<Value = GateSpec> {
    let kinds: Vec<GateKind> = GateKind::ALL.into_iter().filter(|k| k.n_wires() <= n).collect();
    (prop::sample::select(kinds), prop::collection::vec(-7.0..7.0f64, 3), 0..n, 0..n.max(2) - 1).prop_map(
        move |(kind, angles, a, b)| {
            let b = if b >= a { b + 1 } else { b };
            let wires = if kind.n_wires() == 1 { vec![a] } else { vec![a, b] };
            build_gate(kind, &angles[..kind.n_params()], &wires).unwrap()
        },
    )
}

fn tiny(mode: AblationMode) -> ModelConfig {
    ModelConfig {
        n_qubits: 4,
        conv_pool_stages: 1,
        seq_len: 6,
        dropout_rate: 0.0,
        ablation_mode: mode,
        vocab_size: 10,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_sequences_preserve_norm(gates in prop::collection::vec(gate_strategy(8), 1..500)) {
        let mut s = StateVector::new(8).unwrap();
        for g in &gates {
            s.apply(g).unwrap();
        }
        prop_assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pooling_halves_any_even_register(half in 1usize..=5, angles in prop::array::uniform3(-4.0..4.0f64)) {
        let s = StateVector::new(2 * half).unwrap();
        let pooled = qpool_layer(s, &PoolParams(angles)).unwrap();
        prop_assert_eq!(pooled.active_wires().len(), half);
        prop_assert!((pooled.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_distributions(
        q in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..6),
        k in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..6),
        mask_bits in prop::collection::vec(any::<bool>(), 6),
        causal in any::<bool>(),
        uniform in any::<bool>(),
    ) {
        let mut mask: Vec<bool> = mask_bits[..k.len()].to_vec();
        mask[0] = false;
        let w = attention_weights(&q, &k, &mask, causal, uniform).unwrap();
        for (t, row) in w.iter().enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (u, &x) in row.iter().enumerate() {
                prop_assert!(x >= 0.0);
                if mask[u] || (causal && u > t) {
                    prop_assert_eq!(x, 0.0);
                }
            }
        }
    }

    #[test]
    fn splits_partition_the_corpus(n in 1usize..60, seed in any::<u64>(), train in 0.0..1.0f64, frac in 0.0..1.0f64) {
        let test = (1.0 - train) * frac;
        let ratios = SplitRatios { train, test, validation: (1.0 - train - test).max(0.0) };
        let text: String = std::iter::once("#en\tde\n".to_string())
            .chain((0..n).map(|i| format!("s{i}\tt{i}\n")))
            .collect();
        let c = ParallelCorpus::from_pairs(parse_tsv(&text, None, None).unwrap(), ratios, seed).unwrap();
        let mut seen = BTreeSet::new();
        for split in [Split::Train, Split::Test, Split::Validation] {
            for p in c.get(split) {
                prop_assert!(seen.insert(p.source.clone()));
            }
        }
        prop_assert_eq!(seen.len(), n);
    }

    #[test]
    fn padding_does_not_change_translation(words in prop::collection::vec(5u32..10, 1..4), pads in 1usize..4, seed in 0u64..4) {
        let model = Model::new(tiny(AblationMode::O5)).unwrap();
        let p = model.init_params(seed);
        let mut padded = words.clone();
        padded.extend(std::iter::repeat_n(PAD, pads));
        prop_assert_eq!(
            model.translate(&p, &words, FIRST_TAG, 6).unwrap(),
            model.translate(&p, &padded, FIRST_TAG, 6).unwrap()
        );
    }
}

#[test]
fn zero_dropout_means_identical_training_and_inference_passes() {
    for mode in AblationMode::ALL {
        let model = Model::new(tiny(mode)).unwrap();
        let p = model.init_params(3);
        let batch = vec![Example::new(&[5, 6], &[7, 8], FIRST_TAG, 6), Example::new(&[9], &[5], FIRST_TAG, 6)];
        let masks = model.dropout_masks(&batch, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(masks.is_empty());
        let g = model.batch_grad(&p, &batch, &masks).unwrap();
        let (loss, n, _) = model.batch_loss(&p, &batch).unwrap();
        assert_eq!(n, g.n_tokens);
        assert!((loss - g.loss_sum).abs() < 1e-12);
    }
}
