use gaptext::model::{attention, init_model, Flavor, Mat, ModelConfig, Pooling};
use gaptext::tokenizer::{build_vocab, encode, pad_batch, TokenSeq};
use gaptext::trainer::{grad_check, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape sum for the encoder: embeddings, blocks, final norm and head.
fn encoder_count(v: usize, m: usize, d: usize, l: usize, f: usize) -> usize {
    v * d + m * d + l * (4 * d * d + 2 * d * f + 9 * d + f) + 2 * d + d * d + 2 * d + 1
}

fn decoder_count(v: usize, d: usize, l: usize, f: usize) -> usize {
    v * d + l * (4 * d * d + 3 * d * f + 2 * d) + d + d * d + 2 * d + 1
}

fn toy_seqs(n: usize, max_len: usize) -> (gaptext::tokenizer::Vocab, Vec<TokenSeq>) {
    let texts: Vec<String> = (0..n)
        .map(|i| format!("density: {}.{} spin: {} class: c{}", i % 7, i * 3 % 10, i % 2, i % 3))
        .collect();
    let v = build_vocab(&texts, 40).unwrap();
    let seqs = texts.iter().map(|t| encode(&v, t, max_len)).collect();
    (v, seqs)
}

#[test]
fn parameter_count_matches_shape_sum() {
    let cfg = ModelConfig::toy(Flavor::Encoder, 100);
    let m = init_model(&cfg).unwrap();
    assert_eq!(m.count_params(false), encoder_count(100, 64, 32, 2, 64));
    assert_eq!(m.count_params(false), 23489);
    let cfg = ModelConfig::toy(Flavor::Decoder, 100);
    let m = init_model(&cfg).unwrap();
    assert_eq!(m.count_params(false), decoder_count(100, 32, 2, 64));
}

#[test]
fn same_seed_same_weights() {
    let cfg = ModelConfig::toy(Flavor::Decoder, 30);
    let a = init_model(&cfg).unwrap();
    let b = init_model(&cfg).unwrap();
    assert!(a.params.iter().zip(&b.params).all(|(x, y)| x.to_bits() == y.to_bits()));
    let c = init_model(&ModelConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn heads_must_divide_width() {
    let mut cfg = ModelConfig::toy(Flavor::Encoder, 30);
    cfg.d_model = 30;
    assert!(init_model(&cfg).is_err());
}

fn oracle_attention(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dk = q[0].len() as f64;
    let mut out = Vec::new();
    let mut weights = Vec::new();
    for qi in q {
        let scores: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt())
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let w: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        let o: Vec<f64> = (0..v[0].len())
            .map(|c| w.iter().zip(v).map(|(wj, vj)| wj * vj[c]).sum())
            .collect();
        out.push(o);
        weights.push(w);
    }
    (out, weights)
}

#[test]
fn attention_matches_straight_line_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rand_rows = || -> Vec<Vec<f64>> { (0..3).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
    let (q, k, v) = (rand_rows(), rand_rows(), rand_rows());
    let flat = |r: &Vec<Vec<f64>>| Mat::from_vec(3, 3, r.concat());
    let (out, w) = attention(&flat(&q), &flat(&k), &flat(&v), &[1, 1, 1], false).unwrap();
    let (eo, ew) = oracle_attention(&q, &k, &v);
    for i in 0..3 {
        for j in 0..3 {
            assert!((out.get(i, j) - eo[i][j]).abs() < 1e-6);
            assert!((w.get(i, j) - ew[i][j]).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_uniform_and_single_key() {
    let q = Mat::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]);
    let k = Mat::from_vec(4, 2, vec![0.0; 8]);
    let v = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
    let (_, w) = attention(&q, &k, &v, &[1, 1, 1, 0], false).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            assert!((w.get(i, j) - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(w.get(i, 3), 0.0);
    }
    let (o, w) = attention(&q, &k, &v, &[0, 0, 1, 0], false).unwrap();
    assert_eq!(w.get(0, 2), 1.0);
    assert_eq!(o.get(1, 0), 3.0);
}

#[test]
fn padding_does_not_change_predictions() {
    for flavor in [Flavor::Encoder, Flavor::Decoder] {
        let (v, seqs) = toy_seqs(4, 64);
        let m = init_model(&ModelConfig::toy(flavor, v.len())).unwrap();
        let plain = m.predict(&seqs).unwrap();
        let padded = m.predict(&pad_batch(&seqs)).unwrap();
        for (a, b) in plain.iter().zip(&padded) {
            assert!((a - b).abs() < 1e-12, "{flavor}: {a} vs {b}");
        }
    }
}

#[test]
fn identical_sequences_identical_predictions() {
    let (v, seqs) = toy_seqs(1, 64);
    let m = init_model(&ModelConfig::toy(Flavor::Encoder, v.len())).unwrap();
    let p = m.predict(&[seqs[0].clone(), seqs[0].clone()]).unwrap();
    assert_eq!(p[0].to_bits(), p[1].to_bits());
    assert!(m.predict(&[]).is_ok() && m.forward(&[]).is_err());
}

#[test]
fn attention_rows_are_distributions_and_causal() {
    let (v, seqs) = toy_seqs(2, 64);
    for flavor in [Flavor::Encoder, Flavor::Decoder] {
        let m = init_model(&ModelConfig::toy(flavor, v.len())).unwrap();
        for f in m.forward(&seqs).unwrap() {
            let a = &f.attention;
            for l in 1..=a.n_layers {
                for h in 0..a.n_heads {
                    for q in 0..a.len {
                        let s: f64 = a.row(l, h, q).iter().sum();
                        assert!((s - 1.0).abs() < 1e-6);
                        if flavor == Flavor::Decoder {
                            assert!(a.row(l, h, q)[q + 1..].iter().all(|&w| w == 0.0));
                        }
                    }
                }
            }
            assert_eq!(f.hidden.len(), 3);
        }
    }
}

#[test]
fn pooled_embedding_layers() {
    let (v, seqs) = toy_seqs(1, 64);
    let m = init_model(&ModelConfig::toy(Flavor::Encoder, v.len())).unwrap();
    let e0 = m.pooled_embedding(&seqs[0], 0, Pooling::FirstToken).unwrap();
    let tok = m.tensor("tok_embedding").unwrap();
    let pos = m.tensor("pos_embedding").unwrap();
    for j in 0..32 {
        assert_eq!(e0[j], tok[2 * 32 + j] + pos[j]);
    }
    let f = &m.forward(&seqs).unwrap()[0];
    let last = m.pooled_embedding(&seqs[0], 2, Pooling::FirstToken).unwrap();
    assert_eq!(last, f.hidden[2]);
    assert!(m.pooled_embedding(&seqs[0], 3, Pooling::FirstToken).is_err());
}

#[test]
fn truncated_suffix_does_not_matter() {
    let v = build_vocab(&["a b c d e f"], 20).unwrap();
    let s1 = encode(&v, "a b c d e", 4);
    let s2 = encode(&v, "a b c f f f", 4);
    let m = init_model(&ModelConfig::toy(Flavor::Decoder, v.len())).unwrap();
    for layer in 0..=2 {
        assert_eq!(
            m.pooled_embedding(&s1, layer, Pooling::LastToken).unwrap(),
            m.pooled_embedding(&s2, layer, Pooling::LastToken).unwrap()
        );
    }
}

fn grad_check_config(flavor: Flavor, vocab: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 12,
        max_len: 32,
        ..ModelConfig::toy(flavor, vocab)
    }
}

#[test]
fn gradients_match_central_differences() {
    let (v, seqs) = toy_seqs(3, 32);
    for flavor in [Flavor::Encoder, Flavor::Decoder] {
        let mut m = init_model(&grad_check_config(flavor, v.len())).unwrap();
        // Larger weights exercise the nonlinearities.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        m.params.iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));
        m.target_mean = 1.5;
        m.target_scale = 0.8;
        let data = Dataset::new(seqs.clone(), vec![0.5, 2.0, 3.1]).unwrap();
        let r = grad_check(&m, &data, 1e-5, 100, 1).unwrap();
        assert!(r.max_rel_err < 1e-4, "{flavor}: {:?}", r.groups);
    }
}
