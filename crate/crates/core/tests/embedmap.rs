use gaptext::embedmap::{
    coords_to_csv, coords_to_svg, extract_embeddings, joint_probabilities, kl_divergence, perplexity_calibrate,
    squared_distances, trustworthiness, tsne, ColorBy, RowLabel, TsneConfig,
};
use gaptext::model::{init_model, Flavor, ModelConfig, Pooling};
use gaptext::tokenizer::{build_vocab, encode};
use gaptext::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entropy_bits(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Three well-separated Gaussian-ish blobs in 5 dimensions.
fn three_clusters(per: usize, spread: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [[0.0, 0.0, 0.0, 0.0, 0.0], [10.0, 0.0, -10.0, 0.0, 5.0], [0.0, 12.0, 0.0, -8.0, 0.0]];
    let mut data = Vec::new();
    let mut label = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            for x in center {
                data.push(x + rng.gen_range(-spread..=spread));
            }
            label.push(c);
        }
    }
    (data, label)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[test]
fn calibration_hits_target_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let n = rng.gen_range(8..40);
        let dim = rng.gen_range(1..6);
        let scale = [0.01, 1.0, 50.0][trial % 3];
        let data = random_points(&mut rng, n, dim, scale);
        let d2 = squared_distances(&data, n, dim);
        let perp = rng.gen_range(1.5..(n as f64 - 1.0) / 2.0);
        let p = perplexity_calibrate(&d2, n, perp).unwrap();
        for i in 0..n {
            let row = &p[i * n..(i + 1) * n];
            assert_eq!(row[i], 0.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h = entropy_bits(row);
            assert!((h - perp.log2()).abs() < 1e-4, "trial {trial} row {i}: H={h} target={}", perp.log2());
        }
    }
}

#[test]
fn closer_neighbors_get_more_mass() {
    let data = [0.0, 1.0, 2.0, 4.0, 8.0];
    let d2 = squared_distances(&data, 5, 1);
    let p = perplexity_calibrate(&d2, 5, 2.0).unwrap();
    assert!(p[1] > p[2] && p[2] > p[3] && p[3] > p[4]);
}

#[test]
fn joint_probabilities_are_symmetric_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 12;
    let data = random_points(&mut rng, n, 3, 1.0);
    let cond = perplexity_calibrate(&squared_distances(&data, n, 3), n, 3.0).unwrap();
    let p = joint_probabilities(&cond, n);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for i in 0..n {
        assert_eq!(p[i * n + i], 0.0);
        for j in 0..n {
            assert_eq!(p[i * n + j], p[j * n + i]);
        }
    }
}

#[test]
fn calibration_input_errors() {
    assert!(matches!(perplexity_calibrate(&[0.0], 1, 1.0), Err(Error::InvalidInput(_))));
    let asym = [0.0, 1.0, 2.0, 0.0];
    assert!(matches!(perplexity_calibrate(&asym, 2, 1.0), Err(Error::InvalidInput(_))));
    let diag = [1.0, 1.0, 1.0, 0.0];
    assert!(matches!(perplexity_calibrate(&diag, 2, 1.0), Err(Error::InvalidInput(_))));
    let ok = [0.0, 1.0, 1.0, 0.0];
    assert!(matches!(perplexity_calibrate(&ok, 2, 0.5), Err(Error::InvalidInput(_))));
}

#[test]
fn kl_of_matching_layout_is_zero() {
    let y = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
    let mut q = [0.0; 9];
    let mut z = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                q[i * 3 + j] = 1.0 / (1.0 + dist(y[i], y[j]).powi(2));
                z += q[i * 3 + j];
            }
        }
    }
    let p: Vec<f64> = q.iter().map(|v| v / z).collect();
    assert!(kl_divergence(&p, &y).abs() < 1e-12);
    let moved = [[0.0, 0.0], [5.0, 0.0], [0.0, 0.1]];
    assert!(kl_divergence(&p, &moved) > 0.01);
}

#[test]
fn kl_decreases_at_the_end_on_three_clusters() {
    let (data, _) = three_clusters(15, 1.0, 4);
    let cfg = TsneConfig {
        perplexity: 10.0,
        iterations: 1000,
        learning_rate: 25.0,
        seed: 3,
        ..TsneConfig::default()
    };
    let r = tsne(&data, 45, 5, &cfg).unwrap();
    assert_eq!(r.kl.len(), 1000);
    let tail = &r.kl[r.kl.len() - 51..];
    for w in tail.windows(2) {
        assert!(w[1] < w[0], "KL rose from {} to {}", w[0], w[1]);
    }
    assert!(r.kl[999] < r.kl[99]);
}

#[test]
fn duplicate_clusters_stay_together() {
    let mut data = Vec::new();
    let centers = [[0.0, 0.0, 0.0], [5.0, 5.0, 0.0], [0.0, 5.0, 5.0]];
    for c in &centers {
        for _ in 0..6 {
            data.extend_from_slice(c);
        }
    }
    let n = 18;
    let cfg = TsneConfig {
        perplexity: 5.5,
        iterations: 500,
        seed: 1,
        ..TsneConfig::default()
    };
    assert!(matches!(
        tsne(&data, n, 3, &TsneConfig { perplexity: 4.0, ..cfg.clone() }),
        Err(Error::PerplexityNotConverged { .. })
    ));
    let y = tsne(&data, n, 3, &cfg).unwrap().coords;
    let mut max_intra: f64 = 0.0;
    let mut min_inter = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(y[i], y[j]);
            if i / 6 == j / 6 {
                max_intra = max_intra.max(d);
            } else {
                min_inter = min_inter.min(d);
            }
        }
    }
    assert!(max_intra < min_inter, "intra {max_intra} inter {min_inter}");
}

#[test]
fn clusters_separate_and_are_trustworthy() {
    let (data, label) = three_clusters(12, 1.0, 8);
    let n = label.len();
    let cfg = TsneConfig {
        perplexity: 8.0,
        iterations: 600,
        seed: 5,
        ..TsneConfig::default()
    };
    let y = tsne(&data, n, 5, &cfg).unwrap().coords;
    for i in 0..n {
        let nearest = (0..n)
            .filter(|&j| j != i)
            .min_by(|&a, &b| dist(y[i], y[a]).total_cmp(&dist(y[i], y[b])))
            .unwrap();
        assert_eq!(label[nearest], label[i]);
    }
    let t = trustworthiness(&data, 5, &y, 5).unwrap();
    assert!(t > 0.9 && t <= 1.0, "{t}");
}

#[test]
fn tsne_is_seeded_and_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 16;
    let data = random_points(&mut rng, n, 4, 1.0);
    let cfg = TsneConfig {
        perplexity: 4.0,
        iterations: 200,
        seed: 2,
        ..TsneConfig::default()
    };
    let a = tsne(&data, n, 4, &cfg).unwrap();
    let b = tsne(&data, n, 4, &cfg).unwrap();
    assert_eq!(a, b);
    let perm: Vec<usize> = (0..n).rev().collect();
    let permuted: Vec<f64> = perm.iter().flat_map(|&i| data[i * 4..(i + 1) * 4].to_vec()).collect();
    let c = tsne(&permuted, n, 4, &cfg).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(c.coords[k], a.coords[i]);
    }
    assert_eq!(a.kl, c.kl);
    let d = tsne(&data, n, 4, &TsneConfig { seed: 3, ..cfg }).unwrap();
    assert_ne!(a.coords, d.coords);
}

#[test]
fn tsne_config_errors() {
    let data = vec![0.0; 20];
    for cfg in [
        TsneConfig { perplexity: 5.0, ..TsneConfig::default() },
        TsneConfig { perplexity: 0.5, ..TsneConfig::default() },
        TsneConfig { perplexity: 2.0, iterations: 0, ..TsneConfig::default() },
        TsneConfig { perplexity: 2.0, learning_rate: 0.0, ..TsneConfig::default() },
    ] {
        assert!(matches!(tsne(&data, 10, 2, &cfg), Err(Error::Config(_))), "{cfg:?}");
    }
    let cfg = TsneConfig { perplexity: 2.0, ..TsneConfig::default() };
    assert!(tsne(&data, 10, 3, &cfg).is_err());
    assert!(tsne(&data[..2], 1, 2, &cfg).is_err());
}

#[test]
fn trustworthiness_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 30;
    let high = random_points(&mut rng, n, 6, 1.0);
    let low: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let t = trustworthiness(&high, 6, &low, 4).unwrap();
    assert!((0.0..1.0).contains(&t));
    assert!(trustworthiness(&high, 6, &low, 15).is_err());
    assert!(trustworthiness(&high, 6, &low, 0).is_err());
}

fn labels(n: usize) -> Vec<RowLabel> {
    (0..n)
        .map(|i| RowLabel {
            id: format!("m{i}"),
            crystal_system: ["cubic", "hexagonal"][i % 2].into(),
            band_gap: i as f64 * 0.5,
        })
        .collect()
}

#[test]
fn embeddings_have_one_row_per_text() {
    let texts: Vec<String> = (0..6).map(|i| format!("class: c{i} density: {i}.5")).collect();
    let vocab = build_vocab(&texts, 40).unwrap();
    let m = init_model(&ModelConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        max_len: 24,
        ..ModelConfig::toy(Flavor::Encoder, vocab.len())
    })
    .unwrap();
    let seqs: Vec<_> = texts.iter().map(|t| encode(&vocab, t, 24)).collect();
    let e = extract_embeddings(&m, &seqs, &labels(6), 2, Pooling::FirstToken).unwrap();
    assert_eq!((e.n, e.dim, e.data.len()), (6, 8, 48));
    assert_eq!(e.row(3), m.pooled_embedding(&seqs[3], 2, Pooling::FirstToken).unwrap().as_slice());
    assert_ne!(e.row(0), e.row(1));
    assert!(extract_embeddings(&m, &seqs, &labels(5), 2, Pooling::FirstToken).is_err());
    assert!(extract_embeddings(&m, &[], &[], 2, Pooling::FirstToken).is_err());
    assert!(extract_embeddings(&m, &seqs, &labels(6), 3, Pooling::FirstToken).is_err());
}

#[test]
fn csv_and_svg_outputs() {
    let coords = [[0.5, -1.0], [2.0, 3.0]];
    let l = labels(2);
    assert_eq!(
        coords_to_csv(&coords, &l),
        "id,x,y,crystal_system,band_gap\nm0,0.5,-1,cubic,0\nm1,2,3,hexagonal,0.5\n"
    );
    for by in [ColorBy::CrystalSystem, ColorBy::BandGap] {
        let svg = coords_to_svg(&coords, &l, by);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
    assert_eq!("band_gap".parse::<ColorBy>().unwrap(), ColorBy::BandGap);
    assert!("spin".parse::<ColorBy>().is_err());
}
