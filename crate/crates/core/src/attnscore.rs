//! Feature-wise attention attribution.
//!
//! For block `l` and sample `i`, with header position `h` (the pooling
//! token):
//!
//! 1. `s(t)` = mean over heads of the attention weight from `h` to `t`;
//! 2. `raw_f` = max of `s(t)` over the feature's inclusive token span;
//! 3. `norm_f` = `(raw_f - min) / (max - min)` over the sample's features,
//!    all zero (and the sample flagged degenerate) when `max == min`;
//! 4. the table value is the mean of `norm_f` over the samples containing `f`.

use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{AttentionTensor, Flavor, Pooling, RegressorModel};
use crate::textgen::{AnnotatedText, Span};
use crate::tokenizer::{char_span_to_token_span, encode, TokenSeq, Vocab};

/// Inclusive token range `(t_start, t_end)` for one feature.
pub type TokenSpan = (String, (usize, usize));

/// Mean over heads of the header row in block `layer` (1-indexed).
pub fn head_average(attn: &AttentionTensor, layer: usize, header_pos: usize) -> Vec<f64> {
    let mut s = vec![0.0; attn.len];
    for h in 0..attn.n_heads {
        for (acc, w) in s.iter_mut().zip(attn.row(layer, h, header_pos)) {
            *acc += w;
        }
    }
    let hcount = attn.n_heads as f64;
    s.iter_mut().for_each(|v| *v /= hcount);
    s
}

/// Maximum of `s` over each feature's inclusive span.
pub fn feature_span_max(s: &[f64], spans: &[TokenSpan]) -> Result<Vec<(String, f64)>> {
    if spans.is_empty() {
        return Err(Error::input("no feature spans"));
    }
    spans
        .iter()
        .map(|(f, (a, b))| {
            if a > b || *b >= s.len() {
                return Err(Error::input(format!("span ({a}, {b}) of `{f}` outside 0..{}", s.len())));
            }
            Ok((f.clone(), s[*a..=*b].iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        })
        .collect()
}

/// Min-max scaling to `[0, 1]`. Returns `true` as the second value when the
/// scores are all equal, in which case every output is zero.
pub fn minmax_normalize(raw: &[(String, f64)]) -> (Vec<(String, f64)>, bool) {
    let min = raw.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = raw.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !(max > min);
    let out = raw
        .iter()
        .map(|(f, v)| (f.clone(), if degenerate { 0.0 } else { (v - min) / (max - min) }))
        .collect();
    (out, degenerate)
}

/// Scores of one sample at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleScores {
    pub raw: Vec<(String, f64)>,
    pub normalized: Vec<(String, f64)>,
    pub degenerate: bool,
}

pub fn sample_scores(attn: &AttentionTensor, layer: usize, header_pos: usize, spans: &[TokenSpan]) -> Result<SampleScores> {
    let s = head_average(attn, layer, header_pos);
    let raw = feature_span_max(&s, spans)?;
    let (normalized, degenerate) = minmax_normalize(&raw);
    Ok(SampleScores {
        raw,
        normalized,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub feature: String,
    pub avg_attention: f64,
    /// Samples in which the feature survived truncation.
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAttentionTable {
    pub layer: usize,
    pub rows: Vec<FeatureRow>,
    pub n_samples: usize,
    pub n_degenerate: usize,
    /// Feature spans dropped because truncation removed them.
    pub n_excluded_spans: usize,
    /// Samples dropped because none of their spans survived.
    pub n_excluded_samples: usize,
}

impl FeatureAttentionTable {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.feature == feature).map(|r| r.avg_attention)
    }
}

/// Per-feature mean over samples; features appear in first-seen order and are
/// averaged over the samples that contain them.
pub fn average_over_samples(layer: usize, samples: &[SampleScores]) -> Result<FeatureAttentionTable> {
    if samples.is_empty() {
        return Err(Error::input("no samples to average"));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut sums: Vec<(String, f64, usize)> = Vec::new();
    for s in samples {
        for (f, v) in &s.normalized {
            let i = *index.entry(f.as_str()).or_insert_with(|| {
                sums.push((f.clone(), 0.0, 0));
                sums.len() - 1
            });
            sums[i].1 += v;
            sums[i].2 += 1;
        }
    }
    Ok(FeatureAttentionTable {
        layer,
        rows: sums
            .into_iter()
            .map(|(feature, sum, n)| FeatureRow {
                feature,
                avg_attention: sum / n as f64,
                n_samples: n,
            })
            .collect(),
        n_samples: samples.len(),
        n_degenerate: samples.iter().filter(|s| s.degenerate).count(),
        n_excluded_spans: 0,
        n_excluded_samples: 0,
    })
}

/// One sample ready for attribution: attention weights, header position and
/// surviving token spans.
#[derive(Debug, Clone)]
pub struct AttnInstance {
    pub attention: AttentionTensor,
    pub header_pos: usize,
    pub spans: Vec<TokenSpan>,
    pub excluded_spans: usize,
}

/// Runs the full attribution over instances for one layer. Instances with no
/// surviving spans are skipped and counted.
pub fn feature_attention_table(instances: &[AttnInstance], layer: usize) -> Result<FeatureAttentionTable> {
    let mut scores = Vec::with_capacity(instances.len());
    let mut excluded_samples = 0;
    for inst in instances {
        if inst.spans.is_empty() {
            excluded_samples += 1;
            continue;
        }
        scores.push(sample_scores(&inst.attention, layer, inst.header_pos, &inst.spans)?);
    }
    if scores.is_empty() {
        return Err(Error::input("every sample lost all of its feature spans"));
    }
    let mut t = average_over_samples(layer, &scores)?;
    t.n_excluded_spans = instances.iter().map(|i| i.excluded_spans).sum();
    t.n_excluded_samples = excluded_samples;
    Ok(t)
}

/// Maps character spans onto the token sequence. Returns the surviving
/// spans and the number lost to truncation.
pub fn token_spans(seq: &TokenSeq, spans: &[Span]) -> (Vec<TokenSpan>, usize) {
    let mut out = Vec::new();
    let mut lost = 0;
    for s in spans {
        match char_span_to_token_span(seq, s.start, s.end) {
            Some(r) => out.push((s.feature.clone(), r)),
            None => lost += 1,
        }
    }
    (out, lost)
}

/// Layer indices for `first` and `last`, or explicit numbers.
pub fn parse_layers(spec: &[String], n_layers: usize) -> Result<Vec<usize>> {
    spec.iter()
        .map(|s| {
            let l = match s.as_str() {
                "first" => 1,
                "last" => n_layers,
                n => n.parse().map_err(|_| Error::config(format!("bad layer `{n}`")))?,
            };
            if !(1..=n_layers).contains(&l) {
                return Err(Error::config(format!("layer {l} outside 1..={n_layers}")));
            }
            Ok(l)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AttentionReport {
    pub tables: Vec<FeatureAttentionTable>,
    pub warnings: Vec<String>,
}

/// Encodes each text, runs the model and aggregates the attribution for each
/// requested layer (1-indexed).
pub fn feature_attention_report(
    m: &RegressorModel,
    vocab: &Vocab,
    corpus: &[AnnotatedText],
    layers: &[usize],
) -> Result<AttentionReport> {
    if corpus.is_empty() {
        return Err(Error::input("empty corpus"));
    }
    let mut warnings = Vec::new();
    if m.config.flavor == Flavor::Decoder && m.config.pooling == Pooling::FirstToken {
        warnings.push(
            "first-token header under causal attention: the header row attends only to itself, so scores are degenerate"
                .to_string(),
        );
    }
    let seqs: Vec<TokenSeq> = corpus.iter().map(|a| encode(vocab, &a.text, m.config.max_len)).collect();
    let fw = m.forward(&seqs)?;
    let instances: Vec<AttnInstance> = fw
        .into_iter()
        .zip(&seqs)
        .zip(corpus)
        .map(|((f, seq), a)| {
            let (spans, excluded_spans) = token_spans(seq, &a.spans);
            AttnInstance {
                attention: f.attention,
                header_pos: m.pooling_position(seq, m.config.pooling),
                spans,
                excluded_spans,
            }
        })
        .collect();
    let tables = layers
        .iter()
        .map(|&l| {
            if !(1..=m.config.n_layers).contains(&l) {
                return Err(Error::input(format!("layer {l} outside 1..={}", m.config.n_layers)));
            }
            feature_attention_table(&instances, l)
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded: usize = tables.first().map_or(0, |t| t.n_excluded_samples);
    if excluded > 0 {
        warnings.push(format!("{excluded} samples had every feature span truncated away"));
    }
    Ok(AttentionReport { tables, warnings })
}

/// `layer,feature,avg_attention,n_samples,n_degenerate`
pub fn tables_to_csv(tables: &[FeatureAttentionTable]) -> String {
    let mut s = String::from("layer,feature,avg_attention,n_samples,n_degenerate\n");
    for t in tables {
        for r in &t.rows {
            let _ = writeln!(s, "{},{},{},{},{}", t.layer, r.feature, r.avg_attention, r.n_samples, t.n_degenerate);
        }
    }
    s
}

/// Grouped bar chart with one bar per layer for every feature.
pub fn tables_to_svg(tables: &[FeatureAttentionTable]) -> String {
    let labels: Vec<String> = tables
        .first()
        .map(|t| t.rows.iter().map(|r| r.feature.clone()).collect())
        .unwrap_or_default();
    let series: Vec<(String, Vec<f64>)> = tables
        .iter()
        .map(|t| {
            (
                format!("layer {}", t.layer),
                labels.iter().map(|f| t.get(f).unwrap_or(0.0)).collect(),
            )
        })
        .collect();
    crate::plot::bar_chart("Average normalized attention per feature", &labels, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(v: &[(&str, f64)]) -> Vec<(String, f64)> {
        v.iter().map(|(f, x)| (f.to_string(), *x)).collect()
    }

    #[test]
    fn span_max_and_normalize() {
        let s = [0.1, 0.4, 0.2, 0.3];
        let raw = feature_span_max(&s, &[("f".into(), (1, 3))]).unwrap();
        assert_eq!(raw[0].1, 0.4);
        let (n, deg) = minmax_normalize(&named(&[("a", 0.2), ("b", 0.5), ("c", 0.8)]));
        assert!(!deg);
        assert!((n[1].1 - 0.5).abs() < 1e-12 && n[0].1 == 0.0 && n[2].1 == 1.0);
        let (n, deg) = minmax_normalize(&named(&[("a", 0.3), ("b", 0.3)]));
        assert!(deg && n.iter().all(|x| x.1 == 0.0));
        assert!(feature_span_max(&s, &[]).is_err());
    }

    #[test]
    fn averages_over_present_samples() {
        let mk = |v: &[(&str, f64)]| SampleScores {
            raw: named(v),
            normalized: named(v),
            degenerate: false,
        };
        let t = average_over_samples(1, &[mk(&[("f", 0.0), ("g", 1.0)]), mk(&[("f", 1.0)])]).unwrap();
        assert_eq!(t.get("f"), Some(0.5));
        assert_eq!(t.rows[1].n_samples, 1);
    }

    #[test]
    fn layer_names() {
        let l = parse_layers(&["first".into(), "last".into()], 4).unwrap();
        assert_eq!(l, [1, 4]);
        assert!(parse_layers(&["0".into()], 4).is_err());
    }
}
