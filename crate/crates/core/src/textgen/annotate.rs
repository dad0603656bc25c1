use super::{AnnotatedText, Span, TextFormat};
use crate::ingest::{Features, FEATURE_NAMES};

/// Maximum byte gap between consecutive items of a list mention.
const MAX_GAP: usize = 80;

enum Needle {
    Words(Vec<String>),
    Number(f64),
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

fn find_words(text: &str, lower: &str, alts: &[String], from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    for alt in alts {
        let needle = alt.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let mut start = from;
        while let Some(off) = lower.get(start..).and_then(|s| s.find(&needle)) {
            let s = start + off;
            let e = s + needle.len();
            let left_ok = s == 0 || !is_word_byte(bytes[s - 1]) || !is_word_byte(bytes[s]);
            let right_ok = e >= bytes.len() || !is_word_byte(bytes[e]) || !is_word_byte(bytes[e - 1]);
            if left_ok && right_ok {
                if best.map_or(true, |(bs, _)| s < bs) {
                    best = Some((s, e));
                }
                break;
            }
            start = s + 1;
        }
    }
    best
}

/// Next numeric literal at or after `from` that is a rounding of `x`.
fn find_number(text: &str, x: f64, from: usize) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        let starts_number = bytes[i].is_ascii_digit() && (i == 0 || !(bytes[i - 1].is_ascii_digit() || bytes[i - 1] == b'.'));
        if !starts_number {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
            j += 1;
        }
        let mut end = j;
        while end > i && bytes[end - 1] == b'.' {
            end -= 1;
        }
        let tok = &text[i..end];
        if let Ok(v) = tok.parse::<f64>() {
            let decimals = tok.find('.').map_or(0, |p| tok.len() - p - 1) as i32;
            let tol = (0.5 * 10f64.powi(-decimals)).max(5e-4) + 1e-12;
            if (v - x.abs()).abs() <= tol {
                return Some((i, end));
            }
        }
        i = j.max(i + 1);
    }
    None
}

fn find_needle(text: &str, lower: &str, n: &Needle, from: usize) -> Option<(usize, usize)> {
    match n {
        Needle::Words(alts) => find_words(text, lower, alts, from),
        Needle::Number(x) => find_number(text, *x, from),
    }
}

/// Finds the needles in order, each starting within [`MAX_GAP`] bytes of the
/// previous match, avoiding ranges already claimed by other features.
fn find_sequence(
    text: &str,
    lower: &str,
    needles: &[Needle],
    claimed: &[(usize, usize)],
) -> Option<(usize, usize)> {
    let overlaps = |s: usize, e: usize| claimed.iter().any(|&(cs, ce)| s < ce && cs < e);
    let mut from = 0;
    'outer: while let Some((s, mut e)) = find_needle(text, lower, &needles[0], from) {
        from = s + 1;
        if overlaps(s, e) {
            continue;
        }
        for n in &needles[1..] {
            match find_needle(text, lower, n, e) {
                Some((s2, e2)) if s2 - e <= MAX_GAP && !overlaps(s2, e2) => e = e2,
                _ => continue 'outer,
            }
        }
        return Some((s, e));
    }
    None
}

fn words(items: &[&str]) -> Needle {
    let mut alts: Vec<String> = Vec::new();
    for s in items {
        alts.push(s.to_string());
        if s.contains('_') {
            alts.push(s.replace('_', " "));
        }
    }
    Needle::Words(alts)
}

fn patterns(f: &Features) -> Vec<(&'static str, Vec<Needle>)> {
    let stripped: String = {
        // "Cr1O3Ta1" -> "CrO3Ta"
        let chars: Vec<char> = f.compound.chars().collect();
        let mut s = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let lone_one = c == '1'
                && i > 0
                && chars[i - 1].is_alphabetic()
                && chars.get(i + 1).map_or(true, |n| !n.is_ascii_digit());
            if !lone_one {
                s.push(c);
            }
        }
        s
    };
    let num = |x: f64| vec![Needle::Number(x)];
    let text_of = |s: &str| vec![words(&[s])];
    let sg: Vec<&str> = f.sg.iter().map(String::as_str).collect();
    let sg2: Vec<&str> = f.sg2.iter().map(String::as_str).collect();
    vec![
        ("compound", vec![words(&[&f.compound, &stripped])]),
        ("species", f.species.iter().map(|s| words(&[s])).collect()),
        ("composition", f.composition.iter().map(|&c| Needle::Number(c as f64)).collect()),
        ("density", num(f.density)),
        ("valence_cell_iupac", num(f.valence_cell_iupac as f64)),
        ("species_pp", f.species_pp.iter().map(|s| words(&[s])).collect()),
        ("spinD", f.spin_d.iter().map(|&m| Needle::Number(m)).collect()),
        ("spin_atom", num(f.spin_atom)),
        ("spin_cell", num(f.spin_cell)),
        ("crystal_class", text_of(&f.crystal_class)),
        ("crystal_family", text_of(&f.crystal_family)),
        ("crystal_system", text_of(&f.crystal_system)),
        (
            "positions_fractional",
            f.positions_fractional
                .iter()
                .flatten()
                .map(|&x| Needle::Number(x))
                .collect(),
        ),
        ("geometry", f.geometry.iter().map(|&x| Needle::Number(x)).collect()),
        ("lattice_system_relax", text_of(&f.lattice_system_relax)),
        ("lattice_variation_relax", text_of(&f.lattice_variation_relax)),
        ("spacegroup_relax", num(f.spacegroup_relax as f64)),
        ("sg", vec![words(&sg)]),
        ("sg2", vec![words(&sg2)]),
        ("point_group_orbifold", text_of(&f.point_group_orbifold)),
        ("point_group_order", num(f.point_group_order as f64)),
        ("point_group_structure", text_of(&f.point_group_structure)),
        ("point_group_type", text_of(&f.point_group_type)),
    ]
}

fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Locates feature mentions in an externally written description by
/// substring search.
///
/// List-valued features match when all items occur in order; failing that,
/// the first item alone is accepted. Returns the annotated text together with
/// the names of features that could not be located.
pub fn annotate_description(f: &Features, text: &str) -> (AnnotatedText, Vec<String>) {
    let lower = text.to_lowercase();
    // Lowercasing may change byte lengths outside ASCII; fall back to exact case.
    let lower = if lower.len() == text.len() { lower } else { text.to_string() };
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut spans = Vec::new();
    let mut missing = Vec::new();
    for (feature, needles) in patterns(f) {
        if needles.is_empty() {
            missing.push(feature.to_string());
            continue;
        }
        let found = find_sequence(text, &lower, &needles, &claimed)
            .or_else(|| find_sequence(text, &lower, &needles[..1], &claimed));
        match found {
            Some((s, e)) => {
                claimed.push((s, e));
                spans.push(Span {
                    feature: feature.to_string(),
                    start: char_offset(text, s),
                    end: char_offset(text, e),
                });
            }
            None => missing.push(feature.to_string()),
        }
    }
    spans.sort_by_key(|s| FEATURE_NAMES.iter().position(|f| *f == s.feature));
    (
        AnnotatedText {
            text: text.to_string(),
            spans,
            format: TextFormat::Description,
        },
        missing,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_generate;
    use crate::textgen::to_description;

    #[test]
    fn recovers_most_features_of_generated_description() {
        let f = &synth_generate(1, 21).records[0].features;
        let d = to_description(f);
        let (ann, missing) = annotate_description(f, &d.text);
        assert!(missing.len() <= 3, "missing {missing:?}");
        for s in &ann.spans {
            assert!(s.end > s.start);
        }
    }

    #[test]
    fn number_rounding_match() {
        let text = "with a density of 7.27364 g/cm3";
        assert!(find_number(text, 7.274, 0).is_some());
        assert!(find_number(text, 7.3, 0).is_none());
        assert_eq!(find_number("angles 90, 90", 90.0, 0), Some((7, 9)));
    }

    #[test]
    fn missing_feature_is_reported() {
        let f = &synth_generate(1, 21).records[0].features;
        let (_, missing) = annotate_description(f, "nothing relevant here");
        assert!(missing.contains(&"crystal_class".to_string()));
    }
}
