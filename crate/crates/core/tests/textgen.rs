use gaptext::ingest::{load_records, synth_generate, Features, FEATURE_NAMES};
use gaptext::pipeline::load_descriptions;
use gaptext::textgen::{annotate_description, parse_structured_string, to_description, to_structured_string, TextFormat};
use gaptext::tokenizer::{build_vocab, encode};
use gaptext::Error;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

fn si_strings() -> Vec<String> {
    std::fs::read_to_string(format!("{DATA}/si_strings.txt"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect()
}

fn si_features() -> Vec<Features> {
    load_records(format!("{DATA}/si_records.jsonl"))
        .unwrap()
        .records
        .into_iter()
        .map(|r| r.features)
        .collect()
}

#[test]
fn structured_string_reproduces_listed_strings() {
    for (f, s) in si_features().iter().zip(si_strings()) {
        assert_eq!(to_structured_string(f).text, s);
    }
}

#[test]
fn cro3ta_prefix() {
    let t = to_structured_string(&si_features()[0]).text;
    assert!(t.starts_with(
        "compound: Cr1O3Ta1, species: ['Cr', 'O', 'Ta'], composition: [1, 3, 1], density: 7.274, "
    ));
}

#[test]
fn listed_strings_parse_to_listed_values() {
    let s = si_strings();
    let au = parse_structured_string(&s[2]).unwrap();
    assert_eq!(au.geometry, [5.563, 5.563, 5.638, 90.0, 90.0, 97.937]);
    assert_eq!(au.composition, [2, 2, 4]);
    assert_eq!(au.lattice_variation_relax, "ORCC");
    assert_eq!(au.sg, vec!["Cmcm #63"; 3]);
    let cr = parse_structured_string(&s[0]).unwrap();
    assert_eq!(cr.spin_d, [4.555, 0.016, 0.021, 0.008, 0.061]);
    assert_eq!(cr.spin_cell, 5.001);
    assert_eq!(cr.point_group_orbifold, "*432");
    let bi = parse_structured_string(&s[1]).unwrap();
    assert_eq!(bi.species_pp, ["Bi_d", "Dy_3", "Ni_pv"]);
    assert_eq!(bi.point_group_type, "none");
    let ag = parse_structured_string(&s[3]).unwrap();
    assert_eq!(ag.positions_fractional[3], [0.75, 0.75, 0.75]);
    assert_eq!(ag.density, 12.174);
}

#[test]
fn single_species_uses_list_form() {
    let mut f = synth_generate(1, 0).records[0].features.clone();
    f.compound = "Si2".into();
    f.species = vec!["Si".into()];
    f.composition = vec![2];
    f.species_pp = vec!["Si".into()];
    assert!(to_structured_string(&f).text.contains("species: ['Si'], composition: [2]"));
}

#[test]
fn structured_round_trip_over_synthetic_records() {
    for r in &synth_generate(300, 11).records {
        let back = parse_structured_string(&to_structured_string(&r.features).text).unwrap();
        assert!(back.approx_eq(&r.features, 1e-3), "{}", r.features.compound);
    }
}

#[test]
fn structured_spans_cover_clauses() {
    for r in &synth_generate(50, 12).records {
        let a = to_structured_string(&r.features);
        assert_eq!(a.format, TextFormat::Structured);
        let names: Vec<&str> = a.spans.iter().map(|s| s.feature.as_str()).collect();
        assert_eq!(names, FEATURE_NAMES);
        for w in a.spans.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
        for s in &a.spans {
            assert!(a.slice(s).starts_with(&format!("{}: ", s.feature)));
        }
    }
}

#[test]
fn parse_errors_carry_offsets() {
    let s = &si_strings()[0];
    let cut = &s[..s.find(", point_group_type").unwrap()];
    let e = parse_structured_string(cut).unwrap_err().to_string();
    assert!(e.contains("point_group_type"), "{e}");
    let bad = s.replace("density: 7.274", "density: dense");
    match parse_structured_string(&bad).unwrap_err() {
        Error::Parse { offset, .. } => assert_eq!(offset, s.find("7.274").unwrap()),
        e => panic!("unexpected {e}"),
    }
    assert!(matches!(
        parse_structured_string(&s.replace("composition: [1, 3, 1]", "composition: [1, 3")),
        Err(Error::Parse { .. })
    ));
    assert!(matches!(
        parse_structured_string(&s.replace("spin_atom", "spin_atoms")),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn description_mentions_values() {
    let bi = &si_features()[1];
    let d = to_description(bi);
    assert_eq!(d.format, TextFormat::Description);
    assert!(d.text.contains("density of 10.599 g/cm3"), "{}", d.text);
    assert!(d.text.contains("space group F-43m #216"), "{}", d.text);
    assert_eq!(d, to_description(bi));
}

#[test]
fn description_has_one_span_per_feature() {
    let mut recs = si_features();
    recs.extend(synth_generate(100, 13).records.into_iter().map(|r| r.features));
    for f in &recs {
        let d = to_description(f);
        let mut names: Vec<&str> = d.spans.iter().map(|s| s.feature.as_str()).collect();
        names.sort_unstable();
        let mut expected = FEATURE_NAMES.to_vec();
        expected.sort_unstable();
        assert_eq!(names, expected);
        for s in &d.spans {
            assert!(s.end > s.start);
        }
    }
}

#[test]
fn descriptions_fit_the_token_cap() {
    let mut recs = si_features();
    recs.extend(synth_generate(300, 14).records.into_iter().map(|r| r.features));
    let texts: Vec<String> = recs.iter().map(|f| to_description(f).text).collect();
    let v = build_vocab(&texts, 100_000).unwrap();
    for t in &texts {
        let ts = encode(&v, t, usize::MAX);
        assert!(ts.ids.len() <= 512, "{} tokens", ts.ids.len());
    }
}

#[test]
fn external_descriptions_are_annotated() {
    let text = std::fs::read_to_string(format!("{DATA}/si_descriptions.jsonl")).unwrap();
    let map = load_descriptions(&text).unwrap();
    let feats = si_features();
    let (cr, missing) = annotate_description(&feats[0], &map[&0]);
    assert_eq!(cr.format, TextFormat::Description);
    assert!(cr.spans.len() + missing.len() == FEATURE_NAMES.len());
    assert_eq!(cr.slice(cr.span("density").unwrap()), "7.27364");
    assert_eq!(cr.slice(cr.span("crystal_class").unwrap()), "hexoctahedral");
    assert_eq!(cr.slice(cr.span("spacegroup_relax").unwrap()), "221");
    // sg2 repeats sg and this text never mentions it twice
    assert!(missing.contains(&"sg2".to_string()), "{missing:?}");
    for (i, f) in feats.iter().enumerate() {
        let (a, missing) = annotate_description(f, &map[&i]);
        assert!(a.spans.len() >= 12, "record {i}: missing {missing:?}");
        for w in a.spans.iter().flat_map(|s| a.spans.iter().map(move |t| (s, t))) {
            if w.0.feature != w.1.feature {
                assert!(w.0.end <= w.1.start || w.1.end <= w.0.start, "{w:?}");
            }
        }
    }
}
