use super::format::{format_list_number, format_scalar};
use super::{AnnotatedText, SpanBuilder, TextFormat};
use crate::ingest::Features;

/// "a", "a and b", "a, b and c"
fn join_words<S: AsRef<str>>(items: &[S]) -> String {
    match items {
        [] => String::new(),
        [one] => one.as_ref().to_string(),
        [init @ .., last] => {
            let head: Vec<&str> = init.iter().map(AsRef::as_ref).collect();
            format!("{} and {}", head.join(", "), last.as_ref())
        }
    }
}

fn distinct(items: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s.as_str()) {
            out.push(s);
        }
    }
    out
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

/// Renders a deterministic narrative description from a fixed sentence
/// template. Each of the 23 features is mentioned exactly once and its span
/// covers just the value mention.
pub fn to_description(r: &Features) -> AnnotatedText {
    let mut b = SpanBuilder::new();
    let composition: Vec<String> = r.composition.iter().map(u32::to_string).collect();

    b.push("The compound ");
    b.mark("compound", &r.compound);
    b.push(" is built from the species ");
    b.mark("species", &join_words(&r.species));
    b.push(" in the proportions ");
    b.mark("composition", &composition.join(":"));
    b.push(". It has a density of ");
    b.mark("density", &format_scalar(r.density));
    b.push(" g/cm3 and a valence of ");
    b.mark("valence_cell_iupac", &r.valence_cell_iupac.to_string());
    b.push(" according to the IUPAC system. The pseudopotentials used for the species are ");
    b.mark("species_pp", &join_words(&r.species_pp));
    b.push(".\n\nThe atomic magnetic moments are ");
    let moments: Vec<String> = r.spin_d.iter().map(|&m| format_list_number(m)).collect();
    b.mark("spinD", &join_words(&moments));
    b.push(", with a spin of ");
    b.mark("spin_atom", &format_scalar(r.spin_atom));
    b.push(" per atom and ");
    b.mark("spin_cell", &format_scalar(r.spin_cell));
    b.push(" for the whole cell. It belongs to the ");
    b.mark("crystal_system", &r.crystal_system);
    b.push(" crystal system within the ");
    b.mark("crystal_family", &r.crystal_family);
    b.push(" crystal family and has ");
    b.push(article(&r.crystal_class));
    b.push(" ");
    b.mark("crystal_class", &r.crystal_class);
    b.push(" crystal class.\n\nThe atoms sit at the fractional coordinates ");
    let coords: Vec<String> = r
        .positions_fractional
        .iter()
        .map(|p| {
            let c: Vec<String> = p.iter().map(|&x| format_list_number(x)).collect();
            format!("({})", c.join(", "))
        })
        .collect();
    b.mark("positions_fractional", &join_words(&coords));
    b.push(". The lattice parameters are ");
    let g: Vec<String> = r.geometry.iter().map(|&x| format_list_number(x)).collect();
    b.mark(
        "geometry",
        &format!(
            "a = {}, b = {}, c = {} Angstrom with angles of {}, {} and {} degrees",
            g[0], g[1], g[2], g[3], g[4], g[5]
        ),
    );
    b.push(". The relaxed lattice system is ");
    b.mark("lattice_system_relax", &r.lattice_system_relax);
    b.push(" with the lattice variation ");
    b.mark("lattice_variation_relax", &r.lattice_variation_relax);
    b.push(".\n\nThe relaxed structure crystallizes in space group number ");
    b.mark("spacegroup_relax", &r.spacegroup_relax.to_string());
    b.push(", the loose symmetry search gives space group ");
    b.mark("sg", &distinct(&r.sg).join(" then "));
    b.push(" and the tight search gives space group ");
    b.mark("sg2", &distinct(&r.sg2).join(" then "));
    b.push(". Its point group has the orbifold ");
    b.mark("point_group_orbifold", &r.point_group_orbifold);
    b.push(" and an order of ");
    b.mark("point_group_order", &r.point_group_order.to_string());
    b.push(", with ");
    b.push(article(&r.point_group_structure));
    b.push(" ");
    b.mark("point_group_structure", &r.point_group_structure);
    b.push(" structure and a point group type of ");
    b.mark("point_group_type", &r.point_group_type);
    b.push(".");

    let mut out = b.finish(TextFormat::Description);
    // Keep spans in canonical feature order for downstream consumers.
    out.spans.sort_by_key(|s| {
        crate::ingest::FEATURE_NAMES
            .iter()
            .position(|f| *f == s.feature)
            .unwrap_or(usize::MAX)
    });
    out
}
