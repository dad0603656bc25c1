use crate::crystal::{crystal_classes, CRYSTAL_FAMILIES, CRYSTAL_SYSTEMS, POINT_GROUP_STRUCTURES, POINT_GROUP_TYPES};
use crate::ingest::Features;

const GEOMETRY: [&str; 6] = ["a", "b", "c", "alpha", "beta", "gamma"];
const STATS: [&str; 3] = ["len", "mean", "max"];

fn categories() -> [(&'static str, Vec<&'static str>); 5] {
    [
        ("crystal_system", CRYSTAL_SYSTEMS.to_vec()),
        ("crystal_family", CRYSTAL_FAMILIES.to_vec()),
        ("crystal_class", crystal_classes().collect()),
        ("point_group_type", POINT_GROUP_TYPES.to_vec()),
        ("point_group_structure", POINT_GROUP_STRUCTURES.to_vec()),
    ]
}

/// Slot names of [`featurize`] in order.
///
/// Scalars come first, then `geometry.*`, then `len`/`mean`/`max` of the
/// composition, magnetic moments and fractional coordinates, then one-hot
/// blocks `field=value` each closed by a `field=OTHER` slot.
pub fn feature_names() -> Vec<String> {
    let mut n: Vec<String> = [
        "density",
        "valence_cell_iupac",
        "spin_atom",
        "spin_cell",
        "spacegroup_relax",
        "point_group_order",
        "atom_count",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    n.extend(GEOMETRY.iter().map(|g| format!("geometry.{g}")));
    for list in ["composition", "spinD", "positions_fractional"] {
        n.extend(STATS.iter().map(|s| format!("{list}.{s}")));
    }
    for (field, values) in categories() {
        n.extend(values.iter().map(|v| format!("{field}={v}")));
        n.push(format!("{field}=OTHER"));
    }
    n
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_names().iter().position(|n| n == name)
}

fn stats(xs: impl Iterator<Item = f64>) -> [f64; 3] {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return [0.0; 3];
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    [v.len() as f64, mean, v.iter().copied().fold(f64::NEG_INFINITY, f64::max)]
}

/// Fixed-order numeric vector for the shallow baseline.
pub fn featurize(r: &Features) -> Vec<f64> {
    let mut x = vec![
        r.density,
        r.valence_cell_iupac as f64,
        r.spin_atom,
        r.spin_cell,
        r.spacegroup_relax as f64,
        r.point_group_order as f64,
        r.atom_count() as f64,
    ];
    x.extend_from_slice(&r.geometry);
    x.extend(stats(r.composition.iter().map(|&c| c as f64)));
    x.extend(stats(r.spin_d.iter().copied()));
    x.extend(stats(r.positions_fractional.iter().flatten().copied()));
    let fields = [
        &r.crystal_system,
        &r.crystal_family,
        &r.crystal_class,
        &r.point_group_type,
        &r.point_group_structure,
    ];
    for ((_, values), value) in categories().iter().zip(fields) {
        let hit = values.iter().position(|v| v == value);
        x.extend((0..values.len()).map(|i| if hit == Some(i) { 1.0 } else { 0.0 }));
        x.push(if hit.is_none() { 1.0 } else { 0.0 });
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_generate;

    #[test]
    fn names_match_vector_length() {
        let f = &synth_generate(1, 3).records[0].features;
        assert_eq!(featurize(f).len(), feature_names().len());
    }

    #[test]
    fn unseen_category_uses_other() {
        let mut f = synth_generate(1, 3).records[0].features.clone();
        f.crystal_system = "quasicrystal".into();
        let x = featurize(&f);
        assert_eq!(x[feature_index("crystal_system=OTHER").unwrap()], 1.0);
    }
}
