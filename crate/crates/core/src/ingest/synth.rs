use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Features, MaterialRecord, Provenance, RecordSet};
use crate::crystal::{
    crystal_family_of, crystal_system_index, lattice_of, point_group_of, COMMON_SPACE_GROUPS,
    ELEMENTS,
};

/// Standard deviation (eV) of the Gaussian noise added to synthetic gaps.
pub const SYNTH_NOISE_SD: f64 = 0.05;

const AMU_PER_A3_TO_G_PER_CM3: f64 = 1.660_539;

/// Noise-free band gap law of the synthetic generator, before clamping:
///
/// `2.0 + 0.35·(s − 3) − 0.04·(v − 24) − 0.12·(ρ − 6) − 0.6·m`
///
/// where `s` is the crystal-system index (0 = triclinic … 6 = cubic) of the
/// relaxed space group, `v` the IUPAC valence electron count, `ρ` the density
/// in g/cm³ and `m` the cell magnetization in μB.
pub fn synthetic_band_gap(f: &Features) -> f64 {
    let system = crystal_system_index(f.spacegroup_relax).unwrap_or(0) as f64;
    2.0 + 0.35 * (system - 3.0) - 0.04 * (f.valence_cell_iupac as f64 - 24.0)
        - 0.12 * (f.density - 6.0)
        - 0.6 * f.spin_cell
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

/// Generates `n` valid records whose band gap is
/// `clamp(synthetic_band_gap(features) + N(0, 0.05²), 0, 5)`.
///
/// Output depends only on `n` and `seed`.
pub fn synth_generate(n: usize, seed: u64) -> RecordSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n).map(|_| generate_one(&mut rng)).collect();
    RecordSet::new(records, Provenance::Synthetic { n, seed })
}

fn generate_one(rng: &mut ChaCha8Rng) -> MaterialRecord {
    let n_species = *[1usize, 2, 2, 2, 3, 3, 3].choose(rng).unwrap();
    let mut elements: Vec<_> = ELEMENTS.choose_multiple(rng, n_species).copied().collect();
    elements.sort_by_key(|e| e.symbol);
    let mut composition: Vec<u32> = elements.iter().map(|_| rng.gen_range(1..=2)).collect();
    if n_species == 1 {
        composition[0] = rng.gen_range(1..=4);
    } else if rng.gen_bool(0.2) {
        let k = rng.gen_range(0..n_species);
        composition[k] += 1;
    }
    let atoms: usize = composition.iter().map(|&c| c as usize).sum();

    let compound: String = elements
        .iter()
        .zip(&composition)
        .map(|(e, c)| format!("{}{}", e.symbol, c))
        .collect();
    let valence: u32 = elements.iter().zip(&composition).map(|(e, &c)| e.valence * c).sum();

    let &(sg_number, sg_symbol) = COMMON_SPACE_GROUPS.choose(rng).unwrap();
    let pg = point_group_of(sg_number).expect("table space groups are valid");
    let system = pg.system;
    let (lattice_system, variation) = lattice_of(system, sg_symbol);

    let geometry = random_geometry(rng, variation, atoms);
    let mass: f64 = elements
        .iter()
        .zip(&composition)
        .map(|(e, &c)| e.mass * c as f64)
        .sum();
    let density = round_to(mass * AMU_PER_A3_TO_G_PER_CM3 / cell_volume(&geometry), 5);

    let mut positions = Vec::with_capacity(atoms);
    for i in 0..atoms {
        let p = if i == 0 {
            [0.0, 0.0, 0.0]
        } else if rng.gen_bool(0.6) {
            let special = [0.0, 0.25, 0.5, 0.75];
            [0, 1, 2].map(|_| *special.choose(rng).unwrap())
        } else {
            [0, 1, 2].map(|_| round_to(rng.gen_range(0.0..1.0), 3))
        };
        positions.push(p);
    }

    let magnetic = elements.iter().any(|e| e.magnetic) && rng.gen_bool(0.25);
    let mut spin_d = Vec::with_capacity(atoms);
    for (e, &c) in elements.iter().zip(&composition) {
        for _ in 0..c {
            let m = match (magnetic, e.magnetic) {
                (true, true) => rng.gen_range(0.3..2.5),
                (true, false) => rng.gen_range(0.0..0.06),
                _ => 0.0,
            };
            spin_d.push(round_to(m, 3));
        }
    }
    let spin_cell = round_to(spin_d.iter().sum::<f64>(), 3);
    let spin_atom = round_to(spin_cell / atoms as f64, 3);

    let sg_label = format!("{sg_symbol} #{sg_number}");
    let features = Features {
        compound,
        species: elements.iter().map(|e| e.symbol.to_string()).collect(),
        composition,
        density,
        valence_cell_iupac: valence,
        species_pp: elements.iter().map(|e| e.pseudopotential.to_string()).collect(),
        spin_d,
        spin_atom,
        spin_cell,
        crystal_class: pg.class_name.to_string(),
        crystal_family: crystal_family_of(system).to_string(),
        crystal_system: system.to_string(),
        positions_fractional: positions,
        geometry,
        lattice_system_relax: lattice_system.to_string(),
        lattice_variation_relax: variation.to_string(),
        spacegroup_relax: sg_number,
        sg: vec![sg_label.clone(); 3],
        sg2: vec![sg_label; 3],
        point_group_orbifold: pg.orbifold.to_string(),
        point_group_order: pg.order,
        point_group_structure: pg.structure.to_string(),
        point_group_type: pg.kind.to_string(),
    };
    let noise = Normal::new(0.0, SYNTH_NOISE_SD).unwrap().sample(rng);
    let band_gap = round_to((synthetic_band_gap(&features) + noise).clamp(0.0, 5.0), 4);
    MaterialRecord { features, band_gap }
}

fn cell_volume(g: &[f64; 6]) -> f64 {
    let [a, b, c, al, be, ga] = *g;
    let (ca, cb, cg) = (al.to_radians().cos(), be.to_radians().cos(), ga.to_radians().cos());
    a * b * c * (1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg).sqrt()
}

/// Cell parameters consistent with the lattice variation, scaled to roughly
/// 12–28 Å³ per atom.
fn random_geometry(rng: &mut ChaCha8Rng, variation: &str, atoms: usize) -> [f64; 6] {
    let r = |rng: &mut ChaCha8Rng| rng.gen_range(0.85..1.25);
    let (shape, angles) = match variation {
        "CUB" => ([1.0, 1.0, 1.0], [90.0, 90.0, 90.0]),
        "FCC" => ([1.0, 1.0, 1.0], [60.0, 60.0, 60.0]),
        "BCC" => ([1.0, 1.0, 1.0], [109.471, 109.471, 109.471]),
        "TET" | "BCT" => {
            let c = r(rng);
            ([1.0, 1.0, c], [90.0, 90.0, 90.0])
        }
        "ORCC" => {
            let c = r(rng);
            let g = round_to(rng.gen_range(95.0..120.0), 3);
            ([1.0, 1.0, c], [90.0, 90.0, g])
        }
        "ORC" | "ORCF" | "ORCI" => ([1.0, r(rng), r(rng)], [90.0, 90.0, 90.0]),
        "HEX" => ([1.0, 1.0, r(rng) * 1.4], [90.0, 90.0, 120.0]),
        "RHL" => {
            let a = round_to(rng.gen_range(45.0..80.0), 3);
            ([1.0, 1.0, 1.0], [a, a, a])
        }
        "MCL" => {
            let b = round_to(rng.gen_range(95.0..120.0), 3);
            ([1.0, r(rng), r(rng)], [90.0, b, 90.0])
        }
        "MCLC" => {
            let a = round_to(rng.gen_range(80.0..100.0), 3);
            let g = round_to(rng.gen_range(100.0..125.0), 3);
            ([1.0, 1.0, r(rng)], [a, a, g])
        }
        _ => {
            let angs = [0, 1, 2].map(|_| round_to(rng.gen_range(80.0..100.0), 3));
            ([1.0, r(rng), r(rng)], angs)
        }
    };
    let unit = [shape[0], shape[1], shape[2], angles[0], angles[1], angles[2]];
    let target = atoms as f64 * rng.gen_range(12.0..28.0);
    let scale = (target / cell_volume(&unit)).cbrt();
    [
        round_to(shape[0] * scale, 3),
        round_to(shape[1] * scale, 3),
        round_to(shape[2] * scale, 3),
        angles[0],
        angles[1],
        angles[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_records() {
        assert!(synth_generate(0, 5).is_empty());
    }

    #[test]
    fn records_are_valid_and_in_range() {
        let rs = synth_generate(500, 9);
        for r in &rs.records {
            r.validate().unwrap();
            assert!((0.0..=5.0).contains(&r.band_gap));
            assert_eq!(r.features.crystal_family, crystal_family_of(&r.features.crystal_system));
        }
    }

    #[test]
    fn deterministic_serialization() {
        let a = serde_json::to_string(&synth_generate(64, 7).records).unwrap();
        let b = serde_json::to_string(&synth_generate(64, 7).records).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaps_spread_over_range() {
        let gaps = synth_generate(2000, 3).band_gaps();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let zeros = gaps.iter().filter(|&&g| g == 0.0).count();
        assert!((1.0..4.0).contains(&mean), "mean {mean}");
        assert!(zeros < gaps.len() / 4, "{zeros} clamped to zero");
    }
}
