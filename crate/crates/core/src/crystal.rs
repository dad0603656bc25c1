//! Static crystallographic lookup tables.
//!
//! Used by the synthetic record generator and as the frozen category lists of
//! the random-forest featurizer.

/// The seven crystal systems, ordered by increasing symmetry.
pub const CRYSTAL_SYSTEMS: [&str; 7] = [
    "triclinic",
    "monoclinic",
    "orthorhombic",
    "tetragonal",
    "trigonal",
    "hexagonal",
    "cubic",
];

pub const CRYSTAL_FAMILIES: [&str; 6] = [
    "triclinic",
    "monoclinic",
    "orthorhombic",
    "tetragonal",
    "hexagonal",
    "cubic",
];

pub const POINT_GROUP_TYPES: [&str; 3] = ["centrosymmetric", "enantiomorphic", "none"];

pub const POINT_GROUP_STRUCTURES: [&str; 9] = [
    "trivial",
    "cyclic",
    "dihedral",
    "alternating",
    "symmetric",
    "2_x_cyclic",
    "2_x_dihedral",
    "2_x_alternating",
    "2_x_symmetric",
];

/// One of the 32 crystallographic point groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointGroup {
    pub hermann_mauguin: &'static str,
    pub class_name: &'static str,
    pub system: &'static str,
    pub orbifold: &'static str,
    pub order: u32,
    pub structure: &'static str,
    pub kind: &'static str,
    /// Inclusive range of space-group numbers belonging to this point group.
    pub space_groups: (u32, u32),
}

const fn pg(
    hermann_mauguin: &'static str,
    class_name: &'static str,
    system: &'static str,
    orbifold: &'static str,
    order: u32,
    structure: &'static str,
    kind: &'static str,
    space_groups: (u32, u32),
) -> PointGroup {
    PointGroup {
        hermann_mauguin,
        class_name,
        system,
        orbifold,
        order,
        structure,
        kind,
        space_groups,
    }
}

pub const POINT_GROUPS: [PointGroup; 32] = [
    pg("1", "pedial", "triclinic", "1", 1, "trivial", "enantiomorphic", (1, 1)),
    pg("-1", "pinacoidal", "triclinic", "x", 2, "cyclic", "centrosymmetric", (2, 2)),
    pg("2", "sphenoidal", "monoclinic", "22", 2, "cyclic", "enantiomorphic", (3, 5)),
    pg("m", "domatic", "monoclinic", "*", 2, "cyclic", "none", (6, 9)),
    pg("2/m", "prismatic", "monoclinic", "2*", 4, "2_x_cyclic", "centrosymmetric", (10, 15)),
    pg("222", "rhombic-disphenoidal", "orthorhombic", "222", 4, "dihedral", "enantiomorphic", (16, 24)),
    pg("mm2", "rhombic-pyramidal", "orthorhombic", "*22", 4, "dihedral", "none", (25, 46)),
    pg("mmm", "orthorhombic-bipyramidal", "orthorhombic", "*222", 8, "2_x_dihedral", "centrosymmetric", (47, 74)),
    pg("4", "tetragonal-pyramidal", "tetragonal", "44", 4, "cyclic", "enantiomorphic", (75, 80)),
    pg("-4", "tetragonal-disphenoidal", "tetragonal", "2x", 4, "cyclic", "none", (81, 82)),
    pg("4/m", "tetragonal-dipyramidal", "tetragonal", "4*", 8, "2_x_cyclic", "centrosymmetric", (83, 88)),
    pg("422", "tetragonal-trapezoidal", "tetragonal", "224", 8, "dihedral", "enantiomorphic", (89, 98)),
    pg("4mm", "ditetragonal-pyramidal", "tetragonal", "*44", 8, "dihedral", "none", (99, 110)),
    pg("-42m", "tetragonal-scalenoidal", "tetragonal", "2*2", 8, "dihedral", "none", (111, 122)),
    pg("4/mmm", "ditetragonal-dipyramidal", "tetragonal", "*224", 16, "2_x_dihedral", "centrosymmetric", (123, 142)),
    pg("3", "trigonal-pyramidal", "trigonal", "33", 3, "cyclic", "enantiomorphic", (143, 146)),
    pg("-3", "rhombohedral", "trigonal", "3x", 6, "2_x_cyclic", "centrosymmetric", (147, 148)),
    pg("32", "trigonal-trapezoidal", "trigonal", "223", 6, "dihedral", "enantiomorphic", (149, 155)),
    pg("3m", "ditrigonal-pyramidal", "trigonal", "*33", 6, "dihedral", "none", (156, 161)),
    pg("-3m", "ditrigonal-scalahedral", "trigonal", "2*3", 12, "2_x_dihedral", "centrosymmetric", (162, 167)),
    pg("6", "hexagonal-pyramidal", "hexagonal", "66", 6, "cyclic", "enantiomorphic", (168, 173)),
    pg("-6", "trigonal-dipyramidal", "hexagonal", "3*", 6, "cyclic", "none", (174, 174)),
    pg("6/m", "hexagonal-dipyramidal", "hexagonal", "6*", 12, "2_x_cyclic", "centrosymmetric", (175, 176)),
    pg("622", "hexagonal-trapezoidal", "hexagonal", "226", 12, "dihedral", "enantiomorphic", (177, 182)),
    pg("6mm", "dihexagonal-pyramidal", "hexagonal", "*66", 12, "dihedral", "none", (183, 186)),
    pg("-6m2", "ditrigonal-dipyramidal", "hexagonal", "*223", 12, "dihedral", "none", (187, 190)),
    pg("6/mmm", "dihexagonal-dipyramidal", "hexagonal", "*226", 24, "2_x_dihedral", "centrosymmetric", (191, 194)),
    pg("23", "tetartoidal", "cubic", "332", 12, "alternating", "enantiomorphic", (195, 199)),
    pg("m-3", "diploidal", "cubic", "3*2", 24, "2_x_alternating", "centrosymmetric", (200, 206)),
    pg("432", "gyroidal", "cubic", "432", 24, "symmetric", "enantiomorphic", (207, 214)),
    pg("-43m", "tetrahedral", "cubic", "*332", 24, "symmetric", "none", (215, 220)),
    pg("m-3m", "hexoctahedral", "cubic", "*432", 48, "2_x_symmetric", "centrosymmetric", (221, 230)),
];

/// Crystal class names in [`POINT_GROUPS`] order.
pub fn crystal_classes() -> impl Iterator<Item = &'static str> {
    POINT_GROUPS.iter().map(|p| p.class_name)
}

/// Point group of a space-group number in `1..=230`.
pub fn point_group_of(space_group: u32) -> Option<&'static PointGroup> {
    POINT_GROUPS
        .iter()
        .find(|p| (p.space_groups.0..=p.space_groups.1).contains(&space_group))
}

/// Index into [`CRYSTAL_SYSTEMS`] of a space-group number.
pub fn crystal_system_index(space_group: u32) -> Option<usize> {
    let system = point_group_of(space_group)?.system;
    CRYSTAL_SYSTEMS.iter().position(|s| *s == system)
}

pub fn crystal_family_of(system: &str) -> &'static str {
    match system {
        "trigonal" | "hexagonal" => "hexagonal",
        "triclinic" => "triclinic",
        "monoclinic" => "monoclinic",
        "orthorhombic" => "orthorhombic",
        "tetragonal" => "tetragonal",
        _ => "cubic",
    }
}

/// A subset of common space groups with their short Hermann–Mauguin symbols.
pub const COMMON_SPACE_GROUPS: [(u32, &str); 32] = [
    (1, "P1"),
    (2, "P-1"),
    (4, "P2_1"),
    (8, "Cm"),
    (12, "C2/m"),
    (14, "P2_1/c"),
    (19, "P2_12_12_1"),
    (36, "Cmc2_1"),
    (62, "Pnma"),
    (63, "Cmcm"),
    (65, "Cmmm"),
    (71, "Immm"),
    (82, "I-4"),
    (88, "I4_1/a"),
    (123, "P4/mmm"),
    (129, "P4/nmm"),
    (139, "I4/mmm"),
    (148, "R-3"),
    (160, "R3m"),
    (164, "P-3m1"),
    (166, "R-3m"),
    (186, "P6_3mc"),
    (187, "P-6m2"),
    (191, "P6/mmm"),
    (194, "P6_3/mmc"),
    (198, "P2_13"),
    (205, "Pa-3"),
    (216, "F-43m"),
    (221, "Pm-3m"),
    (225, "Fm-3m"),
    (227, "Fd-3m"),
    (229, "Im-3m"),
];

/// Lattice system and lattice variation label from the crystal system and
/// the centering letter of the space-group symbol.
pub fn lattice_of(system: &str, symbol: &str) -> (&'static str, &'static str) {
    let centering = symbol.chars().next().unwrap_or('P');
    match system {
        "triclinic" => ("triclinic", "TRI"),
        "monoclinic" => ("monoclinic", if centering == 'C' { "MCLC" } else { "MCL" }),
        "orthorhombic" => (
            "orthorhombic",
            match centering {
                'F' => "ORCF",
                'I' => "ORCI",
                'C' | 'A' => "ORCC",
                _ => "ORC",
            },
        ),
        "tetragonal" => ("tetragonal", if centering == 'I' { "BCT" } else { "TET" }),
        "trigonal" if centering == 'R' => ("rhombohedral", "RHL"),
        "trigonal" | "hexagonal" => ("hexagonal", "HEX"),
        _ => (
            "cubic",
            match centering {
                'F' => "FCC",
                'I' => "BCC",
                _ => "CUB",
            },
        ),
    }
}

/// Element data: symbol, valence electron count, pseudopotential label,
/// atomic mass (u), and whether the element commonly carries a moment.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub symbol: &'static str,
    pub valence: u32,
    pub pseudopotential: &'static str,
    pub mass: f64,
    pub magnetic: bool,
}

const fn el(symbol: &'static str, valence: u32, pseudopotential: &'static str, mass: f64, magnetic: bool) -> Element {
    Element {
        symbol,
        valence,
        pseudopotential,
        mass,
        magnetic,
    }
}

pub const ELEMENTS: [Element; 30] = [
    el("Ag", 11, "Ag", 107.868, false),
    el("Al", 3, "Al", 26.982, false),
    el("As", 5, "As", 74.922, false),
    el("Au", 11, "Au", 196.967, false),
    el("B", 3, "B_h", 10.81, false),
    el("Ba", 2, "Ba_sv", 137.327, false),
    el("Bi", 15, "Bi_d", 208.98, false),
    el("C", 4, "C", 12.011, false),
    el("Ca", 2, "Ca_sv", 40.078, false),
    el("Cd", 12, "Cd", 112.414, false),
    el("Co", 9, "Co", 58.933, true),
    el("Cr", 6, "Cr_pv", 51.996, true),
    el("Cu", 11, "Cu_pv", 63.546, false),
    el("Dy", 3, "Dy_3", 162.5, false),
    el("Fe", 8, "Fe_pv", 55.845, true),
    el("Ga", 13, "Ga_d", 69.723, false),
    el("Ge", 14, "Ge_d", 72.63, false),
    el("In", 13, "In_d", 114.818, false),
    el("Li", 1, "Li_sv", 6.94, false),
    el("Mg", 2, "Mg_pv", 24.305, false),
    el("Mn", 7, "Mn_pv", 54.938, true),
    el("N", 5, "N", 14.007, false),
    el("Ni", 10, "Ni_pv", 58.693, true),
    el("O", 6, "O", 15.999, false),
    el("P", 5, "P", 30.974, false),
    el("Pt", 10, "Pt", 195.084, false),
    el("S", 6, "S", 32.06, false),
    el("Se", 6, "Se", 78.971, false),
    el("Si", 4, "Si", 28.085, false),
    el("Ta", 5, "Ta_pv", 180.948, false),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_groups_tile_all_space_groups() {
        let mut next = 1;
        for p in &POINT_GROUPS {
            assert_eq!(p.space_groups.0, next, "{}", p.hermann_mauguin);
            next = p.space_groups.1 + 1;
        }
        assert_eq!(next, 231);
    }

    #[test]
    fn known_lookups() {
        let p = point_group_of(221).unwrap();
        assert_eq!((p.class_name, p.orbifold, p.order), ("hexoctahedral", "*432", 48));
        let p = point_group_of(216).unwrap();
        assert_eq!((p.class_name, p.orbifold, p.order, p.kind), ("tetrahedral", "*332", 24, "none"));
        let p = point_group_of(63).unwrap();
        assert_eq!((p.class_name, p.structure), ("orthorhombic-bipyramidal", "2_x_dihedral"));
        assert_eq!(crystal_system_index(1), Some(0));
        assert_eq!(crystal_system_index(230), Some(6));
        assert_eq!(lattice_of("cubic", "F-43m"), ("cubic", "FCC"));
        assert_eq!(lattice_of("orthorhombic", "Cmcm"), ("orthorhombic", "ORCC"));
    }

    #[test]
    fn common_space_groups_are_sorted_and_valid() {
        assert!(COMMON_SPACE_GROUPS.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(COMMON_SPACE_GROUPS.iter().all(|(n, _)| point_group_of(*n).is_some()));
    }
}
