use serde::{Deserialize, Serialize};

/// Feature names in serialization order. These are also the JSON-lines keys.
pub const FEATURE_NAMES: [&str; 23] = [
    "compound",
    "species",
    "composition",
    "density",
    "valence_cell_iupac",
    "species_pp",
    "spinD",
    "spin_atom",
    "spin_cell",
    "crystal_class",
    "crystal_family",
    "crystal_system",
    "positions_fractional",
    "geometry",
    "lattice_system_relax",
    "lattice_variation_relax",
    "spacegroup_relax",
    "sg",
    "sg2",
    "point_group_orbifold",
    "point_group_order",
    "point_group_structure",
    "point_group_type",
];

/// The 23 descriptive features of one compound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub compound: String,
    pub species: Vec<String>,
    pub composition: Vec<u32>,
    /// g/cm³
    pub density: f64,
    pub valence_cell_iupac: u32,
    pub species_pp: Vec<String>,
    /// Per-atom magnetic moments in μB.
    #[serde(rename = "spinD")]
    pub spin_d: Vec<f64>,
    pub spin_atom: f64,
    pub spin_cell: f64,
    pub crystal_class: String,
    pub crystal_family: String,
    pub crystal_system: String,
    pub positions_fractional: Vec<[f64; 3]>,
    /// a, b, c in Å followed by α, β, γ in degrees.
    pub geometry: [f64; 6],
    pub lattice_system_relax: String,
    pub lattice_variation_relax: String,
    pub spacegroup_relax: u32,
    pub sg: Vec<String>,
    pub sg2: Vec<String>,
    pub point_group_orbifold: String,
    pub point_group_order: u32,
    pub point_group_structure: String,
    pub point_group_type: String,
}

/// A compound's features plus its band gap in eV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRecord {
    #[serde(flatten)]
    pub features: Features,
    pub band_gap: f64,
}

impl Features {
    pub fn atom_count(&self) -> usize {
        self.composition.iter().map(|&c| c as usize).sum()
    }

    /// Checks the structural invariants, returning a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.compound.is_empty() {
            return Err("compound is empty".into());
        }
        if self.species.is_empty() {
            return Err("species is empty".into());
        }
        if self.species.len() != self.composition.len() {
            return Err(format!(
                "species has {} entries but composition has {}",
                self.species.len(),
                self.composition.len()
            ));
        }
        if self.species.len() != self.species_pp.len() {
            return Err(format!(
                "species has {} entries but species_pp has {}",
                self.species.len(),
                self.species_pp.len()
            ));
        }
        if self.composition.iter().any(|&c| c == 0) {
            return Err("composition entries must be positive".into());
        }
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(format!("density must be positive, got {}", self.density));
        }
        let atoms = self.atom_count();
        if !self.spin_d.is_empty() && self.spin_d.len() != atoms {
            return Err(format!(
                "spinD has {} entries but composition sums to {atoms}",
                self.spin_d.len()
            ));
        }
        if !self.positions_fractional.is_empty() && self.positions_fractional.len() != atoms {
            return Err(format!(
                "positions_fractional has {} entries but composition sums to {atoms}",
                self.positions_fractional.len()
            ));
        }
        if self.spin_d.iter().any(|v| !v.is_finite()) {
            return Err("spinD contains a non-finite value".into());
        }
        if !(self.spin_atom.is_finite() && self.spin_atom >= 0.0) {
            return Err(format!("spin_atom must be >= 0, got {}", self.spin_atom));
        }
        if !self.spin_cell.is_finite() {
            return Err("spin_cell is not finite".into());
        }
        for (i, p) in self.positions_fractional.iter().enumerate() {
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(format!("fractional position {i} lies outside [0, 1]"));
            }
        }
        let [a, b, c, alpha, beta, gamma] = self.geometry;
        if [a, b, c].iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err("lattice lengths must be positive".into());
        }
        if [alpha, beta, gamma]
            .iter()
            .any(|&t| !(t.is_finite() && t > 0.0 && t < 180.0))
        {
            return Err("lattice angles must lie in (0, 180)".into());
        }
        if !(1..=230).contains(&self.spacegroup_relax) {
            return Err(format!(
                "spacegroup_relax must be in [1, 230], got {}",
                self.spacegroup_relax
            ));
        }
        if self.point_group_order == 0 {
            return Err("point_group_order must be positive".into());
        }
        Ok(())
    }

    /// Compares two feature sets, treating floats as equal within `tol`.
    pub fn approx_eq(&self, other: &Features, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let close_all = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y));
        self.compound == other.compound
            && self.species == other.species
            && self.composition == other.composition
            && close(self.density, other.density)
            && self.valence_cell_iupac == other.valence_cell_iupac
            && self.species_pp == other.species_pp
            && close_all(&self.spin_d, &other.spin_d)
            && close(self.spin_atom, other.spin_atom)
            && close(self.spin_cell, other.spin_cell)
            && self.crystal_class == other.crystal_class
            && self.crystal_family == other.crystal_family
            && self.crystal_system == other.crystal_system
            && self.positions_fractional.len() == other.positions_fractional.len()
            && self
                .positions_fractional
                .iter()
                .zip(&other.positions_fractional)
                .all(|(p, q)| close_all(p, q))
            && close_all(&self.geometry, &other.geometry)
            && self.lattice_system_relax == other.lattice_system_relax
            && self.lattice_variation_relax == other.lattice_variation_relax
            && self.spacegroup_relax == other.spacegroup_relax
            && self.sg == other.sg
            && self.sg2 == other.sg2
            && self.point_group_orbifold == other.point_group_orbifold
            && self.point_group_order == other.point_group_order
            && self.point_group_structure == other.point_group_structure
            && self.point_group_type == other.point_group_type
    }
}

impl MaterialRecord {
    pub fn validate(&self) -> Result<(), String> {
        self.features.validate()?;
        if !self.band_gap.is_finite() {
            return Err("band_gap is not finite".into());
        }
        Ok(())
    }
}
