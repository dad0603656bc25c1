use super::format::{format_list_number, format_scalar};
use super::{AnnotatedText, SpanBuilder, TextFormat};
use crate::error::{Error, Result};
use crate::ingest::{Features, FEATURE_NAMES};

fn quoted_list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", inner.join(", "))
}

fn number_list<T: Copy>(items: &[T], f: impl Fn(T) -> String) -> String {
    let inner: Vec<String> = items.iter().map(|&x| f(x)).collect();
    format!("[{}]", inner.join(", "))
}

fn rendered_values(r: &Features) -> [String; 23] {
    let positions: Vec<String> = r
        .positions_fractional
        .iter()
        .map(|p| number_list(p, format_list_number))
        .collect();
    [
        r.compound.clone(),
        quoted_list(&r.species),
        number_list(&r.composition, |c| c.to_string()),
        format_scalar(r.density),
        r.valence_cell_iupac.to_string(),
        quoted_list(&r.species_pp),
        number_list(&r.spin_d, format_list_number),
        format_scalar(r.spin_atom),
        format_scalar(r.spin_cell),
        r.crystal_class.clone(),
        r.crystal_family.clone(),
        r.crystal_system.clone(),
        format!("[{}]", positions.join(", ")),
        number_list(&r.geometry, format_list_number),
        r.lattice_system_relax.clone(),
        r.lattice_variation_relax.clone(),
        r.spacegroup_relax.to_string(),
        quoted_list(&r.sg),
        quoted_list(&r.sg2),
        r.point_group_orbifold.clone(),
        r.point_group_order.to_string(),
        r.point_group_structure.clone(),
        r.point_group_type.clone(),
    ]
}

/// Renders the comma-separated `key: value` structured string.
///
/// String lists are bracketed with single-quoted elements, scalar floats keep
/// at least one decimal (`1.0`) and list floats drop the point when integral
/// (`90`). Each span covers one whole `key: value` clause.
pub fn to_structured_string(r: &Features) -> AnnotatedText {
    let mut b = SpanBuilder::new();
    for (i, (key, value)) in FEATURE_NAMES.iter().zip(rendered_values(r)).enumerate() {
        if i > 0 {
            b.push(", ");
        }
        let start = b.position();
        b.push(key);
        b.push(": ");
        b.push(&value);
        b.add_span(key, start);
    }
    b.finish(TextFormat::Structured)
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            self.err(format!("expected `{lit}`"))
        }
    }

    fn key(&mut self, expected: &str) -> Result<()> {
        if self.at_end() {
            return self.err(format!("missing key `{expected}`"));
        }
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        let key = &self.rest()[..len];
        if key != expected {
            if FEATURE_NAMES.contains(&key) {
                return self.err(format!("expected key `{expected}`, found `{key}`"));
            }
            return self.err(format!("unknown key `{key}`"));
        }
        self.pos += len;
        self.expect(": ")
    }

    /// Bare value running to the next `", "` or the end of input.
    fn bare(&mut self) -> Result<String> {
        let len = self.rest().find(", ").unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("empty value");
        }
        let v = self.rest()[..len].to_string();
        self.pos += len;
        Ok(v)
    }

    fn number_token(&mut self) -> Result<&'a str> {
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("expected a number");
        }
        let tok = &self.rest()[..len];
        self.pos += len;
        Ok(tok)
    }

    fn float(&mut self) -> Result<f64> {
        let start = self.pos;
        let tok = self.number_token()?;
        tok.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("`{tok}` is not a number"),
        })
    }

    fn uint(&mut self) -> Result<u32> {
        let start = self.pos;
        let tok = self.number_token()?;
        tok.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("`{tok}` is not a non-negative integer"),
        })
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect("[").or_else(|_| self.err("malformed list: expected `[`"))?;
        let mut out = Vec::new();
        if self.rest().starts_with(']') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.rest().starts_with(", ") {
                self.pos += 2;
            } else if self.rest().starts_with(']') {
                self.pos += 1;
                return Ok(out);
            } else {
                return self.err("malformed list: expected `, ` or `]`");
            }
        }
    }

    fn quoted(&mut self) -> Result<String> {
        self.expect("'").or_else(|_| self.err("malformed list: expected a quoted string"))?;
        let Some(len) = self.rest().find('\'') else {
            return self.err("malformed list: unterminated string");
        };
        let v = self.rest()[..len].to_string();
        self.pos += len + 1;
        Ok(v)
    }

    fn triple(&mut self) -> Result<[f64; 3]> {
        let start = self.pos;
        let v = self.list(Self::float)?;
        v.try_into().map_err(|_| Error::Parse {
            offset: start,
            message: "malformed list: expected three coordinates".into(),
        })
    }
}

/// Parses a structured string back into its features.
///
/// Keys must appear in the canonical order. Errors carry the byte offset of
/// the offending input.
pub fn parse_structured_string(text: &str) -> Result<Features> {
    let mut p = Parser { s: text, pos: 0 };
    let mut field = 0usize;
    let mut next = |p: &mut Parser| -> Result<()> {
        let name = FEATURE_NAMES[field];
        if field > 0 {
            if p.at_end() {
                return p.err(format!("missing key `{name}`"));
            }
            p.expect(", ")?;
        }
        field += 1;
        p.key(name)
    };

    next(&mut p)?;
    let compound = p.bare()?;
    next(&mut p)?;
    let species = p.list(Parser::quoted)?;
    next(&mut p)?;
    let composition = p.list(Parser::uint)?;
    next(&mut p)?;
    let density = p.float()?;
    next(&mut p)?;
    let valence_cell_iupac = p.uint()?;
    next(&mut p)?;
    let species_pp = p.list(Parser::quoted)?;
    next(&mut p)?;
    let spin_d = p.list(Parser::float)?;
    next(&mut p)?;
    let spin_atom = p.float()?;
    next(&mut p)?;
    let spin_cell = p.float()?;
    next(&mut p)?;
    let crystal_class = p.bare()?;
    next(&mut p)?;
    let crystal_family = p.bare()?;
    next(&mut p)?;
    let crystal_system = p.bare()?;
    next(&mut p)?;
    let positions_fractional = p.list(Parser::triple)?;
    next(&mut p)?;
    let geometry_start = p.pos;
    let geometry: [f64; 6] = p.list(Parser::float)?.try_into().map_err(|_| Error::Parse {
        offset: geometry_start,
        message: "geometry must have six entries".into(),
    })?;
    next(&mut p)?;
    let lattice_system_relax = p.bare()?;
    next(&mut p)?;
    let lattice_variation_relax = p.bare()?;
    next(&mut p)?;
    let spacegroup_relax = p.uint()?;
    next(&mut p)?;
    let sg = p.list(Parser::quoted)?;
    next(&mut p)?;
    let sg2 = p.list(Parser::quoted)?;
    next(&mut p)?;
    let point_group_orbifold = p.bare()?;
    next(&mut p)?;
    let point_group_order = p.uint()?;
    next(&mut p)?;
    let point_group_structure = p.bare()?;
    next(&mut p)?;
    let point_group_type = p.bare()?;
    if !p.at_end() {
        return p.err("unexpected trailing input");
    }

    Ok(Features {
        compound,
        species,
        composition,
        density,
        valence_cell_iupac,
        species_pp,
        spin_d,
        spin_atom,
        spin_cell,
        crystal_class,
        crystal_family,
        crystal_system,
        positions_fractional,
        geometry,
        lattice_system_relax,
        lattice_variation_relax,
        spacegroup_relax,
        sg,
        sg2,
        point_group_orbifold,
        point_group_order,
        point_group_structure,
        point_group_type,
    })
}
