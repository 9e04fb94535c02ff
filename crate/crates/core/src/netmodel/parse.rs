//! Line-oriented reaction DSL.
//!
//! ```text
//! # comment
//! species A B C
//! 2A + B -> C : 1.5
//! C <-> 0 : $kf, 0.25
//! ```
//!
//! Terms are `coeff*Species`, `coeffSpecies` or a bare species name; `0` is
//! the zero complex. When no `species` line is present, species are declared
//! implicitly in order of first use. `<->` expands to the forward edge
//! followed by the reverse edge.

use std::collections::{BTreeMap, HashMap};

use super::{EGraph, Edge, Vertex};
use crate::error::{Error, Result};
use crate::kirchhoff::RateVector;

/// A rate as written in the source.
#[derive(Debug, Clone, PartialEq)]
pub enum RateExpr {
    Value(f64),
    /// `$name`, resolved later from caller-supplied parameters.
    Param(String),
    /// The reaction line had no `: rate` section.
    Unset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNetwork {
    pub graph: EGraph,
    /// One entry per edge, in edge order.
    pub rates: Vec<RateExpr>,
}

impl ParsedNetwork {
    /// Distinct `$name` placeholders in order of first appearance.
    pub fn parameter_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rates {
            if let RateExpr::Param(p) = r {
                if !names.contains(&p.as_str()) {
                    names.push(p);
                }
            }
        }
        names
    }

    /// Resolves every rate, looking placeholders up in `params`.
    pub fn resolve_rates(&self, params: &HashMap<String, f64>) -> Result<RateVector> {
        let values = self
            .rates
            .iter()
            .enumerate()
            .map(|(e, r)| match r {
                RateExpr::Value(v) => Ok(*v),
                RateExpr::Param(p) => params.get(p).copied().ok_or_else(|| Error::UnknownParameter(p.clone())),
                RateExpr::Unset => Err(Error::Structure(format!("edge {e} has no rate constant"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        RateVector::new(values)
    }
}

/// Parses DSL source into the graph only.
pub fn parse_network(text: &str) -> Result<EGraph> {
    parse(text).map(|p| p.graph)
}

struct Cursor<'a> {
    line_no: usize,
    line: &'a str,
}

impl Cursor<'_> {
    fn err(&self, byte_offset: usize, message: impl Into<String>) -> Error {
        let column = self.line[..byte_offset.min(self.line.len())].chars().count() + 1;
        Error::Parse {
            line: self.line_no,
            column,
            message: message.into(),
        }
    }
}

type Complex = BTreeMap<usize, f64>;

struct Reaction {
    lhs: Complex,
    rhs: Complex,
    reversible: bool,
    rates: Vec<RateExpr>,
}

pub fn parse(text: &str) -> Result<ParsedNetwork> {
    let explicit = text.lines().any(|l| is_species_decl(strip_comment(l).trim_start()));
    let mut species: Vec<String> = Vec::new();
    let mut reactions = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let cur = Cursor {
            line_no: i + 1,
            line: raw,
        };
        let body = strip_comment(raw);
        let lead = body.len() - body.trim_start().len();
        let stmt = body.trim();
        if stmt.is_empty() {
            continue;
        }
        if is_species_decl(stmt) {
            let mut offset = lead + "species".len();
            for name in stmt["species".len()..].split_whitespace() {
                let at = raw[offset..].find(name).map_or(offset, |p| p + offset);
                offset = at + name.len();
                if !is_identifier(name) {
                    return Err(cur.err(at, format!("invalid species name `{name}`")));
                }
                if species.iter().any(|s| s == name) {
                    return Err(cur.err(at, format!("species `{name}` declared twice")));
                }
                species.push(name.to_string());
            }
            continue;
        }
        reactions.push(parse_reaction(&cur, body, &mut species, explicit)?);
    }

    build(species, reactions)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn is_species_decl(stmt: &str) -> bool {
    stmt == "species"
        || stmt
            .strip_prefix("species")
            .is_some_and(|r| r.starts_with(char::is_whitespace))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_reaction(cur: &Cursor, body: &str, species: &mut Vec<String>, explicit: bool) -> Result<Reaction> {
    let (arrow_at, arrow_len, reversible) = match (body.find("<->"), body.find("->")) {
        (Some(p), _) => (p, 3, true),
        (None, Some(p)) => (p, 2, false),
        (None, None) => return Err(cur.err(body.len() - body.trim_start().len(), "expected `->` or `<->`")),
    };
    let after = arrow_at + arrow_len;
    let (rhs_text, rates_at) = match body[after..].find(':') {
        Some(p) => (&body[after..after + p], Some(after + p + 1)),
        None => (&body[after..], None),
    };
    let lhs = parse_complex(cur, &body[..arrow_at], 0, species, explicit)?;
    let rhs = parse_complex(cur, rhs_text, after, species, explicit)?;

    let expected = if reversible { 2 } else { 1 };
    let rates = match rates_at {
        None => vec![RateExpr::Unset; expected],
        Some(start) => {
            let mut out = Vec::new();
            let mut offset = start;
            for piece in body[start..].split(',') {
                let at = offset + (piece.len() - piece.trim_start().len());
                offset += piece.len() + 1;
                out.push(parse_rate(cur, piece.trim(), at)?);
            }
            if out.len() != expected {
                return Err(cur.err(
                    start,
                    format!("expected {expected} rate constant(s), found {}", out.len()),
                ));
            }
            out
        }
    };
    Ok(Reaction {
        lhs,
        rhs,
        reversible,
        rates,
    })
}

fn parse_rate(cur: &Cursor, text: &str, at: usize) -> Result<RateExpr> {
    if let Some(name) = text.strip_prefix('$') {
        if is_identifier(name) {
            return Ok(RateExpr::Param(name.to_string()));
        }
        return Err(cur.err(at, format!("invalid parameter name `{text}`")));
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(RateExpr::Value(v)),
        _ => Err(cur.err(at, format!("invalid rate `{text}`"))),
    }
}

fn parse_complex(cur: &Cursor, text: &str, base: usize, species: &mut Vec<String>, explicit: bool) -> Result<Complex> {
    let lead = text.len() - text.trim_start().len();
    if text.trim().is_empty() {
        return Err(cur.err(base + lead, "empty complex (write `0` for the zero complex)"));
    }
    if text.trim() == "0" {
        return Ok(Complex::new());
    }
    let mut complex = Complex::new();
    let mut offset = base;
    for term in text.split('+') {
        let term_at = offset + (term.len() - term.trim_start().len());
        offset += term.len() + 1;
        let term = term.trim();
        if term.is_empty() {
            return Err(cur.err(term_at, "empty term"));
        }
        let num_len = term
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(term.len());
        let (coeff, rest) = if num_len == 0 {
            (1.0, term)
        } else {
            let c = term[..num_len]
                .parse::<f64>()
                .map_err(|_| cur.err(term_at, format!("invalid coefficient `{}`", &term[..num_len])))?;
            let rest = term[num_len..].trim_start();
            (c, rest.strip_prefix('*').unwrap_or(rest).trim_start())
        };
        if coeff <= 0.0 {
            return Err(cur.err(term_at, "stoichiometric coefficients must be positive"));
        }
        if !is_identifier(rest) {
            return Err(cur.err(term_at, format!("invalid term `{term}`")));
        }
        let idx = match species.iter().position(|s| s == rest) {
            Some(i) => i,
            None if explicit => return Err(cur.err(term_at, format!("unknown species `{rest}`"))),
            None => {
                species.push(rest.to_string());
                species.len() - 1
            }
        };
        *complex.entry(idx).or_insert(0.0) += coeff;
    }
    Ok(complex)
}

pub(crate) fn complex_label(exponents: &[f64], species: &[String]) -> String {
    let terms: Vec<String> = exponents
        .iter()
        .zip(species)
        .filter(|(c, _)| **c != 0.0)
        .map(|(&c, name)| if c == 1.0 { name.clone() } else { format!("{c}{name}") })
        .collect();
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join("+")
    }
}

fn build(species: Vec<String>, reactions: Vec<Reaction>) -> Result<ParsedNetwork> {
    let n = species.len();
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut vertex_of = |c: &Complex| {
        let mut exps = vec![0.0; n];
        for (&i, &v) in c {
            exps[i] = v;
        }
        let key: Vec<u64> = exps.iter().map(|x| x.to_bits()).collect();
        *lookup.entry(key).or_insert_with(|| {
            vertices.push(Vertex {
                label: complex_label(&exps, &species),
                exponents: exps,
            });
            vertices.len() - 1
        })
    };
    let mut pairs = Vec::new();
    let mut rates = Vec::new();
    for r in reactions {
        let a = vertex_of(&r.lhs);
        let b = vertex_of(&r.rhs);
        pairs.push((a, b));
        rates.push(r.rates[0].clone());
        if r.reversible {
            pairs.push((b, a));
            rates.push(r.rates[1].clone());
        }
    }
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(index, (src, dst))| Edge { src, dst, index })
        .collect();
    let graph = EGraph::new(species, vertices, edges)?;
    Ok(ParsedNetwork { graph, rates })
}
