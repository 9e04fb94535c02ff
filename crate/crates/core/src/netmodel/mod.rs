//! Euclidean embedded graphs: species, complexes (vertices), reactions
//! (edges), linkage classes and the stoichiometric subspace.

mod parse;

pub use parse::{parse, parse_network, ParsedNetwork, RateExpr};

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lincore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub name: String,
    pub index: usize,
}

/// A complex: a point of `R^n_{≥0}` with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub label: String,
    pub exponents: Vec<f64>,
}

/// A reaction `src -> dst`. `index` is the edge's position in file order and
/// indexes every rate and flux vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub index: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    species: Vec<String>,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

/// Euclidean embedded graph with its linkage-class partition.
///
/// Construct with [`EGraph::new`] or [`parse_network`]; both validate the
/// structural invariants (no self-loops, no duplicate edges or vertices, no
/// isolated vertices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct EGraph {
    species: Vec<Species>,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
}

impl TryFrom<RawGraph> for EGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        EGraph::new(raw.species, raw.vertices, raw.edges)
    }
}

impl From<EGraph> for RawGraph {
    fn from(g: EGraph) -> Self {
        RawGraph {
            species: g.species.into_iter().map(|s| s.name).collect(),
            vertices: g.vertices,
            edges: g.edges,
        }
    }
}

impl EGraph {
    pub fn new(species: Vec<String>, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let n = species.len();
        let mut seen_names = HashMap::new();
        for (i, name) in species.iter().enumerate() {
            if seen_names.insert(name.as_str(), i).is_some() {
                return Err(Error::Structure(format!("duplicate species `{name}`")));
            }
        }
        let mut seen_vertices: HashMap<Vec<u64>, usize> = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if v.exponents.len() != n {
                return Err(Error::Structure(format!(
                    "vertex {i} has {} exponents, expected {n}",
                    v.exponents.len()
                )));
            }
            if v.exponents.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err(Error::Structure(format!(
                    "vertex {i} has a negative or non-finite exponent"
                )));
            }
            if let Some(j) = seen_vertices.insert(exponent_key(&v.exponents), i) {
                return Err(Error::Structure(format!("vertices {j} and {i} coincide")));
            }
        }
        let m = vertices.len();
        let mut pairs = HashMap::new();
        let mut touched = vec![false; m];
        for (pos, e) in edges.iter().enumerate() {
            if e.index != pos {
                return Err(Error::Structure(format!(
                    "edge at position {pos} carries index {}",
                    e.index
                )));
            }
            if e.src >= m || e.dst >= m {
                return Err(Error::Structure(format!("edge {pos} refers to a missing vertex")));
            }
            if e.src == e.dst {
                return Err(Error::Structure(format!(
                    "self-loop on complex `{}`",
                    vertices[e.src].label
                )));
            }
            if let Some(first) = pairs.insert((e.src, e.dst), pos) {
                return Err(Error::Structure(format!(
                    "duplicate reaction {} -> {} (edges {first} and {pos})",
                    vertices[e.src].label, vertices[e.dst].label
                )));
            }
            touched[e.src] = true;
            touched[e.dst] = true;
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(Error::Structure(format!("isolated vertex `{}`", vertices[i].label)));
        }

        let (components, component_of) = undirected_components(m, &edges);
        Ok(EGraph {
            species: species
                .into_iter()
                .enumerate()
                .map(|(index, name)| Species { name, index })
                .collect(),
            vertices,
            edges,
            components,
            component_of,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Linkage classes, each sorted by vertex index, numbered by their
    /// smallest member.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, vertex: usize) -> usize {
        self.component_of[vertex]
    }

    pub fn exponents(&self, vertex: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.vertices[vertex].exponents)
    }

    /// `y_dst − y_src` for edge `e`.
    pub fn reaction_vector(&self, e: usize) -> DVector<f64> {
        let edge = self.edges[e];
        self.exponents(edge.dst) - self.exponents(edge.src)
    }

    /// Reaction vectors as rows (`|E| × n`).
    pub fn reaction_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_edges(), self.n_species());
        for e in 0..self.n_edges() {
            m.set_row(e, &self.reaction_vector(e).transpose());
        }
        m
    }

    /// Source exponents as rows (`|E| × n`), the matrix `Y_src` with
    /// `ln k = ln β − Y_src ln x` under the flux parametrization.
    pub fn source_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_edges(), self.n_species());
        for (e, edge) in self.edges.iter().enumerate() {
            m.set_row(e, &self.exponents(edge.src).transpose());
        }
        m
    }

    /// Directed adjacency lists (successors) per vertex.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        adj
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }
}

fn exponent_key(exponents: &[f64]) -> Vec<u64> {
    // +0.0 normalizes -0.0 so that equal values share a key
    exponents.iter().map(|e| (e + 0.0).to_bits()).collect()
}

fn undirected_components(m: usize, edges: &[Edge]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut adj = vec![Vec::new(); m];
    for e in edges {
        adj[e.src].push(e.dst);
        adj[e.dst].push(e.src);
    }
    let mut component_of = vec![usize::MAX; m];
    let mut components = Vec::new();
    for start in 0..m {
        if component_of[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        component_of[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if component_of[w] == usize::MAX {
                    component_of[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    (components, component_of)
}

pub fn connected_components(g: &EGraph) -> &[Vec<usize>] {
    g.components()
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// True iff every linkage class is strongly connected.
pub fn is_weakly_reversible(g: &EGraph) -> bool {
    let forward = g.successors();
    let mut backward = vec![Vec::new(); g.n_vertices()];
    for e in g.edges() {
        backward[e.dst].push(e.src);
    }
    g.components().iter().all(|comp| {
        let root = comp[0];
        let fwd = reachable(&forward, root);
        let bwd = reachable(&backward, root);
        comp.iter().all(|&v| fwd[v] && bwd[v])
    })
}

/// Orthonormal bases of the stoichiometric subspace `S` and of `S⊥`, stored
/// as matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StoichDecomp {
    pub s: usize,
    /// `n × s`
    pub basis_s: DMatrix<f64>,
    /// `n × (n − s)`
    pub basis_sperp: DMatrix<f64>,
}

impl StoichDecomp {
    pub fn n(&self) -> usize {
        self.basis_s.nrows()
    }

    pub fn codim(&self) -> usize {
        self.basis_sperp.ncols()
    }

    /// Norm of the component of `v` orthogonal to `S`.
    pub fn distance_from_s(&self, v: &DVector<f64>) -> f64 {
        (self.basis_sperp.transpose() * v).norm()
    }

    /// Norm of the component of `v` inside `S`.
    pub fn distance_from_sperp(&self, v: &DVector<f64>) -> f64 {
        (self.basis_s.transpose() * v).norm()
    }
}

/// Stoichiometric subspace from the SVD of the reaction-vector matrix.
pub fn stoich_decomp(g: &EGraph, rank_tol: f64) -> StoichDecomp {
    let (basis_s, basis_sperp) = lincore::row_space_and_kernel(&g.reaction_matrix(), rank_tol);
    StoichDecomp {
        s: basis_s.ncols(),
        basis_s,
        basis_sperp,
    }
}
