//! Populations of binary graphs on a shared vertex set.
//!
//! A [`GraphPopulation`] holds `K` adjacency matrices over the same `v`
//! vertices. Vertices are indexed `0..v` internally; the external labels
//! (`"1".."v"` unless the input names them) live in `vertex_labels` and are
//! only used for I/O and reporting. Undirected graphs are stored as full
//! symmetric matrices but only the upper triangle enters any computation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{NetmixError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPopulation {
    n_vertices: usize,
    directed: bool,
    adjacency: Vec<Vec<u8>>,
    graph_ids: Vec<String>,
    vertex_labels: Vec<String>,
}

/// A single invariant violation found by [`GraphPopulation::validate`].
/// Vertex and graph positions are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    SelfLoop { graph: usize, vertex: usize },
    Asymmetry { graph: usize, i: usize, j: usize },
    NonBinary { graph: usize, i: usize, j: usize, value: u8 },
    DimensionMismatch { graph: usize, expected: usize, found: usize },
    DuplicateGraphId { graph: usize, id: String },
    LabelCount { expected: usize, found: usize },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { graph, vertex } => {
                write!(f, "graph {graph}: self-loop at vertex {}", vertex + 1)
            }
            Violation::Asymmetry { graph, i, j } => write!(
                f,
                "graph {graph}: asymmetric entry at ({}, {}) in an undirected population",
                i + 1,
                j + 1
            ),
            Violation::NonBinary { graph, i, j, value } => write!(
                f,
                "graph {graph}: non-binary value {value} at ({}, {})",
                i + 1,
                j + 1
            ),
            Violation::DimensionMismatch {
                graph,
                expected,
                found,
            } => write!(f, "graph {graph}: expected {expected} cells, found {found}"),
            Violation::DuplicateGraphId { graph, id } => {
                write!(f, "graph {graph}: duplicate id `{id}`")
            }
            Violation::LabelCount { expected, found } => {
                write!(f, "expected {expected} labels, found {found}")
            }
            Violation::Empty => write!(f, "population has no graphs or no vertices"),
        }
    }
}

impl GraphPopulation {
    /// Builds a population without checking invariants. Use
    /// [`GraphPopulation::validate`] to inspect it or [`GraphPopulation::new`]
    /// to reject invalid input.
    ///
    /// `adjacency` holds one row-major `v × v` slice per graph.
    pub fn from_raw(
        n_vertices: usize,
        directed: bool,
        adjacency: Vec<Vec<u8>>,
        graph_ids: Vec<String>,
        vertex_labels: Vec<String>,
    ) -> Self {
        Self {
            n_vertices,
            directed,
            adjacency,
            graph_ids,
            vertex_labels,
        }
    }

    /// Builds and validates a population.
    pub fn new(
        n_vertices: usize,
        directed: bool,
        adjacency: Vec<Vec<u8>>,
        graph_ids: Vec<String>,
        vertex_labels: Vec<String>,
    ) -> Result<Self> {
        let pop = Self::from_raw(n_vertices, directed, adjacency, graph_ids, vertex_labels);
        pop.ensure_valid()?;
        Ok(pop)
    }

    /// Convenience constructor with default labels `"1".."v"` and graph ids
    /// `"1".."K"`.
    pub fn from_matrices(n_vertices: usize, directed: bool, adjacency: Vec<Vec<u8>>) -> Result<Self> {
        let graph_ids = (1..=adjacency.len()).map(|k| k.to_string()).collect();
        Self::new(
            n_vertices,
            directed,
            adjacency,
            graph_ids,
            default_labels(n_vertices),
        )
    }

    /// Builds a population from per-graph edge lists of zero-based pairs.
    /// Undirected edges are mirrored.
    pub fn from_edge_lists(
        n_vertices: usize,
        directed: bool,
        edges: &[Vec<(usize, usize)>],
    ) -> Result<Self> {
        let mut adjacency = Vec::with_capacity(edges.len());
        for list in edges {
            let mut adj = vec![0u8; n_vertices * n_vertices];
            for &(i, j) in list {
                if i >= n_vertices || j >= n_vertices {
                    return Err(NetmixError::Dimension(format!(
                        "edge ({}, {}) outside {n_vertices} vertices",
                        i + 1,
                        j + 1
                    )));
                }
                adj[i * n_vertices + j] = 1;
                if !directed {
                    adj[j * n_vertices + i] = 1;
                }
            }
            adjacency.push(adj);
        }
        Self::from_matrices(n_vertices, directed, adjacency)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_graphs(&self) -> usize {
        self.adjacency.len()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn graph_ids(&self) -> &[String] {
        &self.graph_ids
    }

    pub fn vertex_labels(&self) -> &[String] {
        &self.vertex_labels
    }

    /// Row-major adjacency matrix of graph `k`.
    pub fn adjacency(&self, k: usize) -> &[u8] {
        &self.adjacency[k]
    }

    #[inline]
    pub fn edge(&self, k: usize, i: usize, j: usize) -> u8 {
        self.adjacency[k][i * self.n_vertices + j]
    }

    /// Number of dyads per graph: `v(v-1)` directed, `v(v-1)/2` undirected.
    pub fn n_dyads(&self) -> usize {
        dyad_count(self.n_vertices, self.directed)
    }

    /// Dyad positions in canonical order (see [`dyad_positions`]).
    pub fn dyad_positions(&self) -> Vec<(usize, usize)> {
        dyad_positions(self.n_vertices, self.directed)
    }

    /// Responses of every graph over the canonical dyad order, graph-major:
    /// entry `k * n_dyads + d` is `y_d` of graph `k`.
    pub fn response_matrix(&self) -> Vec<u8> {
        let positions = self.dyad_positions();
        let mut out = Vec::with_capacity(self.n_graphs() * positions.len());
        for k in 0..self.n_graphs() {
            out.extend(positions.iter().map(|&(i, j)| self.edge(k, i, j)));
        }
        out
    }

    /// Number of edges in graph `k` over the dyad domain.
    pub fn edge_count(&self, k: usize) -> usize {
        self.dyad_positions()
            .iter()
            .filter(|&&(i, j)| self.edge(k, i, j) != 0)
            .count()
    }

    /// Keeps only the graphs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            n_vertices: self.n_vertices,
            directed: self.directed,
            adjacency: indices.iter().map(|&k| self.adjacency[k].clone()).collect(),
            graph_ids: indices.iter().map(|&k| self.graph_ids[k].clone()).collect(),
            vertex_labels: self.vertex_labels.clone(),
        }
    }

    /// Returns every invariant violation; the report is empty iff the
    /// population is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let v = self.n_vertices;
        let mut out = Vec::new();
        if v == 0 || self.adjacency.is_empty() {
            out.push(Violation::Empty);
        }
        if self.graph_ids.len() != self.adjacency.len() {
            out.push(Violation::LabelCount {
                expected: self.adjacency.len(),
                found: self.graph_ids.len(),
            });
        }
        if self.vertex_labels.len() != v {
            out.push(Violation::LabelCount {
                expected: v,
                found: self.vertex_labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for (k, id) in self.graph_ids.iter().enumerate() {
            if !seen.insert(id) {
                out.push(Violation::DuplicateGraphId {
                    graph: k,
                    id: id.clone(),
                });
            }
        }
        for (k, adj) in self.adjacency.iter().enumerate() {
            if adj.len() != v * v {
                out.push(Violation::DimensionMismatch {
                    graph: k,
                    expected: v * v,
                    found: adj.len(),
                });
                continue;
            }
            for i in 0..v {
                for j in 0..v {
                    let value = adj[i * v + j];
                    if value > 1 {
                        out.push(Violation::NonBinary { graph: k, i, j, value });
                    }
                    if i == j {
                        if value != 0 {
                            out.push(Violation::SelfLoop { graph: k, vertex: i });
                        }
                    } else if !self.directed && i < j && value != adj[j * v + i] {
                        out.push(Violation::Asymmetry { graph: k, i, j });
                    }
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(NetmixError::InvalidPopulation(report))
        }
    }
}

pub(crate) fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

pub fn dyad_count(n_vertices: usize, directed: bool) -> usize {
    let pairs = n_vertices * n_vertices.saturating_sub(1);
    if directed {
        pairs
    } else {
        pairs / 2
    }
}

/// Canonical dyad order: row-major over `(i, j)`, restricted to `i < j` when
/// undirected and to `i != j` when directed.
pub fn dyad_positions(n_vertices: usize, directed: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dyad_count(n_vertices, directed));
    for i in 0..n_vertices {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n_vertices {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dyad {
    pub graph: usize,
    pub sender: usize,
    pub receiver: usize,
    pub response: u8,
}

/// One row per dyad of every graph; graphs in index order, dyads row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadTable {
    pub directed: bool,
    pub rows: Vec<Dyad>,
}

impl DyadTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn enumerate_dyads(pop: &GraphPopulation) -> Result<DyadTable> {
    pop.ensure_valid()?;
    let positions = pop.dyad_positions();
    let mut rows = Vec::with_capacity(pop.n_graphs() * positions.len());
    for k in 0..pop.n_graphs() {
        rows.extend(positions.iter().map(|&(i, j)| Dyad {
            graph: k,
            sender: i,
            receiver: j,
            response: pop.edge(k, i, j),
        }));
    }
    Ok(DyadTable {
        directed: pop.directed(),
        rows,
    })
}

/// Node, dyad and graph level covariates attached to a population.
///
/// Columns are kept in insertion order so that compiled designs are
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub monadic: Vec<Column>,
    pub dyadic: Vec<Column>,
    pub graph_level: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl CovariateSet {
    pub fn is_empty(&self) -> bool {
        self.monadic.is_empty() && self.dyadic.is_empty() && self.graph_level.is_empty()
    }

    pub fn monadic(&self, name: &str) -> Option<&[f64]> {
        find(&self.monadic, name)
    }

    pub fn dyadic(&self, name: &str) -> Option<&[f64]> {
        find(&self.dyadic, name)
    }

    pub fn graph_level(&self, name: &str) -> Option<&[f64]> {
        find(&self.graph_level, name)
    }

    pub fn push_monadic(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.monadic.push(Column {
            name: name.into(),
            values,
        });
    }

    pub fn push_graph_level(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.graph_level.push(Column {
            name: name.into(),
            values,
        });
    }

    /// Checks row counts against the population and rejects non-finite
    /// values.
    pub fn check(&self, pop: &GraphPopulation) -> Result<()> {
        let v = pop.n_vertices();
        let checks = [
            (&self.monadic, v, "vertices"),
            (&self.dyadic, v * v, "vertex pairs"),
            (&self.graph_level, pop.n_graphs(), "graphs"),
        ];
        for (columns, expected, what) in checks {
            for col in columns {
                if col.values.len() != expected {
                    return Err(NetmixError::Dimension(format!(
                        "covariate `{}` has {} values for {expected} {what}",
                        col.name,
                        col.values.len()
                    )));
                }
                if col.values.iter().any(|x| !x.is_finite()) {
                    return Err(NetmixError::InvalidArgument(format!(
                        "covariate `{}` has non-finite values",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn find<'a>(columns: &'a [Column], name: &str) -> Option<&'a [f64]> {
    columns
        .iter()
        .find(|c| c.name == name)
        .map(|c| c.values.as_slice())
}
