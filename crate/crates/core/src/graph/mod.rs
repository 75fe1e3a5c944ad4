//! Graphs, shift operators and their eigendecomposition.
//!
//! Only undirected graphs with nonnegative weights are represented, so every
//! shift operator here is real symmetric and diagonalised by a real
//! orthogonal matrix `V`. The graph Fourier transform is then `x̃ = Vᵀx`.

mod karate;
pub mod sensor;

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use karate::{karate_club, KARATE_EDGES};

/// Relative Frobenius asymmetry accepted for a shift operator.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted graph without self-loops.
///
/// Edges are stored once with `i < j`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<Edge>,
    labels: Option<Vec<String>>,
}

impl Graph {
    /// Builds a graph from `(i, j, weight)` triples.
    ///
    /// A pair listed twice (in either orientation) with the same weight is
    /// merged; differing weights are an error.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(crate::error::invalid("n_nodes", "graph must have at least one node"));
        }
        let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidEdge {
                    i,
                    j,
                    msg: format!("node index out of range for {n_nodes} nodes"),
                });
            }
            if i == j {
                return Err(Error::InvalidEdge { i, j, msg: "self-loop".into() });
            }
            if !w.is_finite() {
                return Err(Error::InvalidEdge { i, j, msg: format!("non-finite weight {w}") });
            }
            if w < 0.0 {
                return Err(Error::InvalidEdge { i, j, msg: format!("negative weight {w}") });
            }
            if w == 0.0 {
                return Err(Error::InvalidEdge { i, j, msg: "zero weight".into() });
            }
            let key = (i.min(j), i.max(j));
            match seen.get(&key) {
                Some(&prev) if prev != w => {
                    return Err(Error::InvalidEdge {
                        i,
                        j,
                        msg: format!("duplicate edge with conflicting weights {prev} and {w}"),
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert(key, w);
                }
            }
        }
        let edges = seen
            .into_iter()
            .map(|((i, j), weight)| Edge { i, j, weight })
            .collect();
        Ok(Self { n_nodes, edges, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_nodes {
            return Err(Error::DimensionMismatch { expected: self.n_nodes, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Path graph `0 - 1 - ... - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i, 1.0)))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for e in &self.edges {
            a[(e.i, e.j)] = e.weight;
            a[(e.j, e.i)] = e.weight;
        }
        a
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        adj
    }

    /// BFS hop counts from `source`; `None` marks unreachable nodes.
    pub fn hop_distances_from(&self, source: usize) -> Result<Vec<Option<usize>>> {
        self.check_node(source)?;
        let adj = self.neighbors();
        let mut dist = vec![None; self.n_nodes];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest unweighted path length between `i` and `j`, `None` if they
    /// lie in different components.
    pub fn hop_distance(&self, i: usize, j: usize) -> Result<Option<usize>> {
        self.check_node(j)?;
        Ok(self.hop_distances_from(i)?[j])
    }

    pub fn is_connected(&self) -> bool {
        match self.hop_distances_from(0) {
            Ok(d) => d.iter().all(Option::is_some),
            Err(_) => false,
        }
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.n_nodes {
            Err(Error::IndexOutOfRange { index: i, len: self.n_nodes })
        } else {
            Ok(())
        }
    }

    /// Serialises to `{ "n": N, "edges": [[i, j, w], ...] }`.
    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            n: self.n_nodes,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
        };
        serde_json::to_string(&doc).expect("graph serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(text)?;
        Self::new(doc.n, doc.edges)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

/// Parses `src,dst[,weight]` rows. A non-numeric first row is taken as a
/// header; blank lines and `#` comments are skipped. The node count is the
/// largest index plus one.
pub fn load_edge_list(text: &str) -> Result<Graph> {
    let rows = parse_edge_rows(text)?;
    let n = rows.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    Graph::new(n, rows)
}

/// Like [`load_edge_list`] but with a fixed node count, so indices at or
/// beyond `n_nodes` are rejected.
pub fn load_edge_list_with_nodes(text: &str, n_nodes: usize) -> Result<Graph> {
    Graph::new(n_nodes, parse_edge_rows(text)?)
}

fn parse_edge_rows(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    let mut rows = Vec::new();
    let mut first_data_row = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let is_first = std::mem::replace(&mut first_data_row, false);
        if is_first && fields[0].parse::<i64>().is_err() && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno + 1, msg };
        if fields.len() < 2 || fields.len() > 3 {
            return Err(err(format!("expected `src,dst[,weight]`, got `{line}`")));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|_| err(format!("bad source index `{}`", fields[0])))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|_| err(format!("bad target index `{}`", fields[1])))?;
        let w = match fields.get(2) {
            Some(s) if !s.is_empty() => s
                .parse::<f64>()
                .map_err(|_| err(format!("bad weight `{s}`")))?,
            _ => 1.0,
        };
        rows.push((i, j, w));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Laplacian,
    Adjacency,
    Custom,
}

/// Real symmetric graph shift operator.
#[derive(Debug, Clone)]
pub struct ShiftOperator {
    matrix: DMatrix<f64>,
    kind: ShiftKind,
}

impl ShiftOperator {
    /// Wraps a user-supplied matrix after checking symmetry and that its
    /// off-diagonal support lies on the graph's edges.
    pub fn custom(graph: &Graph, matrix: DMatrix<f64>) -> Result<Self> {
        let n = graph.n_nodes();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "shift operator is {}x{}, graph has {n} nodes",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_symmetric(&matrix)?;
        let adj = graph.adjacency_matrix();
        for i in 0..n {
            for j in 0..n {
                if i != j && matrix[(i, j)] != 0.0 && adj[(i, j)] == 0.0 {
                    return Err(Error::InvalidEdge {
                        i,
                        j,
                        msg: "shift operator entry outside the graph's support".into(),
                    });
                }
            }
        }
        Ok(Self { matrix, kind: ShiftKind::Custom })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> ShiftKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Gershgorin upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let norm = m.norm();
    if norm == 0.0 {
        return Ok(());
    }
    let asym = (m - m.transpose()).norm() / norm;
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Combinatorial Laplacian `L = D - A`.
pub fn laplacian(g: &Graph) -> ShiftOperator {
    let mut l = g.adjacency_matrix();
    l.neg_mut();
    for e in g.edges() {
        l[(e.i, e.i)] += e.weight;
        l[(e.j, e.j)] += e.weight;
    }
    ShiftOperator { matrix: l, kind: ShiftKind::Laplacian }
}

pub fn adjacency(g: &Graph) -> ShiftOperator {
    ShiftOperator { matrix: g.adjacency_matrix(), kind: ShiftKind::Adjacency }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
///
/// Each eigenvector is sign-fixed so that its largest-magnitude entry (the
/// first one, on ties) is positive.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralBasis {
    /// Assembles a basis from precomputed parts; `eigenvectors` must be
    /// orthonormal and eigenvalues ascending.
    pub fn from_parts(eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.nrows() != n || eigenvectors.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} eigenvalues but eigenvector matrix is {}x{}",
                eigenvectors.nrows(),
                eigenvectors.ncols()
            )));
        }
        if eigenvalues.iter().zip(eigenvalues.iter().skip(1)).any(|(a, b)| a > b) {
            return Err(crate::error::invalid("eigenvalues", "must be sorted ascending"));
        }
        let gram = eigenvectors.transpose() * &eigenvectors;
        let dev = (gram - DMatrix::identity(n, n)).amax();
        if dev > 1e-8 {
            return Err(crate::error::invalid(
                "eigenvectors",
                format!("not orthonormal (max deviation {dev:e})"),
            ));
        }
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, index: usize) -> Result<DVector<f64>> {
        if index >= self.n() {
            return Err(Error::IndexOutOfRange { index, len: self.n() });
        }
        Ok(self.eigenvectors.column(index).into_owned())
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// `V diag(lambda) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.synthesize(&self.eigenvalues)
    }

    /// `V diag(d) Vᵀ` for an arbitrary spectral diagonal `d`.
    pub fn synthesize(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &di) in scaled.column_iter_mut().zip(d.iter()) {
            col *= di;
        }
        scaled * self.eigenvectors.transpose()
    }

    pub(crate) fn check_signal(&self, len: usize) -> Result<()> {
        if len != self.n() {
            Err(Error::DimensionMismatch { expected: self.n(), got: len })
        } else {
            Ok(())
        }
    }
}

/// Dense symmetric eigendecomposition, sorted ascending and sign-fixed.
pub fn eigendecompose(s: &ShiftOperator) -> Result<SpectralBasis> {
    let m = s.matrix();
    check_symmetric(m)?;
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or_else(|| {
        Error::Decomposition(format!("symmetric QR iteration did not converge (n = {n})"))
    })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Decomposition("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let norm = col.norm();
        col /= norm;
        fix_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(SpectralBasis { eigenvalues, eigenvectors })
}

fn fix_sign(v: &mut DVector<f64>) {
    let max_abs = v.amax();
    if max_abs == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .copied()
        .find(|x| x.abs() >= max_abs * (1.0 - 1e-12))
        .unwrap_or(0.0);
    if lead < 0.0 {
        v.neg_mut();
    }
}
