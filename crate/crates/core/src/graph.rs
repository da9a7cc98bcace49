//! Undirected, unweighted contact networks.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Edge list of the contiguous United States (48 states plus DC).
pub const US_STATES_EDGE_LIST: &str = include_str!("../data/us_states.edges");

/// Stopping tolerance on successive Rayleigh quotients.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Immutable undirected graph without self-loops.
///
/// Neighbor lists are kept sorted so that iteration order, and therefore
/// every floating point reduction over a neighborhood, is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    labels: Vec<String>,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Network {
    /// Builds a network from `n` nodes and an edge list. Duplicate edges
    /// (in either orientation) collapse into one.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    pub fn with_labels(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Validation("network has no nodes".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: n,
                });
            }
            if a == b {
                return Err(Error::Validation(format!("self-loop on node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Network {
            labels,
            neighbors,
            edges: set.into_iter().collect(),
        })
    }

    /// Parses a whitespace-separated edge list, one edge per line, `#`
    /// starting a comment.
    ///
    /// When every endpoint token is a non-negative integer the tokens are
    /// used directly as 0-based node indices; otherwise tokens are labels
    /// assigned dense indices in order of first appearance.
    pub fn load_edge_list(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected two endpoints, found {}", tokens.len()),
                });
            }
            if tokens[0] == tokens[1] {
                return Err(Error::Validation(format!(
                    "self-loop on `{}` (line {})",
                    tokens[0],
                    lineno + 1
                )));
            }
            pairs.push((lineno + 1, tokens[0], tokens[1]));
        }
        if pairs.is_empty() {
            return Err(Error::Validation("edge list contains no edges".into()));
        }

        let numeric: Option<Vec<(usize, usize)>> = pairs
            .iter()
            .map(|(_, a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .collect();
        if let Some(edges) = numeric {
            let n = edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0) + 1;
            return Self::from_edges(n, &edges);
        }

        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(_, a, b) in &pairs {
            let mut id = |tok| {
                *index.entry(tok).or_insert_with(|| {
                    labels.push(tok.to_string());
                    labels.len() - 1
                })
            };
            let (ia, ib) = (id(a), id(b));
            edges.push((ia, ib));
        }
        Self::with_labels(labels, &edges)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading graph {}", path.display()), e))?;
        Self::load_edge_list(&text)
    }

    /// The 49-node, 107-edge contiguity graph of the United States.
    pub fn us_states() -> Self {
        Self::load_edge_list(US_STATES_EDGE_LIST).expect("bundled edge list is valid")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sorted neighbor list of `i`. Panics on out-of-range `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.node_count() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.node_count(),
            })
        }
    }

    pub fn degree(&self, i: usize) -> Result<usize> {
        self.check_index(i)?;
        Ok(self.neighbors[i].len())
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors
            .get(i)
            .is_some_and(|l| l.binary_search(&j).is_ok())
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.node_count();
        let mut a = vec![vec![0u8; n]; n];
        for &(i, j) in &self.edges {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        a
    }

    /// Largest eigenvalue of the adjacency matrix.
    pub fn spectral_radius(&self, tol: f64) -> Result<f64> {
        self.masked_spectral_radius(None, tol)
    }

    /// For every node, the decrease in spectral radius caused by zeroing that
    /// node's row and column. Negative values (round-off) clamp to zero.
    pub fn spectral_drop_scores(&self, tol: f64) -> Result<Vec<f64>> {
        let full = self.spectral_radius(tol)?;
        (0..self.node_count())
            .map(|i| {
                let reduced = self.masked_spectral_radius(Some(i), tol)?;
                Ok((full - reduced).max(0.0))
            })
            .collect()
    }

    /// Power iteration on `A + I` from the all-ones vector, reporting the
    /// Rayleigh quotient of `A`. The identity shift makes the Perron root
    /// strictly dominant in magnitude, so bipartite graphs (whose spectrum is
    /// symmetric about zero) converge as well.
    fn masked_spectral_radius(&self, removed: Option<usize>, tol: f64) -> Result<f64> {
        let n = self.node_count();
        let active = |i: usize| Some(i) != removed;
        let mut x: Vec<f64> = (0..n).map(|i| if active(i) { 1.0 } else { 0.0 }).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= norm);

        let mut ax = vec![0.0; n];
        let mut prev = f64::NAN;
        for _ in 0..POWER_ITERATION_CAP {
            for i in 0..n {
                ax[i] = if active(i) {
                    self.neighbors[i]
                        .iter()
                        .filter(|&&j| active(j))
                        .map(|&j| x[j])
                        .sum()
                } else {
                    0.0
                };
            }
            // x is unit-norm, so x.Ax is the Rayleigh quotient
            let rayleigh: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            if (rayleigh - prev).abs() < tol {
                return Ok(rayleigh.max(0.0));
            }
            prev = rayleigh;
            let mut norm = 0.0;
            for i in 0..n {
                x[i] += ax[i];
                norm += x[i] * x[i];
            }
            let norm = norm.sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        Err(Error::Numerical(format!(
            "power iteration did not converge within {POWER_ITERATION_CAP} iterations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn star3() -> Network {
        Network::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    fn triangle() -> Network {
        Network::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    // independent dense symmetric eigensolver
    fn dense_radius(net: &Network, removed: Option<usize>) -> f64 {
        let n = net.node_count();
        let a = net.adjacency();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if Some(i) == removed || Some(j) == removed {
                0.0
            } else {
                a[i][j] as f64
            }
        });
        m.symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn path_from_labels() {
        let net = Network::load_edge_list("a b\nb c").unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 2);
        assert_eq!(net.degree(1).unwrap(), 2);
        assert_eq!(net.degree(0).unwrap(), 1);
        assert_eq!(net.labels(), &["a", "b", "c"]);
    }

    #[test]
    fn duplicates_collapse() {
        let net = Network::load_edge_list("a b\nb a\na b").unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn numeric_tokens_are_indices() {
        let net = Network::load_edge_list("# comment\n2 0  # trailing\n\n0 1\n").unwrap();
        assert_eq!(net.node_count(), 3);
        assert!(net.has_edge(0, 2) && net.has_edge(1, 0));
    }

    #[test]
    fn load_errors() {
        match Network::load_edge_list("a b\nc\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Network::load_edge_list("a a"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            Network::load_edge_list("# nothing\n\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            Network::load_edge_list("a b c"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn us_states_shape() {
        let net = Network::us_states();
        assert_eq!(net.node_count(), 49);
        assert_eq!(net.edge_count(), 107);
        assert!(net.index_of("DC").is_some());
        assert!(!net.has_edge(net.index_of("AZ").unwrap(), net.index_of("CO").unwrap()));
    }

    #[test]
    fn degrees() {
        assert_eq!(star3().degree(0).unwrap(), 3);
        assert!(matches!(
            star3().degree(4),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        let edge = Network::from_edges(2, &[(0, 1)]).unwrap();
        assert!((edge.spectral_radius(SPECTRAL_TOL).unwrap() - 1.0).abs() < 1e-9);
        assert!((triangle().spectral_radius(SPECTRAL_TOL).unwrap() - 2.0).abs() < 1e-9);
        let oracle = dense_radius(&star3(), None);
        assert!((oracle - 3f64.sqrt()).abs() < 1e-12);
        let got = star3().spectral_radius(SPECTRAL_TOL).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn drop_score_examples() {
        let s = star3().spectral_drop_scores(SPECTRAL_TOL).unwrap();
        let center = dense_radius(&star3(), None) - dense_radius(&star3(), Some(0));
        let leaf = dense_radius(&star3(), None) - dense_radius(&star3(), Some(1));
        assert!((center - 1.7320508).abs() < 1e-6);
        assert!((leaf - (3f64.sqrt() - 2f64.sqrt())).abs() < 1e-12);
        assert!((s[0] - center).abs() < 1e-8);
        for &v in &s[1..] {
            assert!((v - leaf).abs() < 1e-8);
        }

        let edge = Network::from_edges(2, &[(0, 1)]).unwrap();
        for v in edge.spectral_drop_scores(SPECTRAL_TOL).unwrap() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        for v in triangle().spectral_drop_scores(SPECTRAL_TOL).unwrap() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_node_has_zero_radius() {
        let net = Network::from_edges(3, &[(0, 1)]).unwrap();
        let scores = net.spectral_drop_scores(SPECTRAL_TOL).unwrap();
        assert_eq!(scores[2], 0.0);
    }
}
