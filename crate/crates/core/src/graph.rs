//! Simple undirected graphs stored as packed adjacency bit-rows.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{check_len, invalid, Error, Result};

/// Undirected graph on vertices `0..n`.
///
/// Row `i` of the adjacency matrix is stored as `ceil(n / 64)` words. When
/// `self_loops` is false the diagonal is always zero; when true, diagonal
/// bits are allowed and count towards the degree (so that `L = D - A` is
/// unaffected by loops).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    degrees: Vec<usize>,
    self_loops: bool,
}

/// Mutable adjacency used while sampling or parsing; frozen by [`GraphBuilder::build`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    self_loops: bool,
}

impl GraphBuilder {
    pub fn new(n: usize, self_loops: bool) -> Self {
        let words = n.div_ceil(64);
        Self { n, words, bits: vec![0; n * words], self_loops }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    /// Inserts `{i, j}`. Loops are ignored unless the builder allows them.
    #[inline]
    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i == j && !self.self_loops {
            return;
        }
        self.set_bit(i, j);
        self.set_bit(j, i);
    }

    pub fn build(self) -> Graph {
        let degrees = self
            .bits
            .chunks(self.words.max(1))
            .take(self.n)
            .map(|row| row.iter().map(|w| w.count_ones() as usize).sum())
            .collect();
        Graph { n: self.n, words: self.words, bits: self.bits, degrees, self_loops: self.self_loops }
    }
}

impl Graph {
    pub fn from_edges<I>(n: usize, edges: I, self_loops: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut b = GraphBuilder::new(n, self_loops);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j && !self_loops {
                return Err(invalid(format!("self-loop ({i}, {i}) in a simple graph")));
            }
            b.add_edge(i, j);
        }
        Ok(b.build())
    }

    pub fn empty(n: usize) -> Self {
        GraphBuilder::new(n, false).build()
    }

    pub fn complete(n: usize) -> Self {
        let mut b = GraphBuilder::new(n, false);
        for i in 0..n {
            for j in i + 1..n {
                b.add_edge(i, j);
            }
        }
        b.build()
    }

    pub fn cycle(n: usize) -> Self {
        let mut b = GraphBuilder::new(n, false);
        if n >= 3 {
            for i in 0..n {
                b.add_edge(i, (i + 1) % n);
            }
        } else if n == 2 {
            b.add_edge(0, 1);
        }
        b.build()
    }

    pub fn path(n: usize) -> Self {
        let mut b = GraphBuilder::new(n, false);
        for i in 1..n {
            b.add_edge(i - 1, i);
        }
        b.build()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn loop_count(&self) -> usize {
        (0..self.n).filter(|&i| self.has_edge(i, i)).count()
    }

    /// Number of undirected non-loop edges.
    pub fn edge_count(&self) -> usize {
        (self.degrees.iter().sum::<usize>() - self.loop_count()) / 2
    }

    /// Fraction of the n(n-1)/2 vertex pairs that are joined.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    /// Neighbours of `i` in increasing order (includes `i` itself for a loop).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(k, &w)| BitIter(w).map(move |b| k * 64 + b))
    }

    /// Non-loop edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| self.neighbors(i).filter(move |&j| j > i).map(move |j| (i, j)))
    }

    /// Copy of the graph with every diagonal entry set (the "self-loop" convention).
    pub fn with_self_loops(&self) -> Graph {
        let mut b = GraphBuilder { n: self.n, words: self.words, bits: self.bits.clone(), self_loops: true };
        for i in 0..self.n {
            b.set_bit(i, i);
        }
        b.build()
    }

    /// `y = A x`.
    pub fn adjacency_matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &w) in self.row(i).iter().enumerate() {
                for b in BitIter(w) {
                    acc += x[k * 64 + b];
                }
            }
            *yi = acc;
        }
    }

    /// `(A x1, A x2)` in one pass over the adjacency.
    pub fn adjacency_matvec2(&self, x1: &[f64], x2: &[f64], y1: &mut [f64], y2: &mut [f64]) {
        for i in 0..self.n {
            let (mut a1, mut a2) = (0.0, 0.0);
            for (k, &w) in self.row(i).iter().enumerate() {
                for b in BitIter(w) {
                    let j = k * 64 + b;
                    a1 += x1[j];
                    a2 += x2[j];
                }
            }
            y1[i] = a1;
            y2[i] = a2;
        }
    }

    /// Dense 0/1 adjacency matrix, row-major. Intended for small graphs.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| if self.has_edge(i, j) { 1.0 } else { 0.0 }).collect()).collect()
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        check_len(self.n, perm.len())?;
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(invalid("not a permutation"));
            }
        }
        let mut b = GraphBuilder::new(self.n, self.self_loops);
        for i in 0..self.n {
            for j in self.neighbors(i) {
                b.add_edge(perm[i], perm[j]);
            }
        }
        Ok(b.build())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_edge_list(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Edge-list format: `n m self_loops` header, then `i j` lines with `i <= j`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let loops: Vec<usize> = (0..self.n).filter(|&i| self.has_edge(i, i)).collect();
        writeln!(out, "{} {} {}", self.n, self.edge_count() + loops.len(), u8::from(self.self_loops))?;
        for i in 0..self.n {
            for j in self.neighbors(i).filter(|&j| j >= i) {
                writeln!(out, "{i} {j}")?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Graph> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        Self::read_edge_list(reader, path)
    }

    pub fn read_edge_list<R: BufRead>(reader: R, path: &Path) -> Result<Graph> {
        let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l?,
            None => return Err(perr(1, "empty file".into())),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, m, sl] = fields[..] else {
            return Err(perr(1, format!("expected header 'n m self_loops', got '{header}'")));
        };
        let n: usize = n.parse().map_err(|e| perr(1, format!("bad vertex count: {e}")))?;
        let m: usize = m.parse().map_err(|e| perr(1, format!("bad edge count: {e}")))?;
        let self_loops = match sl {
            "0" => false,
            "1" => true,
            other => return Err(perr(1, format!("self_loops flag must be 0 or 1, got '{other}'"))),
        };

        let mut b = GraphBuilder::new(n, self_loops);
        let mut read = 0;
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [i, j] = parts[..] else {
                return Err(perr(lineno, format!("expected 'i j', got '{line}'")));
            };
            let i: usize = i.parse().map_err(|e| perr(lineno, format!("bad index: {e}")))?;
            let j: usize = j.parse().map_err(|e| perr(lineno, format!("bad index: {e}")))?;
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { path: path.to_path_buf(), line: lineno, index, n });
                }
            }
            if i > j {
                return Err(perr(lineno, format!("edge '{i} {j}' must be written with i <= j")));
            }
            if i == j && !self_loops {
                return Err(perr(lineno, format!("self-loop '{i} {j}' but self_loops = 0")));
            }
            if b.has_edge(i, j) {
                return Err(perr(lineno, format!("duplicate edge '{i} {j}'")));
            }
            b.add_edge(i, j);
            read += 1;
        }
        if read != m {
            return Err(perr(1, format!("header declares {m} edges, found {read}")));
        }
        Ok(b.build())
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

/// `v^T L v = sum over edges {i, j} of (v_i - v_j)^2`.
pub fn laplacian_quadratic(g: &Graph, v: &[f64]) -> Result<f64> {
    check_len(g.n(), v.len())?;
    Ok(g.edges().map(|(i, j)| (v[i] - v[j]).powi(2)).sum())
}

pub fn is_connected(g: &Graph) -> bool {
    if g.n() <= 1 {
        return true;
    }
    let mut seen = vec![false; g.n()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in g.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == g.n()
}

/// True iff every edge (and loop) of `g1` is present in `g2`.
pub fn subgraph_of(g1: &Graph, g2: &Graph) -> Result<bool> {
    check_len(g1.n(), g2.n())?;
    Ok(g1.bits.iter().zip(&g2.bits).all(|(a, b)| a & !b == 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = rng_from_seed(seed);
        let mut b = GraphBuilder::new(n, false);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    b.add_edge(i, j);
                }
            }
        }
        b.build()
    }

    #[test]
    fn degrees_match_rows() {
        let g = random_graph(130, 0.3, 1);
        for i in 0..g.n() {
            assert_eq!(g.degree(i), g.neighbors(i).count());
            assert!(!g.has_edge(i, i));
            for j in 0..g.n() {
                assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
            }
        }
        assert_eq!(g.edges().count(), g.edge_count());
    }

    #[test]
    fn loops_count_in_degree() {
        let g = Graph::complete(5).with_self_loops();
        assert!(g.degrees().iter().all(|&d| d == 5));
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.loop_count(), 5);
    }

    #[test]
    fn quadratic_form_basics() {
        let g = random_graph(30, 0.4, 2);
        assert_eq!(laplacian_quadratic(&g, &[3.5; 30]).unwrap(), 0.0);
        let mut v = vec![0.0; 4];
        v[0] = 1.0;
        let single = Graph::from_edges(4, [(0, 1)], false).unwrap();
        assert_eq!(laplacian_quadratic(&single, &v).unwrap(), 1.0);
        assert!(matches!(laplacian_quadratic(&g, &[1.0; 3]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn quadratic_form_matches_dense_laplacian() {
        let g = random_graph(30, 0.3, 3);
        let mut rng = rng_from_seed(4);
        let v: Vec<f64> = (0..30).map(|_| rng.random::<f64>() - 0.5).collect();
        let a = g.to_dense();
        let mut dense = 0.0;
        for i in 0..30 {
            let deg: f64 = a[i].iter().sum();
            for j in 0..30 {
                let l = if i == j { deg } else { 0.0 } - a[i][j];
                dense += v[i] * l * v[j];
            }
        }
        assert!((laplacian_quadratic(&g, &v).unwrap() - dense).abs() < 1e-9);
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&Graph::path(5)));
        let triangles = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], false).unwrap();
        assert!(!is_connected(&triangles));
        assert!(is_connected(&Graph::empty(1)));
        assert!(!is_connected(&Graph::empty(2)));
    }

    #[test]
    fn subgraph_relation() {
        let g = random_graph(70, 0.2, 5);
        assert!(subgraph_of(&g, &g).unwrap());
        assert!(subgraph_of(&Graph::empty(70), &g).unwrap());
        let c4 = Graph::cycle(4);
        let chord = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)], false).unwrap();
        assert!(subgraph_of(&c4, &chord).unwrap());
        assert!(!subgraph_of(&chord, &c4).unwrap());
        assert!(subgraph_of(&c4, &Graph::cycle(5)).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k5.txt");
        let k5 = Graph::complete(5);
        k5.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("5 10 0\n0 1\n"));
        assert_eq!(Graph::load(&path).unwrap(), k5);

        let looped = random_graph(9, 0.5, 6).with_self_loops();
        let mut buf = Vec::new();
        looped.write_edge_list(&mut buf).unwrap();
        assert_eq!(Graph::read_edge_list(&buf[..], Path::new("mem")).unwrap(), looped);
    }

    fn parse(text: &str) -> Result<Graph> {
        Graph::read_edge_list(text.as_bytes(), Path::new("t.txt"))
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        match parse("10 2 0\n0 1\n7 7\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("4 1 0\n4 5\n") {
            Err(Error::IndexOutOfRange { line: 2, index: 4, n: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("4 2 0\n0 1\n0 1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("4 x 0\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("4 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("4 2 0\n0 1\n"), Err(Error::Parse { .. })));
        assert!(parse("3 1 1\n2 2\n").unwrap().has_edge(2, 2));
    }

    #[test]
    fn permutation_preserves_degree_multiset() {
        let g = random_graph(40, 0.3, 7);
        let perm: Vec<usize> = (0..40).rev().collect();
        let h = g.permute(&perm).unwrap();
        assert_eq!(h.edge_count(), g.edge_count());
        assert_eq!(h.degree(39), g.degree(0));
        assert!(g.permute(&[0; 40]).is_err());
    }
}
