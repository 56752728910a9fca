use crate::error::{check_len, invalid, Result};
use crate::graph::Graph;

/// A real symmetric linear map on R^n, applied without materializing a matrix.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = B x`. Both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric {
    n: usize,
    data: Vec<f64>,
}

impl DenseSymmetric {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len(n * n, data.len())?;
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &x) in diag.iter().enumerate() {
            data[i * n + i] = x;
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Materializes any operator by applying it to the unit vectors.
    pub fn from_operator(op: &dyn SymmetricOperator) -> Self {
        let n = op.dim();
        let mut data = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        Self { n, data }
    }
}

impl SymmetricOperator for DenseSymmetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (row, yi) in self.data.chunks_exact(self.n).zip(y.iter_mut()) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

fn check_density(p0: f64) -> Result<()> {
    if p0 > 0.0 && p0 <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("reference density p0 = {p0} not in (0, 1]")))
    }
}

/// Centered adjacency `A - p0 J`.
#[derive(Clone, Copy)]
pub struct DeltaA<'g> {
    graph: &'g Graph,
    p0: f64,
}

impl<'g> DeltaA<'g> {
    pub fn new(graph: &'g Graph, p0: f64) -> Result<Self> {
        check_density(p0)?;
        Ok(Self { graph, p0 })
    }
}

impl SymmetricOperator for DeltaA<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.graph.adjacency_matvec(x, y);
        let shift = self.p0 * x.iter().sum::<f64>();
        y.iter_mut().for_each(|yi| *yi -= shift);
    }
}

/// Centered Laplacian `L + p0 J - n p0 I` with `L = D - A`.
#[derive(Clone, Copy)]
pub struct DeltaL<'g> {
    graph: &'g Graph,
    p0: f64,
}

impl<'g> DeltaL<'g> {
    pub fn new(graph: &'g Graph, p0: f64) -> Result<Self> {
        check_density(p0)?;
        Ok(Self { graph, p0 })
    }
}

impl SymmetricOperator for DeltaL<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.graph;
        g.adjacency_matvec(x, y);
        let shift = self.p0 * x.iter().sum::<f64>();
        let np0 = g.n() as f64 * self.p0;
        for ((yi, &xi), &deg) in y.iter_mut().zip(x).zip(g.degrees()) {
            *yi = (deg as f64 - np0) * xi - *yi + shift;
        }
    }
}

pub fn delta_a_matvec(g: &Graph, p0: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_len(g.n(), v.len())?;
    let op = DeltaA::new(g, p0)?;
    let mut y = vec![0.0; v.len()];
    op.apply(v, &mut y);
    Ok(y)
}

pub fn delta_l_matvec(g: &Graph, p0: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_len(g.n(), v.len())?;
    let op = DeltaL::new(g, p0)?;
    let mut y = vec![0.0; v.len()];
    op.apply(v, &mut y);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::models::sample_er;
    use crate::rng::{rng_from_seed, stream};
    use rand::Rng;

    /// Dense Delta_A / Delta_L built entry by entry from the adjacency.
    fn dense_deltas(g: &Graph, p0: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = g.n();
        let a = g.to_dense();
        let mut da = vec![vec![0.0; n]; n];
        let mut dl = vec![vec![0.0; n]; n];
        for i in 0..n {
            let deg: f64 = a[i].iter().sum();
            for j in 0..n {
                da[i][j] = a[i][j] - p0;
                let l = if i == j { deg } else { 0.0 } - a[i][j];
                dl[i][j] = l + p0 - if i == j { n as f64 * p0 } else { 0.0 };
            }
        }
        (da, dl)
    }

    fn dense_apply(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn matvecs_match_dense_construction() {
        for seed in 0..50u64 {
            let mut rng = stream(100, &[seed]);
            let n = rng.random_range(2..=100);
            let p = rng.random_range(0.05..0.95);
            let g = sample_er(n, p, &mut rng).unwrap();
            let g = if seed % 5 == 0 { g.with_self_loops() } else { g };
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (da, dl) = dense_deltas(&g, p);
            let ya = delta_a_matvec(&g, p, &v).unwrap();
            let yl = delta_l_matvec(&g, p, &v).unwrap();
            for (x, y) in ya.iter().zip(dense_apply(&da, &v)) {
                assert!((x - y).abs() <= 1e-10);
            }
            for (x, y) in yl.iter().zip(dense_apply(&dl, &v)) {
                assert!((x - y).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn complete_graph_closed_forms() {
        let n = 12;
        let g = Graph::complete(n);
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let y = delta_a_matvec(&g, 1.0, &e1).unwrap();
        assert_eq!(y[0], -1.0);
        assert!(y[1..].iter().all(|&x| x == 0.0));
        let mut rng = rng_from_seed(1);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y = delta_l_matvec(&g, 1.0, &v).unwrap();
        assert!(y.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn empty_graph_closed_forms() {
        let n = 9;
        let p = 0.3;
        let g = Graph::empty(n);
        let y = delta_a_matvec(&g, p, &vec![1.0; n]).unwrap();
        assert!(y.iter().all(|&x| (x + p * n as f64).abs() < 1e-12));
        let mut v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let y = delta_l_matvec(&g, p, &v).unwrap();
        for (a, b) in y.iter().zip(&v) {
            assert!((a + n as f64 * p * b).abs() < 1e-12);
        }
    }

    #[test]
    fn argument_errors() {
        let g = Graph::cycle(5);
        assert!(matches!(delta_a_matvec(&g, 0.5, &[1.0; 4]), Err(Error::SizeMismatch { .. })));
        assert!(matches!(delta_l_matvec(&g, 0.0, &[1.0; 5]), Err(Error::InvalidArgument(_))));
        assert!(DenseSymmetric::new(2, vec![1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn from_operator_round_trip() {
        let m = DenseSymmetric::new(3, vec![1.0, 2.0, 0.0, 2.0, -1.0, 5.0, 0.0, 5.0, 3.0]).unwrap();
        assert_eq!(DenseSymmetric::from_operator(&m), m);
    }
}
