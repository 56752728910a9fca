//! Uniform points on the unit sphere S^{d-1} and the law of the inner
//! product of two independent uniform points.
//!
//! For X, Y uniform on S^{d-1}, s = <X, Y> has density proportional to
//! (1 - s^2)^{(d-3)/2} on [-1, 1]. Writing s = sin(u) turns the upper tail
//! into an integral of cos(u)^{d-2} over [asin t, pi/2], which is bounded for
//! every d >= 2 (the raw density blows up at s = +-1 when d = 2).

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{BufRead, Write};
use std::sync::{Mutex, OnceLock};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Accuracy target for the tail probability and for quantile inversion.
pub const CDF_TOLERANCE: f64 = 1e-10;

/// n unit vectors in R^d; row i is the latent position X_i.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Array2<f64>,
}

impl PointCloud {
    /// Wraps an existing coordinate matrix, checking that every row is a unit vector.
    pub fn from_coords(coords: Array2<f64>) -> Result<Self> {
        let (n, d) = coords.dim();
        if n == 0 || d < 2 {
            return Err(invalid(format!("point cloud needs n >= 1, d >= 2 (got n={n}, d={d})")));
        }
        for (i, row) in coords.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("row {i} has norm {norm}")));
            }
        }
        Ok(Self { coords })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn d(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    /// Gram matrix of pairwise inner products.
    pub fn gram(&self) -> Array2<f64> {
        self.coords.dot(&self.coords.t())
    }

    /// Text dump: header "n d", then one space-separated row per point.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n(), self.d())?;
        for row in self.coords.rows() {
            let mut first = true;
            for x in row {
                if !first {
                    out.write_all(b" ")?;
                }
                write!(out, "{x}")?;
                first = false;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { path: "<point cloud>".into(), line, message };
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        let [n, d] = dims[..] else {
            return Err(parse_err(1, "header must be 'n d'".into()));
        };
        let mut coords = Array2::zeros((n, d));
        for i in 0..n {
            let line = lines.next().ok_or_else(|| parse_err(i + 2, "missing row".into()))??;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(i + 2, format!("bad value: {e}")))?;
            if row.len() != d {
                return Err(parse_err(i + 2, format!("expected {d} values, got {}", row.len())));
            }
            coords.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        Self::from_coords(coords)
    }
}

/// Draws `n` i.i.d. uniform points on S^{d-1} by normalizing standard Gaussian vectors.
pub fn sample_sphere_points<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<PointCloud> {
    if n == 0 {
        return Err(invalid("sample_sphere_points: n must be >= 1"));
    }
    if d < 2 {
        return Err(invalid(format!("sample_sphere_points: d must be >= 2 (got {d})")));
    }
    let mut coords = Array2::zeros((n, d));
    for mut row in coords.rows_mut() {
        loop {
            let mut sq = 0.0;
            for x in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x = z;
                sq += z * z;
            }
            if sq > 0.0 {
                let inv = 1.0 / sq.sqrt();
                row.mapv_inplace(|x| x * inv);
                break;
            }
        }
    }
    Ok(PointCloud { coords })
}

/// Tail law of <X, Y> for a fixed dimension.
///
/// Works with the elevation u = pi/2 - phi, where the angular density is
/// cos(u)^{d-2}, peaked at u = 0 with width ~ 1/sqrt(d). The mass on
/// [0, u] is precomputed on a fixed panel grid so repeated evaluations
/// (quantile bisection) are cheap and monotone.
#[derive(Debug, Clone)]
pub struct InnerProductLaw {
    d: usize,
    panel: f64,
    cumulative: Vec<f64>,
    half_mass: f64,
    tol: f64,
}

impl InnerProductLaw {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("dimension must be >= 2 (got {d})")));
        }
        let panel = (PI / 16.0).min(1.0 / (d as f64).sqrt());
        let panels = (FRAC_PI_2 / panel).ceil() as usize;
        // The half mass is at least ~ 1/sqrt(d) while the peak value is 1.
        let tol = 1e-3 * CDF_TOLERANCE * (1.0 / (d as f64)).sqrt() / panels as f64;
        let mut cumulative = Vec::with_capacity(panels + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..panels {
            let a = k as f64 * panel;
            let b = ((k + 1) as f64 * panel).min(FRAC_PI_2);
            acc += quadrature::integrate(|u| elevation_density(d, u), a, b, tol);
            cumulative.push(acc);
        }
        Ok(Self { d, panel, half_mass: acc, cumulative, tol })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Unnormalized mass of elevations in [0, u].
    fn band_mass(&self, u: f64) -> f64 {
        if u >= FRAC_PI_2 {
            return self.half_mass;
        }
        let k = ((u / self.panel).floor() as usize).min(self.cumulative.len() - 2);
        let a = k as f64 * self.panel;
        self.cumulative[k] + quadrature::integrate(|x| elevation_density(self.d, x), a, u, self.tol)
    }

    /// P(<X, Y> >= t) for t in [0, 1], i.e. the cap of angular radius acos t.
    fn cap_mass(&self, t: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&t));
        // Elevation of the cap boundary: asin(t) = pi/2 - acos(t).
        let u = t.asin();
        ((self.half_mass - self.band_mass(u)) / (2.0 * self.half_mass)).max(0.0)
    }

    /// P(<X, Y> >= t).
    pub fn tail(&self, t: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&t) {
            return Err(invalid(format!("inner product {t} outside [-1, 1]")));
        }
        if t == 0.0 {
            return Ok(0.5);
        }
        if t < 0.0 {
            return Ok(1.0 - self.cap_mass(-t));
        }
        Ok(self.cap_mass(t))
    }

    /// The threshold t with P(<X, Y> >= t) = p.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("edge probability {p} not in (0, 1)")));
        }
        if p == 0.5 {
            return Ok(0.0);
        }
        if p > 0.5 {
            return Ok(-self.quantile(1.0 - p)?);
        }
        // Bisect on the boundary elevation u in [0, pi/2]; the cap shrinks as u grows.
        let cap_at = |u: f64| (self.half_mass - self.band_mass(u)) / (2.0 * self.half_mass);
        let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cap_at(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        let err = (cap_at(u) - p).abs();
        if err > CDF_TOLERANCE {
            return Err(invalid(format!("quantile inversion for p={p}, d={} missed by {err}", self.d)));
        }
        Ok(u.sin())
    }
}

/// cos(u)^{d-2}, evaluated through log1p so it stays smooth near u = 0 for large d.
fn elevation_density(d: usize, u: f64) -> f64 {
    if d == 2 {
        return 1.0;
    }
    let half = (0.5 * u).sin();
    let log_cos = (-2.0 * half * half).ln_1p();
    ((d - 2) as f64 * log_cos).exp()
}

/// P(<X, Y> >= t) for independent uniform X, Y on S^{d-1}.
pub fn inner_product_cdf(t: f64, d: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(invalid(format!("inner product {t} outside [-1, 1]")));
    }
    InnerProductLaw::new(d)?.tail(t)
}

/// Connection threshold t_{p,d}: edges join points with <X_i, X_j> >= t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub p: f64,
    pub d: usize,
    pub t: f64,
}

impl Threshold {
    /// Euclidean radius equivalent to the inner-product threshold.
    pub fn distance(&self) -> f64 {
        (2.0 - 2.0 * self.t).max(0.0).sqrt()
    }
}

pub fn threshold(p: f64, d: usize) -> Result<Threshold> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("edge probability {p} not in (0, 1)")));
    }
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (p.to_bits(), d);
    if let Some(&t) = cache.lock().unwrap().get(&key) {
        return Ok(Threshold { p, d, t });
    }
    let t = InnerProductLaw::new(d)?.quantile(p)?;
    cache.lock().unwrap().insert(key, t);
    Ok(Threshold { p, d, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_point_is_normalized() {
        let cloud = sample_sphere_points(1, 2, &mut rng_from_seed(1)).unwrap();
        let r = cloud.coords().row(0);
        assert!((r[0] * r[0] + r[1] * r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = rng_from_seed(1);
        assert!(matches!(sample_sphere_points(0, 3, &mut rng), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_sphere_points(3, 1, &mut rng), Err(Error::InvalidArgument(_))));
        assert!(inner_product_cdf(1.5, 3).is_err());
        assert!(inner_product_cdf(-1.01, 3).is_err());
        assert!(threshold(0.0, 3).is_err());
        assert!(threshold(1.0, 3).is_err());
        assert!(threshold(f64::NAN, 3).is_err());
        assert!(threshold(0.3, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_sphere_points(5, 4, &mut rng_from_seed(9)).unwrap();
        let b = sample_sphere_points(5, 4, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_is_small() {
        // CLT: the mean of 10^4 uniform points on S^2 has norm ~ 1/sqrt(3n).
        let cloud = sample_sphere_points(10_000, 3, &mut rng_from_seed(2)).unwrap();
        let mean = cloud.coords().mean_axis(ndarray::Axis(0)).unwrap();
        assert!(mean.dot(&mean).sqrt() <= 0.05);
    }

    #[test]
    fn high_dimension_points_are_nearly_orthogonal() {
        let d = 10_000;
        let cloud = sample_sphere_points(100, d, &mut rng_from_seed(3)).unwrap();
        let gram = cloud.gram();
        let bound = 5.0 / (d as f64).sqrt();
        for i in 0..100 {
            for j in 0..i {
                assert!(gram[[i, j]].abs() <= bound);
            }
        }
    }

    #[test]
    fn tail_closed_forms() {
        assert_eq!(inner_product_cdf(0.0, 57).unwrap(), 0.5);
        assert!((inner_product_cdf(-1.0, 5).unwrap() - 1.0).abs() < 1e-12);
        assert!(inner_product_cdf(1.0, 5).unwrap().abs() < 1e-12);
        // d = 3: the inner product is uniform on [-1, 1].
        for &t in &[-0.9, -0.3, 0.5, 0.99] {
            assert!((inner_product_cdf(t, 3).unwrap() - (1.0 - t) / 2.0).abs() < 1e-12);
        }
        // d = 2: the angle is uniform on [0, pi].
        for &t in &[-0.99, -0.5, 0.1, 0.7] {
            assert!((inner_product_cdf(t, 2).unwrap() - t.acos() / PI).abs() < 1e-12);
        }
        // d = 4: density (2/pi) sqrt(1 - s^2).
        let t: f64 = 0.3;
        let exact = 0.5 - (t * (1.0 - t * t).sqrt() + t.asin()) / PI;
        assert!((inner_product_cdf(t, 4).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn threshold_closed_forms() {
        assert_eq!(threshold(0.5, 40).unwrap().t, 0.0);
        assert!((threshold(0.25, 3).unwrap().t - 0.5).abs() < 1e-10);
        assert!((threshold(0.25, 2).unwrap().t - (PI / 4.0).cos()).abs() < 1e-10);
        let th = threshold(0.25, 3).unwrap();
        assert!((th.distance() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_round_trips_through_cdf() {
        for &d in &[2, 3, 5, 10, 100, 1000, 10_000] {
            let law = InnerProductLaw::new(d).unwrap();
            for &p in &[0.001, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.999] {
                let t = law.quantile(p).unwrap();
                let back = inner_product_cdf(t, d).unwrap();
                assert!((back - p).abs() <= 1e-9, "d={d} p={p} t={t} back={back}");
            }
        }
    }

    #[test]
    fn threshold_strictly_decreasing_in_p() {
        for &d in &[2, 3, 17, 400] {
            let law = InnerProductLaw::new(d).unwrap();
            let ts: Vec<f64> = (1..=20).map(|k| law.quantile(k as f64 / 21.0).unwrap()).collect();
            assert!(ts.windows(2).all(|w| w[0] > w[1]), "d={d}: {ts:?}");
        }
    }

    #[test]
    fn empirical_edge_probability_matches() {
        let mut rng = rng_from_seed(11);
        let pairs = 100_000;
        for &(p, d) in &[(0.1, 7), (0.3, 25)] {
            let t = threshold(p, d).unwrap().t;
            let hits = (0..pairs)
                .filter(|_| {
                    let c = sample_sphere_points(2, d, &mut rng).unwrap();
                    c.coords().row(0).dot(&c.coords().row(1)) >= t
                })
                .count();
            let freq = hits as f64 / pairs as f64;
            let band = 4.0 * (p * (1.0 - p) / pairs as f64).sqrt();
            assert!((freq - p).abs() <= band, "p={p} d={d} freq={freq}");
        }
    }

    #[test]
    fn cloud_text_round_trip() {
        let cloud = sample_sphere_points(4, 3, &mut rng_from_seed(5)).unwrap();
        let mut buf = Vec::new();
        cloud.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"4 3\n"));
        let back = PointCloud::read_from(&buf[..]).unwrap();
        assert_eq!(back, cloud);
    }
}
