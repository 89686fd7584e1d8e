//! Two-component PCA by power iteration with deflation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::substream;
use crate::error::{Error, Result};

/// Convergence threshold on the change of the unit direction between
/// iterations.
pub const PCA_TOL: f64 = 1e-10;
pub const PCA_MAX_ITERS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Keep whatever sign the iteration converged to.
    None,
    /// Flip each direction so its largest-magnitude component is positive.
    #[default]
    MaxAbsPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// `N` rows of `(pc1, pc2)` coordinates of the centred data.
    pub coords: Vec<[f64; 2]>,
    pub directions: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// Share of total variance captured by each direction.
    pub explained: [f64; 2],
    pub mean: Vec<f64>,
}

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Centres columns and returns `(mean, covariance)` with divisor `N - 1`.
pub fn covariance(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows, x.cols);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centred = vec![0.0; d];
    for i in 0..n {
        for (c, (v, m)) in centred.iter_mut().zip(x.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centred[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[a * d + b] += ca * centred[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    (mean, cov)
}

fn matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (a, o) in out.iter_mut().enumerate() {
        *o = m[a * d..(a + 1) * d].iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub fn apply_sign_convention(v: &mut [f64], convention: SignConvention) {
    if convention == SignConvention::None {
        return;
    }
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant eigenpair of the symmetric PSD matrix `m`, searched in the
/// complement of `against`.
fn power_iteration<R: Rng>(m: &[f64], d: usize, against: &[&[f64]], rng: &mut R) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let orthogonalize = |v: &mut [f64]| {
        for u in against {
            let p = dot(v, u);
            v.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= p * y);
        }
    };
    orthogonalize(&mut v);
    normalize(&mut v);
    let mut next = vec![0.0; d];
    for _ in 0..PCA_MAX_ITERS {
        matvec(m, &v, &mut next);
        orthogonalize(&mut next);
        if normalize(&mut next) == 0.0 {
            return (v, 0.0);
        }
        let change = v.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut next);
        if change < PCA_TOL {
            break;
        }
    }
    matvec(m, &v, &mut next);
    let lambda = dot(&v, &next);
    (v, lambda)
}

/// Projects `x` (`N x D`) onto its top two principal directions. The random
/// start vector of the iteration is drawn from `seed`.
pub fn pca2(x: &Matrix, convention: SignConvention, seed: u64) -> Result<PcaProjection> {
    if x.rows < 3 || x.cols < 2 {
        return Err(Error::Config(format!(
            "PCA needs at least 3 samples of dimension >= 2, got {}x{}",
            x.rows, x.cols
        )));
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("PCA input contains non-finite values".into()));
    }
    let d = x.cols;
    let (mean, cov) = covariance(x);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::Numeric("features have zero variance; PCA is undefined".into()));
    }
    let mut rng = substream(seed, 0x4_0000);
    let (mut v1, l1) = power_iteration(&cov, d, &[], &mut rng);
    // deflate and search again orthogonally to v1
    let mut deflated = cov.clone();
    for a in 0..d {
        for b in 0..d {
            deflated[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (mut v2, l2) = power_iteration(&deflated, d, &[&v1], &mut rng);
    let l2 = l2.max(0.0);
    apply_sign_convention(&mut v1, convention);
    apply_sign_convention(&mut v2, convention);

    let coords = (0..x.rows)
        .map(|i| {
            let row = x.row(i);
            let mut c = [0.0; 2];
            for (j, (&v, m)) in row.iter().zip(&mean).enumerate() {
                let centred = v - m;
                c[0] += centred * v1[j];
                c[1] += centred * v2[j];
            }
            c
        })
        .collect();
    Ok(PcaProjection {
        coords,
        directions: [v1, v2],
        eigenvalues: [l1, l2],
        explained: [l1 / trace, l2 / trace],
        mean,
    })
}

/// CSV with header `x,y,label`.
pub fn scatter_csv(p: &PcaProjection, labels: &[String]) -> String {
    let mut out = String::from("x,y,label\n");
    for (c, l) in p.coords.iter().zip(labels) {
        out.push_str(&format!("{},{},{}\n", c[0], c[1], l));
    }
    out
}
