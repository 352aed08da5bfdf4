use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::barycenter::gyromidpoint;
use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};
use crate::linalg::{check_spd, sym_eigen, to_na};

/// Smallest eigenvalue accepted for an estimated covariance.
pub const SINGULAR_EIGEN: f64 = 1e-12;

/// `μ ⊕ Exp_0(z)` with `z ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedGaussian {
    mu: Array1<f64>,
    sigma: Array2<f64>,
}

impl WrappedGaussian {
    pub fn new(mu: Array1<f64>, sigma: Array2<f64>) -> Result<Self> {
        if sigma.nrows() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: sigma.nrows(),
            });
        }
        check_spd(sigma.view(), "sigma")?;
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> ArrayView1<'_, f64> {
        self.mu.view()
    }

    pub fn sigma(&self) -> ArrayView2<'_, f64> {
        self.sigma.view()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Tangent draws `z_i ~ N(0, Σ)` as rows.
    fn tangent_draws(&self, n: usize, seed: u64) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::Empty("sample count".into()));
        }
        let chol = nalgebra::Cholesky::new(to_na(self.sigma.view()))
            .ok_or_else(|| Error::NotSpd("sigma has no Cholesky factor".into()))?;
        let l = chol.l();
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Array2::zeros((n, d));
        for i in 0..n {
            let xi: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for r in 0..d {
                z[[i, r]] = (0..=r).map(|k| l[(r, k)] * xi[k]).sum();
            }
        }
        Ok(z)
    }

    /// Seeded samples through `Exp_0` followed by left addition of `μ`.
    pub fn sample(&self, ball: &PoincareBall, n: usize, seed: u64) -> Result<PointCloud> {
        let z = self.tangent_draws(n, seed)?;
        let mut out = Array2::zeros(z.dim());
        for (i, zi) in z.rows().into_iter().enumerate() {
            let e = ball.exp0(zi);
            out.row_mut(i).assign(&ball.add(self.mu.view(), e.view()));
        }
        PointCloud::uniform(out)
    }

    /// The same draws as [`sample`](Self::sample) through `Exp_μ` of the
    /// tangent vector transported from the origin.
    pub fn sample_exp_form(&self, ball: &PoincareBall, n: usize, seed: u64) -> Result<PointCloud> {
        let z = self.tangent_draws(n, seed)?;
        let mut out = Array2::zeros(z.dim());
        for (i, zi) in z.rows().into_iter().enumerate() {
            let v = ball.transport_from_origin(self.mu.view(), zi);
            out.row_mut(i)
                .assign(&ball.exp_map(self.mu.view(), v.view()));
        }
        PointCloud::uniform(out)
    }

    /// Gyromidpoint and tangent covariance of the centered cloud.
    pub fn estimate(ball: &PoincareBall, cloud: &PointCloud) -> Result<Self> {
        let (n, d) = (cloud.len(), cloud.dim());
        if n < d + 1 {
            return Err(Error::InvalidParameter(format!(
                "need at least {} points in dimension {d}, got {n}",
                d + 1
            )));
        }
        let mu = gyromidpoint(ball, cloud)?;
        let sigma = tangent_covariance(ball, mu.view(), cloud.points());
        let (vals, _) = sym_eigen(sigma.view());
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > SINGULAR_EIGEN) {
            return Err(Error::SingularCovariance(min));
        }
        Ok(Self { mu, sigma })
    }

    /// Text block: a `mu` line followed by one `sigma` line per row.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let fmt = |v: ArrayView1<f64>| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(out, "mu {}", fmt(self.mu.view()))?;
        for row in self.sigma.rows() {
            writeln!(out, "sigma {}", fmt(row))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut mu = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let vals: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| Error::Parse {
                    line: k + 1,
                    msg: e.to_string(),
                })?;
            match tag {
                "mu" if mu.is_none() => mu = Some(vals),
                "sigma" => rows.push(vals),
                other => {
                    return Err(Error::Parse {
                        line: k + 1,
                        msg: format!("unexpected tag '{other}'"),
                    })
                }
            }
        }
        let mu = mu.ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing mu line".into(),
        })?;
        let d = mu.len();
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parse {
                line: 2,
                msg: format!("sigma must be {d}x{d}"),
            });
        }
        let sigma = Array2::from_shape_fn((d, d), |(i, j)| rows[i][j]);
        Self::new(Array1::from(mu), sigma)
    }
}

/// Sample covariance (divisor `n − 1`) of `Log_0((−μ) ⊕ x_i)`.
pub fn tangent_covariance(
    ball: &PoincareBall,
    mu: ArrayView1<f64>,
    points: ArrayView2<f64>,
) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut z = Array2::zeros((n, d));
    for (i, x) in points.rows().into_iter().enumerate() {
        let c = ball.sub_left(mu, x);
        z.row_mut(i).assign(&ball.log0(c.view()));
    }
    let mean = z.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let centered = &z - &mean;
    let mut cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
    crate::linalg::symmetrize(&mut cov);
    cov
}
