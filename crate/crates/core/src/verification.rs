//! Independent numerical oracles for the test suites: central differences,
//! lattice maximization, a Jacobi eigenvalue solver and a Monte Carlo
//! estimate of lognormal premium moments.
//!
//! Nothing here calls into the model, solver or nalgebra decompositions, so
//! a shared bug cannot hide on both sides of a check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Finite-difference step per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `h_j = scale * max(1, |beta_j|)`.
    Relative(f64),
    Absolute(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Relative(1e-6)
    }
}

/// Central-difference gradient of `objective` at `beta`.
pub fn finite_diff_gradient<F>(objective: F, beta: &DVector<f64>, rule: StepRule) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(beta.len());
    for j in 0..beta.len() {
        let h = match rule {
            StepRule::Relative(s) => s * beta[j].abs().max(1.0),
            StepRule::Absolute(h) => h,
        };
        let mut up = beta.clone();
        up[j] += h;
        let mut down = beta.clone();
        down[j] -= h;
        let (fu, fd) = (objective(&up), objective(&down));
        if !fu.is_finite() || !fd.is_finite() {
            return Err(Error::NonFinite(j));
        }
        g[j] = (fu - fd) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if steps < 3 || !(lo < hi) {
            return Err(Error::Domain {
                what: "grid axis",
                detail: format!("[{lo}, {hi}] with {steps} steps; need lo < hi and at least 3 steps"),
            });
        }
        Ok(Self { lo, hi, steps })
    }

    pub fn cell(&self) -> f64 {
        (self.hi - self.lo) / (self.steps - 1) as f64
    }

    fn point(&self, i: usize) -> f64 {
        self.lo + self.cell() * i as f64
    }
}

/// Lattice for [`grid_mle`]: one axis per free coefficient, at most two.
/// The caller must make sure the lattice covers the maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Domain {
                what: "grid",
                detail: format!("{} axes; grid search supports 1 or 2", axes.len()),
            });
        }
        Ok(Self { axes })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub argmax: DVector<f64>,
    pub value: f64,
    /// The coarse maximizer sat on the edge of the lattice.
    pub on_boundary: bool,
    /// Cell widths of the refined lattice.
    pub cells: Vec<f64>,
}

fn lattice_argmax<F>(objective: &F, axes: &[GridAxis]) -> (Vec<usize>, f64)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut idx = vec![0usize; axes.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let point = DVector::from_iterator(axes.len(), idx.iter().zip(axes).map(|(&i, a)| a.point(i)));
        let v = objective(&point);
        // strict comparison keeps the lowest lexicographic index on ties
        if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((idx.clone(), v));
        }
        let mut d = axes.len();
        loop {
            if d == 0 {
                return best.unwrap_or((vec![0; axes.len()], f64::NAN));
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].steps {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Maximizes `objective` over the lattice, then once more over a lattice of
/// the same size spanning one coarse cell either side of the winner.
pub fn grid_mle<F>(objective: F, spec: &GridSpec) -> Result<GridResult>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let (idx, value) = lattice_argmax(&objective, &spec.axes);
    if !value.is_finite() {
        return Err(Error::NonFinite(0));
    }
    let on_boundary = idx.iter().zip(&spec.axes).any(|(&i, a)| i == 0 || i == a.steps - 1);
    let fine: Vec<GridAxis> = idx
        .iter()
        .zip(&spec.axes)
        .map(|(&i, a)| {
            let c = a.point(i);
            GridAxis {
                lo: c - a.cell(),
                hi: c + a.cell(),
                steps: a.steps,
            }
        })
        .collect();
    let (fidx, fvalue) = lattice_argmax(&objective, &fine);
    Ok(GridResult {
        argmax: DVector::from_iterator(fine.len(), fidx.iter().zip(&fine).map(|(&i, a)| a.point(i))),
        value: fvalue,
        on_boundary,
        cells: fine.iter().map(GridAxis::cell).collect(),
    })
}

const SYMMETRY_TOLERANCE: f64 = 1e-10;

fn symmetric_copy(m: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: m.ncols(),
            context: "square matrix columns",
        });
    }
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym >= SYMMETRY_TOLERANCE {
        return Err(Error::Asymmetric(asym));
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
        .collect())
}

/// Eigenvalues and eigenvectors (columns of `v`) by cyclic Jacobi rotations.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut a = symmetric_copy(m)?;
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[i][i]).collect(), v))
}

/// Smallest eigenvalue of a symmetric matrix. Matrices whose asymmetry is
/// below `1e-10` are symmetrized first; larger asymmetry is an error.
pub fn eig_min(m: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = jacobi_eigen(m)?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Sample mean and variance of `exp(x' b)` over `draws` coefficient vectors
/// `b ~ N(beta, cov)`, using a symmetric square root of `cov` from
/// [`jacobi_eigen`] and Box-Muller normals.
pub fn mc_lognormal_moments(
    x: &[f64],
    beta: &DVector<f64>,
    cov: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloMoments> {
    let k = beta.len();
    if x.len() != k || cov.nrows() != k {
        return Err(Error::Dimension {
            expected: k,
            actual: if x.len() != k { x.len() } else { cov.nrows() },
            context: "Monte Carlo inputs",
        });
    }
    let (values, vectors) = jacobi_eigen(cov)?;
    // loadings of x on each principal direction, scaled by its std deviation
    let loadings: Vec<f64> = (0..k)
        .map(|e| {
            let proj: f64 = (0..k).map(|i| x[i] * vectors[i][e]).sum();
            proj * values[e].max(0.0).sqrt()
        })
        .collect();
    let centre: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
    let mut rng = SimRng::new(seed, 0x6d63);
    let mut normals = std::iter::from_fn(move || {
        let u1 = 1.0 - rng.unit();
        let u2 = rng.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        Some([r * a.cos(), r * a.sin()])
    })
    .flatten();

    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=draws {
        let eta = centre + loadings.iter().map(|l| l * normals.next().unwrap_or(0.0)).sum::<f64>();
        let v = eta.exp();
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    Ok(MonteCarloMoments {
        mean,
        variance: m2 / (draws.max(2) - 1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let beta = DVector::from_vec(vec![0.3, -1.7, 4.0]);
        let g = finite_diff_gradient(|b| -b.norm_squared(), &beta, StepRule::default()).unwrap();
        assert!((g + 2.0 * &beta).amax() < 1e-8);
    }

    #[test]
    fn constant_objective() {
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let g = finite_diff_gradient(|_| 3.5, &beta, StepRule::default()).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn non_finite_objective() {
        let beta = DVector::from_vec(vec![0.0, 0.0]);
        let err = finite_diff_gradient(|b| if b[1] > 0.0 { f64::NAN } else { 0.0 }, &beta, StepRule::Absolute(1e-3));
        assert_eq!(err.unwrap_err(), Error::NonFinite(1));
    }

    #[test]
    fn grid_quadratic_and_boundary() {
        let spec = GridSpec::new(vec![GridAxis::new(-1.0, 1.0, 21).unwrap(), GridAxis::new(-1.0, 1.0, 21).unwrap()]).unwrap();
        let f = |b: &DVector<f64>| -(b[0] - 0.123).powi(2) - (b[1] + 0.456).powi(2);
        let r = grid_mle(f, &spec).unwrap();
        assert!((r.argmax[0] - 0.123).abs() <= r.cells[0]);
        assert!((r.argmax[1] + 0.456).abs() <= r.cells[1]);
        assert!(!r.on_boundary);

        let edge = grid_mle(|b: &DVector<f64>| b[0], &GridSpec::new(vec![GridAxis::new(0.0, 1.0, 5).unwrap()]).unwrap()).unwrap();
        assert!(edge.on_boundary);
    }

    #[test]
    fn grid_ties_prefer_lowest_index() {
        let spec = GridSpec::new(vec![GridAxis::new(0.0, 2.0, 3).unwrap()]).unwrap();
        let r = grid_mle(|_| 1.0, &spec).unwrap();
        assert_eq!(r.argmax[0], -1.0);
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridAxis::new(0.0, 1.0, 2).is_err());
        assert!(GridAxis::new(1.0, 1.0, 5).is_err());
        let a = GridAxis::new(0.0, 1.0, 3).unwrap();
        assert!(GridSpec::new(vec![a; 3]).is_err());
    }

    #[test]
    fn eigenvalues() {
        assert!((eig_min(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        assert!((eig_min(&d).unwrap() + 1.0).abs() < 1e-15);
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let mut want: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        want.sort_by(f64::total_cmp);
        assert!((eig_min(&m).unwrap() - want[0]).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(eig_min(&m), Err(Error::Asymmetric(_))));
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1e-12, 0.0, 1.0]);
        assert!(eig_min(&nearly).is_ok());
    }

    #[test]
    fn monte_carlo_lognormal() {
        let beta = DVector::from_vec(vec![0.1, -0.2]);
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]);
        let x = [1.0, 1.0];
        let s2 = 0.04 + 0.02 + 0.09;
        let mean = (-0.1_f64 + 0.5 * s2).exp();
        let var = (s2.exp() - 1.0) * mean * mean;
        let mc = mc_lognormal_moments(&x, &beta, &cov, 400_000, 1).unwrap();
        assert!((mc.mean / mean - 1.0).abs() < 0.01);
        assert!((mc.variance / var - 1.0).abs() < 0.02);
    }
}
