//! Feature standardization, LASSO by coordinate descent and kNN regression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, RealMatrix};

/// Per-column centring and scaling learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero variance; their std is stored as 1.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &RealMatrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        let mut means = vec![0.0; d];
        for i in 0..n {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut vars = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in vars.iter_mut().zip(x.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let mut constant = Vec::with_capacity(d);
        let stds = vars
            .iter()
            .zip(&means)
            .map(|(&v, &m)| {
                let sd = (v / (n as f64 - 1.0)).sqrt();
                // relative cut so rounding noise on a constant column counts as zero
                let flat = !(sd > 1e-12 * m.abs().max(1.0));
                constant.push(flat);
                if flat {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            means,
            stds,
            constant,
        })
    }

    pub fn dims(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.check(x)?;
        Ok(RealMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x.get(i, j) - self.means[j]) / self.stds[j]
        }))
    }

    pub fn inverse_transform(&self, z: &RealMatrix) -> Result<RealMatrix> {
        self.check(z)?;
        Ok(RealMatrix::from_fn(z.rows(), z.cols(), |i, j| {
            z.get(i, j) * self.stds[j] + self.means[j]
        }))
    }

    fn check(&self, x: &RealMatrix) -> Result<()> {
        if x.cols() != self.dims() {
            return Err(Error::Dimension(format!(
                "expected {} feature columns, got {}",
                self.dims(),
                x.cols()
            )));
        }
        Ok(())
    }
}

/// `sign(z) · max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoSettings {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

/// Result of one coordinate-descent solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep, starting with the initial point.
    pub objective: Vec<f64>,
}

/// Centred design summarized by its Gram matrix, so each coordinate update
/// costs `O(d)` rather than `O(N)`.
struct Design {
    /// `X̃ᵀX̃ / N`, row-major `d × d`.
    gram: Vec<f64>,
    /// `X̃ᵀỹ / N`.
    xty: Vec<f64>,
    /// `ỹᵀỹ / N`.
    yty: f64,
    means: Vec<f64>,
    y_mean: f64,
}

impl Design {
    fn new(x: &RealMatrix, y: &[f64]) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::Dimension(format!("{} targets for {n} rows", y.len())));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("no training rows".into()));
        }
        if y.iter().any(|v| !v.is_finite()) || x.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LASSO inputs must be finite".into()));
        }
        let nf = n as f64;
        let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
        let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
        let centred: Vec<Vec<f64>> = columns
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|v| v - m).collect())
            .collect();
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut gram = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let g = dot(&centred[i], &centred[j]) / nf;
                gram[i * d + j] = g;
                gram[j * d + i] = g;
            }
        }
        Ok(Self {
            gram,
            xty: centred.iter().map(|c| dot(c, &yc) / nf).collect(),
            yty: dot(&yc, &yc) / nf,
            means,
            y_mean,
        })
    }

    fn dims(&self) -> usize {
        self.means.len()
    }

    fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Objective from the Gram form, given `q = G w`.
    fn objective(&self, w: &[f64], q: &[f64], lambda: f64) -> f64 {
        let fit = self.yty - 2.0 * dot(&self.xty, w) + dot(w, q);
        0.5 * fit.max(0.0) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn solve(&self, lambda: f64, start: Option<&[f64]>, settings: &LassoSettings) -> LassoSolution {
        let d = self.dims();
        let mut w = start.map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
        let mut q = vec![0.0; d];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (qi, g) in q.iter_mut().zip(&self.gram[j * d..(j + 1) * d]) {
                    *qi += g * wj;
                }
            }
        }
        let mut objective = vec![self.objective(&w, &q, lambda)];
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < settings.max_sweeps {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                let a = self.gram[j * d + j];
                let old = w[j];
                let new = if a > 0.0 {
                    soft_threshold(self.xty[j] - q[j] + a * old, lambda) / a
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    for (qi, g) in q.iter_mut().zip(&self.gram[j * d..(j + 1) * d]) {
                        *qi += g * delta;
                    }
                    w[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            objective.push(self.objective(&w, &q, lambda));
            if max_change < settings.tolerance {
                converged = true;
                break;
            }
        }
        let intercept = self.y_mean - dot(&self.means, &w);
        LassoSolution {
            weights: w,
            intercept,
            sweeps,
            converged,
            objective,
        }
    }
}

/// Minimizes `(1/2N)‖y − Xw − b‖² + λ‖w‖₁` by cyclic coordinate descent.
///
/// `x` is used as given; callers standardize it first.
pub fn lasso_fit(x: &RealMatrix, y: &[f64], lambda: f64, settings: &LassoSettings) -> Result<LassoSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be ≥ 0, got {lambda}"
        )));
    }
    Ok(Design::new(x, y)?.solve(lambda, None, settings))
}

/// Smallest λ at which every weight is zero: `max_j |x̃_jᵀ(y − ȳ)| / N`
/// with `x̃_j` the centred column.
pub fn lambda_max(x: &RealMatrix, y: &[f64]) -> Result<f64> {
    Ok(Design::new(x, y)?.lambda_max())
}

/// `len` log-spaced values from `hi` down to `ratio · hi`.
pub fn lambda_grid(hi: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 || hi <= 0.0 {
        return vec![hi; len.max(1)];
    }
    let (a, b) = (hi.ln(), (ratio * hi).ln());
    (0..len)
        // exp(ln(hi)) may land an ulp below hi, which would let a weight escape zero
        .map(|i| {
            if i == 0 {
                hi
            } else {
                (a + (b - a) * i as f64 / (len - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoCvConfig {
    pub folds: usize,
    pub grid_len: usize,
    pub min_ratio: f64,
    pub settings: LassoSettings,
}

impl Default for LassoCvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_len: 50,
            min_ratio: 1e-4,
            settings: LassoSettings::default(),
        }
    }
}

/// A fitted LASSO model that standardizes its own inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardizer: Standardizer,
}

impl LassoModel {
    /// Fits at a fixed λ on standardized copies of `x`.
    pub fn fit(x: &RealMatrix, y: &[f64], lambda: f64, settings: &LassoSettings) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let sol = lasso_fit(&standardizer.transform(x)?, y, lambda, settings)?;
        Ok(Self {
            weights: sol.weights,
            intercept: sol.intercept,
            lambda,
            standardizer,
        })
    }

    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        Ok((0..z.rows())
            .map(|i| {
                self.intercept
                    + z.row(i)
                        .iter()
                        .zip(&self.weights)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Assigns `n` rows to `folds` near-equal folds after a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot fill {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, idx) in order.into_iter().enumerate() {
        out[i % folds].push(idx);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// Rows of `x` not listed in `held_out` (which must be sorted).
pub fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| held_out.binary_search(i).is_err()).collect()
}

/// Picks λ by inner cross-validated RMSE over a log grid and refits on all
/// rows.
pub fn lasso_cv_fit(x: &RealMatrix, y: &[f64], config: &LassoCvConfig, seed: u64) -> Result<LassoModel> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} rows", y.len())));
    }
    let folds = fold_assignment(n, config.folds, seed)?;
    let standardizer = Standardizer::fit(x)?;
    let z = standardizer.transform(x)?;
    let hi = lambda_max(&z, y)?;
    let grid = lambda_grid(hi, config.min_ratio, config.grid_len.max(1));

    let fold_errors = folds
        .par_iter()
        .map(|test| -> Result<Vec<f64>> {
            let train = complement(n, test);
            let xt = x.select_rows(&train)?;
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let inner = Standardizer::fit(&xt)?;
            let design = Design::new(&inner.transform(&xt)?, &yt)?;
            let xv = inner.transform(&x.select_rows(test)?)?;
            let mut warm: Option<Vec<f64>> = None;
            let mut errs = Vec::with_capacity(grid.len());
            for &lambda in &grid {
                let sol = design.solve(lambda, warm.as_deref(), &config.settings);
                let sse: f64 = test
                    .iter()
                    .enumerate()
                    .map(|(r, &i)| {
                        let p = sol.intercept
                            + xv.row(r)
                                .iter()
                                .zip(&sol.weights)
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        (p - y[i]).powi(2)
                    })
                    .sum();
                errs.push((sse / test.len() as f64).sqrt());
                warm = Some(sol.weights);
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = (0, f64::INFINITY);
    for g in 0..grid.len() {
        let mean = fold_errors.iter().map(|e| e[g]).sum::<f64>() / fold_errors.len() as f64;
        if mean < best.1 {
            best = (g, mean);
        }
    }
    let lambda = grid[best.0];
    let sol = Design::new(&z, y)?.solve(lambda, None, &config.settings);
    Ok(LassoModel {
        weights: sol.weights,
        intercept: sol.intercept,
        lambda,
        standardizer,
    })
}

/// Unweighted k-nearest-neighbour regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnModel {
    pub k: usize,
    pub standardizer: Standardizer,
    pub features: RealMatrix,
    pub targets: Vec<f64>,
}

pub const DEFAULT_K: usize = 5;

impl KnnModel {
    pub fn fit(x: &RealMatrix, y: &[f64], k: usize) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} targets for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if k == 0 || k > x.rows() {
            return Err(Error::InvalidParameter(format!(
                "k must lie in 1..={}, got {k}",
                x.rows()
            )));
        }
        let standardizer = Standardizer::fit(x)?;
        Ok(Self {
            k,
            features: standardizer.transform(x)?,
            standardizer,
            targets: y.to_vec(),
        })
    }

    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        let n = self.features.rows();
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        Ok((0..z.rows())
            .map(|q| {
                let query = z.row(q);
                order.clear();
                order.extend((0..n).map(|i| {
                    let d2 = self
                        .features
                        .row(i)
                        .iter()
                        .zip(query)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, i)
                }));
                order.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                order[..self.k].iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / self.k as f64
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RealMatrix {
        RealMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn lambda_grid_starts_exactly_at_hi() {
        for hi in [0.1, 0.37, 1.0 / 3.0, 7.123456789, 1e-5] {
            let g = lambda_grid(hi, 1e-3, 12);
            assert_eq!(g[0], hi);
            assert!(g.windows(2).all(|w| w[1] < w[0]));
            assert!((g[11] - 1e-3 * hi).abs() < 1e-12 * hi);
        }
    }

    /// Least squares with intercept through the normal equations.
    #[allow(clippy::needless_range_loop)]
    fn ols_oracle(x: &RealMatrix, y: &[f64]) -> (Vec<f64>, f64) {
        let (n, d) = x.shape();
        let mut a = vec![vec![0.0; d + 1]; d + 1];
        let mut b = vec![0.0; d + 1];
        for i in 0..n {
            let mut row = x.row(i).to_vec();
            row.push(1.0);
            for p in 0..=d {
                b[p] += row[p] * y[i];
                for q in 0..=d {
                    a[p][q] += row[p] * row[q];
                }
            }
        }
        // Gauss-Jordan with partial pivoting
        for c in 0..=d {
            let p = (c..=d)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in 0..=d {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=d {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        let sol: Vec<f64> = (0..=d).map(|i| b[i] / a[i][i]).collect();
        (sol[..d].to_vec(), sol[d])
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    #[test]
    fn standardizer_examples() {
        let x = RealMatrix::from_fn(6, 3, |i, j| match j {
            0 => 0.0,
            1 => i as f64 * 2.0 + 1.0,
            _ => (i as f64).powi(2) - 4.0,
        });
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.means[0], 0.0);
        assert_eq!(s.stds[0], 1.0);
        assert_eq!(s.constant, vec![true, false, false]);
        let z = s.transform(&x).unwrap();
        for j in 1..3 {
            let col = z.column(j);
            let m = col.iter().sum::<f64>() / 6.0;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 5.0).sqrt();
            assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        }
        let back = s.inverse_transform(&z).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(Standardizer::fit(&RealMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn lambda_zero_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random_matrix(&mut rng, 20, 8);
            let y: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (w, b) = ols_oracle(&x, &y);
            let sol = lasso_fit(&x, &y, 0.0, &LassoSettings::default()).unwrap();
            assert!(sol.converged);
            for (a, e) in sol.weights.iter().zip(&w) {
                assert!((a - e).abs() < 1e-6, "{a} vs {e}");
            }
            assert!((sol.intercept - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_max_kills_every_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 30, 6);
        let y: Vec<f64> = (0..30).map(|i| x.get(i, 2) * 3.0 + rng.random::<f64>()).collect();
        let hi = lambda_max(&x, &y).unwrap();
        for lambda in [hi, 1.5 * hi] {
            let sol = lasso_fit(&x, &y, lambda, &LassoSettings::default()).unwrap();
            assert!(sol.weights.iter().all(|&w| w == 0.0));
        }
        let below = lasso_fit(&x, &y, 0.99 * hi, &LassoSettings::default()).unwrap();
        assert!(below.weights.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_matrix(&mut rng, 40, 10);
        let y: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sol = lasso_fit(&x, &y, 0.05, &LassoSettings::default()).unwrap();
        for w in sol.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn cv_on_noise_shrinks_and_on_linear_target_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = random_matrix(&mut rng, 120, 10);
        let noise: Vec<f64> = (0..120).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dense = LassoModel::fit(&x, &noise, 0.0, &LassoSettings::default()).unwrap();
        let cv = lasso_cv_fit(&x, &noise, &LassoCvConfig::default(), 1).unwrap();
        let l2 = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(l2(&cv.weights) < 0.1 * l2(&dense.weights));

        let truth = [1.0, -2.0, 0.0, 0.5, 0.0, 0.0, 3.0, 0.0, 0.0, -1.0];
        let lin: Vec<f64> = (0..120)
            .map(|i| 2.0 + x.row(i).iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let model = lasso_cv_fit(&x, &lin, &LassoCvConfig::default(), 2).unwrap();
        let test = random_matrix(&mut rng, 50, 10);
        let expect: Vec<f64> = (0..50)
            .map(|i| 2.0 + test.row(i).iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let pred = model.predict(&test).unwrap();
        let rmse = (pred
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 50.0)
            .sqrt();
        let mean = expect.iter().sum::<f64>() / 50.0;
        let sd = (expect.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
        assert!(rmse < 1e-2 * sd, "rmse {rmse} sd {sd}");

        assert!(lasso_cv_fit(
            &x.select_rows(&[0, 1, 2]).unwrap(),
            &lin[..3],
            &LassoCvConfig::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn knn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_matrix(&mut rng, 12, 3);
        let y: Vec<f64> = (0..12).map(|i| i as f64 * 1.5).collect();
        let one = KnnModel::fit(&x, &y, 1).unwrap();
        assert_eq!(one.predict(&x.select_rows(&[4]).unwrap()).unwrap(), vec![6.0]);
        let all = KnnModel::fit(&x, &y, 12).unwrap();
        let mean = y.iter().sum::<f64>() / 12.0;
        let p = all.predict(&random_matrix(&mut rng, 1, 3)).unwrap();
        assert!((p[0] - mean).abs() < 1e-12);
        assert!(KnnModel::fit(&x, &y, 13).is_err());
        assert!(one.predict(&RealMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn knn_planted_neighbours() {
        // five rows within ε of the origin, the rest far away
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..5 {
            rows.push(vec![1e-3 * i as f64, -1e-3 * i as f64]);
            y.push(10.0 + i as f64);
        }
        for i in 0..20 {
            rows.push(vec![50.0 + i as f64, 40.0 - 3.0 * i as f64]);
            y.push(-100.0);
        }
        let x = RealMatrix::from_rows(&rows).unwrap();
        let m = KnnModel::fit(&x, &y, 5).unwrap();
        let p = m
            .predict(&RealMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap())
            .unwrap();
        assert!((p[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let x = RealMatrix::from_rows(&[vec![-1.0], vec![1.0], vec![3.0], vec![1.0]]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let q = RealMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(KnnModel::fit(&x, &y, 1).unwrap().predict(&q).unwrap(), vec![2.0]);
        // rows 0 and 2 are equidistant from the query once row 1 is taken
        let q0 = RealMatrix::from_rows(&[vec![1.0]]).unwrap();
        let p = KnnModel::fit(&x, &y, 3).unwrap().predict(&q0).unwrap();
        assert_eq!(p, vec![(2.0 + 4.0 + 1.0) / 3.0]);
    }

    #[test]
    fn models_round_trip_through_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = random_matrix(&mut rng, 15, 4);
        let y: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let lasso = LassoModel::fit(&x, &y, 0.1, &LassoSettings::default()).unwrap();
        let back: LassoModel = serde_json::from_str(&serde_json::to_string(&lasso).unwrap()).unwrap();
        assert_eq!(back, lasso);
        let knn = KnnModel::fit(&x, &y, 3).unwrap();
        let back: KnnModel = serde_json::from_str(&serde_json::to_string(&knn).unwrap()).unwrap();
        assert_eq!(back.predict(&x).unwrap(), knn.predict(&x).unwrap());
    }

    #[test]
    fn folds_cover_rows_once() {
        let folds = fold_assignment(23, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
        assert_eq!(folds, fold_assignment(23, 5, 3).unwrap());
        assert!(fold_assignment(3, 5, 0).is_err());
    }
}
