//! Local linear explanations of any predictor.
//!
//! Around a query row we draw Gaussian perturbations (the same scheme the
//! adversary module uses), query the model's probability on each, weight
//! samples by a distance kernel, and fit a weighted ridge regression of
//! the probabilities on the feature values. The coefficients are the
//! per-feature explanation weights. Per-instance top-k features, unioned
//! over a test set, form the influential-feature set compared across
//! models with the Jaccard coefficient.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::perturb_row;
use crate::cluster::distance;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::Predictor;
use crate::rng;

/// Explanation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Perturbations per explained instance.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Kernel width; `None` = 0.75 * sqrt(feature count).
    #[serde(default)]
    pub kernel_width: Option<f64>,
    /// Ridge penalty on the feature coefficients.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Features kept per instance when aggregating influential sets.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1000
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_top_k() -> usize {
    1
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            samples: 1000,
            kernel_width: None,
            ridge: 1e-3,
            top_k: 1,
            seed: 0,
        }
    }
}

impl ExplainConfig {
    fn effective_kernel_width(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or(0.75 * (n_features as f64).sqrt())
    }
}

/// Per-feature signed weights for one explained row.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub weights: Vec<f64>,
    pub row: Vec<f64>,
    pub samples_used: usize,
}

impl Explanation {
    /// Indices of the k largest |weight| features, ties broken by the
    /// smaller feature index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&i, &j| {
            self.weights[j]
                .abs()
                .partial_cmp(&self.weights[i].abs())
                .unwrap()
                .then(i.cmp(&j))
        });
        order.truncate(k);
        order
    }
}

/// The union of per-instance top-k feature names over a test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceSet {
    pub features: BTreeSet<String>,
    pub k: usize,
    pub test_size: usize,
}

/// Explains one prediction with a locally weighted ridge fit.
///
/// `stds` are the per-feature standard deviations used for perturbation
/// scale (sigma is fixed at 1.0 here so the cloud matches what a detector
/// trained on default perturbations expects to see).
pub fn lime_explain<R: Rng>(
    model: &dyn Predictor,
    x: &[f64],
    stds: &[f64],
    cfg: &ExplainConfig,
    rng: &mut R,
) -> Result<Explanation> {
    if cfg.samples < 10 {
        return Err(Error::Contract("explain needs at least 10 samples".into()));
    }
    if x.len() != stds.len() {
        return Err(Error::Contract("row/stds dimension mismatch".into()));
    }
    let n_features = x.len();
    let width = cfg.effective_kernel_width(n_features);
    if width <= 0.0 || width.is_nan() {
        return Err(Error::Contract("kernel width must be positive".into()));
    }

    // the unperturbed row anchors the fit with kernel weight exactly 1
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(cfg.samples + 1);
    samples.push(x.to_vec());
    for _ in 0..cfg.samples {
        samples.push(perturb_row(x, stds, 1.0, rng));
    }

    let targets: Vec<f64> = samples.iter().map(|s| model.predict_proba(s)).collect();
    let kernel: Vec<f64> = samples
        .iter()
        .map(|s| {
            let d = distance(x, s);
            (-d * d / (width * width)).exp()
        })
        .collect();

    let weights = weighted_ridge(&samples, &targets, &kernel, cfg.ridge)?;
    Ok(Explanation {
        weights,
        row: x.to_vec(),
        samples_used: samples.len(),
    })
}

/// Solves the weighted ridge normal equations and returns the feature
/// coefficients (the intercept is fitted but not penalized or returned).
fn weighted_ridge(
    samples: &[Vec<f64>],
    targets: &[f64],
    kernel: &[f64],
    ridge: f64,
) -> Result<Vec<f64>> {
    let f = samples[0].len();
    let dim = f + 1; // intercept first
    let mut ata = vec![vec![0.0; dim]; dim];
    let mut atb = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    for ((sample, &y), &w) in samples.iter().zip(targets).zip(kernel) {
        xi[0] = 1.0;
        xi[1..].copy_from_slice(sample);
        for r in 0..dim {
            let wr = w * xi[r];
            atb[r] += wr * y;
            for c in r..dim {
                ata[r][c] += wr * xi[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            ata[r][c] = ata[c][r];
        }
    }
    for d in 1..dim {
        ata[d][d] += ridge;
    }
    let solution = solve(ata, atb).ok_or_else(|| {
        Error::Contract("singular normal matrix; set a positive ridge penalty".into())
    })?;
    Ok(solution[1..].to_vec())
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Explains every test row and unions the per-row top-k feature names.
///
/// Row `i` draws from RNG stream `i` of `cfg.seed`, so rows are
/// independent and the set is reproducible.
pub fn influential_set(
    model: &dyn Predictor,
    test: &Dataset,
    cfg: &ExplainConfig,
) -> Result<InfluenceSet> {
    if test.n_rows() == 0 {
        return Err(Error::Size("influential_set needs a nonempty test set".into()));
    }
    let stds = test.column_stds();
    let mut features = BTreeSet::new();
    for i in 0..test.n_rows() {
        let mut r = rng::stream(cfg.seed, i as u64);
        let expl = lime_explain(model, test.row(i), &stds, cfg, &mut r)?;
        for idx in expl.top_k(cfg.top_k) {
            features.insert(test.feature_names()[idx].clone());
        }
    }
    Ok(InfluenceSet {
        features,
        k: cfg.top_k,
        test_size: test.n_rows(),
    })
}

/// |A intersect B| / |A union B|; two empty sets count as identical (1).
pub fn jaccard(a: &InfluenceSet, b: &InfluenceSet) -> f64 {
    let inter = a.features.intersection(&b.features).count();
    let union = a.features.union(&b.features).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Writes explanations as CSV rows of (row id, feature, weight).
pub fn write_explanations_csv(
    path: impl AsRef<Path>,
    explanations: &[(usize, Explanation)],
    feature_names: &[String],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "row,feature,weight").map_err(|e| Error::io(path, e))?;
    for (id, expl) in explanations {
        for (name, w) in feature_names.iter().zip(&expl.weights) {
            writeln!(out, "{id},{name},{w:.6}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
