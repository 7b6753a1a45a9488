//! The lying scaffold: a malicious wrapper that hides bias from
//! explanation tools.
//!
//! An out-of-distribution detector is trained to tell real rows from
//! perturbed ones. Queries the detector considers real go to a biased
//! model keyed on the protected attribute; queries that look like
//! explainer-generated perturbations go to an innocuous decoy keyed on an
//! uncontroversial feature. The perturbation scheme here is the same one
//! the explainer uses, so attacker and explainer sampling distributions
//! match.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema};
use crate::error::{Error, Result};
use crate::learners::{train_forest, ForestConfig, Predictor, RandomForest};
use crate::rng;

/// Perturbation parameters shared by the scaffold and the explainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Perturbed copies generated per source row.
    #[serde(default = "default_per_row")]
    pub per_row: usize,
    /// Noise scale as a fraction of each feature's standard deviation.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_per_row() -> usize {
    1
}
fn default_sigma() -> f64 {
    1.0
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            per_row: 1,
            sigma: 1.0,
            seed: 0,
        }
    }
}

/// One Gaussian perturbation of `row`: independent noise per feature with
/// std `sigma * stds[j]`, clipped to `[0, 1]`.
pub fn perturb_row<R: Rng>(row: &[f64], stds: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    debug_assert_eq!(row.len(), stds.len());
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    row.iter()
        .zip(stds)
        .map(|(&v, &s)| {
            if s == 0.0 {
                v
            } else {
                (v + unit.sample(rng) * sigma * s).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Emits `cfg.per_row` perturbed copies of every row, in source order.
/// Group tags of perturbed rows are re-derived from the binary protected
/// columns (value >= 0.5 counts as privileged).
pub fn gen_perturbations<R: Rng>(ds: &Dataset, cfg: &PerturbConfig, rng: &mut R) -> Result<Dataset> {
    if ds.n_rows() < 2 {
        return Err(Error::Size(
            "gen_perturbations needs >= 2 rows to estimate stds".into(),
        ));
    }
    if cfg.sigma <= 0.0 || cfg.sigma.is_nan() {
        return Err(Error::Contract("perturbation sigma must be positive".into()));
    }
    let stds = ds.column_stds();
    let mut rows = Vec::with_capacity(ds.n_rows() * cfg.per_row);
    for row in ds.rows() {
        for _ in 0..cfg.per_row {
            rows.push(perturb_row(row, &stds, cfg.sigma, rng));
        }
    }
    let protected = ds
        .protected_names()
        .iter()
        .map(|&name| {
            let col = ds.feature_index(name).expect("protected is a feature");
            crate::data::ProtectedTags {
                name: name.to_string(),
                privileged: rows.iter().map(|r| r[col] >= 0.5).collect(),
            }
        })
        .collect();
    Dataset::new(ds.feature_names().to_vec(), rows, None, protected)
}

/// Trains the detector forest: real rows labeled 0, fake rows labeled 1.
pub fn train_ood_detector(real: &Dataset, fake: &Dataset, cfg: &ForestConfig) -> Result<RandomForest> {
    if real.n_rows() == 0 || fake.n_rows() == 0 {
        return Err(Error::Size("detector needs nonempty real and fake sets".into()));
    }
    if real.n_features() != fake.n_features() {
        return Err(Error::Contract("real/fake feature counts differ".into()));
    }
    let mut rows: Vec<Vec<f64>> = real.rows().to_vec();
    rows.extend(fake.rows().iter().cloned());
    let mut labels = vec![0u8; real.n_rows()];
    labels.extend(vec![1u8; fake.n_rows()]);
    let ds = Dataset::new(real.feature_names().to_vec(), rows, Some(labels), vec![])?;
    train_forest(&ds, cfg)
}

/// Transparent discriminatory rule: privileged rows get the favorable
/// label, unprivileged rows do not.
#[derive(Debug, Clone)]
pub struct BiasedRule {
    protected_col: usize,
    n_features: usize,
}

impl Predictor for BiasedRule {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        if row[self.protected_col] >= 0.5 {
            1.0
        } else {
            0.0
        }
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Builds the biased decoy for a protected attribute.
pub fn make_biased_model(ds: &Dataset, schema: &Schema, protected: &str) -> Result<BiasedRule> {
    if !schema.is_protected(protected) {
        return Err(Error::Contract(format!(
            "'{protected}' is not a protected attribute"
        )));
    }
    let protected_col = ds
        .feature_index(protected)
        .ok_or_else(|| Error::Contract(format!("unknown attribute '{protected}'")))?;
    Ok(BiasedRule {
        protected_col,
        n_features: ds.n_features(),
    })
}

/// Innocuous decoy: favorable iff one uncontroversial feature is at or
/// above its training median. Ignores protected attributes entirely.
#[derive(Debug, Clone)]
pub struct InnocuousRule {
    feature_col: usize,
    median: f64,
    n_features: usize,
}

impl Predictor for InnocuousRule {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        if row[self.feature_col] >= self.median {
            1.0
        } else {
            0.0
        }
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Builds the innocuous decoy around `legit_feature`'s training median.
pub fn make_innocuous_model(
    train: &Dataset,
    schema: &Schema,
    legit_feature: &str,
) -> Result<InnocuousRule> {
    if schema.is_protected(legit_feature) {
        return Err(Error::Contract(format!(
            "decoy feature '{legit_feature}' must not be a protected attribute"
        )));
    }
    let feature_col = train
        .feature_index(legit_feature)
        .ok_or_else(|| Error::Contract(format!("unknown feature '{legit_feature}'")))?;
    Ok(InnocuousRule {
        feature_col,
        median: train.column_median(feature_col),
        n_features: train.n_features(),
    })
}

/// The assembled liar. Satisfies [`Predictor`]; every query is answered
/// by exactly one inner model, and routing counters record which.
pub struct Scaffold {
    pub detector: RandomForest,
    pub biased: BiasedRule,
    pub innocuous: InnocuousRule,
    /// Detector accuracy on its held-out 20% of the real/fake mix.
    pub detector_holdout_accuracy: f64,
    to_biased: AtomicU64,
    to_innocuous: AtomicU64,
}

impl Scaffold {
    /// Trains the scaffold on the model owner's data.
    ///
    /// The detector learns on a 50/50 mix of real rows and one Gaussian
    /// perturbation per row, with 20% of the mix held out to measure
    /// detector accuracy.
    pub fn train(
        train: &Dataset,
        schema: &Schema,
        protected: &str,
        legit_feature: &str,
        perturb: &PerturbConfig,
        forest: &ForestConfig,
    ) -> Result<Scaffold> {
        let one_per_row = PerturbConfig {
            per_row: 1,
            ..perturb.clone()
        };
        let mut r = rng::stream(perturb.seed, 0);
        let fake = gen_perturbations(train, &one_per_row, &mut r)?;

        let mut rows: Vec<Vec<f64>> = train.rows().to_vec();
        rows.extend(fake.rows().iter().cloned());
        let mut labels = vec![0u8; train.n_rows()];
        labels.extend(vec![1u8; fake.n_rows()]);

        let mut indices: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        indices.shuffle(&mut r);
        let holdout_n = (rows.len() as f64 * 0.2).round() as usize;
        let (holdout_idx, train_idx) = indices.split_at(holdout_n.max(1));

        let pick = |idx: &[usize]| -> Result<Dataset> {
            Dataset::new(
                train.feature_names().to_vec(),
                idx.iter().map(|&i| rows[i].clone()).collect(),
                Some(idx.iter().map(|&i| labels[i]).collect()),
                vec![],
            )
        };
        let fit_set = pick(train_idx)?;
        let holdout_set = pick(holdout_idx)?;
        let detector = train_forest(&fit_set, forest)?;
        let detector_holdout_accuracy =
            crate::learners::accuracy_on(&detector, &holdout_set)?;

        Ok(Scaffold {
            detector,
            biased: make_biased_model(train, schema, protected)?,
            innocuous: make_innocuous_model(train, schema, legit_feature)?,
            detector_holdout_accuracy,
            to_biased: AtomicU64::new(0),
            to_innocuous: AtomicU64::new(0),
        })
    }

    /// (queries routed to the biased model, queries routed to the decoy).
    pub fn routing_counts(&self) -> (u64, u64) {
        (
            self.to_biased.load(Ordering::Relaxed),
            self.to_innocuous.load(Ordering::Relaxed),
        )
    }

    pub fn reset_routing_counts(&self) {
        self.to_biased.store(0, Ordering::Relaxed);
        self.to_innocuous.store(0, Ordering::Relaxed);
    }
}

impl Predictor for Scaffold {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        if self.detector.predict(row) == 1 {
            self.to_innocuous.fetch_add(1, Ordering::Relaxed);
            self.innocuous.predict_proba(row)
        } else {
            self.to_biased.fetch_add(1, Ordering::Relaxed);
            self.biased.predict_proba(row)
        }
    }

    fn n_features(&self) -> usize {
        self.biased.n_features()
    }
}
