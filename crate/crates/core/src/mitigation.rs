//! Bias-mitigation baselines.
//!
//! Deliberately simplified re-creations of three published mitigation
//! approaches, built from their one-paragraph descriptions rather than
//! their codebases — just enough to serve as comparison points:
//!
//! - [`fairmask_train`]: mask the protected value at inference with a
//!   prediction from the other features.
//! - [`fair_smote_train`]: drop rows whose prediction flips when the
//!   protected value is toggled, then even out the four
//!   (group x label) subgroups by duplicating rows.
//! - [`maat_train`]: average a performance model with a fairness model
//!   trained on the rebalanced data.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{train_forest, train_tree, DecisionTree, ForestConfig, Predictor, RandomForest};
use crate::rng;

/// Which transformation a mitigated pipeline applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transformation {
    MaskedProtected,
    ResampledData,
    TwoModelEnsemble,
}

/// A trained mitigation pipeline. Satisfies [`Predictor`] and records the
/// protected attribute it was pointed at.
pub struct MitigatedPipeline {
    model: MitigatedModel,
    pub transformation: Transformation,
    pub protected: String,
    pub warnings: Vec<String>,
}

enum MitigatedModel {
    Masked {
        mask: DecisionTree,
        forest: RandomForest,
        protected_col: usize,
    },
    Plain(RandomForest),
    Ensemble {
        performance: RandomForest,
        fairness: RandomForest,
    },
}

impl MitigatedPipeline {
    /// The (performance, fairness) forests of a two-model ensemble.
    pub fn ensemble_models(&self) -> Option<(&RandomForest, &RandomForest)> {
        match &self.model {
            MitigatedModel::Ensemble {
                performance,
                fairness,
            } => Some((performance, fairness)),
            _ => None,
        }
    }
}

impl Predictor for MitigatedPipeline {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        match &self.model {
            MitigatedModel::Masked {
                mask,
                forest,
                protected_col,
            } => {
                let reduced = drop_column(row, *protected_col);
                let masked_value = f64::from(mask.predict(&reduced));
                let mut patched = row.to_vec();
                patched[*protected_col] = masked_value;
                forest.predict_proba(&patched)
            }
            MitigatedModel::Plain(forest) => forest.predict_proba(row),
            MitigatedModel::Ensemble {
                performance,
                fairness,
            } => (performance.predict_proba(row) + fairness.predict_proba(row)) / 2.0,
        }
    }

    fn n_features(&self) -> usize {
        match &self.model {
            MitigatedModel::Masked { forest, .. } => forest.n_features(),
            MitigatedModel::Plain(forest) => forest.n_features(),
            MitigatedModel::Ensemble { performance, .. } => performance.n_features(),
        }
    }
}

fn drop_column(row: &[f64], col: usize) -> Vec<f64> {
    row.iter()
        .enumerate()
        .filter_map(|(i, &v)| (i != col).then_some(v))
        .collect()
}

fn protected_column(ds: &Dataset, protected: &str) -> Result<usize> {
    ds.feature_index(protected)
        .ok_or_else(|| Error::Contract(format!("unknown protected attribute '{protected}'")))
}

/// Trains the masking pipeline: a tree learns the protected value from
/// the other features, and at inference the query's protected value is
/// overwritten with that prediction before the normally trained forest
/// answers.
pub fn fairmask_train(
    train: &Dataset,
    protected: &str,
    cfg: &ForestConfig,
) -> Result<MitigatedPipeline> {
    let protected_col = protected_column(train, protected)?;
    let labels = train.labels_required()?;

    // mask model: protected bit regressed on every other feature
    let mask_rows: Vec<Vec<f64>> = train
        .rows()
        .iter()
        .map(|r| drop_column(r, protected_col))
        .collect();
    let mask_labels: Vec<u8> = train
        .rows()
        .iter()
        .map(|r| u8::from(r[protected_col] >= 0.5))
        .collect();
    let mask_names: Vec<String> = train
        .feature_names()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != protected_col)
        .map(|(_, n)| n.clone())
        .collect();
    let mask_ds = Dataset::new(mask_names, mask_rows, Some(mask_labels), vec![])?;
    let mask_cfg = ForestConfig {
        features_per_split: Some(mask_ds.n_features()),
        bootstrap: false,
        seed: rng::derive(cfg.seed, 1),
        ..cfg.clone()
    };
    let mask = train_tree(&mask_ds, &mask_cfg, &mut rng::stream(mask_cfg.seed, 0))?;

    let forest = train_forest(&train.with_labels(labels.to_vec())?, cfg)?;
    Ok(MitigatedPipeline {
        model: MitigatedModel::Masked {
            mask,
            forest,
            protected_col,
        },
        transformation: Transformation::MaskedProtected,
        protected: protected.to_string(),
        warnings: Vec::new(),
    })
}

/// Evens out the four (privileged x label) subgroups by duplicating rows
/// uniformly at random up to the largest subgroup's size. Subgroups that
/// are empty are skipped and reported.
pub fn rebalance_subgroups<R: Rng>(
    ds: &Dataset,
    protected: &str,
    rng: &mut R,
    warnings: &mut Vec<String>,
) -> Result<Dataset> {
    let labels = ds.labels_required()?;
    let groups = ds
        .group(protected)
        .ok_or_else(|| Error::Contract(format!("no group tags for '{protected}'")))?;
    let mut cells: [Vec<usize>; 4] = Default::default();
    for i in 0..ds.n_rows() {
        let cell = usize::from(groups[i]) * 2 + labels[i] as usize;
        cells[cell].push(i);
    }
    let target = cells.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut picked = Vec::new();
    for (idx, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            warnings.push(format!(
                "subgroup {} (privileged={}, label={}) empty; skipped balancing",
                idx,
                idx / 2,
                idx % 2
            ));
            continue;
        }
        picked.extend(cell.iter().copied());
        for _ in cell.len()..target {
            picked.push(cell[rng.gen_range(0..cell.len())]);
        }
    }
    Ok(ds.select(&picked))
}

/// Situation testing plus subgroup rebalancing, then a fresh forest.
pub fn fair_smote_train<R: Rng>(
    train: &Dataset,
    protected: &str,
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<MitigatedPipeline> {
    let protected_col = protected_column(train, protected)?;
    let groups = train
        .group(protected)
        .ok_or_else(|| Error::Contract(format!("no group tags for '{protected}'")))?;
    if groups.iter().all(|&g| g) || groups.iter().all(|&g| !g) {
        return Err(Error::Contract(
            "fair_smote needs both protected groups present".into(),
        ));
    }

    // (a) situation testing: drop rows whose prediction flips when only
    // the protected value is toggled
    let provisional_cfg = ForestConfig {
        seed: rng::derive(cfg.seed, 2),
        ..cfg.clone()
    };
    let provisional = train_forest(train, &provisional_cfg)?;
    let kept: Vec<usize> = (0..train.n_rows())
        .filter(|&i| {
            let row = train.row(i);
            let mut flipped = row.to_vec();
            flipped[protected_col] = 1.0 - flipped[protected_col];
            provisional.predict(row) == provisional.predict(&flipped)
        })
        .collect();
    let mut warnings = Vec::new();
    if kept.is_empty() {
        return Err(Error::Size(
            "situation testing removed every training row".into(),
        ));
    }
    if kept.len() < train.n_rows() {
        warnings.push(format!(
            "situation testing removed {} of {} rows",
            train.n_rows() - kept.len(),
            train.n_rows()
        ));
    }
    let kept_ds = train.select(&kept);

    // (b) even out the (group x label) distributions
    let balanced = rebalance_subgroups(&kept_ds, protected, rng, &mut warnings)?;
    let forest = train_forest(&balanced, cfg)?;
    Ok(MitigatedPipeline {
        model: MitigatedModel::Plain(forest),
        transformation: Transformation::ResampledData,
        protected: protected.to_string(),
        warnings,
    })
}

/// Two-model ensemble: a forest on the original data and one on the
/// rebalanced data, probabilities averaged.
pub fn maat_train<R: Rng>(
    train: &Dataset,
    protected: &str,
    cfg: &ForestConfig,
    rng: &mut R,
) -> Result<MitigatedPipeline> {
    protected_column(train, protected)?;
    let groups = train
        .group(protected)
        .ok_or_else(|| Error::Contract(format!("no group tags for '{protected}'")))?;
    if groups.iter().all(|&g| g) || groups.iter().all(|&g| !g) {
        return Err(Error::Contract(
            "maat needs both protected groups present".into(),
        ));
    }
    let mut warnings = Vec::new();
    let performance = train_forest(train, cfg)?;
    let balanced = rebalance_subgroups(train, protected, rng, &mut warnings)?;
    let fairness_cfg = ForestConfig {
        seed: rng::derive(cfg.seed, 3),
        ..cfg.clone()
    };
    let fairness = train_forest(&balanced, &fairness_cfg)?;
    Ok(MitigatedPipeline {
        model: MitigatedModel::Ensemble {
            performance,
            fairness,
        },
        transformation: Transformation::TwoModelEnsemble,
        protected: protected.to_string(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_biased;
    use crate::metrics::MetricReport;

    fn spd_of(model: &dyn Predictor, test: &Dataset) -> f64 {
        let pred: Vec<u8> = test.rows().iter().map(|r| model.predict(r)).collect();
        let report = MetricReport::compute(
            &pred,
            test.labels().unwrap(),
            test.group("protected").unwrap(),
        )
        .unwrap();
        report.spd.unwrap()
    }

    #[test]
    fn fairmask_constant_protected_masks_to_constant() {
        let (ds, _) = synth_biased(200, 0.5, 0.0, 70).unwrap();
        // force the protected column to a constant
        let rows: Vec<Vec<f64>> = ds
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r[4] = 1.0;
                r
            })
            .collect();
        let ds2 = Dataset::new(
            ds.feature_names().to_vec(),
            rows,
            ds.labels().map(|l| l.to_vec()),
            vec![crate::data::ProtectedTags {
                name: "protected".into(),
                privileged: vec![true; 200],
            }],
        )
        .unwrap();
        let pipeline = fairmask_train(&ds2, "protected", &ForestConfig::default()).unwrap();
        if let MitigatedModel::Masked { mask, .. } = &pipeline.model {
            // a degenerate regression always answers the constant
            for row in ds2.rows().iter().take(20) {
                assert_eq!(mask.predict(&drop_column(row, 4)), 1);
            }
        } else {
            panic!("expected masked model");
        }
    }

    #[test]
    fn fairmask_is_invariant_to_protected_toggle() {
        let (ds, _) = synth_biased(300, 0.9, 0.05, 71).unwrap();
        let pipeline = fairmask_train(&ds, "protected", &ForestConfig::default()).unwrap();
        let col = ds.feature_index("protected").unwrap();
        for row in ds.rows().iter().take(50) {
            let mut toggled = row.clone();
            toggled[col] = 1.0 - toggled[col];
            assert_eq!(
                pipeline.predict_proba(row),
                pipeline.predict_proba(&toggled)
            );
        }
    }

    #[test]
    fn fairmask_reduces_spd_on_biased_data() {
        let mut masked_spds = Vec::new();
        let mut base_spds = Vec::new();
        for seed in 0..20u64 {
            let (ds, _) = synth_biased(400, 0.9, 0.05, 700 + seed).unwrap();
            let train = ds.select(&(0..300).collect::<Vec<_>>());
            let test = ds.select(&(300..400).collect::<Vec<_>>());
            let cfg = ForestConfig {
                seed,
                n_trees: 20,
                ..Default::default()
            };
            let base = train_forest(&train, &cfg).unwrap();
            let masked = fairmask_train(&train, "protected", &cfg).unwrap();
            base_spds.push(spd_of(&base, &test).abs());
            masked_spds.push(spd_of(&masked, &test).abs());
        }
        let med = |xs: &mut Vec<f64>| {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs[xs.len() / 2]
        };
        assert!(med(&mut masked_spds) <= med(&mut base_spds));
    }

    #[test]
    fn fair_smote_balances_subgroups() {
        let (ds, _) = synth_biased(400, 0.8, 0.05, 72).unwrap();
        let mut warnings = Vec::new();
        let mut r = rng::stream(1, 0);
        let balanced = rebalance_subgroups(&ds, "protected", &mut r, &mut warnings).unwrap();
        let labels = balanced.labels().unwrap();
        let groups = balanced.group("protected").unwrap();
        let mut counts = [0usize; 4];
        for (l, g) in labels.iter().zip(groups) {
            counts[usize::from(*g) * 2 + *l as usize] += 1;
        }
        assert!(warnings.is_empty());
        assert_eq!(counts[0], counts[1]);
        assert_eq!(counts[1], counts[2]);
        assert_eq!(counts[2], counts[3]);
        // equal base rates across groups follows from equal cell sizes
        let rate_unpriv = counts[1] as f64 / (counts[0] + counts[1]) as f64;
        let rate_priv = counts[3] as f64 / (counts[2] + counts[3]) as f64;
        assert_eq!(rate_unpriv, rate_priv);
    }

    #[test]
    fn fair_smote_group_blind_model_removes_nothing() {
        // bias 0: the provisional forest has no reason to use the
        // protected bit, so situation testing should drop few or no rows
        let (ds, _) = synth_biased(300, 0.0, 0.0, 73).unwrap();
        let cfg = ForestConfig {
            seed: 2,
            n_trees: 20,
            ..Default::default()
        };
        let mut r = rng::stream(3, 0);
        let pipeline = fair_smote_train(&ds, "protected", &cfg, &mut r).unwrap();
        let removed = pipeline
            .warnings
            .iter()
            .find_map(|w| {
                w.strip_prefix("situation testing removed ")
                    .and_then(|rest| rest.split(' ').next())
                    .and_then(|n| n.parse::<usize>().ok())
            })
            .unwrap_or(0);
        assert!(removed <= 15, "removed {removed} rows");
    }

    #[test]
    fn fair_smote_single_group_errors() {
        let (ds, _) = synth_biased(100, 0.5, 0.0, 74).unwrap();
        let groups = ds.group("protected").unwrap().to_vec();
        let only_priv: Vec<usize> = (0..ds.n_rows()).filter(|&i| groups[i]).collect();
        let one_group = ds.select(&only_priv);
        let mut r = rng::stream(4, 0);
        assert!(fair_smote_train(&one_group, "protected", &ForestConfig::default(), &mut r).is_err());
    }

    #[test]
    fn maat_averages_probabilities() {
        let (ds, _) = synth_biased(300, 0.8, 0.05, 75).unwrap();
        let cfg = ForestConfig {
            seed: 5,
            n_trees: 10,
            ..Default::default()
        };
        let mut r = rng::stream(6, 0);
        let pipeline = maat_train(&ds, "protected", &cfg, &mut r).unwrap();
        if let MitigatedModel::Ensemble {
            performance,
            fairness,
        } = &pipeline.model
        {
            for row in ds.rows().iter().take(30) {
                let expect =
                    (performance.predict_proba(row) + fairness.predict_proba(row)) / 2.0;
                assert_eq!(pipeline.predict_proba(row), expect);
            }
        } else {
            panic!("expected ensemble");
        }
    }

    #[test]
    fn maat_identical_inner_models_match_either() {
        let (ds, _) = synth_biased(200, 0.5, 0.0, 76).unwrap();
        let cfg = ForestConfig {
            seed: 7,
            n_trees: 5,
            ..Default::default()
        };
        let forest = train_forest(&ds, &cfg).unwrap();
        let pipeline = MitigatedPipeline {
            model: MitigatedModel::Ensemble {
                performance: forest.clone(),
                fairness: forest.clone(),
            },
            transformation: Transformation::TwoModelEnsemble,
            protected: "protected".into(),
            warnings: vec![],
        };
        for row in ds.rows().iter().take(20) {
            assert_eq!(pipeline.predict_proba(row), forest.predict_proba(row));
        }
    }

    #[test]
    fn maat_stub_probabilities_average() {
        struct Fixed(f64);
        impl Predictor for Fixed {
            fn predict_proba(&self, _: &[f64]) -> f64 {
                self.0
            }
            fn n_features(&self) -> usize {
                1
            }
        }
        let a = Fixed(0.9);
        let b = Fixed(0.3);
        let proba = (a.predict_proba(&[0.0]) + b.predict_proba(&[0.0])) / 2.0;
        assert!((proba - 0.6).abs() < 1e-12);
        assert_eq!(u8::from(proba > 0.5), 1);
    }

    #[test]
    fn maat_spd_lies_between_inner_models() {
        let mut ensemble_between = 0usize;
        let trials = 20u64;
        for seed in 0..trials {
            let (ds, _) = synth_biased(400, 0.9, 0.05, 770 + seed).unwrap();
            let train = ds.select(&(0..300).collect::<Vec<_>>());
            let test = ds.select(&(300..400).collect::<Vec<_>>());
            let cfg = ForestConfig {
                seed,
                n_trees: 20,
                ..Default::default()
            };
            let mut r = rng::stream(seed, 9);
            let pipeline = maat_train(&train, "protected", &cfg, &mut r).unwrap();
            let (lo, hi) = if let MitigatedModel::Ensemble {
                performance,
                fairness,
            } = &pipeline.model
            {
                let a = spd_of(performance, &test).abs();
                let b = spd_of(fairness, &test).abs();
                (a.min(b), a.max(b))
            } else {
                unreachable!()
            };
            let e = spd_of(&pipeline, &test).abs();
            if e >= lo - 0.1 && e <= hi + 0.1 {
                ensemble_between += 1;
            }
        }
        assert!(ensemble_between > trials as usize / 2);
    }
}
