//! The end-to-end experiment runner.
//!
//! One audit repeat runs: split the data 40:40:20; train the original
//! model on Train1 and score it on Test; bi-cluster the unlabeled Train2;
//! sample one row per leaf; label the samples by querying the black box
//! (the honest model, or the lying scaffold when the adversary is on);
//! train the surrogate on those few labeled rows; score it on Test; and
//! compare the influential-feature sets of both models. The runner
//! repeats this across seeds and datasets, adds the mitigation baselines,
//! and aggregates win/tie/loss tables and explanation-overlap reports.
//!
//! Every stream of randomness is derived from `(master seed, unit,
//! repeat, purpose)`, so rerunning a config reproduces the output files
//! byte for byte. Label queries to the black box pass through a counting
//! wrapper, and the runner asserts the count equals the sampled leaf
//! total: the query budget is measured, not assumed.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversary::{PerturbConfig, Scaffold};
use crate::cluster::{bicluster, sample_leaves, ClusterConfig};
use crate::data::{encode_normalize, load_csv, synth_biased, tri_split, Dataset, Schema, TriSplit};
use crate::error::{Error, Result};
use crate::explain::{influential_set, jaccard, ExplainConfig, InfluenceSet};
use crate::learners::{train_forest, CountingPredictor, ForestConfig, Predictor, RandomForest};
use crate::metrics::{MetricId, MetricReport};
use crate::mitigation::{fair_smote_train, fairmask_train, maat_train};
use crate::rng::{derive, stream};
use crate::stats::{median, win_tie_loss, Outcome, StatConfig, WTLTable};

const SALT_UNIT: u64 = 0x01;
const SALT_REPEAT: u64 = 0x02;
const SALT_SPLIT: u64 = 0x03;
const SALT_MODEL1: u64 = 0x04;
const SALT_CLUSTER: u64 = 0x05;
const SALT_SAMPLE: u64 = 0x06;
const SALT_SURROGATE: u64 = 0x07;
const SALT_SCAFFOLD: u64 = 0x08;
const SALT_MITIGATION: u64 = 0x09;
const SALT_EXPLAIN: u64 = 0x0a;
const SALT_WTL: u64 = 0x0b;
const SALT_SYNTH: u64 = 0x0c;

/// The methods an experiment can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Stealth,
    Maat,
    FairSmote,
    Fairmask,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::Stealth,
        Method::Maat,
        Method::FairSmote,
        Method::Fairmask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Stealth => "stealth",
            Method::Maat => "maat",
            Method::FairSmote => "fair_smote",
            Method::Fairmask => "fairmask",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where one dataset comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Csv { csv: PathBuf, schema: PathBuf },
    Synthetic(SyntheticSpec),
}

/// Parameters of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub bias_strength: f64,
    #[serde(default)]
    pub noise: f64,
}

/// One dataset entry of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: DataSource,
    /// Protected attributes to audit; default: all the schema declares.
    #[serde(default)]
    pub protected: Option<Vec<String>>,
}

/// Full experiment configuration, mirrored by the CLI's JSON config file.
///
/// The `seed` fields inside the nested configs are ignored here: the
/// runner derives every stream from the master `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub adversary: bool,
    /// Decoy feature for the scaffold; default: the first non-protected
    /// feature.
    #[serde(default)]
    pub legit_feature: Option<String>,
    /// Compute influential sets during stealth runs (skippable to speed
    /// up purely score-based comparisons).
    #[serde(default = "default_true")]
    pub explain_influence: bool,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    #[serde(default)]
    pub stats: StatConfig,
}

fn default_repeats() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    vec![Method::Stealth, Method::Baseline]
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_reader(file)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Contract("config lists no datasets".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Contract("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Contract("config lists no methods".into()));
        }
        Ok(())
    }

    /// A minimal synthetic-data config, used by tests and as a template.
    pub fn synthetic(n: usize, bias_strength: f64, noise: f64) -> ExperimentConfig {
        ExperimentConfig {
            datasets: vec![DatasetSpec {
                name: "synth".into(),
                source: DataSource::Synthetic(SyntheticSpec {
                    n,
                    bias_strength,
                    noise,
                }),
                protected: None,
            }],
            repeats: default_repeats(),
            seed: 0,
            methods: default_methods(),
            adversary: false,
            legit_feature: None,
            explain_influence: true,
            cluster: ClusterConfig::default(),
            forest: ForestConfig::default(),
            explain: ExplainConfig::default(),
            perturb: PerturbConfig::default(),
            stats: StatConfig::default(),
        }
    }
}

/// One (dataset, protected attribute) audit target.
pub struct RunUnit {
    pub dataset_name: String,
    pub data: Dataset,
    pub schema: Schema,
    pub protected: String,
    pub legit_feature: String,
}

impl RunUnit {
    pub fn id(&self) -> String {
        format!("{}:{}", self.dataset_name, self.protected)
    }
}

/// The outcome of one (unit, method, repeat) cell.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub dataset: String,
    pub protected: String,
    pub method: Method,
    pub repeat: usize,
    pub report: MetricReport,
    /// Label queries issued to the black box; zero for methods that train
    /// on labeled data directly.
    pub query_budget: usize,
    pub seconds: f64,
    pub influence: Option<InfluenceSet>,
    /// Explanation overlap between the surrogate and the original model.
    pub jaccard_m1_m2: Option<f64>,
}

/// Explanation-overlap scores of one repeat under the adversary.
#[derive(Debug, Clone, Copy)]
pub struct Rq1Row {
    pub repeat: usize,
    pub slack_jacc: f64,
    pub base_jacc: f64,
}

/// Per-dataset explanation-overlap report with the repeat median.
#[derive(Debug, Clone)]
pub struct Rq1Report {
    pub dataset: String,
    pub protected: String,
    pub rows: Vec<Rq1Row>,
    pub median_slack: f64,
    pub median_base: f64,
}

/// Everything a full `run` produces.
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub rq1: Vec<Rq1Report>,
    pub wtl: Option<WTLTable>,
}

/// Executes experiments described by an [`ExperimentConfig`].
pub struct Runner {
    cfg: ExperimentConfig,
}

struct Prepared {
    split: TriSplit,
    model1: RandomForest,
    repeat_seed: u64,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Runner> {
        cfg.validate()?;
        Ok(Runner { cfg })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Loads every dataset and expands (dataset x protected attribute)
    /// combinations.
    pub fn units(&self) -> Result<Vec<RunUnit>> {
        let mut units = Vec::new();
        for (idx, spec) in self.cfg.datasets.iter().enumerate() {
            let (data, schema) = self.load(spec, idx)?;
            let protected_names: Vec<String> = match &spec.protected {
                Some(names) => names.clone(),
                None => schema.protected.iter().map(|p| p.name.clone()).collect(),
            };
            if protected_names.is_empty() {
                return Err(Error::Schema(format!(
                    "dataset '{}' declares no protected attribute",
                    spec.name
                )));
            }
            for protected in protected_names {
                if !schema.is_protected(&protected) {
                    return Err(Error::Schema(format!(
                        "'{}' is not a protected attribute of dataset '{}'",
                        protected, spec.name
                    )));
                }
                let legit_feature = self.pick_legit(&schema)?;
                units.push(RunUnit {
                    dataset_name: spec.name.clone(),
                    data: data.clone(),
                    schema: schema.clone(),
                    protected,
                    legit_feature,
                });
            }
        }
        Ok(units)
    }

    fn load(&self, spec: &DatasetSpec, idx: usize) -> Result<(Dataset, Schema)> {
        match &spec.source {
            DataSource::Csv { csv, schema } => {
                let schema = Schema::from_json_file(schema)?;
                let raw = load_csv(csv, &schema)?;
                let ds = encode_normalize(&raw, &schema)?;
                Ok((ds, schema))
            }
            DataSource::Synthetic(synth) => {
                let seed = derive(derive(self.cfg.seed, SALT_SYNTH), idx as u64);
                synth_biased(synth.n, synth.bias_strength, synth.noise, seed)
            }
        }
    }

    fn pick_legit(&self, schema: &Schema) -> Result<String> {
        if let Some(name) = &self.cfg.legit_feature {
            if schema.feature_index(name).is_none() {
                return Err(Error::Schema(format!("legit feature '{name}' not found")));
            }
            if schema.is_protected(name) {
                return Err(Error::Schema(format!(
                    "legit feature '{name}' must not be protected"
                )));
            }
            return Ok(name.clone());
        }
        schema
            .features
            .iter()
            .find(|f| !schema.is_protected(&f.name))
            .map(|f| f.name.clone())
            .ok_or_else(|| Error::Schema("no non-protected feature for the decoy".into()))
    }

    fn repeat_seed(&self, unit_idx: usize, repeat: usize) -> u64 {
        let unit_seed = derive(derive(self.cfg.seed, SALT_UNIT), unit_idx as u64);
        derive(derive(unit_seed, SALT_REPEAT), repeat as u64)
    }

    fn prepare(&self, unit: &RunUnit, unit_idx: usize, repeat: usize) -> Result<Prepared> {
        let repeat_seed = self.repeat_seed(unit_idx, repeat);
        let split = tri_split(&unit.data, derive(repeat_seed, SALT_SPLIT))?;
        let model1_cfg = ForestConfig {
            seed: derive(repeat_seed, SALT_MODEL1),
            ..self.cfg.forest.clone()
        };
        let model1 = train_forest(&split.train1, &model1_cfg)?;
        Ok(Prepared {
            split,
            model1,
            repeat_seed,
        })
    }

    fn train_scaffold(&self, unit: &RunUnit, prepared: &Prepared) -> Result<Scaffold> {
        let perturb = PerturbConfig {
            seed: derive(prepared.repeat_seed, SALT_SCAFFOLD),
            ..self.cfg.perturb.clone()
        };
        let forest = ForestConfig {
            seed: derive(prepared.repeat_seed, derive(SALT_SCAFFOLD, 1)),
            ..self.cfg.forest.clone()
        };
        Scaffold::train(
            &prepared.split.train1.without_labels(),
            &unit.schema,
            &unit.protected,
            &unit.legit_feature,
            &perturb,
            &forest,
        )
    }

    /// Clusters Train2, samples one row per leaf, labels the samples by
    /// querying `blackbox`, and trains the surrogate. Returns the
    /// surrogate and the measured query budget.
    pub fn train_surrogate(
        &self,
        train2: &Dataset,
        blackbox: &dyn Predictor,
        repeat_seed: u64,
    ) -> Result<(RandomForest, usize)> {
        let cluster_cfg = ClusterConfig {
            seed: derive(repeat_seed, SALT_CLUSTER),
            ..self.cfg.cluster.clone()
        };
        let tree = bicluster(train2, &cluster_cfg)?;
        let mut sample_rng = stream(derive(repeat_seed, SALT_SAMPLE), 0);
        let samples = sample_leaves(
            &tree,
            cluster_cfg.samples_per_leaf,
            cluster_cfg.sample_mode,
            &mut sample_rng,
        )?;

        let counter = CountingPredictor::new(blackbox);
        let labels: Vec<u8> = samples
            .iter()
            .map(|&i| counter.predict(train2.row(i)))
            .collect();
        assert_eq!(
            counter.calls() as usize,
            samples.len(),
            "query budget must equal the sampled leaf total"
        );

        let labeled = train2.select(&samples).with_labels(labels)?;
        let surrogate_cfg = ForestConfig {
            seed: derive(repeat_seed, SALT_SURROGATE),
            ..self.cfg.forest.clone()
        };
        let surrogate = train_forest(&labeled, &surrogate_cfg)?;
        Ok((surrogate, samples.len()))
    }

    fn score(&self, model: &dyn Predictor, test: &Dataset, protected: &str) -> Result<MetricReport> {
        let pred: Vec<u8> = test.rows().iter().map(|r| model.predict(r)).collect();
        let truth = test.labels_required()?;
        let groups = test
            .group(protected)
            .ok_or_else(|| Error::Contract(format!("no group tags for '{protected}'")))?;
        MetricReport::compute(&pred, truth, groups)
    }

    fn explain_cfg(&self, repeat_seed: u64, slot: u64) -> ExplainConfig {
        ExplainConfig {
            seed: derive(derive(repeat_seed, SALT_EXPLAIN), slot),
            ..self.cfg.explain.clone()
        }
    }

    /// Runs one method for one repeat.
    pub fn run_method(
        &self,
        unit: &RunUnit,
        unit_idx: usize,
        method: Method,
        repeat: usize,
    ) -> Result<RunRecord> {
        let started = Instant::now();
        let prepared = self.prepare(unit, unit_idx, repeat)?;
        let test = &prepared.split.test;
        let mitigation_seed = derive(prepared.repeat_seed, SALT_MITIGATION);

        let (report, query_budget, influence, jaccard_m1_m2) = match method {
            Method::Baseline => (
                self.score(&prepared.model1, test, &unit.protected)?,
                0,
                None,
                None,
            ),
            Method::Stealth => {
                let scaffold = if self.cfg.adversary {
                    Some(self.train_scaffold(unit, &prepared)?)
                } else {
                    None
                };
                let blackbox: &dyn Predictor = match &scaffold {
                    Some(s) => s,
                    None => &prepared.model1,
                };
                let (surrogate, budget) =
                    self.train_surrogate(&prepared.split.train2, blackbox, prepared.repeat_seed)?;
                let report = self.score(&surrogate, test, &unit.protected)?;
                let (influence, jac) = if self.cfg.explain_influence {
                    let test_rows = test.without_labels();
                    let set_m2 = influential_set(
                        &surrogate,
                        &test_rows,
                        &self.explain_cfg(prepared.repeat_seed, 0),
                    )?;
                    let set_m1 = influential_set(
                        &prepared.model1,
                        &test_rows,
                        &self.explain_cfg(prepared.repeat_seed, 1),
                    )?;
                    let jac = jaccard(&set_m2, &set_m1);
                    (Some(set_m2), Some(jac))
                } else {
                    (None, None)
                };
                (report, budget, influence, jac)
            }
            Method::Maat => {
                let mut r = stream(mitigation_seed, 0);
                let cfg = ForestConfig {
                    seed: derive(mitigation_seed, 1),
                    ..self.cfg.forest.clone()
                };
                let pipeline = maat_train(&prepared.split.train1, &unit.protected, &cfg, &mut r)?;
                (self.score(&pipeline, test, &unit.protected)?, 0, None, None)
            }
            Method::FairSmote => {
                let mut r = stream(mitigation_seed, 1);
                let cfg = ForestConfig {
                    seed: derive(mitigation_seed, 2),
                    ..self.cfg.forest.clone()
                };
                let pipeline =
                    fair_smote_train(&prepared.split.train1, &unit.protected, &cfg, &mut r)?;
                (self.score(&pipeline, test, &unit.protected)?, 0, None, None)
            }
            Method::Fairmask => {
                let cfg = ForestConfig {
                    seed: derive(mitigation_seed, 3),
                    ..self.cfg.forest.clone()
                };
                let pipeline = fairmask_train(&prepared.split.train1, &unit.protected, &cfg)?;
                (self.score(&pipeline, test, &unit.protected)?, 0, None, None)
            }
        };

        if method == Method::Stealth {
            assert!(query_budget > 0, "stealth runs must issue queries");
        }
        Ok(RunRecord {
            dataset: unit.dataset_name.clone(),
            protected: unit.protected.clone(),
            method,
            repeat,
            report,
            query_budget,
            seconds: started.elapsed().as_secs_f64(),
            influence,
            jaccard_m1_m2,
        })
    }

    /// The explanation-overlap experiment. Requires the adversary.
    ///
    /// Per repeat, four influential sets are computed over the test rows:
    /// the honest original model, the surrogate extracted from it, the
    /// scaffold as an explainer sees it (perturbation queries land on the
    /// decoy), and the surrogate extracted from the scaffold. The liar
    /// comparison pairs the scaffold-facing sets; the honest comparison
    /// pairs the other two.
    pub fn run_rq1(&self) -> Result<Vec<Rq1Report>> {
        if !self.cfg.adversary {
            return Err(Error::Contract(
                "the explanation-overlap experiment requires the adversary".into(),
            ));
        }
        let units = self.units()?;
        let mut reports = Vec::new();
        for (unit_idx, unit) in units.iter().enumerate() {
            let mut rows = Vec::with_capacity(self.cfg.repeats);
            for repeat in 0..self.cfg.repeats {
                let prepared = self.prepare(unit, unit_idx, repeat)?;
                let scaffold = self.train_scaffold(unit, &prepared)?;
                // both extractions issue the same queries; only the
                // answers differ when the black box lies
                let (m2_honest, _) = self.train_surrogate(
                    &prepared.split.train2,
                    &prepared.model1,
                    prepared.repeat_seed,
                )?;
                let (m2_scaffold, _) = self.train_surrogate(
                    &prepared.split.train2,
                    &scaffold,
                    prepared.repeat_seed,
                )?;
                let test_rows = prepared.split.test.without_labels();
                let set_m1 = influential_set(
                    &prepared.model1,
                    &test_rows,
                    &self.explain_cfg(prepared.repeat_seed, 10),
                )?;
                let set_m2 = influential_set(
                    &m2_honest,
                    &test_rows,
                    &self.explain_cfg(prepared.repeat_seed, 11),
                )?;
                let set_scaffold = influential_set(
                    &scaffold,
                    &test_rows,
                    &self.explain_cfg(prepared.repeat_seed, 12),
                )?;
                let set_m2_scaffold = influential_set(
                    &m2_scaffold,
                    &test_rows,
                    &self.explain_cfg(prepared.repeat_seed, 13),
                )?;
                rows.push(Rq1Row {
                    repeat,
                    slack_jacc: jaccard(&set_m2_scaffold, &set_scaffold),
                    base_jacc: jaccard(&set_m2, &set_m1),
                });
            }
            let slacks: Vec<f64> = rows.iter().map(|r| r.slack_jacc).collect();
            let bases: Vec<f64> = rows.iter().map(|r| r.base_jacc).collect();
            reports.push(Rq1Report {
                dataset: unit.dataset_name.clone(),
                protected: unit.protected.clone(),
                rows,
                median_slack: median(&slacks),
                median_base: median(&bases),
            });
        }
        Ok(reports)
    }

    /// Score-comparison experiment: every configured method against the
    /// baseline, cell by cell, into a win/tie/loss table.
    pub fn run_rq2_rq3(&self) -> Result<(Vec<RunRecord>, WTLTable)> {
        if !self.cfg.methods.contains(&Method::Baseline) || self.cfg.methods.len() < 2 {
            return Err(Error::Contract(
                "score comparison needs the baseline plus at least one method".into(),
            ));
        }
        let units = self.units()?;
        let mut records = Vec::new();
        for (unit_idx, unit) in units.iter().enumerate() {
            for repeat in 0..self.cfg.repeats {
                for &method in &self.cfg.methods {
                    records.push(self.run_method(unit, unit_idx, method, repeat)?);
                }
            }
        }
        let wtl = self.build_wtl(&units, &records)?;
        Ok((records, wtl))
    }

    /// Builds the win/tie/loss table from per-repeat records. Cells with
    /// fewer than two defined values on either side are excluded and
    /// counted as such.
    pub fn build_wtl(&self, units: &[RunUnit], records: &[RunRecord]) -> Result<WTLTable> {
        let mut table = WTLTable::default();
        let methods: Vec<Method> = self
            .cfg
            .methods
            .iter()
            .copied()
            .filter(|&m| m != Method::Baseline)
            .collect();
        for &method in &methods {
            let row = table.row_mut(method.name());
            row.performance.cells = units.len() * MetricId::PERFORMANCE.len();
            row.fairness.cells = units.len() * MetricId::FAIRNESS.len();
        }
        for (unit_idx, unit) in units.iter().enumerate() {
            let values = |method: Method, metric: MetricId| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| {
                        r.method == method
                            && r.dataset == unit.dataset_name
                            && r.protected == unit.protected
                    })
                    .filter_map(|r| r.report.get(metric))
                    .filter(|v| v.is_finite())
                    .collect()
            };
            for (metric_idx, &metric) in MetricId::ALL.iter().enumerate() {
                let baseline = values(Method::Baseline, metric);
                for (method_idx, &method) in methods.iter().enumerate() {
                    let sample = values(method, metric);
                    let row = table.row_mut(method.name());
                    let tally = if metric.is_fairness() {
                        &mut row.fairness
                    } else {
                        &mut row.performance
                    };
                    if sample.len() < 2 || baseline.len() < 2 {
                        tally.excluded += 1;
                        continue;
                    }
                    let cell_seed = derive(
                        derive(derive(self.cfg.seed, SALT_WTL), unit_idx as u64),
                        (metric_idx * 16 + method_idx) as u64,
                    );
                    let mut r = stream(cell_seed, 0);
                    let outcome: Outcome =
                        win_tie_loss(&sample, &baseline, metric, &self.cfg.stats, &mut r);
                    tally.record(outcome);
                }
            }
        }
        Ok(table)
    }

    /// The full `run` command: per-method records for every unit and
    /// repeat, the win/tie/loss table when the baseline is configured,
    /// and explanation-overlap reports when the adversary is on.
    pub fn run_all(&self) -> Result<RunOutput> {
        let units = self.units()?;
        let mut records = Vec::new();
        for (unit_idx, unit) in units.iter().enumerate() {
            for repeat in 0..self.cfg.repeats {
                for &method in &self.cfg.methods {
                    records.push(self.run_method(unit, unit_idx, method, repeat)?);
                }
            }
        }
        let wtl = if self.cfg.methods.contains(&Method::Baseline) && self.cfg.methods.len() >= 2 {
            Some(self.build_wtl(&units, &records)?)
        } else {
            None
        };
        let rq1 = if self.cfg.adversary {
            self.run_rq1()?
        } else {
            Vec::new()
        };
        Ok(RunOutput { records, rq1, wtl })
    }
}

/// Writes `runs.csv`, and `wtl.csv`/`wtl.txt`/`jaccard.csv` when present,
/// then prints a short summary to standard output.
///
/// Wall-clock seconds stay out of the CSVs so identical (config, seed)
/// runs produce byte-identical files; timings appear in the summary only.
pub fn emit_report(output: &RunOutput, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    if output.records.is_empty() && output.rq1.is_empty() {
        return Err(Error::Contract("nothing to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    if !output.records.is_empty() {
        let path = out_dir.join("runs.csv");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(
            f,
            "dataset,protected,method,repeat,budget,accuracy,recall,precision,f1,false_alarm,aod,eod,spd,di,jaccard_m1_m2,influence"
        )
        .map_err(|e| Error::io(&path, e))?;
        for r in &output.records {
            let influence = r
                .influence
                .as_ref()
                .map(|s| {
                    s.features
                        .iter()
                        .cloned()
                        .collect::<Vec<_>>()
                        .join("|")
                })
                .unwrap_or_default();
            let jac = r
                .jaccard_m1_m2
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "n/a".into());
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                r.dataset,
                r.protected,
                r.method,
                r.repeat,
                r.query_budget,
                r.report.csv_cells().join(","),
                jac,
                influence
            )
            .map_err(|e| Error::io(&path, e))?;
        }
    }

    if let Some(wtl) = &output.wtl {
        let path = out_dir.join("wtl.csv");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(
            f,
            "method,panel,wins,losses,ties,wins_plus_ties,cells,excluded"
        )
        .map_err(|e| Error::io(&path, e))?;
        for row in wtl.csv_rows() {
            writeln!(f, "{}", row.join(",")).map_err(|e| Error::io(&path, e))?;
        }
        let text_path = out_dir.join("wtl.txt");
        fs::write(&text_path, wtl.render_text()).map_err(|e| Error::io(&text_path, e))?;
    }

    if !output.rq1.is_empty() {
        let path = out_dir.join("jaccard.csv");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "dataset,protected,repeat,slack_jacc,base_jacc")
            .map_err(|e| Error::io(&path, e))?;
        for report in &output.rq1 {
            for row in &report.rows {
                writeln!(
                    f,
                    "{},{},{},{:.6},{:.6}",
                    report.dataset, report.protected, row.repeat, row.slack_jacc, row.base_jacc
                )
                .map_err(|e| Error::io(&path, e))?;
            }
            writeln!(
                f,
                "{},{},median,{:.6},{:.6}",
                report.dataset, report.protected, report.median_slack, report.median_base
            )
            .map_err(|e| Error::io(&path, e))?;
        }
    }

    print_summary(output);
    Ok(())
}

fn print_summary(output: &RunOutput) {
    if !output.records.is_empty() {
        let total_seconds: f64 = output.records.iter().map(|r| r.seconds).sum();
        println!(
            "{} run records across {} repeats ({total_seconds:.2}s total)",
            output.records.len(),
            output
                .records
                .iter()
                .map(|r| r.repeat)
                .max()
                .map_or(0, |m| m + 1),
        );
        let budgets: Vec<usize> = output
            .records
            .iter()
            .filter(|r| r.method == Method::Stealth)
            .map(|r| r.query_budget)
            .collect();
        if !budgets.is_empty() {
            let lo = budgets.iter().min().unwrap();
            let hi = budgets.iter().max().unwrap();
            println!("stealth query budget: {lo}..{hi} labels per run");
        }
    }
    for report in &output.rq1 {
        println!(
            "{} ({}): slack_jacc median {:.3}, base_jacc median {:.3}",
            report.dataset, report.protected, report.median_slack, report.median_base
        );
    }
    if let Some(wtl) = &output.wtl {
        println!("{}", wtl.render_text());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::synthetic(200, 0.9, 0.0);
        cfg.repeats = 2;
        cfg.seed = 11;
        cfg.forest.n_trees = 10;
        cfg.explain.samples = 60;
        cfg.explain_influence = false;
        cfg
    }

    #[test]
    fn units_expand_protected_attributes() {
        let runner = Runner::new(quick_cfg()).unwrap();
        let units = runner.units().unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].protected, "protected");
        assert_eq!(units[0].legit_feature, "legit");
    }

    #[test]
    fn stealth_budget_is_sqrt_scale() {
        let mut cfg = quick_cfg();
        cfg.datasets[0].source = DataSource::Synthetic(SyntheticSpec {
            n: 1000,
            bias_strength: 0.9,
            noise: 0.0,
        });
        let runner = Runner::new(cfg).unwrap();
        let units = runner.units().unwrap();
        let record = runner
            .run_method(&units[0], 0, Method::Stealth, 0)
            .unwrap();
        // Train2 has 400 rows; leaves of size <= 20 from halving reach 32
        assert!(record.query_budget >= 16 && record.query_budget <= 64,
            "budget {}", record.query_budget);
    }

    #[test]
    fn adversary_off_labels_match_model1() {
        let runner = Runner::new(quick_cfg()).unwrap();
        let units = runner.units().unwrap();
        let prepared = runner.prepare(&units[0], 0, 0).unwrap();
        let train2 = &prepared.split.train2;
        // the surrogate's training labels come straight from model1
        let counter = CountingPredictor::new(&prepared.model1);
        let labels: Vec<u8> = train2.rows().iter().map(|r| counter.predict(r)).collect();
        let direct: Vec<u8> = train2
            .rows()
            .iter()
            .map(|r| prepared.model1.predict(r))
            .collect();
        assert_eq!(labels, direct);
    }

    #[test]
    fn repeat_with_same_seed_is_identical() {
        let runner = Runner::new(quick_cfg()).unwrap();
        let units = runner.units().unwrap();
        let a = runner.run_method(&units[0], 0, Method::Stealth, 1).unwrap();
        let b = runner.run_method(&units[0], 0, Method::Stealth, 1).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.query_budget, b.query_budget);
    }

    #[test]
    fn baseline_only_comparison_is_error() {
        let mut cfg = quick_cfg();
        cfg.methods = vec![Method::Baseline];
        let runner = Runner::new(cfg).unwrap();
        assert!(runner.run_rq2_rq3().is_err());
    }

    #[test]
    fn wtl_denominators_follow_units_and_metrics() {
        let mut cfg = quick_cfg();
        cfg.methods = vec![Method::Stealth, Method::Baseline];
        cfg.repeats = 3;
        let runner = Runner::new(cfg).unwrap();
        let (_, wtl) = runner.run_rq2_rq3().unwrap();
        let row = &wtl.rows[0];
        assert_eq!(row.performance.cells, 5);
        assert_eq!(row.fairness.cells, 4);
        assert_eq!(
            row.performance.counted() + row.performance.excluded,
            row.performance.cells
        );
    }

    #[test]
    fn emit_is_deterministic() {
        let cfg = quick_cfg();
        let runner = Runner::new(cfg).unwrap();
        let out = runner.run_all().unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_report(&out, dir_a.path()).unwrap();
        let out2 = Runner::new(quick_cfg()).unwrap().run_all().unwrap();
        emit_report(&out2, dir_b.path()).unwrap();
        let a = fs::read(dir_a.path().join("runs.csv")).unwrap();
        let b = fs::read(dir_b.path().join("runs.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_parses_from_json() {
        let json = r#"{
            "datasets": [
                {"name": "synth", "n": 200, "bias_strength": 0.8, "noise": 0.05}
            ],
            "repeats": 2,
            "seed": 7,
            "methods": ["stealth", "baseline"],
            "adversary": false
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.repeats, 2);
        assert!(matches!(cfg.datasets[0].source, DataSource::Synthetic(_)));
        assert_eq!(cfg.methods, vec![Method::Stealth, Method::Baseline]);
    }

    #[test]
    fn undefined_metric_written_as_na() {
        let record = RunRecord {
            dataset: "d".into(),
            protected: "p".into(),
            method: Method::Baseline,
            repeat: 0,
            report: MetricReport {
                accuracy: Some(1.0),
                recall: Some(1.0),
                precision: Some(1.0),
                f1: Some(1.0),
                false_alarm: Some(0.0),
                aod: None,
                eod: None,
                spd: None,
                di: None,
            },
            query_budget: 0,
            seconds: 0.0,
            influence: None,
            jaccard_m1_m2: None,
        };
        let out = RunOutput {
            records: vec![record],
            rq1: vec![],
            wtl: None,
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&out, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert!(text.contains("n/a"));
        assert_eq!(text.lines().count(), 2);
    }
}
