//! Nonparametric ranking of method scores.
//!
//! Two samples are "the same" when Cliff's delta is below the negligible
//! threshold (0.147) or a pooled bootstrap finds no significant mean
//! difference. Scott-Knott sorts treatments by median and recursively
//! splits the order where between-group sum-of-squares peaks, keeping a
//! split only when its halves are not the same. Win/tie/loss accounting
//! runs each method against the baseline cell by cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricId;

/// Cliff's delta |negligible-effect| boundary.
pub const SMALL_EFFECT: f64 = 0.147;

/// Bootstrap and effect-size parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatConfig {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_resamples() -> usize {
    1000
}
fn default_alpha() -> f64 {
    0.05
}

impl Default for StatConfig {
    fn default() -> Self {
        StatConfig {
            resamples: 1000,
            alpha: 0.05,
        }
    }
}

/// The repeat scores of one (method, run, metric) cell.
#[derive(Debug, Clone)]
pub struct ScoreSample {
    pub method: String,
    pub run_id: String,
    pub metric: MetricId,
    pub values: Vec<f64>,
}

/// Pairwise dominance: (#{a > b} - #{a < b}) / (|A| * |B|).
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "cliffs_delta: empty sample");
    let mut gt = 0i64;
    let mut lt = 0i64;
    for &x in a {
        for &y in b {
            if x > y {
                gt += 1;
            } else if x < y {
                lt += 1;
            }
        }
    }
    (gt - lt) as f64 / (a.len() * b.len()) as f64
}

/// Two-sided pooled bootstrap test of the mean difference.
///
/// Pools both samples, redraws |A| and |B| values with replacement
/// `resamples` times, and calls the observed |mean(A) - mean(B)|
/// significant when it exceeds the empirical (1 - alpha) quantile of the
/// resampled differences.
pub fn bootstrap_diff<R: Rng>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    alpha: f64,
    rng: &mut R,
) -> bool {
    assert!(!a.is_empty() && !b.is_empty(), "bootstrap_diff: empty sample");
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let observed = (mean(a) - mean(b)).abs();
    if observed == 0.0 {
        return false;
    }
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let ma = (0..a.len())
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .sum::<f64>()
            / a.len() as f64;
        let mb = (0..b.len())
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .sum::<f64>()
            / b.len() as f64;
        diffs.push((ma - mb).abs());
    }
    diffs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let k = ((1.0 - alpha) * resamples as f64).ceil() as usize;
    let cutoff = diffs[k.saturating_sub(1).min(resamples - 1)];
    observed > cutoff
}

/// True when the samples are statistically indistinguishable: negligible
/// effect size or an insignificant bootstrap.
pub fn same<R: Rng>(a: &[f64], b: &[f64], cfg: &StatConfig, rng: &mut R) -> bool {
    cliffs_delta(a, b).abs() < SMALL_EFFECT
        || !bootstrap_diff(a, b, cfg.resamples, cfg.alpha, rng)
}

/// Scott-Knott ranks, one per input group, 0 = best.
///
/// Groups are sorted by median, the sorted order is split where the
/// between-group sum-of-squares of group means peaks, and the split is
/// kept only when the halves' pooled values are not [`same`]. Final
/// clusters are numbered best-to-worst: highest medians first when
/// `larger_is_better`, lowest first otherwise.
pub fn scott_knott<R: Rng>(
    groups: &[(String, Vec<f64>)],
    larger_is_better: bool,
    cfg: &StatConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if groups.is_empty() {
        return Err(Error::Size("scott_knott needs at least one group".into()));
    }
    for (name, values) in groups {
        if values.is_empty() {
            return Err(Error::Size(format!("group '{name}' has no values")));
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&i, &j| {
        let mi = median(&groups[i].1);
        let mj = median(&groups[j].1);
        mi.partial_cmp(&mj).unwrap().then(i.cmp(&j))
    });
    if larger_is_better {
        order.reverse(); // best (largest median) first
    }

    let mut cluster_of_sorted = vec![0usize; groups.len()];
    let mut next_rank = 0usize;
    partition(
        groups,
        &order,
        0,
        groups.len(),
        cfg,
        rng,
        &mut cluster_of_sorted,
        &mut next_rank,
    );

    let mut ranks = vec![0usize; groups.len()];
    for (sorted_pos, &group_idx) in order.iter().enumerate() {
        ranks[group_idx] = cluster_of_sorted[sorted_pos];
    }
    Ok(ranks)
}

#[allow(clippy::too_many_arguments)]
fn partition<R: Rng>(
    groups: &[(String, Vec<f64>)],
    order: &[usize],
    lo: usize,
    hi: usize,
    cfg: &StatConfig,
    rng: &mut R,
    out: &mut [usize],
    next_rank: &mut usize,
) {
    let span = hi - lo;
    if span >= 2 {
        if let Some(cut) = best_cut(groups, &order[lo..hi]) {
            let left: Vec<f64> = order[lo..lo + cut]
                .iter()
                .flat_map(|&g| groups[g].1.iter().copied())
                .collect();
            let right: Vec<f64> = order[lo + cut..hi]
                .iter()
                .flat_map(|&g| groups[g].1.iter().copied())
                .collect();
            if !same(&left, &right, cfg, rng) {
                partition(groups, order, lo, lo + cut, cfg, rng, out, next_rank);
                partition(groups, order, lo + cut, hi, cfg, rng, out, next_rank);
                return;
            }
        }
    }
    let rank = *next_rank;
    *next_rank += 1;
    for slot in out.iter_mut().take(hi).skip(lo) {
        *slot = rank;
    }
}

/// Split position (1..span) maximizing the between-group sum-of-squares
/// of group means.
fn best_cut(groups: &[(String, Vec<f64>)], order: &[usize]) -> Option<usize> {
    let means: Vec<f64> = order
        .iter()
        .map(|&g| groups[g].1.iter().sum::<f64>() / groups[g].1.len() as f64)
        .collect();
    let overall = means.iter().sum::<f64>() / means.len() as f64;
    let mut best: Option<(f64, usize)> = None;
    for cut in 1..means.len() {
        let (l, r) = means.split_at(cut);
        let ml = l.iter().sum::<f64>() / l.len() as f64;
        let mr = r.iter().sum::<f64>() / r.len() as f64;
        let ss = l.len() as f64 * (ml - overall).powi(2) + r.len() as f64 * (mr - overall).powi(2);
        if best.is_none_or(|(b, _)| ss > b) {
            best = Some((ss, cut));
        }
    }
    best.map(|(_, cut)| cut)
}

/// Sample median; panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median: empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Outcome of one method-vs-baseline cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Tie,
    Loss,
}

/// Compares a method's repeat scores against the baseline's for one
/// metric: tie when [`same`], otherwise win or loss by comparing medians
/// on the metric's comparison scale.
///
/// Raw values are mapped through [`MetricId::comparable`] first, so SPD
/// and friends compare on distance from parity.
pub fn win_tie_loss<R: Rng>(
    method: &[f64],
    baseline: &[f64],
    metric: MetricId,
    cfg: &StatConfig,
    rng: &mut R,
) -> Outcome {
    let m: Vec<f64> = method.iter().map(|&v| metric.comparable(v)).collect();
    let b: Vec<f64> = baseline.iter().map(|&v| metric.comparable(v)).collect();
    if same(&m, &b, cfg, rng) {
        return Outcome::Tie;
    }
    let better = if metric.larger_is_better() {
        median(&m) > median(&b)
    } else {
        median(&m) < median(&b)
    };
    if better {
        Outcome::Win
    } else {
        Outcome::Loss
    }
}

/// Win/tie/loss tallies for one method over one metric panel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PanelTally {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Cells skipped because a sample had fewer than two defined values.
    pub excluded: usize,
    /// Total cells the panel covers (runs x metrics).
    pub cells: usize,
}

impl PanelTally {
    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Win => self.wins += 1,
            Outcome::Tie => self.ties += 1,
            Outcome::Loss => self.losses += 1,
        }
    }

    pub fn wins_plus_ties(&self) -> usize {
        self.wins + self.ties
    }

    pub fn counted(&self) -> usize {
        self.wins + self.losses + self.ties
    }
}

/// Per-method win/tie/loss rows for the performance and fairness panels.
#[derive(Debug, Clone, Default, Serialize)]
pub struct WTLTable {
    pub rows: Vec<WTLRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WTLRow {
    pub method: String,
    pub performance: PanelTally,
    pub fairness: PanelTally,
}

impl WTLTable {
    pub fn row_mut(&mut self, method: &str) -> &mut WTLRow {
        if let Some(pos) = self.rows.iter().position(|r| r.method == method) {
            return &mut self.rows[pos];
        }
        self.rows.push(WTLRow {
            method: method.to_string(),
            performance: PanelTally::default(),
            fairness: PanelTally::default(),
        });
        self.rows.last_mut().unwrap()
    }

    /// Aligned-text rendering with one method per row and both panels.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} | {:>4} {:>6} {:>5} {:>12} | {:>4} {:>6} {:>5} {:>12}\n",
            "method", "wins", "losses", "ties", "wins+ties", "wins", "losses", "ties", "wins+ties"
        ));
        out.push_str(&format!(
            "{:<12} | {:^31} | {:^31}\n",
            "", "performance", "fairness"
        ));
        out.push_str(&"-".repeat(80));
        out.push('\n');
        for row in &self.rows {
            let p = &row.performance;
            let f = &row.fairness;
            out.push_str(&format!(
                "{:<12} | {:>4} {:>6} {:>5} {:>7} / {:>3} | {:>4} {:>6} {:>5} {:>7} / {:>3}\n",
                row.method,
                p.wins,
                p.losses,
                p.ties,
                p.wins_plus_ties(),
                p.cells,
                f.wins,
                f.losses,
                f.ties,
                f.wins_plus_ties(),
                f.cells,
            ));
        }
        out
    }

    /// CSV rows: method, panel, wins, losses, ties, wins_plus_ties, cells,
    /// excluded.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for row in &self.rows {
            for (panel, tally) in [("performance", &row.performance), ("fairness", &row.fairness)]
            {
                rows.push(vec![
                    row.method.clone(),
                    panel.to_string(),
                    tally.wins.to_string(),
                    tally.losses.to_string(),
                    tally.ties.to_string(),
                    tally.wins_plus_ties().to_string(),
                    tally.cells.to_string(),
                    tally.excluded.to_string(),
                ]);
            }
        }
        rows
    }
}
