//! Recursive random-projection bi-clustering.
//!
//! Rows are split by projecting them onto the line between two distant
//! pivots and cutting at the median projection, recursing until clusters
//! shrink to the stop threshold (default ceil(sqrt(rows))). Sampling one
//! row per leaf then yields roughly sqrt(N) query points spread across
//! the data.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// How rows are drawn from each leaf.
///
/// `CentroidProximal` is reserved as a config option and not implemented;
/// selecting it is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Random,
    CentroidProximal,
}

/// Clustering parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Stop threshold `t`; `None` means ceil(sqrt(rows being clustered)).
    #[serde(default)]
    pub stop_threshold: Option<usize>,
    /// Rows sampled per leaf.
    #[serde(default = "default_samples_per_leaf")]
    pub samples_per_leaf: usize,
    #[serde(default)]
    pub sample_mode: SampleMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples_per_leaf() -> usize {
    1
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            stop_threshold: None,
            samples_per_leaf: 1,
            sample_mode: SampleMode::Random,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    /// The effective stop threshold for `n` rows.
    pub fn effective_threshold(&self, n: usize) -> usize {
        self.stop_threshold
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .max(1)
    }
}

/// The projection axis of one split: two distant pivot rows and their
/// separation `c`.
#[derive(Debug, Clone)]
pub struct ProjectionLine {
    pub east: Vec<f64>,
    pub west: Vec<f64>,
    pub c: f64,
}

/// A node of the bi-cluster tree. Leaves carry row indices into the
/// clustered dataset.
#[derive(Debug)]
pub enum ClusterNode {
    Internal {
        line: ProjectionLine,
        /// Median projected coordinate; rows at or left of it went left.
        cut: f64,
        size: usize,
        left: Box<ClusterNode>,
        right: Box<ClusterNode>,
    },
    Leaf {
        rows: Vec<usize>,
        /// True when splitting stopped because all rows were identical.
        degenerate: bool,
    },
}

impl ClusterNode {
    pub fn size(&self) -> usize {
        match self {
            ClusterNode::Internal { size, .. } => *size,
            ClusterNode::Leaf { rows, .. } => rows.len(),
        }
    }

    /// Leaves in depth-first (left to right) order.
    pub fn leaves(&self) -> Vec<&ClusterNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                ClusterNode::Leaf { .. } => out.push(node),
                ClusterNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    /// Row index sets of all leaves, depth-first.
    pub fn leaf_rows(&self) -> Vec<&[usize]> {
        self.leaves()
            .into_iter()
            .map(|l| match l {
                ClusterNode::Leaf { rows, .. } => rows.as_slice(),
                _ => unreachable!(),
            })
            .collect()
    }

    /// Indented text dump (node size, cut value) for inspection.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_into(&mut out, 0);
        out
    }

    fn dump_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            ClusterNode::Internal {
                cut, size, left, right, ..
            } => {
                out.push_str(&format!("{pad}node size={size} cut={cut:.4}\n"));
                left.dump_into(out, depth + 1);
                right.dump_into(out, depth + 1);
            }
            ClusterNode::Leaf { rows, degenerate } => {
                let tag = if *degenerate { " degenerate" } else { "" };
                out.push_str(&format!("{pad}leaf size={}{tag}\n", rows.len()));
            }
        }
    }
}

/// Euclidean distance over all feature columns.
///
/// Panics if the rows differ in dimensionality; that is a programming
/// error, not a data condition.
pub fn distance(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "distance: dimension mismatch");
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Finds two distant pivots with two linear scans: a random row `z`, the
/// row farthest from `z` (east), then the row farthest from east (west).
///
/// Returns `None` when every row is identical (no projection axis
/// exists); the caller treats such a cluster as a leaf.
pub fn pick_pivots<R: Rng>(ds: &Dataset, rows: &[usize], rng: &mut R) -> Option<ProjectionLine> {
    assert!(rows.len() >= 2, "pick_pivots: need at least two rows");
    let z = rows[rng.gen_range(0..rows.len())];
    let east = *rows
        .iter()
        .max_by(|&&a, &&b| {
            let da = distance(ds.row(a), ds.row(z));
            let db = distance(ds.row(b), ds.row(z));
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let west = *rows
        .iter()
        .max_by(|&&a, &&b| {
            let da = distance(ds.row(a), ds.row(east));
            let db = distance(ds.row(b), ds.row(east));
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let c = distance(ds.row(east), ds.row(west));
    if c == 0.0 {
        return None;
    }
    Some(ProjectionLine {
        east: ds.row(east).to_vec(),
        west: ds.row(west).to_vec(),
        c,
    })
}

/// Projects a row onto the pivot line: with `a = dist(p, east)`,
/// `b = dist(p, west)`, `c = dist(east, west)`, the coordinate is
/// `(a^2 + c^2 - b^2) / (2c)`.
pub fn project(p: &[f64], line: &ProjectionLine) -> f64 {
    assert!(line.c > 0.0, "project: degenerate line");
    let a = distance(p, &line.east);
    let b = distance(p, &line.west);
    (a * a + line.c * line.c - b * b) / (2.0 * line.c)
}

/// Recursively bi-clusters the dataset's rows down to leaves of at most
/// the stop threshold.
pub fn bicluster(ds: &Dataset, cfg: &ClusterConfig) -> Result<ClusterNode> {
    if ds.n_rows() == 0 {
        return Err(Error::Size("bicluster needs at least one row".into()));
    }
    let t = cfg.effective_threshold(ds.n_rows());
    let rows: Vec<usize> = (0..ds.n_rows()).collect();
    let mut r = rng::stream(cfg.seed, 0);
    Ok(split(ds, rows, t, &mut r))
}

fn split<R: Rng>(ds: &Dataset, rows: Vec<usize>, t: usize, rng: &mut R) -> ClusterNode {
    if rows.len() <= t {
        return ClusterNode::Leaf {
            rows,
            degenerate: false,
        };
    }
    let line = match pick_pivots(ds, &rows, rng) {
        Some(line) => line,
        None => {
            return ClusterNode::Leaf {
                rows,
                degenerate: true,
            }
        }
    };
    // Sort by projected coordinate, ties broken by original row order, and
    // cut the sorted order in half so sibling sizes differ by at most one.
    let mut projected: Vec<(f64, usize)> = rows
        .iter()
        .map(|&i| (project(ds.row(i), &line), i))
        .collect();
    projected.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let half = projected.len().div_ceil(2);
    let cut = projected[half - 1].0;
    let size = projected.len();
    let left_rows: Vec<usize> = projected[..half].iter().map(|&(_, i)| i).collect();
    let right_rows: Vec<usize> = projected[half..].iter().map(|&(_, i)| i).collect();
    ClusterNode::Internal {
        line,
        cut,
        size,
        left: Box::new(split(ds, left_rows, t, rng)),
        right: Box::new(split(ds, right_rows, t, rng)),
    }
}

/// Samples `min(m, leaf size)` rows per leaf without replacement.
///
/// The returned index list is the query budget: its length is the number
/// of label requests the audit will issue.
pub fn sample_leaves<R: Rng>(
    tree: &ClusterNode,
    m: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if mode == SampleMode::CentroidProximal {
        return Err(Error::Contract(
            "centroid_proximal sampling is a reserved config option and not implemented".into(),
        ));
    }
    let mut out = Vec::new();
    for leaf in tree.leaf_rows() {
        let take = m.min(leaf.len());
        let mut picks: Vec<usize> = leaf.to_vec();
        picks.shuffle(rng);
        picks.truncate(take);
        picks.sort_unstable();
        out.extend(picks);
    }
    Ok(out)
}
