//! BackTrack corrective labels and error-bound filtering.
//!
//! For an expert transition `(s*, a*, s′*)` the label is
//! `s_g = s* − f̂(s*, a*)`, `a_g = a*`: the state from which the expert action
//! should, under the learned model, land on `s*`. Each label carries the
//! computable part of its error bound, `K₁ · ‖s_g − s*‖`, where `K₁` is the
//! local Lipschitz coefficient of `f̂` at the source transition.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SourceIndex, TrajectoryDataset};
use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::stats::{quantile_sorted, Histogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveLabel {
    pub s_g: Vec<f64>,
    pub a_g: Vec<f64>,
    /// Expert state the label is meant to lead back to.
    pub target: Vec<f64>,
    pub source: SourceIndex,
    /// `‖s_g − s*‖`.
    pub label_distance: f64,
    /// `K₁`, the local Lipschitz coefficient at the source transition.
    pub local_lipschitz: f64,
    /// `K₁ · label_distance`.
    pub error_bound: f64,
    pub accepted: bool,
    /// Whether the source transition was flagged as a contact step.
    pub contact: bool,
}

impl CorrectiveLabel {
    pub fn is_finite(&self) -> bool {
        self.s_g.iter().all(|v| v.is_finite()) && self.error_bound.is_finite()
    }

    /// Bound including the model's training error term.
    pub fn conservative_bound(&self, eps: f64) -> f64 {
        eps + self.error_bound
    }

    fn sort_key(&self) -> (f64, u64, usize) {
        (self.error_bound, self.source.0, self.source.1)
    }
}

fn key_cmp(a: &CorrectiveLabel, b: &CorrectiveLabel) -> std::cmp::Ordering {
    let (ea, ta, sa) = a.sort_key();
    let (eb, tb, sb) = b.sort_key();
    ea.total_cmp(&eb).then(ta.cmp(&tb)).then(sa.cmp(&sb))
}

/// One label per expert transition, in dataset order.
pub fn gen_labels(model: &DynamicsModel, data: &TrajectoryDataset) -> Result<Vec<CorrectiveLabel>> {
    if let Some((sd, ad)) = data.dims() {
        if sd != model.state_dim || ad != model.action_dim {
            return Err(Error::Input(format!(
                "data has state/action dims {sd}/{ad}, model expects {}/{}",
                model.state_dim, model.action_dim
            )));
        }
    }
    let items: Vec<_> = data.iter().collect();
    items
        .par_iter()
        .map(|(source, tr)| {
            let delta = model.predict_delta(&tr.s, &tr.a)?;
            let s_g: Vec<f64> = tr.s.iter().zip(&delta).map(|(s, d)| s - d).collect();
            let label_distance = norm(&delta);
            let k1 = model.local_lipschitz(&tr.s, &tr.a)?;
            Ok(CorrectiveLabel {
                s_g,
                a_g: tr.a.clone(),
                target: tr.s.clone(),
                source: *source,
                label_distance,
                local_lipschitz: k1,
                error_bound: k1 * label_distance,
                accepted: false,
                contact: tr.contact,
            })
        })
        .collect()
}

/// Label rejection rule: keep the lowest-bound fraction `q`, or keep labels
/// whose bound is strictly below an absolute threshold `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterConfig {
    Quantile(f64),
    Absolute(f64),
}

impl FilterConfig {
    fn validate(&self) -> Result<()> {
        match *self {
            FilterConfig::Quantile(q) if !(0.0..=1.0).contains(&q) => {
                Err(Error::Input(format!("rejection quantile must lie in [0, 1], got {q}")))
            }
            FilterConfig::Absolute(s) if !(s > 0.0) => {
                Err(Error::Input(format!("absolute threshold must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub accepted: Vec<CorrectiveLabel>,
    pub rejected: Vec<CorrectiveLabel>,
    /// Effective threshold σ. In quantile mode this is the bound of the first
    /// rejected label (infinite when nothing is rejected).
    pub threshold: f64,
}

/// Splits labels into accepted and rejected sets.
///
/// Quantile mode sorts finite labels by `(error_bound, trajectory, step)` and
/// accepts the first `⌈q·n⌉`, so the accepted set is always a prefix of that
/// order and grows monotonically with `q`. Labels with non-finite states or
/// bounds are rejected before either rule applies. Both returned lists are in
/// sorted order.
pub fn filter_labels(labels: &[CorrectiveLabel], cfg: FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Input("no labels to filter".into()));
    }
    let (mut finite, mut rejected): (Vec<_>, Vec<_>) =
        labels.iter().cloned().partition(CorrectiveLabel::is_finite);
    finite.sort_by(key_cmp);
    rejected.sort_by_key(|l| l.source);

    let split = match cfg {
        FilterConfig::Quantile(q) => accept_count(q, finite.len()),
        FilterConfig::Absolute(sigma) => finite.partition_point(|l| l.error_bound < sigma),
    };
    let threshold = match cfg {
        FilterConfig::Absolute(sigma) => sigma,
        FilterConfig::Quantile(_) => finite.get(split).map_or(f64::INFINITY, |l| l.error_bound),
    };
    let mut tail = finite.split_off(split);
    for l in &mut finite {
        l.accepted = true;
    }
    for l in tail.iter_mut().chain(rejected.iter_mut()) {
        l.accepted = false;
    }
    tail.extend(rejected);
    Ok(FilterOutcome {
        accepted: finite,
        rejected: tail,
        threshold,
    })
}

/// `⌈q·n⌉`, guarded against floating error in `q·n`.
pub fn accept_count(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (k.max(0.0) as usize).min(n)
}

/// Empirical CDF of label error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelErrorCdf {
    pub sorted_bounds: Vec<f64>,
    /// `cumulative[i] = (i + 1) / n`.
    pub cumulative: Vec<f64>,
    /// `(q, bound quantile)` at q = 0, 0.05, …, 1.
    pub quantiles: Vec<(f64, f64)>,
    pub histogram: Histogram,
}

impl LabelErrorCdf {
    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.sorted_bounds, q)
    }
}

pub fn label_error_cdf(labels: &[CorrectiveLabel]) -> Result<LabelErrorCdf> {
    let mut bounds: Vec<f64> = labels
        .iter()
        .filter(|l| l.is_finite())
        .map(|l| l.error_bound)
        .collect();
    if bounds.is_empty() {
        return Err(Error::Input("no finite labels for a CDF".into()));
    }
    bounds.sort_by(f64::total_cmp);
    let n = bounds.len() as f64;
    let cumulative = (1..=bounds.len()).map(|i| i as f64 / n).collect();
    let quantiles = (0..=20)
        .map(|i| {
            let q = i as f64 / 20.0;
            (q, quantile_sorted(&bounds, q))
        })
        .collect();
    let histogram = Histogram::new(&bounds, 30);
    Ok(LabelErrorCdf {
        sorted_bounds: bounds,
        cumulative,
        quantiles,
        histogram,
    })
}

/// Label file record: the trajectory record layout (`s`, `a`, `s_next` hold
/// `s_g`, `a_g` and the expert target state) plus label metadata.
#[derive(Serialize, Deserialize)]
struct LabelRecord {
    traj: u64,
    t: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    s_next: Vec<f64>,
    distance: f64,
    lipschitz: f64,
    bound: f64,
    accepted: bool,
    source: (u64, usize),
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    contact: bool,
}

pub fn write_labels_to<W: Write>(labels: &[CorrectiveLabel], w: &mut W) -> Result<()> {
    for l in labels {
        let rec = LabelRecord {
            traj: l.source.0,
            t: l.source.1,
            s: l.s_g.clone(),
            a: l.a_g.clone(),
            s_next: l.target.clone(),
            distance: l.label_distance,
            lipschitz: l.local_lipschitz,
            bound: l.error_bound,
            accepted: l.accepted,
            source: l.source,
            contact: l.contact,
        };
        // non-finite labels cannot be represented in JSON; they are dropped
        if !l.is_finite() || !l.label_distance.is_finite() {
            continue;
        }
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn write_labels(labels: &[CorrectiveLabel], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_labels_to(labels, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels_from<R: BufRead>(reader: R, name: &str) -> Result<Vec<CorrectiveLabel>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            location: format!("{name}:{}", lineno + 1),
            message: e.to_string(),
        })?;
        if rec.s.len() != rec.s_next.len() || (rec.traj, rec.t) != rec.source {
            return Err(Error::Schema {
                location: format!("{name}:{}", lineno + 1),
                message: "inconsistent label record".into(),
            });
        }
        out.push(CorrectiveLabel {
            s_g: rec.s,
            a_g: rec.a,
            target: rec.s_next,
            source: rec.source,
            label_distance: rec.distance,
            local_lipschitz: rec.lipschitz,
            error_bound: rec.bound,
            accepted: rec.accepted,
            contact: rec.contact,
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<CorrectiveLabel>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels_from(BufReader::new(file), &path.display().to_string())
}
