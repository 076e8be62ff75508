//! Expert demonstrations and their line-delimited JSON file format.
//!
//! One JSON object per line:
//! `{"traj": 0, "t": 3, "s": [...], "a": [...], "s_next": [...]}`, with an
//! optional `"contact": true` written by simulators that track contact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Standardizer;

/// One expert triplet `(s, a, s′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    /// Set by the simulator when a contact branch of the dynamics executed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub contact: bool,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: Vec<f64>, s_next: Vec<f64>) -> Self {
        Self {
            s,
            a,
            s_next,
            contact: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s
            .iter()
            .chain(&self.a)
            .chain(&self.s_next)
            .all(|v| v.is_finite())
    }

    /// Observed state change `s′ − s`.
    pub fn delta(&self) -> Vec<f64> {
        self.s_next.iter().zip(&self.s).map(|(n, s)| n - s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub transitions: Vec<Transition>,
}

/// Position of a transition inside a dataset: `(trajectory id, step)`.
pub type SourceIndex = (u64, usize);

/// Ordered collection of trajectories with consistent dimensions, where each
/// step's `s_next` equals the following step's `s` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    traj: u64,
    t: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    s_next: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    contact: bool,
}

impl TrajectoryDataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let ds = Self { trajectories };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from plain transition lists, numbering trajectories from 0.
    pub fn from_transitions(trajectories: Vec<Vec<Transition>>) -> Result<Self> {
        Self::new(
            trajectories
                .into_iter()
                .enumerate()
                .map(|(i, transitions)| Trajectory {
                    id: i as u64,
                    transitions,
                })
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        let mut dims: Option<(usize, usize)> = None;
        for traj in &self.trajectories {
            if traj.transitions.is_empty() {
                return Err(Error::Input(format!("trajectory {} is empty", traj.id)));
            }
            for (t, tr) in traj.transitions.iter().enumerate() {
                let here = (tr.s.len(), tr.a.len());
                if tr.s_next.len() != tr.s.len() || tr.s.is_empty() || tr.a.is_empty() {
                    return Err(Error::Input(format!(
                        "trajectory {} step {t}: inconsistent state dimensions",
                        traj.id
                    )));
                }
                match dims {
                    None => dims = Some(here),
                    Some(d) if d != here => {
                        return Err(Error::Input(format!(
                            "trajectory {} step {t}: dimensions {here:?} differ from {d:?}",
                            traj.id
                        )))
                    }
                    _ => {}
                }
                if !tr.is_finite() {
                    return Err(Error::Input(format!(
                        "trajectory {} step {t}: non-finite value",
                        traj.id
                    )));
                }
            }
            for (t, pair) in traj.transitions.windows(2).enumerate() {
                if pair[0].s_next != pair[1].s {
                    return Err(Error::Input(format!(
                        "trajectory {} breaks chaining between steps {t} and {}",
                        traj.id,
                        t + 1
                    )));
                }
            }
        }
        let mut ids: Vec<u64> = self.trajectories.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("duplicate trajectory id".into()));
        }
        Ok(())
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.transitions.len()).sum()
    }

    /// `(state_dim, action_dim)`, or `None` for an empty dataset.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.iter().next().map(|(_, tr)| (tr.s.len(), tr.a.len()))
    }

    /// Every transition with its source index, in file order.
    pub fn iter(&self) -> impl Iterator<Item = (SourceIndex, &Transition)> + '_ {
        self.trajectories.iter().flat_map(|traj| {
            traj.transitions
                .iter()
                .enumerate()
                .map(move |(t, tr)| ((traj.id, t), tr))
        })
    }

    pub fn get(&self, index: SourceIndex) -> Option<&Transition> {
        self.trajectories
            .iter()
            .find(|t| t.id == index.0)
            .and_then(|t| t.transitions.get(index.1))
    }

    pub fn state_stats(&self) -> Result<Standardizer> {
        Standardizer::fit(self.iter().map(|(_, tr)| tr.s.as_slice()))
    }

    pub fn action_stats(&self) -> Result<Standardizer> {
        Standardizer::fit(self.iter().map(|(_, tr)| tr.a.as_slice()))
    }

    /// First `n` trajectories.
    pub fn take(&self, n: usize) -> Self {
        Self {
            trajectories: self.trajectories.iter().take(n).cloned().collect(),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| match e {
            Error::Json(j) if j.is_io() => Error::io(path, j.into()),
            other => other,
        })?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for ((traj, t), tr) in self.iter() {
            let rec = Record {
                traj,
                t,
                s: tr.s.clone(),
                a: tr.a.clone(),
                s_next: tr.s_next.clone(),
                contact: tr.contact,
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }

    /// Parses records, groups them by `traj`, orders by `t` and validates.
    pub fn read_from<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut records: Vec<Record> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Schema {
                location: format!("{name}:{}", lineno + 1),
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::Input(format!("{name}: no transitions")));
        }
        records.sort_by_key(|r| (r.traj, r.t));
        let mut trajectories: Vec<Trajectory> = Vec::new();
        for rec in records {
            let start_new = trajectories.last().is_none_or(|t| t.id != rec.traj);
            if start_new {
                trajectories.push(Trajectory {
                    id: rec.traj,
                    transitions: Vec::new(),
                });
            }
            let traj = trajectories.last_mut().expect("pushed above");
            if rec.t != traj.transitions.len() {
                return Err(Error::Schema {
                    location: format!("{name}: trajectory {}", rec.traj),
                    message: format!("expected step {}, found {}", traj.transitions.len(), rec.t),
                });
            }
            traj.transitions.push(Transition {
                s: rec.s,
                a: rec.a,
                s_next: rec.s_next,
                contact: rec.contact,
            });
        }
        Self::new(trajectories).map_err(|e| e.context(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(start: f64, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|i| {
                let s = start + i as f64;
                Transition::new(vec![s], vec![0.5], vec![s + 1.0])
            })
            .collect()
    }

    #[test]
    fn round_trip_through_jsonl() {
        let mut trajs = vec![chain(0.0, 3), chain(10.0, 2)];
        trajs[1][0].contact = true;
        let ds = TrajectoryDataset::from_transitions(trajs).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"traj":0,"t":0,"s":[0.0],"a":[0.5],"s_next":[1.0]}"#));
        let back = TrajectoryDataset::read_from(&buf[..], "mem").unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.len(), 5);
    }

    #[test]
    fn broken_chain_rejected() {
        let mut t = chain(0.0, 3);
        t[1].s[0] += 1e-12;
        assert!(matches!(
            TrajectoryDataset::from_transitions(vec![t]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let a = chain(0.0, 2);
        let b = vec![Transition::new(vec![0.0, 1.0], vec![0.0], vec![1.0, 1.0])];
        assert!(TrajectoryDataset::from_transitions(vec![a, b]).is_err());
    }

    #[test]
    fn gap_in_steps_is_schema_error() {
        let text = "{\"traj\":0,\"t\":0,\"s\":[0],\"a\":[0],\"s_next\":[1]}\n{\"traj\":0,\"t\":2,\"s\":[1],\"a\":[0],\"s_next\":[2]}\n";
        assert!(matches!(
            TrajectoryDataset::read_from(text.as_bytes(), "mem"),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn missing_field_is_schema_error() {
        let text = "{\"traj\":0,\"t\":0,\"s\":[0],\"a\":[0]}\n";
        let err = TrajectoryDataset::read_from(text.as_bytes(), "mem").unwrap_err();
        assert!(err.to_string().contains("mem:1"), "{err}");
    }
}
