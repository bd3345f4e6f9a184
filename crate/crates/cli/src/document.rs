//! JSON documents read and written by the command-line tool.

use std::collections::{BTreeSet, HashMap};

use graph_entropy::geometry::{validate_r, RPoint};
use graph_entropy::model::{Graph, ModelError, Problem, SetMask, SetSystem, MAX_LETTERS};
use graph_entropy::solver::{OptimalityOutcome, SolveReport, SolverConfig, Termination};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum InputError {
    #[error("exactly one of `graph_edges` and `sets` must be given")]
    SetSource,
    #[error("unknown {alphabet} label {label:?}")]
    UnknownLabel { alphabet: &'static str, label: String },
    #[error("set #{0} is empty")]
    EmptySet(usize),
    #[error("{0} is not a set of the problem")]
    UnknownSet(String),
    #[error("set {0} is listed twice")]
    RepeatedSet(String),
    #[error("set {set} has {found} weights, expected one per y letter ({expected})")]
    WeightCount { set: String, found: usize, expected: usize },
    #[error("r is not a point of K_r: {0}")]
    InvalidPoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    #[serde(default)]
    pub keep_dominated_sets: bool,
}

/// A problem instance as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    /// Rows follow `x_alphabet`, columns follow `y_alphabet`.
    pub joint: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_edges: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub options: ProblemOptions,
}

impl ProblemDocument {
    pub fn to_problem(&self) -> Result<Problem, InputError> {
        let nx = self.x_alphabet.len();
        if nx > MAX_LETTERS {
            return Err(ModelError::TooManyLetters(nx).into());
        }
        let index: HashMap<&str, usize> = self
            .x_alphabet
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let lookup = |label: &String| {
            index
                .get(label.as_str())
                .copied()
                .ok_or_else(|| InputError::UnknownLabel {
                    alphabet: "x",
                    label: label.clone(),
                })
        };
        let system = match (&self.graph_edges, &self.sets) {
            (Some(edges), None) => {
                let edges = edges
                    .iter()
                    .map(|(u, v)| Ok((lookup(u)?, lookup(v)?)))
                    .collect::<Result<Vec<_>, InputError>>()?;
                SetSystem::Graph(Graph::new(nx, &edges).map_err(ModelError::from)?)
            }
            (None, Some(sets)) => {
                let mut masks = Vec::with_capacity(sets.len());
                for (i, set) in sets.iter().enumerate() {
                    if set.is_empty() {
                        return Err(InputError::EmptySet(i));
                    }
                    let mut mask: SetMask = 0;
                    for label in set {
                        mask |= 1 << lookup(label)?;
                    }
                    masks.push(mask);
                }
                SetSystem::Sets {
                    sets: masks,
                    keep_dominated: self.options.keep_dominated_sets,
                }
            }
            _ => return Err(InputError::SetSource),
        };
        Ok(Problem::labeled(
            self.x_alphabet.clone(),
            self.y_alphabet.clone(),
            self.joint.clone(),
            system,
        )?)
    }
}

pub fn set_labels(p: &Problem, j: usize) -> Vec<String> {
    p.set_labels(j).into_iter().map(str::to_owned).collect()
}

/// Weights of one set, one per `y` letter in `y_alphabet` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetWeights {
    pub set: Vec<String>,
    pub weights: Vec<f64>,
}

pub fn set_weights(p: &Problem, r: &RPoint, active_only: bool) -> Vec<SetWeights> {
    (0..p.n_sets())
        .filter(|&j| !active_only || r.is_active(j))
        .map(|j| SetWeights {
            set: set_labels(p, j),
            weights: r.row(j).to_vec(),
        })
        .collect()
}

/// Builds an `r` from listed sets; sets left out are inactive with zero weight.
pub fn r_from_weights(p: &Problem, listed: &[SetWeights]) -> Result<RPoint, InputError> {
    let key = |labels: &[String]| labels.iter().cloned().collect::<BTreeSet<String>>();
    let by_labels: HashMap<BTreeSet<String>, usize> = (0..p.n_sets()).map(|j| (key(&set_labels(p, j)), j)).collect();
    let ny = p.ny();
    let mut values = vec![0.0; p.n_sets() * ny];
    let mut active = vec![false; p.n_sets()];
    for entry in listed {
        let name = format!("{{{}}}", entry.set.join(","));
        let j = *by_labels
            .get(&key(&entry.set))
            .ok_or_else(|| InputError::UnknownSet(name.clone()))?;
        if active[j] {
            return Err(InputError::RepeatedSet(name));
        }
        if entry.weights.len() != ny {
            return Err(InputError::WeightCount {
                set: name,
                found: entry.weights.len(),
                expected: ny,
            });
        }
        values[j * ny..(j + 1) * ny].copy_from_slice(&entry.weights);
        active[j] = true;
    }
    let mut r = RPoint::new(ny, values).with_active(active);
    let report = validate_r(p, &r);
    if !report.is_ok() {
        if !report.only_clampable() {
            let detail = serde_json::to_string(&report.violations).unwrap_or_default();
            return Err(InputError::InvalidPoint(detail));
        }
        graph_entropy::geometry::clamp_r(&mut r);
    }
    Ok(r)
}

/// Any document with a `final_r` field, a result document included.
#[derive(Debug, Clone, Deserialize)]
pub struct RDocument {
    pub final_r: Vec<SetWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    pub fn pick(self, nats: f64, bits: f64) -> f64 {
        match self {
            Unit::Nats => nats,
            Unit::Bits => bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterValue {
    pub x: String,
    pub value: f64,
}

pub fn letter_values(p: &Problem, values: &[f64]) -> Vec<LetterValue> {
    p.x_labels()
        .iter()
        .zip(values)
        .map(|(x, &value)| LetterValue { x: x.clone(), value })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalitySummary {
    /// `checked` or `skipped`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_set: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl OptimalitySummary {
    fn new(p: &Problem, outcome: &OptimalityOutcome) -> Self {
        match outcome {
            OptimalityOutcome::Checked(v) => Self {
                status: "checked".into(),
                optimal: Some(v.optimal),
                worst_set: v.worst_set.map(|j| set_labels(p, j)),
                worst_value: Some(v.worst_value),
                tolerance: Some(v.tolerance),
                reason: None,
            },
            OptimalityOutcome::Skipped { reason } => Self {
                status: "skipped".into(),
                optimal: None,
                worst_set: None,
                worst_value: None,
                tolerance: None,
                reason: Some(reason.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub version: String,
    pub unit: Unit,
    /// `entropy_nats` or `entropy_bits`, following `unit`.
    pub entropy: f64,
    pub entropy_nats: f64,
    pub entropy_bits: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub residual: f64,
    pub gap: f64,
    pub optimality: OptimalitySummary,
    pub y_alphabet: Vec<String>,
    /// Active sets only.
    pub final_r: Vec<SetWeights>,
    pub final_a: Vec<LetterValue>,
    pub pruned_sets: Vec<Vec<String>>,
    pub reactivated_sets: Vec<Vec<String>>,
    pub config: SolverConfig,
}

impl ResultDocument {
    pub fn new(p: &Problem, report: &SolveReport, config: &SolverConfig, unit: Unit) -> Self {
        let entropy_nats = report.entropy_nats;
        let entropy_bits = entropy_nats / std::f64::consts::LN_2;
        Self {
            version: VERSION.into(),
            unit,
            entropy: unit.pick(entropy_nats, entropy_bits),
            entropy_nats,
            entropy_bits,
            iterations: report.iterations,
            termination: report.termination,
            residual: report.residual,
            gap: report.gap,
            optimality: OptimalitySummary::new(p, &report.optimality),
            y_alphabet: p.y_labels().to_vec(),
            final_r: set_weights(p, &report.r_final, true),
            final_a: letter_values(p, report.a_final.values()),
            pruned_sets: report.pruned_sets.iter().map(|&j| set_labels(p, j)).collect(),
            reactivated_sets: report.reactivated_sets.iter().map(|&j| set_labels(p, j)).collect(),
            config: config.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(json: &str) -> ProblemDocument {
        serde_json::from_str(json).unwrap()
    }

    fn p3() -> ProblemDocument {
        doc(r#"{"x_alphabet": ["a", "b", "c"], "y_alphabet": ["y"],
                "joint": [[0.3333333333], [0.3333333333], [0.3333333334]],
                "graph_edges": [["a", "b"], ["b", "c"]]}"#)
    }

    #[test]
    fn graph_documents_enumerate_sets_by_label() {
        let p = p3().to_problem().unwrap();
        let sets: Vec<Vec<String>> = (0..p.n_sets()).map(|j| set_labels(&p, j)).collect();
        assert_eq!(sets, vec![vec!["b"], vec!["a", "c"]]);
    }

    #[test]
    fn set_source_must_be_unique() {
        let mut d = p3();
        d.sets = Some(vec![vec!["a".into()]]);
        assert!(matches!(d.to_problem(), Err(InputError::SetSource)));
        d.sets = None;
        d.graph_edges = None;
        assert!(matches!(d.to_problem(), Err(InputError::SetSource)));
    }

    #[test]
    fn unknown_labels_are_named() {
        let mut d = p3();
        d.graph_edges = Some(vec![("a".into(), "z".into())]);
        let msg = d.to_problem().unwrap_err().to_string();
        assert!(msg.contains("\"z\""), "{msg}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"x_alphabet": ["a"], "y_alphabet": ["y"], "joint": [[1.0]], "sets": [["a"]], "extra": 1}"#;
        assert!(serde_json::from_str::<ProblemDocument>(bad).is_err());
    }

    #[test]
    fn r_round_trips_through_weights() {
        let p = p3().to_problem().unwrap();
        let r = RPoint::from_rows(&[vec![0.25], vec![0.75]]);
        let back = r_from_weights(&p, &set_weights(&p, &r, true)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn omitted_sets_are_inactive_and_bad_points_rejected() {
        let d = doc(
            r#"{"x_alphabet": ["a", "b"], "y_alphabet": ["y"], "joint": [[0.5], [0.5]],
                        "sets": [["a"], ["b"], ["a", "b"]], "options": {"keep_dominated_sets": true}}"#,
        );
        let p = d.to_problem().unwrap();
        let listed = vec![
            SetWeights {
                set: vec!["b".into()],
                weights: vec![0.5],
            },
            SetWeights {
                set: vec!["a".into()],
                weights: vec![0.5],
            },
        ];
        let r = r_from_weights(&p, &listed).unwrap();
        assert_eq!(r.active_count(), 2);
        let mut heavy = listed.clone();
        heavy[0].weights = vec![0.9];
        assert!(matches!(r_from_weights(&p, &heavy), Err(InputError::InvalidPoint(_))));
        let unknown = vec![SetWeights {
            set: vec!["c".into()],
            weights: vec![1.0],
        }];
        assert!(matches!(r_from_weights(&p, &unknown), Err(InputError::UnknownSet(_))));
    }
}
