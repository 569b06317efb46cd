//! Activation pruning search with a pluggable accuracy source.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{select_params, HeParams, SecurityTable};
use crate::engine::ModelSpec;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("evaluator failed on variant {variant}: {msg}")]
    Evaluator { variant: String, msg: String },
    #[error("spec: {0}")]
    Spec(String),
    #[error("stub table: {0}")]
    Stub(String),
    #[error("parameters for variant {variant}: {msg}")]
    Params { variant: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Variant id: pruned activation ordinals joined by commas, or `base`.
pub fn variant_id(pruned: &[usize]) -> String {
    if pruned.is_empty() {
        "base".into()
    } else {
        let mut v = pruned.to_vec();
        v.sort_unstable();
        v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

/// Accuracy of a spec variant (activations marked `pruned`).
pub trait AccuracyEvaluator: Sync {
    fn accuracy(&self, variant: &ModelSpec) -> Result<f64, PruneError>;
}

/// Table-driven evaluator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StubEvaluator {
    /// Accuracy with only activation `index` pruned.
    #[serde(default)]
    pub drop_one: BTreeMap<String, f64>,
    /// Accuracy per pruned set, keyed by [`variant_id`] (`"0,2"`).
    #[serde(default)]
    pub pruned_sets: BTreeMap<String, f64>,
    /// Accuracy with nothing pruned.
    #[serde(default)]
    pub baseline: Option<f64>,
}

impl StubEvaluator {
    pub fn from_json(text: &str) -> Result<Self, PruneError> {
        let s: StubEvaluator =
            serde_json::from_str(text).map_err(|e| PruneError::Stub(e.to_string()))?;
        for (k, v) in s.drop_one.iter().chain(&s.pruned_sets) {
            if !(0.0..=1.0).contains(v) {
                return Err(PruneError::Stub(format!(
                    "accuracy {v} for {k:?} outside [0, 1]"
                )));
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, PruneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Baseline 0.7425, one pruned 0.7312, two pruned 0.7021; drop-one
    /// accuracies rank activation 3 first, then 1.
    pub fn builtin_scenario() -> Self {
        let drop_one = [0.7102, 0.7205, 0.7011, 0.7312, 0.7150, 0.7088]
            .iter()
            .enumerate()
            .map(|(i, &a)| (i.to_string(), a))
            .collect();
        let mut pruned_sets = BTreeMap::new();
        pruned_sets.insert("3".to_string(), 0.7312);
        pruned_sets.insert("1,3".to_string(), 0.7021);
        pruned_sets.insert("1,3,4".to_string(), 0.6650);
        StubEvaluator {
            drop_one,
            pruned_sets,
            baseline: Some(0.7425),
        }
    }
}

impl AccuracyEvaluator for StubEvaluator {
    fn accuracy(&self, variant: &ModelSpec) -> Result<f64, PruneError> {
        let pruned = variant.pruned_activations();
        let id = variant_id(&pruned);
        let hit = match pruned.as_slice() {
            [] => self
                .baseline
                .or_else(|| self.pruned_sets.get("base").copied()),
            [one] => self
                .pruned_sets
                .get(&id)
                .or_else(|| self.drop_one.get(&one.to_string()))
                .copied(),
            _ => self.pruned_sets.get(&id).copied(),
        };
        hit.ok_or_else(|| PruneError::Evaluator {
            variant: id,
            msg: "no accuracy in stub table".into(),
        })
    }
}

/// Runs a command per variant: spec JSON on stdin, `{"accuracy": x}` on
/// stdout.
#[derive(Clone, Debug)]
pub struct ExternalEvaluator {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalEvaluator {
    /// Split a command line on whitespace.
    pub fn from_command_line(cmd: &str) -> Result<Self, PruneError> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| PruneError::Spec("empty evaluator command".into()))?;
        Ok(ExternalEvaluator {
            program,
            args: parts.collect(),
        })
    }
}

#[derive(Deserialize)]
struct AccuracyReply {
    accuracy: f64,
}

impl AccuracyEvaluator for ExternalEvaluator {
    fn accuracy(&self, variant: &ModelSpec) -> Result<f64, PruneError> {
        let id = variant_id(&variant.pruned_activations());
        let fail = |msg: String| PruneError::Evaluator {
            variant: id.clone(),
            msg,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(format!("spawn {}: {e}", self.program)))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(variant.to_json().as_bytes())
            .map_err(|e| fail(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exited with {}", out.status)));
        }
        let reply: AccuracyReply =
            serde_json::from_slice(&out.stdout).map_err(|e| fail(format!("bad reply: {e}")))?;
        if !(0.0..=1.0).contains(&reply.accuracy) {
            return Err(fail(format!("accuracy {} outside [0, 1]", reply.accuracy)));
        }
        Ok(reply.accuracy)
    }
}

/// Activation ordinals by descending drop-one accuracy, ties to the lower
/// ordinal.
pub fn rank_activations(
    spec: &ModelSpec,
    eval: &dyn AccuracyEvaluator,
) -> Result<Vec<usize>, PruneError> {
    let m = spec.activation_layers().len();
    if m == 0 {
        return Err(PruneError::Spec("model has no activation layers".into()));
    }
    let accs: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let v = spec
                .with_pruned(&[i])
                .map_err(|e| PruneError::Spec(e.to_string()))?;
            eval.accuracy(&v)
        })
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| accs[b].total_cmp(&accs[a]).then(a.cmp(&b)));
    Ok(order)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PruneResult {
    pub variant: String,
    pub pruned: Vec<usize>,
    pub accuracy: f64,
    pub levels: u32,
    pub params: HeParams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub ranking: Vec<usize>,
    pub results: Vec<PruneResult>,
    /// Index into `results` of the pick.
    pub best: usize,
}

impl SearchOutcome {
    pub fn best(&self) -> &PruneResult {
        &self.results[self.best]
    }
}

/// Among results with the smallest N, the most accurate; ties to fewer
/// pruned activations.
pub fn select_best(results: &[PruneResult]) -> Option<usize> {
    let min_n = results.iter().map(|r| r.params.poly_degree).min()?;
    results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.params.poly_degree == min_n)
        .max_by(|(i, a), (j, b)| a.accuracy.total_cmp(&b.accuracy).then(j.cmp(i)))
        .map(|(i, _)| i)
}

/// Prune the top-i ranked activations for i = 0..=max_prune, score each
/// variant, and pick one with [`select_best`].
pub fn search(
    spec: &ModelSpec,
    eval: &dyn AccuracyEvaluator,
    max_prune: usize,
    scale_bits: u32,
    security_bits: u32,
    table: &SecurityTable,
) -> Result<SearchOutcome, PruneError> {
    let m = spec.activation_layers().len();
    if max_prune > m {
        return Err(PruneError::Spec(format!(
            "max_prune {max_prune} exceeds {m} activations"
        )));
    }
    // start from an unpruned copy
    let mut base = spec.clone();
    for l in base.layers.iter_mut() {
        if let crate::engine::LayerSpec::Activation { pruned, .. } = l {
            *pruned = false;
        }
    }
    let ranking = if max_prune == 0 {
        Vec::new()
    } else {
        rank_activations(&base, eval)?
    };
    let results: Vec<PruneResult> = (0..=max_prune)
        .into_par_iter()
        .map(|i| {
            let mut pruned = ranking[..i].to_vec();
            pruned.sort_unstable();
            let variant = base
                .with_pruned(&pruned)
                .map_err(|e| PruneError::Spec(e.to_string()))?;
            let id = variant_id(&pruned);
            let accuracy = eval.accuracy(&variant)?;
            let levels = variant.depth();
            let params = select_params(levels, scale_bits, security_bits, table).map_err(|e| {
                PruneError::Params {
                    variant: id.clone(),
                    msg: e.to_string(),
                }
            })?;
            Ok(PruneResult {
                variant: id,
                pruned,
                accuracy,
                levels,
                params,
            })
        })
        .collect::<Result<_, PruneError>>()?;
    let best = select_best(&results).expect("at least the baseline");
    Ok(SearchOutcome {
        ranking,
        results,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::presets;

    fn three_acts() -> ModelSpec {
        let mut s = presets::tiny();
        // keep the first three activations only
        let acts = s.activation_layers();
        for &li in acts[3..].iter().rev() {
            s.layers.remove(li);
        }
        s
    }

    fn stub(drop: [f64; 3]) -> StubEvaluator {
        StubEvaluator {
            drop_one: drop
                .iter()
                .enumerate()
                .map(|(i, &a)| (i.to_string(), a))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn ranking_examples() {
        let s = three_acts();
        assert_eq!(
            rank_activations(&s, &stub([0.74, 0.70, 0.73])).unwrap(),
            vec![0, 2, 1]
        );
        assert_eq!(
            rank_activations(&s, &stub([0.5, 0.5, 0.5])).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn stub_json_and_missing_entries() {
        let s = StubEvaluator::from_json(r#"{"drop_one":{"0":0.7},"pruned_sets":{"0,1":0.6}}"#)
            .unwrap();
        assert_eq!(s.pruned_sets["0,1"], 0.6);
        assert!(StubEvaluator::from_json(r#"{"drop_one":{"0":1.7}}"#).is_err());
        assert!(StubEvaluator::from_json("nope").is_err());
        let err = s.accuracy(&three_acts()).unwrap_err();
        assert!(err.to_string().contains("base"));
    }

    #[test]
    fn variant_ids() {
        assert_eq!(variant_id(&[]), "base");
        assert_eq!(variant_id(&[2, 0]), "0,2");
    }
}
