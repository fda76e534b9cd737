use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ho_agent::{presets, ControllerKind, Scenario, Selection, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Train a learned controller, then evaluate it on the seeds.
    Train,
    /// Evaluate each controller assignment on every seed.
    Eval,
    /// Same as eval; kept separate so manifests record the intent.
    Compare,
    /// Train the full model and both ablations, then evaluate them next to
    /// the listed rule baselines.
    Ablate,
    /// Record embeddings of a learned controller and export PCA
    /// trajectories and cosine matrices.
    Analyze,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Train,
        Mode::Eval,
        Mode::Compare,
        Mode::Ablate,
        Mode::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Eval => "eval",
            Mode::Compare => "compare",
            Mode::Ablate => "ablate",
            Mode::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!("unknown mode `{s}`, expected one of train, eval, compare, ablate, analyze")
            })
    }
}

/// Background load regime applied on top of the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficCase {
    /// Every cell at 15% background load.
    Light,
    /// Every cell at no less than 80% background load.
    Heavy,
}

impl TrafficCase {
    pub fn apply(self, scenario: &mut Scenario) {
        for c in &mut scenario.sim.cells {
            c.background_load = match self {
                TrafficCase::Light => 0.15,
                TrafficCase::Heavy => c.background_load.max(0.8),
            };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    Preset(String),
    /// Relative paths resolve against the spec file's directory.
    Path(PathBuf),
}

pub const PRESETS: [&str; 3] = ["toy_congested", "crossing_light", "heavy_three_cell"];

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "toy_congested" => Some(presets::toy_congested()),
        "crossing_light" => Some(presets::crossing_light()),
        "heavy_three_cell" => Some(presets::heavy_three_cell()),
        _ => None,
    }
}

/// Either one controller for every UE or one per UE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Assignment {
    Uniform(ControllerKind),
    PerUe(Vec<ControllerKind>),
}

impl Assignment {
    pub fn kinds(&self, n_ues: usize) -> Result<Vec<ControllerKind>> {
        match self {
            Assignment::Uniform(k) => Ok(vec![k.clone(); n_ues]),
            Assignment::PerUe(ks) if ks.len() == n_ues => Ok(ks.clone()),
            Assignment::PerUe(ks) => Err(LabError::spec(
                "field `controllers`",
                format!("{} per-UE controllers for {n_ues} UEs", ks.len()),
            )),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Assignment::Uniform(k) => k.label().to_string(),
            Assignment::PerUe(ks) => ks.iter().map(|k| k.label()).collect::<Vec<_>>().join("+"),
        }
    }

    pub fn has_learned(&self) -> bool {
        match self {
            Assignment::Uniform(k) => k.is_learned(),
            Assignment::PerUe(ks) => ks.iter().any(|k| k.is_learned()),
        }
    }

    pub fn checkpoint(&self) -> Option<&PathBuf> {
        match self {
            Assignment::Uniform(k) => k.checkpoint(),
            Assignment::PerUe(ks) => ks.iter().find_map(|k| k.checkpoint()),
        }
    }
}

fn default_controllers() -> Vec<Assignment> {
    vec![Assignment::Uniform(ControllerKind::a3())]
}

fn default_selection() -> Selection {
    Selection::Greedy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioSource,
    pub mode: Mode,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<Assignment>,
    #[serde(default)]
    pub traffic: Option<TrafficCase>,
    /// Evaluation length per run.
    pub duration_ms: f64,
    pub seeds: Vec<u64>,
    /// Default output directory; the command line may override it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Action selection of learned controllers during evaluation.
    #[serde(default = "default_selection")]
    pub selection: Selection,
}

impl ExperimentSpec {
    /// Parses JSON, reporting the line, column and field path of the first
    /// error.
    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let field = e.path().to_string();
            LabError::spec(
                format!(
                    "line {}, column {}, field `{field}`",
                    inner.line(),
                    inner.column()
                ),
                inner.to_string(),
            )
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec file; a relative scenario path becomes relative to it.
    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut spec = Self::from_json(&text).map_err(|e| match e {
            LabError::Spec { at, reason } => {
                LabError::spec(format!("{}: {at}", path.display()), reason)
            }
            other => other,
        })?;
        if let ScenarioSource::Path(p) = &mut spec.scenario {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LabError::spec("field `seeds`", "must not be empty"));
        }
        if !(self.duration_ms > 0.0 && self.duration_ms.is_finite()) {
            return Err(LabError::spec(
                "field `duration_ms`",
                "must be finite and > 0",
            ));
        }
        if let ScenarioSource::Preset(name) = &self.scenario {
            if preset(name).is_none() {
                return Err(LabError::spec(
                    "field `scenario.preset`",
                    format!(
                        "unknown preset `{name}`, expected one of {}",
                        PRESETS.join(", ")
                    ),
                ));
            }
        }
        match self.mode {
            Mode::Eval | Mode::Compare if self.controllers.is_empty() => {
                return Err(LabError::spec("field `controllers`", "must not be empty"));
            }
            Mode::Analyze
                if !self
                    .controllers
                    .first()
                    .is_some_and(Assignment::has_learned) =>
            {
                return Err(LabError::spec(
                    "field `controllers`",
                    "analyze needs a learned controller first",
                ));
            }
            Mode::Train | Mode::Ablate => self
                .train
                .validate()
                .map_err(|e| LabError::spec("field `train`", e.to_string()))?,
            _ => {}
        }
        for a in &self.controllers {
            let kinds = match a {
                Assignment::Uniform(k) => std::slice::from_ref(k),
                Assignment::PerUe(ks) => ks.as_slice(),
            };
            for k in kinds {
                k.validate()
                    .map_err(|e| LabError::spec("field `controllers`", e.to_string()))?;
            }
        }
        Ok(())
    }

    /// The scenario after the traffic case is applied.
    pub fn resolve_scenario(&self) -> Result<Scenario> {
        let mut scenario = match &self.scenario {
            ScenarioSource::Preset(name) => preset(name).ok_or_else(|| {
                LabError::spec(
                    "field `scenario.preset`",
                    format!("unknown preset `{name}`"),
                )
            })?,
            ScenarioSource::Path(p) => {
                let text = fs::read_to_string(p).map_err(|e| LabError::io(p, e))?;
                Scenario::from_json(&text)
                    .map_err(|e| LabError::spec(p.display().to_string(), e.to_string()))?
            }
        };
        if let Some(t) = self.traffic {
            t.apply(&mut scenario);
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenario": {"preset": "crossing_light"},
        "mode": "compare",
        "controllers": [{"kind": "a3"}, {"kind": "no_mm"}],
        "duration_ms": 1200,
        "seeds": [1, 2, 3]
    }"#;

    #[test]
    fn minimal_spec_parses() {
        let s = ExperimentSpec::from_json(MINIMAL).unwrap();
        assert_eq!(s.mode, Mode::Compare);
        assert_eq!(s.controllers.len(), 2);
        assert_eq!(s.selection, Selection::Greedy);
        assert_eq!(s.controllers[1].label(), "no_mm");
    }

    #[test]
    fn errors_name_line_and_field() {
        let bad = MINIMAL.replace("\"duration_ms\": 1200", "\"duration_ms\": \"long\"");
        match ExperimentSpec::from_json(&bad) {
            Err(LabError::Spec { at, .. }) => {
                assert!(at.contains("line 5"), "{at}");
                assert!(at.contains("duration_ms"), "{at}");
            }
            other => panic!("{other:?}"),
        }
        let empty = MINIMAL.replace("[1, 2, 3]", "[]");
        assert!(
            matches!(ExperimentSpec::from_json(&empty), Err(LabError::Spec { at, .. }) if at.contains("seeds"))
        );
        let unknown = MINIMAL.replace("crossing_light", "nowhere");
        assert!(ExperimentSpec::from_json(&unknown).is_err());
    }

    #[test]
    fn per_ue_assignment_must_match_the_ue_count() {
        let a = Assignment::PerUe(vec![ControllerKind::a3(), ControllerKind::no_mm()]);
        assert_eq!(a.label(), "a3+no_mm");
        assert!(a.kinds(2).is_ok());
        assert!(a.kinds(3).is_err());
    }

    #[test]
    fn traffic_cases_set_background_load() {
        let mut s = presets::heavy_three_cell();
        TrafficCase::Light.apply(&mut s);
        assert!(s.sim.cells.iter().all(|c| c.background_load == 0.15));
        let mut s = presets::crossing_light();
        TrafficCase::Heavy.apply(&mut s);
        assert!(s.sim.cells.iter().all(|c| c.background_load == 0.8));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("fly".parse::<Mode>().is_err());
    }
}
