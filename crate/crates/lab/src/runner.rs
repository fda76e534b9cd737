use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ho_agent::rollout::EmbeddingRow;
use ho_agent::{
    run_episode, train, ControllerKind, DecisionRecord, EnvMetrics, EpisodeConfig, HoEnv, Model,
    Scenario, Selection, TrainConfig,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{analyze_embeddings, EmbeddingAnalysis};
use crate::error::{LabError, Result};
use crate::spec::{Assignment, ExperimentSpec, Mode, TrafficCase};
use crate::stats::{median, percentiles};

pub const PERCENTILES: [f64; 4] = [50.0, 90.0, 95.0, 99.0];

/// One controller on one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub controller: String,
    pub seed: u64,
    pub delivered: usize,
    pub generated: u64,
    pub dropped: u64,
    pub loss_rate: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub handovers: u64,
    pub rlf: u64,
    pub rejected: u64,
    pub decisions: u64,
    pub mask_vetoes: u64,
    pub mask_violations: u64,
    pub mean_reward: f64,
    pub regret_rate: f64,
}

impl RunRow {
    fn new(controller: &str, seed: u64, m: &EnvMetrics) -> RunRow {
        // a run without deliveries reports the drop deadline as its delay
        let p = percentiles(&m.delays_ms, &PERCENTILES).unwrap_or_else(|_| vec![f64::NAN; 4]);
        let per_step = |x: f64| {
            if m.reward_steps > 0 {
                x / m.reward_steps as f64
            } else {
                0.0
            }
        };
        RunRow {
            controller: controller.to_string(),
            seed,
            delivered: m.delays_ms.len(),
            generated: m.generated,
            dropped: m.dropped,
            loss_rate: m.loss_rate(),
            p50_ms: p[0],
            p90_ms: p[1],
            p95_ms: p[2],
            p99_ms: p[3],
            handovers: m.handovers,
            rlf: m.rlf,
            rejected: m.rejected,
            decisions: m.decisions,
            mask_vetoes: m.mask_vetoes,
            mask_violations: m.mask_violations,
            mean_reward: per_step(m.reward_sum),
            regret_rate: per_step(m.regret_steps as f64),
        }
    }
}

/// Per controller, the median over seeds of each column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub controller: String,
    pub runs: usize,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub loss_rate: f64,
}

pub fn percentile_table(rows: &[RunRow]) -> Vec<TableRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.controller.as_str()) {
            order.push(&r.controller);
        }
    }
    order
        .into_iter()
        .map(|c| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.controller == c).collect();
            let med = |f: fn(&RunRow) -> f64| {
                median(&mine.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
            };
            TableRow {
                controller: c.to_string(),
                runs: mine.len(),
                p50_ms: med(|r| r.p50_ms),
                p90_ms: med(|r| r.p90_ms),
                p95_ms: med(|r| r.p95_ms),
                p99_ms: med(|r| r.p99_ms),
                loss_rate: med(|r| r.loss_rate),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub config_hash: String,
    pub rows: Vec<RunRow>,
    pub table: Vec<TableRow>,
    /// Per controller label and seed, present in analyze mode.
    pub analyses: BTreeMap<(String, u64), EmbeddingAnalysis>,
    /// Relative paths of every file written, sorted.
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn table_row(&self, controller: &str) -> Option<&TableRow> {
        self.table.iter().find(|t| t.controller == controller)
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    mode: Mode,
    controllers: &'a [Assignment],
    traffic: Option<TrafficCase>,
    duration_ms: f64,
    seeds: &'a [u64],
    train: &'a TrainConfig,
    selection: Selection,
    scenario: &'a Scenario,
}

/// SHA-256 over the resolved experiment, independent of file locations.
pub fn config_hash(spec: &ExperimentSpec, scenario: &Scenario) -> Result<String> {
    let input = HashInput {
        mode: spec.mode,
        controllers: &spec.controllers,
        traffic: spec.traffic,
        duration_ms: spec.duration_ms,
        seeds: &spec.seeds,
        train: &spec.train,
        selection: spec.selection,
        scenario,
    };
    let digest = Sha256::digest(serde_json::to_vec(&input)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Manifest<'a> {
    mode: Mode,
    config_hash: &'a str,
    versions: BTreeMap<&'static str, &'static str>,
    spec: &'a ExperimentSpec,
    scenario: &'a Scenario,
    files: &'a [String],
}

struct Entry {
    label: String,
    assignment: Assignment,
    model: Option<Model>,
}

struct Writer {
    root: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn csv<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<()> {
        let p = self.path(rel)?;
        let mut w = csv::Writer::from_path(&p)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| LabError::io(&p, e))?;
        Ok(())
    }

    fn csv_records(&mut self, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(rel)?;
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| LabError::io(&p, e))?;
        Ok(())
    }

    /// Registers files written by someone else under `rel_dir`.
    fn adopt(&mut self, rel_dir: &str) -> Result<()> {
        let mut stack = vec![self.root.join(rel_dir)];
        while let Some(dir) = stack.pop() {
            for e in fs::read_dir(&dir).map_err(|e| LabError::io(&dir, e))? {
                let path = e.map_err(|e| LabError::io(&dir, e))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if let Ok(rel) = path.strip_prefix(&self.root) {
                    self.files.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
        }
        Ok(())
    }
}

fn unique_labels(entries: &mut [Entry]) {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for e in entries.iter_mut() {
        let n = seen.entry(e.label.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            e.label = format!("{}_{}", e.label, n);
        }
    }
}

fn model_for(
    assignment: &Assignment,
    spec: &ExperimentSpec,
    scenario: &Scenario,
) -> Result<Option<Model>> {
    if !assignment.has_learned() {
        return Ok(None);
    }
    match assignment.checkpoint() {
        Some(dir) => {
            let loaded = Model::load(dir)?;
            if loaded.n_cells != scenario.n_cells() {
                return Err(LabError::spec(
                    "field `controllers`",
                    format!(
                        "checkpoint {} was trained for {} cells, scenario has {}",
                        dir.display(),
                        loaded.n_cells,
                        scenario.n_cells()
                    ),
                ));
            }
            Ok(Some(loaded))
        }
        None => {
            log::warn!(
                "{}: no checkpoint, evaluating a randomly initialized model",
                assignment.label()
            );
            Ok(Some(Model::new(
                &spec.train.model,
                scenario.n_ues(),
                scenario.n_cells(),
            )?))
        }
    }
}

fn train_entry(
    spec: &ExperimentSpec,
    scenario: &Scenario,
    kind: ControllerKind,
    w: &mut Writer,
    rel: &str,
) -> Result<Entry> {
    let cfg = TrainConfig {
        controller: kind.clone(),
        ..spec.train.clone()
    };
    let dir = w.root.join(rel);
    log::info!(
        "training {} for {} iterations",
        kind.label(),
        cfg.iterations
    );
    let outcome = train(scenario, &cfg, Some(&dir))?;
    w.adopt(rel)?;
    let bare = match kind {
        ControllerKind::Learned { .. } => ControllerKind::learned(),
        ControllerKind::LearnedNoMask { .. } => ControllerKind::learned_no_mask(),
        ControllerKind::LearnedSnapshot { .. } => ControllerKind::learned_snapshot(),
        other => other,
    };
    Ok(Entry {
        label: bare.label().to_string(),
        assignment: Assignment::Uniform(bare),
        model: Some(outcome.model),
    })
}

fn rule_entries(spec: &ExperimentSpec) -> Vec<Entry> {
    spec.controllers
        .iter()
        .filter(|a| !a.has_learned())
        .map(|a| Entry {
            label: a.label(),
            assignment: a.clone(),
            model: None,
        })
        .collect()
}

struct RunOutput {
    row: RunRow,
    trace: Vec<DecisionRecord>,
    embeddings: Vec<EmbeddingRow>,
}

fn evaluate(
    entry: &Entry,
    scenario: &Scenario,
    spec: &ExperimentSpec,
    record_embeddings: bool,
) -> Result<Vec<RunOutput>> {
    let kinds = entry.assignment.kinds(scenario.n_ues())?;
    let steps = scenario.steps_for(spec.duration_ms);
    let learned = entry.assignment.has_learned();
    let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = spec
            .seeds
            .iter()
            .map(|&seed| {
                let kinds = kinds.clone();
                s.spawn(move || {
                    let env = HoEnv::new(&scenario.with_seed(seed), kinds)?;
                    let cfg = EpisodeConfig {
                        steps,
                        selection: spec.selection,
                        agent_seed: seed,
                        record_trace: learned,
                        record_embeddings,
                        ..Default::default()
                    };
                    let ep = run_episode(entry.model.as_ref(), env, &cfg)?;
                    Ok(RunOutput {
                        row: RunRow::new(&entry.label, seed, &ep.metrics),
                        trace: ep.trace,
                        embeddings: ep.embeddings,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

fn matrix_rows(m: &[Vec<f64>]) -> Vec<Vec<String>> {
    m.iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect()
}

fn write_analysis(
    w: &mut Writer,
    dir: &str,
    trace: &[EmbeddingRow],
    a: &EmbeddingAnalysis,
) -> Result<()> {
    let dim = trace.first().map_or(0, |r| r.z.len());
    let mut header = vec!["ue_id".to_string(), "timestamp_ms".to_string()];
    header.extend((0..dim).map(|k| format!("z{k}")));
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            let mut v = vec![r.ue_id.to_string(), r.timestamp_ms.to_string()];
            v.extend(r.z.iter().map(|x| x.to_string()));
            v
        })
        .collect();
    w.csv_records(&format!("{dir}/embeddings.csv"), &header, &rows)?;
    let points: Vec<_> = a.trajectories.values().flatten().cloned().collect();
    w.csv(&format!("{dir}/pca.csv"), &points)?;
    let eig: Vec<Vec<String>> = a
        .pca
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut v = vec![
                format!("pc{}", k + 1),
                c.value.to_string(),
                c.iterations.to_string(),
            ];
            v.extend(c.vector.iter().map(|x| x.to_string()));
            v
        })
        .collect();
    let mut eh = vec![
        "component".to_string(),
        "eigenvalue".to_string(),
        "iterations".to_string(),
    ];
    eh.extend((0..dim).map(|k| format!("v{k}")));
    w.csv_records(&format!("{dir}/pca_components.csv"), &eh, &eig)?;
    for (ue, m) in &a.cosine {
        let header: Vec<String> = (0..m.len()).map(|k| format!("t{k}")).collect();
        w.csv_records(
            &format!("{dir}/cosine_ue{ue}.csv"),
            &header,
            &matrix_rows(m),
        )?;
    }
    Ok(())
}

/// Runs the experiment and writes every artifact under `out`.
pub fn run(spec: &ExperimentSpec, out: &Path) -> Result<Artifacts> {
    spec.validate()?;
    let scenario = spec.resolve_scenario()?;
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let hash = config_hash(spec, &scenario)?;
    let mut w = Writer {
        root: out.to_path_buf(),
        files: Vec::new(),
    };

    let mut entries = match spec.mode {
        Mode::Eval | Mode::Compare | Mode::Analyze => {
            let assignments = if spec.mode == Mode::Analyze {
                &spec.controllers[..1]
            } else {
                &spec.controllers[..]
            };
            assignments
                .iter()
                .map(|a| {
                    Ok(Entry {
                        label: a.label(),
                        assignment: a.clone(),
                        model: model_for(a, spec, &scenario)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Mode::Train => {
            let mut v = vec![train_entry(
                spec,
                &scenario,
                spec.train.controller.clone(),
                &mut w,
                "train",
            )?];
            v.extend(rule_entries(spec));
            v
        }
        Mode::Ablate => {
            let mut v = Vec::new();
            for kind in [
                ControllerKind::learned(),
                ControllerKind::learned_snapshot(),
                ControllerKind::learned_no_mask(),
            ] {
                let rel = format!("train/{}", kind.label());
                v.push(train_entry(spec, &scenario, kind, &mut w, &rel)?);
            }
            v.extend(rule_entries(spec));
            v
        }
    };
    unique_labels(&mut entries);

    let mut rows = Vec::new();
    let mut analyses = BTreeMap::new();
    for entry in &entries {
        log::info!("evaluating {} on {} seeds", entry.label, spec.seeds.len());
        let analyze = spec.mode == Mode::Analyze;
        for out in evaluate(entry, &scenario, spec, analyze)? {
            let dir = format!("runs/{}/seed_{}", entry.label, out.row.seed);
            w.csv(
                &format!("{dir}/metrics.csv"),
                std::slice::from_ref(&out.row),
            )?;
            if entry.assignment.has_learned() {
                w.csv(&format!("{dir}/trace.csv"), &out.trace)?;
            }
            if analyze {
                let a = analyze_embeddings(&out.embeddings)?;
                write_analysis(&mut w, &dir, &out.embeddings, &a)?;
                analyses.insert((entry.label.clone(), out.row.seed), a);
            }
            rows.push(out.row);
        }
    }
    let table = percentile_table(&rows);
    w.csv("summary.csv", &rows)?;
    w.csv("percentiles.csv", &table)?;

    w.files.push("manifest.json".into());
    w.files.sort();
    let manifest_spec = ExperimentSpec {
        out: None,
        ..spec.clone()
    };
    let manifest = Manifest {
        mode: spec.mode,
        config_hash: &hash,
        versions: BTreeMap::from([("ho-lab", env!("CARGO_PKG_VERSION"))]),
        spec: &manifest_spec,
        scenario: &scenario,
        files: &w.files,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| LabError::io(&path, e))?;
    Ok(Artifacts {
        dir: out.to_path_buf(),
        config_hash: hash,
        rows,
        table,
        analyses,
        files: w.files,
    })
}
