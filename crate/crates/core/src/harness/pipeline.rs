//! Stage runners and the output directory layout.
//!
//! ```text
//! <out>/pool.json                     collected experience
//! <out>/traces/collect/<task>.trial<z>.jsonl
//! <out>/tips.json                     tips dictionary
//! <out>/traces/tips.jsonl
//! <out>/traces/eval/<task>.jsonl
//! <out>/trajectories.jsonl            evaluation trajectories
//! <out>/metrics.json, summary.txt
//! ```
//!
//! A full run writes one such directory per fold direction
//! (`direction-0`, `direction-1`) plus `report.json` and `report.txt`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{EmbedderConfig, EnvironmentConfig, RunConfig, TaskSource};
use super::folds::{partition, split_folds};
use super::metrics::{aggregate, compute_metrics, AggregateReport, MetricsReport};
use super::HarnessError;
use crate::collector::collect;
use crate::environment::external::ExternalEnv;
use crate::environment::minihouse::{task_spec, MiniHouse, TaskType};
use crate::environment::{builtin_spec, EnvFactory, Environment, EnvironmentSpec};
use crate::gateway::Gateway;
use crate::memory::{load_pool, load_tips, save_pool, save_tips, TaskSpec};
use crate::planner::{evaluate, Memory};
use crate::retrieval::{Embedder, HashingEmbedder, RemoteEmbedder, RetrievalIndex};
use crate::tipper::{align_tips, build_tips_dictionary};

pub const DIRECTIONS: [usize; 2] = [0, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub tasks: usize,
    pub solved: usize,
    pub trials: usize,
    pub reflections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipsSummary {
    pub entries: usize,
    pub tips: usize,
    pub warnings: usize,
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

/// Task ids as file names.
fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Deserialize)]
struct TaskLine {
    id: String,
    instruction: String,
}

fn load_tasks(cfg: &RunConfig) -> Result<Vec<TaskSpec>, HarnessError> {
    match &cfg.tasks {
        TaskSource::Generated {
            count,
            first_seed,
            types,
        } => {
            let types: Vec<TaskType> = if types.is_empty() {
                TaskType::ALL.to_vec()
            } else {
                types.iter().filter_map(|s| TaskType::from_slug(s)).collect()
            };
            Ok((0..*count)
                .map(|i| task_spec(types[i % types.len()], first_seed + (i / types.len()) as u64))
                .collect())
        }
        TaskSource::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    let t: TaskLine = serde_json::from_str(l).map_err(|e| HarnessError::Io {
                        path: format!("{}:{}", path.display(), i + 1),
                        message: e.to_string(),
                    })?;
                    Ok(TaskSpec::new(t.id, t.instruction, cfg.env_name.clone()))
                })
                .collect()
        }
    }
}

fn env_spec(cfg: &RunConfig) -> Result<EnvironmentSpec, HarnessError> {
    let mut spec = builtin_spec(&cfg.env_name).ok_or_else(|| HarnessError::Config {
        field: "env_name".into(),
        message: format!("unknown environment {:?}", cfg.env_name),
    })?;
    if let Some(h) = cfg.step_budget {
        spec.step_budget = h;
    }
    Ok(spec)
}

fn env_factory(cfg: &RunConfig) -> Result<Box<dyn EnvFactory>, HarnessError> {
    let spec = env_spec(cfg)?;
    let factory: Box<dyn EnvFactory> = match cfg.environment.clone() {
        EnvironmentConfig::Builtin => {
            let budget = spec.step_budget;
            Box::new(move || Ok(Box::new(MiniHouse::with_step_budget(budget)) as Box<dyn Environment>))
        }
        EnvironmentConfig::Spawn { command, timeout_secs } => Box::new(move || {
            let env = ExternalEnv::spawn(&command, spec.clone(), Duration::from_secs_f64(timeout_secs))?;
            Ok(Box::new(env) as Box<dyn Environment>)
        }),
        EnvironmentConfig::Connect { addr, timeout_secs } => Box::new(move || {
            let env = ExternalEnv::connect(addr.as_str(), spec.clone(), Duration::from_secs_f64(timeout_secs))?;
            Ok(Box::new(env) as Box<dyn Environment>)
        }),
    };
    Ok(factory)
}

fn embedder(cfg: &RunConfig) -> Box<dyn Embedder> {
    match &cfg.embedder {
        EmbedderConfig::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)),
        EmbedderConfig::Remote {
            base_url,
            model,
            api_key_env,
            dim,
        } => {
            let key = api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
            Box::new(RemoteEmbedder::new(base_url, model, key, *dim, cfg.backend.retry_policy()))
        }
    }
}

/// Holds everything a run needs: the validated config, one gateway shared by
/// all stages, the environment factory and the fold-labeled tasks.
pub struct Runner {
    cfg: RunConfig,
    gw: Gateway,
    envs: Box<dyn EnvFactory>,
    embedder: Box<dyn Embedder>,
    tasks: Vec<TaskSpec>,
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self, HarnessError> {
        let gw = Gateway::new(cfg.backend.build()?);
        Self::with_gateway(cfg, gw)
    }

    pub fn with_gateway(cfg: RunConfig, gw: Gateway) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let tasks = split_folds(&load_tasks(&cfg)?, cfg.folds.n_folds, cfg.seed)?;
        Ok(Self {
            envs: env_factory(&cfg)?,
            embedder: embedder(&cfg),
            cfg,
            gw,
            tasks,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gw
    }

    /// All tasks with their fold labels.
    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    /// (train, eval) for a fold direction.
    pub fn split(&self, direction: usize) -> Result<(Vec<TaskSpec>, Vec<TaskSpec>), HarnessError> {
        if !DIRECTIONS.contains(&direction) {
            return Err(HarnessError::Fold(format!("direction must be 0 or 1, got {direction}")));
        }
        Ok(partition(&self.tasks, self.cfg.folds.n_folds, direction))
    }

    pub fn collect(&self, direction: usize, out: &Path) -> Result<CollectSummary, HarnessError> {
        let (train, _) = self.split(direction)?;
        tracing::info!(direction, tasks = train.len(), "collecting");
        let outcome = collect(
            &self.gw,
            &*self.envs,
            &train,
            &self.cfg.collect,
            &self.embedder.id(),
            self.cfg.jobs,
        )?;
        save_pool(&outcome.pool, &out.join("pool.json"))?;
        for record in &outcome.records {
            for (traj, trace) in record.trials.iter().zip(&record.traces) {
                let name = format!("{}.trial{}.jsonl", file_stem(&traj.task_id), traj.trial_index);
                write(&out.join("traces/collect").join(name), &trace.to_jsonl())?;
            }
        }
        Ok(CollectSummary {
            tasks: outcome.pool.task_count(),
            solved: outcome.pool.success_view().len(),
            trials: outcome.pool.trial_count(),
            reflections: outcome.records.iter().map(|r| r.reflections.entries.len()).sum(),
        })
    }

    pub fn tips(&self, pool_path: &Path, out: &Path) -> Result<TipsSummary, HarnessError> {
        let pool = load_pool(pool_path)?;
        tracing::info!(tasks = pool.task_count(), "distilling tips");
        let outcome = build_tips_dictionary(&self.gw, &pool, self.cfg.tips, &self.cfg.env_name);
        save_tips(&outcome.tips, &out.join("tips.json"))?;
        write(&out.join("traces/tips.jsonl"), &outcome.trace.to_jsonl())?;
        Ok(TipsSummary {
            entries: outcome.tips.len(),
            tips: outcome.tips.entries.values().map(Vec::len).sum(),
            warnings: outcome.trace.events.len(),
        })
    }

    /// Evaluates the direction's held-out tasks. Without a pool this is the
    /// plain ReAct baseline; with a pool but no tips, ET stays empty.
    pub fn eval(
        &self,
        direction: usize,
        pool_path: Option<&Path>,
        tips_path: Option<&Path>,
        out: &Path,
    ) -> Result<MetricsReport, HarnessError> {
        let (_, eval_tasks) = self.split(direction)?;
        let pool = pool_path.map(load_pool).transpose()?;
        let tips = tips_path.map(load_tips).transpose()?;
        if tips.is_some() && pool.is_none() {
            return Err(HarnessError::Config {
                field: "--tips".into(),
                message: "tips need the pool they were built from".into(),
            });
        }
        let index = match &pool {
            Some(p) => {
                let found = self.embedder.id();
                if p.embedder_id != found {
                    return Err(HarnessError::Config {
                        field: "embedder".into(),
                        message: format!("pool was built for {:?}, config gives {found:?}", p.embedder_id),
                    });
                }
                Some(RetrievalIndex::build(p, &*self.embedder)?)
            }
            None => None,
        };
        let memory = pool.as_ref().zip(index.as_ref()).map(|(pool, index)| Memory {
            pool,
            index,
            embedder: &*self.embedder,
            tips: tips.as_ref(),
        });
        tracing::info!(direction, tasks = eval_tasks.len(), memory = memory.is_some(), "evaluating");
        let records = evaluate(&self.gw, &*self.envs, &eval_tasks, memory, &self.cfg.planner, self.cfg.jobs)?;

        let mut trajectories = String::new();
        for r in &records {
            write(
                &out.join("traces/eval").join(format!("{}.jsonl", file_stem(&r.task.id))),
                &r.trace.to_jsonl(),
            )?;
            trajectories.push_str(&serde_json::to_string(&r.trajectory).expect("trajectory serializes"));
            trajectories.push('\n');
        }
        write(&out.join("trajectories.jsonl"), &trajectories)?;
        let report = compute_metrics(&records)?;
        write(&out.join("metrics.json"), &to_json(&report))?;
        write(&out.join("summary.txt"), &report.summary())?;
        Ok(report)
    }

    /// Rewrites a tips dictionary for another environment.
    pub fn align(&self, tips_path: &Path, target_env: &str, out_path: &Path) -> Result<TipsSummary, HarnessError> {
        let tips = load_tips(tips_path)?;
        let target = builtin_spec(target_env).ok_or_else(|| HarnessError::Config {
            field: "--target-env".into(),
            message: format!("unknown environment {target_env:?}"),
        })?;
        let outcome = align_tips(&self.gw, &tips, target_env, &target.description)?;
        save_tips(&outcome.tips, out_path)?;
        Ok(TipsSummary {
            entries: outcome.tips.len(),
            tips: outcome.tips.entries.values().map(Vec::len).sum(),
            warnings: outcome.trace.events.len(),
        })
    }

    /// Collect, tips and eval for both fold directions, then the report.
    pub fn run_all(&self, out: &Path) -> Result<AggregateReport, HarnessError> {
        for d in DIRECTIONS {
            let dir = out.join(format!("direction-{d}"));
            self.collect(d, &dir)?;
            let pool = dir.join("pool.json");
            self.tips(&pool, &dir)?;
            self.eval(d, Some(&pool), Some(&dir.join("tips.json")), &dir)?;
        }
        report(out)
    }
}

fn read_metrics(path: &Path) -> Result<MetricsReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Aggregates `metrics.json` from `runs` itself or from its immediate
/// subdirectories (sorted by name), and writes `report.json` and
/// `report.txt` next to them.
pub fn report(runs: &Path) -> Result<AggregateReport, HarnessError> {
    let mut found: Vec<(String, PathBuf)> = Vec::new();
    let own = runs.join("metrics.json");
    if own.is_file() {
        let name = runs.file_name().map_or_else(|| ".".into(), |n| n.to_string_lossy().into_owned());
        found.push((name, own));
    } else {
        let dir = std::fs::read_dir(runs).map_err(|e| HarnessError::io(runs, e))?;
        for entry in dir {
            let entry = entry.map_err(|e| HarnessError::io(runs, e))?;
            let m = entry.path().join("metrics.json");
            if m.is_file() {
                found.push((entry.file_name().to_string_lossy().into_owned(), m));
            }
        }
        found.sort();
    }
    if found.is_empty() {
        return Err(HarnessError::Io {
            path: runs.display().to_string(),
            message: "no metrics.json found".into(),
        });
    }
    let reports = found
        .into_iter()
        .map(|(name, path)| Ok((name, read_metrics(&path)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let agg = aggregate(&reports)?;
    write(&runs.join("report.json"), &to_json(&agg))?;
    write(&runs.join("report.txt"), &agg.summary())?;
    Ok(agg)
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner")
            .field("env_name", &self.cfg.env_name)
            .field("tasks", &self.tasks.len())
            .finish_non_exhaustive()
    }
}
