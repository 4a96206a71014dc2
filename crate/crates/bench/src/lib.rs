//! Shared fixtures for benchmarks.

use std::path::{Path, PathBuf};

use groundmem_core::environment::minihouse::{generate, TaskType};
use groundmem_core::fixtures::{pipeline_script, ScriptOptions};
use groundmem_core::gateway::script_to_string;
use groundmem_core::retrieval::IndexEntry;
use groundmem_core::{Embedder, Gateway, HarnessError, RetrievalIndex, RunConfig, Runner, ScriptedBackend, Step};

/// `n` MiniHouse instructions cycling through all task types.
pub fn instructions(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| generate(TaskType::ALL[i % TaskType::ALL.len()], (i / TaskType::ALL.len()) as u64).instruction())
        .collect()
}

pub fn index_over(texts: &[String], embedder: &dyn Embedder) -> RetrievalIndex {
    let entries = texts
        .iter()
        .enumerate()
        .map(|(i, t)| IndexEntry {
            task_id: format!("t{i}"),
            vector: embedder.embed(t).expect("hashing embedder is infallible"),
        })
        .collect();
    RetrievalIndex::from_entries(embedder.id(), entries)
}

/// Distinct steps that never trip the trigger, so a check scans the whole
/// window.
pub fn quiet_steps(n: usize) -> Vec<Step> {
    (0..n)
        .map(|i| Step {
            index: i,
            thought: None,
            action: format!("go to shelf {i}"),
            observation: format!("On the shelf {i}, you see nothing."),
            correction: None,
        })
        .collect()
}

/// A scripted two-direction run over `count` generated tasks, laid out
/// under `dir`.
pub struct PipelineFixture {
    pub config: RunConfig,
    pub dir: PathBuf,
}

impl PipelineFixture {
    pub fn new(dir: &Path, count: usize) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let script = dir.join("script.jsonl");
        let text = format!(
            "seed = 1\n[backend]\nkind = \"scripted\"\nscript_path = {:?}\n[tasks]\nsource = \"generated\"\ncount = {count}\n",
            script.display().to_string()
        );
        let config = RunConfig::from_toml(&text)?;
        let probe = Runner::with_gateway(config.clone(), Gateway::new(Box::new(ScriptedBackend::new(Vec::new()))))?;
        let opts = ScriptOptions {
            step_budget: 20,
            max_retries: config.collect.max_retries,
            fail_first: 2,
        };
        let entries = pipeline_script(&[probe.split(0)?, probe.split(1)?], opts)?;
        std::fs::write(&script, script_to_string(&entries)).map_err(|e| HarnessError::Io {
            path: script.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            config,
            dir: dir.to_path_buf(),
        })
    }

    pub fn run(&self) -> Result<f64, HarnessError> {
        let runner = Runner::new(self.config.clone())?;
        Ok(runner.run_all(&self.dir.join("out"))?.success_rate)
    }
}
