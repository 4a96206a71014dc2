//! Memory-augmented language agents.
//!
//! Experience is collected on training tasks with focus points and
//! self-reflection, distilled into per-task tips, and retrieved at
//! evaluation time to ground planning. A trigger watches the live episode
//! and, when something goes wrong, runs a key-information reflection whose
//! plan is injected into the trajectory.

pub mod collector;
pub mod environment;
mod exec;
pub mod fixtures;
pub mod gateway;
pub mod harness;
pub mod memory;
pub mod planner;
pub mod retrieval;
pub mod tipper;
pub mod trace;

pub use collector::{collect, CollectConfig, CollectError, CollectionOutcome};
pub use environment::{EnvError, EnvFactory, Environment, EnvironmentSpec, StepOutcome, NOTHING_HAPPENS};
pub use gateway::{Backend, BackendConfig, Gateway, GatewayError, RoleId, ScriptEntry, ScriptedBackend};
pub use harness::{HarnessError, MetricsReport, RunConfig, Runner};
pub use memory::{ExperiencePool, Step, TaskSpec, Tip, TipCaps, TipsDictionary, Trajectory};
pub use planner::{evaluate, run_episode, run_react_baseline, EpisodeContext, PlannerConfig, TriggerPolicy};
pub use retrieval::{Embedder, HashingEmbedder, Hit, RetrievalIndex};
pub use tipper::{align_tips, build_tips_dictionary};
pub use trace::{Trace, TraceEvent};
