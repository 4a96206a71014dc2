//! Environments the agent acts in.
//!
//! [`MiniHouse`](minihouse::MiniHouse) is a deterministic household world
//! for offline runs. [`external`] proxies reset/step to a peer process over
//! newline-delimited JSON. [`webshop`] holds the graded shopping reward.

pub mod external;
pub mod minihouse;
pub mod webshop;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::TaskSpec;

/// Observation returned for any action that fails to parse or whose
/// preconditions do not hold.
pub const NOTHING_HAPPENS: &str = "Nothing happens.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub env_name: String,
    pub description: String,
    pub action_grammar: Vec<String>,
    /// Maximum number of actions per episode.
    pub step_budget: usize,
    /// Worked example trajectories shown to the model.
    pub few_shot: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: String,
    pub done: bool,
    pub reward: f64,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("task is for environment {found:?}, not {expected:?}")]
    WrongEnvironment { expected: String, found: String },
    #[error("episode is finished")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("{op} timed out after {after:?}")]
    Timeout { op: String, after: Duration },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("handshake mismatch: {0}")]
    Handshake(String),
    #[error("peer error: {0}")]
    Peer(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvironmentSpec;
    /// Starts a fresh episode for `task` and returns the initial observation.
    fn reset(&mut self, task: &TaskSpec) -> Result<String, EnvError>;
    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError>;
}

/// Creates fresh environment instances, one per worker.
pub trait EnvFactory: Sync {
    fn make(&self) -> Result<Box<dyn Environment>, EnvError>;
}

impl<F> EnvFactory for F
where
    F: Fn() -> Result<Box<dyn Environment>, EnvError> + Sync,
{
    fn make(&self) -> Result<Box<dyn Environment>, EnvError> {
        self()
    }
}

pub const MINIHOUSE: &str = "minihouse";

/// Specs for the environments known by name. MiniHouse carries its own
/// generated few-shot examples; the others describe benchmarks that are
/// attached through the external protocol.
pub fn builtin_spec(env_name: &str) -> Option<EnvironmentSpec> {
    let simple = |name: &str, description: &str, grammar: &[&str], budget: usize, few_shot: &str| {
        EnvironmentSpec {
            env_name: name.to_owned(),
            description: description.to_owned(),
            action_grammar: grammar.iter().map(|s| (*s).to_owned()).collect(),
            step_budget: budget,
            few_shot: few_shot.to_owned(),
        }
    };
    match env_name {
        MINIHOUSE => Some(minihouse::MiniHouse::spec()),
        "webshop" => Some(simple(
            "webshop",
            "An online shop. Search for products, open result pages, pick options such as \
             size and color, and buy the product that best matches the instruction, within \
             the price limit.",
            &["search[<query>]", "click[<button or product>]"],
            15,
            "Instruction: i need a pair of blue running shoes in size 9, price lower than 60.00 dollars\n\
             > search[blue running shoes size 9]\n\
             [Back to Search] Page 1 ... [B07XYZ] Men's Running Shoe Blue $45.99 ...\n\
             > click[B07XYZ]\n\
             ... size [8][9][10] color [blue][black] ... [Buy Now]\n\
             > click[9]\n\
             You have clicked 9.\n\
             > click[blue]\n\
             You have clicked blue.\n\
             > click[Buy Now]\n\
             Thank you for shopping with us!\n",
        )),
        "scienceworld" => Some(simple(
            "scienceworld",
            "A text-based science lab spread over several rooms. Move between rooms, pick up \
             and use tools, and change object states to complete elementary science tasks.",
            &[
                "look around",
                "go to <room>",
                "pick up <object>",
                "use <tool> on <object>",
                "move <object> to <container>",
                "activate <device>",
                "focus on <object>",
                "wait",
            ],
            80,
            "Task: measure the temperature of the water in the kitchen.\n\
             > go to kitchen\n\
             You move to the kitchen.\n\
             > pick up thermometer\n\
             You move the thermometer to the inventory.\n\
             > use thermometer on water\n\
             The thermometer measures a temperature of 13 degrees celsius.\n",
        )),
        "webarena-shopping" => Some(simple(
            "webarena-shopping",
            "A full e-commerce web site with a site search field, category menus, product \
             pages, a cart and order history.",
            &["click [<element id>]", "type [<element id>] [<text>]", "scroll [up|down]", "stop [<answer>]"],
            20,
            "Objective: add the cheapest red mug to the cart.\n\
             > type [12] [red mug]\n\
             Search results for red mug ...\n\
             > click [41]\n\
             Product page: Red Ceramic Mug $7.99 [Add to Cart]\n\
             > click [58]\n\
             You added Red Ceramic Mug to your shopping cart.\n",
        )),
        _ => None,
    }
}
