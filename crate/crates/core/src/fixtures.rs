//! Offline stand-ins for a model: scripts derived from the MiniHouse oracle
//! and a policy with a planted flaw that only a correction can fix.

use std::time::Duration;

use crate::environment::minihouse::{generate, oracle_action, parse_task_id, oracle_trajectory, MiniHouseWorld};
use crate::environment::minihouse::Location;
use crate::gateway::{Backend, BackendFailure, BackendReply, GatewayError, GenerationRequest, RoleId, ScriptEntry};
use crate::memory::{TaskSpec, CORRECTION_PREFIX};

const FOCUS: &str = "1. Read the task and name the object and the destination before moving.\n\
2. Visit the receptacles most likely to hold the object first.\n\
3. Open closed receptacles before concluding they are empty.\n\
4. Treat the object with the matching appliance before placing it.\n\
5. Finish with the put action as soon as the object is ready.\n";

const REFLECTION: &str = "I kept looking around without moving. Next time I will go to the likely \
receptacles, open them, take the object and finish the task.";

fn success_tips(object: &str) -> String {
    format!(
        "1. Go straight to the receptacles that usually hold a {object}.\n\
         2. Open closed receptacles before searching elsewhere.\n\
         3. Put the {object} down as soon as the task condition holds.\n"
    )
}

fn compare_tips(object: &str) -> String {
    format!(
        "1. Do not repeat look; move to a receptacle instead.\n\
         2. Search for the {object} in closed receptacles early.\n\
         3. Take the {object} as soon as it is visible.\n"
    )
}

fn supplement_tips(object: &str) -> String {
    // the first item repeats a compare tip on purpose
    format!(
        "1. Take the {object} as soon as it is visible.\n\
         2. Keep track of which receptacles were already opened.\n"
    )
}

/// Shape of the generated script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptOptions {
    /// Step budget the run will use.
    pub step_budget: usize,
    /// Collection retries allowed per task.
    pub max_retries: u32,
    /// Number of training tasks, counted from the first, whose first trial
    /// is a failing run of `look` actions.
    pub fail_first: usize,
}

fn object_of(task: &TaskSpec) -> Result<(MiniHouseWorld, String), GatewayError> {
    let (t, seed) = parse_task_id(&task.id).ok_or_else(|| GatewayError::Config {
        field: "tasks".into(),
        message: format!("{} is not a generated MiniHouse task", task.id),
    })?;
    let world = generate(t, seed);
    let object = world.goal.object_kind.clone();
    Ok((world, object))
}

fn oracle_entries(task: &TaskSpec, role: RoleId, budget: usize) -> Result<Vec<ScriptEntry>, GatewayError> {
    let (world, _) = object_of(task)?;
    let traj = oracle_trajectory(world.goal.task_type, parse_task_id(&task.id).expect("checked").1, budget);
    Ok(traj
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = ScriptEntry::new(role, s.action.clone());
            if i == 0 {
                e.expecting(task.instruction.clone())
            } else {
                e
            }
        })
        .collect())
}

/// Script entries for collecting `train` and then distilling its tips.
/// Trials solve their task with oracle actions, except the planted failures.
pub fn collection_script(train: &[TaskSpec], opts: ScriptOptions) -> Result<Vec<ScriptEntry>, GatewayError> {
    let mut out = vec![ScriptEntry::new(RoleId::Focus, FOCUS)];
    let mut tips = Vec::new();
    for (i, task) in train.iter().enumerate() {
        let (_, object) = object_of(task)?;
        let planted = i < opts.fail_first;
        if planted {
            out.extend((0..opts.step_budget).map(|_| ScriptEntry::new(RoleId::ReAct, "look")));
            if opts.max_retries == 0 {
                continue;
            }
            out.push(ScriptEntry::new(RoleId::Reflect, REFLECTION));
            tips.push(ScriptEntry::new(RoleId::Tips, compare_tips(&object)));
            tips.push(ScriptEntry::new(RoleId::Tips, supplement_tips(&object)));
        } else {
            tips.push(ScriptEntry::new(RoleId::Tips, success_tips(&object)));
        }
        out.extend(oracle_entries(task, RoleId::ReAct, opts.step_budget)?);
    }
    out.extend(tips);
    Ok(out)
}

/// Policy entries that solve every task in `eval` with oracle actions.
pub fn evaluation_script(eval: &[TaskSpec], step_budget: usize) -> Result<Vec<ScriptEntry>, GatewayError> {
    let mut out = Vec::new();
    for task in eval {
        out.extend(oracle_entries(task, RoleId::Policy, step_budget)?);
    }
    Ok(out)
}

/// Script for collect, tips and eval over the given (train, eval) splits,
/// in the order a full run consumes them.
pub fn pipeline_script(
    splits: &[(Vec<TaskSpec>, Vec<TaskSpec>)],
    opts: ScriptOptions,
) -> Result<Vec<ScriptEntry>, GatewayError> {
    let mut out = Vec::new();
    for (train, eval) in splits {
        out.extend(collection_script(train, opts)?);
        out.extend(evaluation_script(eval, opts.step_budget)?);
    }
    Ok(out)
}

pub const FLAWED_KEY_INFORMATION: &str = "State: standing at the receptacle that holds the object\n\
Inventory: nothing\n\
Completed: found the object\n\
Pending: pick it up and finish the task\n\
Anomaly: the take action did nothing";

pub const FLAWED_REFLECTION: &str = "Q: Did the take action name the right receptacle?\n\
A: No, it named a receptacle the object is not in.\n\
Q: Where is the object?\n\
A: In the receptacle I am standing at.\n\
Plan: take the object from the receptacle it is actually in, then finish the task.";

/// A policy that follows the oracle but, on tasks whose object starts inside
/// a closed receptacle, takes it from the wrong place and keeps doing so
/// until a corrective plan shows up in its trajectory. KIE and KIR calls get
/// fixed replies that supply such a plan.
///
/// The backend is stateless: it replays the trajectory found in the prompt
/// on a freshly generated world, so episodes may run in any order.
#[derive(Debug, Clone)]
pub struct FlawedPolicyBackend {
    worlds: Vec<(String, MiniHouseWorld)>,
}

impl FlawedPolicyBackend {
    pub fn new(tasks: &[TaskSpec]) -> Result<Self, GatewayError> {
        let worlds = tasks
            .iter()
            .map(|t| {
                let (world, _) = object_of(t)?;
                Ok((world.initial_observation(), world))
            })
            .collect::<Result<_, GatewayError>>()?;
        Ok(Self { worlds })
    }

    /// Whether the planted flaw applies to this task.
    pub fn flawed(world: &MiniHouseWorld) -> bool {
        world.objects.iter().any(|o| {
            o.kind == world.goal.object_kind
                && matches!(o.location, Location::In(r) if world.receptacles[r].kind.openable())
        })
    }

    fn next_action(&self, prompt: &str) -> Result<String, GatewayError> {
        let unknown = || GatewayError::Config {
            field: "prompt".into(),
            message: "no known task in the current attempt".into(),
        };
        let attempt = prompt.rsplit_once("Current attempt:\n").ok_or_else(unknown)?.1;
        let (initial, world) = self
            .worlds
            .iter()
            .find(|(obs, _)| attempt.starts_with(obs.trim_end()))
            .ok_or_else(unknown)?;
        let flawed = Self::flawed(world);
        let mut world = world.clone();
        let mut corrected = false;
        for line in attempt[initial.trim_end().len()..].lines() {
            if line.starts_with(CORRECTION_PREFIX) {
                corrected = true;
            } else if let Some(action) = line.strip_prefix("> ") {
                if !action.starts_with("think:") {
                    world.act(action);
                }
            }
        }
        let action = oracle_action(&world);
        if flawed && !corrected && world.holding.is_none() {
            if let Some((object, from)) = action.strip_prefix("take ").and_then(|a| a.split_once(" from ")) {
                let wrong = world
                    .receptacles
                    .iter()
                    .map(|r| r.name.as_str())
                    .find(|name| *name != from)
                    .unwrap_or(from);
                return Ok(format!("take {object} from {wrong}"));
            }
        }
        Ok(action)
    }
}

impl Backend for FlawedPolicyBackend {
    fn backend_id(&self) -> String {
        "flawed-policy".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, BackendFailure> {
        let text = match request.role {
            RoleId::Kie => FLAWED_KEY_INFORMATION.to_owned(),
            RoleId::Kir => FLAWED_REFLECTION.to_owned(),
            RoleId::Policy | RoleId::ReAct => self.next_action(&request.user)?,
            other => {
                return Err(GatewayError::Config {
                    field: "role".into(),
                    message: format!("{} is not scripted by the flawed policy", other.as_str()),
                }
                .into())
            }
        };
        Ok(BackendReply {
            text,
            latency: Duration::ZERO,
            attempts: 1,
        })
    }
}
