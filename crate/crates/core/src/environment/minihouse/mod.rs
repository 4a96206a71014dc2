//! MiniHouse: a single-room household text world with six task types.
//!
//! Task ids have the form `<task type slug>-<seed>`, e.g.
//! `pick_and_place-7`. The world is a pure function of that id, so every
//! observation byte is reproducible from the id and the action sequence.

mod generate;
mod oracle;
mod world;

use std::sync::LazyLock;

pub use generate::generate;
pub use oracle::oracle_action;
pub use world::{
    Goal, Location, MiniHouseWorld, Object, Receptacle, ReceptacleKind, TaskType,
};

use super::{EnvError, Environment, EnvironmentSpec, StepOutcome, MINIHOUSE};
use crate::memory::{Step, TaskSpec, Trajectory};

pub const STEP_BUDGET: usize = 20;

const DESCRIPTION: &str = "You are in a household room full of receptacles: cabinets, drawers, \
countertops, shelves, tables, a fridge, a microwave and a sink. Objects sit in or on the \
receptacles. Closed receptacles must be opened before you can see or take what is inside. You \
can carry one object at a time. The sink cleans, the microwave heats and the fridge cools an \
object you are holding. A desk lamp can be switched on with use. Any command that is not \
understood or cannot be carried out yields \"Nothing happens.\"";

const GRAMMAR: &[&str] = &[
    "look",
    "inventory",
    "go to <receptacle>",
    "open <receptacle>",
    "close <receptacle>",
    "take <object> from <receptacle>",
    "put <object> in/on <receptacle>",
    "clean <object> with <receptacle>",
    "heat <object> with <receptacle>",
    "cool <object> with <receptacle>",
    "use <object>",
    "examine <object or receptacle>",
];

/// Tasks reserved for worked examples; evaluation seeds stay below this.
const FEW_SHOT_SEED: u64 = 100_000;

pub fn task_id(task_type: TaskType, seed: u64) -> String {
    format!("{}-{seed}", task_type.slug())
}

pub fn parse_task_id(id: &str) -> Option<(TaskType, u64)> {
    let (slug, seed) = id.rsplit_once('-')?;
    Some((TaskType::from_slug(slug)?, seed.parse().ok()?))
}

pub fn task_spec(task_type: TaskType, seed: u64) -> TaskSpec {
    let world = generate(task_type, seed);
    TaskSpec::new(task_id(task_type, seed), world.instruction(), MINIHOUSE)
}

/// Runs the oracle from reset and returns its trajectory.
pub fn oracle_trajectory(task_type: TaskType, seed: u64, budget: usize) -> Trajectory {
    let mut world = generate(task_type, seed);
    let mut traj = Trajectory::new(task_id(task_type, seed), 0, world.initial_observation());
    while traj.steps.len() < budget && !world.goal_satisfied() {
        let action = oracle_action(&world);
        let observation = world.act(&action);
        traj.steps.push(Step {
            index: traj.steps.len(),
            thought: None,
            action,
            observation,
            correction: None,
        });
    }
    traj.succeeded = world.goal_satisfied();
    traj.reward = if traj.succeeded { 1.0 } else { 0.0 };
    traj
}

static SPEC: LazyLock<EnvironmentSpec> = LazyLock::new(|| {
    let few_shot = [TaskType::PickAndPlace, TaskType::HeatAndPlace]
        .into_iter()
        .map(|t| oracle_trajectory(t, FEW_SHOT_SEED, STEP_BUDGET).render())
        .collect::<Vec<_>>()
        .join("\n");
    EnvironmentSpec {
        env_name: MINIHOUSE.to_owned(),
        description: DESCRIPTION.to_owned(),
        action_grammar: GRAMMAR.iter().map(|s| (*s).to_owned()).collect(),
        step_budget: STEP_BUDGET,
        few_shot,
    }
});

#[derive(Debug, Clone)]
pub struct MiniHouse {
    spec: EnvironmentSpec,
    world: Option<MiniHouseWorld>,
    steps: usize,
    done: bool,
}

impl Default for MiniHouse {
    fn default() -> Self {
        Self::new()
    }
}

impl MiniHouse {
    pub fn new() -> Self {
        Self {
            spec: Self::spec(),
            world: None,
            steps: 0,
            done: false,
        }
    }

    pub fn with_step_budget(budget: usize) -> Self {
        let mut env = Self::new();
        env.spec.step_budget = budget;
        env
    }

    pub fn spec() -> EnvironmentSpec {
        SPEC.clone()
    }

    pub fn world(&self) -> Option<&MiniHouseWorld> {
        self.world.as_ref()
    }
}

impl Environment for MiniHouse {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn reset(&mut self, task: &TaskSpec) -> Result<String, EnvError> {
        if task.env_name != MINIHOUSE {
            return Err(EnvError::WrongEnvironment {
                expected: MINIHOUSE.to_owned(),
                found: task.env_name.clone(),
            });
        }
        let (task_type, seed) =
            parse_task_id(&task.id).ok_or_else(|| EnvError::UnknownTask(task.id.clone()))?;
        let world = generate(task_type, seed);
        let observation = world.initial_observation();
        self.world = Some(world);
        self.steps = 0;
        self.done = false;
        Ok(observation)
    }

    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        let world = self.world.as_mut().ok_or(EnvError::NotReset)?;
        if self.done || self.steps >= self.spec.step_budget {
            return Err(EnvError::EpisodeFinished);
        }
        let observation = world.act(action);
        self.steps += 1;
        self.done = world.goal_satisfied();
        Ok(StepOutcome {
            observation,
            done: self.done,
            reward: if self.done { 1.0 } else { 0.0 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::NOTHING_HAPPENS;
    use proptest::prelude::*;

    const GOLDEN_RESET: &str = include_str!("../../../tests/golden/minihouse_pick_and_place_7_reset.txt");
    const GOLDEN_OPEN: &str = include_str!("../../../tests/golden/minihouse_pick_and_place_7_open.txt");

    fn reset(id: &str) -> (MiniHouse, String) {
        let mut env = MiniHouse::new();
        let (t, seed) = parse_task_id(id).unwrap();
        let obs = env.reset(&task_spec(t, seed)).unwrap();
        (env, obs)
    }

    #[test]
    fn task_ids_round_trip() {
        for t in TaskType::ALL {
            assert_eq!(parse_task_id(&task_id(t, 42)), Some((t, 42)));
        }
        assert_eq!(parse_task_id("pick_and_place"), None);
        assert_eq!(parse_task_id("fly_away-3"), None);
        assert_eq!(parse_task_id("pick_and_place-x"), None);
    }

    #[test]
    fn reset_is_deterministic() {
        let (_, a) = reset("clean_and_place-3");
        let (mut env, b) = reset("clean_and_place-3");
        assert_eq!(a, b);
        env.step("look").unwrap();
        assert_eq!(env.reset(&task_spec(TaskType::CleanAndPlace, 3)).unwrap(), a);
    }

    #[test]
    fn reset_matches_golden() {
        let (_, obs) = reset("pick_and_place-7");
        assert_eq!(obs, GOLDEN_RESET.trim_end());
        assert!(obs.contains("drawer 1"));
    }

    #[test]
    fn open_drawer_matches_golden() {
        let (mut env, _) = reset("pick_and_place-7");
        env.step("go to drawer 1").unwrap();
        let out = env.step("open drawer 1").unwrap();
        assert_eq!(out.observation, GOLDEN_OPEN.trim_end());
        assert!(!out.done);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn wrong_env_and_unknown_task() {
        let mut env = MiniHouse::new();
        let mut t = task_spec(TaskType::PickAndPlace, 1);
        t.env_name = "webshop".into();
        assert!(matches!(env.reset(&t), Err(EnvError::WrongEnvironment { .. })));
        let t = TaskSpec::new("nonsense", "x", MINIHOUSE);
        assert!(matches!(env.reset(&t), Err(EnvError::UnknownTask(_))));
        assert!(matches!(env.step("look"), Err(EnvError::NotReset)));
    }

    #[test]
    fn taking_a_missing_object_does_nothing() {
        let (mut env, _) = reset("pick_and_place-7");
        let before = env.world().unwrap().state_digest();
        let out = env.step("take mug 9 from fridge 1").unwrap();
        assert_eq!(out.observation, NOTHING_HAPPENS);
        assert_eq!(env.world().unwrap().state_digest(), before);
        let out = env.step("dance wildly").unwrap();
        assert_eq!(out.observation, NOTHING_HAPPENS);
        assert_eq!(env.world().unwrap().state_digest(), before);
    }

    #[test]
    fn final_put_completes_and_episode_closes() {
        let traj = oracle_trajectory(TaskType::PickAndPlace, 7, STEP_BUDGET);
        let (mut env, _) = reset("pick_and_place-7");
        let mut last = None;
        for s in &traj.steps {
            last = Some(env.step(&s.action).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.reward, 1.0);
        assert!(traj.steps.last().unwrap().action.starts_with("put "));
        assert!(matches!(env.step("look"), Err(EnvError::EpisodeFinished)));
    }

    #[test]
    fn budget_is_enforced() {
        let mut env = MiniHouse::with_step_budget(1);
        env.reset(&task_spec(TaskType::PickAndPlace, 7)).unwrap();
        env.step("look").unwrap();
        assert!(matches!(env.step("look"), Err(EnvError::EpisodeFinished)));
    }

    #[test]
    fn oracle_looks_when_goal_already_holds() {
        let traj = oracle_trajectory(TaskType::HeatAndPlace, 5, STEP_BUDGET);
        let mut world = generate(TaskType::HeatAndPlace, 5);
        for s in &traj.steps {
            world.act(&s.action);
        }
        assert!(world.goal_satisfied());
        assert_eq!(oracle_action(&world), "look");
        let before = world.state_digest();
        world.act("look");
        assert_eq!(world.state_digest(), before);
        assert!(world.goal_satisfied());
    }

    #[test]
    fn pick_two_places_both_objects() {
        let traj = oracle_trajectory(TaskType::PickTwoAndPlace, 11, STEP_BUDGET);
        assert!(traj.succeeded);
        let puts = traj.steps.iter().filter(|s| s.action.starts_with("put ")).count();
        assert_eq!(puts, 2);
    }

    fn action_strategy() -> impl Strategy<Value = String> {
        let verb = prop::sample::select(vec![
            "go to", "open", "close", "take", "put", "clean", "heat", "cool", "use", "examine", "look",
        ]);
        let noun = prop::sample::select(vec![
            "fridge 1", "microwave 1", "sinkbasin 1", "countertop 1", "cabinet 1", "cabinet 2",
            "drawer 1", "drawer 2", "desk 1", "shelf 1", "desklamp 1", "mug 1", "apple 1",
            "book 1", "cup 2", "pen 1",
        ]);
        (verb, noun.clone(), noun, prop::sample::select(vec!["from", "in", "on", "with"])).prop_map(
            |(v, a, b, join)| match v {
                "take" | "put" | "clean" | "heat" | "cool" => format!("{v} {a} {join} {b}"),
                "look" => "look".to_owned(),
                _ => format!("{v} {a}"),
            },
        )
    }

    proptest! {
        #[test]
        fn rejected_actions_leave_state_untouched(
            type_index in 0usize..6,
            seed in 0u64..50,
            actions in prop::collection::vec(action_strategy(), 1..40),
        ) {
            let mut world = generate(TaskType::ALL[type_index], seed);
            for a in &actions {
                let before = world.clone();
                let digest = world.state_digest();
                match world.apply(a) {
                    None => {
                        prop_assert_eq!(&world, &before);
                        prop_assert_eq!(world.state_digest(), digest);
                    }
                    Some(obs) => prop_assert_ne!(obs, NOTHING_HAPPENS),
                }
            }
        }
    }

    #[test]
    fn few_shot_examples_are_solved() {
        let spec = MiniHouse::spec();
        assert_eq!(spec.step_budget, 20);
        assert!(spec.few_shot.contains("Your task is to: "));
        assert!(spec.few_shot.contains("> go to "));
    }
}
