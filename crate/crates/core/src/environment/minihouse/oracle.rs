//! Omniscient policy that solves every generated task.

use super::world::{Location, MiniHouseWorld, ReceptacleKind, TaskType};

/// Appliance and verb a goal requires before placement, if any.
fn treatment(task_type: TaskType) -> Option<(ReceptacleKind, &'static str)> {
    match task_type {
        TaskType::CleanAndPlace => Some((ReceptacleKind::SinkBasin, "clean")),
        TaskType::HeatAndPlace => Some((ReceptacleKind::Microwave, "heat")),
        TaskType::CoolAndPlace => Some((ReceptacleKind::Fridge, "cool")),
        _ => None,
    }
}

fn treated(world: &MiniHouseWorld, obj: usize) -> bool {
    let o = &world.objects[obj];
    match world.goal.task_type {
        TaskType::CleanAndPlace => o.clean,
        TaskType::HeatAndPlace => o.hot,
        TaskType::CoolAndPlace => o.cool,
        _ => true,
    }
}

/// Moves to `recep`, opening it if needed; `None` once there and open.
fn approach(world: &MiniHouseWorld, recep: usize) -> Option<String> {
    let r = &world.receptacles[recep];
    if world.agent_at != Some(recep) {
        Some(format!("go to {}", r.name))
    } else if r.closed() {
        Some(format!("open {}", r.name))
    } else {
        None
    }
}

/// Next action of the oracle. Returns `look` once the goal already holds.
pub fn oracle_action(world: &MiniHouseWorld) -> String {
    if world.goal_satisfied() {
        return "look".to_owned();
    }
    let goal = &world.goal;
    let Some(held) = world.holding else {
        let target = goal.target.map(Location::In);
        let (obj, at) = world
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.kind == goal.object_kind && Some(o.location) != target)
            .find_map(|(i, o)| match o.location {
                Location::In(r) => Some((i, r)),
                Location::Held => None,
            })
            .expect("generated worlds keep enough goal objects");
        return approach(world, at).unwrap_or_else(|| {
            format!(
                "take {} from {}",
                world.objects[obj].name, world.receptacles[at].name
            )
        });
    };

    let item = &world.objects[held];
    if item.kind != goal.object_kind {
        // never produced by the oracle itself; drop it where we stand
        let here = world.agent_at.unwrap_or(0);
        return approach(world, here).unwrap_or_else(|| {
            let r = &world.receptacles[here];
            format!("put {} {} {}", item.name, r.kind.preposition(), r.name)
        });
    }

    if goal.task_type == TaskType::ExamineInLight {
        let lamp = goal.lamp.expect("examine goal has a lamp");
        let Location::In(at) = world.objects[lamp].location else {
            unreachable!("lamps are fixed")
        };
        return approach(world, at)
            .unwrap_or_else(|| format!("use {}", world.objects[lamp].name));
    }

    if let Some((kind, verb)) = treatment(goal.task_type) {
        if !treated(world, held) {
            let appliance = world
                .receptacles
                .iter()
                .position(|r| r.kind == kind)
                .expect("appliances are always present");
            if world.agent_at != Some(appliance) {
                return format!("go to {}", world.receptacles[appliance].name);
            }
            return format!("{verb} {} with {}", item.name, world.receptacles[appliance].name);
        }
    }

    let target = goal.target.expect("placement goal has a target");
    approach(world, target).unwrap_or_else(|| {
        let r = &world.receptacles[target];
        format!("put {} {} {}", item.name, r.kind.preposition(), r.name)
    })
}
