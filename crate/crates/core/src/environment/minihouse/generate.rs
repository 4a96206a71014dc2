//! Seeded world generation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::{Goal, Location, MiniHouseWorld, Object, Receptacle, ReceptacleKind, TaskType};

const OPTIONAL: [ReceptacleKind; 7] = [
    ReceptacleKind::Desk,
    ReceptacleKind::SideTable,
    ReceptacleKind::DiningTable,
    ReceptacleKind::CoffeeTable,
    ReceptacleKind::Dresser,
    ReceptacleKind::GarbageCan,
    ReceptacleKind::StoveBurner,
];

const LAMP_HOLDERS: [ReceptacleKind; 3] = [
    ReceptacleKind::Desk,
    ReceptacleKind::SideTable,
    ReceptacleKind::Dresser,
];

const ANY_KINDS: &[&str] = &[
    "mug", "apple", "potato", "tomato", "egg", "bread", "lettuce", "cup", "plate", "bowl",
    "knife", "spoon", "book", "pen", "pencil", "cellphone", "keychain", "creditcard", "cd",
    "vase", "statue", "candle", "soapbar", "spraybottle", "cloth", "watch", "remotecontrol",
];
const CLEANABLE: &[&str] = &["mug", "plate", "bowl", "cup", "knife", "spoon", "apple", "lettuce", "cloth"];
const HEATABLE: &[&str] = &["mug", "cup", "potato", "apple", "egg", "bread", "tomato", "plate"];
const COOLABLE: &[&str] = &["apple", "tomato", "lettuce", "potato", "egg", "bread", "mug", "cup", "plate", "bowl"];
const EXAMINABLE: &[&str] = &["book", "cd", "pen", "pencil", "cellphone", "keychain", "creditcard", "watch", "statue", "vase", "bowl"];

fn rng_for(task_type: TaskType, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(TaskType::ALL.len() as u64).wrapping_add(task_type.index()))
}

fn build_receptacles(rng: &mut ChaCha8Rng, need_lamp_holder: bool) -> Vec<Receptacle> {
    let mut kinds: Vec<(ReceptacleKind, usize)> = vec![
        (ReceptacleKind::Fridge, 1),
        (ReceptacleKind::Microwave, 1),
        (ReceptacleKind::SinkBasin, 1),
        (ReceptacleKind::CounterTop, 1),
        (ReceptacleKind::Cabinet, rng.random_range(1..=3)),
        (ReceptacleKind::Drawer, rng.random_range(1..=4)),
        (ReceptacleKind::Shelf, rng.random_range(0..=2)),
    ];
    for kind in OPTIONAL {
        if rng.random_bool(0.5) {
            kinds.push((kind, 1));
        }
    }
    if need_lamp_holder && !kinds.iter().any(|(k, _)| LAMP_HOLDERS.contains(k)) {
        kinds.push((*LAMP_HOLDERS.choose(rng).expect("non-empty"), 1));
    }
    let mut out: Vec<Receptacle> = kinds
        .into_iter()
        .flat_map(|(kind, n)| {
            (1..=n).map(move |i| Receptacle {
                name: format!("{} {i}", kind.word()),
                kind,
                open: false,
            })
        })
        .collect();
    out.shuffle(rng);
    out
}

fn is_appliance(kind: ReceptacleKind) -> bool {
    matches!(
        kind,
        ReceptacleKind::Fridge | ReceptacleKind::Microwave | ReceptacleKind::SinkBasin
    )
}

/// Builds the world for `(task_type, seed)`. The target objects never start
/// in the target receptacle, so the goal is initially unmet.
pub fn generate(task_type: TaskType, seed: u64) -> MiniHouseWorld {
    let mut rng = rng_for(task_type, seed);
    let examine = task_type == TaskType::ExamineInLight;
    let receptacles = build_receptacles(&mut rng, examine);

    let kind_pool = match task_type {
        TaskType::CleanAndPlace => CLEANABLE,
        TaskType::HeatAndPlace => HEATABLE,
        TaskType::CoolAndPlace => COOLABLE,
        TaskType::ExamineInLight => EXAMINABLE,
        TaskType::PickAndPlace | TaskType::PickTwoAndPlace => ANY_KINDS,
    };
    let object_kind = (*kind_pool.choose(&mut rng).expect("non-empty")).to_owned();

    let target = (!examine).then(|| {
        let candidates: Vec<usize> = receptacles
            .iter()
            .enumerate()
            .filter(|(_, r)| !is_appliance(r.kind) && r.kind != ReceptacleKind::StoveBurner)
            .map(|(i, _)| i)
            .collect();
        *candidates.choose(&mut rng).expect("countertop is always present")
    });

    let mut objects = Vec::new();
    let mut lamp = None;
    if examine {
        let holders: Vec<usize> = receptacles
            .iter()
            .enumerate()
            .filter(|(_, r)| LAMP_HOLDERS.contains(&r.kind))
            .map(|(i, _)| i)
            .collect();
        let at = *holders.choose(&mut rng).expect("lamp holder ensured");
        let mut l = Object::new("desklamp", 1, Location::In(at));
        l.is_lamp = true;
        lamp = Some(objects.len());
        objects.push(l);
    }

    let sources: Vec<usize> = (0..receptacles.len()).filter(|&i| Some(i) != target).collect();
    let copies = match task_type {
        TaskType::PickTwoAndPlace => rng.random_range(2..=3),
        _ => rng.random_range(1..=2),
    };
    for n in 1..=copies {
        let at = *sources.choose(&mut rng).expect("several receptacles");
        objects.push(Object::new(&object_kind, n, Location::In(at)));
    }

    let distractors = rng.random_range(4..=9);
    let mut counts: Vec<(String, usize)> = Vec::new();
    for _ in 0..distractors {
        let kind = *ANY_KINDS.choose(&mut rng).expect("non-empty");
        if kind == object_kind {
            continue;
        }
        let n = match counts.iter_mut().find(|(k, _)| k == kind) {
            Some((_, c)) => {
                *c += 1;
                *c
            }
            None => {
                counts.push((kind.to_owned(), 1));
                1
            }
        };
        let at = rng.random_range(0..receptacles.len());
        objects.push(Object::new(kind, n, Location::In(at)));
    }

    MiniHouseWorld {
        receptacles,
        objects,
        agent_at: None,
        holding: None,
        goal: Goal {
            task_type,
            object_kind,
            target,
            lamp,
        },
    }
}
