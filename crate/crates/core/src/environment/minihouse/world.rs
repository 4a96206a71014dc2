//! MiniHouse world state and command semantics.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::environment::NOTHING_HAPPENS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    PickAndPlace,
    CleanAndPlace,
    HeatAndPlace,
    CoolAndPlace,
    ExamineInLight,
    PickTwoAndPlace,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::PickAndPlace,
        TaskType::CleanAndPlace,
        TaskType::HeatAndPlace,
        TaskType::CoolAndPlace,
        TaskType::ExamineInLight,
        TaskType::PickTwoAndPlace,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            TaskType::PickAndPlace => "pick_and_place",
            TaskType::CleanAndPlace => "clean_and_place",
            TaskType::HeatAndPlace => "heat_and_place",
            TaskType::CoolAndPlace => "cool_and_place",
            TaskType::ExamineInLight => "examine_in_light",
            TaskType::PickTwoAndPlace => "pick_two_and_place",
        }
    }

    pub fn from_slug(slug: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.slug() == slug)
    }

    pub(crate) fn index(self) -> u64 {
        Self::ALL.iter().position(|&t| t == self).expect("listed") as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceptacleKind {
    Cabinet,
    Drawer,
    Fridge,
    Microwave,
    SinkBasin,
    CounterTop,
    Desk,
    Shelf,
    SideTable,
    DiningTable,
    CoffeeTable,
    Dresser,
    GarbageCan,
    StoveBurner,
}

impl ReceptacleKind {
    pub fn word(self) -> &'static str {
        match self {
            ReceptacleKind::Cabinet => "cabinet",
            ReceptacleKind::Drawer => "drawer",
            ReceptacleKind::Fridge => "fridge",
            ReceptacleKind::Microwave => "microwave",
            ReceptacleKind::SinkBasin => "sinkbasin",
            ReceptacleKind::CounterTop => "countertop",
            ReceptacleKind::Desk => "desk",
            ReceptacleKind::Shelf => "shelf",
            ReceptacleKind::SideTable => "sidetable",
            ReceptacleKind::DiningTable => "diningtable",
            ReceptacleKind::CoffeeTable => "coffeetable",
            ReceptacleKind::Dresser => "dresser",
            ReceptacleKind::GarbageCan => "garbagecan",
            ReceptacleKind::StoveBurner => "stoveburner",
        }
    }

    pub fn openable(self) -> bool {
        matches!(
            self,
            ReceptacleKind::Cabinet
                | ReceptacleKind::Drawer
                | ReceptacleKind::Fridge
                | ReceptacleKind::Microwave
        )
    }

    /// Preposition used when putting something into/onto it.
    pub fn preposition(self) -> &'static str {
        if self.openable() || self == ReceptacleKind::GarbageCan {
            "in"
        } else {
            "on"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Receptacle {
    pub name: String,
    pub kind: ReceptacleKind,
    pub open: bool,
}

impl Receptacle {
    pub fn closed(&self) -> bool {
        self.kind.openable() && !self.open
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    In(usize),
    Held,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Object {
    pub name: String,
    pub kind: String,
    pub location: Location,
    pub clean: bool,
    pub hot: bool,
    pub cool: bool,
    /// Lamps are fixed in place and can be switched on.
    pub is_lamp: bool,
    pub on: bool,
}

impl Object {
    pub fn new(kind: &str, number: usize, location: Location) -> Self {
        Self {
            name: format!("{kind} {number}"),
            kind: kind.to_owned(),
            location,
            clean: false,
            hot: false,
            cool: false,
            is_lamp: false,
            on: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub task_type: TaskType,
    pub object_kind: String,
    /// Receptacle index for placement goals.
    pub target: Option<usize>,
    /// Object index of the lamp for the examine goal.
    pub lamp: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MiniHouseWorld {
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<Object>,
    /// Receptacle the agent stands at; `None` is the middle of the room.
    pub agent_at: Option<usize>,
    pub holding: Option<usize>,
    pub goal: Goal,
}

/// Joins names AlfWorld style: "a x", "a x, and a y", "a x, a y, and a z".
pub(crate) fn article_list<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    let names: Vec<&str> = names.into_iter().collect();
    match names.as_slice() {
        [] => "nothing".to_owned(),
        [one] => format!("a {one}"),
        [init @ .., last] => {
            let mut out = String::new();
            for n in init {
                let _ = write!(out, "a {n}, ");
            }
            let _ = write!(out, "and a {last}");
            out
        }
    }
}

enum Command<'a> {
    Look,
    Inventory,
    GoTo(&'a str),
    Open(&'a str),
    Close(&'a str),
    Take(&'a str, &'a str),
    Put(&'a str, &'a str),
    Clean(&'a str, &'a str),
    Heat(&'a str, &'a str),
    Cool(&'a str, &'a str),
    Use(&'a str),
    Examine(&'a str),
}

const NAME: &str = r"([a-z]+ [0-9]+)";

fn parse_command(line: &str) -> Option<Command<'_>> {
    static PATTERNS: LazyLock<[Regex; 10]> = LazyLock::new(|| {
        [
            format!("^go to {NAME}$"),
            format!("^open {NAME}$"),
            format!("^close {NAME}$"),
            format!("^take {NAME} from {NAME}$"),
            format!("^put {NAME} (?:in/on|in|on) {NAME}$"),
            format!("^clean {NAME} with {NAME}$"),
            format!("^heat {NAME} with {NAME}$"),
            format!("^cool {NAME} with {NAME}$"),
            format!("^use {NAME}$"),
            format!("^examine {NAME}$"),
        ]
        .map(|p| Regex::new(&p).expect("valid grammar pattern"))
    });
    match line {
        "look" => return Some(Command::Look),
        "inventory" => return Some(Command::Inventory),
        _ => {}
    }
    for (i, re) in PATTERNS.iter().enumerate() {
        if let Some(c) = re.captures(line) {
            let a = c.get(1).map(|m| m.as_str()).unwrap_or_default();
            let b = c.get(2).map(|m| m.as_str()).unwrap_or_default();
            return Some(match i {
                0 => Command::GoTo(a),
                1 => Command::Open(a),
                2 => Command::Close(a),
                3 => Command::Take(a, b),
                4 => Command::Put(a, b),
                5 => Command::Clean(a, b),
                6 => Command::Heat(a, b),
                7 => Command::Cool(a, b),
                8 => Command::Use(a),
                _ => Command::Examine(a),
            });
        }
    }
    None
}

/// Lowercases and collapses whitespace.
pub(crate) fn normalize_action(action: &str) -> String {
    action
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl MiniHouseWorld {
    pub fn receptacle_index(&self, name: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn objects_in(&self, recep: usize) -> impl Iterator<Item = (usize, &Object)> {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.location == Location::In(recep))
    }

    /// Digest of the full state, for checking that an action changed nothing.
    pub fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    pub fn goal_satisfied(&self) -> bool {
        let g = &self.goal;
        let of_kind = |o: &&Object| o.kind == g.object_kind;
        let in_target = |o: &&Object| g.target.is_some_and(|t| o.location == Location::In(t));
        match g.task_type {
            TaskType::PickAndPlace => self.objects.iter().filter(of_kind).any(|o| in_target(&o)),
            TaskType::CleanAndPlace => self
                .objects
                .iter()
                .filter(of_kind)
                .any(|o| o.clean && in_target(&o)),
            TaskType::HeatAndPlace => self
                .objects
                .iter()
                .filter(of_kind)
                .any(|o| o.hot && in_target(&o)),
            TaskType::CoolAndPlace => self
                .objects
                .iter()
                .filter(of_kind)
                .any(|o| o.cool && in_target(&o)),
            TaskType::PickTwoAndPlace => {
                self.objects.iter().filter(of_kind).filter(in_target).count() >= 2
            }
            TaskType::ExamineInLight => {
                let lamp_on = g.lamp.is_some_and(|l| self.objects[l].on);
                let holding = self
                    .holding
                    .is_some_and(|h| self.objects[h].kind == g.object_kind);
                lamp_on && holding
            }
        }
    }

    pub fn instruction(&self) -> String {
        let g = &self.goal;
        let target = g.target.map(|t| &self.receptacles[t]);
        let place = |adjective: &str| {
            let t = target.expect("placement goal has a target");
            format!(
                "put a {adjective}{} {} {}.",
                g.object_kind,
                t.kind.preposition(),
                t.name
            )
        };
        match g.task_type {
            TaskType::PickAndPlace => place(""),
            TaskType::CleanAndPlace => place("clean "),
            TaskType::HeatAndPlace => place("hot "),
            TaskType::CoolAndPlace => place("cool "),
            TaskType::PickTwoAndPlace => {
                let t = target.expect("placement goal has a target");
                format!(
                    "find two {} and put them {} {}.",
                    g.object_kind,
                    t.kind.preposition(),
                    t.name
                )
            }
            TaskType::ExamineInLight => {
                let lamp = g.lamp.map_or("lamp", |l| self.objects[l].name.as_str());
                format!("look at the {} under the {lamp}.", g.object_kind)
            }
        }
    }

    fn room_overview(&self) -> String {
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            article_list(self.receptacles.iter().map(|r| r.name.as_str()))
        )
    }

    pub fn initial_observation(&self) -> String {
        format!(
            "-= Welcome to MiniHouse! =-\n\n{}\n\nYour task is to: {}",
            self.room_overview(),
            self.instruction()
        )
    }

    fn contents(&self, recep: usize) -> String {
        let r = &self.receptacles[recep];
        let items = article_list(self.objects_in(recep).map(|(_, o)| o.name.as_str()));
        if r.closed() {
            format!("The {} is closed.", r.name)
        } else if r.kind.openable() {
            format!("The {} is open. In it, you see {items}.", r.name)
        } else {
            format!("On the {}, you see {items}.", r.name)
        }
    }

    fn visible(&self, obj: usize) -> bool {
        match self.objects[obj].location {
            Location::Held => true,
            Location::In(r) => self.agent_at == Some(r) && !self.receptacles[r].closed(),
        }
    }

    fn at(&self, recep: usize) -> bool {
        self.agent_at == Some(recep)
    }

    /// Applies `action`. Returns the observation; `None` means the action
    /// was rejected and the state is untouched.
    pub fn apply(&mut self, action: &str) -> Option<String> {
        let line = normalize_action(action);
        let cmd = parse_command(&line)?;
        let recep = |name: &str| self.receptacle_index(name);
        let object = |name: &str| self.object_index(name);
        match cmd {
            Command::Look => Some(match self.agent_at {
                None => self.room_overview(),
                Some(r) => format!(
                    "You are facing the {}. Next to it, you see nothing.",
                    self.receptacles[r].name
                ),
            }),
            Command::Inventory => Some(match self.holding {
                None => "You are not carrying anything.".to_owned(),
                Some(o) => format!("You are carrying: a {}.", self.objects[o].name),
            }),
            Command::GoTo(name) => {
                let r = recep(name)?;
                if self.at(r) {
                    return None;
                }
                self.agent_at = Some(r);
                Some(format!("You arrive at {}. {}", self.receptacles[r].name, self.contents(r)))
            }
            Command::Open(name) => {
                let r = recep(name)?;
                if !self.at(r) || !self.receptacles[r].closed() {
                    return None;
                }
                self.receptacles[r].open = true;
                Some(format!("You open the {}. {}", self.receptacles[r].name, self.contents(r)))
            }
            Command::Close(name) => {
                let r = recep(name)?;
                let rec = &self.receptacles[r];
                if !self.at(r) || !rec.kind.openable() || !rec.open {
                    return None;
                }
                self.receptacles[r].open = false;
                Some(format!("You close the {}.", self.receptacles[r].name))
            }
            Command::Take(obj, from) => {
                let (o, r) = (object(obj)?, recep(from)?);
                let item = &self.objects[o];
                if !self.at(r)
                    || self.receptacles[r].closed()
                    || item.location != Location::In(r)
                    || item.is_lamp
                    || self.holding.is_some()
                {
                    return None;
                }
                self.objects[o].location = Location::Held;
                self.holding = Some(o);
                Some(format!(
                    "You pick up the {} from the {}.",
                    self.objects[o].name, self.receptacles[r].name
                ))
            }
            Command::Put(obj, onto) => {
                let (o, r) = (object(obj)?, recep(onto)?);
                if self.holding != Some(o) || !self.at(r) || self.receptacles[r].closed() {
                    return None;
                }
                self.objects[o].location = Location::In(r);
                self.holding = None;
                let rec = &self.receptacles[r];
                Some(format!(
                    "You put the {} {} the {}.",
                    self.objects[o].name,
                    rec.kind.preposition(),
                    rec.name
                ))
            }
            Command::Clean(obj, with) | Command::Heat(obj, with) | Command::Cool(obj, with) => {
                let (o, r) = (object(obj)?, recep(with)?);
                let (needed, verb) = match cmd {
                    Command::Clean(..) => (ReceptacleKind::SinkBasin, "clean"),
                    Command::Heat(..) => (ReceptacleKind::Microwave, "heat"),
                    _ => (ReceptacleKind::Fridge, "cool"),
                };
                if self.holding != Some(o) || !self.at(r) || self.receptacles[r].kind != needed {
                    return None;
                }
                let item = &mut self.objects[o];
                match verb {
                    "clean" => item.clean = true,
                    "heat" => {
                        item.hot = true;
                        item.cool = false;
                    }
                    _ => {
                        item.cool = true;
                        item.hot = false;
                    }
                }
                Some(format!(
                    "You {verb} the {} using the {}.",
                    self.objects[o].name, self.receptacles[r].name
                ))
            }
            Command::Use(name) => {
                let o = object(name)?;
                let lamp = &self.objects[o];
                if !lamp.is_lamp || lamp.on || !self.visible(o) {
                    return None;
                }
                self.objects[o].on = true;
                Some(format!("You turn on the {}.", self.objects[o].name))
            }
            Command::Examine(name) => {
                if let Some(r) = recep(name) {
                    return self.at(r).then(|| self.contents(r));
                }
                let o = object(name)?;
                if !self.visible(o) {
                    return None;
                }
                let item = &self.objects[o];
                let mut desc = format!("There's nothing special about {}.", item.name);
                if item.is_lamp {
                    desc = format!(
                        "The {} is {}.",
                        item.name,
                        if item.on { "on" } else { "off" }
                    );
                }
                Some(desc)
            }
        }
    }

    /// Like [`apply`](Self::apply) but maps rejection to the fixed reply.
    pub fn act(&mut self, action: &str) -> String {
        self.apply(action).unwrap_or_else(|| NOTHING_HAPPENS.to_owned())
    }
}
