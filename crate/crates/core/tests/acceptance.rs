//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runs offline.

use std::collections::BTreeSet;
use std::io::{pipe, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use groundmem_core::collector::{collect, CollectConfig};
use groundmem_core::environment::external::{serve, EchoWorld, ExternalEnv};
use groundmem_core::environment::minihouse::{oracle_action, oracle_trajectory, task_spec, MiniHouse, TaskType};
use groundmem_core::environment::webshop::{webshop_reward, PurchaseOutcome, ShoppingQuery};
use groundmem_core::environment::{EnvError, Environment, EnvironmentSpec, StepOutcome};
use groundmem_core::fixtures::{collection_script, pipeline_script, FlawedPolicyBackend, ScriptOptions};
use groundmem_core::gateway::{script_to_string, RoleId, ScriptEntry, ScriptedBackend};
use groundmem_core::harness::{RunConfig, Runner};
use groundmem_core::memory::{TaskSpec, TipCaps, TipOrigin};
use groundmem_core::planner::{evaluate, run_episode, EpisodeContext, Memory, PlannerConfig, TriggerPolicy};
use groundmem_core::retrieval::{EmbeddingVector, HashingEmbedder, IndexEntry, RetrievalIndex};
use groundmem_core::tipper::build_tips_dictionary;
use groundmem_core::{Embedder, Gateway};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUITE_BUDGET: Duration = Duration::from_secs(120);
const FAST_BUDGET: Duration = Duration::from_secs(10);
const SCORE_TOL: f64 = 1e-12;
const REWARD_TOL: f64 = 1e-12;
const FLAWED_MAX_SR: f64 = 0.40;
const CORRECTED_MIN_SR: f64 = 0.80;
const Z: u32 = 3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scripted(entries: Vec<ScriptEntry>) -> Gateway {
    Gateway::new(Box::new(ScriptedBackend::new(entries)))
}

fn minihouse(budget: usize) -> impl Fn() -> Result<Box<dyn Environment>, EnvError> + Sync {
    move || Ok(Box::new(MiniHouse::with_step_budget(budget)) as Box<dyn Environment>)
}

fn looks(n: usize) -> impl Iterator<Item = ScriptEntry> {
    (0..n).map(|_| ScriptEntry::new(RoleId::ReAct, "look"))
}

fn oracle_react(task: &TaskSpec) -> Vec<ScriptEntry> {
    let (t, seed) = groundmem_core::environment::minihouse::parse_task_id(&task.id).unwrap();
    oracle_trajectory(t, seed, 20)
        .steps
        .into_iter()
        .map(|s| ScriptEntry::new(RoleId::ReAct, s.action))
        .collect()
}

fn numbered(items: &[String]) -> String {
    items.iter().enumerate().map(|(i, t)| format!("{}. {t}\n", i + 1)).collect()
}

// ---------------------------------------------------------------------------

fn control_flow() -> Outcome {
    let start = Instant::now();
    let cfg = CollectConfig {
        max_retries: Z,
        ..CollectConfig::default()
    };
    let task = task_spec(TaskType::PickAndPlace, 3);

    // never succeeds
    let budget = 3;
    let mut entries = vec![ScriptEntry::new(RoleId::Focus, "1. look around")];
    for z in 0..=Z {
        entries.extend(looks(budget));
        if z < Z {
            entries.push(ScriptEntry::new(RoleId::Reflect, format!("reflection {z}")));
        }
    }
    let out = collect(&scripted(entries), &minihouse(budget), std::slice::from_ref(&task), &cfg, "h", 1)
        .map_err(|e| e.to_string())?;
    let rec = &out.records[0];
    check(rec.trials.len() == 4 && rec.reflections.entries.len() == 3, || {
        format!(
            "never-solved task: {} trials, {} reflections",
            rec.trials.len(),
            rec.reflections.entries.len()
        )
    })?;

    // success on trial z
    for z in 0..=Z {
        let mut entries = vec![ScriptEntry::new(RoleId::Focus, "1. look around")];
        for i in 0..z {
            entries.extend(looks(20));
            entries.push(ScriptEntry::new(RoleId::Reflect, format!("reflection {i}")));
        }
        entries.extend(oracle_react(&task));
        let out = collect(&scripted(entries), &minihouse(20), std::slice::from_ref(&task), &cfg, "h", 1)
            .map_err(|e| e.to_string())?;
        let rec = &out.records[0];
        check(
            rec.trials.len() == z as usize + 1
                && rec.reflections.entries.len() == z as usize
                && rec.trials.last().unwrap().succeeded,
            || format!("success on trial {z}: {} trials, {} reflections", rec.trials.len(), rec.reflections.entries.len()),
        )?;
    }

    // randomized runs: pool and tips invariants
    let caps = TipCaps::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let runs = 25;
    for run in 0..runs {
        let n = rng.random_range(2..=6);
        let mut ids = BTreeSet::new();
        let mut tasks = Vec::new();
        while tasks.len() < n {
            let t = task_spec(TaskType::ALL[rng.random_range(0..6)], rng.random_range(0..1000));
            if ids.insert(t.id.clone()) {
                tasks.push(t);
            }
        }
        // index of the succeeding trial, or None
        let plan: Vec<Option<u32>> = tasks
            .iter()
            .map(|_| {
                let z = rng.random_range(0..=Z + 1);
                (z <= Z).then_some(z)
            })
            .collect();
        let mut entries = vec![ScriptEntry::new(RoleId::Focus, "1. look around")];
        let mut tips_entries = Vec::new();
        let mut compare_len = Vec::new();
        for (ti, (task, solve)) in tasks.iter().zip(&plan).enumerate() {
            let fails = solve.unwrap_or(Z + 1);
            for i in 0..fails {
                entries.extend(looks(20));
                if i < Z {
                    entries.push(ScriptEntry::new(RoleId::Reflect, format!("r{i}")));
                }
            }
            if let Some(z) = solve {
                entries.extend(oracle_react(task));
                let k1 = rng.random_range(1..=8);
                let first: Vec<String> = (0..k1).map(|j| format!("tip {ti}.{j}")).collect();
                if *z == 0 {
                    tips_entries.push(ScriptEntry::new(RoleId::Tips, numbered(&first)));
                    compare_len.push(0);
                } else {
                    let k2 = rng.random_range(1..=6);
                    let extra: Vec<String> = (0..k2)
                        .map(|j| if j % 2 == 0 { format!("tip {ti}.{j}") } else { format!("extra {ti}.{j}") })
                        .collect();
                    tips_entries.push(ScriptEntry::new(RoleId::Tips, numbered(&first)));
                    tips_entries.push(ScriptEntry::new(RoleId::Tips, numbered(&extra)));
                    compare_len.push(k1.min(caps.compare));
                }
            } else {
                compare_len.push(0);
            }
        }
        entries.extend(tips_entries);
        let gw = scripted(entries);
        let out = collect(&gw, &minihouse(20), &tasks, &cfg, "h", 1).map_err(|e| e.to_string())?;
        let td = build_tips_dictionary(&gw, &out.pool, caps, "minihouse").tips;

        for ((task, solve), rec) in tasks.iter().zip(&plan).zip(&out.records) {
            let trials = out.pool.trials(&task.id).len();
            let reflections = rec.reflections.entries.len();
            let expected = match solve {
                Some(z) => *z as usize,
                None => trials - 1,
            };
            check(trials <= Z as usize + 1 && reflections == expected, || {
                format!("run {run} {}: {trials} trials, {reflections} reflections", task.id)
            })?;
        }
        let solved: Vec<&str> = out.pool.success_view().keys().copied().collect();
        let domain: Vec<&str> = td.entries.keys().map(String::as_str).collect();
        check(solved == domain, || format!("run {run}: TD domain {domain:?} != solved {solved:?}"))?;
        td.validate(caps).map_err(|e| format!("run {run}: {e}"))?;
        for (task, want_compare) in tasks.iter().zip(&compare_len) {
            if let Some(list) = td.get(&task.id) {
                let compare = list.iter().filter(|t| t.origin == TipOrigin::Compare).count();
                let success = list.len() - compare;
                check(compare == *want_compare && success <= caps.success, || {
                    format!("run {run} {}: {compare} compare / {success} success tips", task.id)
                })?;
            }
        }
    }
    let took = start.elapsed();
    check(took < FAST_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("Z={Z}: 4 trials / 3 reflections; z reflections on trial z; {runs} randomized runs ({took:.2?})"))
}

fn retrieval_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pools = 200;
    let mut queries = 0;
    for p in 0..pools {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=64);
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let v = match rng.random_range(0..10) {
                // exact duplicates exercise tie-breaking
                0 if i > 0 => raw[rng.random_range(0..i)].clone(),
                1 => vec![0.0; dim],
                _ => (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            raw.push(v);
        }
        let entries = raw
            .iter()
            .enumerate()
            .map(|(i, v)| IndexEntry {
                task_id: format!("t{i}"),
                vector: EmbeddingVector::normalized(v.clone()),
            })
            .collect();
        let index = RetrievalIndex::from_entries("raw", entries);
        for _ in 0..5 {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let qv = EmbeddingVector::normalized(q.clone());
            // brute force on the raw vectors
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut scan: Vec<(usize, f64)> = raw
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let (nv, nq) = (norm(v), norm(&q));
                    let s = if nv == 0.0 || nq == 0.0 {
                        0.0
                    } else {
                        v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / (nv * nq)
                    };
                    (i, s)
                })
                .collect();
            scan.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let k = rng.random_range(1..=n + 2);
            let hits = index.query_vector(&qv, k);
            check(hits.len() == k.min(n), || format!("pool {p}: {} hits for k={k}", hits.len()))?;
            for (rank, hit) in hits.iter().enumerate() {
                let (i, s) = scan[rank];
                // near-ties may swap under rounding; accept only a swap within tolerance
                let same = hit.task_id == format!("t{i}");
                let tied = (hit.similarity - s).abs() <= SCORE_TOL
                    && scan
                        .iter()
                        .any(|(j, sj)| hit.task_id == format!("t{j}") && (sj - s).abs() <= SCORE_TOL);
                check(same || tied, || format!("pool {p} rank {rank}: got {} want t{i}", hit.task_id))?;
                check((hit.similarity - s).abs() <= SCORE_TOL, || {
                    format!("pool {p} rank {rank}: score {} vs {s}", hit.similarity)
                })?;
            }
            if k > 1 {
                let shorter = index.query_vector(&qv, k - 1);
                check(hits[..shorter.len()] == shorter[..], || format!("pool {p}: top-{} not a prefix", k - 1))?;
            }
            queries += 1;
        }
    }
    // text queries through the embedder go through the same path
    let emb = HashingEmbedder::default();
    let entries = ["put a mug in cabinet 1", "heat an egg", "find two pens"]
        .iter()
        .enumerate()
        .map(|(i, t)| IndexEntry {
            task_id: format!("t{i}"),
            vector: emb.embed(t).unwrap(),
        })
        .collect();
    let index = RetrievalIndex::from_entries(emb.id(), entries);
    let top = index.query_topk(&emb, "heat an egg", 1).map_err(|e| e.to_string())?;
    check(top[0].task_id == "t1" && (top[0].similarity - 1.0).abs() <= SCORE_TOL, || format!("{top:?}"))?;

    let took = start.elapsed();
    check(took < FAST_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{pools} pools, {queries} queries match brute force within {SCORE_TOL:e}; prefix-in-k holds ({took:.2?})"))
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

fn reward_table() -> Outcome {
    struct Case {
        name: &'static str,
        query: (&'static [&'static str], &'static [&'static str], f64),
        bought: (&'static [&'static str], &'static [&'static str], f64, f64),
        expected: f64,
    }
    let cases = [
        // (2 + 1 + 1) / 4 * 1
        Case { name: "full match", query: (&["a", "b"], &["x"], 20.0), bought: (&["a", "b"], &["x"], 15.0, 0.5), expected: 1.0 },
        // (1 + 0 + 1) / 5 * 1
        Case { name: "partial attrs", query: (&["a", "b", "c"], &["x"], 20.0), bought: (&["a", "z"], &["y"], 10.0, 0.8), expected: 0.4 },
        // (2 + 2 + 0) / 5 * 1
        Case { name: "over price", query: (&["a", "b"], &["x", "y"], 25.0), bought: (&["a", "b"], &["x", "y"], 30.0, 1.0), expected: 0.8 },
        // 3 / 3 * 0.1
        Case { name: "weak title", query: (&["a"], &["x"], 20.0), bought: (&["a"], &["x"], 5.0, 0.05), expected: 0.1 },
        // 2 / 2 * 0.5, text match exactly 0.1
        Case { name: "title 0.1", query: (&["a"], &[], 20.0), bought: (&["a"], &[], 5.0, 0.1), expected: 0.5 },
        // (1 + 1 + 1) / 4 * 0.5
        Case { name: "title 0.2", query: (&["a", "b"], &["x"], 20.0), bought: (&["a"], &["x"], 5.0, 0.2), expected: 0.375 },
        // 4 / 4 * 0
        Case { name: "no title match", query: (&["a", "b"], &["x"], 20.0), bought: (&["a", "b"], &["x"], 5.0, 0.0), expected: 0.0 },
        // 1 / 1 * 1
        Case { name: "price only", query: (&[], &[], 40.0), bought: (&["q"], &["r"], 39.99, 0.9), expected: 1.0 },
        // (2 + 1 + 1) / 6 * 0.1 = 1/15
        Case { name: "weak title, mixed", query: (&["a", "b", "c"], &["x", "y"], 20.0), bought: (&["a", "c", "d"], &["y"], 20.0, 0.09), expected: 0.066_666_666_666_666_67 },
        // (3 + 1 + 1) / 7 * 1, price equal to the cap
        Case { name: "price at cap", query: (&["a", "b", "c", "d"], &["x", "y"], 50.0), bought: (&["a", "b", "c"], &["x"], 50.0, 0.21), expected: 0.714_285_714_285_714_3 },
    ];
    for c in &cases {
        let q = ShoppingQuery {
            attributes: set(c.query.0),
            options: set(c.query.1),
            price_cap: c.query.2,
        };
        let o = PurchaseOutcome {
            attributes: set(c.bought.0),
            options: set(c.bought.1),
            price: c.bought.2,
            text_match: c.bought.3,
        };
        let got = webshop_reward(&q, &o);
        check((got - c.expected).abs() <= REWARD_TOL, || format!("{}: got {got}, want {}", c.name, c.expected))?;
    }
    Ok(format!("{} cases within {REWARD_TOL:e}", cases.len()))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn pipeline_config(dir: &Path, script: &Path) -> RunConfig {
    let text = format!(
        "seed = 3\noutput_dir = {:?}\n[backend]\nkind = \"scripted\"\nscript_path = {:?}\n\
         [tasks]\nsource = \"generated\"\ncount = 12\n",
        dir.join("unused").display().to_string(),
        script.display().to_string()
    );
    RunConfig::from_toml(&text).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = dir.path().join("script.jsonl");
    let cfg = pipeline_config(dir.path(), &script);
    let probe = Runner::with_gateway(cfg.clone(), scripted(Vec::new())).map_err(|e| e.to_string())?;
    let opts = ScriptOptions {
        step_budget: 20,
        max_retries: Z,
        fail_first: 2,
    };
    let entries = pipeline_script(&[probe.split(0).unwrap(), probe.split(1).unwrap()], opts).map_err(|e| e.to_string())?;
    std::fs::write(&script, script_to_string(&entries)).map_err(|e| e.to_string())?;

    let runs = [dir.path().join("a"), dir.path().join("b")];
    for out in &runs {
        let runner = Runner::new(cfg.clone()).map_err(|e| e.to_string())?;
        runner.run_all(out).map_err(|e| e.to_string())?;
    }
    let (fa, fb) = (files_under(&runs[0]), files_under(&runs[1]));
    check(fa == fb, || "different file sets".into())?;
    for kind in ["pool.json", "tips.json", "metrics.json", "traces"] {
        check(fa.iter().any(|f| f.to_string_lossy().contains(kind)), || format!("no {kind} artifact"))?;
    }
    for f in &fa {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        check(a == b, || format!("{} differs", f.display()))?;
    }
    Ok(format!("{} artifacts byte-identical across two full runs", fa.len()))
}

fn oracle_solvability() -> Outcome {
    let mut solved = 0;
    let mut total = 0;
    for t in TaskType::ALL {
        for seed in 0..100 {
            let task = task_spec(t, seed);
            let mut env = MiniHouse::new();
            env.reset(&task).map_err(|e| e.to_string())?;
            let mut done = false;
            for _ in 0..20 {
                let action = oracle_action(env.world().unwrap());
                if env.step(&action).map_err(|e| e.to_string())?.done {
                    done = true;
                    break;
                }
            }
            total += 1;
            solved += usize::from(done);
        }
    }
    check(solved == total, || format!("oracle solved {solved}/{total}"))?;
    Ok(format!("oracle SR {solved}/{total} = 100% within H=20"))
}

fn flawed_tasks() -> Vec<TaskSpec> {
    (0..10).map(|i| task_spec(TaskType::ALL[i % 6], (i / 6) as u64)).collect()
}

fn correction_efficacy() -> Outcome {
    let tasks = flawed_tasks();
    let run = |policy: &TriggerPolicy| {
        let gw = Gateway::new(Box::new(FlawedPolicyBackend::new(&tasks).unwrap()));
        tasks
            .iter()
            .map(|t| run_episode(&gw, &mut MiniHouse::new(), t, &EpisodeContext::empty(), policy).0)
            .collect::<Vec<_>>()
    };
    let sr = |ts: &[groundmem_core::Trajectory]| ts.iter().filter(|t| t.succeeded).count() as f64 / ts.len() as f64;
    let baseline = {
        let gw = Gateway::new(Box::new(FlawedPolicyBackend::new(&tasks).unwrap()));
        tasks
            .iter()
            .map(|t| groundmem_core::run_react_baseline(&gw, &mut MiniHouse::new(), t).0)
            .collect::<Vec<_>>()
    };
    let off = run(&TriggerPolicy::disabled());
    let on = run(&TriggerPolicy::default());
    let (sr_base, sr_on) = (sr(&baseline), sr(&on));
    check(sr_base <= FLAWED_MAX_SR, || format!("flawed SR {sr_base}"))?;
    check(sr_on >= CORRECTED_MIN_SR, || format!("corrected SR {sr_on}"))?;
    check(off == baseline, || "trigger-off run differs from baseline".into())?;
    Ok(format!(
        "flawed SR {sr_base:.2} <= {FLAWED_MAX_SR}; with correction {sr_on:.2} >= {CORRECTED_MIN_SR}; trigger off is step-identical"
    ))
}

fn ablation_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = dir.path().join("script.jsonl");
    let cfg = pipeline_config(dir.path(), &script);
    let probe = Runner::with_gateway(cfg.clone(), scripted(Vec::new())).map_err(|e| e.to_string())?;
    let (train, eval) = probe.split(0).unwrap();
    let opts = ScriptOptions {
        step_budget: 20,
        max_retries: Z,
        fail_first: 1,
    };
    std::fs::write(&script, script_to_string(&collection_script(&train, opts).unwrap())).unwrap();
    let runner = Runner::new(cfg).map_err(|e| e.to_string())?;
    runner.collect(0, dir.path()).map_err(|e| e.to_string())?;
    runner.tips(&dir.path().join("pool.json"), dir.path()).map_err(|e| e.to_string())?;
    let pool = groundmem_core::memory::load_pool(&dir.path().join("pool.json")).unwrap();
    let tips = groundmem_core::memory::load_tips(&dir.path().join("tips.json")).unwrap();

    // a policy that wanders into rejected actions before solving each task
    let mut policy = Vec::new();
    for t in &eval {
        policy.push(ScriptEntry::new(RoleId::Policy, "take nothing 1 from nowhere 1"));
        policy.push(ScriptEntry::new(RoleId::Policy, "take nothing 1 from nowhere 1"));
        let (ty, seed) = groundmem_core::environment::minihouse::parse_task_id(&t.id).unwrap();
        policy.extend(
            oracle_trajectory(ty, seed, 20)
                .steps
                .into_iter()
                .map(|s| ScriptEntry::new(RoleId::Policy, s.action)),
        );
    }
    let emb = HashingEmbedder::default();
    let index = RetrievalIndex::build(&pool, &emb).unwrap();
    let memory = Memory {
        pool: &pool,
        index: &index,
        embedder: &emb,
        tips: Some(&tips),
    };
    let ablated = PlannerConfig {
        k: 0,
        trigger: TriggerPolicy::disabled(),
        context_char_budget: None,
    };
    let a = evaluate(&scripted(policy.clone()), &minihouse(20), &eval, Some(memory), &ablated, 1)
        .map_err(|e| e.to_string())?;
    let b = evaluate(&scripted(policy), &minihouse(20), &eval, None, &PlannerConfig::default(), 1)
        .map_err(|e| e.to_string())?;
    check(a.len() == b.len() && !a.is_empty(), || "episode counts differ".into())?;
    for (x, y) in a.iter().zip(&b) {
        check(x.trajectory == y.trajectory, || format!("{} differs", x.task.id))?;
    }
    Ok(format!("k=0 + trigger off matches ReAct on {} episodes", a.len()))
}

/// Echo peer that stalls on resets of the task with id "slow".
struct SlowEcho {
    inner: EchoWorld,
    stall: Duration,
}

impl Environment for SlowEcho {
    fn spec(&self) -> &EnvironmentSpec {
        self.inner.spec()
    }
    fn reset(&mut self, task: &TaskSpec) -> Result<String, EnvError> {
        if task.id == "slow" {
            std::thread::sleep(self.stall);
        }
        self.inner.reset(task)
    }
    fn step(&mut self, action: &str) -> Result<StepOutcome, EnvError> {
        self.inner.step(action)
    }
}

fn loopback(mut peer: Box<dyn Environment>, spec: EnvironmentSpec, timeout: Duration) -> Result<ExternalEnv, EnvError> {
    let (client_rx, peer_tx) = pipe().map_err(|e| EnvError::Io(e.to_string()))?;
    let (peer_rx, client_tx) = pipe().map_err(|e| EnvError::Io(e.to_string()))?;
    std::thread::spawn(move || {
        let _ = serve(peer.as_mut(), BufReader::new(peer_rx), peer_tx);
    });
    ExternalEnv::from_streams(client_rx, client_tx, spec, timeout)
}

fn external_protocol() -> Outcome {
    let mut env = loopback(Box::new(EchoWorld::default()), EchoWorld::spec(), Duration::from_secs(5))
        .map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    let messages = 1000;
    for i in 0..messages / 2 {
        let task = TaskSpec::new(format!("t{i}"), format!("instruction {i}"), "echo");
        if env.reset(&task).map_err(|e| e.to_string())? != task.instruction {
            mismatches += 1;
        }
        let action = format!("action {i}");
        if env.step(&action).map_err(|e| e.to_string())?.observation != action {
            mismatches += 1;
        }
    }
    check(mismatches == 0, || format!("{mismatches} mismatches"))?;

    let mut spec = EchoWorld::spec();
    spec.step_budget = 2;
    let factory = move || -> Result<Box<dyn Environment>, EnvError> {
        let peer = SlowEcho {
            inner: EchoWorld::default(),
            stall: Duration::from_millis(450),
        };
        Ok(Box::new(loopback(Box::new(peer), spec.clone(), Duration::from_millis(300))?))
    };
    let tasks = vec![
        TaskSpec::new("a", "first", "echo"),
        TaskSpec::new("slow", "stalls", "echo"),
        TaskSpec::new("b", "last", "echo"),
    ];
    let policy = (0..4).map(|i| ScriptEntry::new(RoleId::Policy, format!("act {i}"))).collect();
    let records = evaluate(&scripted(policy), &factory, &tasks, None, &PlannerConfig::default(), 1)
        .map_err(|e| format!("run aborted: {e}"))?;
    let slow = &records[1].trajectory;
    check(
        !slow.succeeded && slow.abort_reason.as_deref().is_some_and(|r| r.contains("timed out")),
        || format!("slow episode: {:?}", slow.abort_reason),
    )?;
    for r in [&records[0], &records[2]] {
        check(r.trajectory.abort_reason.is_none() && r.trajectory.steps.len() == 2, || {
            format!("{}: {:?}", r.task.id, r.trajectory.abort_reason)
        })?;
    }
    Ok(format!("{messages} echo messages, 0 mismatches; timed-out episode failed, run completed"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("algorithm control flow", control_flow),
        ("retrieval oracle equivalence", retrieval_oracle),
        ("reward formula table", reward_table),
        ("pipeline determinism", determinism),
        ("oracle solvability", oracle_solvability),
        ("correction injection efficacy", correction_efficacy),
        ("ablation mode equivalence", ablation_equivalence),
        ("external environment protocol", external_protocol),
    ];
    let suite = Instant::now();
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    let took = suite.elapsed();
    if took > SUITE_BUDGET {
        failed += 1;
        println!("FAIL  suite runtime {took:.2?} exceeds {SUITE_BUDGET:?}");
    }
    println!("{} of {} criteria passed in {took:.2?}", criteria.len() - failed.min(criteria.len()), criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
