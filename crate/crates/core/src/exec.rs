//! Bounded parallel execution over independent episodes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::environment::{EnvError, EnvFactory, Environment};

/// Computes `f(i, env)` for every `i < count` and returns the results in
/// index order. Each worker owns one environment from `factory`.
pub(crate) fn map_with_env<T: Send>(
    count: usize,
    jobs: usize,
    factory: &dyn EnvFactory,
    f: &(dyn Fn(usize, &mut dyn Environment) -> T + Sync),
) -> Result<Vec<T>, EnvError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let workers = jobs.clamp(1, count);
    if workers == 1 {
        let mut env = factory.make()?;
        return Ok((0..count).map(|i| f(i, env.as_mut())).collect());
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    let failures: Mutex<Option<EnvError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut env = match factory.make() {
                    Ok(env) => env,
                    Err(e) => {
                        failures.lock().expect("lock").get_or_insert(e);
                        return;
                    }
                };
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= count {
                        break;
                    }
                    let out = f(i, env.as_mut());
                    slots.lock().expect("lock")[i] = Some(out);
                }
            });
        }
    });
    if let Some(e) = failures.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .expect("lock")
        .into_iter()
        .map(|s| s.expect("every index is processed"))
        .collect())
}
