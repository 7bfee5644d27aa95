//! Seeded Monte-Carlo execution.
//!
//! Every trial draws from its own ChaCha substream keyed by `(seed, experiment)`
//! and indexed by the trial number, so a trial's randomness never depends on
//! which worker ran it. Trials are grouped into fixed-size chunks; each chunk is
//! folded sequentially and chunk results are merged in index order. Floating
//! point sums are therefore bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random stream type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "MMIMO_WORKERS";

const CHUNK: u64 = 256;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit identifier for a named experiment stream.
pub fn stream_id(name: &str) -> u64 {
    // FNV-1a; only needs to be stable across releases.
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Counter-based substream for trial `trial` of experiment `stream` under `seed`.
pub fn substream(seed: u64, stream: u64, trial: u64) -> SimRng {
    let mut state = seed ^ stream.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

/// Degree of parallelism for trial execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "WorkersRepr", into = "WorkersRepr")]
pub enum Workers {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WorkersRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<WorkersRepr> for Workers {
    type Error = String;
    fn try_from(r: WorkersRepr) -> std::result::Result<Self, String> {
        match r {
            WorkersRepr::Count(0) => Err("worker count must be at least 1".into()),
            WorkersRepr::Count(n) => Ok(Workers::Fixed(n)),
            WorkersRepr::Name(s) if s == "auto" => Ok(Workers::Auto),
            WorkersRepr::Name(s) => Err(format!("expected \"auto\" or a positive integer, got {s:?}")),
        }
    }
}

impl From<Workers> for WorkersRepr {
    fn from(w: Workers) -> Self {
        match w {
            Workers::Auto => WorkersRepr::Name("auto".into()),
            Workers::Fixed(n) => WorkersRepr::Count(n),
        }
    }
}

impl Workers {
    /// Applies the environment override, if set and valid.
    pub fn resolve(self) -> Workers {
        match std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
            Some(n) if n > 0 => Workers::Fixed(n),
            _ => self,
        }
    }

    fn threads(self) -> usize {
        match self {
            Workers::Auto => 0,
            Workers::Fixed(n) => n,
        }
    }
}

/// A contiguous block of trials drawn from one experiment stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub seed: u64,
    pub stream: u64,
    pub first_trial: u64,
    pub trials: u64,
}

impl TrialPlan {
    pub fn new(seed: u64, stream: u64, trials: u64) -> Self {
        TrialPlan {
            seed,
            stream,
            first_trial: 0,
            trials,
        }
    }

    /// The plan for the `trials` trials that follow this one.
    pub fn continuation(&self, trials: u64) -> Self {
        TrialPlan {
            first_trial: self.first_trial + self.trials,
            trials,
            ..*self
        }
    }
}

/// Order-independent per-trial aggregate.
pub trait Accumulator: Send {
    fn merge(&mut self, other: Self);
}

/// Runs `plan.trials` trials and folds them into an accumulator.
///
/// `init` builds an empty accumulator, `trial` records one trial given its
/// private random stream and absolute index.
pub fn run_trials<A, I, F>(plan: TrialPlan, workers: Workers, init: I, trial: F) -> Result<A>
where
    A: Accumulator,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut SimRng, u64) + Sync,
{
    let chunks = plan.trials.div_ceil(CHUNK);
    let fold_chunk = |c: u64| {
        let mut acc = init();
        let start = plan.first_trial + c * CHUNK;
        let end = (start + CHUNK).min(plan.first_trial + plan.trials);
        for idx in start..end {
            let mut rng = substream(plan.seed, plan.stream, idx);
            trial(&mut acc, &mut rng, idx);
        }
        acc
    };
    let parts: Vec<A> = match workers.resolve() {
        Workers::Fixed(1) => (0..chunks).map(fold_chunk).collect(),
        w => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.threads())
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            pool.install(|| (0..chunks).into_par_iter().map(fold_chunk).collect())
        }
    };
    let mut total = init();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}
