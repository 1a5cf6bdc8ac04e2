//! Exact samplers: cluster construction and thinning.

mod cluster;
mod events;
mod rng;
mod thinning;

pub use cluster::{sample_offspring_offset, simulate_cluster, RUNAWAY_LIMIT, STALL_LIMIT};
pub use events::{EventStream, EVENTS_HEADER, TIE_TOLERANCE};
pub use rng::RngStream;
pub use thinning::{intensity_at, simulate_thinning};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ModelSpec;
use crate::scalar::Scalar;

/// Default warm-up length in units of the kernel support `A`.
pub const WARMUP_FACTOR: f64 = 20.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Cluster,
    Thinning,
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cluster" => Ok(Engine::Cluster),
            "thinning" => Ok(Engine::Thinning),
            other => Err(format!("unknown engine `{other}` (expected cluster or thinning)")),
        }
    }
}

/// Runs one engine on `[-warmup, horizon]` with a fresh generator from
/// `stream`, recording the seed in the output.
pub fn simulate<T: Scalar>(
    engine: Engine,
    model: &ModelSpec<T>,
    horizon: T,
    warmup: T,
    stream: RngStream,
) -> Result<EventStream<T>> {
    let mut rng = stream.rng();
    let mut out = match engine {
        Engine::Cluster => simulate_cluster(model, horizon, warmup, &mut rng)?,
        Engine::Thinning => simulate_thinning(model, horizon, warmup, &mut rng)?,
    };
    out.seed = Some(stream.seed);
    out.stream = Some(stream.stream_id);
    Ok(out)
}

/// `WARMUP_FACTOR * A`.
pub fn default_warmup<T: Scalar>(model: &ModelSpec<T>) -> T {
    T::lit(WARMUP_FACTOR) * model.support()
}
