//! Task duration models. Durations stand in for tile compute time and are
//! evaluated per task coordinate, so every consumer of a materialized graph
//! (simulator, oracle schedules) sees the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time, in abstract integer units.
pub type Time = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationModel {
    Constant { value: Time },
    /// `values[coord[axis] % values.len()]`.
    Table { axis: usize, values: Vec<Time> },
    /// Uniform in `[lo, hi]`, reproducible from the seed and the task identity.
    Uniform { lo: Time, hi: Time },
    /// Tasks whose `coord[axis] / group_size == hot_group` take `hot`, others `base`.
    SkewedByGroup { axis: usize, group_size: u64, hot_group: u64, base: Time, hot: Time },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DurationError {
    #[error("duration table is empty")]
    EmptyTable,
    #[error("axis {axis} out of range for a rank-{rank} task")]
    Axis { axis: usize, rank: usize },
    #[error("uniform range [{lo}, {hi}] is empty")]
    EmptyRange { lo: Time, hi: Time },
    #[error("group size must be positive")]
    GroupSize,
    #[error("bad duration model `{0}`")]
    Parse(String),
}

impl DurationModel {
    pub fn constant(value: Time) -> Self {
        DurationModel::Constant { value }
    }

    pub fn uniform(lo: Time, hi: Time) -> Self {
        DurationModel::Uniform { lo, hi }
    }

    /// Duration of the task at `coords` of call `call`. `salt` separates
    /// independent streams drawn for the same task (compute vs prefetch).
    pub fn eval(&self, seed: u64, call: usize, coords: &[u64], salt: u64) -> Result<Time, DurationError> {
        let pick = |axis: usize| {
            coords.get(axis).copied().ok_or(DurationError::Axis { axis, rank: coords.len() })
        };
        match self {
            DurationModel::Constant { value } => Ok(*value),
            DurationModel::Table { axis, values } => {
                if values.is_empty() {
                    return Err(DurationError::EmptyTable);
                }
                let c = pick(*axis)?;
                Ok(values[(c % values.len() as u64) as usize])
            }
            DurationModel::Uniform { lo, hi } => {
                if lo > hi {
                    return Err(DurationError::EmptyRange { lo: *lo, hi: *hi });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, call, coords, salt));
                Ok(rng.gen_range(*lo..=*hi))
            }
            DurationModel::SkewedByGroup { axis, group_size, hot_group, base, hot } => {
                if *group_size == 0 {
                    return Err(DurationError::GroupSize);
                }
                let c = pick(*axis)?;
                Ok(if c / group_size == *hot_group { *hot } else { *base })
            }
        }
    }

    /// Multiplies every duration the model can produce by `k`.
    pub fn scaled(&self, k: Time) -> Self {
        match self {
            DurationModel::Constant { value } => DurationModel::Constant { value: value * k },
            DurationModel::Table { axis, values } => {
                DurationModel::Table { axis: *axis, values: values.iter().map(|v| v * k).collect() }
            }
            DurationModel::Uniform { lo, hi } => DurationModel::Uniform { lo: lo * k, hi: hi * k },
            DurationModel::SkewedByGroup { axis, group_size, hot_group, base, hot } => {
                DurationModel::SkewedByGroup {
                    axis: *axis,
                    group_size: *group_size,
                    hot_group: *hot_group,
                    base: base * k,
                    hot: hot * k,
                }
            }
        }
    }

    /// Parses the CLI form: `const:V`, `uniform:LO:HI`, `table:AXIS:V1/V2/..`,
    /// `skew:AXIS:GROUP_SIZE:HOT_GROUP:BASE:HOT`.
    pub fn parse_cli(text: &str) -> Result<Self, DurationError> {
        let bad = || DurationError::Parse(text.to_string());
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
        match parts.as_slice() {
            ["const", v] => Ok(DurationModel::Constant { value: num(v)? }),
            ["uniform", lo, hi] => Ok(DurationModel::Uniform { lo: num(lo)?, hi: num(hi)? }),
            ["table", axis, vals] => Ok(DurationModel::Table {
                axis: num(axis)? as usize,
                values: vals.split('/').map(num).collect::<Result<_, _>>()?,
            }),
            ["skew", axis, gs, hg, base, hot] => Ok(DurationModel::SkewedByGroup {
                axis: num(axis)? as usize,
                group_size: num(gs)?,
                hot_group: num(hg)?,
                base: num(base)?,
                hot: num(hot)?,
            }),
            _ => Err(bad()),
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn task_seed(seed: u64, call: usize, coords: &[u64], salt: u64) -> u64 {
    let mut h = splitmix(seed ^ splitmix(salt));
    h = splitmix(h ^ call as u64);
    for c in coords {
        h = splitmix(h ^ *c);
    }
    h
}
