//! Run configuration shared by the CLI and the report writers.

use serde::{Deserialize, Serialize};

/// Output schema version stamped into every JSON artifact.
pub const SCHEMA_VERSION: &str = "arbor-p/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Dot,
}

/// Validated knobs for a single invocation; echoed into every artifact so
/// outputs are reproducible byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub prime: u64,
    pub precision: u32,
    pub depth: u32,
    /// Statistical warning threshold for the equidistribution harnesses.
    pub tolerance: f64,
    pub format: OutputFormat,
    /// Seed for any sampling step; pipelines here are deterministic, the
    /// seed is carried for reproducibility of downstream consumers.
    pub seed: u64,
    /// Parallel map width over independent discriminants.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prime: 2,
            precision: crate::padic::DEFAULT_PRECISION,
            depth: 1,
            tolerance: 0.05,
            format: OutputFormat::Json,
            seed: 0,
            parallelism: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("prime must be a prime number, got {0}")]
    NotPrime(u64),
    #[error("precision must be at least 4 digits, got {0}")]
    PrecisionTooSmall(u32),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_prime(self.prime) {
            return Err(ConfigError::NotPrime(self.prime));
        }
        if self.precision < 4 {
            return Err(ConfigError::PrecisionTooSmall(self.precision));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::ZeroParallelism);
        }
        Ok(())
    }
}
