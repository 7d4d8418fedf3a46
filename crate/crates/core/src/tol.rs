//! Numerical tolerances shared across the crate.

use std::sync::OnceLock;

/// Tolerance for structural checks (invariant measures, detailed balance).
pub const STRUCTURAL: f64 = 1e-10;
/// Tolerance for plain arithmetic identities (row sums, normalization).
pub const ARITHMETIC: f64 = 1e-12;

pub const ENV_STRUCTURAL: &str = "FORESTWAVE_TOL_STRUCTURAL";
pub const ENV_ARITHMETIC: &str = "FORESTWAVE_TOL_ARITHMETIC";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub structural: f64,
    pub arithmetic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            structural: STRUCTURAL,
            arithmetic: ARITHMETIC,
        }
    }
}

impl Tolerances {
    /// Defaults, overridden by `FORESTWAVE_TOL_STRUCTURAL` / `FORESTWAVE_TOL_ARITHMETIC`
    /// when those hold positive numbers.
    pub fn from_env() -> Self {
        let read = |key: &str, default: f64| {
            std::env::var(key)
                .ok()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| *v > 0.0 && v.is_finite())
                .unwrap_or(default)
        };
        Tolerances {
            structural: read(ENV_STRUCTURAL, STRUCTURAL),
            arithmetic: read(ENV_ARITHMETIC, ARITHMETIC),
        }
    }

    /// Process-wide tolerances, read from the environment once.
    pub fn global() -> Tolerances {
        static GLOBAL: OnceLock<Tolerances> = OnceLock::new();
        *GLOBAL.get_or_init(Tolerances::from_env)
    }
}
