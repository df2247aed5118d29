//! Desk-scale checks of the categorical structure the proof rules lean on:
//! graded Kleisli categories, coproducts, the premonoidal action, the
//! predicate fibration, and the graded liftings themselves.

pub mod fin;
pub mod laws;
pub mod lifting;

pub use lifting::{lifting_member, LiftedInput, LiftingError};

/// Seed used when the caller does not supply one; recorded in every report
/// so failures replay.
pub const DEFAULT_SEED: u64 = 24601;

/// Randomized trials per suite unless overridden.
pub const DEFAULT_TRIALS: u64 = 200;

/// Outcome of one law suite run.
#[derive(Debug, Clone)]
pub struct Report {
    pub suite: &'static str,
    pub seed: u64,
    pub trials: u64,
    /// First failing check, if any: (trial index, description).
    pub failure: Option<(u64, String)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }

    /// One `key=value` line for machine consumption.
    pub fn record(&self) -> String {
        format!(
            "suite={} seed={} trials={} result={}",
            self.suite,
            self.seed,
            self.trials,
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.failure {
            None => write!(
                f,
                "laws {}: pass ({} trials, seed {})",
                self.suite, self.trials, self.seed
            ),
            Some((trial, msg)) => write!(
                f,
                "laws {}: FAIL at trial {} (seed {}): {}",
                self.suite, trial, self.seed, msg
            ),
        }
    }
}

/// Run the named suite; `None` if the name is unknown.
pub fn run_suite(name: &str, seed: u64, trials: u64) -> Option<Report> {
    Some(match name {
        "kleisli" => laws::kleisli_suite(seed, trials),
        "coproduct" => laws::coproduct_suite(seed, trials),
        "freyd" => laws::freyd_suite(seed, trials),
        "fibration" => laws::fibration_suite(seed, trials),
        "lifting" => laws::lifting_suite(seed, trials),
        _ => return None,
    })
}

/// All suite names, in the order `laws` runs them by default.
pub const SUITES: [&str; 5] = ["kleisli", "coproduct", "freyd", "fibration", "lifting"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_at_default_scale() {
        for name in SUITES {
            let r = run_suite(name, DEFAULT_SEED, DEFAULT_TRIALS).unwrap();
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(run_suite("monoidal", DEFAULT_SEED, 1).is_none());
    }

    #[test]
    fn report_records_are_machine_readable() {
        let r = run_suite("kleisli", 7, 5).unwrap();
        assert_eq!(r.record(), "suite=kleisli seed=7 trials=5 result=pass");
    }
}
