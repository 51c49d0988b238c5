//! Report assembly: every run writes a JSON report that embeds the
//! configuration hash, the effective seed, and the numerical tolerances
//! the library modules pin, so a report is auditable on its own.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Tolerances and bounds baked into the library, echoed into every
/// report.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    pub stochastic_row: f64,
    pub rank: f64,
    pub zero_modulus: f64,
    pub modulus_merge: f64,
    pub qr_tau_gap: f64,
    pub qr_log_floor: f64,
    pub qr_singular_floor: f64,
    pub domination_bound: f64,
    pub domination_slack: f64,
    pub invariance: f64,
    pub singular_floor: f64,
    pub sigma_update: f64,
    pub sigma_identity: f64,
    pub series_tail: f64,
    pub density: f64,
}

impl Tolerances {
    pub fn current() -> Self {
        Self {
            stochastic_row: stocycle::linalg::STOCH_TOL,
            rank: stocycle::linalg::RANK_TOL,
            zero_modulus: stocycle::eig::ZERO_MODULUS,
            modulus_merge: stocycle::eig::MODULUS_MERGE_TOL,
            qr_tau_gap: stocycle::lyapunov::TAU_GAP,
            qr_log_floor: stocycle::lyapunov::LOG_FLOOR,
            qr_singular_floor: stocycle::lyapunov::SING_FLOOR,
            domination_bound: stocycle::domination::DOMINATION_BOUND,
            domination_slack: stocycle::domination::DOMINATION_SLACK,
            invariance: stocycle::domination::INVARIANCE_TOL,
            singular_floor: stocycle::domination::SINGULAR_FLOOR,
            sigma_update: stocycle::domination::SIGMA_UPDATE_TOL,
            sigma_identity: stocycle::domination::SIGMA_IDENTITY_TOL,
            series_tail: stocycle::perturbation::SERIES_TAIL,
            density: stocycle::transfer::DENSITY_TOL,
        }
    }
}

/// The envelope written to `report.json`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub tolerances: Tolerances,
    pub result: serde_json::Value,
}

impl Report {
    pub fn new(command: &str, seed: u64, config_bytes: &[u8], result: serde_json::Value) -> Self {
        Self {
            tool: "stocycle",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_bytes),
            tolerances: Tolerances::current(),
            result,
        }
    }

    /// Serialized form written to disk: pretty JSON plus a trailing
    /// newline, byte-stable for a fixed input.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serialization");
        out.push(b'\n');
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Shortest round-trip decimal form; infinities spelled out so columns
/// stay parseable.
pub fn fmt_rate(x: f64) -> String {
    format!("{x}")
}

/// Rates as JSON: non-finite values become strings, matching the
/// exponent serialization in the library.
pub fn rate_json(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::Value::from(x)
    } else if x == f64::NEG_INFINITY {
        serde_json::Value::from("-inf")
    } else if x == f64::INFINITY {
        serde_json::Value::from("inf")
    } else {
        serde_json::Value::from("nan")
    }
}

/// A CSV table with a fixed header; rendered with `.` decimals and
/// bare `\n` line endings.
pub struct Csv {
    header: &'static str,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(header: &'static str) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}
