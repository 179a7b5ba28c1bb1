//! Machine-readable artifacts: JSON envelopes with schema version and the
//! run configuration echoed, plus rational/p-adic serialization helpers.

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::padic::Padic;
use serde::Serialize;
use serde_json::{json, Value};

/// Rational as an exact "num/den" string.
pub fn rational_string(num: i64, den: i64) -> String {
    format!("{}/{}", num, den)
}

pub fn rational_string_u64(pair: (u64, u64)) -> String {
    format!("{}/{}", pair.0, pair.1)
}

/// p-adic as digit list with explicit valuation and precision.
pub fn padic_json(x: &Padic) -> Value {
    match x.valuation() {
        None => json!({ "zero": true }),
        Some(v) => json!({
            "prime": x.prime(),
            "valuation": v,
            "digits": x.unit_digits(),
            "precision": x.precision(),
        }),
    }
}

/// Wraps a payload in the versioned envelope with the config echoed.
pub fn envelope<T: Serialize>(config: &RunConfig, kind: &str, payload: &T) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "config": config,
        "data": payload,
    })
}

/// Deterministic pretty serialization (stable field order via Serialize
/// derivations and BTreeMap-backed maps only).
pub fn to_string_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialization is total");
    s.push('\n');
    s
}
