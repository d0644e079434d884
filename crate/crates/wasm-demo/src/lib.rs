//! Browser bindings: spark of a typed matrix, a small design search, and a decoding curve.
//!
//! Each export returns a JSON string; failures become a thrown JS error.

use serde_json::{json, Value};
use sparkppr::code::{poe_matrix, spark_subset_search, SparkSearch};
use sparkppr::design::{design_entries, Scheme};
use sparkppr::fqlinalg::{FieldSpec, FqMatrix};
use sparkppr::relay::ChannelParams;
use sparkppr::sim::{run_experiment, ExperimentConfig};
use wasm_bindgen::prelude::*;

/// Keeps a single call well under a second or two in the browser.
const MAX_BUDGET: u64 = 200_000;
const MAX_TRIALS: u64 = 20_000;

/// `text` holds one matrix row per line; `q` is the field size.
pub fn spark_json(q: u32, text: &str) -> Result<Value, String> {
    let field = FieldSpec::new(q).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().ok().filter(|&v| v < q).ok_or_else(|| format!("row {}: bad entry {t:?}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("empty matrix".into());
    }
    let a = FqMatrix::from_rows(field, &rows).map_err(|e| e.to_string())?;
    Ok(match spark_subset_search(&a, None) {
        SparkSearch::Found { spark, witness } => {
            json!({ "spark": spark, "witness": witness.iter().map(|i| i + 1).collect::<Vec<_>>() })
        }
        SparkSearch::Unbounded => json!({ "spark": "unbounded" }),
        SparkSearch::ExceedsCap(_) => unreachable!("search is uncapped"),
    })
}

pub fn design_json(k: usize, eps_max: usize, budget: u64, seed: u64) -> Result<Value, String> {
    if k == 0 || eps_max == 0 || k + eps_max > 24 {
        return Err("need K >= 1, eps >= 1 and K + eps <= 24".into());
    }
    let field = FieldSpec::binary();
    let mut rows = Vec::new();
    for eps in 1..=eps_max {
        let entries = design_entries(field, k, eps, budget.min(MAX_BUDGET), seed, &[Scheme::Mslc, Scheme::Osprlc])
            .map_err(|e| e.to_string())?;
        let ms = &entries[0].matrices[0];
        let ones = poe_matrix(&ms.p, 1).map_err(|e| e.to_string())?;
        rows.push(json!({
            "N": k + eps,
            "prop_of_1": *ones.numer() as f64 / *ones.denom() as f64,
            "spark": ms.spark.to_string(),
            "osprlc_low": entries[1].lowest_spark().to_string(),
            "osprlc_high": entries[1].highest_spark().to_string(),
            "matrix": ms.p.to_text(),
        }));
    }
    Ok(Value::Array(rows))
}

/// Random linear coding over two relays with equal erasure probability `eps`.
pub fn curve_json(k: usize, n_min: usize, n_max: usize, eps: f64, ps: f64, trials: u64, seed: u64) -> Result<Value, String> {
    if n_min > n_max {
        return Err("empty N range".into());
    }
    let mut c = ExperimentConfig::new(k, (n_min..=n_max).collect(), trials.min(MAX_TRIALS), seed);
    c.channel = ChannelParams::new(vec![eps, eps], ps, 64).map_err(|e| e.to_string())?;
    c.validate().map_err(|e| e.to_string())?;
    let r = run_experiment(&c).map_err(|e| e.to_string())?;
    let s = &r.schemes[0];
    let sd = s.sd.as_ref().expect("SD decoder requested by default");
    Ok(Value::Array(
        s.plain
            .iter()
            .zip(sd)
            .map(|(p, d)| json!({ "N": p.n, "plain": p.p_decode, "sd": d.p_decode }))
            .collect(),
    ))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spark(q: u32, text: &str) -> Result<String, JsError> {
    to_js(spark_json(q, text))
}

#[wasm_bindgen]
pub fn design(k: usize, eps_max: usize, budget: u32, seed: u32) -> Result<String, JsError> {
    to_js(design_json(k, eps_max, budget.into(), seed.into()))
}

#[wasm_bindgen]
pub fn curve(k: usize, n_min: usize, n_max: usize, eps: f64, ps: f64, trials: u32, seed: u32) -> Result<String, JsError> {
    to_js(curve_json(k, n_min, n_max, eps, ps, trials.into(), seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spark_of_typed_matrix() {
        let v = spark_json(2, "1 1 1 0\n1 0 1 1\n0 0 1 0\n0 0 0 0\n").unwrap();
        assert_eq!(v, json!({ "spark": 3, "witness": [1, 2, 4] }));
        assert_eq!(spark_json(2, "1 0\n0 1").unwrap(), json!({ "spark": "unbounded" }));
        assert_eq!(spark_json(2, "1 0\n0 5").unwrap_err(), "row 2: bad entry \"5\"");
        assert!(spark_json(2, "1 0\n0").is_err());
        assert!(spark_json(4, "1").is_err());
    }

    #[test]
    fn small_design_table() {
        let v = design_json(4, 3, 5_000, 1).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2]["N"], 7);
        assert!(design_json(0, 3, 10, 1).is_err());
    }

    #[test]
    fn curve_is_monotone_in_sd() {
        let v = curve_json(4, 6, 8, 0.5, 0.05, 500, 1).unwrap();
        for p in v.as_array().unwrap() {
            assert!(p["sd"].as_f64().unwrap() >= p["plain"].as_f64().unwrap());
        }
    }
}
