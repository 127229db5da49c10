//! Exchange formats: JSON serialization for tables, decompositions,
//! extremal specs, and quantum scenarios, plus the compact text rendering
//! used by the command line.
//!
//! Probabilities travel as exact `"num/den"` strings ("0" and "1" written
//! without a denominator). Parsing has a strict mode, which insists on
//! normalized fractions, and a lenient mode, which accepts any integer
//! ratio.

use serde_json::{json, Map, Value};

use crate::catalog::ExtremalSpec;
use crate::error::Error;
use crate::model::{CorrelationTable, Scenario};
use crate::polytope::ConvexDecomposition;
use crate::quantum::{ComplexMatrix, QuantumScenario};
use crate::rational::{format_rational, parse_rational, Rational};

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<usize, Error> {
    obj.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| bad(format!("missing or non-integer field {key:?}")))
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// `{"dx":..,"dy":..,"da":..,"db":..,"p":{"x,y": [[..da entries..]; db rows]}}`
/// — each cell is a `db x da` grid of rational strings, rows indexed by
/// Bob's outcome.
pub fn table_to_json(t: &CorrelationTable) -> Value {
    let s = t.scenario;
    let mut cells = Map::new();
    for x in 0..s.dx {
        for y in 0..s.dy {
            let grid: Vec<Value> = (0..s.db)
                .map(|b| {
                    Value::Array(
                        (0..s.da)
                            .map(|a| Value::String(format_rational(t.get(x, y, a, b))))
                            .collect(),
                    )
                })
                .collect();
            cells.insert(format!("{x},{y}"), Value::Array(grid));
        }
    }
    json!({ "dx": s.dx, "dy": s.dy, "da": s.da, "db": s.db, "p": cells })
}

pub fn table_from_json(v: &Value, strict: bool) -> Result<CorrelationTable, Error> {
    let obj = v.as_object().ok_or_else(|| bad("table must be a JSON object"))?;
    let s = Scenario::new(
        get_usize(obj, "dx")?,
        get_usize(obj, "dy")?,
        get_usize(obj, "da")?,
        get_usize(obj, "db")?,
    )?;
    let cells = obj
        .get("p")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("missing cell map \"p\""))?;
    let mut entries = vec![crate::rational::zero(); s.entry_count()];
    let mut seen = 0usize;
    for (key, grid) in cells {
        let (xs, ys) = key.split_once(',').ok_or_else(|| bad(format!("bad cell key {key:?}")))?;
        let x: usize = xs.trim().parse().map_err(|_| bad(format!("bad cell key {key:?}")))?;
        let y: usize = ys.trim().parse().map_err(|_| bad(format!("bad cell key {key:?}")))?;
        if x >= s.dx || y >= s.dy {
            return Err(bad(format!("cell key {key:?} out of range")));
        }
        let rows = grid.as_array().ok_or_else(|| bad(format!("cell {key} is not an array")))?;
        if rows.len() != s.db {
            return Err(bad(format!("cell {key} has {} rows, expected {}", rows.len(), s.db)));
        }
        for (b, row) in rows.iter().enumerate() {
            let row = row.as_array().ok_or_else(|| bad(format!("cell {key} row {b} not an array")))?;
            if row.len() != s.da {
                return Err(bad(format!("cell {key} row {b} has {} entries, expected {}", row.len(), s.da)));
            }
            for (a, entry) in row.iter().enumerate() {
                let text = entry
                    .as_str()
                    .ok_or_else(|| bad(format!("entry at cell {key} ({a},{b}) is not a string")))?;
                entries[s.index(x, y, a, b)] = parse_rational(text, strict)?;
            }
        }
        seen += 1;
    }
    if seen != s.dx * s.dy {
        return Err(bad(format!("expected {} cells, found {seen}", s.dx * s.dy)));
    }
    CorrelationTable::from_entries(s, entries)
}

/// One line per cell: `(x,y): P(0,0) P(1,0) / P(0,1) P(1,1) ...` — within a
/// row Alice's outcome varies, `/` separates Bob's outcomes.
pub fn table_to_text(t: &CorrelationTable) -> String {
    let s = t.scenario;
    let mut out = String::new();
    for x in 0..s.dx {
        for y in 0..s.dy {
            out.push_str(&format!("({x},{y}): {}\n", cell_to_text(t, x, y)));
        }
    }
    out
}

pub fn cell_to_text(t: &CorrelationTable, x: usize, y: usize) -> String {
    let s = t.scenario;
    (0..s.db)
        .map(|b| {
            (0..s.da)
                .map(|a| format_rational(t.get(x, y, a, b)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(" / ")
}

// ---------------------------------------------------------------------------
// Decompositions
// ---------------------------------------------------------------------------

/// JSON array of `{"weight": "p/q", "table": {...}}` components.
pub fn decomposition_to_json(parts: &[(Rational, CorrelationTable)]) -> Value {
    Value::Array(
        parts
            .iter()
            .map(|(w, t)| json!({ "weight": format_rational(w), "table": table_to_json(t) }))
            .collect(),
    )
}

pub fn decomposition_from_json(
    v: &Value,
    strict: bool,
) -> Result<Vec<(Rational, CorrelationTable)>, Error> {
    let arr = v.as_array().ok_or_else(|| bad("decomposition must be a JSON array"))?;
    arr.iter()
        .map(|part| {
            let obj = part.as_object().ok_or_else(|| bad("component must be an object"))?;
            let w = obj
                .get("weight")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing component weight"))?;
            let t = obj.get("table").ok_or_else(|| bad("missing component table"))?;
            Ok((parse_rational(w, strict)?, table_from_json(t, strict)?))
        })
        .collect()
}

/// Mixes a parsed decomposition back into a single table.
pub fn mix_components(parts: &[(Rational, CorrelationTable)]) -> Result<CorrelationTable, Error> {
    let refs: Vec<(Rational, &CorrelationTable)> =
        parts.iter().map(|(w, t)| (w.clone(), t)).collect();
    CorrelationTable::mix(&refs)
}

impl ConvexDecomposition {
    pub fn to_json(&self) -> Value {
        decomposition_to_json(&self.components)
    }
}

// ---------------------------------------------------------------------------
// Extremal specs
// ---------------------------------------------------------------------------

pub fn spec_to_json(spec: &ExtremalSpec) -> Value {
    json!({
        "dx": spec.dx,
        "dy": spec.dy,
        "gx": spec.gx,
        "gy": spec.gy,
        "anticorrelated_cells": spec
            .anticorrelated
            .iter()
            .map(|&(x, y)| json!([x, y]))
            .collect::<Vec<_>>(),
    })
}

pub fn spec_from_json(v: &Value) -> Result<ExtremalSpec, Error> {
    let obj = v.as_object().ok_or_else(|| bad("spec must be a JSON object"))?;
    let cells = obj
        .get("anticorrelated_cells")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing anticorrelated_cells"))?;
    let anticorrelated = cells
        .iter()
        .map(|c| {
            let pair = c.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("cell must be [x, y]"))?;
            let x = pair[0].as_u64().ok_or_else(|| bad("cell coordinate must be an integer"))?;
            let y = pair[1].as_u64().ok_or_else(|| bad("cell coordinate must be an integer"))?;
            Ok((x as usize, y as usize))
        })
        .collect::<Result<_, Error>>()?;
    let spec = ExtremalSpec {
        dx: get_usize(obj, "dx")?,
        dy: get_usize(obj, "dy")?,
        gx: get_usize(obj, "gx")?,
        gy: get_usize(obj, "gy")?,
        anticorrelated,
    };
    spec.check()?;
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Quantum scenarios
// ---------------------------------------------------------------------------

fn matrix_to_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array(
                    (0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect(),
                )
            })
            .collect(),
    )
}

fn matrix_from_json(v: &Value) -> Result<ComplexMatrix, Error> {
    let rows = v.as_array().ok_or_else(|| bad("matrix must be an array of rows"))?;
    let n = rows.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|r| r.len() == n).ok_or_else(|| bad("matrix must be square"))?;
        for (j, entry) in row.iter().enumerate() {
            let pair = entry.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("complex entry must be [re, im]"))?;
            let re = pair[0].as_f64().ok_or_else(|| bad("non-numeric real part"))?;
            let im = pair[1].as_f64().ok_or_else(|| bad("non-numeric imaginary part"))?;
            m[(i, j)] = num_complex::Complex64::new(re, im);
        }
    }
    Ok(m)
}

pub fn scenario_to_json(sc: &QuantumScenario) -> Value {
    let povms = |side: &Vec<Vec<ComplexMatrix>>| -> Value {
        Value::Array(
            side.iter()
                .map(|input| Value::Array(input.iter().map(matrix_to_json).collect()))
                .collect(),
        )
    };
    json!({
        "dim_a": sc.dim_a,
        "dim_b": sc.dim_b,
        "state": matrix_to_json(&sc.state),
        "alice": povms(&sc.alice),
        "bob": povms(&sc.bob),
    })
}

pub fn scenario_from_json(v: &Value) -> Result<QuantumScenario, Error> {
    let obj = v.as_object().ok_or_else(|| bad("scenario must be a JSON object"))?;
    let povms = |key: &str| -> Result<Vec<Vec<ComplexMatrix>>, Error> {
        obj.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("missing POVM list {key:?}")))?
            .iter()
            .map(|input| {
                input
                    .as_array()
                    .ok_or_else(|| bad("POVM must be an array of elements"))?
                    .iter()
                    .map(matrix_from_json)
                    .collect()
            })
            .collect()
    };
    let sc = QuantumScenario {
        dim_a: get_usize(obj, "dim_a")?,
        dim_b: get_usize(obj, "dim_b")?,
        state: matrix_from_json(obj.get("state").ok_or_else(|| bad("missing state"))?)?,
        alice: povms("alice")?,
        bob: povms("bob")?,
    };
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{pr_box, ExtremalSpec};
    use crate::rational::rat;

    #[test]
    fn table_round_trips_through_json() {
        let pr = pr_box();
        let v = table_to_json(&pr);
        assert_eq!(table_from_json(&v, true).unwrap(), pr);
        // serialization is deterministic
        assert_eq!(serde_json::to_string(&v).unwrap(), serde_json::to_string(&table_to_json(&pr)).unwrap());
    }

    #[test]
    fn strict_parse_rejects_unnormalized_fractions() {
        let mut v = table_to_json(&pr_box());
        v["p"]["0,0"][0][0] = Value::String("2/4".into());
        assert!(table_from_json(&v, true).is_err());
        let t = table_from_json(&v, false).unwrap();
        assert_eq!(*t.get(0, 0, 0, 0), rat(1, 2));
    }

    #[test]
    fn missing_cells_are_rejected() {
        let mut v = table_to_json(&pr_box());
        v["p"].as_object_mut().unwrap().remove("1,1");
        assert!(table_from_json(&v, true).is_err());
    }

    #[test]
    fn decomposition_round_trips_and_mixes() {
        let pr = pr_box();
        let uniform = CorrelationTable::from_fn(pr.scenario, |_, _, _, _| rat(1, 4));
        let parts = vec![(rat(3, 4), pr), (rat(1, 4), uniform)];
        let v = decomposition_to_json(&parts);
        let back = decomposition_from_json(&v, true).unwrap();
        assert_eq!(back, parts);
        let mixed = mix_components(&back).unwrap();
        assert_eq!(*mixed.get(1, 1, 0, 0), rat(1, 16));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ExtremalSpec {
            dx: 4,
            dy: 3,
            gx: 3,
            gy: 3,
            anticorrelated: [(2, 1), (2, 2)].into_iter().collect(),
        };
        let v = spec_to_json(&spec);
        assert_eq!(spec_from_json(&v).unwrap(), spec);
    }

    #[test]
    fn invalid_spec_json_is_rejected() {
        let spec = ExtremalSpec::pr();
        let mut v = spec_to_json(&spec);
        v["gx"] = json!(7);
        assert!(spec_from_json(&v).is_err());
    }

    #[test]
    fn quantum_scenario_round_trips() {
        let sc = crate::quantum::preset("singlet_chsh").unwrap();
        let v = scenario_to_json(&sc);
        let back = scenario_from_json(&v).unwrap();
        assert_eq!(back.state, sc.state);
        assert_eq!(back.alice, sc.alice);
        assert_eq!(back.bob, sc.bob);
    }

    #[test]
    fn pr_cell_text_matches_the_displayed_form() {
        let pr = pr_box();
        assert_eq!(cell_to_text(&pr, 1, 1), "0 1/2 / 1/2 0");
        assert_eq!(cell_to_text(&pr, 0, 0), "1/2 0 / 0 1/2");
    }
}
