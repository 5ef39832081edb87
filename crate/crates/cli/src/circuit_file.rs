//! JSON circuit files.
//!
//! ```json
//! { "n_qubits": 4,
//!   "gates": [ { "template": "XX", "qubits": [0, 1], "angle": 1.5707963267948966 } ],
//!   "energy": -42.0 }
//! ```
//!
//! Angles are written in shortest round-trip form, so parsing an emitted file
//! gives back bit-identical values.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use spingqe::postprocess::{CircuitGate, RefinableCircuit};
use spingqe::Template;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitFileError {
    #[error("not valid JSON: {0}")]
    Json(String),
    #[error("field `{field}`: {problem}")]
    Schema { field: String, problem: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircuitFile {
    pub n_qubits: usize,
    pub gates: Vec<CircuitGate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

fn schema(field: impl Into<String>, problem: impl Into<String>) -> CircuitFileError {
    CircuitFileError::Schema {
        field: field.into(),
        problem: problem.into(),
    }
}

fn uint(v: &Value, field: &str) -> Result<usize, CircuitFileError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| schema(field, format!("expected a non-negative integer, got {v}")))
}

fn float(v: &Value, field: &str) -> Result<f64, CircuitFileError> {
    v.as_f64()
        .ok_or_else(|| schema(field, format!("expected a number, got {v}")))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, CircuitFileError> {
    obj.get(key).ok_or_else(|| schema(path, "missing"))
}

fn no_extra(obj: &Map<String, Value>, allowed: &[&str], prefix: &str) -> Result<(), CircuitFileError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(format!("{prefix}{k}"), "unknown field")),
        None => Ok(()),
    }
}

impl CircuitFile {
    pub fn from_circuit(c: &RefinableCircuit) -> Self {
        Self {
            n_qubits: c.n_qubits(),
            gates: c.gates().to_vec(),
            energy: Some(c.energy()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CircuitFileError> {
        let root: Value = serde_json::from_str(text).map_err(|e| CircuitFileError::Json(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| schema("<root>", "expected an object"))?;
        no_extra(obj, &["n_qubits", "gates", "energy"], "")?;
        let n_qubits = uint(field(obj, "n_qubits", "n_qubits")?, "n_qubits")?;
        let gates_v = field(obj, "gates", "gates")?
            .as_array()
            .ok_or_else(|| schema("gates", "expected an array"))?;
        let mut gates = Vec::with_capacity(gates_v.len());
        for (i, g) in gates_v.iter().enumerate() {
            let at = |k: &str| format!("gates[{i}].{k}");
            let g = g
                .as_object()
                .ok_or_else(|| schema(format!("gates[{i}]"), "expected an object"))?;
            no_extra(g, &["template", "qubits", "angle"], &format!("gates[{i}]."))?;
            let name = field(g, "template", &at("template"))?
                .as_str()
                .ok_or_else(|| schema(at("template"), "expected a string"))?;
            let template: Template = name
                .parse()
                .map_err(|_| schema(at("template"), format!("unknown template `{name}`")))?;
            let qubits = field(g, "qubits", &at("qubits"))?
                .as_array()
                .ok_or_else(|| schema(at("qubits"), "expected an array"))?
                .iter()
                .enumerate()
                .map(|(k, q)| uint(q, &format!("gates[{i}].qubits[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            if qubits.len() != template.arity() {
                return Err(schema(
                    at("qubits"),
                    format!("{template} needs {} qubit(s), got {}", template.arity(), qubits.len()),
                ));
            }
            if let Some(q) = qubits.iter().find(|&&q| q >= n_qubits) {
                return Err(schema(at("qubits"), format!("qubit {q} out of range for {n_qubits} qubits")));
            }
            let angle = float(field(g, "angle", &at("angle"))?, &at("angle"))?;
            gates.push(CircuitGate {
                template,
                qubits,
                angle,
            });
        }
        let energy = match obj.get("energy") {
            None | Some(Value::Null) => None,
            Some(v) => Some(float(v, "energy")?),
        };
        Ok(Self {
            n_qubits,
            gates,
            energy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn read(path: &Path) -> Result<Self, CircuitFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| CircuitFileError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CircuitFileError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CircuitFileError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
