//! Operator pool and the token vocabulary over it.
//!
//! Each token is a Pauli rotation `(template, qubits, angle)` with the angle
//! drawn from `{±π/2^k}`. Token 0 is a beginning-of-sequence marker that the
//! decoder reads before emitting the first gate; it has no gate.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Rotation;
use crate::pauli::{Pauli, PauliString};

pub type TokenId = usize;

pub const BOS: TokenId = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("operator pool needs at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("angle set is empty")]
    EmptyAngleSet,
    #[error("angle exponent must be at least 1, got {0}")]
    BadExponent(u32),
    #[error("BOS has no gate")]
    Bos,
    #[error("token id {id} out of range for a vocabulary of {size}")]
    OutOfRange { id: TokenId, size: usize },
    #[error("unknown gate template `{0}`")]
    UnknownTemplate(String),
    #[error("template {template} acts on {expected} qubit(s), got {got}")]
    Arity {
        template: Template,
        expected: usize,
        got: usize,
    },
    #[error("gate {0} is not in the pool")]
    NotInPool(String),
}

/// Rotation generator shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Template {
    X,
    Y,
    Z,
    XX,
    YY,
    ZZ,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::X,
        Template::Y,
        Template::Z,
        Template::XX,
        Template::YY,
        Template::ZZ,
    ];

    pub fn arity(self) -> usize {
        match self {
            Template::X | Template::Y | Template::Z => 1,
            _ => 2,
        }
    }

    pub fn axis(self) -> Pauli {
        match self {
            Template::X | Template::XX => Pauli::X,
            Template::Y | Template::YY => Pauli::Y,
            Template::Z | Template::ZZ => Pauli::Z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Template::X => "X",
            Template::Y => "Y",
            Template::Z => "Z",
            Template::XX => "XX",
            Template::YY => "YY",
            Template::ZZ => "ZZ",
        }
    }

    /// Pauli string of this template on `qubits`. Arity is checked.
    pub fn pauli(self, qubits: &[usize]) -> Result<PauliString, PoolError> {
        if qubits.len() != self.arity() {
            return Err(PoolError::Arity {
                template: self,
                expected: self.arity(),
                got: qubits.len(),
            });
        }
        Ok(PauliString::new(qubits.iter().map(|&q| (q, self.axis()))))
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = PoolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| PoolError::UnknownTemplate(s.to_string()))
    }
}

/// `sign · π / 2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Angle {
    pub negative: bool,
    pub exponent: u32,
}

impl Angle {
    pub fn value(self) -> f64 {
        let v = PI / f64::from(1u32 << self.exponent);
        if self.negative {
            -v
        } else {
            v
        }
    }

    /// Exact match against one of the discrete values.
    pub fn from_value(v: f64, exponents: &[u32]) -> Option<Angle> {
        exponents
            .iter()
            .flat_map(|&exponent| {
                [true, false].map(|negative| Angle { negative, exponent })
            })
            .find(|a| a.value() == v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateToken {
    pub template: Template,
    pub qubits: Vec<usize>,
    pub angle: Angle,
}

impl GateToken {
    pub fn rotation(&self) -> Rotation {
        Rotation::new(
            PauliString::new(self.qubits.iter().map(|&q| (q, self.template.axis()))),
            self.angle.value(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolVariant {
    /// `{Z}` on every qubit, `{XX, YY, ZZ}` on nearest neighbours.
    #[default]
    Standard,
    /// Adds `X`, `Y` single-qubit gates and next-nearest-neighbour pairs.
    Enlarged,
}

impl FromStr for PoolVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(PoolVariant::Standard),
            "enlarged" => Ok(PoolVariant::Enlarged),
            other => Err(format!("unknown pool variant `{other}` (expected standard|enlarged)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub n_qubits: usize,
    #[serde(default)]
    pub variant: PoolVariant,
    #[serde(default = "default_exponents")]
    pub angle_exponents: Vec<u32>,
}

pub fn default_exponents() -> Vec<u32> {
    (1..=5).collect()
}

impl PoolConfig {
    pub fn standard(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            variant: PoolVariant::Standard,
            angle_exponents: default_exponents(),
        }
    }

    pub fn enlarged(n_qubits: usize) -> Self {
        Self {
            variant: PoolVariant::Enlarged,
            ..Self::standard(n_qubits)
        }
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        if self.n_qubits < 2 {
            return Err(PoolError::TooFewQubits(self.n_qubits));
        }
        if self.angle_exponents.is_empty() {
            return Err(PoolError::EmptyAngleSet);
        }
        if let Some(&k) = self.angle_exponents.iter().find(|&&k| k == 0 || k > 30) {
            return Err(PoolError::BadExponent(k));
        }
        Ok(())
    }
}

type TokenKey = (Template, Vec<usize>, Angle);

/// Dense id space: `0` is BOS, gates follow sorted by `(template, qubits, angle)`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    config: PoolConfig,
    gates: Vec<GateToken>,
    index: HashMap<TokenKey, TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.gates == other.gates
    }
}

pub fn build_vocabulary(cfg: &PoolConfig) -> Result<Vocabulary, PoolError> {
    cfg.validate()?;
    let n = cfg.n_qubits;
    let (singles, pair_offsets): (&[Template], &[usize]) = match cfg.variant {
        PoolVariant::Standard => (&[Template::Z], &[1]),
        PoolVariant::Enlarged => (&[Template::X, Template::Y, Template::Z], &[1, 2]),
    };
    let mut angles: Vec<Angle> = {
        let mut ks = cfg.angle_exponents.clone();
        ks.sort_unstable();
        ks.dedup();
        ks.into_iter()
            .flat_map(|exponent| [true, false].map(|negative| Angle { negative, exponent }))
            .collect()
    };
    angles.sort_by(|a, b| a.value().total_cmp(&b.value()));

    let mut placements: Vec<(Template, Vec<usize>)> = Vec::new();
    for &t in singles {
        placements.extend((0..n).map(|q| (t, vec![q])));
    }
    for t in [Template::XX, Template::YY, Template::ZZ] {
        for i in 0..n {
            for &d in pair_offsets {
                if i + d < n {
                    placements.push((t, vec![i, i + d]));
                }
            }
        }
    }
    placements.sort();

    let gates: Vec<GateToken> = placements
        .into_iter()
        .flat_map(|(template, qubits)| {
            angles.iter().map(move |&angle| GateToken {
                template,
                qubits: qubits.clone(),
                angle,
            })
        })
        .collect();
    let index = gates
        .iter()
        .enumerate()
        .map(|(i, g)| ((g.template, g.qubits.clone(), g.angle), i + 1))
        .collect();
    Ok(Vocabulary {
        config: cfg.clone(),
        gates,
        index,
    })
}

impl Vocabulary {
    /// Total token count including BOS.
    pub fn len(&self) -> usize {
        self.gates.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_qubits(&self) -> usize {
        self.config.n_qubits
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    /// Gate tokens in id order, starting at id 1.
    pub fn gates(&self) -> &[GateToken] {
        &self.gates
    }

    pub fn token(&self, id: TokenId) -> Result<&GateToken, PoolError> {
        if id == BOS {
            return Err(PoolError::Bos);
        }
        self.gates.get(id - 1).ok_or(PoolError::OutOfRange { id, size: self.len() })
    }

    /// Executable rotation for a token.
    pub fn token_to_gate(&self, id: TokenId) -> Result<(PauliString, f64), PoolError> {
        let r = self.token(id)?.rotation();
        Ok((r.pauli, r.angle))
    }

    pub fn rotation(&self, id: TokenId) -> Result<Rotation, PoolError> {
        Ok(self.token(id)?.rotation())
    }

    pub fn circuit(&self, ids: &[TokenId]) -> Result<Vec<Rotation>, PoolError> {
        ids.iter().map(|&id| self.rotation(id)).collect()
    }

    pub fn id_of(&self, template: Template, qubits: &[usize], angle: Angle) -> Result<TokenId, PoolError> {
        self.index
            .get(&(template, qubits.to_vec(), angle))
            .copied()
            .ok_or_else(|| {
                PoolError::NotInPool(format!("{template}{qubits:?} angle {}", angle.value()))
            })
    }

    /// Inverse lookup from a numeric angle; the angle must equal a pool value exactly.
    pub fn id_of_value(&self, template: Template, qubits: &[usize], angle: f64) -> Result<TokenId, PoolError> {
        let a = Angle::from_value(angle, &self.config.angle_exponents).ok_or_else(|| {
            PoolError::NotInPool(format!("{template}{qubits:?} angle {angle}"))
        })?;
        self.id_of(template, qubits, a)
    }

    /// Tab-separated `id template qubits angle` table.
    pub fn dump(&self) -> String {
        let mut out = String::from("id\ttemplate\tqubits\tangle\n");
        out.push_str("0\tBOS\t-\t-\n");
        for (i, g) in self.gates.iter().enumerate() {
            let qs: Vec<String> = g.qubits.iter().map(|q| q.to_string()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.17e}\n",
                i + 1,
                g.template,
                qs.join(","),
                g.angle.value()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_sizes() {
        assert_eq!(build_vocabulary(&PoolConfig::standard(4)).unwrap().len(), 131);
        assert_eq!(build_vocabulary(&PoolConfig::standard(2)).unwrap().len(), 51);
    }

    #[test]
    fn enlarged_has_next_nearest_pairs() {
        let big = build_vocabulary(&PoolConfig::enlarged(4)).unwrap();
        let small = build_vocabulary(&PoolConfig::standard(4)).unwrap();
        let a = Angle { negative: false, exponent: 2 };
        assert!(big.id_of(Template::XX, &[0, 2], a).is_ok());
        assert!(small.id_of(Template::XX, &[0, 2], a).is_err());
        // 10 angles × (12 singles + 3 templates × (3 + 2) pairs) + BOS
        assert_eq!(big.len(), 1 + 10 * (12 + 15));
    }

    #[test]
    fn bos_and_range_errors() {
        let v = build_vocabulary(&PoolConfig::standard(4)).unwrap();
        assert_eq!(v.token_to_gate(0).unwrap_err().to_string(), "BOS has no gate");
        assert_eq!(
            v.token_to_gate(131).unwrap_err(),
            PoolError::OutOfRange { id: 131, size: 131 }
        );
    }

    #[test]
    fn round_trip_every_id() {
        let v = build_vocabulary(&PoolConfig::enlarged(5)).unwrap();
        for id in 1..v.len() {
            let g = v.token(id).unwrap();
            assert_eq!(v.id_of(g.template, &g.qubits, g.angle).unwrap(), id);
            assert_eq!(v.id_of_value(g.template, &g.qubits, g.angle.value()).unwrap(), id);
        }
    }

    #[test]
    fn config_errors() {
        assert_eq!(
            build_vocabulary(&PoolConfig::standard(1)).unwrap_err(),
            PoolError::TooFewQubits(1)
        );
        let mut cfg = PoolConfig::standard(3);
        cfg.angle_exponents.clear();
        assert_eq!(build_vocabulary(&cfg).unwrap_err(), PoolError::EmptyAngleSet);
    }

    #[test]
    fn ordering_is_sorted() {
        let v = build_vocabulary(&PoolConfig::standard(3)).unwrap();
        let keys: Vec<_> = v
            .gates()
            .iter()
            .map(|g| (g.template, g.qubits.clone(), g.angle.value()))
            .collect();
        assert!(keys.windows(2).all(|w| w[0].partial_cmp(&w[1]) == Some(std::cmp::Ordering::Less)));
    }

    #[test]
    fn template_parse() {
        assert_eq!("YY".parse::<Template>().unwrap(), Template::YY);
        assert!("XY".parse::<Template>().is_err());
        assert!(Template::XX.pauli(&[1]).is_err());
    }

    #[test]
    fn dump_has_all_rows() {
        let v = build_vocabulary(&PoolConfig::standard(2)).unwrap();
        assert_eq!(v.dump().lines().count(), 1 + v.len());
    }
}
