use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
}

/// Network family and widths, written `F(800)`, `F(400)/F(400)`, `L(200)`
/// or `L(100)/A`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Arch {
    /// Fully connected hidden layers of the given widths.
    Dense(Vec<usize>),
    /// One LSTM layer, optionally pooled by attention.
    Lstm { width: usize, attention: bool },
}

impl Arch {
    /// The thirteen architectures of the comparison grid.
    pub fn default_grid() -> Vec<Arch> {
        let mut out: Vec<Arch> = [800, 400, 200].iter().map(|&w| Arch::Dense(vec![w])).collect();
        out.extend([800, 400, 200].iter().map(|&w| Arch::Dense(vec![w, w])));
        out.extend([800, 400, 200].iter().map(|&width| Arch::Lstm {
            width,
            attention: false,
        }));
        out.extend([800, 400, 200, 100].iter().map(|&width| Arch::Lstm {
            width,
            attention: true,
        }));
        out
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Arch::Lstm { .. })
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arch::Dense(widths) => {
                let parts: Vec<String> = widths.iter().map(|w| format!("F({w})")).collect();
                f.write_str(&parts.join("/"))
            }
            Arch::Lstm { width, attention } => {
                write!(f, "L({width})")?;
                if *attention {
                    f.write_str("/A")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidInput(format!(
                "cannot parse architecture `{s}` (expected F(w), F(w)/F(w), L(w) or L(w)/A)"
            ))
        };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let width = |part: &str, prefix: char| -> Result<usize> {
            part.strip_prefix(prefix)
                .and_then(|p| p.strip_prefix('('))
                .and_then(|p| p.strip_suffix(')'))
                .and_then(|p| p.parse::<usize>().ok())
                .filter(|&w| w > 0)
                .ok_or_else(bad)
        };
        let parts: Vec<&str> = compact.split('/').collect();
        match parts.as_slice() {
            [first, ..] if first.starts_with('F') => parts
                .iter()
                .map(|p| width(p, 'F'))
                .collect::<Result<Vec<_>>>()
                .map(Arch::Dense),
            [first] if first.starts_with('L') => Ok(Arch::Lstm {
                width: width(first, 'L')?,
                attention: false,
            }),
            [first, "A"] if first.starts_with('L') => Ok(Arch::Lstm {
                width: width(first, 'L')?,
                attention: true,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Arch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Arch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Hidden-layer activation: sigmoid for dense nets, tanh for LSTMs.
    pub activation: Activation,
    pub dropout: f64,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl ModelSpec {
    /// Dense nets get sigmoid and 20% dropout, LSTMs tanh and no dropout.
    pub fn new(arch: Arch, num_classes: usize, input_dim: usize) -> Self {
        let (activation, dropout) = match arch {
            Arch::Dense(_) => (Activation::Sigmoid, 0.2),
            Arch::Lstm { .. } => (Activation::Tanh, 0.0),
        };
        Self {
            arch,
            activation,
            dropout,
            num_classes,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.input_dim == 0 {
            return Err(Error::Config(format!(
                "model needs >= 2 classes and a non-empty input, got {} classes, input {}",
                self.num_classes, self.input_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        match &self.arch {
            Arch::Dense(widths) if widths.is_empty() || widths.contains(&0) => {
                Err(Error::Config(format!("invalid dense widths {widths:?}")))
            }
            Arch::Lstm { width: 0, .. } => Err(Error::Config("LSTM width must be positive".into())),
            Arch::Lstm { .. } if self.activation != Activation::Tanh || self.dropout != 0.0 => {
                Err(Error::Config("LSTM models use tanh and no dropout".into()))
            }
            _ => Ok(()),
        }
    }
}
