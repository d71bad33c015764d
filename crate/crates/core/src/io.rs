//! JSON formats. Matrices are row-major arrays of rows; an entry is a number
//! or an `[re, im]` pair. Graph node ids are 1-based.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, RMatrix};
use crate::ltisys::{PersistentModes, StateSpace, Term, TermSpec, TransferMatrix};
use crate::netgraph::WeightedDigraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

pub type MatrixJson = Vec<Vec<Entry>>;

pub fn complex_from_json(rows: &[Vec<Entry>]) -> Result<CMatrix> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Input("matrix rows have different lengths".into()));
    }
    let m = CMatrix::from_fn(rows.len(), cols, |i, j| match rows[i][j] {
        Entry::Real(x) => c(x, 0.0),
        Entry::Complex([re, im]) => c(re, im),
    });
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("matrix input"));
    }
    Ok(m)
}

pub fn real_from_json(rows: &[Vec<Entry>]) -> Result<RMatrix> {
    let m = complex_from_json(rows)?;
    if m.iter().any(|z| z.im != 0.0) {
        return Err(Error::Input("expected a real matrix".into()));
    }
    Ok(m.map(|z| z.re))
}

pub fn complex_to_json(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn real_to_json(m: &RMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// `#[serde(with)]` adapter for complex matrices.
pub mod complex_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        complex_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = MatrixJson::deserialize(d)?;
        complex_from_json(&rows).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with)]` adapter for real matrices.
pub mod real_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &RMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        real_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RMatrix, D::Error> {
        let rows = MatrixJson::deserialize(d)?;
        real_from_json(&rows).map_err(serde::de::Error::custom)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Object {
        from: usize,
        to: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Weighted(usize, usize, f64),
    Unit(usize, usize),
}

/// An edge `from -> to` means agent `to` uses the output of agent `from`.
/// With `undirected` set, each listed pair is added in both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: usize,
    #[serde(default)]
    pub undirected: bool,
    pub edges: Vec<EdgeSpec>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedDigraph> {
        let mut list = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let (f, t, w) = match *e {
                EdgeSpec::Object { from, to, weight } => (from, to, weight),
                EdgeSpec::Weighted(f, t, w) => (f, t, w),
                EdgeSpec::Unit(f, t) => (f, t, 1.0),
            };
            if f == 0 || t == 0 || f > self.nodes || t > self.nodes {
                return Err(Error::InvalidGraph(format!("edge {f} -> {t} outside nodes 1..={}", self.nodes)));
            }
            list.push((f - 1, t - 1, w));
        }
        if self.undirected {
            WeightedDigraph::undirected(self.nodes, &list)
        } else {
            WeightedDigraph::directed(self.nodes, &list)
        }
    }

    pub fn from_graph(g: &WeightedDigraph) -> Self {
        GraphSpec {
            nodes: g.n,
            undirected: false,
            edges: g.edges.iter().map(|e| EdgeSpec::Object { from: e.from + 1, to: e.to + 1, weight: e.w }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResidueList {
    Ordered(Vec<MatrixJson>),
    /// Keyed by mode frequency.
    Keyed(BTreeMap<String, MatrixJson>),
}

/// A square system: a sum of rational terms, partial-fraction data, a
/// state-space realization or a constant gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Terms {
        terms: Vec<TermSpec>,
    },
    Residues {
        m: usize,
        modes: Vec<f64>,
        residues: ResidueList,
        #[serde(default)]
        remainder: Option<Box<SystemSpec>>,
    },
    StateSpace {
        #[serde(default)]
        a: MatrixJson,
        #[serde(default)]
        b: MatrixJson,
        #[serde(default)]
        c: MatrixJson,
        d: MatrixJson,
        #[serde(default)]
        modes: Vec<f64>,
    },
    Gain {
        gain: MatrixJson,
    },
}

fn state_space(a: &MatrixJson, b: &MatrixJson, cm: &MatrixJson, d: &MatrixJson) -> Result<StateSpace> {
    let d = real_from_json(d)?;
    if a.is_empty() {
        return Ok(StateSpace::gain(d));
    }
    StateSpace::validated(real_from_json(a)?, real_from_json(b)?, real_from_json(cm)?, d)
}

impl SystemSpec {
    pub fn to_transfer(&self) -> Result<TransferMatrix> {
        match self {
            SystemSpec::Terms { terms } => {
                let terms = terms.iter().map(Term::from_spec).collect::<Result<Vec<_>>>()?;
                TransferMatrix::from_terms(&terms)
            }
            SystemSpec::Residues { m, modes, residues, remainder } => {
                let pm = PersistentModes::new(modes.clone(), *m)?;
                let parsed: Vec<(f64, CMatrix)> = match residues {
                    ResidueList::Ordered(v) => {
                        if v.len() != modes.len() {
                            return Err(Error::Input(format!("{} residues for {} modes", v.len(), modes.len())));
                        }
                        modes.iter().zip(v).map(|(&w, r)| Ok((w, complex_from_json(r)?))).collect::<Result<_>>()?
                    }
                    ResidueList::Keyed(map) => map
                        .iter()
                        .map(|(k, r)| {
                            let w: f64 = k.trim().parse().map_err(|_| Error::Input(format!("bad mode key {k:?}")))?;
                            Ok((w, complex_from_json(r)?))
                        })
                        .collect::<Result<_>>()?,
                };
                let list: Vec<CMatrix> = pm
                    .omega
                    .iter()
                    .map(|&w| {
                        parsed
                            .iter()
                            .find(|(k, _)| (k - w).abs() <= 1e-9 * w.max(1.0))
                            .map(|(_, r)| r.clone())
                            .ok_or_else(|| Error::Input(format!("no residue for mode {w}")))
                    })
                    .collect::<Result<_>>()?;
                let rem = match remainder {
                    Some(r) => r.to_stable()?,
                    None => StateSpace::gain(RMatrix::zeros(*m, *m)),
                };
                TransferMatrix::new(pm, list, rem)
            }
            SystemSpec::StateSpace { a, b, c, d, modes } => {
                TransferMatrix::from_state_space(&state_space(a, b, c, d)?, modes)
            }
            SystemSpec::Gain { gain } => TransferMatrix::gain(real_from_json(gain)?),
        }
    }

    /// A system without imaginary-axis modes (controllers, edge dynamics, remainders).
    pub fn to_stable(&self) -> Result<StateSpace> {
        let t = self.to_transfer()?;
        if !t.modes.omega.is_empty() {
            return Err(Error::Input("expected a system without imaginary-axis poles".into()));
        }
        Ok(t.remainder)
    }

    pub fn from_term(t: &Term) -> Self {
        SystemSpec::Terms { terms: vec![t.to_spec()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentsFile {
    Wrapped { agents: Vec<SystemSpec> },
    List(Vec<SystemSpec>),
}

impl AgentsFile {
    pub fn agents(&self) -> Result<Vec<TransferMatrix>> {
        let list = match self {
            AgentsFile::Wrapped { agents } | AgentsFile::List(agents) => agents,
        };
        if list.is_empty() {
            return Err(Error::Input("no agents".into()));
        }
        list.iter()
            .enumerate()
            .map(|(i, a)| a.to_transfer().map_err(|e| Error::Input(format!("agent {}: {e}", i + 1))))
            .collect()
    }
}

/// Controllers per agent, one controller shared by all agents, or dynamics
/// per undirected edge (in the order the pairs appear in the graph file).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllersFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controllers: Vec<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<SystemSpec>,
}

impl ControllersFile {
    pub fn stable_list(list: &[SystemSpec], what: &str) -> Result<Vec<StateSpace>> {
        list.iter()
            .enumerate()
            .map(|(i, s)| s.to_stable().map_err(|e| Error::Input(format!("{what} {}: {e}", i + 1))))
            .collect()
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Decimal text with at most 12 significant digits.
pub fn fmt12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}").to_lowercase();
    }
    let r: f64 = format!("{x:.11e}").parse().expect("float round trip");
    if r == 0.0 {
        "0".into()
    } else if (1e-5..1e12).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}
