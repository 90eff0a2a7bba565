//! File formats: model JSON, samples CSV and graph JSON.
//!
//! Vertex indices are 0-based in memory and 1-based in graph files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{GgmError, Result};
use crate::graph::{GraphEstimate, StrengthKind};
use crate::model::{GgmInstance, ModelFamily};
use crate::sampling::{MeanMode, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub p: usize,
    pub d: usize,
    pub theta: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub family: Option<String>,
    #[serde(default)]
    pub params: Value,
    pub seed: Option<u64>,
}

impl ModelFile {
    pub fn from_instance(m: &GgmInstance) -> Result<Self> {
        let (family, params, seed) = match &m.family {
            Some(f) => {
                let mut v = serde_json::to_value(f)?;
                if let Value::Object(map) = &mut v {
                    map.remove("family");
                }
                let seed = match f {
                    ModelFamily::RegularRandom { seed, .. } => Some(*seed),
                    _ => None,
                };
                (Some(f.name().to_string()), v, seed)
            }
            None => (None, Value::Object(Default::default()), None),
        };
        Ok(Self {
            p: m.p,
            d: m.d,
            theta: m.theta.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mu: m.mu.iter().copied().collect(),
            family,
            params,
            seed,
        })
    }

    /// Rebuilds the instance from the stored precision matrix; the family
    /// tag is kept as metadata when it parses.
    pub fn into_instance(self) -> Result<GgmInstance> {
        let p = self.p;
        if self.theta.len() != p || self.theta.iter().any(|r| r.len() != p) {
            return Err(GgmError::Format(format!("theta must be {p}x{p}")));
        }
        let theta = DMatrix::from_fn(p, p, |i, j| self.theta[i][j]);
        let family = match (&self.family, &self.params) {
            (Some(name), Value::Object(map)) => {
                let mut map = map.clone();
                map.insert("family".into(), Value::String(name.clone()));
                serde_json::from_value::<ModelFamily>(Value::Object(map)).ok()
            }
            _ => None,
        };
        let mu = if self.mu.is_empty() {
            None
        } else {
            Some(DVector::from_vec(self.mu))
        };
        GgmInstance::from_precision(theta, mu, family)
    }
}

pub fn write_model<W: Write>(m: &GgmInstance, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &ModelFile::from_instance(m)?)?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<GgmInstance> {
    let file: ModelFile = serde_json::from_reader(r)?;
    file.into_instance()
}

/// One row per sample, 17 significant digits, optional `x1..xp` header.
pub fn write_samples<W: Write>(s: &SampleSet, w: W, header: bool) -> Result<()> {
    let mut out = csv::WriterBuilder::new().from_writer(w);
    if header {
        out.write_record((1..=s.p()).map(|j| format!("x{j}")))?;
    }
    let mut row = Vec::with_capacity(s.p());
    for k in 0..s.n() {
        row.clear();
        row.extend(s.data.row(k).iter().map(|v| format!("{v:.16e}")));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a samples CSV. A first row that does not parse as numbers is taken
/// as a header.
pub fn read_samples<R: Read>(r: R, mean_mode: MeanMode) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut p = None;
    let mut n = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(GgmError::Format(format!("row {}: {e}", line + 1)));
            }
        };
        match p {
            None => p = Some(row.len()),
            Some(p) if p != row.len() => {
                return Err(GgmError::Format(format!(
                    "row {} has {} columns, expected {p}",
                    line + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        n += 1;
    }
    let p = p.ok_or_else(|| GgmError::Format("samples file has no data rows".into()))?;
    SampleSet::new(DMatrix::from_row_slice(n, p, &values), None, mean_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnosticsFile {
    pub no_passing_set: Vec<usize>,
    pub asymmetric_pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
    pub neighborhoods: BTreeMap<String, Vec<usize>>,
    pub kappa_hat: BTreeMap<String, f64>,
    pub diagnostics: GraphDiagnosticsFile,
}

impl From<&GraphEstimate> for GraphFile {
    fn from(g: &GraphEstimate) -> Self {
        let one = |v: usize| v + 1;
        Self {
            p: g.p,
            edges: g.edges.iter().map(|&(i, j)| [one(i), one(j)]).collect(),
            neighborhoods: g
                .neighborhoods
                .iter()
                .enumerate()
                .map(|(i, n)| (one(i).to_string(), n.iter().copied().map(one).collect()))
                .collect(),
            kappa_hat: g
                .kappa_hat
                .iter()
                .map(|(&(i, j), &k)| (format!("{},{}", one(i), one(j)), k))
                .collect(),
            diagnostics: GraphDiagnosticsFile {
                no_passing_set: g.diagnostics.no_passing_set.iter().copied().map(one).collect(),
                asymmetric_pairs: g
                    .diagnostics
                    .asymmetric_pairs
                    .iter()
                    .map(|&(i, j)| [one(i), one(j)])
                    .collect(),
            },
        }
    }
}

impl GraphFile {
    /// Converts back to 0-based form. Directed strengths are recognised by
    /// any key with `i > j`.
    pub fn into_estimate(self) -> Result<GraphEstimate> {
        let zero = |v: usize| {
            v.checked_sub(1)
                .filter(|&z| z < self.p)
                .ok_or_else(|| GgmError::Format(format!("vertex {v} out of range 1..={}", self.p)))
        };
        let mut edges = std::collections::BTreeSet::new();
        for [i, j] in &self.edges {
            edges.insert(crate::model::edge(zero(*i)?, zero(*j)?));
        }
        let mut neighborhoods = vec![Vec::new(); self.p];
        for (k, n) in &self.neighborhoods {
            let i: usize = k
                .parse()
                .map_err(|_| GgmError::Format(format!("bad vertex key {k:?}")))?;
            neighborhoods[zero(i)?] = n.iter().map(|&v| zero(v)).collect::<Result<_>>()?;
        }
        let mut kappa_hat = BTreeMap::new();
        let mut directed = false;
        for (k, &v) in &self.kappa_hat {
            let (a, b) = k
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .ok_or_else(|| GgmError::Format(format!("bad pair key {k:?}")))?;
            let (a, b) = (zero(a)?, zero(b)?);
            directed |= a > b;
            kappa_hat.insert((a, b), v);
        }
        let diagnostics = crate::graph::Diagnostics {
            no_passing_set: self
                .diagnostics
                .no_passing_set
                .iter()
                .map(|&v| zero(v))
                .collect::<Result<_>>()?,
            asymmetric_pairs: self
                .diagnostics
                .asymmetric_pairs
                .iter()
                .map(|[i, j]| Ok((zero(*i)?, zero(*j)?)))
                .collect::<Result<_>>()?,
        };
        Ok(GraphEstimate {
            p: self.p,
            edges,
            neighborhoods,
            kappa_hat,
            strength_kind: if directed {
                StrengthKind::Directed
            } else {
                StrengthKind::Symmetric
            },
            diagnostics,
        })
    }
}

pub fn write_graph<W: Write>(g: &GraphEstimate, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &GraphFile::from(g))?;
    Ok(())
}

pub fn read_graph<R: Read>(r: R) -> Result<GraphEstimate> {
    let file: GraphFile = serde_json::from_reader(r)?;
    file.into_estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_instance;

    #[test]
    fn model_round_trip() {
        let m = build_instance(&ModelFamily::RegularRandom {
            p: 8,
            d: 3,
            kappa_min: 0.2,
            kappa_max: 0.3,
            seed: 9,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["family"], "regular-random");
        assert_eq!(v["seed"], 9);
        assert_eq!(v["params"]["kappa_min"], 0.2);
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back.theta, m.theta);
        assert_eq!(back.edges, m.edges);
        assert_eq!(back.family, m.family);
    }

    #[test]
    fn samples_round_trip_exactly() {
        let data = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, 2.5e10, f64::MIN_POSITIVE, -7.0]);
        let s = SampleSet::new(data, None, MeanMode::KnownZeroMean).unwrap();
        for header in [false, true] {
            let mut buf = Vec::new();
            write_samples(&s, &mut buf, header).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert_eq!(text.starts_with("x1,x2,x3\n"), header);
            let back = read_samples(&buf[..], MeanMode::KnownZeroMean).unwrap();
            assert_eq!(back.data, s.data);
        }
    }

    #[test]
    fn ragged_samples_rejected() {
        assert!(matches!(
            read_samples("1,2\n3\n".as_bytes(), MeanMode::KnownZeroMean),
            Err(GgmError::Format(_)) | Err(GgmError::Csv(_))
        ));
        assert!(read_samples("".as_bytes(), MeanMode::KnownZeroMean).is_err());
    }

    #[test]
    fn graph_file_is_one_based() {
        let g = GraphEstimate {
            p: 3,
            edges: [(0, 1)].into_iter().collect(),
            neighborhoods: vec![vec![1], vec![0], vec![]],
            kappa_hat: [((0, 1), 0.4), ((1, 0), 0.5)].into_iter().collect(),
            strength_kind: StrengthKind::Directed,
            diagnostics: crate::graph::Diagnostics {
                no_passing_set: vec![2],
                asymmetric_pairs: vec![],
            },
        };
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["edges"], serde_json::json!([[1, 2]]));
        assert_eq!(v["kappa_hat"]["2,1"], 0.5);
        assert_eq!(v["neighborhoods"]["1"], serde_json::json!([2]));
        assert_eq!(v["diagnostics"]["no_passing_set"], serde_json::json!([3]));
        assert_eq!(read_graph(&buf[..]).unwrap(), g);
    }
}
