//! Graph events derived from KPM reports, plus a CSV dump/replay format.

use std::io::{Read, Write};

use ran_sim::kpm::feature;
use ran_sim::{KpmReport, ReportKind};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TgnError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Ue,
    Cell,
}

impl NodeKind {
    pub fn index(self) -> usize {
        match self {
            NodeKind::Ue => 0,
            NodeKind::Cell => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeRef {
    Ue(usize),
    Cell(usize),
}

impl NodeRef {
    pub fn kind(self) -> NodeKind {
        match self {
            NodeRef::Ue(_) => NodeKind::Ue,
            NodeRef::Cell(_) => NodeKind::Cell,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEvent {
    pub ue: usize,
    pub cell: usize,
    pub timestamp_us: u64,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeEvent {
    pub node: NodeRef,
    pub timestamp_us: u64,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphEvent {
    Edge(EdgeEvent),
    Node(NodeEvent),
}

impl GraphEvent {
    pub fn timestamp_us(&self) -> u64 {
        match self {
            GraphEvent::Edge(e) => e.timestamp_us,
            GraphEvent::Node(n) => n.timestamp_us,
        }
    }
}

/// Normalized values in schema order. Every schema id must appear exactly
/// once and no other id may appear.
fn ordered(report: &KpmReport, schema: &[u16], group: &str) -> Result<Vec<f64>> {
    let mut out = vec![None; schema.len()];
    for f in &report.features {
        let pos = schema.iter().position(|&id| id == f.id).ok_or_else(|| {
            TgnError::Schema(format!(
                "unknown feature id {} in {group} report at t={}us",
                f.id, report.timestamp_us
            ))
        })?;
        if out[pos].replace(f.value).is_some() {
            return Err(TgnError::Schema(format!(
                "duplicate feature id {} in {group} report",
                f.id
            )));
        }
    }
    out.into_iter()
        .zip(schema)
        .map(|(v, id)| {
            v.ok_or_else(|| TgnError::Schema(format!("missing feature id {id} in {group} report")))
        })
        .collect()
}

/// Converts timestamp-ordered reports to events, preserving stream order.
pub fn build_stream(reports: &[KpmReport]) -> Result<Vec<GraphEvent>> {
    let mut out = Vec::with_capacity(reports.len());
    let mut last = 0;
    for r in reports {
        if r.timestamp_us < last {
            return Err(TgnError::Schema(format!(
                "report at t={}us follows t={last}us",
                r.timestamp_us
            )));
        }
        last = r.timestamp_us;
        let t = r.timestamp_us;
        out.push(match r.kind {
            ReportKind::Edge { ue, cell } => GraphEvent::Edge(EdgeEvent {
                ue,
                cell,
                timestamp_us: t,
                features: ordered(r, &feature::EDGE, "edge")?,
            }),
            ReportKind::Ue { ue } => GraphEvent::Node(NodeEvent {
                node: NodeRef::Ue(ue),
                timestamp_us: t,
                features: ordered(r, &feature::UE, "ue")?,
            }),
            ReportKind::Cell { cell } => GraphEvent::Node(NodeEvent {
                node: NodeRef::Cell(cell),
                timestamp_us: t,
                features: ordered(r, &feature::CELL, "cell")?,
            }),
        });
    }
    Ok(out)
}

pub fn build_events(reports: &[KpmReport]) -> Result<(Vec<EdgeEvent>, Vec<NodeEvent>)> {
    let mut edges = Vec::new();
    let mut nodes = Vec::new();
    for e in build_stream(reports)? {
        match e {
            GraphEvent::Edge(e) => edges.push(e),
            GraphEvent::Node(n) => nodes.push(n),
        }
    }
    Ok((edges, nodes))
}

#[derive(Serialize, Deserialize)]
struct Row {
    kind: String,
    src: usize,
    dst: Option<usize>,
    timestamp_us: u64,
    features: String,
}

/// Writes `kind,src,dst,timestamp_us,features` with features joined by `;`.
/// Floats use the shortest round-trip representation, so replay is exact.
pub fn write_events_csv<W: Write>(w: W, events: &[GraphEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let join = |f: &[f64]| {
        f.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    for e in events {
        let row = match e {
            GraphEvent::Edge(e) => Row {
                kind: "edge".into(),
                src: e.ue,
                dst: Some(e.cell),
                timestamp_us: e.timestamp_us,
                features: join(&e.features),
            },
            GraphEvent::Node(n) => {
                let (kind, src) = match n.node {
                    NodeRef::Ue(i) => ("ue", i),
                    NodeRef::Cell(j) => ("cell", j),
                };
                Row {
                    kind: kind.into(),
                    src,
                    dst: None,
                    timestamp_us: n.timestamp_us,
                    features: join(&n.features),
                }
            }
        };
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<GraphEvent>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let at = || format!("line {}", line + 2);
        let features = if row.features.is_empty() {
            Vec::new()
        } else {
            row.features
                .split(';')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| TgnError::Schema(format!("{}: feature {s:?}: {e}", at())))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let expect = |n: usize| {
            if features.len() == n {
                Ok(())
            } else {
                Err(TgnError::Schema(format!(
                    "{}: {} features, expected {n}",
                    at(),
                    features.len()
                )))
            }
        };
        let t = row.timestamp_us;
        out.push(match row.kind.as_str() {
            "edge" => {
                expect(feature::EDGE.len())?;
                let cell = row
                    .dst
                    .ok_or_else(|| TgnError::Schema(format!("{}: edge without dst", at())))?;
                GraphEvent::Edge(EdgeEvent {
                    ue: row.src,
                    cell,
                    timestamp_us: t,
                    features,
                })
            }
            "ue" => {
                expect(feature::UE.len())?;
                GraphEvent::Node(NodeEvent {
                    node: NodeRef::Ue(row.src),
                    timestamp_us: t,
                    features,
                })
            }
            "cell" => {
                expect(feature::CELL.len())?;
                GraphEvent::Node(NodeEvent {
                    node: NodeRef::Cell(row.src),
                    timestamp_us: t,
                    features,
                })
            }
            other => {
                return Err(TgnError::Schema(format!(
                    "{}: unknown event kind {other:?}",
                    at()
                )))
            }
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ran_sim::kpm::{Feature, KpmRanges};

    fn edge(t: u64, ue: usize, cell: usize) -> KpmReport {
        let raw: Vec<(u16, f64)> = feature::EDGE.iter().map(|&id| (id, -90.0)).collect();
        KpmReport::build(
            t,
            ReportKind::Edge { ue, cell },
            &raw,
            &KpmRanges::default(),
        )
    }

    fn cell(t: u64, cell: usize) -> KpmReport {
        let raw: Vec<(u16, f64)> = feature::CELL.iter().map(|&id| (id, 3.0)).collect();
        KpmReport::build(t, ReportKind::Cell { cell }, &raw, &KpmRanges::default())
    }

    #[test]
    fn serving_and_two_neighbors_give_three_edges() {
        let reports = vec![edge(0, 0, 1), edge(0, 0, 0), edge(0, 0, 2)];
        let (edges, nodes) = build_events(&reports).unwrap();
        assert_eq!(edges.len(), 3);
        assert!(nodes.is_empty());
    }

    #[test]
    fn cell_only_reports_give_node_events() {
        let (edges, nodes) = build_events(&[cell(0, 0), cell(0, 1)]).unwrap();
        assert!(edges.is_empty());
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[1].node, NodeRef::Cell(1));
        assert_eq!(nodes[0].features.len(), feature::CELL.len());
    }

    #[test]
    fn empty_in_empty_out() {
        let (e, n) = build_events(&[]).unwrap();
        assert!(e.is_empty() && n.is_empty());
    }

    #[test]
    fn features_are_reordered_to_schema() {
        let mut r = edge(0, 0, 0);
        for (k, f) in r.features.iter_mut().enumerate() {
            f.value = k as f64;
        }
        r.features.reverse();
        let (edges, _) = build_events(&[r]).unwrap();
        assert_eq!(edges[0].features, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn unknown_feature_id_is_schema_error() {
        let mut r = cell(0, 0);
        r.features.push(Feature {
            id: 999,
            raw: 0.0,
            value: 0.0,
        });
        assert!(matches!(build_events(&[r]), Err(TgnError::Schema(m)) if m.contains("999")));
        // an edge id inside a cell report is just as unknown there
        let mut r = cell(0, 0);
        r.features[0].id = feature::EDGE_RSRP;
        assert!(matches!(build_events(&[r]), Err(TgnError::Schema(_))));
    }

    #[test]
    fn out_of_order_reports_are_rejected() {
        assert!(build_events(&[cell(10, 0), cell(5, 0)]).is_err());
    }
}
