//! Directed link-connectivity graphs and K-hop neighbourhood masks.
//!
//! Nodes of a [`RoadGraph`] are road links (segments); an edge `i → j` means
//! traffic leaves link `i` and enters link `j`. The index order of
//! `link_ids` is the canonical order of every speed vector in the crate.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoadGraph {
    link_ids: Vec<String>,
    index: HashMap<String, usize>,
    /// Successor lists, ascending and without duplicates.
    successors: Vec<Vec<usize>>,
}

impl RoadGraph {
    pub fn build<S: AsRef<str>>(links: &[S], edges: &[(S, S)]) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::validation("a road graph needs at least one link"));
        }
        let mut index = HashMap::with_capacity(links.len());
        let mut link_ids = Vec::with_capacity(links.len());
        for (i, id) in links.iter().enumerate() {
            let id = id.as_ref();
            if id.is_empty() {
                return Err(Error::validation(format!("link {i} has an empty id")));
            }
            if index.insert(id.to_string(), i).is_some() {
                return Err(Error::validation(format!("duplicate link id `{id}`")));
            }
            link_ids.push(id.to_string());
        }
        let mut successors = vec![Vec::new(); links.len()];
        for (from, to) in edges {
            let (from, to) = (from.as_ref(), to.as_ref());
            let f = *index
                .get(from)
                .ok_or_else(|| Error::Reference(format!("edge source `{from}` is not a declared link")))?;
            let t = *index
                .get(to)
                .ok_or_else(|| Error::Reference(format!("edge target `{to}` is not a declared link")))?;
            if f == t {
                return Err(Error::validation(format!("self-loop on link `{from}`")));
            }
            successors[f].push(t);
        }
        for s in &mut successors {
            s.sort_unstable();
            s.dedup();
        }
        Ok(RoadGraph {
            link_ids,
            index,
            successors,
        })
    }

    /// Directed ring `L0 → L1 → … → L{n-1} → L0`.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("a ring needs at least 2 links"));
        }
        let links: Vec<String> = (0..n).map(|i| format!("L{i}")).collect();
        let edges: Vec<(String, String)> = (0..n).map(|i| (links[i].clone(), links[(i + 1) % n].clone())).collect();
        RoadGraph::build(&links, &edges)
    }

    pub fn link_count(&self) -> usize {
        self.link_ids.len()
    }

    pub fn link_ids(&self) -> &[String] {
        &self.link_ids
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.successors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.successors[i].binary_search(&j).is_ok()
    }

    /// Dense 0/1 adjacency, row-major.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.link_count();
        let mut a = vec![vec![0u8; n]; n];
        for (i, succ) in self.successors.iter().enumerate() {
            for &j in succ {
                a[i][j] = 1;
            }
        }
        a
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
    }

    /// Shortest directed walk length from `i` to every link.
    pub fn distances_from(&self, i: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.link_count()];
        dist[i] = Some(0);
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.successors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Number of links on the shortest directed walk from `i` to `j`; `None`
/// when `j` cannot be reached.
pub fn hop_distance(g: &RoadGraph, i: usize, j: usize) -> Option<usize> {
    g.distances_from(i)[j]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopMode {
    /// Every link within `K` hops, i.e. `Ci((A + I)^K)`.
    #[default]
    Cumulative,
    /// Links at the end of a walk of exactly `K` steps, plus self: `Ci(A^K + I)`.
    Exact,
}

impl std::str::FromStr for HopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(HopMode::Cumulative),
            "exact" => Ok(HopMode::Exact),
            other => Err(Error::validation(format!(
                "unknown hop mode `{other}` (expected cumulative or exact)"
            ))),
        }
    }
}

impl std::fmt::Display for HopMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HopMode::Cumulative => "cumulative",
            HopMode::Exact => "exact",
        })
    }
}

/// Binary neighbourhood mask gating the graph convolution.
///
/// Row `i` lists the links whose speeds may feed link `i`; the diagonal is
/// always set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMask")]
pub struct HopMask {
    order: usize,
    mode: HopMode,
    /// Ascending column indices of the ones in each row.
    rows: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawMask {
    order: usize,
    mode: HopMode,
    rows: Vec<Vec<usize>>,
}

impl TryFrom<RawMask> for HopMask {
    type Error = Error;

    fn try_from(raw: RawMask) -> Result<Self> {
        let n = raw.rows.len();
        for (i, row) in raw.rows.iter().enumerate() {
            if !row.windows(2).all(|w| w[0] < w[1]) || row.iter().any(|&j| j >= n) {
                return Err(Error::validation(format!(
                    "mask row {i} is not a sorted index set below {n}"
                )));
            }
            if row.binary_search(&i).is_err() {
                return Err(Error::validation(format!("mask row {i} lacks its diagonal entry")));
            }
        }
        Ok(HopMask {
            order: raw.order,
            mode: raw.mode,
            rows: raw.rows,
        })
    }
}

impl HopMask {
    pub fn identity(n: usize) -> Self {
        HopMask {
            order: 0,
            mode: HopMode::Cumulative,
            rows: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode(&self) -> HopMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    /// Columns set in row `i`, ascending.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn dense(&self) -> Vec<Vec<u8>> {
        let n = self.size();
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![0u8; n];
                for &j in r {
                    row[j] = 1;
                }
                row
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| r.len() == 1 && r[0] == i)
    }
}

pub fn hop_mask(g: &RoadGraph, order: usize, mode: HopMode) -> HopMask {
    let n = g.link_count();
    let rows = match mode {
        HopMode::Cumulative => {
            // Boolean powers of (A + I): reach(k+1) = reach(k) ∪ succ(reach(k)).
            let mut reach: Vec<Vec<bool>> = (0..n)
                .map(|i| {
                    let mut r = vec![false; n];
                    r[i] = true;
                    r
                })
                .collect();
            for _ in 0..order {
                reach = reach
                    .iter()
                    .map(|r| {
                        let mut next = r.clone();
                        for (u, _) in r.iter().enumerate().filter(|(_, &set)| set) {
                            for &v in g.successors(u) {
                                next[v] = true;
                            }
                        }
                        next
                    })
                    .collect();
            }
            reach.into_iter().map(ones).collect()
        }
        HopMode::Exact => (0..n)
            .map(|i| {
                let mut frontier = vec![false; n];
                frontier[i] = true;
                for _ in 0..order {
                    let mut next = vec![false; n];
                    for (u, _) in frontier.iter().enumerate().filter(|(_, &set)| set) {
                        for &v in g.successors(u) {
                            next[v] = true;
                        }
                    }
                    frontier = next;
                }
                frontier[i] = true;
                ones(frontier)
            })
            .collect(),
    };
    HopMask { order, mode, rows }
}

fn ones(row: Vec<bool>) -> Vec<usize> {
    row.into_iter()
        .enumerate()
        .filter_map(|(j, set)| set.then_some(j))
        .collect()
}

fn read_records<R: Read>(reader: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let got = rdr.headers()?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Format {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        out.push((line, record));
    }
    Ok(out)
}

/// Reads a link file with header `link_id`.
pub fn read_links<R: Read>(reader: R) -> Result<Vec<String>> {
    read_records(reader, &["link_id"])?
        .into_iter()
        .map(|(line, r)| match r.get(0) {
            Some(id) if !id.is_empty() => Ok(id.to_string()),
            _ => Err(Error::Format {
                line,
                message: "empty link_id".into(),
            }),
        })
        .collect()
}

/// Reads an edge file with header `from_link,to_link`.
pub fn read_edges<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    Ok(read_records(reader, &["from_link", "to_link"])?
        .into_iter()
        .map(|(_, r)| (r[0].to_string(), r[1].to_string()))
        .collect())
}

/// Parses link and edge CSV text into a graph.
pub fn parse_graph<R1: Read, R2: Read>(links: R1, edges: R2) -> Result<RoadGraph> {
    let links = read_links(links)?;
    let edges = read_edges(edges)?;
    RoadGraph::build(&links, &edges)
}

pub fn write_links<W: Write>(g: &RoadGraph, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["link_id"])?;
    for id in g.link_ids() {
        w.write_record([id])?;
    }
    w.flush().map_err(|e| Error::io("<links>", e))?;
    Ok(())
}

pub fn write_edges<W: Write>(g: &RoadGraph, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["from_link", "to_link"])?;
    for (i, j) in g.edges() {
        w.write_record([&g.link_ids()[i], &g.link_ids()[j]])?;
    }
    w.flush().map_err(|e| Error::io("<edges>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> RoadGraph {
        RoadGraph::build(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap()
    }

    #[test]
    fn chain_adjacency() {
        assert_eq!(chain().adjacency(), vec![vec![0, 1, 0], vec![0, 0, 1], vec![0, 0, 0]]);
    }

    #[test]
    fn ring_rows_have_single_one() {
        let g = RoadGraph::ring(4).unwrap();
        for row in g.adjacency() {
            assert_eq!(row.iter().filter(|&&x| x == 1).count(), 1);
        }
    }

    #[test]
    fn ring_of_163_is_cyclic_permutation() {
        let g = RoadGraph::ring(163).unwrap();
        let a = g.adjacency();
        for (i, row) in a.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x == 1, j == (i + 1) % 163);
            }
        }
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            RoadGraph::build(&["a", "b"], &[("a", "z")]),
            Err(Error::Reference(_))
        ));
        assert!(matches!(RoadGraph::build(&["a", "a"], &[]), Err(Error::Validation(_))));
        assert!(matches!(
            RoadGraph::build(&["a", "b"], &[("a", "a")]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn isolated_links_are_allowed() {
        let g = RoadGraph::build(&["a", "b", "c"], &[("a", "b")]).unwrap();
        assert_eq!(g.successors(2), &[] as &[usize]);
    }

    #[test]
    fn chain_distances() {
        let g = chain();
        assert_eq!(hop_distance(&g, 0, 2), Some(2));
        assert_eq!(hop_distance(&g, 2, 0), None);
        assert_eq!(hop_distance(&g, 1, 1), Some(0));
    }

    #[test]
    fn chain_masks() {
        let g = chain();
        assert_eq!(
            hop_mask(&g, 1, HopMode::Cumulative).dense(),
            vec![vec![1, 1, 0], vec![0, 1, 1], vec![0, 0, 1]]
        );
        assert_eq!(
            hop_mask(&g, 2, HopMode::Exact).dense(),
            vec![vec![1, 0, 1], vec![0, 1, 0], vec![0, 0, 1]]
        );
        assert_eq!(
            hop_mask(&g, 2, HopMode::Cumulative).dense(),
            vec![vec![1, 1, 1], vec![0, 1, 1], vec![0, 0, 1]]
        );
        assert!(hop_mask(&g, 0, HopMode::Exact).is_identity());
        assert!(hop_mask(&g, 0, HopMode::Cumulative).is_identity());
    }

    #[test]
    fn graph_csv_roundtrip() {
        let g = chain();
        let mut links = Vec::new();
        let mut edges = Vec::new();
        write_links(&g, &mut links).unwrap();
        write_edges(&g, &mut edges).unwrap();
        assert_eq!(
            String::from_utf8(edges.clone()).unwrap(),
            "from_link,to_link\na,b\nb,c\n"
        );
        assert_eq!(parse_graph(&links[..], &edges[..]).unwrap(), g);
    }

    #[test]
    fn graph_csv_rejects_bad_header() {
        let err = read_links("id\na\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn mask_json_validates_rows() {
        let bad = r#"{"order":1,"mode":"cumulative","rows":[[1],[1]]}"#;
        assert!(serde_json::from_str::<HopMask>(bad).is_err());
        let good = serde_json::to_string(&hop_mask(&chain(), 1, HopMode::Cumulative)).unwrap();
        assert_eq!(
            serde_json::from_str::<HopMask>(&good).unwrap(),
            hop_mask(&chain(), 1, HopMode::Cumulative)
        );
    }
}
