use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ratings::IdMap;
use crate::error::{Error, Result};

/// Directed user–user trust graph. `neighbors(i)` lists the users `i` trusts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SocialGraph {
    neighbors: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustLoadReport {
    pub lines: usize,
    pub edges: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    pub unknown_users: usize,
}

impl SocialGraph {
    pub fn empty(n_users: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n_users],
        }
    }

    /// Builds adjacency from `(truster, trustee)` pairs. Self-loops and
    /// repeated edges are dropped and counted in the returned report.
    pub fn from_edges(
        n_users: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
        symmetrize: bool,
    ) -> Result<(Self, TrustLoadReport)> {
        let mut report = TrustLoadReport::default();
        let mut neighbors = vec![Vec::new(); n_users];
        for (a, b) in edges {
            for id in [a, b] {
                if id as usize >= n_users {
                    return Err(Error::Index {
                        kind: "user",
                        id: id as usize,
                        count: n_users,
                    });
                }
            }
            if a == b {
                report.self_loops += 1;
                continue;
            }
            neighbors[a as usize].push(b);
            if symmetrize {
                neighbors[b as usize].push(a);
            }
        }
        let mut total_before = 0;
        for list in &mut neighbors {
            total_before += list.len();
            list.sort_unstable();
            list.dedup();
        }
        let g = Self { neighbors };
        report.edges = g.edge_count();
        report.duplicates = total_before - report.edges;
        Ok((g, report))
    }

    pub fn n_users(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of directed adjacency entries.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// `N(i)`, sorted ascending.
    pub fn neighbors_n(&self, user: u32) -> Result<&[u32]> {
        self.neighbors
            .get(user as usize)
            .map(Vec::as_slice)
            .ok_or(Error::Index {
                kind: "user",
                id: user as usize,
                count: self.neighbors.len(),
            })
    }

    pub(crate) fn friends_of(&self, user: u32) -> &[u32] {
        &self.neighbors[user as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().map(move |&b| (a as u32, b)))
    }
}

/// Writes one dense-id `a b` line per adjacency entry.
pub fn write_dense_edges(path: &Path, social: &SocialGraph) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (a, b) in social.edges() {
        writeln!(f, "{a}\t{b}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_dense_edges`] for a graph of `n_users`.
pub fn read_dense_edges(path: &Path, n_users: usize) -> Result<SocialGraph> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            path: path.into(),
            line: n + 1,
            msg: format!("expected dense `a b`, found {body:?}"),
        };
        let mut it = body.split_whitespace().map(|x| x.parse::<u32>());
        let (Some(Ok(a)), Some(Ok(b))) = (it.next(), it.next()) else {
            return Err(bad());
        };
        if a as usize >= n_users || b as usize >= n_users {
            return Err(Error::Validation {
                path: path.into(),
                line: n + 1,
                msg: format!("user id outside 0..{n_users}"),
            });
        }
        edges.push((a, b));
    }
    Ok(SocialGraph::from_edges(n_users, edges, false)?.0)
}

/// Loads `truster trustee` lines, resolving raw ids through the ratings id map.
/// Users absent from the ratings are dropped and counted.
pub fn load_trust(path: &Path, users: &IdMap, symmetrize: bool) -> Result<(SocialGraph, TrustLoadReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trust(BufReader::new(f), path, users, symmetrize)
}

pub fn parse_trust<R: BufRead>(
    reader: R,
    path: &Path,
    users: &IdMap,
    symmetrize: bool,
) -> Result<(SocialGraph, TrustLoadReport)> {
    let mut edges = Vec::new();
    let mut lines = 0;
    let mut unknown = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        lines += 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut it = body.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                msg: "expected `truster trustee`".into(),
            });
        };
        match (users.get(a), users.get(b)) {
            (Some(a), Some(b)) => edges.push((a, b)),
            _ => unknown += 1,
        }
    }
    let (g, mut report) = SocialGraph::from_edges(users.len(), edges, symmetrize)?;
    report.lines = lines;
    report.unknown_users = unknown;
    Ok((g, report))
}
