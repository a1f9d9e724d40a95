use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest opinion level in the five-star datasets this model targets.
pub const DEFAULT_R_MAX: u8 = 5;

/// One observed rating with dense ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatingTriple {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
}

impl RatingTriple {
    pub fn new(user: u32, item: u32, rating: u8) -> Self {
        Self { user, item, rating }
    }
}

/// Bijection between raw string ids and dense indices in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            if index.insert(r.clone(), i as u32).is_some() {
                return Err(Error::Contract(format!("duplicate raw id {r:?} in id map")));
            }
        }
        Ok(Self { raw, index })
    }

    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len() as u32;
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, id: u32) -> Option<&str> {
        self.raw.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        for (i, r) in self.raw.iter().enumerate() {
            writeln!(f, "{i}\t{r}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    /// Reads the `dense<TAB>raw` format written by [`IdMap::write_to`].
    pub fn read_from(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let (idx, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.into(),
                line: n + 1,
                msg: "expected `dense<TAB>raw`".into(),
            })?;
            if idx.parse::<usize>().ok() != Some(raw.len()) {
                return Err(Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    msg: format!("expected dense id {}, found {idx:?}", raw.len()),
                });
            }
            raw.push(name.to_owned());
        }
        Self::from_raw(raw)
    }
}

/// The user–item graph: every observed rating, indexed from both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingGraph {
    n_users: usize,
    n_items: usize,
    r_max: u8,
    triples: Vec<RatingTriple>,
    by_user: Vec<Vec<(u32, u8)>>,
    by_item: Vec<Vec<(u32, u8)>>,
}

impl RatingGraph {
    pub fn from_triples(n_users: usize, n_items: usize, r_max: u8, triples: Vec<RatingTriple>) -> Result<Self> {
        let mut by_user = vec![Vec::new(); n_users];
        let mut by_item = vec![Vec::new(); n_items];
        for t in &triples {
            if t.user as usize >= n_users {
                return Err(Error::Index {
                    kind: "user",
                    id: t.user as usize,
                    count: n_users,
                });
            }
            if t.item as usize >= n_items {
                return Err(Error::Index {
                    kind: "item",
                    id: t.item as usize,
                    count: n_items,
                });
            }
            if t.rating == 0 || t.rating > r_max {
                return Err(Error::Domain {
                    rating: t.rating as i64,
                    r_max,
                });
            }
            by_user[t.user as usize].push((t.item, t.rating));
            by_item[t.item as usize].push((t.user, t.rating));
        }
        for (u, list) in by_user.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Contract(format!(
                    "user {u} rates item {} more than once",
                    w[0].0
                )));
            }
        }
        for list in &mut by_item {
            list.sort_unstable();
        }
        Ok(Self {
            n_users,
            n_items,
            r_max,
            triples,
            by_user,
            by_item,
        })
    }

    /// Same id space, restricted to a subset of ratings (e.g. the training split).
    pub fn restricted_to(&self, triples: &[RatingTriple]) -> Result<Self> {
        Self::from_triples(self.n_users, self.n_items, self.r_max, triples.to_vec())
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn r_max(&self) -> u8 {
        self.r_max
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Items the user rated, sorted by item id.
    pub fn items_of(&self, user: u32) -> &[(u32, u8)] {
        &self.by_user[user as usize]
    }

    /// Users who rated the item, sorted by user id.
    pub fn raters_of(&self, item: u32) -> &[(u32, u8)] {
        &self.by_item[item as usize]
    }

    /// `C(i)`: items rated by `user`, optionally omitting the `(user, item)` pair being scored.
    pub fn neighbors_c(&self, user: u32, exclude: Option<(u32, u32)>) -> Result<Vec<(u32, u8)>> {
        if user as usize >= self.n_users {
            return Err(Error::Index {
                kind: "user",
                id: user as usize,
                count: self.n_users,
            });
        }
        Ok(self
            .items_of(user)
            .iter()
            .copied()
            .filter(|&(item, _)| exclude != Some((user, item)))
            .collect())
    }

    /// `B(j)`: users who rated `item`, optionally omitting the pair being scored.
    pub fn neighbors_b(&self, item: u32, exclude: Option<(u32, u32)>) -> Result<Vec<(u32, u8)>> {
        if item as usize >= self.n_items {
            return Err(Error::Index {
                kind: "item",
                id: item as usize,
                count: self.n_items,
            });
        }
        Ok(self
            .raters_of(item)
            .iter()
            .copied()
            .filter(|&(user, _)| exclude != Some((user, item)))
            .collect())
    }

    pub fn rating(&self, user: u32, item: u32) -> Option<u8> {
        let list = self.by_user.get(user as usize)?;
        list.binary_search_by_key(&item, |&(i, _)| i).ok().map(|k| list[k].1)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub r_max: u8,
    /// Map fractional ratings (e.g. half stars) to the nearest level instead of rejecting them.
    pub round_fractional: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            r_max: DEFAULT_R_MAX,
            round_fractional: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingsLoadReport {
    pub lines: usize,
    pub skipped: usize,
    pub triples: usize,
    pub duplicates: usize,
    pub rounded: usize,
    pub users: usize,
    pub items: usize,
}

/// A parsed ratings dump together with its raw-id maps.
#[derive(Clone, Debug)]
pub struct RatingsData {
    pub graph: RatingGraph,
    pub users: IdMap,
    pub items: IdMap,
    pub report: RatingsLoadReport,
}

impl RatingsData {
    /// Writes `user item rating` lines with raw ids.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in self.graph.triples() {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.users.raw(t.user).unwrap_or("?"),
                self.items.raw(t.item).unwrap_or("?"),
                t.rating
            )?;
        }
        Ok(())
    }
}

pub fn load_ratings(path: &Path, opts: LoadOptions) -> Result<RatingsData> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(BufReader::new(f), path, opts)
}

/// Parses whitespace-separated `user item rating` lines. Blank lines and
/// `#` comments are skipped; a repeated `(user, item)` keeps the last rating.
pub fn parse_ratings<R: BufRead>(reader: R, path: &Path, opts: LoadOptions) -> Result<RatingsData> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut triples: Vec<RatingTriple> = Vec::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    let mut report = RatingsLoadReport::default();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        report.lines += 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            report.skipped += 1;
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                msg: format!("expected `user item rating`, found {} field(s)", fields.len()),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: line_no,
            msg: format!("rating {:?} is not a number", fields[2]),
        })?;
        let level = if value.fract() == 0.0 {
            value
        } else if opts.round_fractional {
            report.rounded += 1;
            value.round()
        } else {
            return Err(Error::Validation {
                path: path.into(),
                line: line_no,
                msg: format!("fractional rating {value}; enable rounding to accept it"),
            });
        };
        if !(1.0..=opts.r_max as f64).contains(&level) {
            return Err(Error::Validation {
                path: path.into(),
                line: line_no,
                msg: format!("rating {value} outside 1..={}", opts.r_max),
            });
        }
        let user = users.intern(fields[0]);
        let item = items.intern(fields[1]);
        let rating = level as u8;
        match seen.get(&(user, item)) {
            Some(&pos) => {
                triples[pos].rating = rating;
                report.duplicates += 1;
            }
            None => {
                seen.insert((user, item), triples.len());
                triples.push(RatingTriple { user, item, rating });
            }
        }
    }

    report.triples = triples.len();
    report.users = users.len();
    report.items = items.len();
    let graph = RatingGraph::from_triples(users.len(), items.len(), opts.r_max, triples)?;
    Ok(RatingsData {
        graph,
        users,
        items,
        report,
    })
}

/// Reads dense-id `user item rating` lines (as written by the split command).
pub fn read_dense_triples(path: &Path) -> Result<Vec<RatingTriple>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse {
            path: path.into(),
            line: n + 1,
            msg: format!("expected dense `user item rating`, found {body:?}"),
        };
        let mut it = body.split_whitespace();
        let (Some(u), Some(i), Some(r)) = (it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        out.push(RatingTriple {
            user: u.parse().map_err(|_| bad())?,
            item: i.parse().map_err(|_| bad())?,
            rating: r.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn write_dense_triples(path: &Path, triples: &[RatingTriple]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for t in triples {
        writeln!(f, "{}\t{}\t{}", t.user, t.item, t.rating).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
