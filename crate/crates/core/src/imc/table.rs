//! Externally supplied noise-free posteriors, e.g. from a learned model.
//!
//! File layout: a header row, then one row per `(state, component)` with
//! `state,component,lo,hi` and an optional trailing `valid` column
//! (`true`/`false`/`1`/`0`). Indices are zero-based. A state is invalid if
//! any of its rows says so; invalid states get vacuous `[0, 1]` rows.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Interval, Region, StatePartition};

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub region: Region,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosteriorTable {
    entries: BTreeMap<usize, TableEntry>,
}

impl PosteriorTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (usize, TableEntry)>) -> Self {
        PosteriorTable {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn entry(&self, state: usize) -> Option<&TableEntry> {
        self.entries.get(&state)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Input(format!("cannot open posterior table {}: {e}", path.display())))?;
        Self::parse(file)
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Input(format!("posterior table header: {e}")))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let expected = ["state", "component", "lo", "hi"];
        if headers.len() < 4 || headers[..4] != expected {
            return Err(Error::Input(format!(
                "posterior table header must start with state,component,lo,hi; got {}",
                headers.join(",")
            )));
        }
        let has_valid = headers.get(4).is_some_and(|h| h == "valid");

        let mut raw: BTreeMap<usize, (BTreeMap<usize, Interval>, bool)> = BTreeMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = n + 2;
            let rec = rec.map_err(|e| Error::Input(format!("posterior table line {line}: {e}")))?;
            let field = |k: usize| {
                rec.get(k)
                    .ok_or_else(|| Error::Input(format!("posterior table line {line}: missing column {}", k + 1)))
            };
            let state: usize = parse_num(field(0)?, line, "state")?;
            let comp: usize = parse_num(field(1)?, line, "component")?;
            let lo: f64 = parse_num(field(2)?, line, "lo")?;
            let hi: f64 = parse_num(field(3)?, line, "hi")?;
            let valid = if has_valid {
                match rec.get(4).unwrap_or("true") {
                    "true" | "1" | "" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(Error::Input(format!(
                            "posterior table line {line}: bad validity flag `{other}`"
                        )))
                    }
                }
            } else {
                true
            };
            let iv = Interval::new(lo, hi)
                .map_err(|_| Error::Input(format!("posterior table line {line}: empty interval [{lo}, {hi}]")))?;
            let slot = raw.entry(state).or_insert_with(|| (BTreeMap::new(), true));
            if slot.0.insert(comp, iv).is_some() {
                return Err(Error::Input(format!(
                    "posterior table line {line}: duplicate entry for state {state}, component {comp}"
                )));
            }
            slot.1 &= valid;
        }

        let mut entries = BTreeMap::new();
        for (state, (comps, valid)) in raw {
            let dims: Vec<Interval> = comps.values().copied().collect();
            if comps.keys().copied().ne(0..dims.len()) {
                return Err(Error::Input(format!(
                    "posterior table: state {state} does not list components 0..{} contiguously",
                    dims.len()
                )));
            }
            let region = Region::new(dims).map_err(|e| Error::Input(e.to_string()))?;
            entries.insert(state, TableEntry { region, valid });
        }
        Ok(PosteriorTable { entries })
    }

    /// Every cell of the partition must have an entry of matching dimension.
    pub fn check_covers(&self, partition: &StatePartition) -> Result<()> {
        for i in 0..partition.len() {
            match self.entries.get(&i) {
                None => {
                    return Err(Error::Input(format!("posterior table has no entry for state {i}")))
                }
                Some(e) if e.region.dim() != partition.dim() => {
                    return Err(Error::Input(format!(
                        "posterior table entry for state {i} has {} components, expected {}",
                        e.region.dim(),
                        partition.dim()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Input(format!("posterior table line {line}: bad {what} `{s}`")))
}
