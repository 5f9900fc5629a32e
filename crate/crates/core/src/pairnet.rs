//! Acquisition catalog, small-baseline pair selection and the network
//! design matrix used by the time-series inversion.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CATALOG_HEADER: &str = "# insar-ts catalog v1";

/// Days per year used for every decimal-year conversion in the crate.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub id: usize,
    pub date: NaiveDate,
    /// Perpendicular-baseline coordinate relative to a common reference orbit.
    pub perp_baseline_m: f64,
}

/// Acquisitions ordered by date; `id` equals the position in the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionCatalog {
    acquisitions: Vec<Acquisition>,
}

impl AcquisitionCatalog {
    pub fn new(acquisitions: Vec<Acquisition>) -> Result<Self> {
        for (k, acq) in acquisitions.iter().enumerate() {
            if acq.id != k {
                return Err(Error::invalid(
                    "acquisition id",
                    format!("row {k} has id {}, ids must be 0..n in order", acq.id),
                ));
            }
            if !acq.perp_baseline_m.is_finite() {
                return Err(Error::invalid(
                    "perp_baseline_m",
                    format!("acquisition {k} has a non-finite baseline"),
                ));
            }
            if k > 0 && acq.date <= acquisitions[k - 1].date {
                return Err(Error::invalid(
                    "acquisition date",
                    format!("dates must strictly increase (id {k} on {})", acq.date),
                ));
            }
        }
        Ok(AcquisitionCatalog { acquisitions })
    }

    /// Builds a catalog from parallel date/baseline lists.
    pub fn from_parts(dates: &[NaiveDate], perp_baseline_m: &[f64]) -> Result<Self> {
        if dates.len() != perp_baseline_m.len() {
            return Err(Error::DimensionMismatch {
                context: "catalog baselines",
                expected: dates.len(),
                actual: perp_baseline_m.len(),
            });
        }
        Self::new(
            dates
                .iter()
                .zip(perp_baseline_m)
                .enumerate()
                .map(|(id, (&date, &perp_baseline_m))| Acquisition {
                    id,
                    date,
                    perp_baseline_m,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.acquisitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acquisitions.is_empty()
    }

    pub fn acquisitions(&self) -> &[Acquisition] {
        &self.acquisitions
    }

    pub fn get(&self, id: usize) -> Option<&Acquisition> {
        self.acquisitions.get(id)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.acquisitions.iter().map(|a| a.date).collect()
    }

    /// Days elapsed between acquisitions `i` and `j` (`j` later is positive).
    pub fn days_between(&self, i: usize, j: usize) -> i64 {
        (self.acquisitions[j].date - self.acquisitions[i].date).num_days()
    }

    /// Decimal years since the first acquisition, one entry per acquisition.
    pub fn decimal_years(&self) -> Vec<f64> {
        let Some(first) = self.acquisitions.first() else {
            return Vec::new();
        };
        self.acquisitions
            .iter()
            .map(|a| (a.date - first.date).num_days() as f64 / DAYS_PER_YEAR)
            .collect()
    }

    /// The acquisitions listed in `keep` (sorted), renumbered from zero.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let mut acquisitions = Vec::with_capacity(keep.len());
        for (id, &k) in keep.iter().enumerate() {
            let a = self
                .acquisitions
                .get(k)
                .ok_or_else(|| Error::invalid("acquisition id", format!("{k} is not in the catalog")))?;
            acquisitions.push(Acquisition { id, ..*a });
        }
        Self::new(acquisitions)
    }

    /// Parses the plain-text catalog format (see `docs/formats.md`).
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if !saw_header {
                    if comment.trim() != CATALOG_HEADER[1..].trim() {
                        return Err(Error::parse(
                            origin,
                            format!("line {}: expected header `{CATALOG_HEADER}`", lineno + 1),
                        ));
                    }
                    saw_header = true;
                }
                continue;
            }
            if !saw_header {
                return Err(Error::parse(
                    origin,
                    format!("missing `{CATALOG_HEADER}` header"),
                ));
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    origin,
                    format!("line {}: expected 3 fields, found {}", lineno + 1, fields.len()),
                ));
            }
            let bad = |what: &str| Error::parse(origin, format!("line {}: bad {what}", lineno + 1));
            let id = fields[0].parse::<usize>().map_err(|_| bad("id"))?;
            let date = NaiveDate::parse_from_str(fields[1], "%Y-%m-%d").map_err(|_| bad("date"))?;
            let perp_baseline_m = fields[2].parse::<f64>().map_err(|_| bad("perp_baseline_m"))?;
            rows.push(Acquisition {
                id,
                date,
                perp_baseline_m,
            });
        }
        Self::new(rows).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CATALOG_HEADER);
        out.push('\n');
        for a in &self.acquisitions {
            let _ = writeln!(out, "{},{},{}", a.id, a.date.format("%Y-%m-%d"), a.perp_baseline_m);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Selected interferometric pairs together with the thresholds that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    pub perp_max_m: f64,
    pub temp_max_days: f64,
}

impl PairSet {
    /// Wraps an explicit pair list. Pairs are normalised to `i < j`, sorted and
    /// deduplicated. Thresholds are recorded as infinite.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::invalid("pair", format!("self pair ({a}, {a})")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(PairSet {
            pairs: list,
            perp_max_m: f64::INFINITY,
            temp_max_days: f64::INFINITY,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Keeps only pairs whose endpoints are both in `keep`, reindexing the
    /// acquisitions to their position in `keep` (which must be sorted).
    pub fn restrict(&self, keep: &[usize]) -> PairSet {
        let position = |id: usize| keep.binary_search(&id).ok();
        let pairs = self
            .pairs
            .iter()
            .filter_map(|&(i, j)| Some((position(i)?, position(j)?)))
            .collect();
        PairSet {
            pairs,
            perp_max_m: self.perp_max_m,
            temp_max_days: self.temp_max_days,
        }
    }
}

/// All pairs `(i, j)`, `i < j`, within both baseline thresholds (inclusive).
pub fn select_pairs(
    catalog: &AcquisitionCatalog,
    perp_max_m: f64,
    temp_max_days: f64,
) -> Result<PairSet> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if !(perp_max_m > 0.0) {
        return Err(Error::invalid("perp_max_m", format!("{perp_max_m} must be > 0")));
    }
    if !(temp_max_days > 0.0) {
        return Err(Error::invalid(
            "temp_max_days",
            format!("{temp_max_days} must be > 0"),
        ));
    }
    let acq = catalog.acquisitions();
    let mut pairs = Vec::new();
    for i in 0..acq.len() {
        for j in i + 1..acq.len() {
            let dt = (acq[j].date - acq[i].date).num_days() as f64;
            // Dates are sorted, so nothing further out can qualify.
            if dt > temp_max_days {
                break;
            }
            if (acq[j].perp_baseline_m - acq[i].perp_baseline_m).abs() <= perp_max_m {
                pairs.push((i, j));
            }
        }
    }
    Ok(PairSet {
        pairs,
        perp_max_m,
        temp_max_days,
    })
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partition of `0..n` into connected components of the pair graph. Each
/// component is sorted; components are ordered by their smallest member.
pub fn connected_components(ps: &PairSet, n: usize) -> Vec<Vec<usize>> {
    let mut sets = DisjointSets::new(n);
    for &(i, j) in ps.pairs() {
        if i < n && j < n {
            sets.union(i, j);
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let root = sets.find(v);
        let slot = *by_root[root].get_or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[slot].push(v);
    }
    components
}

/// The component that the inversion keeps when the network is split: the
/// largest one, earliest first acquisition on ties.
pub fn largest_component(ps: &PairSet, n: usize) -> Vec<usize> {
    connected_components(ps, n)
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(_, c)| c)
        .unwrap_or_default()
}

/// Sparse pair-to-epoch incidence matrix with the reference epoch removed.
///
/// Row `r` for pair `(i, j)` holds `+1` in the column of epoch `j` and `-1` in
/// the column of epoch `i`; the reference epoch has no column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_epochs: usize,
    ref_index: usize,
    pairs: Vec<(usize, usize)>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.pairs.len()
    }

    pub fn cols(&self) -> usize {
        self.n_epochs - 1
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Column of `epoch`, or `None` for the reference epoch.
    pub fn column_of(&self, epoch: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match epoch.cmp(&self.ref_index) {
            Less => Some(epoch),
            Equal => None,
            Greater => Some(epoch - 1),
        }
    }

    /// Epoch that owns column `col`.
    pub fn epoch_of(&self, col: usize) -> usize {
        if col < self.ref_index {
            col
        } else {
            col + 1
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> i8 {
        let (i, j) = self.pairs[row];
        let epoch = self.epoch_of(col);
        if epoch == j {
            1
        } else if epoch == i {
            -1
        } else {
            0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.cols(), |r, c| f64::from(self.entry(r, c)))
    }

    /// Pair phases predicted from per-epoch phases (`epoch_phase[ref] = 0`).
    pub fn forward(&self, epoch_phase: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| epoch_phase[j] - epoch_phase[i])
            .collect()
    }
}

/// Builds the design matrix; fails if the pair graph does not connect all
/// `n` epochs.
pub fn design_matrix(ps: &PairSet, n: usize, ref_index: usize) -> Result<DesignMatrix> {
    if n == 0 || ref_index >= n {
        return Err(Error::invalid(
            "ref_index",
            format!("{ref_index} not a valid epoch of {n}"),
        ));
    }
    if let Some(&(i, j)) = ps.pairs().iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::invalid(
            "pair",
            format!("({i}, {j}) references an epoch beyond {n}"),
        ));
    }
    let components = connected_components(ps, n);
    if components.len() > 1 {
        return Err(Error::DisconnectedNetwork { components });
    }
    Ok(DesignMatrix {
        n_epochs: n,
        ref_index,
        pairs: ps.pairs().to_vec(),
    })
}
