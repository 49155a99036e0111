//! Interaction logs, binarization, leave-one-out splitting and MAR mixing.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub user: u64,
    pub item: u64,
    pub value: f64,
}

/// Parsed rating log, deduplicated on (user, item) with the last record winning.
#[derive(Debug, Clone, Default)]
pub struct RawRatings {
    pub records: Vec<RawRecord>,
    /// Lines that could not be parsed into a record.
    pub malformed: usize,
}

impl RawRatings {
    pub fn from_records(records: impl IntoIterator<Item = RawRecord>) -> Self {
        let mut out: Vec<RawRecord> = Vec::new();
        let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
        for r in records {
            match seen.get(&(r.user, r.item)) {
                Some(&idx) => out[idx].value = r.value,
                None => {
                    seen.insert((r.user, r.item), out.len());
                    out.push(r);
                }
            }
        }
        RawRatings {
            records: out,
            malformed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Maps raw ids through `map`; records with unknown ids are dropped and counted.
    pub fn reindex(&self, map: &IdMap) -> (RawRatings, usize) {
        let mut dropped = 0;
        let records = self
            .records
            .iter()
            .filter_map(|r| match (map.user_index(r.user), map.item_index(r.item)) {
                (Some(u), Some(i)) => Some(RawRecord {
                    user: u as u64,
                    item: i as u64,
                    value: r.value,
                }),
                _ => {
                    dropped += 1;
                    None
                }
            })
            .collect();
        (
            RawRatings {
                records,
                malformed: self.malformed,
            },
            dropped,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Tsv,
    Csv,
    /// Whitespace-separated dense matrix, rows = users, columns = items, 0 = missing.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub user: usize,
    pub item: usize,
    pub value: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            user: 0,
            item: 1,
            value: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: InputFormat,
    pub columns: ColumnMap,
    pub skip_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: InputFormat::Tsv,
            columns: ColumnMap::default(),
            skip_header: false,
        }
    }
}

pub fn load_ratings(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<RawRatings> {
    let path = path.as_ref();
    let raw = match opts.format {
        InputFormat::Dense => load_dense(path)?,
        InputFormat::Tsv => load_delimited(path, b'\t', opts)?,
        InputFormat::Csv => load_delimited(path, b',', opts)?,
    };
    if raw.is_empty() {
        return Err(Error::NoValidRecords(path.to_path_buf()));
    }
    if raw.malformed > 0 {
        log::warn!("{}: skipped {} malformed lines", path.display(), raw.malformed);
    }
    Ok(raw)
}

fn load_delimited(path: &Path, delimiter: u8, opts: &LoadOptions) -> Result<RawRatings> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(opts.skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let cols = opts.columns;
    let widest = cols.user.max(cols.item).max(cols.value);
    let mut records = Vec::new();
    let mut malformed = 0;
    let mut checked_width = false;
    for (n, row) in reader.records().enumerate() {
        let row = match row {
            Ok(row) => row,
            Err(e) if e.is_io_error() => {
                return Err(Error::io(path, std::io::Error::other(e.to_string())))
            }
            Err(_) => {
                malformed += 1;
                continue;
            }
        };
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if !checked_width {
            checked_width = true;
            if widest >= row.len() {
                return Err(Error::ColumnOutOfRange {
                    column: widest,
                    width: row.len(),
                    line: n + 1 + usize::from(opts.skip_header),
                });
            }
        }
        match parse_record(&row, cols) {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }
    let mut raw = RawRatings::from_records(records);
    raw.malformed = malformed;
    Ok(raw)
}

fn parse_record(row: &csv::StringRecord, cols: ColumnMap) -> Option<RawRecord> {
    let user = row.get(cols.user)?.parse::<u64>().ok()?;
    let item = row.get(cols.item)?.parse::<u64>().ok()?;
    let value = row.get(cols.value)?.parse::<f64>().ok()?;
    if value.is_nan() {
        return None;
    }
    Some(RawRecord { user, item, value })
}

fn load_dense(path: &Path) -> Result<RawRatings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut malformed = 0;
    for (user, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        for (item, tok) in line.split_whitespace().enumerate() {
            match tok.parse::<f64>() {
                Ok(v) if v.is_nan() => malformed += 1,
                Ok(v) if v != 0.0 => records.push(RawRecord {
                    user: user as u64,
                    item: item as u64,
                    value: v,
                }),
                Ok(_) => {}
                Err(_) => malformed += 1,
            }
        }
    }
    let mut raw = RawRatings::from_records(records);
    raw.malformed = malformed;
    Ok(raw)
}

/// Dense re-indexing of raw ids, ascending by raw id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
    #[serde(skip)]
    user_lookup: HashMap<u64, usize>,
    #[serde(skip)]
    item_lookup: HashMap<u64, usize>,
}

impl IdMap {
    pub fn from_raw(raw: &RawRatings) -> Self {
        let mut users: Vec<u64> = raw.records.iter().map(|r| r.user).collect();
        let mut items: Vec<u64> = raw.records.iter().map(|r| r.item).collect();
        users.sort_unstable();
        users.dedup();
        items.sort_unstable();
        items.dedup();
        Self::from_ids(users, items)
    }

    pub fn from_ids(users: Vec<u64>, items: Vec<u64>) -> Self {
        let user_lookup = users.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let item_lookup = items.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        IdMap {
            users,
            items,
            user_lookup,
            item_lookup,
        }
    }

    pub fn user_index(&self, raw: u64) -> Option<usize> {
        self.user_lookup.get(&raw).copied()
    }

    pub fn item_index(&self, raw: u64) -> Option<usize> {
        self.item_lookup.get(&raw).copied()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let map: IdMap = read_json(path.as_ref())?;
        Ok(Self::from_ids(map.users, map.items))
    }
}

/// Binary user-item interaction matrix `S` with per-item positive counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImplicitDataset {
    num_users: usize,
    num_items: usize,
    // sorted, duplicate-free item lists per user
    user_items: Vec<Vec<usize>>,
    item_counts: Vec<usize>,
    num_positives: usize,
}

impl ImplicitDataset {
    pub fn new(
        num_users: usize,
        num_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut user_items = vec![Vec::new(); num_users];
        for (u, i) in pairs {
            if u >= num_users {
                return Err(Error::IdOutOfRange {
                    kind: "user",
                    id: u,
                    limit: num_users,
                });
            }
            if i >= num_items {
                return Err(Error::IdOutOfRange {
                    kind: "item",
                    id: i,
                    limit: num_items,
                });
            }
            user_items[u].push(i);
        }
        Ok(Self::from_user_items(num_items, user_items))
    }

    fn from_user_items(num_items: usize, mut user_items: Vec<Vec<usize>>) -> Self {
        let mut item_counts = vec![0; num_items];
        let mut num_positives = 0;
        for items in &mut user_items {
            items.sort_unstable();
            items.dedup();
            for &i in items.iter() {
                item_counts[i] += 1;
            }
            num_positives += items.len();
        }
        ImplicitDataset {
            num_users: user_items.len(),
            num_items,
            user_items,
            item_counts,
            num_positives,
        }
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        Self::from_user_items(num_items, vec![Vec::new(); num_users])
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_positives(&self) -> usize {
        self.num_positives
    }

    pub fn is_empty(&self) -> bool {
        self.num_positives == 0
    }

    pub fn item_counts(&self) -> &[usize] {
        &self.item_counts
    }

    /// Sorted positive items of user `u`.
    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.user_items[u]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.user_items
            .get(u)
            .is_some_and(|items| items.binary_search(&i).is_ok())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    /// Copy with the extra pairs added; pairs already present are ignored.
    pub fn with_pairs(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        ImplicitDataset::new(self.num_users, self.num_items, self.pairs().chain(extra))
    }

    pub fn union(&self, other: &ImplicitDataset) -> Result<Self> {
        check_same_shape(self, other)?;
        self.with_pairs(other.pairs())
    }
}

fn check_same_shape(a: &ImplicitDataset, b: &ImplicitDataset) -> Result<()> {
    if a.num_users != b.num_users {
        return Err(Error::DimensionMismatch {
            what: "num_users",
            expected: a.num_users,
            found: b.num_users,
        });
    }
    if a.num_items != b.num_items {
        return Err(Error::DimensionMismatch {
            what: "num_items",
            expected: a.num_items,
            found: b.num_items,
        });
    }
    Ok(())
}

/// `(u, i)` is positive iff its value is at least `threshold`.
pub fn binarize(
    raw: &RawRatings,
    threshold: f64,
    num_users: usize,
    num_items: usize,
) -> Result<ImplicitDataset> {
    if !threshold.is_finite() {
        return Err(Error::invalid(format!("threshold must be finite, got {threshold}")));
    }
    for r in &raw.records {
        if r.user as usize >= num_users {
            return Err(Error::IdOutOfRange {
                kind: "user",
                id: r.user as usize,
                limit: num_users,
            });
        }
        if r.item as usize >= num_items {
            return Err(Error::IdOutOfRange {
                kind: "item",
                id: r.item as usize,
                limit: num_items,
            });
        }
    }
    ImplicitDataset::new(
        num_users,
        num_items,
        raw.records
            .iter()
            .filter(|r| r.value >= threshold)
            .map(|r| (r.user as usize, r.item as usize)),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: ImplicitDataset,
    pub validation: Vec<Option<usize>>,
    pub test: Vec<Option<usize>>,
    /// Users with fewer than [`MIN_SPLIT_POSITIVES`] positives (kept whole in train).
    pub skipped_users: usize,
    pub seed: u64,
}

pub const MIN_SPLIT_POSITIVES: usize = 3;

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    /// True if `i` is any known positive (train, validation or test) of `u`.
    pub fn is_known_positive(&self, u: usize, i: usize) -> bool {
        self.train.contains(u, i) || self.validation[u] == Some(i) || self.test[u] == Some(i)
    }

    pub fn test_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.test.iter().enumerate().filter_map(|(u, t)| t.map(|i| (u, i)))
    }

    pub fn validation_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.validation
            .iter()
            .enumerate()
            .filter_map(|(u, t)| t.map(|i| (u, i)))
    }
}

/// Holds out one uniformly random positive for test and another for validation
/// from every user with at least three positives.
pub fn leave_one_out_split(ds: &ImplicitDataset, seed: u64) -> Result<SplitDataset> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_items = Vec::with_capacity(ds.num_users());
    let mut validation = vec![None; ds.num_users()];
    let mut test = vec![None; ds.num_users()];
    let mut skipped = 0;
    for u in 0..ds.num_users() {
        let mut items = ds.user_items(u).to_vec();
        if items.len() >= MIN_SPLIT_POSITIVES {
            let t = rand::Rng::random_range(&mut rng, 0..items.len());
            test[u] = Some(items.swap_remove(t));
            let v = rand::Rng::random_range(&mut rng, 0..items.len());
            validation[u] = Some(items.swap_remove(v));
        } else if !items.is_empty() {
            skipped += 1;
        }
        user_items.push(items);
    }
    if skipped > 0 {
        log::info!("leave-one-out: {skipped} users with fewer than {MIN_SPLIT_POSITIVES} positives kept in train only");
    }
    Ok(SplitDataset {
        train: ImplicitDataset::from_user_items(ds.num_items(), user_items),
        validation,
        test,
        skipped_users: skipped,
        seed,
    })
}

/// Adds a random `pct` fraction of the MAR positives that are not already in the
/// MNAR training set.
pub fn mix_mar(
    train_mnar: &ImplicitDataset,
    mar: &ImplicitDataset,
    pct: f64,
    seed: u64,
) -> Result<ImplicitDataset> {
    if !(0.0..=1.0).contains(&pct) {
        return Err(Error::invalid(format!("mixing percentage {pct} outside [0, 1]")));
    }
    check_same_shape(train_mnar, mar)?;
    let fresh: Vec<(usize, usize)> = mar
        .pairs()
        .filter(|&(u, i)| !train_mnar.contains(u, i))
        .collect();
    let take = (pct * fresh.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<(usize, usize)> = fresh.choose_multiple(&mut rng, take).copied().collect();
    train_mnar.with_pairs(chosen)
}

/// Summary written next to the split CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_users: usize,
    pub num_items: usize,
    pub train_positives: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub skipped_users: usize,
    pub split_seed: u64,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub malformed_lines: usize,
    #[serde(default)]
    pub source: Option<String>,
}

impl Manifest {
    pub fn for_split(split: &SplitDataset) -> Self {
        Manifest {
            num_users: split.num_users(),
            num_items: split.num_items(),
            train_positives: split.train.num_positives(),
            validation_count: split.validation.iter().flatten().count(),
            test_count: split.test.iter().flatten().count(),
            skipped_users: split.skipped_users,
            split_seed: split.seed,
            threshold: None,
            malformed_lines: 0,
            source: None,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const TEST_FILE: &str = "test.csv";
pub const IDMAP_FILE: &str = "idmap.json";

pub fn write_pairs(path: &Path, pairs: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["user", "item"]).map_err(|e| csv_err(path, e))?;
    for (u, i) in pairs {
        w.write_record([u.to_string(), i.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<(usize, usize)>() {
        out.push(row.map_err(|e| csv_err(path, e))?);
    }
    Ok(out)
}

pub fn write_split(dir: impl AsRef<Path>, split: &SplitDataset, manifest: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(MANIFEST_FILE), manifest)?;
    write_pairs(&dir.join(TRAIN_FILE), split.train.pairs())?;
    write_pairs(&dir.join(VALIDATION_FILE), split.validation_pairs())?;
    write_pairs(&dir.join(TEST_FILE), split.test_pairs())
}

pub fn read_split(dir: impl AsRef<Path>) -> Result<(SplitDataset, Manifest)> {
    let dir = dir.as_ref();
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let (m, n) = (manifest.num_users, manifest.num_items);
    let train = ImplicitDataset::new(m, n, read_pairs(&dir.join(TRAIN_FILE))?)?;
    let held_out = |file: &str| -> Result<Vec<Option<usize>>> {
        let path = dir.join(file);
        let mut out = vec![None; m];
        for (u, i) in read_pairs(&path)? {
            if u >= m || i >= n {
                return Err(Error::Format {
                    path: path.clone(),
                    msg: format!("pair ({u}, {i}) outside {m}x{n}"),
                });
            }
            out[u] = Some(i);
        }
        Ok(out)
    };
    let split = SplitDataset {
        train,
        validation: held_out(VALIDATION_FILE)?,
        test: held_out(TEST_FILE)?,
        skipped_users: manifest.skipped_users,
        seed: manifest.split_seed,
    };
    Ok((split, manifest))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: PathBuf::from(path),
        msg: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn recount(ds: &ImplicitDataset) -> Vec<usize> {
        let mut counts = vec![0; ds.num_items()];
        for (_, i) in ds.pairs() {
            counts[i] += 1;
        }
        counts
    }

    #[test]
    fn loads_three_line_tsv() {
        let f = tmp_file("0\t1\t5\n1\t2\t3\n2\t0\t4\n");
        let raw = load_ratings(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(raw.records[0], RawRecord { user: 0, item: 1, value: 5.0 });
        assert_eq!(raw.malformed, 0);
    }

    #[test]
    fn header_is_skipped() {
        let f = tmp_file("user,item,rating\n0,1,5\n1,1,2\n");
        let opts = LoadOptions {
            format: InputFormat::Csv,
            skip_header: true,
            ..LoadOptions::default()
        };
        let raw = load_ratings(f.path(), &opts).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.malformed, 0);
    }

    #[test]
    fn header_without_skip_counts_as_malformed() {
        let f = tmp_file("user,item,rating\n0,1,5\n");
        let opts = LoadOptions {
            format: InputFormat::Csv,
            ..LoadOptions::default()
        };
        let raw = load_ratings(f.path(), &opts).unwrap();
        assert_eq!(raw.len(), 1);
        assert_eq!(raw.malformed, 1);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = tmp_file("");
        let err = load_ratings(f.path(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoValidRecords(_)));
        assert!(err.to_string().contains("zero valid records"));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_ratings("/definitely/not/here.tsv", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn column_out_of_range() {
        let f = tmp_file("0\t1\n");
        let opts = LoadOptions {
            columns: ColumnMap { user: 0, item: 1, value: 5 },
            ..LoadOptions::default()
        };
        assert!(matches!(
            load_ratings(f.path(), &opts).unwrap_err(),
            Error::ColumnOutOfRange { column: 5, width: 2, .. }
        ));
    }

    #[test]
    fn duplicates_keep_last_and_nan_is_malformed() {
        let f = tmp_file("0\t1\t2\n0\t1\t5\nx\t1\t3\n1\t1\tNaN\n");
        let raw = load_ratings(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(raw.len(), 1);
        assert_eq!(raw.records[0].value, 5.0);
        assert_eq!(raw.malformed, 2);
    }

    #[test]
    fn dense_matrix_format() {
        let f = tmp_file("0 5 3\n4 0 0\n");
        let opts = LoadOptions {
            format: InputFormat::Dense,
            ..LoadOptions::default()
        };
        let raw = load_ratings(f.path(), &opts).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(raw.records[2], RawRecord { user: 1, item: 0, value: 4.0 });
    }

    #[test]
    fn binarize_thresholds() {
        let raw = RawRatings::from_records([
            RawRecord { user: 0, item: 0, value: 4.0 },
            RawRecord { user: 0, item: 1, value: 3.0 },
            RawRecord { user: 1, item: 1, value: 2.0 },
        ]);
        let ds = binarize(&raw, 4.0, 2, 2).unwrap();
        assert!(ds.contains(0, 0));
        assert!(!ds.contains(0, 1));
        assert!(!ds.contains(1, 1));
        // watch-ratio style threshold
        let ds = binarize(&raw, 2.0, 2, 2).unwrap();
        assert!(ds.contains(1, 1));
        assert_eq!(ds.item_counts(), &[1, 2]);
    }

    #[test]
    fn binarize_rejects_ids_beyond_dims() {
        let raw = RawRatings::from_records([RawRecord { user: 3, item: 0, value: 5.0 }]);
        assert!(matches!(
            binarize(&raw, 4.0, 2, 2),
            Err(Error::IdOutOfRange { kind: "user", .. })
        ));
        assert!(binarize(&raw, f64::NAN, 4, 2).is_err());
    }

    #[test]
    fn binarize_idempotent_on_binary_data() {
        let raw = RawRatings::from_records([
            RawRecord { user: 0, item: 0, value: 1.0 },
            RawRecord { user: 1, item: 2, value: 1.0 },
        ]);
        let once = binarize(&raw, 1.0, 2, 3).unwrap();
        let again_raw = RawRatings::from_records(once.pairs().map(|(u, i)| RawRecord {
            user: u as u64,
            item: i as u64,
            value: 1.0,
        }));
        assert_eq!(binarize(&again_raw, 0.5, 2, 3).unwrap(), once);
    }

    #[test]
    fn idmap_reindexes_densely() {
        let raw = RawRatings::from_records([
            RawRecord { user: 10, item: 7, value: 5.0 },
            RawRecord { user: 3, item: 9, value: 5.0 },
        ]);
        let map = IdMap::from_raw(&raw);
        assert_eq!(map.users, vec![3, 10]);
        let (re, dropped) = raw.reindex(&map);
        assert_eq!(dropped, 0);
        assert_eq!(re.records[0].user, 1);
        assert_eq!(re.records[0].item, 0);
    }

    fn user_with(n: usize) -> ImplicitDataset {
        ImplicitDataset::new(2, 10, (0..n).map(|i| (0, i)).chain([(1, 0), (1, 1)])).unwrap()
    }

    #[test]
    fn split_five_positives() {
        let split = leave_one_out_split(&user_with(5), 7).unwrap();
        assert_eq!(split.train.user_items(0).len(), 3);
        let (v, t) = (split.validation[0].unwrap(), split.test[0].unwrap());
        assert_ne!(v, t);
        assert!(!split.train.contains(0, v) && !split.train.contains(0, t));
        // two positives: ineligible
        assert_eq!(split.train.user_items(1), &[0, 1]);
        assert_eq!(split.validation[1], None);
        assert_eq!(split.skipped_users, 1);
        assert_eq!(split.train.item_counts(), recount(&split.train).as_slice());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = user_with(8);
        assert_eq!(
            leave_one_out_split(&ds, 3).unwrap(),
            leave_one_out_split(&ds, 3).unwrap()
        );
        assert!(leave_one_out_split(&ImplicitDataset::empty(2, 2), 0).is_err());
    }

    #[test]
    fn mix_identity_union_and_half() {
        let train = ImplicitDataset::new(10, 20, (0..10).map(|u| (u, u))).unwrap();
        let mar = ImplicitDataset::new(10, 20, (0..10).flat_map(|u| (10..20).map(move |i| (u, i)))).unwrap();
        assert_eq!(mix_mar(&train, &mar, 0.0, 1).unwrap(), train);
        let all = mix_mar(&train, &mar, 1.0, 1).unwrap();
        assert_eq!(all, train.union(&mar).unwrap());
        let half = mix_mar(&train, &mar, 0.5, 1).unwrap();
        let added = half.pairs().filter(|&(u, i)| !train.contains(u, i)).count();
        // brute-force count over the 100 disjoint MAR pairs
        let mar_members = half.pairs().filter(|&(u, i)| mar.contains(u, i)).count();
        assert_eq!(added, 50);
        assert_eq!(mar_members, 50);
        assert_eq!(half, mix_mar(&train, &mar, 0.5, 1).unwrap());
        assert!(mix_mar(&train, &mar, 1.5, 1).is_err());
        assert!(mix_mar(&train, &ImplicitDataset::empty(3, 20), 0.5, 1).is_err());
    }

    #[test]
    fn split_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let split = leave_one_out_split(&user_with(6), 11).unwrap();
        write_split(dir.path(), &split, &Manifest::for_split(&split)).unwrap();
        let (back, manifest) = read_split(dir.path()).unwrap();
        assert_eq!(back, split);
        assert_eq!(manifest.train_positives, 4 + 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset() -> impl Strategy<Value = ImplicitDataset> {
            proptest::collection::vec((0usize..12, 0usize..15), 1..120)
                .prop_map(|pairs| ImplicitDataset::new(12, 15, pairs).unwrap())
        }

        proptest! {
            #[test]
            fn item_counts_consistent(ds in dataset(), seed in any::<u64>()) {
                prop_assert_eq!(ds.item_counts().to_vec(), recount(&ds));
                prop_assert_eq!(ds.item_counts().iter().sum::<usize>(), ds.num_positives());
                let split = leave_one_out_split(&ds, seed).unwrap();
                prop_assert_eq!(split.train.item_counts().to_vec(), recount(&split.train));
            }

            #[test]
            fn split_conserves_eligible_positives(ds in dataset(), seed in any::<u64>()) {
                let split = leave_one_out_split(&ds, seed).unwrap();
                let eligible: Vec<usize> = (0..ds.num_users())
                    .filter(|&u| ds.user_items(u).len() >= MIN_SPLIT_POSITIVES)
                    .collect();
                let original: usize = eligible.iter().map(|&u| ds.user_items(u).len()).sum();
                let kept: usize = eligible.iter().map(|&u| split.train.user_items(u).len()).sum();
                prop_assert_eq!(kept + 2 * eligible.len(), original);
                for u in 0..ds.num_users() {
                    for held in [split.validation[u], split.test[u]].into_iter().flatten() {
                        prop_assert!(!split.train.contains(u, held));
                        prop_assert!(ds.contains(u, held));
                    }
                }
            }
        }
    }
}
