//! Dataset ingestion: rating logs to binarized, filtered, split implicit
//! feedback with per-user sensitive-group labels.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seeding;
use crate::{FdaError, Result};

/// One raw rating record as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRating {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Supported rating-file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFormat {
    /// MovieLens `user::item::rating::timestamp` lines.
    MovielensDat,
    /// Tab- or whitespace-separated `user item rating [timestamp]` lines.
    Tsv,
}

impl std::str::FromStr for RatingFormat {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" => Ok(RatingFormat::MovielensDat),
            "tsv" => Ok(RatingFormat::Tsv),
            other => Err(FdaError::UnknownFormat(other.to_string())),
        }
    }
}

/// Split strategies for the interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// 80% train / 20% test, no validation.
    Ratio8020,
    /// 70% train / 10% validation / 20% test.
    Ratio701020,
}

impl SplitStrategy {
    fn fractions(self) -> (f64, f64) {
        // (test, validation)
        match self {
            SplitStrategy::Ratio8020 => (0.2, 0.0),
            SplitStrategy::Ratio701020 => (0.2, 0.1),
        }
    }
}

/// A fully prepared implicit-feedback corpus.
///
/// Interactions are stored as per-user sorted item lists; `train[u]` is the
/// clicked-item set of user `u`. `user_ids[u]` / `item_ids[v]` map dense
/// indices back to raw identifiers.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<Vec<u32>>,
    pub validation: Vec<Vec<u32>>,
    pub test: Vec<Vec<u32>>,
    pub group_label: Vec<u8>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl InteractionDataset {
    pub fn train_pair_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_pair_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn validation_pair_count(&self) -> usize {
        self.validation.iter().map(Vec::len).sum()
    }

    pub fn has_validation(&self) -> bool {
        self.validation.iter().any(|v| !v.is_empty())
    }

    /// Users of group `g` that have at least one training interaction.
    pub fn trainable_users(&self, g: u8) -> Vec<u32> {
        (0..self.num_users)
            .filter(|&u| self.group_label[u] == g && !self.train[u].is_empty())
            .map(|u| u as u32)
            .collect()
    }

    pub fn in_train(&self, u: u32, v: u32) -> bool {
        self.train[u as usize].binary_search(&v).is_ok()
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation found.
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 {
            return Err(FdaError::InvalidDataset("empty user or item set".into()));
        }
        let check_lists = |lists: &[Vec<u32>], name: &str| -> Result<()> {
            if lists.len() != self.num_users {
                return Err(FdaError::InvalidDataset(format!(
                    "{name} has {} user slots, expected {}",
                    lists.len(),
                    self.num_users
                )));
            }
            for (u, items) in lists.iter().enumerate() {
                for w in items.windows(2) {
                    if w[0] >= w[1] {
                        return Err(FdaError::InvalidDataset(format!(
                            "{name} list of user {u} not strictly sorted"
                        )));
                    }
                }
                if items.iter().any(|&v| v as usize >= self.num_items) {
                    return Err(FdaError::InvalidDataset(format!(
                        "{name} list of user {u} has out-of-range item"
                    )));
                }
            }
            Ok(())
        };
        check_lists(&self.train, "train")?;
        check_lists(&self.validation, "validation")?;
        check_lists(&self.test, "test")?;
        for u in 0..self.num_users {
            for v in self.test[u].iter().chain(self.validation[u].iter()) {
                if self.train[u].binary_search(v).is_ok() {
                    return Err(FdaError::InvalidDataset(format!(
                        "user {u}: item {v} appears in train and in a held-out split"
                    )));
                }
            }
            if self.train[u].is_empty() && !(self.test[u].is_empty() && self.validation[u].is_empty()) {
                return Err(FdaError::InvalidDataset(format!(
                    "user {u} has held-out records but no train records"
                )));
            }
        }
        if self.group_label.len() != self.num_users {
            return Err(FdaError::InvalidDataset("group_label length mismatch".into()));
        }
        for g in [0u8, 1u8] {
            if !self.group_label.contains(&g) {
                return Err(FdaError::EmptyGroup(g));
            }
        }
        Ok(())
    }
}

/// Reads a rating file in the declared format, in file order.
pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<Vec<RawRating>> {
    let file = File::open(path).map_err(|e| FdaError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FdaError::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: &str| FdaError::MalformedLine {
            path: path.to_path_buf(),
            line: lineno,
            message: msg.to_string(),
        };
        let fields: Vec<&str> = match format {
            RatingFormat::MovielensDat => line.split("::").collect(),
            RatingFormat::Tsv => line.split_whitespace().collect(),
        };
        if fields.len() < 3 {
            return Err(malformed("expected at least user, item, rating"));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| malformed("rating is not a number"))?;
        if !rating.is_finite() {
            return Err(malformed("rating is not finite"));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(malformed("empty user or item id"));
        }
        let timestamp = match fields.get(3) {
            Some(t) => Some(t.parse().map_err(|_| malformed("timestamp is not an integer"))?),
            None => None,
        };
        out.push(RawRating {
            user_id: fields[0].to_string(),
            item_id: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Keeps records with rating strictly greater than `threshold`, collapsing
/// duplicates to one pair. Pair order follows first appearance.
pub fn binarize(raw: &[RawRating], threshold: f64) -> Vec<(String, String)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in raw {
        if r.rating > threshold {
            let key = (r.user_id.clone(), r.item_id.clone());
            if seen.insert(key.clone()) {
                out.push(key);
            }
        }
    }
    out
}

/// Iteratively removes users and items with fewer than `k` interactions
/// until a fixed point. Duplicate pairs are collapsed first.
pub fn kcore_filter(pairs: &[(String, String)], k: usize) -> Vec<(String, String)> {
    assert!(k >= 1, "k must be at least 1");
    let mut pairs: Vec<(String, String)> = {
        let mut seen = HashSet::new();
        pairs
            .iter()
            .filter(|p| seen.insert((*p).clone()))
            .cloned()
            .collect()
    };
    loop {
        let mut user_deg: HashMap<String, usize> = HashMap::new();
        let mut item_deg: HashMap<String, usize> = HashMap::new();
        for (u, v) in &pairs {
            *user_deg.entry(u.clone()).or_default() += 1;
            *item_deg.entry(v.clone()).or_default() += 1;
        }
        let before = pairs.len();
        pairs.retain(|(u, v)| user_deg[u] >= k && item_deg[v] >= k);
        if pairs.len() == before {
            return pairs;
        }
    }
}

/// How held-out records are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each user's records are split at the ratio.
    PerUser,
    /// The ratio applies to the global record pool.
    Global,
}

/// Partitions of the interaction pairs before group labels are attached.
pub struct SplitPairs {
    pub train: Vec<(String, String)>,
    pub validation: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
    /// Users whose held-out records were folded back into train because the
    /// user disappeared from the training split.
    pub dropped_cold_users: Vec<String>,
}

/// Randomly partitions `pairs` at the strategy's ratios.
///
/// With [`SplitMode::PerUser`], each user's records are shuffled with a
/// per-user stream derived from `seed` and the raw user id, so the result
/// does not depend on input order. Users with too few records to populate a
/// held-out split keep those records in train.
pub fn split(
    pairs: &[(String, String)],
    strategy: SplitStrategy,
    mode: SplitMode,
    seed: u64,
) -> SplitPairs {
    assert!(!pairs.is_empty(), "cannot split an empty pair list");
    let (test_frac, val_frac) = strategy.fractions();

    let mut by_user: HashMap<&str, Vec<&str>> = HashMap::new();
    for (u, v) in pairs {
        by_user.entry(u.as_str()).or_default().push(v.as_str());
    }
    let mut users: Vec<&str> = by_user.keys().copied().collect();
    users.sort_unstable();

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();

    match mode {
        SplitMode::PerUser => {
            for uid in users {
                let mut items = by_user.remove(uid).unwrap();
                items.sort_unstable();
                items.dedup();
                let mut rng = seeding::stream(seed, &format!("split/{uid}"));
                items.shuffle(&mut rng);
                let n = items.len();
                let n_test = (n as f64 * test_frac).floor() as usize;
                let n_val = (n as f64 * val_frac).floor() as usize;
                let n_held = n_test + n_val;
                // never leave a user without train records
                let (n_test, n_val) = if n_held >= n { (0, 0) } else { (n_test, n_val) };
                for (i, item) in items.into_iter().enumerate() {
                    let pair = (uid.to_string(), item.to_string());
                    if i < n_test {
                        test.push(pair);
                    } else if i < n_test + n_val {
                        validation.push(pair);
                    } else {
                        train.push(pair);
                    }
                }
            }
        }
        SplitMode::Global => {
            let mut all: Vec<(String, String)> = Vec::with_capacity(pairs.len());
            for uid in users {
                let mut items = by_user.remove(uid).unwrap();
                items.sort_unstable();
                items.dedup();
                for item in items {
                    all.push((uid.to_string(), item.to_string()));
                }
            }
            let mut rng = seeding::stream(seed, "split/global");
            all.shuffle(&mut rng);
            let n = all.len();
            let n_test = (n as f64 * test_frac).floor() as usize;
            let n_val = (n as f64 * val_frac).floor() as usize;
            for (i, pair) in all.into_iter().enumerate() {
                if i < n_test {
                    test.push(pair);
                } else if i < n_test + n_val {
                    validation.push(pair);
                } else {
                    train.push(pair);
                }
            }
        }
    }

    // Drop held-out records of users absent from train (possible only in
    // global mode), folding them back into train instead of losing them
    // would re-bias the ratio, so they are removed and reported.
    let train_users: HashSet<&str> = train.iter().map(|(u, _)| u.as_str()).collect();
    let mut dropped: Vec<String> = Vec::new();
    let mut drop_cold = |part: &mut Vec<(String, String)>| {
        part.retain(|(u, _)| {
            let keep = train_users.contains(u.as_str());
            if !keep && !dropped.contains(u) {
                dropped.push(u.clone());
            }
            keep
        });
    };
    drop_cold(&mut validation);
    drop_cold(&mut test);
    dropped.sort_unstable();

    SplitPairs {
        train,
        validation,
        test,
        dropped_cold_users: dropped,
    }
}

/// Maps user profiles through an attribute mapping to {0,1} labels.
///
/// `users` is the full dense-indexed user id list; every user must have a
/// profile entry covered by the mapping, and both groups must be non-empty.
pub fn assign_groups(
    users: &[String],
    profiles: &HashMap<String, String>,
    mapping: &HashMap<String, u8>,
) -> Result<Vec<u8>> {
    let mut labels = Vec::with_capacity(users.len());
    let mut offenders = Vec::new();
    for uid in users {
        match profiles.get(uid).and_then(|a| mapping.get(a)) {
            Some(&g) => labels.push(g),
            None => offenders.push(uid.clone()),
        }
    }
    if !offenders.is_empty() {
        return Err(FdaError::UnmappedAttribute { offenders });
    }
    for g in [0u8, 1u8] {
        if !labels.contains(&g) {
            return Err(FdaError::EmptyGroup(g));
        }
    }
    Ok(labels)
}

/// Assembles split pairs and group labels into a dense-indexed dataset.
///
/// Dense indices are assigned in sorted raw-id order over the users and
/// items present in any split, independent of file order.
pub fn build_dataset(
    splits: &SplitPairs,
    profiles: &HashMap<String, String>,
    mapping: &HashMap<String, u8>,
) -> Result<InteractionDataset> {
    let mut user_ids: Vec<String> = splits
        .train
        .iter()
        .map(|(u, _)| u.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    user_ids.sort_unstable();
    let mut item_ids: Vec<String> = splits
        .train
        .iter()
        .chain(&splits.validation)
        .chain(&splits.test)
        .map(|(_, v)| v.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    item_ids.sort_unstable();

    let user_index: HashMap<&str, u32> = user_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let item_index: HashMap<&str, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();

    let num_users = user_ids.len();
    let to_lists = |pairs: &[(String, String)]| -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); num_users];
        for (u, v) in pairs {
            lists[user_index[u.as_str()] as usize].push(item_index[v.as_str()]);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        lists
    };

    let group_label = assign_groups(&user_ids, profiles, mapping)?;
    let ds = InteractionDataset {
        num_users,
        num_items: item_ids.len(),
        train: to_lists(&splits.train),
        validation: to_lists(&splits.validation),
        test: to_lists(&splits.test),
        group_label,
        user_ids,
        item_ids,
    };
    ds.validate()?;
    Ok(ds)
}

/// Reads a `(user_id, attribute)` profile file (whitespace separated, or
/// `::` separated when the extension is `.dat`).
pub fn load_profiles(path: &Path) -> Result<HashMap<String, String>> {
    let file = File::open(path).map_err(|e| FdaError::io(path, e))?;
    let reader = BufReader::new(file);
    let dat = path.extension().map(|e| e == "dat").unwrap_or(false);
    let mut out = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FdaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if dat {
            line.split("::").collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < 2 {
            return Err(FdaError::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "expected user_id and attribute".into(),
            });
        }
        out.insert(fields[0].to_string(), fields[1].to_string());
    }
    Ok(out)
}

/// Manifest written alongside a prepared dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub num_users: usize,
    pub num_items: usize,
    pub seed: u64,
    pub rating_threshold: f64,
    pub kcore: usize,
    pub strategy: SplitStrategy,
    pub split_mode: SplitMode,
    pub train_records: usize,
    pub validation_records: usize,
    pub test_records: usize,
    pub dropped_cold_users: Vec<String>,
}

pub const DATASET_SCHEMA_VERSION: u32 = 1;

fn write_pairs(path: &Path, lists: &[Vec<u32>]) -> Result<()> {
    let file = File::create(path).map_err(|e| FdaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, items) in lists.iter().enumerate() {
        for v in items {
            writeln!(w, "{u} {v}").map_err(|e| FdaError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| FdaError::io(path, e))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| FdaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| FdaError::io(path, e))?;
    }
    w.flush().map_err(|e| FdaError::io(path, e))
}

/// Writes the prepared-dataset directory: three interaction files, the
/// group-label file, id maps, and the manifest.
pub fn save_prepared(ds: &InteractionDataset, manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FdaError::io(dir, e))?;
    write_pairs(&dir.join("train.txt"), &ds.train)?;
    write_pairs(&dir.join("validation.txt"), &ds.validation)?;
    write_pairs(&dir.join("test.txt"), &ds.test)?;
    write_lines(
        &dir.join("groups.txt"),
        ds.group_label
            .iter()
            .enumerate()
            .map(|(u, g)| format!("{u} {g}")),
    )?;
    write_lines(&dir.join("user_ids.txt"), ds.user_ids.iter().cloned())?;
    write_lines(&dir.join("item_ids.txt"), ds.item_ids.iter().cloned())?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&manifest_path, json).map_err(|e| FdaError::io(&manifest_path, e))?;
    Ok(())
}

fn read_pairs(path: &Path, num_users: usize, num_items: usize) -> Result<Vec<Vec<u32>>> {
    let file = File::open(path).map_err(|e| FdaError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lists = vec![Vec::new(); num_users];
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| FdaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |msg: &str| FdaError::MalformedLine {
            path: path.to_path_buf(),
            line: idx + 1,
            message: msg.into(),
        };
        let mut it = line.split_whitespace();
        let u: usize = it
            .next()
            .ok_or_else(|| malformed("missing user index"))?
            .parse()
            .map_err(|_| malformed("bad user index"))?;
        let v: u32 = it
            .next()
            .ok_or_else(|| malformed("missing item index"))?
            .parse()
            .map_err(|_| malformed("bad item index"))?;
        if u >= num_users || v as usize >= num_items {
            return Err(malformed("index out of range"));
        }
        lists[u].push(v);
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    Ok(lists)
}

fn read_id_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| FdaError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| FdaError::io(path, e)))
        .collect()
}

/// Loads a prepared-dataset directory written by [`save_prepared`].
pub fn load_prepared(dir: &Path) -> Result<(InteractionDataset, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|e| FdaError::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&raw)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(FdaError::InvalidDataset(format!(
            "unsupported dataset schema version {}",
            manifest.schema_version
        )));
    }
    let (m, n) = (manifest.num_users, manifest.num_items);
    let groups_path = dir.join("groups.txt");
    let mut group_label = vec![0u8; m];
    {
        let file = File::open(&groups_path).map_err(|e| FdaError::io(&groups_path, e))?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| FdaError::io(&groups_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |msg: &str| FdaError::MalformedLine {
                path: groups_path.clone(),
                line: idx + 1,
                message: msg.into(),
            };
            let mut it = line.split_whitespace();
            let u: usize = it
                .next()
                .ok_or_else(|| malformed("missing user index"))?
                .parse()
                .map_err(|_| malformed("bad user index"))?;
            let g: u8 = it
                .next()
                .ok_or_else(|| malformed("missing label"))?
                .parse()
                .map_err(|_| malformed("bad label"))?;
            if u >= m || g > 1 {
                return Err(malformed("index or label out of range"));
            }
            group_label[u] = g;
        }
    }
    let ds = InteractionDataset {
        num_users: m,
        num_items: n,
        train: read_pairs(&dir.join("train.txt"), m, n)?,
        validation: read_pairs(&dir.join("validation.txt"), m, n)?,
        test: read_pairs(&dir.join("test.txt"), m, n)?,
        group_label,
        user_ids: read_id_lines(&dir.join("user_ids.txt"))?,
        item_ids: read_id_lines(&dir.join("item_ids.txt"))?,
    };
    ds.validate()?;
    Ok((ds, manifest))
}
