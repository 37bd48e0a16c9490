//! First-Fit-Decreasing sequence packing and the packed JSON file format.
//!
//! Items are sorted by length descending (ties broken by original index,
//! so packing is a pure function of its inputs) and each is placed into
//! the lowest-indexed bin with room, else a new bin. Bin totals never
//! exceed the capacity; samples longer than the capacity are rejected or
//! isolated per [`OversizePolicy`], never truncated.
//!
//! Each packed file holds one JSON document per bin with exactly two keys
//! in fixed order: `"data"` (the regrouped sample objects) and `"lengths"`
//! (the parallel list of original sequence lengths).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sample, TextTurn};

/// How to handle items longer than the bin capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversizePolicy {
    /// Fail, listing every offending item.
    Reject,
    /// Give each oversize item its own flagged bin, excluded from occupancy.
    Isolate,
}

/// One item to pack: an opaque payload plus its precomputed token length.
#[derive(Debug, Clone, PartialEq)]
pub struct PackItem<T> {
    pub payload: T,
    pub length: u64,
}

impl<T> PackItem<T> {
    pub fn new(payload: T, length: u64) -> Self {
        Self { payload, length }
    }
}

/// One packed bin. `lengths[i]` is the original sequence length of
/// `items[i]`; `total` is their sum and never exceeds the capacity unless
/// the bin is `isolated`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBin<T> {
    pub items: Vec<T>,
    pub lengths: Vec<u64>,
    pub total: u64,
    pub isolated: bool,
}

/// Exact occupancy ratio: used tokens over `bins * capacity`.
#[derive(Debug, Clone, Copy, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub used_tokens: u64,
    pub capacity_tokens: u64,
}

impl Occupancy {
    pub fn as_f64(&self) -> f64 {
        if self.capacity_tokens == 0 {
            0.0
        } else {
            self.used_tokens as f64 / self.capacity_tokens as f64
        }
    }
}

impl PartialEq for Occupancy {
    fn eq(&self, other: &Self) -> bool {
        // exact rational equality via cross-multiplication
        (self.used_tokens as u128) * (other.capacity_tokens as u128)
            == (other.used_tokens as u128) * (self.capacity_tokens as u128)
    }
}

/// Summary of one packing (or verification) run. Isolated bins count in
/// `oversize_count` and are excluded from `n_bins` and occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingReport {
    pub n_samples: u64,
    pub n_bins: u64,
    pub capacity: u64,
    pub occupancy: Occupancy,
    pub oversize_count: u64,
    pub oversize_policy: OversizePolicy,
}

impl PackingReport {
    pub fn occupancy_ratio(&self) -> f64 {
        self.occupancy.as_f64()
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("{} item(s) exceed capacity {capacity}: {}", offenders.len(),
            offenders.iter().map(|(i, l)| format!("#{i} len {l}")).collect::<Vec<_>>().join(", "))]
    Oversize { offenders: Vec<(usize, u64)>, capacity: u64 },
    #[error("item #{0} has zero length; zero-length samples must be rejected upstream")]
    ZeroLength(usize),
    #[error("shard size must be >= 1")]
    InvalidShardSize,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Max-remaining-capacity tournament tree over bin slots. `first_fit`
/// returns the lowest-indexed bin whose remaining capacity is >= `need`
/// in O(log n); slots for not-yet-created bins hold 0 and never match.
struct RemainingTree {
    leaves: usize,
    tree: Vec<u64>,
}

impl RemainingTree {
    fn new(max_bins: usize) -> Self {
        let leaves = max_bins.next_power_of_two().max(1);
        Self { leaves, tree: vec![0; 2 * leaves] }
    }

    fn set(&mut self, bin: usize, remaining: u64) {
        let mut p = self.leaves + bin;
        self.tree[p] = remaining;
        p /= 2;
        while p >= 1 {
            self.tree[p] = self.tree[2 * p].max(self.tree[2 * p + 1]);
            if p == 1 {
                break;
            }
            p /= 2;
        }
    }

    fn get(&self, bin: usize) -> u64 {
        self.tree[self.leaves + bin]
    }

    fn first_fit(&self, need: u64) -> Option<usize> {
        if self.tree[1] < need {
            return None;
        }
        let mut p = 1;
        while p < self.leaves {
            p = if self.tree[2 * p] >= need { 2 * p } else { 2 * p + 1 };
        }
        Some(p - self.leaves)
    }
}

/// First-Fit-Decreasing packing. Pure function of `(items, capacity,
/// policy)`: the output bin list and report are identical across reruns.
/// Regular bins come first in creation order; isolated oversize bins, if
/// any, follow.
pub fn pack_ffd<T>(
    items: Vec<PackItem<T>>,
    capacity: u64,
    policy: OversizePolicy,
) -> Result<(Vec<PackedBin<T>>, PackingReport), PackError> {
    let n_samples = items.len() as u64;
    for (i, item) in items.iter().enumerate() {
        if item.length == 0 {
            return Err(PackError::ZeroLength(i));
        }
    }
    if policy == OversizePolicy::Reject {
        let offenders: Vec<(usize, u64)> = items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.length > capacity)
            .map(|(i, it)| (i, it.length))
            .collect();
        if !offenders.is_empty() {
            return Err(PackError::Oversize { offenders, capacity });
        }
    }

    // sort by length descending, ties by original index ascending
    let mut order: Vec<(usize, u64)> =
        items.iter().map(|it| it.length).enumerate().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut payloads: Vec<Option<T>> = items.into_iter().map(|it| Some(it.payload)).collect();
    let mut bins: Vec<PackedBin<T>> = Vec::new();
    let mut isolated: Vec<PackedBin<T>> = Vec::new();
    let mut tree = RemainingTree::new(order.len());
    let mut created = 0usize;

    for (idx, length) in order {
        let payload = payloads[idx].take().expect("each item placed once");
        if length > capacity {
            isolated.push(PackedBin {
                items: vec![payload],
                lengths: vec![length],
                total: length,
                isolated: true,
            });
            continue;
        }
        match tree.first_fit(length) {
            Some(bin) => {
                tree.set(bin, tree.get(bin) - length);
                let b = &mut bins[bin];
                b.items.push(payload);
                b.lengths.push(length);
                b.total += length;
            }
            None => {
                tree.set(created, capacity - length);
                created += 1;
                bins.push(PackedBin {
                    items: vec![payload],
                    lengths: vec![length],
                    total: length,
                    isolated: false,
                });
            }
        }
    }

    let used_tokens: u64 = bins.iter().map(|b| b.total).sum();
    let report = PackingReport {
        n_samples,
        n_bins: bins.len() as u64,
        capacity,
        occupancy: Occupancy {
            used_tokens,
            capacity_tokens: bins.len() as u64 * capacity,
        },
        oversize_count: isolated.len() as u64,
        oversize_policy: policy,
    };
    bins.extend(isolated);
    Ok((bins, report))
}

/// The sample projection stored inside a packed file's `"data"` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSample {
    pub id: String,
    pub images: Vec<String>,
    pub text_turns: Vec<TextTurn>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl PackedSample {
    pub fn from_sample(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            images: s.images.clone(),
            text_turns: s.text_turns.clone(),
            metadata: s.metadata.clone(),
        }
    }
}

/// One packed-bin document as read back from disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PackedDocument {
    pub data: Vec<PackedSample>,
    pub lengths: Vec<u64>,
}

#[derive(Serialize)]
struct PackedSampleRef<'a> {
    id: &'a str,
    images: &'a [String],
    text_turns: &'a [TextTurn],
    metadata: &'a BTreeMap<String, serde_json::Value>,
}

// Field order fixes the serialized key order: `data` then `lengths`.
#[derive(Serialize)]
struct PackedDocumentRef<'a> {
    data: Vec<PackedSampleRef<'a>>,
    lengths: &'a [u64],
}

fn bin_document(bin: &PackedBin<Sample>) -> PackedDocumentRef<'_> {
    PackedDocumentRef {
        data: bin
            .items
            .iter()
            .map(|s| PackedSampleRef {
                id: &s.id,
                images: &s.images,
                text_turns: &s.text_turns,
                metadata: &s.metadata,
            })
            .collect(),
        lengths: &bin.lengths,
    }
}

/// File name for the `i`-th regular packed file.
pub fn packed_file_name(index: usize) -> String {
    format!("bin-{index:05}.json")
}

/// File name for the `i`-th isolated-oversize packed file. The prefix is
/// the on-disk marker that verification uses to exempt the file from the
/// capacity check and occupancy.
pub fn oversize_file_name(index: usize) -> String {
    format!("oversize-{index:05}.json")
}

fn is_oversize_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("oversize-"))
}

/// Writes bins under `out_dir`, `shard_size` bin documents per file
/// (newline-delimited when > 1). Regular bins go to `bin-*.json` in bin
/// order; isolated bins go one-per-file to `oversize-*.json`. Returns the
/// number of files written.
pub fn write_packed(
    bins: &[PackedBin<Sample>],
    out_dir: &Path,
    shard_size: usize,
) -> Result<usize, PackError> {
    if shard_size == 0 {
        return Err(PackError::InvalidShardSize);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| PackError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let (regular, isolated): (Vec<_>, Vec<_>) = bins.iter().partition(|b| !b.isolated);
    let mut files = 0usize;
    for (i, chunk) in regular.chunks(shard_size).enumerate() {
        let path = out_dir.join(packed_file_name(i));
        write_documents(&path, chunk)?;
        files += 1;
    }
    for (i, bin) in isolated.iter().enumerate() {
        let path = out_dir.join(oversize_file_name(i));
        write_documents(&path, std::slice::from_ref(bin))?;
        files += 1;
    }
    Ok(files)
}

fn write_documents(path: &Path, bins: &[&PackedBin<Sample>]) -> Result<(), PackError> {
    let io_err = |source| PackError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for bin in bins {
        let line = serde_json::to_string(&bin_document(bin)).map_err(|e| PackError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads every bin document from one packed file.
pub fn read_packed_file(path: &Path) -> Result<Vec<PackedDocument>, PackError> {
    let text = std::fs::read_to_string(path).map_err(|source| PackError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = Vec::new();
    for doc in serde_json::Deserializer::from_str(&text).into_iter::<PackedDocument>() {
        docs.push(doc.map_err(|e| PackError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?);
    }
    Ok(docs)
}

/// A problem found by [`verify_packing`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerifyFinding {
    CapacityViolation { path: PathBuf, total: u64, capacity: u64 },
    ParallelMismatch { path: PathBuf, data_len: usize, lengths_len: usize },
    Malformed { path: PathBuf, message: String },
}

/// Result of re-checking packed files on disk.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub report: PackingReport,
    pub findings: Vec<VerifyFinding>,
}

impl VerifyOutcome {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Re-parses packed files, recomputes bin totals from `"lengths"`, and
/// checks `total <= capacity` and `|data| == |lengths|` per bin. Files
/// named `oversize-*` are exempt from the capacity check and excluded
/// from occupancy, mirroring the isolate policy.
pub fn verify_packing(paths: &[PathBuf], capacity: u64) -> VerifyOutcome {
    let mut findings = Vec::new();
    let mut n_samples = 0u64;
    let mut n_bins = 0u64;
    let mut used_tokens = 0u64;
    let mut oversize_count = 0u64;

    for path in paths {
        let oversize = is_oversize_file(path);
        let docs = match read_packed_file(path) {
            Ok(docs) => docs,
            Err(e) => {
                findings.push(VerifyFinding::Malformed { path: path.clone(), message: e.to_string() });
                continue;
            }
        };
        for doc in docs {
            let total: u64 = doc.lengths.iter().sum();
            n_samples += doc.data.len() as u64;
            if doc.data.len() != doc.lengths.len() {
                findings.push(VerifyFinding::ParallelMismatch {
                    path: path.clone(),
                    data_len: doc.data.len(),
                    lengths_len: doc.lengths.len(),
                });
            }
            if oversize {
                oversize_count += 1;
                continue;
            }
            n_bins += 1;
            used_tokens += total;
            if total > capacity {
                findings.push(VerifyFinding::CapacityViolation {
                    path: path.clone(),
                    total,
                    capacity,
                });
            }
        }
    }

    VerifyOutcome {
        report: PackingReport {
            n_samples,
            n_bins,
            capacity,
            occupancy: Occupancy { used_tokens, capacity_tokens: n_bins * capacity },
            oversize_count,
            oversize_policy: OversizePolicy::Isolate,
        },
        findings,
    }
}

/// Packed files under `dir`, sorted by name for deterministic traversal.
pub fn list_packed_files(dir: &Path) -> Result<Vec<PathBuf>, PackError> {
    let entries = std::fs::read_dir(dir).map_err(|source| PackError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, Domain, Role};
    use proptest::prelude::*;

    fn items(lengths: &[u64]) -> Vec<PackItem<usize>> {
        lengths.iter().enumerate().map(|(i, &l)| PackItem::new(i, l)).collect()
    }

    fn bin_lengths<T>(bins: &[PackedBin<T>]) -> Vec<Vec<u64>> {
        bins.iter().map(|b| b.lengths.clone()).collect()
    }

    /// Literal first-fit scan, the oracle the tree-backed search must match.
    fn naive_ffd(lengths: &[u64], capacity: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<(usize, u64)> = lengths.iter().copied().enumerate().collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut bins: Vec<(u64, Vec<usize>)> = Vec::new();
        for (idx, len) in order {
            match bins.iter_mut().find(|(used, _)| *used + len <= capacity) {
                Some((used, members)) => {
                    *used += len;
                    members.push(idx);
                }
                None => bins.push((len, vec![idx])),
            }
        }
        bins.into_iter().map(|(_, members)| members).collect()
    }

    #[test]
    fn worked_example() {
        let (bins, report) = pack_ffd(items(&[2000, 1500, 1200, 900, 500]), 4096, OversizePolicy::Reject).unwrap();
        assert_eq!(bin_lengths(&bins), vec![vec![2000, 1500, 500], vec![1200, 900]]);
        assert_eq!(bins[0].total, 4000);
        assert_eq!(bins[1].total, 2100);
        assert_eq!(report.n_bins, 2);
        assert_eq!(report.occupancy, Occupancy { used_tokens: 6100, capacity_tokens: 8192 });
        assert!((report.occupancy_ratio() - 0.7446).abs() < 5e-5);
    }

    #[test]
    fn exact_fit_boundary() {
        let (bins, report) = pack_ffd(items(&[4096]), 4096, OversizePolicy::Reject).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(report.occupancy_ratio(), 1.0);
    }

    #[test]
    fn oversize_reject_names_offender() {
        let err = pack_ffd(items(&[5000]), 4096, OversizePolicy::Reject).unwrap_err();
        match err {
            PackError::Oversize { offenders, capacity } => {
                assert_eq!(offenders, vec![(0, 5000)]);
                assert_eq!(capacity, 4096);
            }
            other => panic!("expected oversize error, got {other}"),
        }
    }

    #[test]
    fn oversize_isolate_flags_and_excludes_from_occupancy() {
        let (bins, report) =
            pack_ffd(items(&[5000, 100, 200]), 4096, OversizePolicy::Isolate).unwrap();
        assert_eq!(report.n_bins, 1);
        assert_eq!(report.oversize_count, 1);
        assert_eq!(report.occupancy, Occupancy { used_tokens: 300, capacity_tokens: 4096 });
        let isolated: Vec<_> = bins.iter().filter(|b| b.isolated).collect();
        assert_eq!(isolated.len(), 1);
        assert_eq!(isolated[0].lengths, vec![5000]);
    }

    #[test]
    fn empty_input_is_empty_result() {
        let (bins, report) = pack_ffd(items(&[]), 4096, OversizePolicy::Reject).unwrap();
        assert!(bins.is_empty());
        assert_eq!(report.n_samples, 0);
        assert_eq!(report.occupancy.as_f64(), 0.0);
    }

    #[test]
    fn zero_length_is_rejected() {
        assert!(matches!(
            pack_ffd(items(&[10, 0]), 4096, OversizePolicy::Reject),
            Err(PackError::ZeroLength(1))
        ));
    }

    #[test]
    fn ties_break_by_original_index() {
        let (bins, _) = pack_ffd(items(&[50, 50, 50]), 100, OversizePolicy::Reject).unwrap();
        // items 0 and 1 share bin 0; item 2 opens bin 1
        assert_eq!(bins[0].items, vec![0, 1]);
        assert_eq!(bins[1].items, vec![2]);
    }

    #[test]
    fn tree_search_matches_naive_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for case in 0..500 {
            let n = rng.random_range(0..200);
            let capacity = rng.random_range(50..4096);
            let lengths: Vec<u64> = (0..n).map(|_| rng.random_range(1..=capacity)).collect();
            let (bins, _) = pack_ffd(items(&lengths), capacity, OversizePolicy::Reject).unwrap();
            let got: Vec<Vec<usize>> = bins.iter().map(|b| b.items.clone()).collect();
            assert_eq!(got, naive_ffd(&lengths, capacity), "case {case}");
        }
    }

    fn sample_with(id: &str, text: &str) -> Sample {
        Sample {
            id: id.into(),
            dataset_id: "ds".into(),
            images: vec![],
            text_turns: vec![TextTurn::new(Role::Caption, text)],
            category: Category::Interleaved,
            domain: Domain::Medical,
            modality_tag: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn write_worked_example_two_files_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<Sample> = [2000u64, 1500, 1200, 900, 500]
            .iter()
            .enumerate()
            .map(|(i, &l)| sample_with(&format!("s{i}"), &format!("len {l}")))
            .collect();
        let pack_items: Vec<PackItem<Sample>> = samples
            .iter()
            .cloned()
            .zip([2000u64, 1500, 1200, 900, 500])
            .map(|(s, l)| PackItem::new(s, l))
            .collect();
        let (bins, _) = pack_ffd(pack_items, 4096, OversizePolicy::Reject).unwrap();
        let files = write_packed(&bins, dir.path(), 1).unwrap();
        assert_eq!(files, 2);

        let first = std::fs::read_to_string(dir.path().join("bin-00000.json")).unwrap();
        assert!(first.contains("\"lengths\":[2000,1500,500]"));
        // key order: data before lengths
        assert!(first.find("\"data\"").unwrap() < first.find("\"lengths\"").unwrap());

        for (i, bin) in bins.iter().enumerate() {
            let docs = read_packed_file(&dir.path().join(packed_file_name(i))).unwrap();
            assert_eq!(docs.len(), 1);
            assert_eq!(docs[0].lengths, bin.lengths);
            let expected: Vec<PackedSample> =
                bin.items.iter().map(PackedSample::from_sample).collect();
            assert_eq!(docs[0].data, expected);
        }
    }

    #[test]
    fn write_empty_bin_list_writes_no_files() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(write_packed(&[], dir.path(), 1).unwrap(), 0);
        assert!(list_packed_files(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn sharded_write_groups_documents() {
        let dir = tempfile::tempdir().unwrap();
        let bins: Vec<PackedBin<Sample>> = (0..5)
            .map(|i| PackedBin {
                items: vec![sample_with(&format!("s{i}"), "x")],
                lengths: vec![10],
                total: 10,
                isolated: false,
            })
            .collect();
        assert_eq!(write_packed(&bins, dir.path(), 2).unwrap(), 3);
        let docs = read_packed_file(&dir.path().join("bin-00000.json")).unwrap();
        assert_eq!(docs.len(), 2);
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(outcome.is_clean());
        assert_eq!(outcome.report.n_bins, 5);
        assert_eq!(outcome.report.n_samples, 5);
    }

    #[test]
    fn verify_occupancy_of_worked_example() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bin-00000.json"),
            r#"{"data":[{"id":"a","images":[],"text_turns":[],"metadata":{}},{"id":"b","images":[],"text_turns":[],"metadata":{}},{"id":"c","images":[],"text_turns":[],"metadata":{}}],"lengths":[2000,1500,500]}"#,
        )
        .unwrap();
        std::fs::write(
            dir.path().join("bin-00001.json"),
            r#"{"data":[{"id":"d","images":[],"text_turns":[],"metadata":{}},{"id":"e","images":[],"text_turns":[],"metadata":{}}],"lengths":[1200,900]}"#,
        )
        .unwrap();
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(outcome.is_clean());
        assert_eq!(outcome.report.occupancy, Occupancy { used_tokens: 6100, capacity_tokens: 8192 });
        assert!((outcome.report.occupancy_ratio() - 0.7446).abs() < 5e-5);
    }

    #[test]
    fn verify_flags_capacity_violation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bin-00000.json"),
            r#"{"data":[{"id":"a","images":[],"text_turns":[],"metadata":{}}],"lengths":[5000]}"#,
        )
        .unwrap();
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(matches!(outcome.findings[0], VerifyFinding::CapacityViolation { total: 5000, .. }));
    }

    #[test]
    fn verify_flags_parallel_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bin-00000.json"),
            r#"{"data":[{"id":"a","images":[],"text_turns":[],"metadata":{}}],"lengths":[100,200]}"#,
        )
        .unwrap();
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(matches!(
            outcome.findings[0],
            VerifyFinding::ParallelMismatch { data_len: 1, lengths_len: 2, .. }
        ));
    }

    #[test]
    fn verify_exempts_oversize_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("oversize-00000.json"),
            r#"{"data":[{"id":"big","images":[],"text_turns":[],"metadata":{}}],"lengths":[9000]}"#,
        )
        .unwrap();
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(outcome.is_clean());
        assert_eq!(outcome.report.oversize_count, 1);
        assert_eq!(outcome.report.n_bins, 0);
    }

    #[test]
    fn verify_flags_malformed_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bin-00000.json"), "not json").unwrap();
        let outcome = verify_packing(&list_packed_files(dir.path()).unwrap(), 4096);
        assert!(matches!(outcome.findings[0], VerifyFinding::Malformed { .. }));
    }

    proptest! {
        // conservation: the multiset of payloads across bins equals the input
        #[test]
        fn conservation_and_capacity(
            lengths in proptest::collection::vec(1u64..600, 0..80),
            capacity in 600u64..2000,
        ) {
            let (bins, report) = pack_ffd(items(&lengths), capacity, OversizePolicy::Reject).unwrap();
            let mut seen: Vec<usize> = bins.iter().flat_map(|b| b.items.iter().copied()).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
            for b in &bins {
                prop_assert!(b.total <= capacity);
                prop_assert_eq!(b.total, b.lengths.iter().sum::<u64>());
                prop_assert_eq!(b.items.len(), b.lengths.len());
                prop_assert!(!b.items.is_empty());
            }
            prop_assert_eq!(report.n_samples as usize, lengths.len());
        }

        // determinism: identical inputs give identical outputs
        #[test]
        fn packing_is_deterministic(
            lengths in proptest::collection::vec(1u64..600, 0..60),
        ) {
            let a = pack_ffd(items(&lengths), 1000, OversizePolicy::Reject).unwrap();
            let b = pack_ffd(items(&lengths), 1000, OversizePolicy::Reject).unwrap();
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1, b.1);
        }

        // FFD never does worse than the one-sample-per-bin baseline
        #[test]
        fn occupancy_dominates_singleton_baseline(
            lengths in proptest::collection::vec(1u64..500, 2..40),
        ) {
            // pairwise-fitting instances: any two items share a bin
            let capacity = 1000u64;
            let (_, report) = pack_ffd(items(&lengths), capacity, OversizePolicy::Reject).unwrap();
            let total: u64 = lengths.iter().sum();
            let baseline = Occupancy { used_tokens: total, capacity_tokens: lengths.len() as u64 * capacity };
            prop_assert!(report.occupancy.as_f64() >= baseline.as_f64());
            // with >= 2 pairwise-fitting items FFD strictly beats it
            prop_assert!(report.n_bins < lengths.len() as u64);
        }
    }
}
