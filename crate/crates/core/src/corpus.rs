//! Image catalogs: provenance-tagged records, labeled study groups,
//! line-JSON manifests, balanced sampling and stratified splits.
//!
//! Manifests are immutable after construction. The on-disk format is one
//! header line (version, checksum, count) followed by one compact JSON
//! record per line: appendable, diff-able, streamable. The checksum is
//! SHA-256 over the canonical record lines, so byte-identical corpora
//! produce byte-identical manifests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Xray,
    Histology,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Xray => write!(f, "xray"),
            Modality::Histology => write!(f, "histology"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Real,
    Synthetic,
}

/// Origin of a synthetic record: which model and which checkpoint emitted it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub checkpoint_id: String,
}

/// One cataloged image, real or synthetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub modality: Modality,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    /// Label key -> value, e.g. "gender" -> "female", "class" -> "tumor".
    pub labels: BTreeMap<String, String>,
    pub split: Split,
    pub source_kind: SourceKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
}

impl ImageRecord {
    /// Provenance invariant: synthetic records carry it, real ones must not.
    pub fn validate(&self) -> Result<()> {
        match (self.source_kind, &self.provenance) {
            (SourceKind::Synthetic, None) => Err(Error::Label(format!(
                "synthetic record {} has no provenance",
                self.id
            ))),
            (SourceKind::Synthetic, Some(p)) if p.model_id.is_empty() || p.checkpoint_id.is_empty() => {
                Err(Error::Label(format!("synthetic record {} has empty provenance", self.id)))
            }
            (SourceKind::Real, Some(_)) => {
                Err(Error::Label(format!("real record {} must not carry provenance", self.id)))
            }
            _ => {
                if self.channels != 1 && self.channels != 3 {
                    return Err(Error::Label(format!(
                        "record {}: channels must be 1 or 3, got {}",
                        self.id, self.channels
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self, key: &str) -> Result<&str> {
        self.labels
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Label(format!("record {} has no label '{key}'", self.id)))
    }
}

/// An inclusive age range, e.g. 18..=19.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBin {
    pub lo: u32,
    pub hi: u32,
}

impl AgeBin {
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }

    pub fn contains(&self, age: u32) -> bool {
        age >= self.lo && age <= self.hi
    }
}

/// Regular two-year bins covering `[lo, hi]`, the homogeneous grouping.
pub fn regular_age_bins(lo: u32, hi: u32, width: u32) -> Vec<AgeBin> {
    let mut bins = Vec::new();
    let mut a = lo;
    while a + width - 1 <= hi {
        bins.push(AgeBin { lo: a, hi: a + width - 1 });
        a += width;
    }
    bins
}

/// A named labeled cohort: which label keys exist, which values they may
/// take, how ages are binned, and which records belong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGroup {
    pub name: String,
    /// Label key -> allowed values. Every label key present on a member
    /// must be declared here.
    pub schema: BTreeMap<String, Vec<String>>,
    /// Ordered, disjoint, inclusive age ranges; empty when the group does
    /// not use age labels.
    pub age_binning: Vec<AgeBin>,
    pub member_ids: Vec<String>,
    pub declared_train: usize,
    pub declared_test: usize,
}

impl StudyGroup {
    /// Structural invariants: bins disjoint and ordered.
    pub fn validate(&self) -> Result<()> {
        for pair in self.age_binning.windows(2) {
            if pair[0].hi >= pair[1].lo {
                return Err(Error::Config(format!(
                    "age bins must be disjoint and ordered: {} then {}",
                    pair[0].label(),
                    pair[1].label()
                )));
            }
        }
        for bin in &self.age_binning {
            if bin.lo > bin.hi {
                return Err(Error::Config(format!("age bin {} is inverted", bin.label())));
            }
        }
        Ok(())
    }

    /// Bin label for an age. An age outside every bin is a labeling
    /// error, never silently clamped.
    pub fn age_bin_label(&self, age: u32) -> Result<String> {
        self.age_binning
            .iter()
            .find(|b| b.contains(age))
            .map(AgeBin::label)
            .ok_or_else(|| Error::Label(format!("age {age} falls outside all bins of group {}", self.name)))
    }

    /// Check every member's label values against the schema.
    pub fn check_members(&self, manifest: &Manifest) -> Result<()> {
        self.validate()?;
        for id in &self.member_ids {
            let rec = manifest.get(id).ok_or_else(|| {
                Error::Label(format!("group {} lists unknown record {id}", self.name))
            })?;
            for (key, value) in &rec.labels {
                let allowed = self.schema.get(key).ok_or_else(|| {
                    Error::Label(format!("record {id} carries undeclared label key '{key}'"))
                })?;
                if !allowed.contains(value) {
                    return Err(Error::Label(format!(
                        "record {id}: value '{value}' not allowed for '{key}' in group {}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Immutable catalog of records with a content checksum.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    version: u32,
    records: Vec<ImageRecord>,
    checksum: String,
    index: HashMap<String, usize>,
}

impl Manifest {
    /// Build from records, enforcing unique ids and per-record invariants.
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            rec.validate()?;
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
        }
        let checksum = checksum_of(&records)?;
        Ok(Self { version: MANIFEST_VERSION, records, checksum, index })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.index.get(id).map(|i| &self.records[*i])
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// New manifest restricted to the given ids, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Manifest> {
        let records = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::Label(format!("unknown record id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(records)
    }

    /// New manifest with `split` reassigned from the two id sets.
    pub fn with_split(&self, train: &[String], test: &[String]) -> Result<Manifest> {
        let train: HashSet<&str> = train.iter().map(String::as_str).collect();
        let test: HashSet<&str> = test.iter().map(String::as_str).collect();
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if train.contains(r.id.as_str()) {
                    r.split = Split::Train;
                } else if test.contains(r.id.as_str()) {
                    r.split = Split::Test;
                }
                r
            })
            .collect();
        Manifest::new(records)
    }

    /// Serialize: header line then one record per line.
    pub fn to_line_json(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"manifest_version\":{},\"checksum\":\"{}\",\"record_count\":{}}}\n",
            self.version,
            self.checksum,
            self.records.len()
        ));
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse line-JSON, recomputing and verifying the checksum.
    pub fn from_line_json(text: &str) -> Result<Manifest> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let header: ManifestHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::Format(format!("bad manifest header: {e}")))?;
        if header.manifest_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                header.manifest_version
            )));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ImageRecord = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("bad record on line {}: {e}", i + 2)))?;
            records.push(rec);
        }
        if records.len() != header.record_count {
            return Err(Error::Format(format!(
                "record count mismatch: header says {}, found {}",
                header.record_count,
                records.len()
            )));
        }
        let manifest = Manifest::new(records)?;
        if manifest.checksum != header.checksum {
            return Err(Error::Format(format!(
                "checksum mismatch: header {}, recomputed {}",
                header.checksum, manifest.checksum
            )));
        }
        Ok(manifest)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_line_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_line_json(&text)
    }
}

#[derive(Deserialize)]
struct ManifestHeader {
    manifest_version: u32,
    checksum: String,
    record_count: usize,
}

/// SHA-256 over the canonical record lines (compact JSON + newline each).
fn checksum_of(records: &[ImageRecord]) -> Result<String> {
    let mut hasher = Sha256::new();
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| Error::Format(format!("record {} does not serialize: {e}", rec.id)))?;
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// How to derive a label value from a file's path relative to the ingest
/// root.
#[derive(Debug, Clone)]
pub enum LabelSource {
    /// Path component at this depth under the root (0 = first directory).
    DirComponent(usize),
    /// First capture group of this regex applied to the relative path.
    PathPattern(regex::Regex),
    /// A fixed value for every file.
    Fixed(String),
}

#[derive(Debug, Clone)]
pub struct LabelRule {
    pub key: String,
    pub source: LabelSource,
}

impl LabelRule {
    pub fn dir(key: &str, depth: usize) -> Self {
        Self { key: key.to_string(), source: LabelSource::DirComponent(depth) }
    }

    pub fn pattern(key: &str, re: &str) -> Result<Self> {
        let re = regex::Regex::new(re).map_err(|e| Error::Config(format!("bad label pattern: {e}")))?;
        Ok(Self { key: key.to_string(), source: LabelSource::PathPattern(re) })
    }

    pub fn fixed(key: &str, value: &str) -> Self {
        Self { key: key.to_string(), source: LabelSource::Fixed(value.to_string()) }
    }

    fn apply(&self, rel_path: &str) -> Result<String> {
        match &self.source {
            LabelSource::DirComponent(depth) => {
                let parts: Vec<&str> = rel_path.split('/').collect();
                // The file name itself never acts as a directory component.
                if *depth + 1 >= parts.len() {
                    return Err(Error::Label(format!(
                        "path '{rel_path}' has no directory component at depth {depth}"
                    )));
                }
                Ok(parts[*depth].to_string())
            }
            LabelSource::PathPattern(re) => re
                .captures(rel_path)
                .and_then(|c| c.get(1))
                .map(|m| m.as_str().to_string())
                .ok_or_else(|| {
                    Error::Label(format!("pattern '{re}' did not match path '{rel_path}'"))
                }),
            LabelSource::Fixed(v) => Ok(v.clone()),
        }
    }
}

/// One file that could not be ingested, and why. Never silently skipped.
#[derive(Debug, Clone, Serialize)]
pub struct Reject {
    pub path: String,
    pub reason: String,
}

/// Output of [`ingest_directory`].
#[derive(Debug)]
pub struct IngestReport {
    pub manifest: Manifest,
    pub rejects: Vec<Reject>,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// Walk `root`, decode every PNG/TIFF, and catalog one record per image.
///
/// Dimensions and channel counts come from the pixel data. Records are
/// ordered by relative path, so the same directory always yields a
/// byte-identical manifest. Undecodable files and label-rule misses land
/// in the rejects list; a duplicate id aborts the whole ingest.
pub fn ingest_directory(root: &Path, modality: Modality, rules: &[LabelRule]) -> Result<IngestReport> {
    if !root.is_dir() {
        return Err(Error::io(root, "ingest root does not exist or is not a directory"));
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext_ok = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if ext_ok {
            paths.push(entry.into_path());
        }
    }
    paths.sort();

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for path in paths {
        let rel = path
            .strip_prefix(root)
            .map_err(|e| Error::io(&path, e))?
            .to_string_lossy()
            .replace(std::path::MAIN_SEPARATOR, "/");
        match ingest_one(&path, &rel, modality, rules) {
            Ok(rec) => records.push(rec),
            Err(e) => rejects.push(Reject { path: rel, reason: e.to_string() }),
        }
    }
    let manifest = Manifest::new(records)?; // duplicate ids abort here
    Ok(IngestReport { manifest, rejects })
}

fn ingest_one(path: &Path, rel: &str, modality: Modality, rules: &[LabelRule]) -> Result<ImageRecord> {
    let img = crate::imageio::load(path)?;
    let mut labels = BTreeMap::new();
    for rule in rules {
        labels.insert(rule.key.clone(), rule.apply(rel)?);
    }
    let id = rel.rsplit_once('.').map(|(stem, _)| stem.to_string()).unwrap_or_else(|| rel.to_string());
    Ok(ImageRecord {
        id,
        path: path.to_string_lossy().into_owned(),
        modality,
        width: img.width() as u32,
        height: img.height() as u32,
        channels: img.channels() as u8,
        labels,
        split: Split::Train,
        source_kind: SourceKind::Real,
        provenance: None,
    })
}

/// Key for one occupied label combination, e.g. gender=female|age=18-19.
fn combination_key(rec: &ImageRecord, keys: &[String]) -> Result<String> {
    let mut parts = Vec::with_capacity(keys.len());
    for key in keys {
        parts.push(format!("{key}={}", rec.label(key)?));
    }
    Ok(parts.join("|"))
}

/// Draw `total` record ids balanced exactly over the occupied
/// combinations of `keys`. Selection is a deterministic function of the
/// seed (ChaCha8 shuffle of each combination's id-sorted members).
pub fn balanced_sample(
    manifest: &Manifest,
    keys: &[String],
    total: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for rec in manifest.records() {
        groups.entry(combination_key(rec, keys)?).or_default().push(rec.id.as_str());
    }
    if groups.is_empty() {
        return Err(Error::Precondition("cannot sample from an empty manifest".into()));
    }
    if total % groups.len() != 0 {
        return Err(Error::Precondition(format!(
            "total {total} not divisible by {} occupied combinations",
            groups.len()
        )));
    }
    let per = total / groups.len();
    for (combo, members) in &groups {
        if members.len() < per {
            return Err(Error::SampleDeficit {
                combination: combo.clone(),
                need: per,
                have: members.len(),
            });
        }
    }
    let mut rng = rng::derive(seed, "corpus/balanced_sample");
    let mut picked = Vec::with_capacity(total);
    for (_, mut members) in groups {
        members.sort_unstable();
        members.shuffle(&mut rng);
        picked.extend(members[..per].iter().map(|s| s.to_string()));
    }
    Ok(picked)
}

/// Disjoint, exhaustive train/test partition, stratified over
/// `stratify_keys`, with each stratum's test share within one record of
/// `test_fraction`. Deterministic in the seed.
pub fn split_train_test(
    manifest: &Manifest,
    test_fraction: f64,
    stratify_keys: &[String],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for rec in manifest.records() {
        let key = if stratify_keys.is_empty() {
            String::from("*")
        } else {
            combination_key(rec, stratify_keys)?
        };
        strata.entry(key).or_default().push(rec.id.as_str());
    }
    let mut rng = rng::derive(seed, "corpus/split_train_test");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (key, mut members) in strata {
        if members.len() < 2 {
            return Err(Error::Precondition(format!(
                "stratum {key} has fewer than 2 records"
            )));
        }
        members.sort_unstable();
        members.shuffle(&mut rng);
        let n = members.len();
        let want = (test_fraction * n as f64).round() as usize;
        let n_test = want.clamp(1, n - 1);
        for (i, id) in members.into_iter().enumerate() {
            if i < n_test {
                test.push(id.to_string());
            } else {
                train.push(id.to_string());
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn record(id: &str, labels: &[(&str, &str)]) -> ImageRecord {
        ImageRecord {
            id: id.to_string(),
            path: format!("img/{id}.png"),
            modality: Modality::Xray,
            width: 32,
            height: 32,
            channels: 1,
            labels: labels.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            split: Split::Train,
            source_kind: SourceKind::Real,
            provenance: None,
        }
    }

    fn two_class_manifest(a: usize, b: usize) -> Manifest {
        let mut records = Vec::new();
        for i in 0..a {
            records.push(record(&format!("a{i:03}"), &[("class", "A")]));
        }
        for i in 0..b {
            records.push(record(&format!("b{i:03}"), &[("class", "B")]));
        }
        Manifest::new(records).unwrap()
    }

    #[test]
    fn provenance_invariants_enforced() {
        let mut synth = record("s0", &[]);
        synth.source_kind = SourceKind::Synthetic;
        assert!(synth.validate().is_err());
        synth.provenance = Some(Provenance { model_id: "m".into(), checkpoint_id: "c".into() });
        assert!(synth.validate().is_ok());

        let mut real = record("r0", &[]);
        real.provenance = Some(Provenance { model_id: "m".into(), checkpoint_id: "c".into() });
        assert!(real.validate().is_err());
    }

    #[test]
    fn duplicate_ids_are_a_hard_failure() {
        let recs = vec![record("x", &[]), record("x", &[])];
        assert!(matches!(Manifest::new(recs), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn manifest_line_json_round_trips() {
        let m = two_class_manifest(3, 2);
        let text = m.to_line_json();
        let back = Manifest::from_line_json(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.checksum(), back.checksum());
    }

    #[test]
    fn tampered_manifest_fails_checksum() {
        let m = two_class_manifest(2, 2);
        let text = m.to_line_json().replace("\"width\":32", "\"width\":33");
        assert!(matches!(Manifest::from_line_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn balanced_sample_is_exactly_uniform() {
        let m = two_class_manifest(100, 50);
        let ids = balanced_sample(&m, &["class".to_string()], 80, 1).unwrap();
        assert_eq!(ids.len(), 80);
        let a = ids.iter().filter(|id| id.starts_with('a')).count();
        assert_eq!(a, 40);
        let uniq: BTreeSet<_> = ids.iter().collect();
        assert_eq!(uniq.len(), 80);
    }

    #[test]
    fn balanced_sample_reports_the_deficit() {
        let m = two_class_manifest(100, 50);
        match balanced_sample(&m, &["class".to_string()], 120, 1) {
            Err(Error::SampleDeficit { combination, need, have }) => {
                assert_eq!(combination, "class=B");
                assert_eq!((need, have), (60, 50));
            }
            other => panic!("expected deficit error, got {other:?}"),
        }
    }

    #[test]
    fn balanced_sample_is_deterministic_in_seed() {
        let m = two_class_manifest(40, 40);
        let a = balanced_sample(&m, &["class".to_string()], 20, 9).unwrap();
        let b = balanced_sample(&m, &["class".to_string()], 20, 9).unwrap();
        let c = balanced_sample(&m, &["class".to_string()], 20, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_a_partition_with_expected_sizes() {
        let m = two_class_manifest(10, 0);
        let (train, test) = split_train_test(&m, 0.2, &[], 5).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let all: BTreeSet<_> = train.iter().chain(test.iter()).collect();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn stratified_split_hits_per_class_counts() {
        let m = two_class_manifest(50, 50);
        let (train, test) = split_train_test(&m, 0.1, &["class".to_string()], 3).unwrap();
        assert_eq!(test.len(), 10);
        assert_eq!(train.len(), 90);
        let test_a = test.iter().filter(|id| id.starts_with('a')).count();
        assert_eq!(test_a, 5);
    }

    #[test]
    fn tiny_stratum_is_an_error() {
        let m = two_class_manifest(5, 1);
        assert!(split_train_test(&m, 0.5, &["class".to_string()], 1).is_err());
    }

    #[test]
    fn age_bins_validate_and_label() {
        let group = StudyGroup {
            name: "xnorm".into(),
            schema: BTreeMap::new(),
            age_binning: vec![
                AgeBin { lo: 18, hi: 19 },
                AgeBin { lo: 20, hi: 21 },
                AgeBin { lo: 22, hi: 23 },
            ],
            member_ids: vec![],
            declared_train: 0,
            declared_test: 0,
        };
        group.validate().unwrap();
        assert_eq!(group.age_bin_label(19).unwrap(), "18-19");
        assert_eq!(group.age_bin_label(22).unwrap(), "22-23");
        assert!(group.age_bin_label(30).is_err()); // outside all bins: error, not clamp

        let mut bad = group.clone();
        bad.age_binning[1] = AgeBin { lo: 19, hi: 21 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn irregular_bins_accepted_when_ordered() {
        // The non-homogeneous grouping: narrow bins young, wide bins old.
        let bins = vec![
            AgeBin { lo: 18, hi: 19 },
            AgeBin { lo: 20, hi: 21 },
            AgeBin { lo: 40, hi: 44 },
            AgeBin { lo: 67, hi: 77 },
        ];
        let group = StudyGroup {
            name: "xnorm-l".into(),
            schema: BTreeMap::new(),
            age_binning: bins,
            member_ids: vec![],
            declared_train: 0,
            declared_test: 0,
        };
        group.validate().unwrap();
        assert_eq!(group.age_bin_label(70).unwrap(), "67-77");
    }

    #[test]
    fn schema_violations_are_caught() {
        let m = two_class_manifest(2, 0);
        let mut schema = BTreeMap::new();
        schema.insert("class".to_string(), vec!["A".to_string()]);
        let group = StudyGroup {
            name: "g".into(),
            schema,
            age_binning: vec![],
            member_ids: vec!["a000".into(), "a001".into()],
            declared_train: 1,
            declared_test: 1,
        };
        group.check_members(&m).unwrap();

        let mut schema = BTreeMap::new();
        schema.insert("class".to_string(), vec!["B".to_string()]);
        let bad = StudyGroup { schema, ..group };
        assert!(bad.check_members(&m).is_err());
    }

    #[test]
    fn regular_bins_cover_the_paper_range() {
        let bins = regular_age_bins(18, 68, 2);
        assert_eq!(bins.first().unwrap().label(), "18-19");
        assert_eq!(bins.last().unwrap().label(), "66-67");
        assert_eq!(bins.len(), 25);
    }
}
