//! Run records: one row per trained-and-evaluated model.
//!
//! CSV is the canonical interchange format; the JSON form carries the same
//! flat rows under a `runs` key.

use log::warn;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const FORMAT_VERSION: &str = "1";

pub const CSV_COLUMNS: [&str; 14] = [
    "run_id",
    "family",
    "arch",
    "dataset",
    "samples_per_class",
    "seed",
    "n_params",
    "samples_seen",
    "flops",
    "score_v1",
    "score_v2",
    "score_v4",
    "score_it",
    "score_behavior",
];
pub const OPTIONAL_COLUMN: &str = "val_accuracy";

/// Scores this far outside `[0, 1]` are rejected; smaller excursions are clamped.
pub const SCORE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    V1,
    V2,
    V4,
    IT,
    Behavior,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::V1,
        Region::V2,
        Region::V4,
        Region::IT,
        Region::Behavior,
    ];
    pub const NEURAL: [Region; 4] = [Region::V1, Region::V2, Region::V4, Region::IT];

    pub fn column(self) -> &'static str {
        match self {
            Region::V1 => "score_v1",
            Region::V2 => "score_v2",
            Region::V4 => "score_v4",
            Region::IT => "score_it",
            Region::Behavior => "score_behavior",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::V1 => "V1",
            Region::V2 => "V2",
            Region::V4 => "V4",
            Region::IT => "IT",
            Region::Behavior => "behavior",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = RecordsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(Region::V1),
            "v2" => Ok(Region::V2),
            "v4" => Ok(Region::V4),
            "it" => Ok(Region::IT),
            "behavior" | "behaviour" => Ok(Region::Behavior),
            _ => Err(RecordsError::UnknownRegion(s.to_string())),
        }
    }
}

/// Images per class used for training; `Full` orders after every count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplesPerClass {
    Count(u64),
    Full,
}

impl Ord for SamplesPerClass {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (SamplesPerClass::Count(a), SamplesPerClass::Count(b)) => a.cmp(b),
            (SamplesPerClass::Count(_), SamplesPerClass::Full) => Ordering::Less,
            (SamplesPerClass::Full, SamplesPerClass::Count(_)) => Ordering::Greater,
            (SamplesPerClass::Full, SamplesPerClass::Full) => Ordering::Equal,
        }
    }
}

impl PartialOrd for SamplesPerClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SamplesPerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplesPerClass::Count(n) => write!(f, "{n}"),
            SamplesPerClass::Full => f.write_str("full"),
        }
    }
}

impl FromStr for SamplesPerClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("full") {
            return Ok(SamplesPerClass::Full);
        }
        match t.parse::<u64>() {
            Ok(n) if n >= 1 => Ok(SamplesPerClass::Count(n)),
            _ => Err(format!("expected a positive integer or \"full\", got {s:?}")),
        }
    }
}

impl Serialize for SamplesPerClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SamplesPerClass::Count(n) => s.serialize_u64(*n),
            SamplesPerClass::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for SamplesPerClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) if n >= 1 => Ok(SamplesPerClass::Count(n)),
            Raw::Int(n) => Err(serde::de::Error::custom(format!(
                "samples_per_class must be positive, got {n}"
            ))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub family: String,
    pub arch: String,
    pub dataset: String,
    pub samples_per_class: SamplesPerClass,
    pub seed: i64,
    pub n_params: u64,
    pub samples_seen: u64,
    pub flops: f64,
    pub scores: BTreeMap<Region, f64>,
    pub val_accuracy: Option<f64>,
}

impl RunRecord {
    pub fn score(&self, region: Region) -> Option<f64> {
        self.scores.get(&region).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub format_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub rows: Vec<RunRecord>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guess from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// A problem with a single input row. `row` is 1-based and counts data rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}, column {}: {}", self.row, self.column, self.message)
    }
}

fn join_rows(errors: &[RowError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing mandatory column {0:?}")]
    MissingColumn(String),
    #[error("{} malformed row(s): {}", .0.len(), join_rows(.0))]
    Rows(Vec<RowError>),
    #[error("duplicate run_id {run_id:?} (rows {first} and {second})")]
    DuplicateRunId {
        run_id: String,
        first: usize,
        second: usize,
    },
    #[error("unsupported format version {0:?}")]
    UnsupportedVersion(String),
    #[error("missing score for region {0}")]
    MissingRegion(Region),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("unknown filter rule {0:?}")]
    UnknownRule(String),
    #[error("no run with id {0:?}")]
    UnknownRunId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecordsError + '_ {
    move |source| RecordsError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Flat row shared by both file formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlatRow {
    run_id: String,
    family: String,
    arch: String,
    dataset: String,
    samples_per_class: SamplesPerClass,
    seed: i64,
    n_params: u64,
    samples_seen: u64,
    flops: f64,
    score_v1: Option<f64>,
    score_v2: Option<f64>,
    score_v4: Option<f64>,
    score_it: Option<f64>,
    score_behavior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    val_accuracy: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonTable {
    format_version: String,
    runs: Vec<FlatRow>,
}

impl From<&RunRecord> for FlatRow {
    fn from(r: &RunRecord) -> Self {
        FlatRow {
            run_id: r.run_id.clone(),
            family: r.family.clone(),
            arch: r.arch.clone(),
            dataset: r.dataset.clone(),
            samples_per_class: r.samples_per_class,
            seed: r.seed,
            n_params: r.n_params,
            samples_seen: r.samples_seen,
            flops: r.flops,
            score_v1: r.score(Region::V1),
            score_v2: r.score(Region::V2),
            score_v4: r.score(Region::V4),
            score_it: r.score(Region::IT),
            score_behavior: r.score(Region::Behavior),
            val_accuracy: r.val_accuracy,
        }
    }
}

fn check_score(row: usize, column: &str, value: f64, lo: f64, hi: f64) -> Result<f64, RowError> {
    if !value.is_finite() || value < lo - SCORE_TOLERANCE || value > hi + SCORE_TOLERANCE {
        return Err(RowError {
            row,
            column: column.to_string(),
            message: format!("value {value} outside [{lo}, {hi}]"),
        });
    }
    if value < lo || value > hi {
        warn!("row {row}, column {column}: value {value} clamped into [{lo}, {hi}]");
    }
    Ok(value.clamp(lo, hi))
}

fn validate_flat(row: usize, flat: FlatRow, errors: &mut Vec<RowError>) -> Option<RunRecord> {
    let before = errors.len();
    let mut push = |column: &str, message: String| {
        errors.push(RowError {
            row,
            column: column.to_string(),
            message,
        })
    };
    if flat.run_id.trim().is_empty() {
        push("run_id", "empty run_id".into());
    }
    if flat.n_params < 1 {
        push("n_params", "must be >= 1".into());
    }
    if flat.samples_seen < 1 {
        push("samples_seen", "must be >= 1".into());
    }
    if !(flat.flops > 0.0 && flat.flops.is_finite()) {
        push("flops", format!("must be positive, got {}", flat.flops));
    }
    let mut scores = BTreeMap::new();
    let raw = [
        (Region::V1, flat.score_v1),
        (Region::V2, flat.score_v2),
        (Region::V4, flat.score_v4),
        (Region::IT, flat.score_it),
        (Region::Behavior, flat.score_behavior),
    ];
    for (region, value) in raw {
        if let Some(v) = value {
            match check_score(row, region.column(), v, 0.0, 1.0) {
                Ok(v) => {
                    scores.insert(region, v);
                }
                Err(e) => errors.push(e),
            }
        }
    }
    let val_accuracy = match flat.val_accuracy {
        Some(v) => match check_score(row, OPTIONAL_COLUMN, v, 0.0, 1.0) {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(e);
                None
            }
        },
        None => None,
    };
    if errors.len() > before {
        return None;
    }
    Some(RunRecord {
        run_id: flat.run_id,
        family: flat.family,
        arch: flat.arch,
        dataset: flat.dataset,
        samples_per_class: flat.samples_per_class,
        seed: flat.seed,
        n_params: flat.n_params,
        samples_seen: flat.samples_seen,
        flops: flat.flops,
        scores,
        val_accuracy,
    })
}

struct RowParser<'a> {
    row: usize,
    rec: &'a csv::StringRecord,
    errs: Vec<RowError>,
}

impl RowParser<'_> {
    fn fail(&mut self, column: &str, message: String) {
        self.errs.push(RowError {
            row: self.row,
            column: column.to_string(),
            message,
        });
    }

    fn required(&mut self, idx: usize, column: &str) -> Option<String> {
        match self.rec.get(idx) {
            Some(v) if !v.is_empty() => Some(v.to_string()),
            _ => {
                self.fail(column, "empty value".into());
                None
            }
        }
    }

    fn parse<T: FromStr>(&mut self, idx: usize, column: &str, what: &str) -> Option<T> {
        let v = self.required(idx, column)?;
        match v.parse::<T>() {
            Ok(t) => Some(t),
            Err(_) => {
                self.fail(column, format!("cannot parse {v:?} as {what}"));
                None
            }
        }
    }

    fn optional_real(&mut self, idx: Option<usize>, column: &str) -> Option<f64> {
        let v = idx.and_then(|i| self.rec.get(i)).filter(|v| !v.is_empty())?;
        match v.parse::<f64>() {
            Ok(t) => Some(t),
            Err(_) => {
                let msg = format!("cannot parse {v:?} as real");
                self.fail(column, msg);
                None
            }
        }
    }
}

impl RunTable {
    pub fn new(rows: Vec<RunRecord>, source: impl Into<String>) -> Result<Self, RecordsError> {
        let table = RunTable {
            rows,
            provenance: Provenance {
                source: source.into(),
                format_version: FORMAT_VERSION.to_string(),
            },
        };
        table.check_unique()?;
        Ok(table)
    }

    fn check_unique(&self) -> Result<(), RecordsError> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            if let Some(first) = seen.insert(r.run_id.as_str(), i + 1) {
                return Err(RecordsError::DuplicateRunId {
                    run_id: r.run_id.clone(),
                    first,
                    second: i + 1,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self, RecordsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let index_of = |name: &str| headers.iter().position(|h| h == name);
        let mut idx = [0usize; 14];
        for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
            *slot = index_of(name).ok_or_else(|| RecordsError::MissingColumn(name.to_string()))?;
        }
        let val_idx = index_of(OPTIONAL_COLUMN);

        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    errors.push(RowError {
                        row,
                        column: "-".into(),
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let mut p = RowParser {
                row,
                rec: &rec,
                errs: Vec::new(),
            };
            let text = |p: &mut RowParser, k: usize| p.required(idx[k], CSV_COLUMNS[k]);
            let run_id = text(&mut p, 0);
            let family = text(&mut p, 1);
            let arch = text(&mut p, 2);
            let dataset = text(&mut p, 3);
            let spc = p.parse::<SamplesPerClass>(idx[4], CSV_COLUMNS[4], "positive integer or \"full\"");
            let seed = p.parse::<i64>(idx[5], CSV_COLUMNS[5], "integer");
            let n_params = p.parse::<u64>(idx[6], CSV_COLUMNS[6], "non-negative integer");
            let samples_seen = p.parse::<u64>(idx[7], CSV_COLUMNS[7], "non-negative integer");
            let flops = p.parse::<f64>(idx[8], CSV_COLUMNS[8], "real");
            let mut score = |k: usize| p.optional_real(Some(idx[k]), CSV_COLUMNS[k]);
            let s = [score(9), score(10), score(11), score(12), score(13)];
            let val = p.optional_real(val_idx, OPTIONAL_COLUMN);

            if !p.errs.is_empty() {
                errors.extend(p.errs);
                continue;
            }
            let flat = FlatRow {
                run_id: run_id.unwrap_or_default(),
                family: family.unwrap_or_default(),
                arch: arch.unwrap_or_default(),
                dataset: dataset.unwrap_or_default(),
                samples_per_class: spc.expect("checked"),
                seed: seed.expect("checked"),
                n_params: n_params.expect("checked"),
                samples_seen: samples_seen.expect("checked"),
                flops: flops.expect("checked"),
                score_v1: s[0],
                score_v2: s[1],
                score_v4: s[2],
                score_it: s[3],
                score_behavior: s[4],
                val_accuracy: val,
            };
            if let Some(r) = validate_flat(row, flat, &mut errors) {
                rows.push(r);
            }
        }
        if !errors.is_empty() {
            return Err(RecordsError::Rows(errors));
        }
        RunTable::new(rows, source)
    }

    pub fn from_json_reader<R: Read>(reader: R, source: &str) -> Result<Self, RecordsError> {
        let table: JsonTable = serde_json::from_reader(reader)?;
        if table.format_version != FORMAT_VERSION {
            return Err(RecordsError::UnsupportedVersion(table.format_version));
        }
        let mut errors = Vec::new();
        let rows: Vec<RunRecord> = table
            .runs
            .into_iter()
            .enumerate()
            .filter_map(|(i, flat)| validate_flat(i + 1, flat, &mut errors))
            .collect();
        if !errors.is_empty() {
            return Err(RecordsError::Rows(errors));
        }
        RunTable::new(rows, source)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RecordsError> {
        let with_val = self.rows.iter().any(|r| r.val_accuracy.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
        if with_val {
            header.push(OPTIONAL_COLUMN);
        }
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                r.run_id.clone(),
                r.family.clone(),
                r.arch.clone(),
                r.dataset.clone(),
                r.samples_per_class.to_string(),
                r.seed.to_string(),
                r.n_params.to_string(),
                r.samples_seen.to_string(),
                // Rust's shortest round-trip formatting: parses back bit-exactly.
                r.flops.to_string(),
            ];
            rec.extend(Region::ALL.iter().map(|&g| opt(r.score(g))));
            if with_val {
                rec.push(opt(r.val_accuracy));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| RecordsError::Io {
            path: self.provenance.source.clone(),
            source,
        })?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), RecordsError> {
        let table = JsonTable {
            format_version: FORMAT_VERSION.to_string(),
            runs: self.rows.iter().map(FlatRow::from).collect(),
        };
        serde_json::to_writer_pretty(writer, &table)?;
        Ok(())
    }

    /// Replace `region`'s score on row `run_id`.
    pub fn set_score(&mut self, run_id: &str, region: Region, value: f64) -> Result<(), RecordsError> {
        let row = self
            .rows
            .iter_mut()
            .find(|r| r.run_id == run_id)
            .ok_or_else(|| RecordsError::UnknownRunId(run_id.to_string()))?;
        let v = check_score(0, region.column(), value, 0.0, 1.0).map_err(|e| RecordsError::Rows(vec![e]))?;
        row.scores.insert(region, v);
        Ok(())
    }

    /// Collapse rows that differ only by seed into one row with mean scores.
    ///
    /// Grouping key is `(family, arch, dataset, samples_per_class)`. The merged
    /// row keeps the first member's id with a `+seedavg` suffix, seed `-1`, and
    /// the mean of `n_params`, `samples_seen` and `flops`.
    pub fn average_seeds(&self) -> RunTable {
        let mut order: Vec<(String, String, String, SamplesPerClass)> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
        for r in &self.rows {
            let key = (
                r.family.clone(),
                r.arch.clone(),
                r.dataset.clone(),
                r.samples_per_class,
            );
            let pos = match order.iter().position(|k| *k == key) {
                Some(p) => p,
                None => {
                    order.push(key);
                    order.len() - 1
                }
            };
            groups.entry(pos).or_default().push(r);
        }
        let rows = groups
            .into_values()
            .map(|members| {
                let first = members[0];
                if members.len() == 1 {
                    return first.clone();
                }
                let k = members.len() as f64;
                let mean_u = |f: fn(&RunRecord) -> u64| {
                    (members.iter().map(|r| f(r) as f64).sum::<f64>() / k).round() as u64
                };
                let mut scores = BTreeMap::new();
                for region in Region::ALL {
                    let vals: Vec<f64> = members.iter().filter_map(|r| r.score(region)).collect();
                    if !vals.is_empty() {
                        scores.insert(region, vals.iter().sum::<f64>() / vals.len() as f64);
                    }
                }
                let accs: Vec<f64> = members.iter().filter_map(|r| r.val_accuracy).collect();
                RunRecord {
                    run_id: format!("{}+seedavg", first.run_id),
                    family: first.family.clone(),
                    arch: first.arch.clone(),
                    dataset: first.dataset.clone(),
                    samples_per_class: first.samples_per_class,
                    seed: -1,
                    n_params: mean_u(|r| r.n_params).max(1),
                    samples_seen: mean_u(|r| r.samples_seen).max(1),
                    flops: members.iter().map(|r| r.flops).sum::<f64>() / k,
                    scores,
                    val_accuracy: if accs.is_empty() {
                        None
                    } else {
                        Some(accs.iter().sum::<f64>() / accs.len() as f64)
                    },
                }
            })
            .collect();
        RunTable {
            rows,
            provenance: self.provenance.clone(),
        }
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<RunTable, RecordsError> {
    let file = File::open(path).map_err(io_err(path))?;
    let source = path.display().to_string();
    match format {
        Format::Csv => RunTable::from_csv_reader(file, &source),
        Format::Json => RunTable::from_json_reader(file, &source),
    }
}

pub fn export(table: &RunTable, path: &Path, format: Format) -> Result<(), RecordsError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    match format {
        Format::Csv => table.write_csv(&mut w)?,
        Format::Json => table.write_json(&mut w)?,
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl AggregateScore {
    pub fn from_alignment(s: f64) -> Self {
        AggregateScore { s, l: 1.0 - s }
    }
}

/// Mean of the listed regions' scores.
pub fn aggregate_regions(
    scores: &BTreeMap<Region, f64>,
    regions: &[Region],
) -> Result<AggregateScore, RecordsError> {
    let mut sum = 0.0;
    for &r in regions {
        sum += scores.get(&r).ok_or(RecordsError::MissingRegion(r))?;
    }
    Ok(AggregateScore::from_alignment(sum / regions.len() as f64))
}

/// Alignment score S as the mean over V1, V2, V4, IT and behavior, with L = 1 - S.
pub fn aggregate_score(scores: &BTreeMap<Region, f64>) -> Result<AggregateScore, RecordsError> {
    aggregate_regions(scores, &Region::ALL)
}

/// Keeps rows of the listed families only when their `samples_per_class` is
/// allowed; rows from other families always pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterRule {
    pub families: Vec<String>,
    pub allowed: Vec<SamplesPerClass>,
}

impl FilterRule {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn convnext_vit_restricted() -> Self {
        FilterRule {
            families: vec!["ConvNeXt".into(), "ViT".into()],
            allowed: vec![SamplesPerClass::Count(300), SamplesPerClass::Full],
        }
    }

    pub fn by_name(name: &str) -> Result<Self, RecordsError> {
        match name {
            "convnext_vit_restricted" => Ok(Self::convnext_vit_restricted()),
            "none" | "" => Ok(Self::identity()),
            other => Err(RecordsError::UnknownRule(other.to_string())),
        }
    }

    pub fn keeps(&self, r: &RunRecord) -> bool {
        let restricted = self
            .families
            .iter()
            .any(|f| f.eq_ignore_ascii_case(&r.family));
        !restricted || self.allowed.contains(&r.samples_per_class)
    }
}

pub fn filter_for_fit(table: &RunTable, rule: &FilterRule) -> RunTable {
    RunTable {
        rows: table.rows.iter().filter(|r| rule.keeps(r)).cloned().collect(),
        provenance: table.provenance.clone(),
    }
}

/// Keep only rows whose family is in `families` (case-insensitive).
pub fn select_families(table: &RunTable, families: &[String]) -> RunTable {
    let set: HashSet<String> = families.iter().map(|f| f.to_ascii_lowercase()).collect();
    RunTable {
        rows: table
            .rows
            .iter()
            .filter(|r| set.contains(&r.family.to_ascii_lowercase()))
            .cloned()
            .collect(),
        provenance: table.provenance.clone(),
    }
}

/// Which score a curve is fit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Target {
    Region(Region),
    /// Mean of V1, V2, V4 and IT.
    Brain,
    /// Mean of all five benchmarks.
    Mean,
}

impl Target {
    pub fn regions(&self) -> &'static [Region] {
        match self {
            Target::Region(Region::V1) => &[Region::V1],
            Target::Region(Region::V2) => &[Region::V2],
            Target::Region(Region::V4) => &[Region::V4],
            Target::Region(Region::IT) => &[Region::IT],
            Target::Region(Region::Behavior) => &[Region::Behavior],
            Target::Brain => &Region::NEURAL,
            Target::Mean => &Region::ALL,
        }
    }

    /// Alignment and misalignment of one run under this target.
    pub fn score(&self, r: &RunRecord) -> Result<AggregateScore, RecordsError> {
        aggregate_regions(&r.scores, self.regions())
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Region(r) => f.write_str(&r.name().to_ascii_lowercase()),
            Target::Brain => f.write_str("brain"),
            Target::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for Target {
    type Err = RecordsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "brain" => Ok(Target::Brain),
            "mean" => Ok(Target::Mean),
            other => other.parse().map(Target::Region),
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Target {
    type Error = RecordsError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "run_id,family,arch,dataset,samples_per_class,seed,n_params,samples_seen,flops,score_v1,score_v2,score_v4,score_it,score_behavior,val_accuracy\n";

    fn parse(body: &str) -> Result<RunTable, RecordsError> {
        RunTable::from_csv_reader(format!("{HEADER}{body}").as_bytes(), "inline")
    }

    #[test]
    fn parses_reference_row() {
        let t = parse("r1,ResNet,resnet18,imagenet,full,0,11689512,128155776,9.2e15,0.31,0.29,0.40,0.38,0.35,0.70\n")
            .unwrap();
        let r = &t.rows[0];
        assert_eq!(r.n_params, 11_689_512);
        assert_eq!(r.samples_seen, 128_155_776);
        assert_eq!(r.flops, 9.2e15);
        assert_eq!(r.samples_per_class, SamplesPerClass::Full);
        assert_eq!(r.score(Region::IT), Some(0.38));
        assert_eq!(r.val_accuracy, Some(0.70));
    }

    #[test]
    fn duplicate_id_rejected() {
        let row = "r1,ResNet,resnet18,imagenet,full,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n";
        let err = parse(&format!("{row}{row}")).unwrap_err();
        assert!(matches!(err, RecordsError::DuplicateRunId { first: 1, second: 2, .. }));
    }

    #[test]
    fn out_of_range_score_rejected() {
        let err = parse("r1,ResNet,resnet18,imagenet,10,0,10,10,1e9,1.2,0.3,0.3,0.3,0.3,\n").unwrap_err();
        match err {
            RecordsError::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].row, 1);
                assert_eq!(rows[0].column, "score_v1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slightly_out_of_range_score_clamped() {
        let t = parse("r1,ResNet,resnet18,imagenet,10,0,10,10,1e9,1.03,-0.01,0.3,0.3,0.3,\n").unwrap();
        assert_eq!(t.rows[0].score(Region::V1), Some(1.0));
        assert_eq!(t.rows[0].score(Region::V2), Some(0.0));
    }

    #[test]
    fn malformed_rows_reported_with_position() {
        let body = "r1,ResNet,resnet18,imagenet,10,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n\
                    r2,ResNet,resnet18,imagenet,ten,0,10,10,abc,0.3,0.3,0.3,0.3,0.3,\n";
        match parse(body).unwrap_err() {
            RecordsError::Rows(rows) => {
                let cols: Vec<_> = rows.iter().map(|e| (e.row, e.column.as_str())).collect();
                assert_eq!(cols, vec![(2, "samples_per_class"), (2, "flops")]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let err = RunTable::from_csv_reader("run_id,family\nr1,ResNet\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, RecordsError::MissingColumn(c) if c == "arch"));
    }

    #[test]
    fn zero_params_rejected() {
        assert!(parse("r1,ResNet,resnet18,imagenet,10,0,0,10,1e9,0.3,0.3,0.3,0.3,0.3,\n").is_err());
        assert!(parse("r1,ResNet,resnet18,imagenet,10,0,10,10,0,0.3,0.3,0.3,0.3,0.3,\n").is_err());
    }

    #[test]
    fn full_sorts_after_counts() {
        let mut v = vec![
            SamplesPerClass::Full,
            SamplesPerClass::Count(300),
            SamplesPerClass::Count(1),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                SamplesPerClass::Count(1),
                SamplesPerClass::Count(300),
                SamplesPerClass::Full
            ]
        );
    }

    fn scores(v: [f64; 5]) -> BTreeMap<Region, f64> {
        Region::ALL.iter().copied().zip(v).collect()
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_score(&scores([0.5; 5])).unwrap();
        assert_eq!((a.s, a.l), (0.5, 0.5));
        let a = aggregate_score(&scores([0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        assert!((a.s - 0.4).abs() < 1e-15);
        assert!((a.l - 0.6).abs() < 1e-15);
        assert_eq!(a.l, 1.0 - a.s);
        let a = aggregate_score(&scores([1.0; 5])).unwrap();
        assert_eq!((a.s, a.l), (1.0, 0.0));
        let mut partial = scores([0.5; 5]);
        partial.remove(&Region::V4);
        assert!(matches!(
            aggregate_score(&partial),
            Err(RecordsError::MissingRegion(Region::V4))
        ));
    }

    fn table() -> RunTable {
        parse(
            "a,ViT,vit_s,imagenet,10,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n\
             b,ResNet,resnet18,imagenet,10,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n\
             c,ConvNeXt,convnext_t,imagenet,300,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n\
             d,ViT,vit_s,ecoset,full,0,10,10,1e9,0.3,0.3,0.3,0.3,0.3,\n",
        )
        .unwrap()
    }

    #[test]
    fn restricted_filter() {
        let t = table();
        let f = filter_for_fit(&t, &FilterRule::by_name("convnext_vit_restricted").unwrap());
        let ids: Vec<_> = f.rows.iter().map(|r| r.run_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "c", "d"]);
        assert_eq!(filter_for_fit(&f, &FilterRule::convnext_vit_restricted()), f);
        assert_eq!(filter_for_fit(&t, &FilterRule::identity()), t);
        assert!(matches!(
            FilterRule::by_name("bogus"),
            Err(RecordsError::UnknownRule(_))
        ));
    }

    #[test]
    fn seed_averaging() {
        let t = parse(
            "a,ResNet,r18,imagenet,10,0,10,100,1e9,0.2,0.2,0.2,0.2,0.2,\n\
             b,ResNet,r18,imagenet,10,1,10,100,1e9,0.4,0.4,0.4,0.4,0.4,\n\
             c,ResNet,r18,imagenet,full,0,10,1000,1e10,0.5,0.5,0.5,0.5,0.5,\n",
        )
        .unwrap();
        let avg = t.average_seeds();
        assert_eq!(avg.len(), 2);
        assert_eq!(avg.rows[0].run_id, "a+seedavg");
        assert!((avg.rows[0].score(Region::IT).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(avg.rows[1], t.rows[2]);
    }

    #[test]
    fn json_rejects_unknown_version() {
        let err = RunTable::from_json_reader(r#"{"format_version":"9","runs":[]}"#.as_bytes(), "x")
            .unwrap_err();
        assert!(matches!(err, RecordsError::UnsupportedVersion(_)));
    }

    #[test]
    fn targets() {
        let mut scores = BTreeMap::new();
        for (r, v) in Region::ALL.iter().zip([0.2, 0.3, 0.4, 0.5, 0.6]) {
            scores.insert(*r, v);
        }
        let mut row = parse("r1,ResNet,resnet18,imagenet,full,0,1,1,1,0,0,0,0,0,\n").unwrap().rows.remove(0);
        row.scores = scores;
        let brain: Target = "brain".parse().unwrap();
        assert!((brain.score(&row).unwrap().s - 0.35).abs() < 1e-15);
        let mean: Target = "mean".parse().unwrap();
        assert!((mean.score(&row).unwrap().l - 0.6).abs() < 1e-15);
        let it: Target = "IT".parse().unwrap();
        assert_eq!(it, Target::Region(Region::IT));
        assert_eq!(it.to_string(), "it");
        assert_eq!(serde_json::to_string(&Target::Region(Region::Behavior)).unwrap(), "\"behavior\"");
        assert!("v3".parse::<Target>().is_err());
    }
}
