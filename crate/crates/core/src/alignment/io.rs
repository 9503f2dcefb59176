//! CSV readers and writers for benchmark matrices, labels and behavioral
//! patterns.
//!
//! Matrix files carry a header `stim_id,<col>,<col>,...` followed by one row per
//! stimulus. Label files are `stim_id,label`. Pattern files are
//! `image_id,class,probability` with one row per (test image, incorrect class).

use super::{AlignmentError, BehaviorData, BenchmarkData};
use crate::records::Region;
use nalgebra::DMatrix;
use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

fn file_err(path: &Path, message: impl Into<String>) -> AlignmentError {
    AlignmentError::File {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, AlignmentError> {
    let f = File::open(path).map_err(|e| file_err(path, e.to_string()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

/// A labelled real matrix read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_matrix_csv(path: &Path) -> Result<LabeledMatrix, AlignmentError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| file_err(path, e.to_string()))?.clone();
    if header.get(0) != Some("stim_id") {
        return Err(file_err(path, "first column must be stim_id"));
    }
    if header.len() < 2 {
        return Err(file_err(path, "no value columns"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| file_err(path, e.to_string()))?;
        let row = i + 2;
        if rec.len() != header.len() {
            return Err(file_err(path, format!("row {row}: expected {} fields, got {}", header.len(), rec.len())));
        }
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(file_err(path, format!("row {row}: duplicate stim_id {id:?}")));
        }
        ids.push(id);
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| file_err(path, format!("row {row}, column {}: not a number: {field:?}", columns[j])))?;
            if !v.is_finite() {
                return Err(file_err(path, format!("row {row}, column {}: non-finite value", columns[j])));
            }
            data.push(v);
        }
    }
    if ids.is_empty() {
        return Err(file_err(path, "no data rows"));
    }
    let values = DMatrix::from_row_slice(ids.len(), columns.len(), &data);
    Ok(LabeledMatrix { ids, columns, values })
}

/// Write a matrix with columns named `<prefix>0, <prefix>1, ...`.
pub fn write_matrix_csv<W: Write>(w: W, ids: &[String], m: &DMatrix<f64>, prefix: &str) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["stim_id".to_string()];
    header.extend((0..m.ncols()).map(|j| format!("{prefix}{j}")));
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(m.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Pair an activation file with a recording file by `stim_id`.
///
/// Recording rows are reordered to match the activation file. Both files must
/// name exactly the same stimuli.
pub fn load_benchmark(
    activations: &Path,
    recordings: &Path,
    ceiling: f64,
    region: Region,
) -> Result<BenchmarkData, AlignmentError> {
    if region == Region::Behavior {
        return Err(AlignmentError::UnknownRegion("behavior is not a neural region".into()));
    }
    let act = read_matrix_csv(activations)?;
    let rec = read_matrix_csv(recordings)?;
    if act.ids.len() != rec.ids.len() {
        return Err(AlignmentError::Shape(format!(
            "activations have {} stimuli, recordings have {}",
            act.ids.len(),
            rec.ids.len()
        )));
    }
    let index: HashMap<&str, usize> = rec.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut order = Vec::with_capacity(act.ids.len());
    for id in &act.ids {
        let i = index
            .get(id.as_str())
            .ok_or_else(|| AlignmentError::Shape(format!("stimulus {id:?} missing from recordings")))?;
        order.push(*i);
    }
    let data = BenchmarkData {
        stimulus_ids: act.ids,
        activations: act.values,
        recordings: rec.values.select_rows(&order),
        ceiling,
        region,
    };
    data.validate()?;
    Ok(data)
}

/// Read `stim_id,label` rows in file order.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, String)>, AlignmentError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| file_err(path, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["stim_id", "label"] {
        return Err(file_err(path, "header must be stim_id,label"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| file_err(path, e.to_string()))?;
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

/// Class order used for the pattern: numeric when every label parses as an
/// integer, lexicographic otherwise.
pub fn class_order(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let set: BTreeSet<String> = labels.into_iter().collect();
    let mut v: Vec<String> = set.into_iter().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    v
}

fn labels_for(
    matrix: &LabeledMatrix,
    labels: &[(String, String)],
    classes: &HashMap<&str, usize>,
    path: &Path,
) -> Result<Vec<usize>, AlignmentError> {
    let map: HashMap<&str, &str> = labels.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    matrix
        .ids
        .iter()
        .map(|id| {
            let lab = map
                .get(id.as_str())
                .ok_or_else(|| file_err(path, format!("no label for stimulus {id:?}")))?;
            classes
                .get(lab)
                .copied()
                .ok_or_else(|| AlignmentError::MissingClass(lab.to_string()))
        })
        .collect()
}

/// Paths for the behavioral benchmark inputs.
#[derive(Debug, Clone)]
pub struct BehaviorFiles<'a> {
    pub train_features: &'a Path,
    pub train_labels: &'a Path,
    pub test_features: &'a Path,
    pub test_labels: &'a Path,
    pub pattern: &'a Path,
}

/// Load the behavioral benchmark and align the reference pattern to the test
/// image order, incorrect classes ascending.
pub fn load_behavior(files: &BehaviorFiles<'_>, ceiling: f64) -> Result<BehaviorData, AlignmentError> {
    let train = read_matrix_csv(files.train_features)?;
    let test = read_matrix_csv(files.test_features)?;
    if train.values.ncols() != test.values.ncols() {
        return Err(AlignmentError::Shape(format!(
            "train has {} features, test has {}",
            train.values.ncols(),
            test.values.ncols()
        )));
    }
    let train_lab = read_labels_csv(files.train_labels)?;
    let test_lab = read_labels_csv(files.test_labels)?;
    let class_names = class_order(train_lab.iter().map(|(_, l)| l.clone()));
    let classes: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let train_labels = labels_for(&train, &train_lab, &classes, files.train_labels)?;
    let test_labels = labels_for(&test, &test_lab, &classes, files.test_labels)?;

    let entries = read_pattern_csv(files.pattern)?;
    let mut lookup: HashMap<(&str, &str), f64> = HashMap::with_capacity(entries.len());
    for (img, class, p) in &entries {
        if !classes.contains_key(class.as_str()) {
            return Err(file_err(files.pattern, format!("unknown class {class:?}")));
        }
        if lookup.insert((img.as_str(), class.as_str()), *p).is_some() {
            return Err(file_err(files.pattern, format!("duplicate entry for ({img}, {class})")));
        }
    }
    let k = class_names.len();
    let mut pattern = Vec::with_capacity(test.ids.len() * (k - 1));
    let mut used = 0;
    for (id, &t) in test.ids.iter().zip(&test_labels) {
        for (c, name) in class_names.iter().enumerate() {
            if c == t {
                continue;
            }
            let p = lookup
                .get(&(id.as_str(), name.as_str()))
                .ok_or_else(|| file_err(files.pattern, format!("missing entry for ({id}, {name})")))?;
            pattern.push(*p);
            used += 1;
        }
    }
    // Rows for the correct class are tolerated; anything else is unexpected.
    let correct_rows = test
        .ids
        .iter()
        .zip(&test_labels)
        .filter(|(id, &t)| lookup.contains_key(&(id.as_str(), class_names[t].as_str())))
        .count();
    if used + correct_rows != entries.len() {
        return Err(AlignmentError::PatternLength {
            got: entries.len() - correct_rows,
            expected: used,
        });
    }
    let data = BehaviorData {
        train_features: train.values,
        train_labels,
        test_features: test.values,
        test_labels,
        n_classes: k,
        primate_pattern: pattern,
        ceiling,
        class_names,
    };
    Ok(data)
}

pub fn read_pattern_csv(path: &Path) -> Result<Vec<(String, String, f64)>, AlignmentError> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| file_err(path, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["image_id", "class", "probability"] {
        return Err(file_err(path, "header must be image_id,class,probability"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| file_err(path, e.to_string()))?;
        let p: f64 = rec[2]
            .parse()
            .map_err(|_| file_err(path, format!("row {}: bad probability {:?}", i + 2, &rec[2])))?;
        if !p.is_finite() {
            return Err(file_err(path, format!("row {}: non-finite probability", i + 2)));
        }
        out.push((rec[0].to_string(), rec[1].to_string(), p));
    }
    Ok(out)
}

/// Write a pattern in the canonical order: image-major, incorrect classes ascending.
pub fn write_pattern_csv<W: Write>(
    w: W,
    image_ids: &[String],
    test_labels: &[usize],
    class_names: &[String],
    pattern: &[f64],
) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["image_id", "class", "probability"])?;
    let mut k = 0;
    for (id, &t) in image_ids.iter().zip(test_labels) {
        for (c, name) in class_names.iter().enumerate() {
            if c == t {
                continue;
            }
            wtr.write_record([id.as_str(), name.as_str(), &pattern[k].to_string()])?;
            k += 1;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_labels_csv<W: Write>(w: W, ids: &[String], labels: &[usize], class_names: &[String]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["stim_id", "label"])?;
    for (id, &l) in ids.iter().zip(labels) {
        wtr.write_record([id.as_str(), class_names[l].as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn ids(n: usize, p: &str) -> Vec<String> {
        (0..n).map(|i| format!("{p}{i}")).collect()
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_fn(4, 3, |i, j| (i as f64) * 0.1 + j as f64 / 3.0);
        write_matrix_csv(File::create(&path).unwrap(), &ids(4, "s"), &m, "f").unwrap();
        let back = read_matrix_csv(&path).unwrap();
        assert_eq!(back.values, m);
        assert_eq!(back.columns, vec!["f0", "f1", "f2"]);
    }

    #[test]
    fn recordings_are_reordered_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let r = dir.path().join("r.csv");
        let n = 25;
        let x = DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        write_matrix_csv(File::create(&a).unwrap(), &ids(n, "s"), &x, "f").unwrap();
        let mut rev_ids = ids(n, "s");
        rev_ids.reverse();
        let rev: Vec<usize> = (0..n).rev().collect();
        let y = x.select_rows(&rev);
        write_matrix_csv(File::create(&r).unwrap(), &rev_ids, &y, "n").unwrap();
        let data = load_benchmark(&a, &r, 0.8, Region::V4).unwrap();
        assert_eq!(data.activations, data.recordings);
    }

    #[test]
    fn mismatched_counts_are_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let r = dir.path().join("r.csv");
        write_matrix_csv(File::create(&a).unwrap(), &ids(5, "s"), &DMatrix::zeros(5, 2), "f").unwrap();
        write_matrix_csv(File::create(&r).unwrap(), &ids(4, "s"), &DMatrix::zeros(4, 2), "n").unwrap();
        assert!(matches!(load_benchmark(&a, &r, 1.0, Region::IT), Err(AlignmentError::Shape(_))));
    }

    #[test]
    fn bad_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "id,f0\na,1\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        fs::write(&p, "stim_id,f0\na,zz\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        fs::write(&p, "stim_id,f0\na,1\na,2\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn numeric_class_order() {
        let v = class_order(["10", "2", "1"].map(String::from));
        assert_eq!(v, vec!["1", "2", "10"]);
        let v = class_order(["dog", "cat", "ant"].map(String::from));
        assert_eq!(v, vec!["ant", "cat", "dog"]);
    }

    #[test]
    fn pattern_aligns_to_test_order() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let x = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64);
        write_matrix_csv(File::create(d.join("tr.csv")).unwrap(), &ids(6, "t"), &x, "f").unwrap();
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        write_labels_csv(File::create(d.join("trl.csv")).unwrap(), &ids(6, "t"), &[0, 1, 2, 0, 1, 2], &names).unwrap();
        write_matrix_csv(File::create(d.join("te.csv")).unwrap(), &ids(2, "q"), &x.rows(0, 2).into_owned(), "f")
            .unwrap();
        write_labels_csv(File::create(d.join("tel.csv")).unwrap(), &ids(2, "q"), &[1, 0], &names).unwrap();
        // rows deliberately shuffled, plus a correct-class row that must be ignored
        fs::write(
            d.join("p.csv"),
            "image_id,class,probability\nq1,c,0.4\nq0,c,0.2\nq0,b,0.9\nq1,b,0.3\nq0,a,0.1\n",
        )
        .unwrap();
        let files = BehaviorFiles {
            train_features: &d.join("tr.csv"),
            train_labels: &d.join("trl.csv"),
            test_features: &d.join("te.csv"),
            test_labels: &d.join("tel.csv"),
            pattern: &d.join("p.csv"),
        };
        let data = load_behavior(&files, 0.5).unwrap();
        assert_eq!(data.primate_pattern, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(data.test_labels, vec![1, 0]);

        fs::write(d.join("p.csv"), "image_id,class,probability\nq0,a,0.1\n").unwrap();
        assert!(load_behavior(&files, 0.5).is_err());
    }
}
