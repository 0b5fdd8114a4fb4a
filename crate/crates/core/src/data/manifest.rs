use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::DataError;
use crate::grading::{decode_score, Grade, Score, NUM_GRADES};

pub const MANIFEST_HEADER: &str = "id_code,diagnosis";
pub const PREDICTION_HEADER: &str = "id_code,score,grade";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id_code: String,
    pub diagnosis: Grade,
}

/// APTOS-style dataset index. Images live at `<source_dir>/<id_code>.png`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub source_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub counts: [u64; NUM_GRADES],
    pub fractions: [f64; NUM_GRADES],
}

impl ClassDistribution {
    pub fn from_grades(grades: impl IntoIterator<Item = Grade>) -> Self {
        let mut counts = [0u64; NUM_GRADES];
        for g in grades {
            counts[g.index()] += 1;
        }
        let total: u64 = counts.iter().sum();
        let mut fractions = [0.0; NUM_GRADES];
        if total > 0 {
            for (f, &c) in fractions.iter_mut().zip(&counts) {
                *f = c as f64 / total as f64;
            }
        }
        Self { counts, fractions }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self { entries, source_dir: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn distribution(&self) -> ClassDistribution {
        ClassDistribution::from_grades(self.entries.iter().map(|e| e.diagnosis))
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> Option<PathBuf> {
        self.source_dir.as_ref().map(|d| d.join(format!("{}.png", entry.id_code)))
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id_code == id)
    }

    /// `id_code,diagnosis` CSV with LF line endings.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(20 * (self.entries.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.id_code);
            out.push(',');
            out.push_str(&e.diagnosis.to_string());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| DataError::io(path, e))
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &'static str) -> Result<(), DataError> {
    let headers = rdr.headers()?.clone();
    let found = headers.iter().collect::<Vec<_>>().join(",");
    let found = found.trim_start_matches('\u{feff}').to_string();
    if found != expected {
        return Err(DataError::BadHeader { expected, found });
    }
    Ok(())
}

/// Parse manifest CSV text. Rows are numbered from 1, excluding the header.
pub fn parse_manifest<R: Read>(input: R) -> Result<Manifest, DataError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, MANIFEST_HEADER)?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 2 {
            return Err(DataError::BadRow { row, message: format!("expected 2 fields, got {}", record.len()) });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(DataError::BadRow { row, message: "empty id_code".into() });
        }
        let raw = &record[1];
        let value: i64 = raw
            .parse()
            .map_err(|_| DataError::BadRow { row, message: format!("diagnosis {raw:?} is not an integer") })?;
        let diagnosis = u8::try_from(value)
            .ok()
            .and_then(|v| Grade::new(v).ok())
            .ok_or_else(|| DataError::DiagnosisOutOfRange { row, value: raw.to_string() })?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { row, id });
        }
        entries.push(ManifestEntry { id_code: id, diagnosis });
    }
    Ok(Manifest::new(entries))
}

/// Load a manifest; when `image_dir` is given, every `<id_code>.png` must exist.
pub fn load_manifest(csv_path: &Path, image_dir: Option<&Path>) -> Result<Manifest, DataError> {
    let file = std::fs::File::open(csv_path).map_err(|e| DataError::io(csv_path, e))?;
    let mut m = parse_manifest(std::io::BufReader::new(file))?;
    if let Some(dir) = image_dir {
        let missing: Vec<String> = m
            .entries
            .iter()
            .filter(|e| !dir.join(format!("{}.png", e.id_code)).is_file())
            .map(|e| e.id_code.clone())
            .collect();
        if !missing.is_empty() {
            return Err(DataError::MissingImages(missing));
        }
        m.source_dir = Some(dir.to_path_buf());
    }
    Ok(m)
}

/// One row of a prediction CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id_code: String,
    pub score: Score,
    pub grade: Grade,
}

impl PredictionRow {
    pub fn new(id_code: impl Into<String>, score: Score) -> Self {
        Self { id_code: id_code.into(), score, grade: decode_score(score) }
    }
}

pub fn write_predictions(rows: &[PredictionRow], path: &Path) -> Result<(), DataError> {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.id_code, r.score.value(), r.grade));
    }
    std::fs::write(path, out).map_err(|e| DataError::io(path, e))
}

/// Parse an `id_code,score,grade` CSV. Only the score is trusted; the grade
/// column is checked against it.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut rdr = reader(std::io::BufReader::new(file));
    check_header(&mut rdr, PREDICTION_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 3 {
            return Err(DataError::BadRow { row, message: format!("expected 3 fields, got {}", record.len()) });
        }
        let id = record[0].to_string();
        let score = record[1]
            .parse::<f64>()
            .ok()
            .and_then(|v| Score::new(v).ok())
            .ok_or_else(|| DataError::BadRow { row, message: format!("bad score {:?}", &record[1]) })?;
        let grade = record[2]
            .parse::<u8>()
            .ok()
            .and_then(|v| Grade::new(v).ok())
            .ok_or_else(|| DataError::BadRow { row, message: format!("bad grade {:?}", &record[2]) })?;
        if decode_score(score) != grade {
            return Err(DataError::BadRow {
                row,
                message: format!("grade {grade} does not decode from score {}", score.value()),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { row, id });
        }
        rows.push(PredictionRow { id_code: id, score, grade });
    }
    Ok(rows)
}
