//! CSV ingestion and the dedup + threshold preprocessing pipeline.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::matrix::{Response, SparseAnswerMatrix};
use crate::error::{Error, Result};

/// A single logged answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerRecord {
    pub student: String,
    pub question: String,
    pub correct: u8,
    pub timestamp: Option<i64>,
}

/// Column names of the answer CSV. The timestamp column is optional in the
/// file even when named here.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub student: String,
    pub question: String,
    pub correct: String,
    pub timestamp: Option<String>,
    /// Fraction of malformed rows above which ingestion fails.
    pub max_skip_fraction: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            student: "student_id".into(),
            question: "question_id".into(),
            correct: "is_correct".into(),
            timestamp: Some("timestamp".into()),
            max_skip_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<AnswerRecord>,
    pub skipped: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested> {
    ingest_reader(File::open(path)?, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let s_col = col(&schema.student).ok_or_else(|| Error::MissingColumn(schema.student.clone()))?;
    let q_col = col(&schema.question).ok_or_else(|| Error::MissingColumn(schema.question.clone()))?;
    let c_col = col(&schema.correct).ok_or_else(|| Error::MissingColumn(schema.correct.clone()))?;
    let t_col = schema.timestamp.as_deref().and_then(col);

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for row in rdr.records() {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                warn!("skipping unreadable row {total}: {e}");
                skipped += 1;
                continue;
            }
        };
        match parse_row(&row, s_col, q_col, c_col, t_col) {
            Ok(rec) => records.push(rec),
            Err(msg) => {
                warn!("skipping row {total}: {msg}");
                skipped += 1;
            }
        }
    }
    if total > 0 && skipped as f64 > schema.max_skip_fraction * total as f64 {
        return Err(Error::TooManyMalformedRows { skipped, total });
    }
    if skipped > 0 {
        warn!("skipped {skipped} of {total} rows");
    }
    Ok(Ingested { records, skipped })
}

fn parse_row(
    row: &csv::StringRecord,
    s_col: usize,
    q_col: usize,
    c_col: usize,
    t_col: Option<usize>,
) -> std::result::Result<AnswerRecord, String> {
    let field = |i: usize| row.get(i).ok_or_else(|| format!("missing field {i}"));
    let student = field(s_col)?;
    let question = field(q_col)?;
    if student.is_empty() || question.is_empty() {
        return Err("empty id".into());
    }
    let correct = match field(c_col)? {
        "0" => 0,
        "1" => 1,
        other => return Err(format!("is_correct must be 0 or 1, got `{other}`")),
    };
    let timestamp = match t_col.map(field).transpose()? {
        None | Some("") => None,
        Some(t) => Some(t.parse::<i64>().map_err(|_| format!("bad timestamp `{t}`"))?),
    };
    Ok(AnswerRecord { student: student.into(), question: question.into(), correct, timestamp })
}

/// Write records as `student_id,question_id,is_correct[,timestamp]`.
pub fn write_csv<W: Write>(w: W, records: &[AnswerRecord]) -> Result<()> {
    let with_ts = records.iter().any(|r| r.timestamp.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    if with_ts {
        wtr.write_record(["student_id", "question_id", "is_correct", "timestamp"])?;
    } else {
        wtr.write_record(["student_id", "question_id", "is_correct"])?;
    }
    for r in records {
        let c = r.correct.to_string();
        if with_ts {
            let t = r.timestamp.map(|t| t.to_string()).unwrap_or_default();
            wtr.write_record([r.student.as_str(), &r.question, &c, &t])?;
        } else {
            wtr.write_record([r.student.as_str(), &r.question, &c])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Records of a matrix in student-then-question index order.
pub fn matrix_records(m: &SparseAnswerMatrix) -> Vec<AnswerRecord> {
    let mut out = Vec::with_capacity(m.n_observed());
    for (i, row) in m.rows().iter().enumerate() {
        for r in row {
            out.push(AnswerRecord {
                student: m.student_ids()[i].clone(),
                question: m.question_ids()[r.question].clone(),
                correct: r.value,
                timestamp: None,
            });
        }
    }
    out
}

/// Numeric order when every id is an unsigned integer, lexicographic otherwise.
pub(crate) fn canonical_order(mut ids: Vec<String>) -> Vec<String> {
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        ids.sort();
    }
    ids
}

/// Deduplicate and filter records into a matrix.
///
/// For repeated `(student, question)` pairs the record with the largest
/// timestamp wins; equal or missing timestamps fall back to file order (the
/// later row wins). Questions with fewer than `min_answers_per_question`
/// answers and students with fewer than `min_answers_per_student` are then
/// removed alternately until neither rule removes anything.
pub fn preprocess(
    records: &[AnswerRecord],
    min_answers_per_question: usize,
    min_answers_per_student: usize,
) -> Result<SparseAnswerMatrix> {
    // (student, question) → (timestamp, position, value)
    let mut latest: HashMap<(&str, &str), (Option<i64>, usize, u8)> = HashMap::new();
    for (pos, r) in records.iter().enumerate() {
        let key = (r.student.as_str(), r.question.as_str());
        let cand = (r.timestamp, pos, r.correct);
        latest
            .entry(key)
            .and_modify(|cur| {
                if (cand.0, cand.1) > (cur.0, cur.1) {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    }

    let mut by_student: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for &(s, q) in latest.keys() {
        by_student.entry(s).or_default().insert(q);
    }

    loop {
        let mut q_counts: HashMap<&str, usize> = HashMap::new();
        for qs in by_student.values() {
            for q in qs {
                *q_counts.entry(q).or_default() += 1;
            }
        }
        let drop_q: BTreeSet<&str> =
            q_counts.iter().filter(|(_, &c)| c < min_answers_per_question).map(|(q, _)| *q).collect();
        for qs in by_student.values_mut() {
            qs.retain(|q| !drop_q.contains(q));
        }
        let before = by_student.len();
        by_student.retain(|_, qs| !qs.is_empty() && qs.len() >= min_answers_per_student);
        if drop_q.is_empty() && by_student.len() == before {
            break;
        }
    }

    let students = canonical_order(by_student.keys().map(|s| s.to_string()).collect());
    let questions = canonical_order(
        by_student.values().flatten().copied().collect::<BTreeSet<_>>().into_iter().map(String::from).collect(),
    );
    if students.is_empty() || questions.is_empty() {
        return Err(Error::EmptyMatrix { students: students.len(), questions: questions.len() });
    }
    let qindex: HashMap<&str, usize> = questions.iter().enumerate().map(|(j, q)| (q.as_str(), j)).collect();
    let rows = students
        .iter()
        .map(|s| {
            let mut row: Vec<Response> = by_student[s.as_str()]
                .iter()
                .map(|q| Response::new(qindex[q], latest[&(s.as_str(), *q)].2))
                .collect();
            row.sort_unstable();
            row
        })
        .collect();
    SparseAnswerMatrix::new(students, questions, rows)
}

/// Question → topic labels, from a `question_id,topics` CSV with
/// `|`-separated labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuestionMeta {
    pub topics: Vec<Vec<String>>,
}

impl QuestionMeta {
    pub fn read<R: Read>(reader: R, matrix: &SparseAnswerMatrix) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let q_col = headers.iter().position(|h| h == "question_id").ok_or_else(|| Error::MissingColumn("question_id".into()))?;
        let t_col = headers.iter().position(|h| h == "topics").ok_or_else(|| Error::MissingColumn("topics".into()))?;
        let mut topics = vec![Vec::new(); matrix.n_questions()];
        for row in rdr.records() {
            let row = row?;
            let (Some(q), Some(t)) = (row.get(q_col), row.get(t_col)) else { continue };
            if let Some(j) = matrix.question_index(q) {
                topics[j] = t.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            }
        }
        Ok(Self { topics })
    }
}
