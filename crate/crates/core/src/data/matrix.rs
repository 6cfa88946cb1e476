use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One observed answer: question index and correctness (0 or 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Response {
    pub question: usize,
    pub value: u8,
}

impl Response {
    pub fn new(question: usize, value: u8) -> Self {
        debug_assert!(value <= 1);
        Self { question, value }
    }

    pub fn x(&self) -> f64 {
        f64::from(self.value)
    }
}

/// Binary student × question matrix holding only observed entries.
///
/// Each row is sorted by question index with no repeats. Student and
/// question ids map to indices in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAnswerMatrix {
    student_ids: Vec<String>,
    question_ids: Vec<String>,
    rows: Vec<Vec<Response>>,
    student_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
}

fn index_map(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::invalid(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(map)
}

impl SparseAnswerMatrix {
    pub fn new(student_ids: Vec<String>, question_ids: Vec<String>, rows: Vec<Vec<Response>>) -> Result<Self> {
        let (n, m) = (student_ids.len(), question_ids.len());
        if n == 0 || m == 0 {
            return Err(Error::EmptyMatrix { students: n, questions: m });
        }
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            for (k, r) in row.iter().enumerate() {
                if r.question >= m {
                    return Err(Error::QuestionOutOfRange { index: r.question, count: m });
                }
                if r.value > 1 {
                    return Err(Error::invalid(format!("row {i}: value {} is not 0/1", r.value)));
                }
                if k > 0 && row[k - 1].question >= r.question {
                    return Err(Error::invalid(format!(
                        "row {i}: question indices must be strictly increasing"
                    )));
                }
            }
        }
        let student_index = index_map(&student_ids, "student")?;
        let question_index = index_map(&question_ids, "question")?;
        Ok(Self { student_ids, question_ids, rows, student_index, question_index })
    }

    /// Matrix with ids `0..n` and `0..m`; rows are sorted for the caller.
    pub fn with_numeric_ids(n_questions: usize, mut rows: Vec<Vec<Response>>) -> Result<Self> {
        for row in &mut rows {
            row.sort_unstable();
        }
        let students = (0..rows.len()).map(|i| i.to_string()).collect();
        let questions = (0..n_questions).map(|j| j.to_string()).collect();
        Self::new(students, questions, rows)
    }

    pub fn n_students(&self) -> usize {
        self.student_ids.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn row(&self, i: usize) -> &[Response] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Response>] {
        &self.rows
    }

    pub fn student_ids(&self) -> &[String] {
        &self.student_ids
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn student_index(&self, id: &str) -> Option<usize> {
        self.student_index.get(id).copied()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.question_index.get(id).copied()
    }

    /// Observed answer of student `i` to question `j`.
    pub fn get(&self, i: usize, j: usize) -> Option<u8> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |r| r.question).ok().map(|k| row[k].value)
    }

    pub fn n_observed(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.n_questions())
    }

    /// Per question: `(observed count, correct count)`.
    pub fn column_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = vec![(0usize, 0usize); self.n_questions()];
        for row in &self.rows {
            for r in row {
                counts[r.question].0 += 1;
                counts[r.question].1 += r.value as usize;
            }
        }
        counts
    }

    /// Students that answered question `j`, with their answers, in student order.
    pub fn column(&self, j: usize) -> Vec<(usize, u8)> {
        (0..self.n_students()).filter_map(|i| self.get(i, j).map(|v| (i, v))).collect()
    }

    /// Sub-matrix holding the listed students (same question index space).
    pub fn select_students(&self, students: &[usize]) -> Result<Self> {
        Self::new(
            students.iter().map(|&i| self.student_ids[i].clone()).collect(),
            self.question_ids.clone(),
            students.iter().map(|&i| self.rows[i].clone()).collect(),
        )
    }

    /// Line-oriented text form: a `#questions` header listing every question
    /// id in index order, then `student_id<TAB>q:v,q:v,...` per student with
    /// question ids in place of indices.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for id in self.student_ids.iter().chain(&self.question_ids) {
            if id.is_empty() || id.contains(['\t', ',', ':', '\n', '\r']) {
                return Err(Error::invalid(format!("id `{id}` cannot be serialized")));
            }
        }
        writeln!(w, "#questions\t{}", self.question_ids.join(","))?;
        for (sid, row) in self.student_ids.iter().zip(&self.rows) {
            let cells: Vec<String> =
                row.iter().map(|r| format!("{}:{}", self.question_ids[r.question], r.value)).collect();
            writeln!(w, "{sid}\t{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let question_ids: Vec<String> = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let rest = line
                    .strip_prefix("#questions\t")
                    .ok_or_else(|| Error::Parse { line: 1, message: "missing #questions header".into() })?;
                rest.split(',').map(str::to_string).collect()
            }
            None => return Err(Error::Parse { line: 1, message: "empty input".into() }),
        };
        let qindex = index_map(&question_ids, "question")?;
        let mut students = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let (sid, cells) = line.split_once('\t').ok_or_else(|| err("missing tab".into()))?;
            let mut row = Vec::new();
            for cell in cells.split(',').filter(|c| !c.is_empty()) {
                let (q, v) = cell.rsplit_once(':').ok_or_else(|| err(format!("bad cell `{cell}`")))?;
                let question = *qindex.get(q).ok_or_else(|| err(format!("unknown question `{q}`")))?;
                let value = match v {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(err(format!("bad value `{v}`"))),
                };
                row.push(Response { question, value });
            }
            row.sort_unstable();
            students.push(sid.to_string());
            rows.push(row);
        }
        Self::new(students, question_ids, rows)
    }
}
