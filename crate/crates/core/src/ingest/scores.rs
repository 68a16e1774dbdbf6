//! Precomputed matcher scores, `image_id_a,image_id_b,score`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use super::manifest::csv_error;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub image_a: String,
    pub image_b: String,
    pub score: f64,
}

/// Scores for unordered image pairs; each pair appears once.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut seen: HashMap<(&str, &str), usize> = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.image_a == e.image_b {
                return Err(Error::ScoreTable(format!(
                    "entry {} pairs `{}` with itself",
                    i + 1,
                    e.image_a
                )));
            }
            if !e.score.is_finite() {
                return Err(Error::ScoreTable(format!("entry {} has non-finite score", i + 1)));
            }
            if let Some(prev) = seen.insert(unordered(&e.image_a, &e.image_b), i) {
                return Err(Error::ScoreTable(format!(
                    "pair ({}, {}) appears in entries {} and {}",
                    e.image_a,
                    e.image_b,
                    prev + 1,
                    i + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resolves ids to record positions, keyed by `(min, max)` position.
    /// Entries naming unknown images are returned separately.
    pub fn resolve(&self, position: &HashMap<&str, usize>) -> (HashMap<(u32, u32), f64>, Vec<String>) {
        let mut map = HashMap::with_capacity(self.entries.len());
        let mut unknown = Vec::new();
        for e in &self.entries {
            match (position.get(e.image_a.as_str()), position.get(e.image_b.as_str())) {
                (Some(&a), Some(&b)) => {
                    let key = if a < b {
                        (a as u32, b as u32)
                    } else {
                        (b as u32, a as u32)
                    };
                    map.insert(key, e.score);
                }
                (pa, _) => unknown.push(if pa.is_none() {
                    e.image_a.clone()
                } else {
                    e.image_b.clone()
                }),
            }
        }
        (map, unknown)
    }
}

fn unordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["image_id_a", "image_id_b", "score"] {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            expected: "image_id_a,image_id_b,score".into(),
            found: header.join(","),
        });
    }
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let score: f64 = row[2].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("score `{}` is not a number", &row[2]),
        })?;
        entries.push(ScoreEntry {
            image_a: row[0].to_string(),
            image_b: row[1].to_string(),
            score,
        });
    }
    ScoreTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(a: &str, b: &str, s: f64) -> ScoreEntry {
        ScoreEntry {
            image_a: a.into(),
            image_b: b.into(),
            score: s,
        }
    }

    #[test]
    fn rejects_self_pair_and_duplicates() {
        assert!(ScoreTable::new(vec![entry("a", "a", 0.1)]).is_err());
        let err = ScoreTable::new(vec![entry("a", "b", 0.1), entry("b", "a", 0.2)]).unwrap_err();
        assert!(err.to_string().contains("entries 1 and 2"));
    }

    #[test]
    fn loads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "image_id_a,image_id_b,score\na,b,0.5\nb,c,-0.25\n").unwrap();
        let t = load_scores(&p).unwrap();
        assert_eq!(t.len(), 2);
        let pos: HashMap<&str, usize> = [("a", 0), ("b", 1), ("c", 2)].into();
        let (map, unknown) = t.resolve(&pos);
        assert!(unknown.is_empty());
        assert_eq!(map[&(1, 2)], -0.25);
    }
}
