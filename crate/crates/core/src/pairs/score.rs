use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ingest::{EmbeddingStore, ImageRecord, ScoreTable};

/// Source of similarity scores for record pairs.
pub trait Scorer: Sync {
    /// Whether the record can be scored at all.
    fn available(&self, record: usize) -> bool;

    /// Score for records `a < b`; `None` when the pair has no score.
    fn score(&self, a: usize, b: usize) -> Option<f64>;
}

/// Cosine similarity computed in f64.
pub fn cosine_score(x: &[f32], y: &[f32]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (mut dot, mut nx, mut ny) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (nx.sqrt() * ny.sqrt()))
}

type DotFn = fn(&[f32], &[f32]) -> f32;

/// f32 dot product with 16 independent partial sums.
#[inline(always)]
fn dot_lanes(a: &[f32], b: &[f32]) -> f32 {
    const LANES: usize = 16;
    let mut acc = [0.0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    // pairwise reduction, fixed order
    let mut width = LANES / 2;
    while width > 0 {
        for k in 0..width {
            acc[k] += acc[k + width];
        }
        width /= 2;
    }
    acc[0] + tail
}

fn dot_portable(a: &[f32], b: &[f32]) -> f32 {
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2_inner(a: &[f32], b: &[f32]) -> f32 {
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    // SAFETY: only selected by `select_dot` after runtime detection of AVX2.
    unsafe { dot_avx2_inner(a, b) }
}

/// Picks the widest dot-product kernel the CPU supports. Kernels share the
/// same summation order, so they return identical results.
fn select_dot() -> DotFn {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        return dot_avx2;
    }
    dot_portable
}

/// Scores record pairs by cosine similarity of their embeddings.
pub struct EmbeddingScorer<'a> {
    store: &'a EmbeddingStore,
    row_of: Vec<Option<u32>>,
    inv_norm: Vec<f32>,
    dot: DotFn,
}

impl<'a> EmbeddingScorer<'a> {
    /// Links records to rows, by `embedding_index` when set and by image id
    /// otherwise. Records without a row, or whose row has zero norm, are
    /// unavailable.
    pub fn new(store: &'a EmbeddingStore, records: &[ImageRecord]) -> Result<Self> {
        let mut row_of = Vec::with_capacity(records.len());
        for rec in records {
            let row = match rec.embedding_index {
                Some(idx) => {
                    if idx >= store.count() {
                        return Err(Error::Input(format!(
                            "image `{}` has embedding_index {idx} but the store has {} rows",
                            rec.image_id,
                            store.count()
                        )));
                    }
                    if store.ids()[idx] != rec.image_id {
                        return Err(Error::Input(format!(
                            "image `{}` points at embedding row {idx}, which belongs to `{}`",
                            rec.image_id,
                            store.ids()[idx]
                        )));
                    }
                    Some(idx as u32)
                }
                None => store.position(&rec.image_id).map(|i| i as u32),
            };
            row_of.push(row);
        }
        let inv_norm = (0..store.count())
            .map(|r| {
                if store.is_normalized() {
                    1.0
                } else {
                    let n = store
                        .row(r)
                        .iter()
                        .map(|&v| f64::from(v) * f64::from(v))
                        .sum::<f64>()
                        .sqrt();
                    if n > 0.0 {
                        (1.0 / n) as f32
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        Ok(Self {
            store,
            row_of,
            inv_norm,
            dot: select_dot(),
        })
    }
}

impl Scorer for EmbeddingScorer<'_> {
    fn available(&self, record: usize) -> bool {
        self.row_of[record].is_some_and(|r| self.inv_norm[r as usize] > 0.0)
    }

    #[inline]
    fn score(&self, a: usize, b: usize) -> Option<f64> {
        let (ra, rb) = (self.row_of[a]? as usize, self.row_of[b]? as usize);
        let d = (self.dot)(self.store.row(ra), self.store.row(rb));
        if self.store.is_normalized() {
            Some(f64::from(d))
        } else {
            Some(f64::from(d) * f64::from(self.inv_norm[ra]) * f64::from(self.inv_norm[rb]))
        }
    }
}

/// Scores looked up from a precomputed table.
pub struct TableScorer {
    scores: HashMap<(u32, u32), f64>,
    available: Vec<bool>,
    unknown_ids: Vec<String>,
}

impl TableScorer {
    pub fn new(table: &ScoreTable, records: &[ImageRecord]) -> Self {
        let position: HashMap<&str, usize> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.as_str(), i))
            .collect();
        let (scores, mut unknown_ids) = table.resolve(&position);
        unknown_ids.sort();
        unknown_ids.dedup();
        let mut available = vec![false; records.len()];
        for &(a, b) in scores.keys() {
            available[a as usize] = true;
            available[b as usize] = true;
        }
        Self {
            scores,
            available,
            unknown_ids,
        }
    }

    /// Ids named in the table that have no manifest record.
    pub fn unknown_ids(&self) -> &[String] {
        &self.unknown_ids
    }
}

impl Scorer for TableScorer {
    fn available(&self, record: usize) -> bool {
        self.available[record]
    }

    fn score(&self, a: usize, b: usize) -> Option<f64> {
        self.scores.get(&(a as u32, b as u32)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ScoreEntry;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_score(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_score(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroNorm)));
        assert!(cosine_score(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn kernels_agree() {
        let a: Vec<f32> = (0..517).map(|i| ((i * 37 % 101) as f32 - 50.0) / 13.0).collect();
        let b: Vec<f32> = (0..517).map(|i| ((i * 53 % 89) as f32 - 40.0) / 7.0).collect();
        let exact: f64 = a.iter().zip(&b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        assert_eq!(select_dot()(&a, &b).to_bits(), dot_portable(&a, &b).to_bits());
        assert!((f64::from(dot_portable(&a, &b)) - exact).abs() < 1e-3);
    }

    fn rec(id: &str, idx: Option<usize>) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            subject_id: id.into(),
            group: "G".into(),
            image_path: "i".into(),
            mask_path: "m".into(),
            embedding_index: idx,
        }
    }

    #[test]
    fn normalized_and_raw_agree() {
        let rows = vec![3.0, 4.0, 1.0, 0.0, 1.0, 1.0];
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let recs = [rec("a", None), rec("b", Some(1)), rec("c", None)];
        let raw = EmbeddingStore::from_rows(2, rows.clone(), ids.clone(), false).unwrap();
        let norm = EmbeddingStore::from_rows(2, rows, ids, true).unwrap();
        let (sr, sn) = (
            EmbeddingScorer::new(&raw, &recs).unwrap(),
            EmbeddingScorer::new(&norm, &recs).unwrap(),
        );
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let want = cosine_score(raw.row(a), raw.row(b)).unwrap();
            assert!((sr.score(a, b).unwrap() - want).abs() < 1e-6);
            assert!((sn.score(a, b).unwrap() - want).abs() < 1e-6);
        }
    }

    #[test]
    fn index_checks() {
        let store = EmbeddingStore::from_rows(1, vec![1.0, 2.0], vec!["a".into(), "b".into()], true).unwrap();
        assert!(EmbeddingScorer::new(&store, &[rec("a", Some(5))]).is_err());
        assert!(EmbeddingScorer::new(&store, &[rec("a", Some(1))]).is_err());
        let s = EmbeddingScorer::new(&store, &[rec("a", None), rec("zz", None)]).unwrap();
        assert!(s.available(0) && !s.available(1));
        assert_eq!(s.score(0, 1), None);
    }

    #[test]
    fn table_lookup() {
        let t = ScoreTable::new(vec![ScoreEntry {
            image_a: "b".into(),
            image_b: "a".into(),
            score: 0.75,
        }])
        .unwrap();
        let s = TableScorer::new(&t, &[rec("a", None), rec("b", None), rec("c", None)]);
        assert_eq!(s.score(0, 1), Some(0.75));
        assert_eq!(s.score(0, 2), None);
        assert!(!s.available(2));
    }
}
