use std::borrow::Borrow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::key::PairKind;
use crate::ingest::ImageRecord;

/// Which image pairs are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpostorScope {
    /// Only pairs whose images share a demographic group.
    #[default]
    WithinGroup,
    /// Every pair in the dataset.
    CrossGroup,
}

/// Dense group numbering (sorted by name) shared by the pair machinery.
#[derive(Debug, Clone)]
pub struct GroupIndex {
    names: Vec<String>,
    of_record: Vec<u16>,
}

impl GroupIndex {
    pub fn new(records: &[ImageRecord]) -> Self {
        let mut names: Vec<String> = records.iter().map(|r| r.group.clone()).collect();
        names.sort();
        names.dedup();
        let pos: HashMap<&str, u16> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u16)).collect();
        let of_record = records.iter().map(|r| pos[r.group.as_str()]).collect();
        Self { names, of_record }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn of(&self, record: usize) -> u16 {
        self.of_record[record]
    }

    pub fn position(&self, name: &str) -> Option<u16> {
        self.names.iter().position(|n| n == name).map(|i| i as u16)
    }

    /// Number of unordered group pairs, including a group with itself.
    pub fn pair_slots(&self) -> usize {
        let g = self.names.len();
        g * (g + 1) / 2
    }

    /// Dense index of the unordered group pair.
    #[inline]
    pub fn pair_slot(&self, a: u16, b: u16) -> usize {
        let (lo, hi) = if a <= b {
            (a as usize, b as usize)
        } else {
            (b as usize, a as usize)
        };
        hi * (hi + 1) / 2 + lo
    }

    /// Report label for a group pair: the group itself, or `A|B` across groups.
    pub fn pair_label(&self, a: u16, b: u16) -> String {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo == hi {
            self.names[lo as usize].clone()
        } else {
            format!("{}|{}", self.names[lo as usize], self.names[hi as usize])
        }
    }
}

/// The set of unordered image pairs under a scope, split into segments
/// (one per group, or one for the whole dataset) of ascending record indices.
#[derive(Debug, Clone)]
pub struct PairSpace {
    segments: Vec<Vec<u32>>,
    subject: Vec<u32>,
    groups: GroupIndex,
}

impl PairSpace {
    pub fn new(records: &[ImageRecord], scope: ImpostorScope) -> Self {
        Self::filtered(records, scope, |_| true)
    }

    /// Like [`PairSpace::new`] but only over records passing `keep`.
    pub fn filtered(records: &[ImageRecord], scope: ImpostorScope, keep: impl Fn(usize) -> bool) -> Self {
        let groups = GroupIndex::new(records);
        let mut subject_ids: HashMap<&str, u32> = HashMap::new();
        let subject = records
            .iter()
            .map(|r| {
                let next = subject_ids.len() as u32;
                *subject_ids.entry(r.subject_id.as_str()).or_insert(next)
            })
            .collect();
        let segments = match scope {
            ImpostorScope::WithinGroup => {
                let mut segs = vec![Vec::new(); groups.names().len()];
                for i in (0..records.len()).filter(|&i| keep(i)) {
                    segs[groups.of(i) as usize].push(i as u32);
                }
                segs
            }
            ImpostorScope::CrossGroup => vec![(0..records.len()).filter(|&i| keep(i)).map(|i| i as u32).collect()],
        };
        Self {
            segments: segments.into_iter().filter(|s| s.len() > 1).collect(),
            subject,
            groups,
        }
    }

    pub fn groups(&self) -> &GroupIndex {
        &self.groups
    }

    pub fn segments(&self) -> &[Vec<u32>] {
        &self.segments
    }

    #[inline]
    pub fn kind(&self, a: usize, b: usize) -> PairKind {
        if self.subject[a] == self.subject[b] {
            PairKind::Genuine
        } else {
            PairKind::Impostor
        }
    }

    /// Total unordered pairs in the space.
    pub fn pair_count(&self) -> u64 {
        self.segments.iter().map(|s| choose2(s.len() as u64)).sum()
    }

    /// Pairs of each kind, counted combinatorially without enumeration.
    pub fn kind_counts(&self) -> (u64, u64) {
        let mut genuine = 0;
        for seg in &self.segments {
            let mut per_subject: HashMap<u32, u64> = HashMap::new();
            for &i in seg {
                *per_subject.entry(self.subject[i as usize]).or_default() += 1;
            }
            genuine += per_subject.values().map(|&k| choose2(k)).sum::<u64>();
        }
        (genuine, self.pair_count() - genuine)
    }

    /// Streams `(a, b, kind)` with `a < b` without materializing the pairs.
    pub fn iter(&self) -> PairStream<&PairSpace> {
        PairStream::new(self)
    }
}

pub(crate) fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone)]
pub struct PairStream<S> {
    space: S,
    seg: usize,
    i: usize,
    j: usize,
}

impl<S: Borrow<PairSpace>> PairStream<S> {
    fn new(space: S) -> Self {
        Self {
            space,
            seg: 0,
            i: 0,
            j: 1,
        }
    }
}

impl<S: Borrow<PairSpace>> Iterator for PairStream<S> {
    type Item = (usize, usize, PairKind);

    fn next(&mut self) -> Option<Self::Item> {
        let space = self.space.borrow();
        loop {
            let seg = space.segments.get(self.seg)?;
            if self.j < seg.len() {
                let (a, b) = (seg[self.i] as usize, seg[self.j] as usize);
                self.j += 1;
                return Some((a, b, space.kind(a, b)));
            }
            self.i += 1;
            self.j = self.i + 1;
            if self.j >= seg.len() {
                self.seg += 1;
                self.i = 0;
                self.j = 1;
            }
        }
    }
}

/// Streams the unordered pairs of one kind as record-index pairs.
pub fn enumerate_pairs(
    records: &[ImageRecord],
    kind: PairKind,
    scope: ImpostorScope,
) -> impl Iterator<Item = (usize, usize)> {
    PairStream::new(PairSpace::new(records, scope))
        .filter(move |&(_, _, k)| k == kind)
        .map(|(a, b, _)| (a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, subject: &str, group: &str) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            subject_id: subject.into(),
            group: group.into(),
            image_path: "i".into(),
            mask_path: "m".into(),
            embedding_index: None,
        }
    }

    #[test]
    fn small_enumeration() {
        let recs = [rec("a1", "A", "G"), rec("a2", "A", "G"), rec("b1", "B", "G")];
        let gen: Vec<_> = enumerate_pairs(&recs, PairKind::Genuine, ImpostorScope::WithinGroup).collect();
        let imp: Vec<_> = enumerate_pairs(&recs, PairKind::Impostor, ImpostorScope::WithinGroup).collect();
        assert_eq!(gen, vec![(0, 1)]);
        assert_eq!(imp, vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn single_image_has_no_pairs() {
        let recs = [rec("a", "A", "G")];
        assert_eq!(
            enumerate_pairs(&recs, PairKind::Genuine, ImpostorScope::WithinGroup).count(),
            0
        );
        assert_eq!(
            enumerate_pairs(&recs, PairKind::Impostor, ImpostorScope::CrossGroup).count(),
            0
        );
    }

    #[test]
    fn scopes() {
        let recs = [
            rec("a", "A", "G"),
            rec("b", "B", "H"),
            rec("c", "C", "G"),
            rec("d", "D", "H"),
        ];
        let within = PairSpace::new(&recs, ImpostorScope::WithinGroup);
        let pairs: Vec<_> = within.iter().map(|(a, b, _)| (a, b)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 3)]);
        let cross = PairSpace::new(&recs, ImpostorScope::CrossGroup);
        assert_eq!(cross.iter().count(), 6);
        assert_eq!(cross.pair_count(), 6);
    }

    #[test]
    fn each_pair_once() {
        let recs: Vec<_> = (0..23)
            .map(|i| rec(&format!("i{i}"), &format!("s{}", i % 5), ["X", "Y"][i % 2]))
            .collect();
        let space = PairSpace::new(&recs, ImpostorScope::WithinGroup);
        let mut seen = std::collections::HashSet::new();
        for (a, b, k) in space.iter() {
            assert!(a < b);
            assert!(seen.insert((a, b)));
            assert_eq!(recs[a].group, recs[b].group);
            assert_eq!(k == PairKind::Genuine, recs[a].subject_id == recs[b].subject_id);
        }
        let (g, i) = space.kind_counts();
        assert_eq!(seen.len() as u64, g + i);
        assert_eq!(space.pair_count(), g + i);
    }

    #[test]
    fn group_slots() {
        let recs = [rec("a", "A", "B"), rec("b", "B", "A"), rec("c", "C", "C")];
        let g = GroupIndex::new(&recs);
        assert_eq!(g.names(), &["A", "B", "C"]);
        let mut slots: Vec<usize> = (0..3)
            .flat_map(|a| (a..3).map(move |b| (a, b)))
            .map(|(a, b)| g.pair_slot(a, b))
            .collect();
        slots.sort();
        assert_eq!(slots, (0..g.pair_slots()).collect::<Vec<_>>());
        assert_eq!(g.pair_label(1, 0), "A|B");
    }
}
