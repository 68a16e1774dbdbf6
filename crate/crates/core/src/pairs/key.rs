use std::fmt;

use serde::{Deserialize, Serialize};

use crate::brightness::ExposureCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Genuine,
    Impostor,
}

impl PairKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::Genuine => "genuine",
            PairKind::Impostor => "impostor",
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unordered pair of exposure categories, stored low-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryPair {
    pub cat_a: ExposureCategory,
    pub cat_b: ExposureCategory,
}

/// The 15 unordered category pairs: same-category pairs first, then pairs one
/// band apart, two apart, and so on.
pub const CATEGORY_PAIRS: [CategoryPair; 15] = {
    use ExposureCategory::*;
    const fn p(a: ExposureCategory, b: ExposureCategory) -> CategoryPair {
        CategoryPair { cat_a: a, cat_b: b }
    }
    [
        p(StronglyUnder, StronglyUnder),
        p(Under, Under),
        p(Middle, Middle),
        p(Over, Over),
        p(StronglyOver, StronglyOver),
        p(StronglyUnder, Under),
        p(Under, Middle),
        p(Middle, Over),
        p(Over, StronglyOver),
        p(StronglyUnder, Middle),
        p(Under, Over),
        p(Middle, StronglyOver),
        p(StronglyUnder, Over),
        p(Under, StronglyOver),
        p(StronglyUnder, StronglyOver),
    ]
};

impl CategoryPair {
    pub fn new(a: ExposureCategory, b: ExposureCategory) -> Self {
        if a <= b {
            Self { cat_a: a, cat_b: b }
        } else {
            Self { cat_a: b, cat_b: a }
        }
    }

    /// Position in [`CATEGORY_PAIRS`].
    pub fn index(self) -> usize {
        let (lo, hi) = (self.cat_a.index(), self.cat_b.index());
        let distance = hi - lo;
        // rows before this distance: 5 + 4 + ... for each shorter distance
        let before: usize = (0..distance).map(|d| 5 - d).sum();
        before + lo
    }

    pub fn is_diagonal(self) -> bool {
        self.cat_a == self.cat_b
    }

    /// `SU-M` style label, safe for file names.
    pub fn slug(self) -> String {
        format!("{}-{}", self.cat_a, self.cat_b)
    }
}

impl fmt::Display for CategoryPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cat_a, self.cat_b)
    }
}

/// Bucket key: demographic group plus unordered category pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub group: String,
    pub cat_a: ExposureCategory,
    pub cat_b: ExposureCategory,
}

impl PairKey {
    pub fn new(group: impl Into<String>, a: ExposureCategory, b: ExposureCategory) -> Self {
        let CategoryPair { cat_a, cat_b } = CategoryPair::new(a, b);
        Self {
            group: group.into(),
            cat_a,
            cat_b,
        }
    }

    pub fn categories(&self) -> CategoryPair {
        CategoryPair {
            cat_a: self.cat_a,
            cat_b: self.cat_b,
        }
    }
}

impl fmt::Display for PairKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.group, self.categories())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExposureCategory::*;

    #[test]
    fn canonical_order() {
        assert_eq!(PairKey::new("CM", Over, Middle), PairKey::new("CM", Middle, Over));
        assert_eq!(PairKey::new("CM", Over, Middle).cat_a, Middle);
    }

    #[test]
    fn index_matches_table() {
        for (i, p) in CATEGORY_PAIRS.iter().enumerate() {
            assert_eq!(p.index(), i, "{p}");
            assert!(p.cat_a <= p.cat_b);
        }
        let mut all: Vec<_> = CATEGORY_PAIRS.to_vec();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 15);
    }
}
