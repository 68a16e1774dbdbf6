//! Dataset manifest: one CSV row per image.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REQUIRED_COLUMNS: [&str; 5] = ["image_id", "subject_id", "group", "image_path", "mask_path"];
const OPTIONAL_COLUMN: &str = "embedding_index";

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub subject_id: String,
    pub group: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub embedding_index: Option<usize>,
}

/// Parses a manifest. Relative image and mask paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    parse_manifest(file, path, &base)
}

/// Parses manifest text from any reader; `origin` is used in error messages.
pub fn parse_manifest<R: std::io::Read>(reader: R, origin: &Path, base: &Path) -> Result<Vec<ImageRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let found: Vec<&str> = header.iter().collect();
    let has_index = match found.as_slice() {
        cols if cols == REQUIRED_COLUMNS => false,
        [head @ .., last] if head == REQUIRED_COLUMNS && *last == OPTIONAL_COLUMN => true,
        _ => {
            return Err(Error::MalformedHeader {
                path: origin.to_path_buf(),
                expected: format!("{}[,{}]", REQUIRED_COLUMNS.join(","), OPTIONAL_COLUMN),
                found: found.join(","),
            })
        }
    };

    let mut records = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(origin, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("").to_string();

        let image_id = field(0);
        let subject_id = field(1);
        let group = field(2);
        for (name, value) in [("image_id", &image_id), ("subject_id", &subject_id), ("group", &group)] {
            if value.is_empty() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    message: format!("empty {name}"),
                });
            }
        }

        let embedding_index = if has_index {
            match row.get(5).unwrap_or("") {
                "" => None,
                raw => Some(raw.parse::<usize>().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    message: format!("embedding_index `{raw}` is not a nonnegative integer"),
                })?),
            }
        } else {
            None
        };

        if let Some(&first_line) = seen.get(&image_id) {
            return Err(Error::DuplicateId {
                id: image_id,
                first_line,
                second_line: line,
            });
        }
        seen.insert(image_id.clone(), line);

        records.push(ImageRecord {
            image_id,
            subject_id,
            group,
            image_path: base.join(field(3)),
            mask_path: base.join(field(4)),
            embedding_index,
        });
    }

    if records.is_empty() {
        return Err(Error::EmptyManifest {
            path: origin.to_path_buf(),
        });
    }
    Ok(records)
}

/// Checks every record's group against a declared group set.
pub fn check_groups(records: &[ImageRecord], declared: &BTreeSet<String>) -> Result<()> {
    for rec in records {
        if !declared.contains(&rec.group) {
            return Err(Error::Input(format!(
                "image `{}` has undeclared group `{}`",
                rec.image_id, rec.group
            )));
        }
    }
    Ok(())
}

/// Distinct groups in sorted order.
pub fn distinct_groups(records: &[ImageRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.group.clone()).collect()
}

/// Writes records back out in manifest form. Paths are written as given.
pub fn write_manifest(path: impl AsRef<Path>, records: &[ImageRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let with_index = records.iter().any(|r| r.embedding_index.is_some());
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    if with_index {
        header.push(OPTIONAL_COLUMN);
    }
    wtr.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![
            r.image_id.clone(),
            r.subject_id.clone(),
            r.group.clone(),
            r.image_path.display().to_string(),
            r.mask_path.display().to_string(),
        ];
        if with_index {
            row.push(r.embedding_index.map(|i| i.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ImageRecord>> {
        parse_manifest(text.as_bytes(), Path::new("m.csv"), Path::new("/data"))
    }

    #[test]
    fn two_rows_in_order() {
        let recs = parse(
            "image_id,subject_id,group,image_path,mask_path\n\
             b,s1,CM,b.png,b_mask.png\n\
             a,s2,CF,a.png,a_mask.png\n",
        )
        .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].image_id, "b");
        assert_eq!(recs[1].image_id, "a");
        assert_eq!(recs[0].image_path, PathBuf::from("/data/b.png"));
        assert_eq!(recs[0].embedding_index, None);
    }

    #[test]
    fn optional_embedding_index() {
        let recs = parse(
            "image_id,subject_id,group,image_path,mask_path,embedding_index\n\
             a,s,CM,a.png,a.png,3\n\
             b,s,CM,b.png,b.png,\n",
        )
        .unwrap();
        assert_eq!(recs[0].embedding_index, Some(3));
        assert_eq!(recs[1].embedding_index, None);
    }

    #[test]
    fn duplicate_reports_id_and_lines() {
        let text = "image_id,subject_id,group,image_path,mask_path\n\
                    a,s,CM,p,q\n\
                    x,s,CM,p,q\n\
                    b,s,CM,p,q\n\
                    c,s,CM,p,q\n\
                    d,s,CM,p,q\n\
                    x,s,CM,p,q\n";
        match parse(text) {
            Err(Error::DuplicateId {
                id,
                first_line,
                second_line,
            }) => {
                assert_eq!(id, "x");
                assert_eq!((first_line, second_line), (3, 7));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("`x`") && msg.contains('3') && msg.contains('7'));
    }

    #[test]
    fn rejects_bad_header() {
        let err = parse("id,subject,group,image,mask\na,b,c,d,e\n").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
    }

    #[test]
    fn rejects_empty() {
        let err = parse("image_id,subject_id,group,image_path,mask_path\n").unwrap_err();
        assert!(matches!(err, Error::EmptyManifest { .. }));
    }

    #[test]
    fn rejects_bad_index() {
        let err = parse("image_id,subject_id,group,image_path,mask_path,embedding_index\na,s,CM,p,q,-1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn undeclared_group_rejected() {
        let recs = parse("image_id,subject_id,group,image_path,mask_path\na,s,XX,p,q\n").unwrap();
        let declared: BTreeSet<String> = ["CM".to_string()].into();
        assert!(check_groups(&recs, &declared).is_err());
    }
}
