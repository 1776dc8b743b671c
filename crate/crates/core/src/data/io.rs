//! Interaction TSV: `user_id<TAB>item_id<TAB>domain_id[<TAB>timestamp]`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, DatasetBuilder, InteractionDataset};

pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionDataset, DataError> {
    let f = File::open(path.as_ref()).map_err(|e| DataError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })?;
    read_interactions(BufReader::new(f))
}

/// Parses interaction lines. Blank lines are skipped; a fourth column
/// (timestamp) is accepted and ignored.
pub fn read_interactions<R: BufRead>(reader: R) -> Result<InteractionDataset, DataError> {
    let mut builder = DatasetBuilder::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(empty) = fields[..3].iter().position(|f| f.is_empty()) {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("field {} is empty", empty + 1),
            });
        }
        builder.push(fields[0], fields[1], fields[2])?;
    }
    builder.finish()
}

pub fn write_interactions<W: Write>(mut w: W, ds: &InteractionDataset) -> std::io::Result<()> {
    for it in ds.interactions() {
        writeln!(
            w,
            "{}\t{}\t{}",
            ds.user_id(it.user),
            ds.item_id(it.domain, it.item),
            ds.domain_id(it.domain)
        )?;
    }
    w.flush()
}

pub fn save_interactions(path: impl AsRef<Path>, ds: &InteractionDataset) -> Result<(), DataError> {
    let p = path.as_ref().display().to_string();
    let f = File::create(path.as_ref()).map_err(|e| DataError::Io {
        path: p.clone(),
        source: e,
    })?;
    write_interactions(BufWriter::new(f), ds).map_err(|e| DataError::Io { path: p, source: e })
}
