//! CSV encodings for tiles and outcomes.
//!
//! Tiles: header `tile_id,slide_id,patient_id,f0,...,f{d-1}`, one row per
//! tile, features in scientific notation with 9 significant digits.
//! Outcomes: header `patient_id,event,time_6mo` with `event` as 0/1.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::{Cohort, PatientOutcome, TileRecord};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

/// Formats a value with 9 significant digits.
pub(crate) fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub fn save_embeddings(tiles: &[TileRecord], dim: usize, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        write!(w, "tile_id,slide_id,patient_id")?;
        for j in 0..dim {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for t in tiles {
            write!(w, "{},{},{}", t.tile_id, t.slide_id, t.patient_id)?;
            for x in &t.features {
                write!(w, ",{}", fmt_sig9(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn save_outcomes(outcomes: &[PatientOutcome], path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "patient_id,event,time_6mo")?;
        for o in outcomes {
            writeln!(w, "{},{},{}", o.patient_id, u8::from(o.event), o.time)?;
        }
        Ok(())
    })
}

/// Reads a tile CSV. Returns the feature dimension inferred from the header.
pub fn load_tiles(path: &Path) -> Result<(usize, Vec<TileRecord>)> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[..3] != ["tile_id", "slide_id", "patient_id"] {
        return Err(parse_err(path, 1, "header must start with tile_id,slide_id,patient_id"));
    }
    let dim = cols.len() - 3;
    for (j, name) in cols[3..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(parse_err(path, 1, format!("expected column f{j}, found {name:?}")));
        }
    }

    let mut tiles = Vec::new();
    let mut seen = HashSet::new();
    let mut owner: HashMap<u64, u64> = HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields for d={dim}, found {}", dim + 3, row.len()),
            ));
        }
        let id = |i: usize, name: &str| -> Result<u64> {
            row[i]
                .parse::<u64>()
                .map_err(|_| parse_err(path, line, format!("invalid {name} {:?}", &row[i])))
        };
        let tile_id = id(0, "tile_id")?;
        let slide_id = id(1, "slide_id")?;
        let patient_id = id(2, "patient_id")?;
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let x: f64 = row[j + 3]
                .parse()
                .map_err(|_| parse_err(path, line, format!("invalid feature f{j} {:?}", &row[j + 3])))?;
            if !x.is_finite() {
                return Err(parse_err(path, line, format!("non-finite feature f{j}")));
            }
            features.push(x);
        }
        if !seen.insert(tile_id) {
            return Err(parse_err(path, line, format!("duplicate tile_id {tile_id}")));
        }
        if let Some(&p) = owner.get(&slide_id) {
            if p != patient_id {
                return Err(parse_err(
                    path,
                    line,
                    format!("slide {slide_id} already belongs to patient {p}, not {patient_id}"),
                ));
            }
        }
        owner.insert(slide_id, patient_id);
        tiles.push(TileRecord {
            tile_id,
            slide_id,
            patient_id,
            features,
            true_cluster: None,
        });
    }
    Ok((dim, tiles))
}

pub fn load_outcomes(path: &Path) -> Result<Vec<PatientOutcome>> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["patient_id", "event", "time_6mo"] {
        return Err(parse_err(path, 1, "header must be patient_id,event,time_6mo"));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", row.len())));
        }
        let patient_id: u64 = row[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid patient_id {:?}", &row[0])))?;
        let event = match &row[1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_err(path, line, format!("invalid event {other:?}"))),
        };
        let time: u32 = row[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid time_6mo {:?}", &row[2])))?;
        if !seen.insert(patient_id) {
            return Err(parse_err(path, line, format!("duplicate patient_id {patient_id}")));
        }
        out.push(PatientOutcome {
            patient_id,
            event,
            time,
        });
    }
    Ok(out)
}

/// Loads a cohort from a tile CSV and an outcome CSV. Every tile's patient must
/// have an outcome row.
pub fn load_embeddings(tiles_path: &Path, outcomes_path: &Path) -> Result<Cohort> {
    let (dim, tiles) = load_tiles(tiles_path)?;
    let outcomes = load_outcomes(outcomes_path)?;
    let known: HashSet<u64> = outcomes.iter().map(|o| o.patient_id).collect();
    if let Some(t) = tiles.iter().find(|t| !known.contains(&t.patient_id)) {
        return Err(Error::Config(format!(
            "orphan slide {}: patient {} has no row in {}",
            t.slide_id,
            t.patient_id,
            outcomes_path.display()
        )));
    }
    Cohort::new(dim, tiles, outcomes)
}
