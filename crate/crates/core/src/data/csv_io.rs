//! CSV directory layout for paired datasets.
//!
//! ```text
//! <dir>/index.csv          sample_index,user_id,label      (label may be empty)
//! <dir>/<modality_id>.csv  sample_index,c0_t0,c0_t1,…,c{C-1}_t{T-1}
//! ```
//!
//! Rows sharing a `sample_index` are paired. A modality row may hold a longer
//! recording than the schema's window; it is then cut into consecutive
//! windows of the schema length, advancing by `timesteps - overlap`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::paired::{ModalityWindow, PairedDataset};

/// Ordered `(modality_id, (channels, timesteps))` entries.
pub type Schema = Vec<(String, (usize, usize))>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    /// Overlap between consecutive windows cut from one row.
    pub overlap: usize,
    /// Class count; inferred as `max(label) + 1` when absent.
    pub class_count: Option<usize>,
}

struct IndexRow {
    sample: u64,
    user: u32,
    label: Option<usize>,
}

struct ModalityTable {
    channels: usize,
    row_len: usize,
    rows: HashMap<u64, Vec<f64>>,
    order: Vec<u64>,
}

fn parse<T: std::str::FromStr>(file: &str, row: usize, column: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        file: file.to_owned(),
        row,
        column: column.to_owned(),
        value: value.to_owned(),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let name = "index.csv";
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let want = ["sample_index", "user_id", "label"];
    if headers.len() != 3 || headers.iter().zip(want).any(|(h, w)| h.trim() != w) {
        return Err(Error::Data(format!(
            "{name}: header must be sample_index,user_id,label"
        )));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let sample: u64 = parse(name, row, "sample_index", &rec[0])?;
        if !seen.insert(sample) {
            return Err(Error::Data(format!("{name}: duplicate sample_index {sample}")));
        }
        let user = parse(name, row, "user_id", &rec[1])?;
        let label = match rec[2].trim() {
            "" => None,
            v => Some(parse(name, row, "label", v)?),
        };
        out.push(IndexRow {
            sample,
            user,
            label,
        });
    }
    Ok(out)
}

/// Parse a `c{c}_t{t}` column name.
fn cell_position(name: &str) -> Option<(usize, usize)> {
    let rest = name.trim().strip_prefix('c')?;
    let (c, t) = rest.split_once("_t")?;
    Some((c.parse().ok()?, t.parse().ok()?))
}

fn read_modality(path: &Path, name: &str) -> Result<ModalityTable> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("sample_index") {
        return Err(Error::Data(format!("{name}: first column must be sample_index")));
    }
    let mut positions = Vec::with_capacity(headers.len() - 1);
    for h in headers.iter().skip(1) {
        positions.push(
            cell_position(h)
                .ok_or_else(|| Error::Data(format!("{name}: unrecognized column {h:?}")))?,
        );
    }
    let channels = positions.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    let row_len = positions.iter().map(|p| p.1 + 1).max().unwrap_or(0);
    let mut covered = vec![false; channels * row_len];
    for &(c, t) in &positions {
        let slot = &mut covered[c * row_len + t];
        if *slot {
            return Err(Error::Data(format!("{name}: duplicate column c{c}_t{t}")));
        }
        *slot = true;
    }
    if covered.iter().any(|c| !c) {
        return Err(Error::Data(format!(
            "{name}: columns do not cover a full {channels}×{row_len} grid"
        )));
    }

    let mut rows = HashMap::new();
    let mut order = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let sample: u64 = parse(name, row, "sample_index", &rec[0])?;
        let mut data = vec![0.0; channels * row_len];
        for ((c, t), (value, header)) in positions.iter().zip(rec.iter().skip(1).zip(headers.iter().skip(1))) {
            let v: f64 = parse(name, row, header, value)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    file: name.to_owned(),
                    row,
                    column: header.to_owned(),
                    value: value.to_owned(),
                });
            }
            data[c * row_len + t] = v;
        }
        if rows.insert(sample, data).is_some() {
            return Err(Error::Data(format!("{name}: duplicate sample_index {sample}")));
        }
        order.push(sample);
    }
    Ok(ModalityTable {
        channels,
        row_len,
        rows,
        order,
    })
}

/// Modality ids with a CSV file in `dir`, sorted, excluding `index.csv`.
pub fn discover_modalities(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if stem != "index" {
                    ids.push(stem.to_owned());
                }
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Read a paired dataset. With no schema, every `<id>.csv` in the directory
/// is a modality whose window is one full row.
pub fn ingest_csv(dir: &Path, schema: Option<&Schema>, options: &IngestOptions) -> Result<PairedDataset> {
    let index = read_index(&dir.join("index.csv"))?;
    let ids: Vec<String> = match schema {
        Some(s) => s.iter().map(|(id, _)| id.clone()).collect(),
        None => discover_modalities(dir)?,
    };
    if ids.len() < 2 {
        return Err(Error::Data(format!(
            "{}: found {} modality files, need at least 2",
            dir.display(),
            ids.len()
        )));
    }

    let known: HashSet<u64> = index.iter().map(|r| r.sample).collect();
    let mut tables = Vec::with_capacity(ids.len());
    for id in &ids {
        let file = format!("{id}.csv");
        let table = read_modality(&dir.join(&file), &file)?;
        let missing: Vec<u64> = index
            .iter()
            .map(|r| r.sample)
            .filter(|s| !table.rows.contains_key(s))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingIndices {
                file,
                indices: missing,
            });
        }
        let extra: Vec<u64> = table.order.iter().copied().filter(|s| !known.contains(s)).collect();
        if !extra.is_empty() {
            return Err(Error::Data(format!(
                "{file}: sample_index values {extra:?} are absent from index.csv"
            )));
        }
        tables.push(table);
    }

    // window shape and count per row for each modality
    let mut layout = Vec::with_capacity(ids.len());
    for (id, table) in ids.iter().zip(&tables) {
        let (channels, timesteps) = match schema {
            Some(s) => s.iter().find(|(m, _)| m == id).expect("id from schema").1,
            None => (table.channels, table.row_len),
        };
        if channels != table.channels {
            return Err(Error::Data(format!(
                "{id}.csv has {} channels, schema expects {channels}",
                table.channels
            )));
        }
        if timesteps == 0 || table.row_len < timesteps {
            return Err(Error::Data(format!(
                "{id}.csv rows hold {} timesteps, shorter than the {timesteps}-step window",
                table.row_len
            )));
        }
        if options.overlap >= timesteps {
            return Err(Error::Input(format!(
                "overlap {} must be smaller than the {timesteps}-step window",
                options.overlap
            )));
        }
        let stride = timesteps - options.overlap;
        let count = (table.row_len - timesteps) / stride + 1;
        layout.push((channels, timesteps, stride, count));
    }
    let counts: Vec<usize> = layout.iter().map(|l| l.3).collect();
    if counts.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Data(format!(
            "modalities yield different window counts per row: {counts:?}"
        )));
    }

    let class_count = match options.class_count {
        Some(c) => c,
        None => index.iter().filter_map(|r| r.label).max().map_or(0, |m| m + 1),
    };
    let mut windows: Vec<Vec<ModalityWindow>> = vec![Vec::new(); ids.len()];
    for r in &index {
        for (m, (id, table)) in ids.iter().zip(&tables).enumerate() {
            let (channels, timesteps, stride, count) = layout[m];
            let row = &table.rows[&r.sample];
            for w in 0..count {
                let start = w * stride;
                let mut data = Vec::with_capacity(channels * timesteps);
                for c in 0..channels {
                    let base = c * table.row_len + start;
                    data.extend_from_slice(&row[base..base + timesteps]);
                }
                windows[m].push(ModalityWindow {
                    modality_id: id.clone(),
                    channels,
                    timesteps,
                    data,
                    user_id: r.user,
                    label: r.label,
                });
            }
        }
    }
    let ds = PairedDataset {
        modalities: ids,
        windows,
        class_count,
    };
    if let Some(v) = crate::paired::validate_paired(&ds).first() {
        return Err(Error::Data(format!("ingested dataset is malformed: {v:?}")));
    }
    Ok(ds)
}

/// Write `ds` in the CSV layout, sample indices numbered from 0.
pub fn write_csv_layout(ds: &PairedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("index.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["sample_index", "user_id", "label"])?;
    for k in 0..ds.len() {
        let label = ds.label(k).map(|l| l.to_string()).unwrap_or_default();
        w.write_record([k.to_string(), ds.user(k).to_string(), label])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for (m, id) in ds.modalities.iter().enumerate() {
        let (c, t) = ds.shape(m).unwrap_or((0, 0));
        let path = dir.join(format!("{id}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["sample_index".to_owned()];
        for ci in 0..c {
            for ti in 0..t {
                header.push(format!("c{ci}_t{ti}"));
            }
        }
        w.write_record(&header)?;
        for (k, win) in ds.windows[m].iter().enumerate() {
            let mut rec = Vec::with_capacity(1 + win.data.len());
            rec.push(k.to_string());
            rec.extend(win.data.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Group sample positions by user, for reporting.
pub fn samples_per_user(ds: &PairedDataset) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for k in 0..ds.len() {
        *out.entry(ds.user(k)).or_default() += 1;
    }
    out
}
