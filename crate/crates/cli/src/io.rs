//! Reading and writing the tool's files: the site-by-sample CSV matrix, the
//! dictionary JSON document, and result tables with a metadata preamble.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use shared_kernel::{ConcentrationVector, KernelDictionary, ScreeningDataset, TruncNormalKernel};

use crate::failure::{Failure, Outcome};

/// Version of the on-disk layouts written by this tool.
pub const ARTIFACT_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance attached to every output: the seed and an echo of the
/// effective configuration with its hash.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub artifact_version: u32,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub config: Value,
}

impl Metadata {
    pub fn new(seed: u64, config: Value) -> Self {
        let text = serde_json::to_string(&config).expect("JSON values always serialize");
        Metadata {
            artifact_version: ARTIFACT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: sha256_hex(text.as_bytes()),
            config,
        }
    }

    fn preamble(&self) -> String {
        format!(
            "# artifact_version: {}\n# tool_version: {}\n# seed: {}\n# config_sha256: {}\n# config: {}\n",
            self.artifact_version,
            self.tool_version,
            self.seed,
            self.config_sha256,
            serde_json::to_string(&self.config).expect("JSON values always serialize"),
        )
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("metadata serializes")
    }
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))
}

/// Writes a CSV table preceded by the metadata block and any extra
/// `# key: value` lines.
pub fn write_table<I>(
    path: &Path,
    meta: &Metadata,
    notes: &[(&str, String)],
    header: &[String],
    rows: I,
) -> Outcome<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = create(path)?;
    out.write_all(meta.preamble().as_bytes())?;
    for (key, value) in notes {
        writeln!(out, "# {key}: {value}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Outcome<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))
}

/// Parses the site-by-sample matrix.
///
/// The first non-comment row holds a label in its first cell followed by one
/// 0/1 group label per sample. Every later row is a site id followed by one
/// value in `[0, 1]` per sample. Lines starting with `#` are skipped. Columns
/// in messages count from 1 and include the id column.
pub fn parse_dataset(bytes: &[u8]) -> Outcome<ScreeningDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Failure::data("empty file: no header row")),
    };
    if header.len() < 2 {
        return Err(Failure::data("header row has no sample columns"));
    }
    let group = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, cell)| match cell {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(Failure::data(format!(
                "header column {}: group label '{other}' must be 0 or 1",
                c + 1
            ))),
        })
        .collect::<Outcome<Vec<u8>>>()?;
    let n = group.len();

    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for record in records {
        let record = record?;
        let site = record.get(0).unwrap_or_default().to_string();
        if site.is_empty() {
            let line = record.position().map_or(0, |p| p.line());
            return Err(Failure::data(format!("line {line}: missing site id")));
        }
        if !seen.insert(site.clone()) {
            return Err(Failure::data(format!("site {site}: duplicate site id")));
        }
        if record.len() != n + 1 {
            return Err(Failure::data(format!(
                "site {site}: expected {n} values, found {}",
                record.len() - 1
            )));
        }
        for (c, cell) in record.iter().enumerate().skip(1) {
            let at = || format!("site {site}, column {} (sample {c})", c + 1);
            if cell.is_empty() {
                return Err(Failure::data(format!("{}: missing value", at())));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Failure::data(format!("{}: '{cell}' is not a number", at())))?;
            if v.is_nan() {
                return Err(Failure::data(format!("{}: value is NaN", at())));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Failure::data(format!(
                    "{}: value {cell} is outside [0,1]",
                    at()
                )));
            }
            values.push(v);
        }
        ids.push(site);
    }
    if ids.is_empty() {
        return Err(Failure::data("no sites"));
    }
    Ok(ScreeningDataset::new(values, group, ids)?)
}

/// Reads a dataset and returns it with the SHA-256 of the file contents.
pub fn read_dataset(path: &Path) -> Outcome<(ScreeningDataset, String)> {
    let bytes = read_bytes(path)?;
    let ds = parse_dataset(&bytes).map_err(|e| e.context(&path.display().to_string()))?;
    Ok((ds, sha256_hex(&bytes)))
}

pub fn write_dataset(path: &Path, meta: &Metadata, ds: &ScreeningDataset) -> Outcome<()> {
    let header: Vec<String> = std::iter::once("site_id".to_string())
        .chain(ds.group().iter().map(|g| g.to_string()))
        .collect();
    let rows = (0..ds.n_sites()).map(|m| {
        std::iter::once(ds.site_ids()[m].clone())
            .chain(ds.row(m).iter().map(|&v| fmt_float(v)))
            .collect()
    });
    write_table(path, meta, &[], &header, rows)
}

/// On-disk layout of a dictionary.
#[derive(Debug, Serialize, Deserialize)]
pub struct DictionaryFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub kernels: Vec<TruncNormalKernel>,
    pub alpha: ConcentrationVector,
    #[serde(default)]
    pub meta: Value,
}

pub fn write_dictionary(path: &Path, dictionary: &KernelDictionary, meta: Value) -> Outcome<()> {
    let file = DictionaryFile {
        k: dictionary.k(),
        kernels: dictionary.kernels().to_vec(),
        alpha: dictionary.alpha().clone(),
        meta,
    };
    write_json(path, &serde_json::to_value(&file)?)
}

pub fn parse_dictionary(bytes: &[u8]) -> Outcome<KernelDictionary> {
    let file: DictionaryFile = serde_json::from_slice(bytes)?;
    if file.kernels.len() != file.k || file.alpha.len() != file.k {
        return Err(Failure::data(format!(
            "dictionary declares K={} but lists {} kernels and {} concentration entries",
            file.k,
            file.kernels.len(),
            file.alpha.len()
        )));
    }
    Ok(KernelDictionary::new(file.kernels, file.alpha)?)
}

/// Reads a dictionary and returns it with the SHA-256 of the file contents.
pub fn read_dictionary(path: &Path) -> Outcome<(KernelDictionary, String)> {
    let bytes = read_bytes(path)?;
    let dict = parse_dictionary(&bytes).map_err(|e| e.context(&path.display().to_string()))?;
    Ok((dict, sha256_hex(&bytes)))
}
