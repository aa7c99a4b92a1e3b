//! Output files. Every CSV and JSONL file starts with a config-hash header
//! line; wall-clock times go only to the `run.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const CSV_HASH_PREFIX: &str = "# config_sha256=";
pub const META_FILE: &str = "run.meta.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
    hash: String,
    prefix: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

impl OutputDir {
    pub fn create(root: &Path, scenario: &str, hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            hash: hash.to_string(),
            prefix: format!("{scenario}-{}", &hash[..8.min(hash.len())]),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// `<scenario>-<hash8>-<cell>[-seed<s>].<ext>`
    pub fn path(&self, cell: &str, seed: Option<u64>, ext: &str) -> PathBuf {
        let name = match seed {
            Some(s) => format!("{}-{cell}-seed{s}.{ext}", self.prefix),
            None => format!("{}-{cell}.{ext}", self.prefix),
        };
        self.root.join(name)
    }

    pub fn write_csv<I>(&self, path: &Path, header: &[&str], rows: I) -> Result<PathBuf, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let malformed = |e: csv::Error| CliError::Malformed(e.to_string());
        w.write_record(header).map_err(malformed)?;
        for r in rows {
            w.write_record(&r).map_err(malformed)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Malformed(e.to_string()))?;
        let mut text = format!("{CSV_HASH_PREFIX}{}\n", self.hash).into_bytes();
        text.extend(body);
        fs::write(path, text).map_err(io_err(path))?;
        Ok(path.to_path_buf())
    }

    /// The hash header line is a JSON object so every line parses.
    pub fn write_jsonl(&self, path: &Path, body: &str) -> Result<PathBuf, CliError> {
        let text = format!("{{\"config_sha256\":\"{}\"}}\n{body}", self.hash);
        fs::write(path, text).map_err(io_err(path))?;
        Ok(path.to_path_buf())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// File content without the hash header line.
pub fn body_of(text: &str) -> &str {
    match text.strip_prefix(CSV_HASH_PREFIX) {
        Some(rest) => rest.split_once('\n').map_or("", |(_, b)| b),
        None => text,
    }
}

/// Header and rows of a CSV written by [`OutputDir::write_csv`].
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
        Self::parse(body_of(&text)).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
    }

    pub fn parse(body: &str) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header = r
            .headers()
            .map_err(|e| CliError::Malformed(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(CliError::Malformed("missing header".into()));
        }
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| CliError::Malformed(e.to_string()))?;
        Ok(CsvTable { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Malformed(format!("no column `{name}`")))
    }

    /// Numeric column; empty cells read as NaN.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r.get(c).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>()
                        .map_err(|_| CliError::Malformed(format!("`{cell}` in column `{name}` is not a number")))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_line_is_stripped_from_body() {
        assert_eq!(body_of("# config_sha256=ab\nx,y\n1,2\n"), "x,y\n1,2\n");
        assert_eq!(body_of("x\n"), "x\n");
    }

    #[test]
    fn written_csv_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path(), "probe", "0123456789abcdef").unwrap();
        let p = out.path("main", Some(2), "csv");
        assert!(p.ends_with("probe-01234567-main-seed2.csv"));
        out.write_csv(&p, &["a", "b"], vec![vec!["1".into(), "".into()], vec!["2.5".into(), "3".into()]])
            .unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# config_sha256=0123456789abcdef\n"));
        let t = CsvTable::read(&p).unwrap();
        assert_eq!(t.column("a").unwrap(), vec![1.0, 2.5]);
        assert!(t.column("b").unwrap()[0].is_nan());
        assert!(t.column("c").is_err());
    }

    #[test]
    fn non_numeric_cell_is_malformed() {
        let t = CsvTable::parse("v\nabc\n").unwrap();
        assert!(matches!(t.column("v"), Err(CliError::Malformed(_))));
    }
}
