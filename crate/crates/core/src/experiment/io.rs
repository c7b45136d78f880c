//! CSV and manifest plumbing.
//!
//! CSVs use ',' separators, a header row, LF line endings and floats with
//! 17 significant digits, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::greedy::{Provenance, SensorSet};

use super::CliError;

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn parse_f64(s: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Io(format!("not a number: {s:?}")))
}

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let header = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Io(format!("missing column {name:?}")))
    }
}

/// Long-format sensor sets: one row per sensor.
pub fn sets_table(sets: &[SensorSet], centers: &[[f64; 2]]) -> CsvTable {
    let mut t = CsvTable::new(["set_id", "provenance", "rank", "sensor_index", "x1", "x2"]);
    for set in sets {
        for (rank, &k) in set.indices.iter().enumerate() {
            t.push(vec![
                set.id.clone(),
                set.provenance.as_str().into(),
                rank.to_string(),
                k.to_string(),
                fmt_f64(centers[k][0]),
                fmt_f64(centers[k][1]),
            ]);
        }
    }
    t
}

/// Reads sets written by [`sets_table`], keeping their order of appearance.
pub fn read_sets(path: &Path, n_lib: usize) -> Result<Vec<SensorSet>, CliError> {
    let t = CsvTable::read(path)?;
    let (ci, cp, ck) = (t.column("set_id")?, t.column("provenance")?, t.column("sensor_index")?);
    let mut order: Vec<(String, Provenance, Vec<usize>)> = Vec::new();
    for row in &t.rows {
        let prov = Provenance::parse(&row[cp])
            .ok_or_else(|| CliError::Io(format!("unknown provenance {:?}", row[cp])))?;
        let k: usize = row[ck]
            .parse()
            .map_err(|_| CliError::Io(format!("bad sensor index {:?}", row[ck])))?;
        match order.iter_mut().find(|s| s.0 == row[ci]) {
            Some(s) => s.2.push(k),
            None => order.push((row[ci].clone(), prov, vec![k])),
        }
    }
    order
        .into_iter()
        .map(|(id, prov, idx)| SensorSet::new(id, prov, idx, n_lib).map_err(CliError::from))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub status: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// Provenance of the files in an output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub rb_hash: String,
    pub commands: BTreeMap<String, CommandRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    /// Loads the manifest in `dir`, starting afresh if it is missing or
    /// belongs to a different configuration.
    pub fn open(dir: &Path, config_hash: &str, rb_hash: &str) -> Self {
        let fresh = || RunManifest {
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            rb_hash: rb_hash.into(),
            commands: BTreeMap::new(),
        };
        std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .filter(|m| m.config_hash == config_hash)
            .unwrap_or_else(fresh)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits_and_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
            assert_eq!(parse_f64(&s).unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
    }

    #[test]
    fn csv_uses_lf_and_sets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let centers = crate::sensors::grid_centers(3, [0.0, 1.0]);
        let sets = vec![
            SensorSet::new("greedy", Provenance::Greedy, vec![4, 0, 8], 9).unwrap(),
            SensorSet::new("random_00", Provenance::Random, vec![1, 2], 9).unwrap(),
        ];
        let path = dir.path().join("s.csv");
        sets_table(&sets, &centers).write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(!bytes.contains(&b'\r'));
        assert!(bytes.starts_with(b"set_id,provenance,rank,sensor_index,x1,x2\n"));
        assert_eq!(read_sets(&path, 9).unwrap(), sets);
        assert!(read_sets(&path, 5).is_err());
    }

    #[test]
    fn manifest_resets_on_new_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::open(dir.path(), "a", "r");
        m.commands.insert("select".into(), CommandRecord { status: "complete".into(), ..Default::default() });
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::open(dir.path(), "a", "r"), m);
        assert!(RunManifest::open(dir.path(), "b", "r").commands.is_empty());
    }
}
