use mtlab_core::asymptotics_reporter::Verdict;
use mtlab_core::Error;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub verdict: Verdict,
}

impl Check {
    pub fn new(id: impl Into<String>, pass: bool) -> Check {
        Check { id: id.into(), verdict: if pass { Verdict::Pass } else { Verdict::Fail } }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: usize,
}

/// Collects artifacts in the output directory. Every file is written to a
/// temporary sibling and renamed into place.
pub struct Outputs {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::ConfigInvalid { field: "out".into(), reason: format!("{}: {e}", path.display()) }
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Outputs, Error> {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), artifacts: Vec::new(), checks: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, Error> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io(&self.dir, e))?;
        tmp.write_all(contents).map_err(|e| io(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| io(&path, e))?;
        tmp.persist(&path).map_err(|e| io(&path, e.error))?;
        self.artifacts.push(Artifact { path: name.into(), bytes: contents.len() });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, Error> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        self.write(name, &bytes)
    }

    pub fn check(&mut self, id: impl Into<String>, pass: bool) {
        self.checks.push(Check::new(id, pass));
    }

    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
