use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TOOL_VERSION: &str = concat!("pevfa-lab ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FileRole {
    Config,
    TrainLog,
    TheoryLog,
    Embeddings,
    Checkpoints,
}

impl FileRole {
    pub fn name(self) -> &'static str {
        match self {
            FileRole::Config => "config",
            FileRole::TrainLog => "train-log",
            FileRole::TheoryLog => "theory-log",
            FileRole::Embeddings => "embeddings",
            FileRole::Checkpoints => "checkpoints",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            FileRole::Config,
            FileRole::TrainLog,
            FileRole::TheoryLog,
            FileRole::Embeddings,
            FileRole::Checkpoints,
        ]
        .into_iter()
        .find(|r| r.name() == s)
    }
}

/// What one run wrote. File paths are relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactManifest {
    pub run_id: String,
    pub experiment: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub files: Vec<(PathBuf, FileRole)>,
}

impl ArtifactManifest {
    pub fn new(run_id: String, experiment: &str, config_hash: String, seed: u64) -> Self {
        Self {
            run_id,
            experiment: experiment.to_owned(),
            config_hash,
            tool_version: TOOL_VERSION.to_owned(),
            seed,
            files: Vec::new(),
        }
    }

    /// Adds a file, replacing the role of an existing entry with the same path.
    pub fn add(&mut self, path: impl Into<PathBuf>, role: FileRole) {
        let path = path.into();
        match self.files.iter_mut().find(|(p, _)| *p == path) {
            Some(e) => e.1 = role,
            None => self.files.push((path, role)),
        }
    }

    pub fn with_role(&self, role: FileRole) -> impl Iterator<Item = &Path> {
        self.files.iter().filter(move |(_, r)| *r == role).map(|(p, _)| p.as_path())
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        fs::write(run_dir.join(MANIFEST_FILE), self.to_string())?;
        Ok(())
    }

    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }
}

impl fmt::Display for ArtifactManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run_id = {}", self.run_id)?;
        writeln!(f, "experiment = {}", self.experiment)?;
        writeln!(f, "config_hash = {}", self.config_hash)?;
        writeln!(f, "tool_version = {}", self.tool_version)?;
        writeln!(f, "seed = {}", self.seed)?;
        for (p, r) in &self.files {
            writeln!(f, "file = {} {}", p.display(), r.name())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ArtifactManifest {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Parse(format!("manifest: {m}"));
        let mut m = ArtifactManifest::new(String::new(), "", String::new(), 0);
        m.tool_version.clear();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(format!("bad line `{line}`")))?;
            match k {
                "run_id" => m.run_id = v.to_owned(),
                "experiment" => m.experiment = v.to_owned(),
                "config_hash" => m.config_hash = v.to_owned(),
                "tool_version" => m.tool_version = v.to_owned(),
                "seed" => m.seed = v.parse().map_err(|_| bad(format!("bad seed `{v}`")))?,
                "file" => {
                    let (p, r) = v.rsplit_once(' ').ok_or_else(|| bad(format!("bad file entry `{v}`")))?;
                    let role = FileRole::parse(r).ok_or_else(|| bad(format!("unknown role `{r}`")))?;
                    m.files.push((PathBuf::from(p), role));
                }
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        if m.run_id.is_empty() || m.config_hash.is_empty() {
            return Err(bad("missing run_id or config_hash".into()));
        }
        Ok(m)
    }
}
