use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::trial::TrialLog;

/// Append-only JSONL file of accepted trials. One instance owns the file;
/// callers serialize access through it.
#[derive(Debug)]
pub struct TrialStore {
    path: PathBuf,
    file: File,
    logs: Vec<TrialLog>,
    keys: HashSet<(String, u64)>,
}

impl TrialStore {
    /// Open `path`, loading whatever it already holds.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut logs = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let log: TrialLog = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{} line {}: {e}", path.display(), i + 1),
                    )
                })?;
                logs.push(log);
            }
        }
        let keys = logs.iter().map(|l| (l.participant.clone(), l.maze_seed)).collect();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            logs,
            keys,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, participant: &str, maze_seed: u64) -> bool {
        self.keys.contains(&(participant.to_string(), maze_seed))
    }

    /// Append one log. Returns false, writing nothing, for a duplicate
    /// (participant, maze) pair.
    pub fn append(&mut self, log: TrialLog) -> std::io::Result<bool> {
        if self.contains(&log.participant, log.maze_seed) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(&log).map_err(std::io::Error::from)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.keys.insert((log.participant.clone(), log.maze_seed));
        self.logs.push(log);
        Ok(true)
    }

    pub fn logs(&self) -> &[TrialLog] {
        &self.logs
    }
}
