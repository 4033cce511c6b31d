//! Many configs × seeds, spread over worker threads.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::ExperimentConfig;
use super::record::{RecordError, RunRecord};
use super::run::run_pllb_loop;

/// `{name}_{env}_seed{seed}.jsonl`, with the method standing in for an
/// empty name.
pub fn record_file_name(config: &ExperimentConfig, seed: u64) -> String {
    let stem = if config.name.is_empty() {
        config.method.as_str().to_string()
    } else {
        config
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    };
    format!("{stem}_{}_seed{seed}.jsonl", config.env.as_str())
}

/// Run every (config, seed) pair. Records come back in config order, then
/// seed order, whatever the scheduling. Each run builds its own backend.
pub fn run_suite(
    configs: &[ExperimentConfig],
    out_dir: Option<&Path>,
    threads: usize,
) -> Result<Vec<RunRecord>, RecordError> {
    let jobs: Vec<(&ExperimentConfig, u64)> = configs
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c, s)))
        .collect();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let slots: Vec<Mutex<Option<RunRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cfg, seed)) = jobs.get(i) else {
                    break;
                };
                let rec = run_pllb_loop(cfg, seed);
                *slots[i].lock().expect("slot lock") = Some(rec);
            });
        }
    });
    let records: Vec<RunRecord> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect();
    if let Some(dir) = out_dir {
        for r in &records {
            r.write_path(&dir.join(record_file_name(r.config(), r.seed())))?;
        }
    }
    Ok(records)
}

/// Load every `*.jsonl` record under `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::read_path(p)).collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
