use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pllb_core::episode::PromptVariant;
use pllb_core::harness::{
    at_checkpoints, default_threads, emit_plots, load_records, run_suite, summarize,
    to_csv_string, ExperimentConfig, Method, RunRecord,
};
use pllb_core::lm::prompts::golden_file_name;
use pllb_core::lm::{render_template, Slots, TemplateId};
use pllb_study::{StudyConfig, StudyState};

#[derive(Parser)]
#[command(name = "pllb", version, about = "Policy learning with a language bottleneck")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one or more experiment configs.
    Run {
        configs: Vec<PathBuf>,
        /// Directory for the JSONL run records.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Worker threads; all cores by default.
        #[arg(long)]
        threads: Option<usize>,
        /// Run each config once per listed method instead of its own.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Replace the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Mean and sd per method and checkpoint, as CSV.
    Summarize {
        /// Record files or directories of them.
        records: Vec<PathBuf>,
        /// Only these checkpoints.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reward and interpretability curves as SVG.
    Plot {
        records: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Serve the maze study.
    ServeStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Render every prompt template with bracketed slots.
    RenderPrompts {
        #[arg(long)]
        out: PathBuf,
        /// Replace files whose contents differ.
        #[arg(long)]
        overwrite: bool,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            configs,
            out,
            threads,
            method,
            seeds,
        } => run(&configs, &out, threads, &method, &seeds),
        Command::Summarize {
            records,
            checkpoints,
            out,
        } => {
            let recs = read_records(&records)?;
            let mut rows = summarize(&recs)?;
            if !checkpoints.is_empty() {
                rows = at_checkpoints(&rows, &checkpoints);
            }
            let csv = to_csv_string(&rows);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Plot { records, out } => {
            let recs = read_records(&records)?;
            for p in emit_plots(&recs, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ServeStudy { config, addr } => serve_study(&config, &addr),
        Command::RenderPrompts { out, overwrite } => render_prompts(&out, overwrite),
    }
}

fn run(paths: &[PathBuf], out: &Path, threads: Option<usize>, methods: &[String], seeds: &[u64]) -> Result<()> {
    if paths.is_empty() {
        bail!("no config given");
    }
    let mut configs = Vec::new();
    for p in paths {
        let base = ExperimentConfig::from_path(p)?;
        let variants = if methods.is_empty() {
            vec![base]
        } else {
            methods
                .iter()
                .map(|m| {
                    let method: Method = toml::Value::String(m.clone())
                        .try_into()
                        .with_context(|| format!("unknown method {m}"))?;
                    let mut c = base.clone();
                    c.method = method;
                    c.name = if base.name.is_empty() {
                        m.clone()
                    } else {
                        format!("{}_{m}", base.name)
                    };
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?
        };
        for mut c in variants {
            if !seeds.is_empty() {
                c.seeds = seeds.to_vec();
            }
            c.validate().with_context(|| p.display().to_string())?;
            configs.push(c);
        }
    }
    let threads = threads.unwrap_or_else(default_threads);
    let runs: usize = configs.iter().map(|c| c.seeds.len()).sum();
    log::info!("{runs} runs on {threads} threads into {}", out.display());
    let records = run_suite(&configs, Some(out), threads)?;
    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.is_complete())
        .map(|r| {
            let why = r.status().and_then(|s| s.1).unwrap_or("no status");
            format!("{} seed {}: {why}", r.method().as_str(), r.seed())
        })
        .collect();
    for f in &failed {
        log::error!("incomplete run {f}");
    }
    // Summaries only make sense per environment.
    for env in ["sayselect", "maze"] {
        let group: Vec<RunRecord> = records
            .iter()
            .filter(|r| r.env().as_str() == env)
            .cloned()
            .collect();
        if !group.is_empty() {
            let path = out.join(format!("summary_{env}.csv"));
            std::fs::write(&path, to_csv_string(&summarize(&group)?))?;
            log::info!("wrote {}", path.display());
        }
    }
    if !failed.is_empty() {
        bail!("{} of {runs} runs did not complete", failed.len());
    }
    Ok(())
}

fn read_records(paths: &[PathBuf]) -> Result<Vec<RunRecord>> {
    if paths.is_empty() {
        bail!("no records given");
    }
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(load_records(p).with_context(|| p.display().to_string())?);
        } else {
            out.push(RunRecord::read_path(p).with_context(|| p.display().to_string())?);
        }
    }
    Ok(out)
}

fn serve_study(config: &Path, addr: &str) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: StudyConfig = toml::from_str(&text)?;
    let state = StudyState::new(&cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("study server on http://{}", listener.local_addr()?);
        pllb_study::serve(state, listener).await
    })?;
    Ok(())
}

fn render_prompts(out: &Path, overwrite: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let (mut written, mut same, mut differ) = (0, 0, Vec::new());
    for id in TemplateId::ALL {
        for variant in PromptVariant::ALL {
            let path = out.join(golden_file_name(id, variant));
            let text = render_template(id, variant, &Slots::placeholders());
            match std::fs::read_to_string(&path) {
                Ok(old) if old == text => same += 1,
                Ok(_) if !overwrite => differ.push(path),
                _ => {
                    std::fs::write(&path, text)?;
                    written += 1;
                }
            }
        }
    }
    println!("{written} written, {same} unchanged, {} differ", differ.len());
    if !differ.is_empty() {
        for p in &differ {
            eprintln!("differs: {}", p.display());
        }
        bail!("refusing to replace {} existing files without --overwrite", differ.len());
    }
    Ok(())
}
