use std::path::Path;
use std::process::{Command, Output};

fn pllb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pllb"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

const CONFIG: &str = r#"
name = "cli"
env = "sayselect"
method = "bottleneck"
seeds = [0, 1]
episode_budget = 400
eval_every = 100
record_episodes = false

[backend]
kind = "scripted"

[backend.scripted]
mode = "ideal_sayselect"
"#;

#[test]
fn run_summarize_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let runs = dir.path().join("runs");
    let runs_s = runs.to_str().unwrap();
    ok(&pllb(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        runs_s,
        "--method",
        "bottleneck,tabularq",
        "--threads",
        "2",
    ]));
    for m in ["bottleneck", "tabularq"] {
        for s in 0..2 {
            assert!(runs.join(format!("cli_{m}_sayselect_seed{s}.jsonl")).exists());
        }
    }
    assert!(runs.join("summary_sayselect.csv").exists());

    let o = pllb(&["summarize", runs_s, "--checkpoints", "400"]);
    ok(&o);
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[1].starts_with("bottleneck,400,2,"));
    assert!(lines[2].starts_with("tabularq,400,2,"));

    let plots = dir.path().join("plots");
    ok(&pllb(&["plot", runs_s, "--out", plots.to_str().unwrap()]));
    assert!(plots.join("reward.svg").exists());
    assert!(plots.join("interpretability.svg").exists());
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let o = pllb(&["run", "/nonexistent/config.toml"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let o = pllb(&["run", cfg.to_str().unwrap(), "--method", "sorcery"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sorcery"));
}

#[test]
fn rendered_prompts_match_the_reference_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&pllb(&["render-prompts", "--out", out]));
    let mut n = 0;
    for e in std::fs::read_dir(dir.path()).unwrap() {
        let p = e.unwrap().path();
        let want = std::fs::read_to_string(golden.join(p.file_name().unwrap())).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), want, "{}", p.display());
        n += 1;
    }
    assert_eq!(n, 40);

    // Edited files are kept unless --overwrite is given.
    let edited = dir.path().join("maze_gen__original.txt");
    std::fs::write(&edited, "edited").unwrap();
    assert!(!pllb(&["render-prompts", "--out", out]).status.success());
    assert_eq!(std::fs::read_to_string(&edited).unwrap(), "edited");
    ok(&pllb(&["render-prompts", "--out", out, "--overwrite"]));
    assert_ne!(std::fs::read_to_string(&edited).unwrap(), "edited");
}
