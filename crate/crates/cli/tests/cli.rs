use std::path::Path;
use std::process::{Command, Output};

fn fairpursuit(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairpursuit"))
        .args(args)
        .env("FAIRPURSUIT_OUT", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_works_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["train", "eval", "report", "plot", "verify", "sweep"] {
        let o = fairpursuit(&[sub, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn quick_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairpursuit(&["verify", "--quick"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn lambda_needs_fair_er() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairpursuit(
        &["train", "--strategy", "mutual", "--lambda", "0.5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fairpursuit(&["verify", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_without_results_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("f2.svg");
    let missing = dir.path().join("missing.csv");
    let o = fairpursuit(
        &[
            "plot",
            "--results",
            missing.to_str().unwrap(),
            "--figure",
            "f2",
            "--out",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!svg.exists());
}

#[test]
fn train_eval_report_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = dir.path().join("small.json");
    std::fs::write(
        &config,
        r#"{"train": {"batch_size": 32, "actor_hidden": [16], "critic_hidden": [16], "buffer_capacity": 1000, "updates_per_episode": 2}}"#,
    )
    .unwrap();
    let o = fairpursuit(
        &[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--strategy",
            "fair-er",
            "--lambda",
            "0.5",
            "--episodes",
            "30",
            "--velocities",
            "1.0",
            "--seed",
            "4",
            "--out",
            out,
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let ckpt = dir.path().join("train_fair-er_s4/checkpoints/v_1.00");
    assert!(ckpt.join("agent_1.json").exists());
    assert!(dir.path().join("train_fair-er_s4/episodes.csv").exists());

    let eval = |seed: &str| {
        let o = fairpursuit(
            &[
                "eval",
                "--checkpoint-dir",
                ckpt.to_str().unwrap(),
                "--velocity",
                "1.0",
                "--episodes",
                "10",
                "--seed",
                seed,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    let first = eval("2");
    assert_eq!(first, eval("2"));
    let parsed: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(parsed["episodes"], 10);

    let results = dir.path().join("results.csv");
    std::fs::write(
        &results,
        "strategy,velocity,lambda,seed,success_rate,fairness_bits,mean_steps,captures_agent_1,captures_agent_2,captures_agent_3,no_capture_count\n\
         mutual,1.0,0.0,0,0.9,0.3,40,50,30,10,10\n\
         individual,1.0,0.0,0,0.6,0.5,60,50,5,5,40\n",
    )
    .unwrap();
    let o = fairpursuit(
        &["report", "--results", results.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mutual"));

    let svg = dir.path().join("f2.svg");
    let o = fairpursuit(
        &[
            "plot",
            "--results",
            results.to_str().unwrap(),
            "--figure",
            "f2",
            "--out",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}
