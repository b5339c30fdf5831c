use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn havok(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_havok"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = havok(
        &[
            "generate",
            "--corpus",
            "4",
            "--samples",
            "2000",
            "--out",
            "data",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("data/sequences.csv").exists());

    let o = havok(
        &[
            "cluster",
            "--input",
            "data/sequences.csv",
            "--k",
            "3",
            "--out",
            "c",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let clusters: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("c/clusters.json")).unwrap()).unwrap();
    assert_eq!(clusters["k"], 3);

    let o = havok(
        &[
            "fit",
            "--input",
            "data/sequences.csv",
            "--id",
            "low-00",
            "--tau",
            "1",
            "--dim",
            "20",
            "--rank",
            "5",
            "--out",
            "f",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = havok(
        &[
            "forecast",
            "--input",
            "data/sequences.csv",
            "--model",
            "f/models/low-00.json",
            "--horizon",
            "50",
            "--out",
            "f",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let forecast = fs::read_to_string(d.join("f/forecast_low-00.csv")).unwrap();
    assert_eq!(forecast.lines().count(), 51);

    let o = havok(
        &[
            "stats",
            "--input",
            "f/forcing/low-00.csv",
            "--families",
            "Normal,GEV",
            "--out",
            "s",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(d.join("s/stats/low-00.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[model]\nlamda = 0.1\n").unwrap();
    let o = havok(&["--config", "bad.toml", "pipeline"], d);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));

    assert_eq!(code(&havok(&["pipeline"], d)), 2);
    assert_eq!(code(&havok(&["no-such-command"], d)), 2);
    assert_eq!(code(&havok(&["cluster", "--input", "missing.csv"], d)), 3);

    fs::write(d.join("flat.csv"), "t,a\n0,1\n1,1\n2,1\n3,1\n").unwrap();
    assert_eq!(code(&havok(&["cluster", "--input", "flat.csv"], d)), 3);

    fs::write(d.join("text.csv"), "t,a\n0,1\n1,x\n").unwrap();
    assert_eq!(code(&havok(&["stats", "--input", "text.csv"], d)), 3);
}

#[test]
fn pipeline_subcommand_writes_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&havok(
            &[
                "generate",
                "--corpus",
                "2",
                "--samples",
                "1500",
                "--out",
                "."
            ],
            d
        )),
        0
    );
    fs::write(
        d.join("run.toml"),
        "seed = 4\noutput_dir = \"run\"\n[input]\npath = \"sequences.csv\"\nlayout = \"long\"\n\
         [cluster]\nk = 3\n[embedding]\nd_max = 15\n[model]\nrank = 4\n\
         [forecast]\nhorizon = 50\nhistogram_instants = [5, 49]\n",
    )
    .unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = d.join("run.toml");
    let o = havok(
        &["--config", cfg.to_str().unwrap(), "pipeline"],
        elsewhere.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("run/manifest.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("6 sequences, 3 clusters"));
}
