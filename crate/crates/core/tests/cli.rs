use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nil_core::language::generate_compositional;
use nil_core::objectspace::SpaceSpec;

fn nil(args: &[&str], output_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nil"))
        .args(args)
        .env("NIL_OUTPUT_ROOT", output_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn counts_prints_the_toy_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nil(&["counts", "--enumerate"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for line in ["all 256", "unambiguous 24", "compositional 8", "holistic 16", "(agrees)"] {
        assert!(text.contains(line), "{text}");
    }
}

#[test]
fn topsim_of_a_compositional_language_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SpaceSpec::new(2, 8, 2, 8).unwrap();
    let lang = generate_compositional(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let file = tmp.path().join("lang.jsonl");
    lang.save(&file).unwrap();
    let o = nil(
        &["topsim", file.to_str().unwrap(), "--n-values", "8", "--vocab-size", "8"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "1.000000");
}

const SMALL: &[&str] = &[
    "--hidden-size",
    "8",
    "--batch-size",
    "8",
    "--pretrain-speaker-rounds",
    "5",
    "--pretrain-listener-batches",
    "2",
    "--interact-rounds",
    "3",
    "--transmit-pairs",
    "40",
    "--mc-samples",
    "3",
    "--eval-trials",
    "20",
    "--quiet",
];

#[test]
fn run_writes_one_row_per_generation_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--reset", "none", "--generations", "15"];
    args.extend_from_slice(SMALL);
    let o = nil(&args, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("run");
    assert!(dir.join("manifest.json").is_file());
    let mut r = csv::Reader::from_path(dir.join("generations.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        &header[..9],
        [
            "run_id",
            "seed",
            "reset_strategy",
            "generation",
            "end_accuracy",
            "rho_greedy",
            "rho_expected_mc",
            "dataset_rho",
            "message_types"
        ]
    );
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|row| &row[2] == "none"));
    assert!(dir.join("runs/none-s0/gen15/language.jsonl").is_file());
    assert!(dir.join("runs/none-s0/speaker.json").is_file());
    assert!(dir.join("rho.svg").is_file());

    let svg = tmp.path().join("types.svg");
    let p = nil(
        &[
            "plot",
            dir.join("generations.csv").to_str().unwrap(),
            "--x",
            "generation",
            "--y",
            "message_types",
            "--out",
            svg.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(p.status.code(), Some(0));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn configuration_errors_exit_2_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = nil(
        &["run", "--vocab-size", "1", "--output-dir", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[nil]\ngenerashuns = 3\n").unwrap();
    let o = nil(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("generashuns"));

    assert_eq!(nil(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn plot_names_missing_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("t.csv");
    std::fs::write(&csv, "a,b\n1,2\n").unwrap();
    let o = nil(
        &["plot", csv.to_str().unwrap(), "--x", "a", "--y", "rho", "--out", "x.svg"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rho"));
}

#[test]
fn config_file_drives_a_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[experiment]\nseeds = [3]\n\n[net]\nhidden_size = 8\n\n[train]\nbatch_size = 8\n\n\
         [nil]\ngenerations = 2\npretrain_listener_batches = 2\ninteract_rounds = 3\ntransmit_pairs = 30\n\
         mc_samples = 3\neval_trials = 20\n\n[sweep]\naxis = \"pretrain_speaker_rounds\"\nvalues = [\"2\", \"6\"]\n",
    )
    .unwrap();
    let o = nil(&["sweep", "--config", cfg.to_str().unwrap(), "--quiet"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(tmp.path().join("sweep/analysis.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!((&rows[0][3], &rows[1][3]), ("2", "6"));
    assert!(rows.iter().all(|row| &row[9] == "ok"));
}
