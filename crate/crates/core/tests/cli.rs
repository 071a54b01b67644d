use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohort-embed"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn cohort-embed")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn every_command_on_a_small_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let corpus = dir.join("corpus.jsonl");
    let data = dir.join("data");
    let words = dir.join("words.txt");

    ok(&[
        "synth", "--classes", "3", "--users", "8", "--posts", "30", "--tokens", "10", "--shared-vocab", "200",
        "--class-vocab", "30", "--lambda", "0.5", "--seed", "2", "--out", p(&corpus),
    ]);
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 24);

    ok(&["ingest", "--input", p(&corpus), "--min-count", "1", "--min-history", "10", "--seed", "1", "--out", p(&data)]);
    for f in ["vocab.tsv", "dataset.jsonl", "labels.csv", "heldout.tsv"] {
        assert!(data.join(f).is_file(), "{f}");
    }

    ok(&[
        "train-words", "--input", p(&data), "--dim", "16", "--window", "3", "--neg", "5", "--epochs", "1", "--lr",
        "0.025", "--seed", "1", "--extra", p(&corpus), "--out", p(&words),
    ]);
    let header = fs::read_to_string(&words).unwrap().lines().next().unwrap().to_string();
    assert!(header.ends_with(" 16"), "{header}");

    for mode in ["user2vec", "pvdbow", "pvdm"] {
        let out = dir.join(format!("users_{mode}.txt"));
        ok(&[
            "train-users", "--mode", mode, "--words", p(&words), "--input", p(&data), "--neg", "5", "--lr", "0.025",
            "--heldout", "0.1", "--epochs", "3", "--dim", "16", "--seed", "1", "--out", p(&out),
        ]);
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 25);
    }
    let users = dir.join("users_user2vec.txt");
    let labels = data.join("labels.csv");

    let feats = dir.join("u2v+bow.csv");
    ok(&["features", "--kind", "u2v+bow", "--input", p(&data), "--users", p(&users), "--out", p(&feats)]);
    let boe = dir.join("boe.csv");
    ok(&["features", "--kind", "boe", "--input", p(&data), "--words", p(&words), "--out", p(&boe)]);
    assert!(fs::read_to_string(&feats).unwrap().starts_with("user_id,label,f0,"));

    let hom = dir.join("homophily");
    let stdout = ok(&["homophily", "--users", p(&users), "--labels", p(&labels), "--k", "5", "--out", p(&hom)]);
    assert!(stdout.contains("macro"));
    assert!(fs::read_to_string(hom.join("roc.csv")).unwrap().starts_with("class,fpr,tpr"));
    let nbr = fs::read_to_string(hom.join("neighbors.csv")).unwrap();
    assert!(nbr.starts_with("query_id,query_label,n0,n1,n2,n3,n4\n"));

    let cv = dir.join("cv");
    let stdout = ok(&["cv", "--features", p(&feats), "--model", "lr", "--k", "4", "--seed", "3", "--out", p(&cv)]);
    assert!(stdout.contains("macro-F1"), "{stdout}");
    assert_eq!(fs::read_to_string(cv.join("lr_u2v+bow_folds.csv")).unwrap().lines().count(), 5);

    let nlse = dir.join("nlse");
    ok(&[
        "train-nlse", "--users", p(&users), "--labels", p(&labels), "--sdim-grid", "4,6", "--lr-grid", "0.1,0.5",
        "--seed", "1", "--out", p(&nlse),
    ]);
    let export = dir.join("export");
    ok(&[
        "export-subspace", "--model", p(&nlse.join("nlse_model.csv")), "--users", p(&users), "--labels", p(&labels),
        "--out", p(&export),
    ]);
    assert_eq!(
        fs::read_to_string(export.join("subspace.csv")).unwrap(),
        fs::read_to_string(nlse.join("subspace.csv")).unwrap()
    );
    assert_eq!(fs::read_to_string(export.join("prototypes.csv")).unwrap().lines().count(), 4);
}

#[test]
fn failures_name_their_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.jsonl");
    let out = run(&["ingest", "--input", p(&missing), "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: ingest:"));

    let out = run(&["run-all", "--bogus-key", "1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config") && err.contains("bogus_key"), "{err}");

    let out = run(&[
        "run-all", "--out-dir", p(tmp.path()), "--synth-users", "4", "--synth-posts", "100", "--word-embeddings",
        p(&tmp.path().join("nope.txt")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-words") && err.contains("nope.txt"), "{err}");
}
