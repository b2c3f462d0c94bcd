use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_meloform");

fn meloform(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("MELOFORM_NGRAM_TABLE")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn generate(dir: &Path, form: &str, seed: &str) {
    ok(&meloform(
        dir,
        &[
            "generate",
            "--form",
            form,
            "--key",
            "2",
            "--mode",
            "minor",
            "--tempo",
            "90",
            "--phrase-bars",
            "4",
            "--seed",
            seed,
            "--out",
            "m.mid",
            "--json",
            "m.json",
        ],
    ));
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "A(a1,a1)B(b1,b2)", "5");
    let first = (
        fs::read(dir.path().join("m.json")).unwrap(),
        fs::read(dir.path().join("m.mid")).unwrap(),
    );
    generate(dir.path(), "A(a1,a1)B(b1,b2)", "5");
    let second = (
        fs::read(dir.path().join("m.json")).unwrap(),
        fs::read(dir.path().join("m.mid")).unwrap(),
    );
    assert_eq!(first, second);
    let doc = json(&dir.path().join("m.json"));
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["form"], "A(a1,a1)B(b1,b2)");
    assert_eq!(doc["meta"]["key_root"], 2);
    assert_eq!(doc["meta"]["mode"], "minor");
}

#[test]
fn presets_generate() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["verse_chorus", "rondo", "variational", "sonata"] {
        ok(&meloform(
            dir.path(),
            &[
                "generate", "--preset", preset, "--seed", "1", "--out", "p.mid",
            ],
        ));
    }
}

#[test]
fn refine_analyze_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "A(a1,a2)B(b1,b1)", "3");
    fs::create_dir(d.join("out")).unwrap();
    ok(&meloform(
        d,
        &[
            "refine",
            "--in",
            "m.json",
            "--refiner",
            "baseline",
            "--seed",
            "4",
            "--out",
            "out/r.json",
            "--midi",
            "r.mid",
        ],
    ));
    let refined = json(&d.join("out/r.json"));
    assert_eq!(refined["refinement"]["refiner"], "baseline");
    assert_eq!(
        refined["refinement"]["controls"].as_array().unwrap().len(),
        4
    );

    let out = meloform(d, &["analyze", "--in", "r.mid"]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["phrase_count"], 4);
    assert_eq!(report["boundaries"].as_array().unwrap().len(), 3);

    let out = meloform(d, &["eval", "--in", "out", "--form", "A(a1,a2)B(b1,b1)"]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["form_accuracy"], 1.0);
    let declared = report["declared_infeasible"].as_u64().unwrap();
    if declared == 0 {
        assert_eq!(report["avgpitch_accuracy"], 1.0);
        assert_eq!(report["span_accuracy"], 1.0);
    }
}

#[test]
fn identity_refinement_keeps_the_melody() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "A(a1,a1)B(b1)", "6");
    ok(&meloform(
        d,
        &[
            "refine",
            "--in",
            "m.json",
            "--refiner",
            "identity",
            "--seed",
            "0",
            "--out",
            "i.json",
        ],
    ));
    let (before, after) = (json(&d.join("m.json")), json(&d.join("i.json")));
    assert_eq!(before["sections"], after["sections"]);
}

#[test]
fn remote_refiner_through_spawned_process() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    generate(d, "A(a1,a1)B(b1,b2)", "7");
    let cmd = format!("{BIN} serve --seed 2");
    ok(&meloform(
        d,
        &[
            "refine",
            "--in",
            "m.json",
            "--refiner",
            "remote",
            "--remote-cmd",
            &cmd,
            "--seed",
            "2",
            "--out",
            "r.json",
        ],
    ));
    let out = meloform(d, &["eval", "--in", ".", "--form", "A(a1,a1)B(b1,b2)"]);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["form_accuracy"], 1.0);
}

#[test]
fn serve_speaks_newline_json() {
    let mut child = Command::new(BIN)
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();

    writeln!(stdin, "{{not json").unwrap();
    stdout.read_line(&mut line).unwrap();
    let reply: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert!(reply["error"].is_string());

    let request = serde_json::json!({
        "id": 9,
        "context": ["TONALITY_0_major", "BOS", "AVGPITCH_6", "SPAN_2",
                    "BAR", "POS_0", "DUR_4", "CHORD_I_maj", "POS_4", "DUR_4", "CHORD_I_maj",
                    "POS_8", "DUR_4", "CHORD_I_maj", "POS_12", "DUR_2", "CHORD_I_maj", "CAD_NONE", "EOS"],
        "controls": [{"phrase": 0, "avgpitch": 6, "span": 2}],
        "nucleus_p": 0.9
    });
    line.clear();
    writeln!(stdin, "{request}").unwrap();
    stdout.read_line(&mut line).unwrap();
    let reply: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(reply["id"], 9);
    let phrase: Vec<&str> = reply["phrases"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap())
        .collect();
    assert_eq!(phrase.len(), 1 + 4 * 3);
    assert_eq!(&phrase[..3], &["BAR", "POS_0", "DUR_4"]);
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        meloform(d, &["generate", "--out", "x.mid"]).status.code(),
        Some(2)
    );
    assert_eq!(
        meloform(d, &["generate", "--form", "A(", "--out", "x.mid"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        meloform(d, &["generate", "--preset", "polka", "--out", "x.mid"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        meloform(d, &["prepare-corpus", "--n", "0", "--out", "c"])
            .status
            .code(),
        Some(2)
    );
    fs::write(d.join("bad.json"), "{\"schema_version\": 1}").unwrap();
    let out = meloform(d, &["analyze", "--in", "bad.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("form"));
    generate(d, "A(a1)", "0");
    let out = meloform(
        d,
        &[
            "refine",
            "--in",
            "m.json",
            "--refiner",
            "remote",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = meloform(
        d,
        &[
            "refine",
            "--in",
            "m.json",
            "--refiner",
            "remote",
            "--remote-cmd",
            "/nonexistent/x",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ngram_table_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("table.txt"), "# prefer I -> IV\nI IV 50\n").unwrap();
    let run = |table: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args([
            "generate",
            "--form",
            "A(a1,a2)B(b1)",
            "--seed",
            "1",
            "--out",
            "x.mid",
            "--json",
            "x.json",
        ])
        .current_dir(d);
        match table {
            Some(t) => cmd.env("MELOFORM_NGRAM_TABLE", t),
            None => cmd.env_remove("MELOFORM_NGRAM_TABLE"),
        };
        let out = cmd.output().unwrap();
        (
            out.status.code(),
            fs::read_to_string(d.join("x.json")).unwrap_or_default(),
        )
    };
    let (code, plain) = run(None);
    assert_eq!(code, Some(0));
    let (code, custom) = run(Some("table.txt"));
    assert_eq!(code, Some(0));
    assert_ne!(plain, custom);
    fs::write(d.join("bad.txt"), "I I 3\n").unwrap();
    assert_eq!(run(Some("bad.txt")).0, Some(3));
}

#[test]
fn prepare_corpus_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = meloform(
        dir.path(),
        &[
            "prepare-corpus",
            "--n",
            "4",
            "--out",
            "c",
            "--seed",
            "3",
            "--presets",
            "rondo,sonata",
        ],
    );
    ok(&out);
    let manifest = json(&dir.path().join("c/manifest.json"));
    assert_eq!(manifest["melodies"], 4);
    assert_eq!(
        manifest["per_preset"],
        serde_json::json!([["rondo", 2], ["sonata", 2]])
    );
}
