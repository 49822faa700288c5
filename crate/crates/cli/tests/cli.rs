use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn prsynth(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prsynth")).args(args).current_dir(dir).output().expect("runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn corpus_listing() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsynth(&["corpus", "list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 15);
    let o = prsynth(&["corpus", "show", "L12"], dir.path());
    assert!(stdout(&o).contains("P ::= ( Q ) | ( )"), "{}", stdout(&o));
    let o = prsynth(&["corpus", "show", "L12", "--json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "prsynth.corpus");
    assert_eq!(prsynth(&["corpus", "show", "L99"], dir.path()).status.code(), Some(1));
}

#[test]
fn generate_infer_convert() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = prsynth(&["generate", "--prs", "L7", "--seed", "1", "--out", "seq"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("seq/A000.json").is_file() && d.join("seq/A000.dot").is_file());
    assert_eq!(json(&d.join("seq/schedule.json"))["schema"], "prsynth.schedule");

    let o = prsynth(&["infer", "--seq", "seq", "--threshold", "1", "--out", "prs.json", "--trace", "trace.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.join("prs.json"))["schema"], "prsynth.prs");
    assert_eq!(json(&d.join("prs.json"))["schema_version"], 1);
    assert!(json(&d.join("trace.json"))["steps"].as_array().is_some_and(|s| !s.is_empty()));

    let o = prsynth(&["convert", "--prs", "prs.json", "--out", "g.txt"], d);
    assert_eq!(o.status.code(), Some(0));
    let g = fs::read_to_string(d.join("g.txt")).unwrap();
    assert!(g.starts_with("S ::= "), "{g}");
    let general = prsynth(&["convert", "--prs", "prs.json", "--general"], d);
    assert_eq!(general.status.code(), Some(0));
}

#[test]
fn generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = prsynth(&["generate", "--prs", "L12", "--seed", "5", "--spurious", "1", "--out", out], d);
        assert_eq!(o.status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(d.join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 4);
    for n in names {
        assert_eq!(fs::read(d.join("a").join(&n)).unwrap(), fs::read(d.join("b").join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn extract_writes_sequence_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ab.txt"), "S ::= a S b | a b\n").unwrap();
    let o = prsynth(&["extract", "--grammar", "ab.txt", "--depth", "4", "--len", "10", "--seed", "0", "--out", "x"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = json(&d.join("x/meta.json"));
    assert_eq!(meta["schema"], "prsynth.extraction");
    assert!(meta["meta"]["membership_queries"].as_u64().unwrap() > 0);
    let o = prsynth(&["infer", "--seq", "x", "--threshold", "1"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 2, "{}", stdout(&o));
}

#[test]
fn roundtrip_exit_codes_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = prsynth(&["roundtrip", "L1", "--seed", "0", "--out", "runs/L1"], d);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let expected = prsynth(&["roundtrip", "L3", "--extraction", "--seed", "0", "--out", "runs/L3"], d);
    assert_eq!(expected.status.code(), Some(2), "{}", stdout(&expected));
    assert!(stdout(&expected).contains("Incorrect (expected)"));
    let missing = prsynth(&["roundtrip", "L6", "--seed", "0"], d);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(prsynth(&["roundtrip", "nope", "--seed", "0"], d).status.code(), Some(1));

    for f in ["run.json", "trace.json", "prs.json", "grammar.txt", "seq/A000.json"] {
        assert!(d.join("runs/L1").join(f).is_file(), "{f}");
    }
    let o = prsynth(&["report", "runs"], d);
    let table = stdout(&o);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].starts_with("L1 ") && lines[1].ends_with("Correct"), "{table}");
    assert!(lines[2].starts_with("L3 ") && lines[2].ends_with("Incorrect"), "{table}");
    let o = prsynth(&["report", "runs", "--json"], d);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][0]["verdict"], "correct");
}

#[test]
fn empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsynth(&["report", "."], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}
