use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn ldg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("vacuum.cfg")).unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, text.replace("sigma = 0.25\n", "")).unwrap();
    let o = ldg(&["minimize", s(&cfg), "--out", s(&dir.path().join("x.qf1"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`sigma`"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("vacuum.cfg")).unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, format!("{text}colour = blue\n")).unwrap();
    let o = ldg(&["sweep", s(&cfg)]);
    assert_eq!(code(&o), 1);
    let n = text.lines().count() + 1;
    assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("line {n}")));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(code(&ldg(&["frobnicate"])), 1);
    assert_eq!(code(&ldg(&["--help"])), 0);
}

#[test]
fn vacuum_minimize_and_scales_give_empty_bad_sets() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("vac.qf1");
    let o = ldg(&["minimize", s(&data("vacuum.cfg")), "--out", s(&field)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("vac.convergence.csv").exists());
    let manifest = std::fs::read_to_string(dir.path().join("vac.qf1.manifest.json")).unwrap();
    assert!(manifest.contains("calibration_hash") && manifest.contains("input_hash"));

    let out = dir.path().join("scales");
    assert_eq!(code(&ldg(&["scales", s(&field), "--out", s(&out)])), 0);
    let cov = std::fs::read_to_string(out.join("covering.csv")).unwrap();
    let rows: Vec<&str> = cov.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!((cols[2], cols[3]), ("0", "0"), "{r}");
    }
}

#[test]
fn subcommands_share_fields_and_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("disc.qf1");
    let o = ldg(&["minimize", s(&data("golden.cfg")), "--out", s(&field)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let loops = dir.path().join("loops.jsonl");
    std::fs::write(
        &loops,
        "{\"id\":\"around\",\"center\":[0.0,0.0,0.0],\"axis\":2,\"radius\":0.5}\n\
         {\"id\":\"beside\",\"center\":[0.55,0.0,0.0],\"axis\":2,\"radius\":0.25}\n",
    )
    .unwrap();
    let out = dir.path().join("defects");
    let args = [
        "defects",
        s(&field),
        "--loops",
        s(&loops),
        "--cylinder",
        "2,0,0,0,0.3,-0.25,0.25",
        "--out",
        s(&out),
    ];
    let o = ldg(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(out.join("loops.jsonl")).unwrap();
    let lines: Vec<&str> = lines.lines().collect();
    assert!(lines[0].contains("\"around\"") && lines[0].contains("\"nontrivial\""));
    assert!(lines[1].contains("\"beside\"") && lines[1].contains("\"trivial\""));
    let scan = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    assert!(scan
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("true")));

    let a = dir.path().join("s1");
    let b = dir.path().join("s2");
    assert_eq!(
        code(&ldg(&[
            "scales",
            s(&field),
            "--stride",
            "3",
            "--out",
            s(&a)
        ])),
        0
    );
    assert_eq!(
        code(&ldg(&[
            "--threads",
            "1",
            "scales",
            s(&field),
            "--stride",
            "3",
            "--out",
            s(&b)
        ])),
        0
    );
    for f in ["scales.csv", "covering.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }

    let vtk = dir.path().join("disc.vtk");
    assert_eq!(code(&ldg(&["vtk", s(&field), "--out", s(&vtk)])), 0);
    assert!(std::fs::read_to_string(&vtk)
        .unwrap()
        .contains("SCALARS grad_norm double 1"));
}

#[test]
fn golden_sweep_matches_checked_in_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = ldg(&["sweep", s(&data("golden.cfg")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = std::fs::read_to_string(out.join("verdicts.json")).unwrap();
    let want = std::fs::read_to_string(data("golden_verdicts.json")).unwrap();
    assert_eq!(got, want);
    for i in 0..4 {
        assert!(out.join(format!("field_{i}.qf1")).exists());
    }

    let rep = dir.path().join("report");
    assert_eq!(
        code(&ldg(&[
            "report",
            s(&out.join("records.json")),
            "--out",
            s(&rep)
        ])),
        0
    );
    assert_eq!(
        std::fs::read(rep.join("records.csv")).unwrap(),
        std::fs::read(out.join("records.csv")).unwrap()
    );
}
