use std::path::Path;
use std::process::{Command, Output};

fn cdlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn cdlab")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn end_to_end_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&cdlab(
        &["synth", "--seed", "1", "--count", "20", "-o", "train"],
        d,
    ));
    ok(&cdlab(
        &["synth", "--seed", "2", "--count", "1", "-o", "test"],
        d,
    ));
    ok(&cdlab(
        &["train", "--data", "train", "--epochs", "3", "-o", "m.cdlm"],
        d,
    ));

    let acc = ok(&cdlab(&["classify", "--model", "m.cdlm", "test"], d));
    assert!(acc.starts_with("accuracy "));

    let first = std::fs::read_dir(d.join("test"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".pgm"))
        .min()
        .unwrap();
    let img = format!("test/{first}");
    ok(&cdlab(
        &[
            "attack",
            "--model",
            "m.cdlm",
            "-i",
            &img,
            "--label",
            "0",
            "--epsilon",
            "8",
            "-o",
            "adv.pgm",
        ],
        d,
    ));
    ok(&cdlab(
        &[
            "attack",
            "--model",
            "m.cdlm",
            "-i",
            &img,
            "--label",
            "0",
            "--kind",
            "bim",
            "--epsilon",
            "8",
            "-o",
            "bim.pgm",
        ],
        d,
    ));

    let s = ok(&cdlab(
        &[
            "compress",
            "-i",
            "adv.pgm",
            "--psnr",
            "28",
            "-o",
            "a.dcx",
            "--decoded",
            "a.pgm",
        ],
        d,
    ));
    assert!(s.starts_with("dct: "), "{s}");
    ok(&cdlab(
        &[
            "compress", "-i", "adv.pgm", "--codec", "wavelet", "--max", "-o", "a.wvx",
        ],
        d,
    ));
    ok(&cdlab(
        &[
            "compress",
            "-i",
            "adv.pgm",
            "--multiplier",
            "2",
            "-o",
            "m.dcx",
        ],
        d,
    ));
    let from_stream = ok(&cdlab(&["classify", "--model", "m.cdlm", "a.dcx"], d));
    let from_file = ok(&cdlab(&["classify", "--model", "m.cdlm", "a.pgm"], d));
    assert_eq!(from_stream, from_file);
    ok(&cdlab(&["classify", "--model", "m.cdlm", "a.wvx"], d));

    std::fs::write(
        d.join("grid.json"),
        r#"{"dataset": {"dir": "test"}, "model": "m.cdlm", "attacks": [{"kind": "fgsm", "epsilon": 5.0}], "targets": [28.0]}"#,
    )
    .unwrap();
    ok(&cdlab(
        &["experiment", "grid.json", "-o", "out/report.json"],
        d,
    ));
    let table = ok(&cdlab(&["table", "out/report.json"], d));
    assert!(
        table.starts_with("| Codec | PSNR (dB) | FGSM (ε=5) |"),
        "{table}"
    );
    let csv = ok(&cdlab(
        &[
            "table",
            "out/report.json",
            "--kind",
            "max",
            "--format",
            "csv",
        ],
        d,
    ));
    assert_eq!(csv.lines().count(), 4);

    ok(&cdlab(
        &["dump", "grid.json", "-n", "1", "-o", "samples"],
        d,
    ));
    // Four compressed cells (two codecs, 28 dB and max) plus the manifest.
    let files = std::fs::read_dir(d.join("samples")).unwrap().count();
    assert_eq!(files, 4 * 3 + 1);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(
        cdlab(&["experiment", "missing.json"], d).status.code(),
        Some(3)
    );
    std::fs::write(d.join("bad.json"), "{").unwrap();
    assert_eq!(cdlab(&["experiment", "bad.json"], d).status.code(), Some(2));
    std::fs::write(
        d.join("empty.json"),
        r#"{"dataset": {"dir": "x"}, "model": "m", "attacks": []}"#,
    )
    .unwrap();
    assert_eq!(
        cdlab(&["experiment", "empty.json"], d).status.code(),
        Some(2)
    );
    assert_eq!(cdlab(&["frobnicate"], d).status.code(), Some(2));
    std::fs::write(d.join("junk.pgm"), "P5 nonsense").unwrap();
    assert_eq!(
        cdlab(&["compress", "-i", "junk.pgm", "--max", "-o", "x"], d)
            .status
            .code(),
        Some(3)
    );
    std::fs::write(
        d.join("flat.pgm"),
        [b"P5 16 16 255\n".as_slice(), &[7u8; 256]].concat(),
    )
    .unwrap();
    assert_eq!(
        cdlab(
            &["compress", "-i", "flat.pgm", "--psnr", "-3", "-o", "x"],
            d
        )
        .status
        .code(),
        Some(2)
    );
}
