use std::path::PathBuf;
use std::process::Command;

fn ttg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ttg"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ttg-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = ttg().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["no-such-command"]).0, 2);
    let out = scratch_dir("badkey");
    let (code, _, err) = run(&[
        "bands",
        "--set",
        "no.such.key=1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = run(&["trace", "--zeta", "1/0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&[
        "trace",
        "--compare",
        "bogus",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn trace_reports_all_three_values() {
    let out = scratch_dir("trace");
    let (code, stdout, err) = run(&[
        "trace",
        "--zeta",
        "1/2",
        "--n",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("closed"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert!(json["closed_form"].is_object() || json["closed_form"].is_array());
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap())
            .unwrap();
    assert_eq!(prov["command"], "trace");
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn csv_outputs_are_byte_identical_across_runs() {
    let cases: [(&str, &[&str], &str); 3] = [
        (
            "bands",
            &["--zeta", "1/1", "--n", "6", "--alpha", "0.5"],
            "bands.csv",
        ),
        (
            "wronskian-scan",
            &["--zeta", "1/1", "--n", "8", "--set", "scan.steps=4"],
            "wronskian.csv",
        ),
        ("bracket", &["--grid", "16"], "bracket.csv"),
    ];
    for (cmd, extra, file) in cases {
        let mut contents = Vec::new();
        for rep in 0..2 {
            let out = scratch_dir(&format!("{cmd}-{rep}"));
            let mut args = vec![cmd];
            args.extend_from_slice(extra);
            args.extend_from_slice(&["--out", out.to_str().unwrap()]);
            let (code, _, err) = run(&args);
            assert_eq!(code, 0, "{cmd}: {err}");
            contents.push(std::fs::read(out.join(file)).unwrap());
            let _ = std::fs::remove_dir_all(&out);
        }
        assert!(!contents[0].is_empty());
        assert_eq!(
            contents[0], contents[1],
            "{cmd} output differs between runs"
        );
    }
}

#[test]
fn config_file_layers_under_flags() {
    let out = scratch_dir("config");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("run.cfg");
    std::fs::write(
        &cfg,
        "[trunc]\nn = 8\n# comment\n[trace]\ncompare = closed\n",
    )
    .unwrap();
    let dest = out.join("o");
    let (code, _, err) = run(&[
        "trace",
        "--config",
        cfg.to_str().unwrap(),
        "--zeta",
        "1/3",
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let resolved = std::fs::read_to_string(dest.join("config.resolved")).unwrap();
    assert!(resolved.contains("trunc.n=8\n"), "{resolved}");
    assert!(resolved.contains("trace.compare=closed\n"), "{resolved}");
    let _ = std::fs::remove_dir_all(&out);
}
