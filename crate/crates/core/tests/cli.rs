use std::path::Path;
use std::process::{Command, Output};

fn horolab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horolab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn verify_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.cfg", "verify.samples = 40\n");
    let out = horolab(&["verify", "--config", &cfg], dir.path());
    let stdout = text(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{}", text(&out.stderr));
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    for tag in ["eq:commutation", "lemma2.5", "lemma4.1", "lemma4.3", "eq:defin_u:additivity"] {
        assert!(stdout.contains(tag), "missing {tag}");
    }
}

#[test]
fn flipped_generator_fails_commutation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.cfg", "verify.samples = 20\nverify.flip_x_sign = true\n");
    let out = horolab(&["verify", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL eq:commutation")), "{stdout}");
    assert!(text(&out.stderr).contains("eq:commutation"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.cfg", "no_such_key = 1\n");
    let out = horolab(&["correlate", "--config", &unknown], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));

    let strong = write_config(dir.path(), "s.cfg", "tau.epsilon = 0.9\nn_samples = 8\nt_grid = 1,2\n");
    let out = horolab(&["correlate", "--config", &strong], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("admissible"));

    let missing = horolab(&["verify", "--config", "does-not-exist.cfg"], dir.path());
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn correlate_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "n_samples = 600\nt_grid = 1, 2, 4\nseed = 5\n");
    let mut csvs = Vec::new();
    for w in ["1", "3"] {
        let out_dir = format!("out{w}");
        let out = horolab(&["correlate", "--config", &cfg, "--workers", w, "--out", &out_dir], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        csvs.push(std::fs::read_to_string(dir.path().join(&out_dir).join("correlate.csv")).unwrap());
        let manifest = std::fs::read_to_string(dir.path().join(&out_dir).join("correlate_manifest.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
        assert!(json["truncation_deficit"].as_f64().unwrap() > 0.0);
        assert_eq!(json["library_version"], env!("CARGO_PKG_VERSION"));
    }
    assert_eq!(csvs[0], csvs[1]);
    let header = csvs[0].lines().next().unwrap();
    assert_eq!(header, "flow_kind,t,value,stderr,n,seed,tau_epsilon,f_id,g_id");
    // 3 times for each of the two flows
    assert_eq!(csvs[0].lines().count(), 7);

    let seeded = horolab(&["correlate", "--config", &cfg, "--seed", "6", "--out", "out6"], dir.path());
    assert_eq!(seeded.status.code(), Some(0));
    let other = std::fs::read_to_string(dir.path().join("out6/correlate.csv")).unwrap();
    assert_ne!(other, csvs[0]);
}

#[test]
fn summarize_planted_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut planted = String::from("flow_kind,t,value,stderr\n");
    for k in 1..=8 {
        let t = 2f64.powi(k);
        planted += &format!("timechanged,{t},{},{}\n", 0.3 * t.powf(-0.75), 1e-4 * t.powf(-0.75));
        planted += &format!("unipotent,{t},{},{}\n", 0.3 * t.powf(-1.0), 1e-4 * t.powf(-1.0));
    }
    std::fs::write(dir.path().join("planted.csv"), planted).unwrap();
    let out = horolab(&["summarize", "planted.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("planted_summary.json")).unwrap()).unwrap();
    assert!((json["exponent"].as_f64().unwrap() - 0.75).abs() < 1e-6, "{json}");
    assert!(text(&out.stdout).contains("ratio 6.000"));

    std::fs::write(dir.path().join("empty.csv"), "flow_kind,t,value,stderr\n").unwrap();
    let out = horolab(&["summarize", "empty.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("empty_summary.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "all_below_noise");

    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n").unwrap();
    let out = horolab(&["summarize", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = horolab(&["--help"], dir.path());
    let s = text(&out.stdout);
    for key in ["tau.epsilon", "cocycle.reduce_every", "verify.flip_x_sign", "Exit codes"] {
        assert!(s.contains(key), "help lacks {key}");
    }
}
