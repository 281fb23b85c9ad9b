use std::path::Path;
use std::process::{Command, Output};

fn boltzlab(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boltzlab"))
        .args(args)
        .env("BOLTZLAB_CACHE", cache)
        .output()
        .unwrap()
}

fn small(dir: &Path, kmax: f64) -> std::path::PathBuf {
    let text = format!(
        "[kernel]\nn_theta = 2\nn_phi = 4\n[grid]\npoints_per_axis = 6\n[kgrid]\nkmax = {kmax}\nlevels = 4\norder = 4\n\
         [run]\nt_end = 4.0\nenvelope_dt = 0.5\nfit_window = [1.0, 4.0]\ntrilinear_samples = 2\n\
         interpolation_samples = 200\n[outputs]\ndir = \"{}\"\nformats = [\"json\", \"csv\"]\n",
        dir.join("runs").display()
    );
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_example_reports_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let o = boltzlab(&["validate", "--example"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let p = tmp.path().join("ex.toml");
    std::fs::write(&p, &o.stdout).unwrap();
    let o = boltzlab(&["validate", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["sigma"].as_f64().unwrap() - 2.8).abs() < 1e-12);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "[kernel]\ngama = 1.0\n[schedule]\np = 1.2\n").unwrap();
    let o = boltzlab(&["validate", p.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("did you mean `gamma`"), "{e}");
    assert!(e.contains("3/2"), "{e}");
}

#[test]
fn missing_stage_input_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 6.0);
    let o = boltzlab(&["verify", cfg.to_str().unwrap()], &tmp.path().join("cache"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`assemble` stage"), "{}", stderr(&o));
}

#[test]
fn unresolved_profile_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 1.0);
    let o = boltzlab(&["pipeline", cfg.to_str().unwrap(), "--stages", "assemble,simulate,measure"], &tmp.path().join("c"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn pipeline_is_reproducible_and_reuses_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 6.0);
    let cache = tmp.path().join("cache");
    let cfg_s = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = boltzlab(&["--threads", "1", "pipeline", cfg_s, "--out", a.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_dir(&cache).unwrap().count() >= 4);
    let o = boltzlab(&["--threads", "1", "pipeline", cfg_s, "--out", b.to_str().unwrap()], &cache);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("cache hit"));

    let manifest = |root: &Path| -> serde_json::Value {
        let run = std::fs::read_dir(root).unwrap().next().unwrap().unwrap().path();
        serde_json::from_slice(&std::fs::read(run.join("manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let files = |m: &serde_json::Value| -> Vec<(String, String)> {
        m["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
            .filter(|(p, _)| !p.starts_with('/'))
            .collect()
    };
    let fa = files(&ma);
    for name in ["envelope.csv", "decay.csv", "fit.json", "verify.json", "config.json"] {
        assert!(fa.iter().any(|(p, _)| p == name), "{name} missing from manifest");
    }
    assert_eq!(fa, files(&mb));
}

#[test]
fn stage_subset_parsing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path(), 6.0);
    let o = boltzlab(&["pipeline", cfg.to_str().unwrap(), "--stages", "assemble,plot"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown stage `plot`"));
}

#[test]
fn shipped_configs_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let o = boltzlab(&["validate", p.to_str().unwrap()], tmp.path());
            assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), stderr(&o));
            n += 1;
        }
    }
    assert!(n >= 2);
}
