use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_auglab");

fn config(out: &Path, eps: &str, extra: &str) -> String {
    format!(
        r#"
seed = 11
output_dir = "{}"
epsilon_grid = {eps}
delta_grid = [0.5, 1.0]

[dataset]
num_classes = 2
samples_per_class = 16
centers = [[3.0, 0.0], [-3.0, 0.0]]
spread = 0.4
manifold = {{ kind = "gaussian_blobs" }}

[augmentation]
discrete = [
  {{ name = "swap", rule = "coordinate_permutation", perm = [1, 0] }},
  {{ name = "flip0", rule = "sign_flip_mask", coords = [0] }},
  {{ name = "flip1", rule = "sign_flip_mask", coords = [1] }},
  {{ name = "flip01", rule = "sign_flip_mask", coords = [0, 1] }},
]
continuous = [{{ name = "shift", rule = "additive_shift", direction = [0.2, 0.2] }}]

[encoder]
hidden = [8]
output_dim = 3

[train]
loss = {{ kind = "info_nce" }}
steps = 200
batch_size = 16
learning_rate = 0.5
{extra}
"#,
        out.display()
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_config_writes_report_with_all_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "c.toml", &config(&out, "[0.25]", ""));
    let o = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bounds = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    for key in [
        "rho_max",
        "divergence.threshold",
        "err_bound.bound",
        "eta",
        "spread_bound.bound",
        "infonce_centers.bound",
        "deviation.first.0.bound",
        "combined.infonce.bound",
    ] {
        assert!(
            bounds.lines().any(|l| l.split(',').nth(2) == Some(key)),
            "missing {key}"
        );
    }
    for f in [
        "dataset.csv",
        "augmentation.json",
        "trace.csv",
        "model.bin",
        "concentration.csv",
        "eval.csv",
        "bounds.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn identical_config_and_seed_give_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &config(&tmp.path().join("unused"), "[0.1, 0.5]", ""),
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = run(&[
            "bounds",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() >= 5);
    assert_eq!(fa, fb);
}

#[test]
fn every_epsilon_gets_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "c.toml", &config(&out, "[0.1, 0.2]", ""));
    assert!(run(&["bounds", "--config", cfg.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    for eps in ["0.1", "0.2"] {
        let rows = text.lines().filter(|l| l.split(',').nth(1) == Some(eps)).count();
        assert!(rows > 10, "epsilon {eps}: {rows} rows");
    }
}

#[test]
fn staged_subcommands_write_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &config(&tmp.path().join("x"), "[0.25]", ""));
    let c = cfg.to_str().unwrap();
    let dir = |n: &str| tmp.path().join(n);
    assert!(run(&["gen-data", "--config", c, "--out", dir("g").to_str().unwrap()])
        .status
        .success());
    assert!(dir("g/dataset.csv").exists() && !dir("g/model.bin").exists());
    assert!(run(&[
        "concentration",
        "--config",
        c,
        "--mode",
        "approx",
        "--out",
        dir("c").to_str().unwrap()
    ])
    .status
    .success());
    let conc = std::fs::read_to_string(dir("c/concentration.csv")).unwrap();
    // The requested solver comes first; small classes add the exact rows.
    let modes: Vec<&str> = conc.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(modes, ["dual_approx", "dual_approx", "exact", "exact"], "{conc}");
    assert!(run(&["train", "--config", c, "--out", dir("t").to_str().unwrap()])
        .status
        .success());
    assert!(dir("t/model.bin").exists() && !dir("t/concentration.csv").exists());
    let model = dir("t/model.bin");
    let o = run(&[
        "evaluate",
        "--config",
        c,
        "--model",
        model.to_str().unwrap(),
        "--out",
        dir("e").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir("e/eval.csv").exists() && !dir("e/trace.csv").exists());
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &config(&tmp.path().join("x"), "[]", ""));
    assert_eq!(
        run(&["bounds", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let bad = write_config(tmp.path(), "bad.toml", "seed = 1\nunknown_key = 3\n");
    assert_eq!(
        run(&["train", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let missing = tmp.path().join("missing.json");
    std::fs::write(&missing, r#"{"sigma": 0.9}"#).unwrap();
    let o = run(&[
        "bounds",
        "--inputs",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));
}

#[test]
fn stage_failure_exits_three_and_names_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let text = config(&out, "[0.25]", "").replace("learning_rate = 0.5", "learning_rate = 1e200");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = run(&["bounds", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let failure = std::fs::read_to_string(out.join("failure.txt")).unwrap();
    assert!(failure.starts_with("stage: train"), "{failure}");
    assert!(out.join("dataset.csv").exists());
}

#[test]
fn pairs_sweep_over_four_transforms_has_six_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let text =
        config(&out, "[0.25]", "[sweep]\nkind = \"pairs\"\n").replace("delta_grid = [0.5, 1.0]", "delta_grid = [1.0]");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7, "{summary}");
    assert!(summary.starts_with("level,delta,epsilon,sigma,one_minus_sigma,err,err_bound,valid\n"));
    assert!(out.join("spearman.csv").exists());
}

#[test]
fn single_level_sweep_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let text = config(
        &out,
        "[0.25]",
        "[sweep]\nkind = \"richness\"\nlevels = [[\"swap\", \"flip0\", \"flip1\", \"flip01\"]]\n",
    );
    let cfg = write_config(tmp.path(), "c.toml", &text);
    assert!(run(&["sweep", "--config", cfg.to_str().unwrap()]).status.success());
    let single = tmp.path().join("single");
    assert!(run(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        single.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(out.join("level_0/bounds.csv")).unwrap(),
        std::fs::read(single.join("bounds.csv")).unwrap()
    );
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn richness_levels_must_nest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(
        &tmp.path().join("s"),
        "[0.25]",
        "[sweep]\nkind = \"richness\"\nlevels = [[\"swap\"], [\"flip0\"]]\n",
    );
    let cfg = write_config(tmp.path(), "c.toml", &text);
    assert_eq!(
        run(&["sweep", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(2)
    );
}
