//! Black-box tests of the `abclin` binary: exit codes, file contracts,
//! determinism, and manifest-based reproduction.

use std::fs;
use std::path::Path;
use std::process::Command;

fn abclin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_abclin"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

const SMALL_MIXTURE: &str = r#"
[model]
id = "mixture"
p = 2

[simulate]
n = 3000
seed = 42

[observe]
s_obs = [5.0, 5.0]

[infer]
keep = 300
methods = ["rejection", "linear"]
marginal = true
"#;

#[test]
fn simulate_is_idempotent_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_MIXTURE);
    for sub in ["a", "b"] {
        let status = abclin()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(sub))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read(dir.path().join("a/table.csv")).unwrap();
    let b = fs::read(dir.path().join("b/table.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.path().join("a/manifest-simulate.toml").exists());
}

#[test]
fn invalid_budget_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
        [model]
        id = "mixture"
        p = 2

        [simulate]
        n = 0
        seed = 1
        "#,
    );
    let output = abclin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    // No manifest on failure.
    assert!(!dir.path().join("manifest-simulate.toml").exists());
}

#[test]
fn failing_external_simulator_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
        [model]
        id = "external"
        command = "/bin/false"
        p = 1
        stat_dim = 1

        [simulate]
        n = 2
        seed = 1
        "#,
    );
    let output = abclin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("10 attempts"), "{stderr}");
}

#[test]
fn infer_emits_four_variants_with_exact_margins() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_MIXTURE);
    let out = dir.path().join("run");
    assert!(abclin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(abclin()
        .args(["infer", "--config"])
        .arg(&config)
        .arg("--table")
        .arg(out.join("table.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());

    for name in [
        "samples_rejection.csv",
        "samples_linear.csv",
        "samples_rejection_marginal.csv",
        "samples_linear_marginal.csv",
        "bayes_linear.txt",
        "manifest-infer.toml",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    // The sorted margins of the marginally adjusted file equal the
    // standalone marginal files bit-exactly.
    for method in ["rejection", "linear"] {
        let (values, names, _) =
            abclin::io::read_sample(&out.join(format!("samples_{method}_marginal.csv"))).unwrap();
        for (j, name) in names.iter().enumerate() {
            let marginal_text =
                fs::read_to_string(out.join(format!("marginal_{method}_{name}.csv"))).unwrap();
            let marginal: Vec<&str> = marginal_text.lines().skip(1).collect();
            let mut column: Vec<f64> = values.column(j).iter().copied().collect();
            column.sort_by(f64::total_cmp);
            let column_text: Vec<String> = column.iter().map(|v| v.to_string()).collect();
            assert_eq!(column_text, marginal, "{method} margin {name}");
        }
    }
}

#[test]
fn full_acceptance_returns_the_prior_sample() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
        [model]
        id = "mixture"
        p = 2

        [simulate]
        n = 500
        seed = 3

        [observe]
        s_obs = [5.0, 5.0]

        [infer]
        keep = 500
        methods = ["rejection"]
        "#,
    );
    let out = dir.path().join("run");
    assert!(abclin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(abclin()
        .args(["infer", "--config"])
        .arg(&config)
        .arg("--table")
        .arg(out.join("table.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let (table, _) = abclin::io::read_table(&out.join("table.csv")).unwrap();
    let (sample, _, _) = abclin::io::read_sample(&out.join("samples_rejection.csv")).unwrap();
    assert_eq!(&sample, table.params());
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_MIXTURE);
    let first = dir.path().join("first");
    assert!(abclin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap()
        .success());
    assert!(abclin()
        .args(["infer", "--config"])
        .arg(&config)
        .arg("--table")
        .arg(first.join("table.csv"))
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap()
        .success());

    // Re-run both stages from the infer manifest alone.
    let second = dir.path().join("second");
    let manifest = first.join("manifest-infer.toml");
    assert!(abclin()
        .args(["simulate", "--config"])
        .arg(&manifest)
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap()
        .success());
    assert!(abclin()
        .args(["infer", "--config"])
        .arg(&manifest)
        .arg("--table")
        .arg(second.join("table.csv"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap()
        .success());

    for name in [
        "table.csv",
        "samples_rejection.csv",
        "samples_linear.csv",
        "samples_linear_marginal.csv",
        "bayes_linear.txt",
    ] {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between original and manifest re-run");
    }
}

#[test]
fn benchmark_thread_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
        [model]
        id = "mixture"
        p = 2

        [simulate]
        n = 5000
        seed = 9

        [benchmark]
        dims = [2]
        replicates = 2
        n = 5000
        keep = 200
        "#,
    );
    let mut tables = Vec::new();
    for (sub, threads) in [("t1", "1"), ("t4", "4")] {
        let out = dir.path().join(sub);
        assert!(abclin()
            .args(["benchmark", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .status()
            .unwrap()
            .success());
        tables.push(fs::read(out.join("kl_table.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn missing_table_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_MIXTURE);
    let output = abclin()
        .args(["infer", "--config"])
        .arg(&config)
        .arg("--table")
        .arg(dir.path().join("no_such_table.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "{output:?}");
}
