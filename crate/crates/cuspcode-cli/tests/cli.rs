use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuspcode"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("CUSPCODE_OUT")
        .output()
        .unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_a_validation_error_naming_the_key() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "[system]\nbuilder = \"gauss\"\n\n[discretization]\nnodes = 50\nnodez = 3\n");
    let o = run(&["validate"], &c, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["exit"], 2);
    assert!(e["message"].as_str().unwrap().contains("nodez"), "{e}");
    assert_eq!(e["line"], 6);
}

#[test]
fn eta_out_of_range_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let c = write(
        d.path(),
        "c.toml",
        "[system]\nbuilder = \"group-coding\"\ngroup = \"g.toml\"\n\n[system.params.coding]\neta = 1.5\nmax_generation = 4\n",
    );
    std::fs::copy(configs().join("groups/gamma2.group.toml"), d.path().join("g.toml")).unwrap();
    let o = run(&["validate"], &c, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    let msg = e["message"].as_str().unwrap();
    assert!(msg.contains("eta") && msg.contains("1.5"), "{msg}");
    assert_eq!(e["line"], 6);
}

#[test]
fn range_checks_in_the_run_sections() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "[system]\nbuilder = \"gauss\"\n\n[flow]\nt_step = -1.0\n");
    let o = run(&["validate"], &c, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert!(e["message"].as_str().unwrap().contains("flow.t_step"));
    assert_eq!(e["line"], 5);
}

#[test]
fn empty_and_malformed_files_are_parse_errors() {
    let d = tempfile::tempdir().unwrap();
    let empty = write(d.path(), "empty.toml", "");
    let o = run(&["validate"], &empty, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("empty"));

    let bad = write(d.path(), "bad.toml", "[system]\nbuilder = \"gauss\"\nnodes = = 3\n");
    let o = run(&["validate"], &bad, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["line"], 3);

    let missing = write(d.path(), "nosys.toml", "[discretization]\nnodes = 10\n");
    let o = run(&["validate"], &missing, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("system"));
}

#[test]
fn missing_group_file_and_unknown_builder_fail_validation() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "[system]\nbuilder = \"group-coding\"\ngroup = \"nowhere.toml\"\n");
    let o = run(&["validate"], &c, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["line"], 3);
    let c = write(d.path(), "c2.toml", "[system]\nbuilder = \"gaus\"\n");
    let o = run(&["validate"], &c, &d.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("gaus"));
}

#[test]
fn validation_never_writes_output() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "[system]\nbuilder = \"gauss\"\nbogus = 1\n");
    let out = d.path().join("out");
    assert_eq!(run(&["delta-estimate"], &c, &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let o = run(&["validate"], &p, Path::new("unused"));
            assert!(o.status.success(), "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn delta_estimate_on_gauss_is_one() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["delta-estimate"], &configs().join("gauss.toml"), d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&d.path().join("delta.json"));
    assert!((r["delta_estimate"].as_f64().unwrap() - 1.0).abs() < 1e-3, "{r}");
    let csv = std::fs::read_to_string(d.path().join("eigendata.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);
}

#[test]
fn floats_print_with_seventeen_significant_digits() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["delta-estimate"], &configs().join("alphabet12.toml"), d.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(d.path().join("delta.json")).unwrap();
    let re = regex::Regex::new(r#""delta_estimate": (-?\d\.(\d+)e-?\d+),"#).unwrap();
    let cap = re.captures(&text).unwrap();
    assert_eq!(cap[2].len(), 16);
    let v: f64 = cap[1].parse().unwrap();
    assert!((v - 0.531281).abs() < 1e-4);
}

const SMALL_FLOW: &str = "[system]\nbuilder = \"gauss\"\n\n[discretization]\nnodes = 100\n\n[spectral]\nexponent = 1.0\n\n\
[flow]\nsamples = 2000\nt_max = 2.0\nt_step = 0.5\nseed = 9\n";

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", SMALL_FLOW);
    let (a, b, s) = (d.path().join("a"), d.path().join("b"), d.path().join("s"));
    for out in [&a, &b] {
        let o = run(&["mix-estimate", "--threads", "2"], &c, out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(run(&["mix-estimate", "--seed", "10"], &c, &s).status.success());
    for f in ["correlation.json", "correlation.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        assert_ne!(x, std::fs::read(s.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_json(&s.join("correlation.json"))["seed"], 10);
}

#[test]
fn reruns_are_idempotent_and_leave_inputs_alone() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.toml", "[system]\nbuilder = \"finite-alphabet\"\n\n[system.params]\ndigits = [1, 2]\n");
    let before = std::fs::read(&c).unwrap();
    let out = d.path().join("o");
    assert!(run(&["uni-check"], &c, &out).status.success());
    let first = std::fs::read(out.join("uni.json")).unwrap();
    assert!(run(&["uni-check"], &c, &out).status.success());
    assert_eq!(first, std::fs::read(out.join("uni.json")).unwrap());
    assert_eq!(before, std::fs::read(&c).unwrap());
    let leftovers: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");
    assert_eq!(read_json(&out.join("uni.json"))["certified"], true);
}

#[test]
fn gamma2_tail_series_is_monotone_and_matches_golden() {
    let d = tempfile::tempdir().unwrap();
    let cfg = configs().join("gamma2.toml");
    let o = run(&["code-build"], &cfg, d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let build = read_json(&d.path().join("code_build.json"));
    assert!(build["contraction"]["lambda_max"].as_f64().unwrap() <= 0.01);
    let o = run(&["tail-report"], &cfg, d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let parse = |text: &str| -> Vec<(usize, f64, f64)> {
        text.lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
            })
            .collect()
    };
    let rows = parse(&std::fs::read_to_string(d.path().join("tail_partial_sums.csv")).unwrap());
    assert!(rows.len() > 100);
    assert!(rows.windows(2).all(|w| w[1].2 >= w[0].2));
    let golden = parse(include_str!("golden/gamma2_tail.csv"));
    assert_eq!(rows.len(), golden.last().unwrap().0);
    for (n, term, sum) in golden {
        let r = rows[n - 1];
        assert!((r.1 - term).abs() <= 1e-10 * term.abs() && (r.2 - sum).abs() <= 1e-10 * sum.abs(), "row {n}: {r:?}");
    }
}

#[test]
fn computation_errors_exit_three_with_a_class() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["orbit-count"], &configs().join("gauss.toml"), d.path());
    assert_eq!(o.status.code(), Some(3));
    let e = stderr_json(&o);
    assert_eq!(e["class"], "invalid");
    assert_eq!(read_json(&d.path().join("error.json"))["exit"], 3);

    let c = write(d.path(), "c.toml", &format!("{SMALL_FLOW}floor = 0.5\n"));
    let o = run(&["mix-estimate"], &c, &d.path().join("esc"));
    assert_eq!(o.status.code(), Some(3));
    // every burn-in leaves the coded region, so the sampler gives up
    assert_eq!(stderr_json(&o)["class"], "non_convergence");
}

#[test]
fn output_directory_precedence() {
    let d = tempfile::tempdir().unwrap();
    let c = write(
        d.path(),
        "c.toml",
        &format!("output = \"{}\"\n[system]\nbuilder = \"finite-alphabet\"\n[system.params]\ndigits = [1, 2]\n", d.path().join("cfg").display()),
    );
    let bin = env!("CARGO_BIN_EXE_cuspcode");
    let go = |flag: bool, env: bool| {
        let mut cmd = Command::new(bin);
        cmd.args(["uni-check", "--config"]).arg(&c).env_remove("CUSPCODE_OUT");
        if flag {
            cmd.arg("--out").arg(d.path().join("flag"));
        }
        if env {
            cmd.env("CUSPCODE_OUT", d.path().join("env"));
        }
        assert!(cmd.output().unwrap().status.success());
    };
    go(false, false);
    assert!(d.path().join("cfg/uni.json").exists());
    go(false, true);
    assert!(d.path().join("env/uni.json").exists());
    go(true, true);
    assert!(d.path().join("flag/uni.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_cuspcode")).arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_cuspcode")).arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
