use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sbn::netio;

fn sbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbn")).args(args).output().expect("spawn sbn")
}

fn ok(args: &[&str]) -> Output {
    let out = sbn(args);
    assert!(out.status.success(), "sbn {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_with_zero_points_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("d.csv");
    ok(&["gen-data", "--n", "0", "--out", p(&f)]);
    assert_eq!(fs::read_to_string(&f).unwrap().lines().count(), 1);
}

#[test]
fn gen_data_is_a_function_of_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    ok(&["gen-data", "--n", "50", "--seed", "4", "--out", p(&a)]);
    ok(&["gen-data", "--n", "50", "--seed", "4", "--out", p(&b)]);
    ok(&["gen-data", "--n", "50", "--seed", "5", "--out", p(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 101);
}

fn setup(dir: &Path, layers: &str) -> (String, String) {
    let data = dir.join("data.csv");
    let net = dir.join("net.txt");
    ok(&["gen-data", "--n", "10", "--seed", "1", "--out", p(&data)]);
    ok(&["init-net", "--layers", layers, "--seed", "2", "--data", p(&data), "--out", p(&net)]);
    (p(&data).to_string(), p(&net).to_string())
}

#[test]
fn eval_grad_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "3,3");
    let run = |out: &str| {
        let out = dir.path().join(out);
        ok(&["eval-grad", "--net", &net, "--data", &data, "--estimator", "psa,reinforce-ewa", "--samples", "40", "--seed", "9", "--out", p(&out)]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["net_psa.csv", "net_reinforce-ewa.csv", "net_rmse_layer1.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exact_estimator_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "2,2");
    let out = dir.path().join("out");
    ok(&["eval-grad", "--net", &net, "--data", &data, "--estimator", "exact", "--samples", "8", "--point-id", "p0", "--out", p(&out)]);
    let mut rdr = csv::Reader::from_path(out.join("p0_exact.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "rmse_rel").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let v: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(v.abs() < 1e-12, "rmse_rel {v}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn tanh_with_zero_lr_leaves_the_network_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "3,3");
    let out = dir.path().join("t");
    ok(&["train", "--data", &data, "--net", &net, "--estimator", "tanh", "--lr", "0", "--epochs", "3", "--out", p(&out)]);
    assert_eq!(fs::read_to_string(&net).unwrap(), fs::read_to_string(out.join("network.txt")).unwrap());
    assert_eq!(fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 4);
}

#[test]
fn zero_epochs_saves_the_initial_network() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "3");
    let out = dir.path().join("t");
    ok(&["train", "--data", &data, "--net", &net, "--estimator", "psa", "--lr", "0.1", "--epochs", "0", "--out", p(&out)]);
    assert_eq!(fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 1);
    assert_eq!(netio::load(out.join("network.txt")).unwrap(), netio::load(&net).unwrap());
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "3");
    let cfg = dir.path().join("run.cfg");
    let first = dir.path().join("first");
    fs::write(&cfg, format!("data={data}\nnet={net}\nestimator=st\nlr=0.5\nepochs=2\nout={}\n", p(&first))).unwrap();
    ok(&["train", "--config", p(&cfg)]);
    let written = fs::read_to_string(first.join("config.txt")).unwrap();
    assert!(written.contains("estimator=st") && written.contains("epochs=2"), "{written}");

    let second = dir.path().join("second");
    ok(&["train", "--config", p(&cfg), "--epochs", "1", "--out", p(&second)]);
    assert_eq!(fs::read_to_string(second.join("history.csv")).unwrap().lines().count(), 2);

    // the written config reproduces the run
    let third = dir.path().join("third");
    ok(&["train", "--config", p(&first.join("config.txt")), "--out", p(&third)]);
    assert_eq!(fs::read(first.join("network.txt")).unwrap(), fs::read(third.join("network.txt")).unwrap());
}

#[test]
fn auto_lr_records_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let (data, net) = setup(dir.path(), "3");
    let out = dir.path().join("t");
    ok(&["train", "--data", &data, "--net", &net, "--estimator", "psa", "--auto-lr", "--probe-epochs", "2", "--epochs", "2", "--out", p(&out)]);
    assert_eq!(fs::read_to_string(out.join("lr_search.csv")).unwrap().lines().count(), 11);
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("lr="));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sbn(&["gen-data", "--bogus"]).status.code(), Some(2));
    assert_eq!(sbn(&["train", "--data", "/nonexistent.csv", "--lr", "1", "--out", p(dir.path())]).status.code(), Some(2));

    let (data, _) = setup(dir.path(), "3");
    let wide = dir.path().join("wide.txt");
    ok(&["init-net", "--layers", "30", "--out", p(&wide)]);
    let out = dir.path().join("e");
    assert_eq!(sbn(&["eval-grad", "--net", p(&wide), "--data", &data, "--out", p(&out)]).status.code(), Some(3));

    let huge = dir.path().join("d");
    let code = sbn(&["train", "--data", &data, "--layers", "3", "--estimator", "reinforce", "--lr", "1e308", "--epochs", "20", "--out", p(&huge)]).status.code();
    assert_eq!(code, Some(4));
}
