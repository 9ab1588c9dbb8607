use std::fs;
use std::path::Path;

use precog::cli::{self, bench::CSV_HEADER};
use precog::matgen;

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("precog").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_hilbert_writes_readable_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.txt");
    assert_eq!(run(&["gen", "--family", "hilbert", "--n", "3", "--alpha", "0", "-o", path_str(&out)]), 0);
    let m = matgen::read_matrix(fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(m.nrows(), 3);
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(m[(i, j)], 1.0 / (i + j + 1) as f64);
        }
    }
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let c = dir.path().join("c.txt");
    for (p, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        assert_eq!(run(&["gen", "--family", "random-pd", "--n", "6", "--seed", seed, "-o", path_str(p)]), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["gen", "--family", "toeplitz", "--n", "4"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["precondition", "--family", "ar1", "--n", "6", "--mu", "3"]), 2);
    assert_eq!(run(&["precondition", "--matrix", "/nonexistent/m.txt"]), 2);
    assert_eq!(run(&["gradcheck", "--n", "40"]), 2);
}

#[test]
fn numerical_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("indef.txt");
    fs::write(&m, "2\n1 2\n2 1\n").unwrap();
    assert_eq!(run(&["precondition", "--matrix", path_str(&m)]), 1);
}

#[test]
fn bench_csv_has_header_and_sorted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let code = run(&[
        "bench",
        "--family",
        "ar1",
        "--n",
        "8",
        "--rho",
        "0.9",
        "--methods",
        "dct,jacobi,none",
        "--max-iter",
        "50",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let methods: Vec<&str> = rows.iter().map(|r| &r[4]).collect();
    assert_eq!(methods, ["dct", "jacobi", "none", "precog"]);
    assert!(rows.iter().all(|r| &r[14] == "ok"));
    let dct_ratio: f64 = rows[0][7].parse().unwrap();
    assert!(dct_ratio > 0.0 && dct_ratio.is_finite());
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "max_iter = 4\nseed = 7\nband_exit = false\n").unwrap();
    let hist = dir.path().join("h.csv");
    let base = ["--config", path_str(&cfg), "precondition", "--family", "hilbert", "--n", "5"];

    assert_eq!(run(&[&base[..], &["--history", path_str(&hist)]].concat()), 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&hist).unwrap().records().map(Result::unwrap).collect();
    assert!(!rows.is_empty() && rows.len() <= 4);
    assert!(rows.iter().all(|r| &r[5] == "7"));

    assert_eq!(run(&[&base[..], &["--seed", "9", "--max-iter", "2", "--history", path_str(&hist)]].concat()), 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&hist).unwrap().records().map(Result::unwrap).collect();
    assert!(rows.len() <= 2);
    assert!(rows.iter().all(|r| &r[5] == "9"));

    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    assert_eq!(run(&base), 2);
}

#[test]
fn gradcheck_default_passes() {
    assert_eq!(run(&["gradcheck"]), 0);
}

#[test]
fn lms_trace_reaches_low_misalignment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lms.csv");
    let code = run(&["lms", "--taps", "8", "--transform", "dct", "--run-len", "3000", "-o", path_str(&out)]);
    assert_eq!(code, 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&out).unwrap().records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3000);
    let last: f64 = rows[2999][2].parse().unwrap();
    assert!(last < -20.0, "final misalignment {last} dB");
}

#[test]
fn sweep_iterations_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let code = run(&[
        "sweep",
        "iterations",
        "--families",
        "hilbert",
        "--n",
        "6",
        "--checkpoints",
        "1,5,20",
        "-o",
        path_str(&out),
    ]);
    assert_eq!(code, 0);
    let conds: Vec<f64> =
        csv::Reader::from_path(&out).unwrap().records().map(|r| r.unwrap()[7].parse().unwrap()).collect();
    assert_eq!(conds.len(), 3);
    assert!(conds.windows(2).all(|w| w[1] <= w[0]));
}
