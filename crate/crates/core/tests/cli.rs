//! End-to-end runs of the `alphafactor` binary.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use approx::assert_relative_eq;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alphafactor"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("spawn alphafactor");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn ok(args: &[&str]) {
    let (code, err) = run(args);
    assert_eq!(code, 0, "{args:?} failed: {err}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn report(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(r: &HashMap<String, String>, key: &str) -> f64 {
    r.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

/// Labelled CSV matrix: (row ids, column ids, values by row).
fn matrix(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let cols: Vec<String> = lines.next().unwrap().split(',').skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    for l in lines {
        let mut it = l.split(',');
        rows.push(it.next().unwrap().to_string());
        vals.push(it.map(|x| x.parse::<f64>().unwrap()).collect());
    }
    (rows, cols, vals)
}

fn weights(path: &Path) -> Vec<f64> {
    matrix(path).2.into_iter().map(|r| r[0]).collect()
}

fn alphas_csv(rows: &[(&str, Vec<f64>)]) -> String {
    let t = rows[0].1.len();
    let header: Vec<String> = (0..t).rev().map(|k| (k + 1).to_string()).collect();
    let mut out = format!("alpha_id,{}\n", header.join(","));
    for (id, v) in rows {
        let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        out.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    out
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("synth");
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn missing_input_exits_2() {
    let d = TempDir::new().unwrap();
    let (code, _) = run(&["cov", "--alphas", s(&d.path().join("nope.csv")), "--out", s(d.path())]);
    assert_eq!(code, 2);
    let (code, _) = run(&["cov", "--bogus"]);
    assert_eq!(code, 2);
}

#[test]
fn position_methods_need_positions() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n-intervals", "0", "--m", "20"]);
    let (code, err) = run(&[
        "factors",
        "--alphas",
        s(&src.join("alphas.csv")),
        "--out",
        s(&d.path().join("f")),
        "--method",
        "var",
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn singular_covariance_codes() {
    let d = TempDir::new().unwrap();
    // Four alphas, two gaps: rank at most 2.
    let a = write(
        d.path(),
        "a.csv",
        &alphas_csv(&[
            ("a", vec![1.0, 0.0, -1.0]),
            ("b", vec![0.5, 1.0, 0.0]),
            ("c", vec![0.0, 2.0, 1.0]),
            ("d", vec![1.0, 1.0, 3.0]),
        ]),
    );
    let out = d.path().join("w");
    let (code, _) = run(&["weights", "--alphas", s(&a), "--out", s(&out), "--mode", "regularized", "--q", "1"]);
    assert_eq!(code, 4);
    let (code, _) = run(&["weights", "--alphas", s(&a), "--out", s(&out), "--mode", "dense"]);
    assert_eq!(code, 3);
    ok(&["weights", "--alphas", s(&a), "--out", s(&out), "--mode", "regularized", "--q", "0.5"]);
}

#[test]
fn singleton_cluster_exits_5() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n", "3", "--f", "1", "--n-intervals", "0", "--m", "20"]);
    let clusters = write(d.path(), "g.csv", "alpha_id,cluster\na0,x\na1,x\na2,y\n");
    let (code, _) = run(&[
        "factors",
        "--alphas",
        s(&src.join("alphas.csv")),
        "--clusters",
        s(&clusters),
        "--out",
        s(&d.path().join("f")),
    ]);
    assert_eq!(code, 5);
}

#[test]
fn empty_ticks_exit_6() {
    let d = TempDir::new().unwrap();
    let prints = write(d.path(), "p.csv", "time,price,volume\n");
    let no_quotes = write(d.path(), "q0.csv", "time,bid,ask\n");
    let quotes = write(d.path(), "q.csv", "time,bid,ask\n0,99,101\n");
    let out = d.path().join("i");
    let (code, _) = run(&["impact", "--prints", s(&prints), "--quotes", s(&no_quotes), "--out", s(&out)]);
    assert_eq!(code, 6);
    let (code, _) = run(&["impact", "--prints", s(&prints), "--quotes", s(&quotes), "--out", s(&out)]);
    assert_eq!(code, 6);
}

#[test]
fn cov_outputs_and_degenerate_flag() {
    let d = TempDir::new().unwrap();
    let a = write(
        d.path(),
        "a.csv",
        &alphas_csv(&[
            ("x", vec![1.0, -1.0, 2.0, 0.5]),
            ("flat", vec![0.3, 0.3, 0.3, 0.3]),
            ("y", vec![0.0, 1.0, -1.0, 2.0]),
        ]),
    );
    let out = d.path().join("c");
    ok(&["cov", "--alphas", s(&a), "--out", s(&out)]);
    for f in ["cov.csv", "corr.csv", "eigenvalues.csv", "truncation.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&out.join("truncation.txt"));
    assert_eq!(r["degenerate_count"], "1");
    assert_eq!(r["degenerate"], "flat");
    let (_, _, c) = matrix(&out.join("cov.csv"));
    assert_eq!(c[1][1], 0.0);
    // Divisor M over the three gaps.
    let x = [1.0, -1.0, 2.0, 0.5];
    let mean = x.iter().sum::<f64>() / 4.0;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
    assert_relative_eq!(c[0][0], var, max_relative = 1e-14);
    let (_, _, corr) = matrix(&out.join("corr.csv"));
    assert_eq!(corr[0][0], 1.0);
    assert!(corr[0][1].is_nan());
}

#[test]
fn equal_alphas_with_identity_covariance_split_evenly() {
    let d = TempDir::new().unwrap();
    let c = 3f64.sqrt() / 2.0;
    let a = write(
        d.path(),
        "a.csv",
        &alphas_csv(&[
            ("p", vec![c, -c, c, -c]),
            ("q", vec![c, c, -c, -c]),
        ]),
    );
    let out = d.path().join("w");
    ok(&["weights", "--alphas", s(&a), "--out", s(&out)]);
    let w = weights(&out.join("weights.csv"));
    assert_relative_eq!(w[0], 0.5, epsilon = 1e-12);
    assert_relative_eq!(w[1], 0.5, epsilon = 1e-12);
}

#[test]
fn regression_weights_match_regularized_limit() {
    // More alphas than gaps, so the sample covariance is singular.
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n", "10", "--f", "2", "--m", "5", "--n-intervals", "0", "--seed", "9"]);
    let a = src.join("alphas.csv");
    let reg = d.path().join("reg");
    let lim = d.path().join("lim");
    ok(&["weights", "--alphas", s(&a), "--out", s(&reg), "--mode", "regression"]);
    ok(&["weights", "--alphas", s(&a), "--out", s(&lim), "--mode", "regularized", "--q", "0.999999999"]);
    let (wr, wl) = (weights(&reg.join("weights.csv")), weights(&lim.join("weights.csv")));
    assert_relative_eq!(wr.iter().map(|x| x.abs()).sum::<f64>(), 1.0, epsilon = 1e-12);
    for (x, y) in wr.iter().zip(&wl) {
        assert!((x - y).abs() < 1e-5, "{wr:?} vs {wl:?}");
    }
}

#[test]
fn cluster_phi_matches_block_averages() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n", "7", "--f", "3", "--m", "40", "--n-intervals", "0", "--seed", "4"]);
    let cov = d.path().join("cov");
    let fac = d.path().join("fac");
    ok(&["cov", "--alphas", s(&src.join("alphas.csv")), "--out", s(&cov)]);
    ok(&[
        "factors",
        "--alphas",
        s(&src.join("alphas.csv")),
        "--clusters",
        s(&src.join("clusters.csv")),
        "--out",
        s(&fac),
    ]);
    let (ids, _, c) = matrix(&cov.join("cov.csv"));
    let labels: HashMap<String, String> = fs::read_to_string(src.join("clusters.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect();
    let (fids, _, phi) = matrix(&fac.join("phi.csv"));
    for (x, fx) in fids.iter().enumerate() {
        for (y, fy) in fids.iter().enumerate() {
            let (mut sum, mut k) = (0.0, 0);
            for (i, a) in ids.iter().enumerate() {
                for (j, b) in ids.iter().enumerate() {
                    if i != j && &labels[a] == fx && &labels[b] == fy {
                        sum += c[i][j];
                        k += 1;
                    }
                }
            }
            assert_relative_eq!(phi[x][y], sum / k as f64, max_relative = 1e-12, epsilon = 1e-15);
        }
    }
    let (_, _, xi2) = matrix(&fac.join("xi2.csv"));
    for (i, a) in ids.iter().enumerate() {
        let g = fids.iter().position(|f| f == &labels[a]).unwrap();
        let expect = c[i][i] - phi[g][g];
        if expect > 0.0 {
            assert_relative_eq!(xi2[i][0], expect, max_relative = 1e-10);
        }
    }
}

#[test]
fn bounded_positions_have_rank_one() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n-intervals", "0", "--m", "30", "--style", "bounded"]);
    let out = d.path().join("f");
    ok(&[
        "factors",
        "--alphas",
        s(&src.join("alphas.csv")),
        "--positions",
        s(&src.join("positions.csv")),
        "--out",
        s(&out),
    ]);
    let r = report(&out.join("effective_rank.txt"));
    assert_eq!(r["effective_rank"], "1");
}

#[test]
fn noiseless_ticks_recover_powers() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n-intervals", "400", "--seed", "5"]);
    let truth = report(&src.join("truth.txt"));
    let out = d.path().join("i");
    ok(&[
        "impact",
        "--prints",
        s(&src.join("prints.csv")),
        "--quotes",
        s(&src.join("quotes.csv")),
        "--fills",
        s(&src.join("fills.csv")),
        "--n-intervals",
        &truth["n_intervals"],
        "--session-ms",
        &truth["session_ms"],
        "--out",
        s(&out),
    ]);
    let r = report(&out.join("impact.txt"));
    assert!((num(&r, "n") - 1.5).abs() < 1e-9, "n = {}", r["n"]);
    let nu = report(&out.join("nu.txt"));
    assert!((num(&nu, "nu") - 1.5).abs() < 1e-9, "nu = {}", nu["nu"]);
    assert_relative_eq!(num(&nu, "L"), 0.001, max_relative = 1e-6);
    assert_relative_eq!(num(&nu, "Q"), 0.002, max_relative = 1e-6);
    assert_eq!(nu["nu_identified"], "true");
}

#[test]
fn capacity_closed_form() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("cap");
    ok(&[
        "capacity",
        "--alpha",
        "0.02",
        "--turnover",
        "1",
        "--linear-cost",
        "0.005",
        "--impact-coef",
        "0.001",
        "--out",
        s(&out),
    ]);
    let r = report(&out.join("capacity.txt"));
    let m: f64 = 0.015;
    assert_relative_eq!(num(&r, "investment"), m * m / 1e-6, max_relative = 1e-12);
    assert_relative_eq!(num(&r, "pnl"), m.powi(3) / 3e-6, max_relative = 1e-12);
    assert_relative_eq!(num(&r, "margin_at_capacity"), m / 3.0, max_relative = 1e-12);
}

#[test]
fn portfolio_capacity_from_files() {
    let d = TempDir::new().unwrap();
    let w = write(d.path(), "w.csv", "alpha_id,w\na,0.25\nb,-0.75\n");
    let costs = write(d.path(), "c.csv", "alpha_id,turnover,impact_coef\nb,2,0.004\na,1,0.002\n");
    let out = d.path().join("cap");
    ok(&[
        "capacity",
        "--weights",
        s(&w),
        "--costs",
        s(&costs),
        "--margin",
        "0.01",
        "--rho-star",
        "0.5",
        "--out",
        s(&out),
    ]);
    let r = report(&out.join("capacity.txt"));
    let (tau, kappa) = (0.25 + 0.75 * 2.0, 0.25 * 0.002 + 0.75 * 0.004);
    assert_relative_eq!(num(&r, "tau"), tau, max_relative = 1e-14);
    assert_relative_eq!(num(&r, "kappa"), kappa, max_relative = 1e-14);
    let expect = (0.01 / kappa).powi(2) / (tau * 0.5f64.powi(3));
    assert_relative_eq!(num(&r, "investment"), expect, max_relative = 1e-12);
}

#[test]
fn synth_is_deterministic() {
    let d = TempDir::new().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    let c = d.path().join("c");
    ok(&["synth", "--out", s(&a), "--seed", "11", "--n-intervals", "50"]);
    ok(&["synth", "--out", s(&b), "--seed", "11", "--n-intervals", "50"]);
    ok(&["synth", "--out", s(&c), "--seed", "12", "--n-intervals", "50"]);
    for f in ["alphas.csv", "positions.csv", "clusters.csv", "prints.csv", "quotes.csv", "fills.csv", "truth.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("alphas.csv")).unwrap(), fs::read(c.join("alphas.csv")).unwrap());
    assert_eq!(report(&a.join("truth.txt"))["gamma_positive_definite"], "true");
}

#[test]
fn synth_clusters_round_trip() {
    let d = TempDir::new().unwrap();
    let src = synth(d.path(), &["--n", "8", "--f", "2", "--m", "20000", "--n-intervals", "0", "--seed", "2"]);
    let truth = report(&src.join("truth.txt"));
    let out = d.path().join("f");
    ok(&[
        "factors",
        "--alphas",
        s(&src.join("alphas.csv")),
        "--clusters",
        s(&src.join("clusters.csv")),
        "--out",
        s(&out),
    ]);
    let (fids, _, phi) = matrix(&out.join("phi.csv"));
    let planted: Vec<Vec<f64>> = fids
        .iter()
        .map(|x| fids.iter().map(|y| num(&truth, &format!("phi_{x}_{y}"))).collect())
        .collect();
    let scale = planted.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (pr, er) in planted.iter().zip(&phi) {
        for (p, e) in pr.iter().zip(er) {
            assert!((p - e).abs() < 0.05 * scale, "planted {planted:?} estimated {phi:?}");
        }
    }
}
