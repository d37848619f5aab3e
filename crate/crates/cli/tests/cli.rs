use std::path::Path;
use std::process::{Command, Output};

fn hyfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyfem")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Facet count of a mesh dump via Euler's formula for a disc.
fn facets_of_dump(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let (mut nv, mut nt) = (0, 0);
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xy: Vec<f64> = it.map(|s| s.parse().unwrap()).collect();
                assert_eq!(xy.len(), 2);
                nv += 1;
            }
            Some("t") => {
                let ids: Vec<usize> = it.map(|s| s.parse().unwrap()).collect();
                assert_eq!(ids.len(), 3);
                assert!(ids.iter().all(|&i| i < nv));
                nt += 1;
            }
            other => panic!("unexpected line {other:?}"),
        }
    }
    nv + nt - 1
}

fn patch_triangles(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let blocks: Vec<&str> = text.split("\n\n").filter(|b| !b.trim().is_empty()).collect();
    for b in &blocks {
        let lines: Vec<&str> = b.lines().collect();
        assert_eq!(lines.len(), 3);
        for l in lines {
            let xyz: Vec<f64> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
            assert_eq!(xyz.len(), 3);
            assert!(xyz.iter().all(|v| v.is_finite()));
        }
    }
    blocks.len()
}

#[test]
fn help_exits_zero() {
    let o = hyfem(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Usage"));
    assert_eq!(hyfem(&["run", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(hyfem(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hyfem(&["run", "--problem", "boxload", "--method", "cg", "--refinement", "adaptive", "--output", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimator"));
    assert_eq!(hyfem(&["run", "--eps", "0", "--output", out]).status.code(), Some(1));
    assert_eq!(hyfem(&["run", "--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
}

#[test]
fn manufactured_uniform_run_writes_all_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = hyfem(&["run", "--problem", "manufactured", "--method", "phfem", "--eps", "1e-4", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dof,errUP0L2,errUP1L2,errUS1L2,est"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for (level, row) in rows.iter().enumerate() {
        let n = 16 << (2 * level);
        let mesh = out.join(format!("mesh_{n:05}.txt"));
        assert_eq!(row[0].parse::<usize>().unwrap(), facets_of_dump(&mesh));
        for v in &row[1..] {
            let mantissa = v.split('e').next().unwrap();
            assert_eq!(mantissa.replace(['.', '-'], "").len(), 17, "{v}");
            assert!(v.parse::<f64>().unwrap() > 0.0);
        }
        assert_eq!(patch_triangles(&out.join(format!("phfem_solP0_{n:05}.dat"))), n);
        assert_eq!(patch_triangles(&out.join(format!("cg_solS1_{n:05}.dat"))), n);
    }
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small adaptive run\nproblem = boxload\nmethod = all\neps = 1e-3\nrefinement = adaptive\nmax_dof = 600\n").unwrap();
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = hyfem(&["run", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--no-patches"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.join("phfem").join("mesh_00064.txt").exists());
        texts.push(
            ["phfem", "dhfem"].map(|m| std::fs::read(out.join(m).join("errors.csv")).unwrap()),
        );
        assert!(!out.join("cg").exists());
    }
    assert_eq!(texts[0], texts[1]);
    // boxload has no exact solution: error columns are NaN
    let csv = String::from_utf8(texts[0][0].clone()).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",NaN,NaN,NaN,"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "method = cg\nlevels = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = hyfem(&["run", "--config", cfg.to_str().unwrap(), "--levels", "2", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("cg_solS1_00064.dat").exists());
}

#[test]
fn verify_passes() {
    let o = hyfem(&["verify"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    for suite in ["quadrature", "exponential-quadrature", "bubble-scaling", "basis", "condensed-vs-monolithic", "constraints"] {
        assert!(text.lines().any(|l| l.contains(suite) && l.contains("pass")), "{suite}: {text}");
    }
}

#[test]
fn verify_detects_flipped_coupling() {
    let o = hyfem(&["verify", "--flip-coupling"]);
    assert_ne!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.contains("condensed-vs-monolithic") && l.contains("FAIL")), "{text}");
}

#[test]
fn verify_eps_one_skips_layer_suites() {
    let o = hyfem(&["verify", "--eps-one-only"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    for suite in ["exponential-quadrature", "bubble-scaling"] {
        assert!(text.lines().any(|l| l.contains(suite) && l.contains("skipped")), "{suite}: {text}");
    }
}
