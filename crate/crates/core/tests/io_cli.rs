use std::path::Path;
use std::process::Command;

use admixlink::io::{load_frequencies, load_genotypes, load_map, write_frequencies, write_genotypes, write_map};
use admixlink::{Allele, Error};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_admixlink"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_ok(&args);
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulated_files_round_trip_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--markers", "5,3", "--individuals", "3", "--diploid", "--seed", "4"]);
    let g = load_genotypes(&tmp.path().join("genotypes.tsv")).unwrap();
    let f = load_frequencies(&tmp.path().join("freqs.tsv")).unwrap();
    let m = load_map(&tmp.path().join("map.tsv")).unwrap();
    assert_eq!(g.ids, ["ind1", "ind2", "ind3"]);
    assert_eq!(g.layout, f.layout);

    let mut buf = Vec::new();
    write_genotypes(&g, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(tmp.path().join("genotypes.tsv")).unwrap());
    buf.clear();
    write_frequencies(&f, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(tmp.path().join("freqs.tsv")).unwrap());
    buf.clear();
    write_map(&m, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(tmp.path().join("map.tsv")).unwrap());
}

#[test]
fn test_on_admixture_sample_does_not_reject() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--model", "admixture", "--markers", "100", "--seed", "2024"]);
    let out = path(tmp.path(), "results.csv");
    run_ok(&[
        "test",
        "--genotypes",
        &path(tmp.path(), "genotypes.tsv"),
        "--freqs",
        &path(tmp.path(), "freqs.tsv"),
        "--map",
        &path(tmp.path(), "map.tsv"),
        "--seed",
        "1",
        "--out",
        &out,
    ]);
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,ell_null,ell_alt,lambda,p_value,reject,q_hat_1,q_hat_2,r_hat,boundary_flag");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').nth(5), Some("false"));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        simulate(dir, &["--markers", "40,30", "--individuals", "4", "--q", "0.3,0.3,0.4", "--seed", "9"]);
        run_ok(&[
            "test",
            "--genotypes",
            &path(dir, "genotypes.tsv"),
            "--freqs",
            &path(dir, "freqs.tsv"),
            "--map",
            &path(dir, "map.tsv"),
            "--seed",
            "3",
            "--out",
            &path(dir, "results.csv"),
        ]);
    }
    for name in ["genotypes.tsv", "freqs.tsv", "map.tsv", "labels.tsv", "results.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn fit_covariance_and_population_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &["--markers", "300", "--individuals", "2", "--r", "2", "--seed", "5"]);
    let inputs = [
        "--genotypes".to_string(),
        path(dir, "genotypes.tsv"),
        "--freqs".to_string(),
        path(dir, "freqs.tsv"),
        "--map".to_string(),
        path(dir, "map.tsv"),
    ];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args: Vec<&str> = vec![cmd];
        args.extend(inputs.iter().map(String::as_str));
        args.extend_from_slice(extra);
        run_ok(&args);
    };

    let fit = path(dir, "fit.csv");
    with("fit", &["--model", "admixture", "--out", &fit]);
    let text = std::fs::read_to_string(&fit).unwrap();
    assert!(text.starts_with("id,model,ell,q_hat_1,q_hat_2,r_hat,converged,boundary_flag\n"));
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().contains(",admixture,"));

    let cov = path(dir, "cov.csv");
    with("covariance", &["--id", "ind2", "--out", &cov]);
    let text = std::fs::read_to_string(&cov).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["", "q1", "q2", "r"]);
    assert_eq!(rows.len(), 4);
    for (i, label) in ["q1", "q2", "r"].iter().enumerate() {
        assert_eq!(rows[i + 1][0], *label);
        for j in 0..3 {
            assert_eq!(rows[i + 1][j + 1], rows[j + 1][i + 1]);
        }
    }

    let pop = path(dir, "pop.csv");
    with("test-population", &["--out", &pop]);
    let text = std::fs::read_to_string(&pop).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("population,"));
}

#[test]
fn evaluate_grid_has_null_and_alternative_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "grid.csv");
    run_ok(&["evaluate", "--replicates", "2", "--markers", "30", "--starts", "2", "--out", &out]);
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("generating_model,d,r,replicates,rejections,error_type,error_rate,mc_stderr")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.starts_with("linkage,")).count(), 18);
    assert_eq!(rows.iter().filter(|l| l.starts_with("admixture,")).count(), 6);
}

#[test]
fn panel_with_fixed_frequencies_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, &["--model", "admixture", "--markers", "30,20", "--individuals", "6", "--q", "0.5,0.5", "--structured", "0.7", "--diploid"]);
    let summary = path(dir, "summary.csv");
    run_ok(&[
        "test-panel",
        "--genotypes",
        &path(dir, "genotypes.tsv"),
        "--freqs",
        &path(dir, "freqs.tsv"),
        "--map",
        &path(dir, "map.tsv"),
        "--labels",
        &path(dir, "labels.tsv"),
        "--haploid-track",
        "--out",
        &path(dir, "results.csv"),
        "--summary",
        &summary,
    ]);
    let text = std::fs::read_to_string(summary).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "population,tested,rejected,non_rejection_fraction");
    assert!(lines[1].starts_with("all,6,"));
    assert_eq!(lines.len(), 4);
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn validation_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(exit_code(&["test", "--unknown-flag"]), 2);
    assert_eq!(exit_code(&["simulate", "--out", dir.to_str().unwrap(), "--q", "0.5,0.6"]), 2);

    simulate(dir, &["--markers", "10"]);
    std::fs::write(dir.join("bad_map.tsv"), "chrom\tmarker\tdist_cM\n1\t1\t0\n1\t2\t-1\n").unwrap();
    let out = bin()
        .args([
            "test",
            "--genotypes",
            &path(dir, "genotypes.tsv"),
            "--freqs",
            &path(dir, "freqs.tsv"),
            "--map",
            &path(dir, "bad_map.tsv"),
            "--out",
            &path(dir, "r.csv"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad_map.tsv:3"));

    // map layout that disagrees with the genotypes
    std::fs::write(dir.join("short_map.tsv"), "chrom\tmarker\tdist_cM\n1\t1\t0\n1\t2\t1\n").unwrap();
    let code = exit_code(&[
        "test",
        "--genotypes",
        &path(dir, "genotypes.tsv"),
        "--freqs",
        &path(dir, "freqs.tsv"),
        "--map",
        &path(dir, "short_map.tsv"),
        "--out",
        &path(dir, "r.csv"),
    ]);
    assert_eq!(code, 2);

    let code = exit_code(&[
        "test-panel",
        "--genotypes",
        &path(dir, "genotypes.tsv"),
        "--map",
        &path(dir, "map.tsv"),
        "--loo",
        "--out",
        &path(dir, "r.csv"),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_genotype_rows_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("g.tsv");
    std::fs::write(&p, "id\tchrom\tmarker\thap1\thap2\nA\t1\tm1\t1\t0\nA\t1\tm2\t1\n").unwrap();
    match load_genotypes(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    std::fs::write(&p, "id\tchrom\tmarker\thap1\nA\t1\tm1\t1\nA\t1\tm2\t.\nB\t1\tm1\t0\nB\t1\tm2\t1\n").unwrap();
    let panel = load_genotypes(&p).unwrap();
    assert_eq!(panel.individuals[0].tracks()[0][0][1], Allele::Missing);
    std::fs::write(&p, "id\tchrom\tmarker\thap1\nA\t1\tm1\t1\nA\t1\tm2\t.\nB\t1\tm1\t0\n").unwrap();
    assert!(matches!(load_genotypes(&p), Err(Error::Structural(_))));
}

#[test]
fn out_of_range_frequencies_are_clamped() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("f.tsv");
    std::fs::write(&p, "chrom\tmarker\tpop1\tpop2\n1\ta\t0\t1\n1\tb\t0.5\t0.5\n").unwrap();
    let f = load_frequencies(&p).unwrap();
    assert_eq!(f.freqs.clamped_count(), 2);
    assert_eq!(f.freqs.column(0, 0), [1e-6, 1.0 - 1e-6]);
    std::fs::write(&p, "chrom\tmarker\tpop1\tpop2\n1\ta\t0.2\t1.5\n").unwrap();
    assert!(matches!(load_frequencies(&p), Err(Error::Parse { line: 2, .. })));
}
