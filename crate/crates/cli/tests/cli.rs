use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use churnkit::ingest::{read_durations, write_duration_table, DurationTable, PlayerRecord};
use churnkit::nonparam::kaplan_meier;
use churnkit::{build_event_table, CurveKind, Observation, StepCurve};
use churnkit_cli::{emit_curve, read_curve, run, CurveRows};

const TABLE_TWO: [(&str, &str, bool); 10] = [
    ("gp0", "00:22:51", false),
    ("gp1", "05:55:32", false),
    ("gp2", "00:10:48", false),
    ("gp3", "00:00:13", false),
    ("gp4", "01:50:59", false),
    ("gp5", "02:21:48", false),
    ("gp6", "00:47:27", true),
    ("gp7", "04:45:25", false),
    ("gp8", "11:55:22", false),
    ("gp9", "00:01:53", false),
];

fn hours(hms: &str) -> f64 {
    let p: Vec<f64> = hms.split(':').map(|x| x.parse().unwrap()).collect();
    (p[0] * 3600.0 + p[1] * 60.0 + p[2]) / 3600.0
}

fn sample(dir: &Path) -> PathBuf {
    let path = dir.join("sample.csv");
    let table = DurationTable {
        label: "sample".into(),
        records: TABLE_TWO
            .iter()
            .map(|&(id, hms, c)| PlayerRecord {
                player_id: id.into(),
                observation: Observation::new(hours(hms), c),
                stratum: None,
            })
            .collect(),
    };
    write_duration_table(&table, &path).unwrap();
    path
}

fn churnkit(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("churnkit").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn km_table_matches_table_four() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let (code, out, _) = churnkit(&["km", "--input", s(&input), "--conf", "0.95"]);
    assert_eq!(code, 0);
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().collect())
        .collect();
    let survival = [
        "0.90", "0.80", "0.70", "0.60", "0.48", "0.36", "0.24", "0.12", "0.00",
    ];
    let cum_hazard = [
        "0.10", "0.21", "0.34", "0.48", "0.68", "0.93", "1.26", "1.76", "2.76",
    ];
    let at_risk = ["10", "9", "8", "7", "5", "4", "3", "2", "1"];
    let hazard = [
        "0.10", "0.11", "0.13", "0.14", "0.20", "0.25", "0.33", "0.50", "1.00",
    ];
    assert_eq!(rows.len(), 9);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[1], at_risk[i]);
        assert_eq!(r[3], hazard[i]);
        assert_eq!(r[4], cum_hazard[i]);
        assert_eq!(r[5], survival[i]);
    }
    assert_eq!(&rows[0][6..], ["0.47", "0.99"]);
    assert_eq!(rows[4][0], "1.85");
    assert_eq!(&rows[4][6..], ["0.16", "0.74"]);
    assert_eq!(&rows[8][6..], ["NA", "NA"]);
}

#[test]
fn metrics_output_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let (code, out, _) = churnkit(&["metrics", "--input", s(&input)]);
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "mean 3.28 CI [0.81, 5.75]\nmedian 1.85 CI [0.00, 5.93]\n"
    );
}

#[test]
fn abtest_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let (code, out, _) = churnkit(&["abtest", "--control", s(&input), "--test", s(&input)]);
    assert_eq!(code, 0);
    assert!(out.starts_with("chi2 0.00 p 1.000"), "{out}");
}

#[test]
fn abtest_with_strata() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "player_id,duration_hours,censored,country\n1,0.5,0,se\n2,1.5,0,dk\n3,2.5,1,se\n4,0.2,0,dk\n").unwrap();
    fs::write(&b, "player_id,duration_hours,censored,country\n5,3.5,0,se\n6,4.5,0,dk\n7,0.7,0,se\n8,9.0,1,no\n").unwrap();
    let (code, out, err) = churnkit(&[
        "abtest",
        "--control",
        s(&a),
        "--test",
        s(&b),
        "--strata",
        "country",
        "--rho",
        "1",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("strata 3"), "{out}");
    let (code, _, err) = churnkit(&[
        "abtest",
        "--control",
        s(&a),
        "--test",
        s(&b),
        "--strata",
        "region",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("region"));
}

#[test]
fn km_curve_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let curve = dir.path().join("km.csv");
    let (code, _, _) = churnkit(&["km", "--input", s(&input), "--out", s(&curve)]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("t,value,ci_lower,ci_upper\n0,1,,\n"));
    assert_eq!(text.lines().count(), 11);

    let cohort = read_durations(&input).unwrap();
    let km = kaplan_meier(&build_event_table(&cohort).unwrap(), 0.95).unwrap();
    assert_eq!(read_curve(&curve).unwrap(), km.curve.curve_rows());
}

#[test]
fn empty_curve_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    let curve = StepCurve {
        kind: CurveKind::Survival,
        points: vec![],
    };
    emit_curve(&curve, &path).unwrap();
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        "t,value,ci_lower,ci_upper\n"
    );
    assert!(read_curve(&path).unwrap().is_empty());
}

#[test]
fn hazard_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let curve = dir.path().join("h.csv");
    let (code, out, _) = churnkit(&[
        "hazard",
        "--input",
        s(&input),
        "--kernel",
        "uniform",
        "--bandwidth",
        "12",
        "--out",
        s(&curve),
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("kernel uniform  bandwidth 12.00\n"));
    assert_eq!(read_curve(&curve).unwrap().len(), 256);

    let (code, out, _) = churnkit(&[
        "hazard",
        "--input",
        s(&input),
        "--bins",
        "1",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "start,end,events,exposure,rate");
    let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(first[..3], [0.0, 1.0, 4.0]);
    assert!((first[3] - 6.38).abs() <= 0.01 + 1e-12);
    assert_eq!(first[4], 0.63);
    assert_eq!(lines.len(), 13);

    let (code, _, _) = churnkit(&[
        "hazard",
        "--input",
        s(&input),
        "--kernel",
        "uniform",
        "--bins",
        "1",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn fit_exponential_golden() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let (code, out, _) = churnkit(&["fit", "--input", s(&input)]);
    assert_eq!(code, 0);
    // R = 28.205 h sits on a rounding boundary
    let first: Vec<&str> = out.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(first[..2], ["churns", "9"]);
    let total: f64 = first[4].parse().unwrap();
    assert!((total - 28.21).abs() <= 0.01 + 1e-12, "{out}");
    let row: Vec<&str> = out.lines().nth(2).unwrap().split_whitespace().collect();
    assert_eq!(
        row[..6],
        ["exponential", "lambda", "0.32", "0.11", "0.11", "0.53"]
    );

    let (code, out, _) = churnkit(&[
        "fit",
        "--input",
        s(&input),
        "--family",
        "all",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 8);
}

#[test]
fn full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let (_, out, _) = churnkit(&[
        "km",
        "--input",
        s(&input),
        "--format",
        "csv",
        "--precision",
        "full",
    ]);
    let cohort = read_durations(&input).unwrap();
    let km = kaplan_meier(&build_event_table(&cohort).unwrap(), 0.95).unwrap();
    let printed: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    let expected: Vec<f64> = km.survival().collect();
    assert_eq!(printed, expected);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    for args in [
        vec!["km", "--input", s(&input)],
        vec![
            "metrics",
            "--input",
            s(&input),
            "--quantiles",
            "0.25,0.5,0.75",
        ],
        vec![
            "simulate",
            "--family",
            "lognormal",
            "--params",
            "0.5,1.2",
            "--n",
            "50",
            "--seed",
            "9",
        ],
    ] {
        assert_eq!(churnkit(&args), churnkit(&args));
    }
}

#[test]
fn simulate_writes_durations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let (code, _, _) = churnkit(&[
        "simulate",
        "--family",
        "exponential",
        "--params",
        "0.5",
        "--n",
        "200",
        "--censor-time",
        "2",
        "--seed",
        "3",
        "--out",
        s(&path),
    ]);
    assert_eq!(code, 0);
    let c = read_durations(&path).unwrap();
    assert_eq!(c.len(), 200);
    assert!(c.observations.iter().all(|o| o.duration <= 2.0));

    let (code, _, err) = churnkit(&[
        "simulate", "--family", "weibull", "--params", "0.5", "--n", "5",
    ]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
}

#[test]
fn sessions_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.csv");
    fs::write(
        &path,
        "player_id,start_iso8601,end_iso8601\n\
         gp0,2014-01-01T10:00:00Z,2014-01-01T10:22:51Z\n\
         gp6,2014-02-25T10:00:00Z,2014-02-25T10:47:27Z\n",
    )
    .unwrap();
    let (code, out, err) = churnkit(&[
        "km",
        "--input",
        s(&path),
        "--sessions",
        "--cutoff",
        "2014-03-01T00:00:00Z",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().nth(1).unwrap().trim_start().starts_with("0.38"));
    assert!(out.contains("censored"));

    let (code, _, err) = churnkit(&["km", "--input", s(&path), "--sessions"]);
    assert_eq!(code, 2);
    assert!(err.contains("--cutoff"));
    let (code, _, _) = churnkit(&[
        "km",
        "--input",
        s(&path),
        "--sessions",
        "--cutoff",
        "2014-02-01T00:00:00Z",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    assert_eq!(churnkit(&[]).0, 2);
    assert_eq!(churnkit(&["frobnicate"]).0, 2);
    assert_eq!(
        churnkit(&["km", "--input", s(&input), "--conf", "1.5"]).0,
        2
    );
    assert_eq!(
        churnkit(&["km", "--input", s(&input), "--precision", "x"]).0,
        2
    );
    assert_eq!(
        churnkit(&["metrics", "--input", s(&input), "--quantiles", "0,0.5"]).0,
        2
    );
    assert_eq!(
        churnkit(&["fit", "--input", s(&input), "--family", "gamma"]).0,
        2
    );
    let (code, out, _) = churnkit(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("abtest"));

    let (code, _, err) = churnkit(&["km", "--input", "/definitely/missing.csv"]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: "));

    let censored = dir.path().join("censored.csv");
    fs::write(
        &censored,
        "player_id,duration_hours,censored\na,1,1\nb,2,1\n",
    )
    .unwrap();
    let (code, _, err) = churnkit(&["fit", "--input", s(&censored)]);
    assert_eq!(code, 1);
    assert!(err.contains("degenerate"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "player_id,duration_hours,censored\na,1,0\nb,oops,0\n").unwrap();
    let (code, _, err) = churnkit(&["km", "--input", s(&bad)]);
    assert_eq!(code, 1);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn binary_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_churnkit"))
        .args(["metrics", "--input", s(&input)])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("mean 3.28"));
    let out = Command::new(env!("CARGO_BIN_EXE_churnkit"))
        .arg("km")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
