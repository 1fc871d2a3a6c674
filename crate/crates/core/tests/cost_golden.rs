use svdsim::runtime::{cost_ladder, cost_report, RuntimeParams, COST_HEADER};

fn params() -> RuntimeParams {
    RuntimeParams {
        mu: Some(3.2032),
        spectral: Some(1.0),
        theta: Some(0.1564),
        thresholding_eps: Some(0.0030),
        k: Some(59),
        rank: Some(784),
        p: Some(0.858),
        delta: Some(0.1124),
        gamma: Some(0.0316),
        eta: Some(0.01),
        xi: Some(0.9),
        n: Some(70000),
        m: Some(784),
        ..RuntimeParams::default()
    }
}

#[test]
fn matches_golden_file() {
    let golden = include_str!("golden/cost_report.csv");
    let mut reader = csv::Reader::from_reader(golden.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), COST_HEADER);
    let rows = cost_report(&params()).unwrap();
    let expected: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), expected.len());
    for (row, rec) in rows.iter().zip(&expected) {
        assert_eq!(row.routine, &rec[0]);
        assert_eq!(row.expression, &rec[1]);
        let want: f64 = rec[2].parse().unwrap();
        assert!(
            (row.value - want).abs() <= 1e-12 * want.abs(),
            "{}: {} vs {}",
            row.routine,
            row.value,
            want
        );
    }
}

#[test]
fn missing_parameter_is_reported() {
    let mut p = params();
    p.eta = None;
    let err = cost_report(&p).unwrap_err();
    assert!(err.to_string().contains("eta"), "{err}");
}

#[test]
fn ladder_finds_crossover() {
    let report = cost_ladder(&params(), &[100, 1000, 10_000, 100_000, 1_000_000]).unwrap();
    assert_eq!(report.rows.len(), 5 * 11);
    let n = report.crossover.expect("baseline overtakes the fitting cost");
    let at = |n: usize, name: &str| {
        report
            .rows
            .iter()
            .find(|r| r.n == n && r.routine == name)
            .unwrap()
            .value
    };
    assert!(at(n, "classical_baseline") > at(n, "pca_fit"));
    assert!(at(100, "classical_baseline") < at(100, "pca_fit"));
}
