use leverage_trust::calibration::{default_rate_series, generate_synthetic, ModelConstants, MsmParams};
use leverage_trust::io::{load_timeseries, write_timeseries, IngestError, KvConfig};

#[test]
fn synthetic_series_round_trips_through_csv() {
    let p = MsmParams {
        c1: 0.10,
        c2: -0.16,
        sigma2: 0.0025,
        lambda: 0.5,
        mu: 0.5,
        l1: 0.25,
        t1: 0.35,
        constants: ModelConstants::default(),
    };
    let data = generate_synthetic(&p, 168, 17, &default_rate_series(168)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    write_timeseries(&data.series, std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_timeseries(&path).unwrap();
    assert_eq!(back, data.series);
}

#[test]
fn ingestion_errors_are_specific() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let ok = write(
        "ok.csv",
        "date,roe,rate\n2001-01-31,0.1,0.02\n2001-02-28,0.12,0.02\n2001-03-31,0.09,0.02\n",
    );
    assert_eq!(load_timeseries(&ok).unwrap().len(), 3);
    let gap = write("gap.csv", "date,roe,rate\n2001-01,0.1,0.02\n2001-03,0.1,0.02\n");
    match load_timeseries(&gap) {
        Err(IngestError::Gap { month }) => assert_eq!(month, "2001-02"),
        other => panic!("{other:?}"),
    }
    let missing = write("missing.csv", "date,roe\n2001-01,0.1\n");
    assert!(matches!(
        load_timeseries(&missing),
        Err(IngestError::MissingColumn("rate"))
    ));
    assert!(matches!(
        load_timeseries(&dir.path().join("nope.csv")),
        Err(IngestError::Io { .. })
    ));
}

#[test]
fn config_text_round_trips() {
    let text = "# model\n[model]\na = 0.05\ng = -0.01\n\n[grid]\nn = 51\n";
    let cfg = KvConfig::parse(text).unwrap();
    let again = KvConfig::parse(&cfg.to_string()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(again.require::<f64>("model", "g").unwrap(), -0.01);
}
