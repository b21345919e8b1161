use gsfa::experiments::{reproduce, Pipeline};

#[test]
fn reproduce_pipelines_pass() {
    for p in Pipeline::ALL {
        let dir = tempfile::tempdir().unwrap();
        let summary = reproduce(p, dir.path(), 7).unwrap();
        for c in &summary.checks {
            println!("{} {} {} {} {}", p.name(), c.name, c.value, c.threshold, c.passed);
        }
        assert!(summary.passed(), "{}", summary.to_csv());
        for f in ["config.json", "summary.csv", "log.txt"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
