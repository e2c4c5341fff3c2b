use ldg::calibration::Calibration;
use ldg::experiments::{
    emit_report, parse_config, read_verdicts, records_csv, run_sweep, standard_verdicts, Outcome,
    LP_EXPONENTS,
};
use ldg::field::qf1;

const CONFIG: &str = "\
bc = disclination
winding = 1/2
grid = 24,24,12
h = 0.0833333333333333333
eps = 0.6,0.45,0.35,0.25
K = -0.5,0.5,-0.5,0.5,-0.3,0.3
lambda = 1.5
eta_clear = 0.25
sigma = 0.25
theta = 0.9
seed = 5
out_dir = unused
";

#[test]
fn sweeps_are_deterministic_and_self_consistent() {
    let cal = Calibration::default();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(CONFIG, &cal).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let a = run_sweep(&cfg, &cal, true).unwrap();
    let b = run_sweep(&cfg, &cal, false).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a.records.len(), 4);
    assert_eq!(records_csv(&a.records), records_csv(&b.records));

    for (i, r) in a.records.iter().enumerate() {
        assert!(r.converged);
        assert_eq!(r.lp.len(), LP_EXPONENTS.len());
        let l2 = r.lp[3];
        assert!(
            (l2 * l2 - 2.0 * r.dirichlet_k).abs() <= 1e-10 * r.dirichlet_k,
            "record {i}"
        );
        assert!(r.energy_k <= r.energy && r.bulk_k <= r.bulk);
        let stored = qf1::read(dir.path().join(format!("field_{i}.qf1"))).unwrap();
        assert_eq!(stored.values, a.fields[i].values);
    }
    assert!(a.records.windows(2).all(|w| w[1].energy > w[0].energy));

    let v = standard_verdicts(&a, &cal).unwrap();
    let names: Vec<&str> = v.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "energy_log",
            "bulk_uniformity",
            "lp_1.2",
            "lp_1.5",
            "lp_1.8",
            "lp_2",
            "covering",
            "monotonicity"
        ]
    );
    assert!(v.iter().all(|v| v.metrics.values().all(|m| m.is_finite())));
    emit_report(dir.path(), &a.records, &v).unwrap();
    assert_eq!(read_verdicts(dir.path().join("verdicts.json")).unwrap(), v);
}

#[test]
fn unconverged_sweeps_are_not_judged() {
    let cal = Calibration::default();
    let cfg = parse_config(CONFIG, &cal).unwrap();
    let mut sweep = run_sweep(&cfg, &cal, false).unwrap();
    sweep.records[2].converged = false;
    let v = standard_verdicts(&sweep, &cal).unwrap();
    for name in ["energy_log", "bulk_uniformity", "lp_1.2", "lp_2"] {
        let got = v.iter().find(|x| x.name == name).unwrap();
        assert_eq!(got.outcome, Outcome::NotApplicable, "{name}");
        assert!(got.note.contains("did not converge"));
    }
}

#[test]
fn vacuum_sweep_has_no_bulk_and_no_bad_sets() {
    let cal = Calibration::default();
    let text = CONFIG.replace("bc = disclination", "bc = constant");
    let cfg = parse_config(&text, &cal).unwrap();
    let sweep = run_sweep(&cfg, &cal, false).unwrap();
    for r in &sweep.records {
        assert!(r.energy < 1e-12 && r.bulk_k < 1e-12);
        assert!(r.cover.iter().all(|c| c.count == 0));
    }
    let v = standard_verdicts(&sweep, &cal).unwrap();
    assert!(v.iter().all(|v| v.outcome != Outcome::Fail), "{v:?}");
}
