use std::fs;
use std::path::Path;

use conewalk::harness::{emit_outputs, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, RunRecord};
use conewalk::Error;

fn small_configs() -> Vec<ExperimentConfig> {
    let texts = [
        r#"{"experiment":"walk-group","name":"wg","law":{"type":"scalar_two_point","a":1.0,"b":2.0,"p_a":0.5},
            "p_grid":[3,40],"n_steps":12,"checkpoints":[4,12],"replicates":300,"master_seed":5,"record_replicates":true}"#,
        r#"{"experiment":"walk-bessel","name":"wb","law":{"type":"point_mass","atom":{"diag":[1.0,0.5]}},
            "mu_grid":[5.0,40.0],"n_steps":6,"replicates":200,"master_seed":6}"#,
        r#"{"experiment":"convolve","name":"cv","points":{"r":{"diag":[1.0,2.0]},"s":[[1.0,0.3],[0.3,0.5]]},
            "mu_grid":[3.0,12.0],"replicates":500,"master_seed":7,"record_replicates":true}"#,
        r#"{"experiment":"kappa","name":"kp","q":2,"mu_grid":[3.0,9.0],"replicates":2000,"master_seed":8}"#,
        r#"{"experiment":"clt-check","name":"cl","kind":"CLT4","law":{"type":"finite_mixture",
            "atoms":[{"diag":[1.0,2.0]},{"diag":[2.0,1.0]}],"weights":[0.5,0.5]},
            "p_grid":[50],"n_steps":5,"replicates":400,"master_seed":9}"#,
        r#"{"experiment":"berry-esseen-scan","name":"be","law":{"type":"scalar_two_point","a":1.0,"b":2.0,"p_a":0.5},
            "p_grid":[3],"n_grid":[1,2,4,8],"replicates":2000,"master_seed":10}"#,
        r#"{"experiment":"axioms","name":"ax","checks":["support-bound","commutativity","m1-subadditivity","character","contraction-ks"],
            "support_grid":[{"q":1,"mu":3.0},{"q":2,"field":"complex","mu":8.0}],"character":{"mu":3.0,"r1":0.5,"r2":1.5,"s":1.0},
            "mu_grid":[3.0],"replicates":400,"master_seed":11}"#,
        r#"{"experiment":"moment-identity","name":"mi","law":{"type":"scalar_two_point","a":1.0,"b":2.0,"p_a":0.5},
            "field":"complex","np_grid":[[5,4]],"replicates":3000,"master_seed":12}"#,
    ];
    texts.iter().map(|t| ExperimentConfig::from_json(t).unwrap()).collect()
}

/// Output files with the run-dependent parts removed.
fn stable_outputs(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".timing.json"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            let body = if p.extension().is_some_and(|e| e == "csv") {
                assert!(text.starts_with("# conewalk "));
                text.split_once('\n').unwrap().1.to_string()
            } else {
                text
            };
            (p.file_name().unwrap().to_string_lossy().into_owned(), body)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_experiment_kind_is_covered() {
    let kinds: Vec<ExperimentKind> = small_configs().iter().map(|c| c.experiment).collect();
    for k in ExperimentKind::ALL {
        assert!(kinds.contains(&k), "{k} missing");
    }
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    for cfg in small_configs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit_outputs(&run_experiment(&cfg, 1).unwrap(), a.path(), OutputFormat::Both).unwrap();
        emit_outputs(&run_experiment(&cfg, 16).unwrap(), b.path(), OutputFormat::Both).unwrap();
        let (x, y) = (stable_outputs(a.path()), stable_outputs(b.path()));
        assert!(!x.is_empty());
        assert_eq!(x, y, "{} differs between 1 and 16 workers", cfg.name);
    }
}

#[test]
fn seed_changes_results() {
    let mut cfg = small_configs().remove(0);
    let a = run_experiment(&cfg, 2).unwrap();
    cfg.master_seed += 1;
    let b = run_experiment(&cfg, 2).unwrap();
    assert_ne!(a.table.to_csv(), b.table.to_csv());
}

#[test]
fn config_round_trips_through_json() {
    for cfg in small_configs() {
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn summary_json_is_versioned_and_complete() {
    let cfg = small_configs().remove(2);
    let rec = run_experiment(&cfg, 1).unwrap();
    let s = rec.summary_json();
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["experiment"], "convolve");
    assert_eq!(s["seed_provenance"]["master_seed"], 7);
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(s["row_count"], 2);
    assert!(rec.passed(), "{:?}", rec.failed_checks().collect::<Vec<_>>());
}

#[test]
fn empty_record_still_writes_headers() {
    let cfg = small_configs().remove(0);
    let rec = RunRecord::empty(&cfg, &["a", "b"]);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&rec, dir.path(), OutputFormat::Csv).unwrap();
    assert_eq!(written.len(), 1);
    let text = fs::read_to_string(&written[0]).unwrap();
    assert_eq!(text.lines().nth(1), Some("a,b"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn invalid_configs_name_the_field() {
    let cases = [
        (r#"{"experiment":"walk-group","name":"x","p_grid":[3],"n_steps":4,"replicates":10,"master_seed":1}"#, "law"),
        (
            r#"{"experiment":"walk-group","name":"x","law":{"type":"scalar_uniform","lo":0.0,"hi":1.0},"p_grid":[],"n_steps":4,"replicates":10,"master_seed":1}"#,
            "p_grid",
        ),
        (
            r#"{"experiment":"walk-group","name":"x","law":{"type":"scalar_uniform","lo":0.0,"hi":1.0},"p_grid":[3],"n_steps":4,"checkpoints":[3,2],"replicates":10,"master_seed":1}"#,
            "checkpoints",
        ),
        (r#"{"experiment":"kappa","name":"x","mu_grid":[3.0],"replicates":0,"master_seed":1}"#, "replicates"),
        (r#"{"experiment":"clt-check","name":"x","law":{"type":"scalar_uniform","lo":0.0,"hi":1.0},"p_grid":[3],"n_steps":4,"replicates":10,"master_seed":1}"#, "kind"),
        (r#"{"experiment":"axioms","name":"x","checks":["character"],"replicates":10,"master_seed":1}"#, "character"),
        (r#"{"experiment":"kappa","name":"bad name","mu_grid":[3.0],"replicates":3,"master_seed":1}"#, "name"),
    ];
    for (text, field) in cases {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
            other => panic!("{text}: expected a config error on {field}, got {other:?}"),
        }
    }
    let unknown = r#"{"experiment":"kappa","name":"x","mu_grid":[3.0],"replicates":3,"master_seed":1,"colour":1}"#;
    assert!(matches!(ExperimentConfig::from_json(unknown), Err(Error::Config { .. })));
}

#[test]
fn out_of_range_index_is_a_config_error() {
    // q = 2, mu below rho has no contraction density
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment":"kappa","name":"x","q":2,"mu_grid":[1.0],"replicates":10,"master_seed":1}"#,
    );
    let err = cfg.and_then(|c| run_experiment(&c, 1)).unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err:?}");
}
