//! End-to-end command flows: config, records and the summary report.

use fountain::asymptotics::LemmaOverrides;
use fountain::report::{cmd_constants, cmd_report, cmd_solve, cmd_verify_lemma, load_records, RunConfig, RunRecord};

#[test]
fn shipped_config_parses_and_validates() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/k2-towers.toml");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.tower.k, 2);
    let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_config_key_is_rejected() {
    let mut text = RunConfig::k2_default().to_toml_string().unwrap();
    text.push_str("\nbogus = 1\n");
    assert!(RunConfig::from_toml_str(&text).is_err());
}

#[test]
fn commands_feed_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::k2_default();
    let c = cmd_constants(&cfg.tolerances, dir.path()).unwrap();
    assert!(c.record.passed());
    let overrides = LemmaOverrides {
        points_per_decade: 32,
        ..LemmaOverrides::default()
    };
    let l = cmd_verify_lemma("A3-lq", &overrides, &cfg.tolerances, dir.path()).unwrap();
    assert!(!l.record.verdicts.is_empty());
    let mut solve_cfg = cfg.clone();
    solve_cfg.domain.eps = Some(1e-5);
    solve_cfg.quadrature.points_per_decade = 32;
    let s = cmd_solve(&solve_cfg, dir.path()).unwrap();
    let reloaded = RunRecord::load(&s.record_path).unwrap();
    assert_eq!(reloaded.without_timings(), s.record.without_timings());

    assert_eq!(load_records(dir.path()).unwrap().len(), 3);
    let md = cmd_report(dir.path()).unwrap();
    assert!(md.contains("criterion"), "{md}");
    assert!(dir.path().join("report.md").exists());
}
