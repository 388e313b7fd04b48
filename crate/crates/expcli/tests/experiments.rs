use std::fs;
use std::path::Path;

use largen::checkpoint::read_checkpoint;
use largen::green::kappa_c;
use largen_exp::config::{Config, InitLaw, LatticeMode};
use largen_exp::experiments::chaos_rate::{self, ChaosRateParams};
use largen_exp::experiments::commuting_diagram::{self, DiagramParams};
use largen_exp::experiments::mass_curve::{self, MassCurveParams, NO_MASS};
use largen_exp::experiments::stationary_w2::{self, StationaryW2Params};
use largen_exp::experiments::{kappa_c as kappa_c_exp, sample_gff};
use largen_exp::manifest::{RunManifest, MANIFEST_FILE};

fn chaos(init: InitLaw, num_steps: usize) -> ChaosRateParams {
    ChaosRateParams {
        d: 2,
        side: 4,
        kappa: 0.02,
        dt: 1e-3,
        num_steps,
        n_grid: vec![8, 16],
        replications: 3,
        init,
        checkpoint_every: None,
        master_seed: 5,
    }
}

#[test]
fn zero_steps_from_ones_has_zero_gap() {
    let r = chaos_rate::compute(&chaos(InitLaw::Ones, 0), None).unwrap();
    assert!(r.jobs.iter().all(|j| j.sup_distance == 0.0 && j.final_distance == 0.0));
    assert!(r.fit.is_none());
}

#[test]
fn longer_horizon_never_lowers_the_supremum() {
    for init in [InitLaw::Gff, InitLaw::Ones] {
        let short = chaos_rate::compute(&chaos(init, 50), None).unwrap();
        let long = chaos_rate::compute(&chaos(init, 100), None).unwrap();
        for (a, b) in short.jobs.iter().zip(&long.jobs) {
            assert!(b.sup_distance >= a.sup_distance, "{a:?} {b:?}");
        }
    }
}

#[test]
fn interrupted_run_resumes_to_identical_result() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = chaos(InitLaw::Gff, 60);
    p.checkpoint_every = Some(20);
    let reference = chaos_rate::compute(&p, None).unwrap();
    assert!(chaos_rate::compute_with_budget(&p, Some(dir.path()), Some(25)).unwrap().is_none());
    let (h, _) = read_checkpoint(&dir.path().join("chaos_N8_r0.lnck")).unwrap();
    assert_eq!(h.step, 25);
    assert!(chaos_rate::compute_with_budget(&p, Some(dir.path()), Some(25)).unwrap().is_none());
    let resumed = chaos_rate::compute(&p, Some(dir.path())).unwrap();
    assert_eq!(resumed, reference);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for k in 0..2 {
        let dir = root.path().join(k.to_string());
        let cfg = Config::from_json(&format!(
            r#"{{"lattice":{{"d":2,"L":4}},"model":{{"kappa":0.02,"N_grid":[4,8]}},
                "integrator":{{"dt":0.01,"T":0.2}},"sampler":{{"replications":2}},
                "init":"gff","seeds":{{"master":3}},"output":{{"dir":{:?},"checkpoint_every":5}}}}"#,
            dir.display().to_string()
        ))
        .unwrap();
        let report = chaos_rate::run(&cfg).unwrap();
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(report.out_dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m.status, "completed");
        assert!(!report.out_dir.join("checkpoints").exists());
        digests.push(m.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect::<Vec<_>>());
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0].len(), 2);
}

fn w2(kappa: f64, n_grid: Vec<usize>, count: usize) -> StationaryW2Params {
    StationaryW2Params {
        d: 2,
        side: 4,
        kappa,
        n_grid,
        burn_in: 20,
        thin: 1,
        count,
        chains: 4,
        master_seed: 17,
    }
}

#[test]
fn zero_coupling_distance_to_standard_normal_decreases() {
    let r = stationary_w2::compute(&w2(0.0, vec![4, 16, 64], 100)).unwrap();
    assert!(stationary_w2::strictly_decreasing_beyond_ci(&r.points), "{:?}", r.points);
}

#[test]
fn more_samples_narrow_the_interval() {
    let small = stationary_w2::compute(&w2(0.01, vec![16], 100)).unwrap();
    let large = stationary_w2::compute(&w2(0.01, vec![16], 400)).unwrap();
    assert!(large.points[0].w2.stderr < small.points[0].w2.stderr);
}

#[test]
fn stationary_w2_rejects_strong_coupling() {
    let cfg = Config::from_json(
        r#"{"lattice":{"d":2,"L":4},"model":{"kappa":0.02,"N_grid":[4]},
            "sampler":{"burn_in":1,"thin":1,"count":2,"replications":2},"seeds":{"master":1}}"#,
    )
    .unwrap();
    assert_eq!(StationaryW2Params::from_config(&cfg).unwrap_err().path, "model.kappa");
}

#[test]
fn torus_mass_curve_rows_meet_contract() {
    let p = MassCurveParams {
        mode: LatticeMode::Torus,
        d: 2,
        side: Some(8),
        kappa_grid: vec![0.01, 0.05, 0.2, 1.0, 5.0],
    };
    let rows = mass_curve::compute(&p).unwrap();
    let checks = mass_curve::checks(&p, &rows).unwrap();
    assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    assert_eq!(checks.len(), 3);
}

#[test]
fn zd_mass_curve_brackets_the_critical_coupling() {
    let kc = kappa_c(3).unwrap();
    let p = MassCurveParams {
        mode: LatticeMode::Zd,
        d: 3,
        side: None,
        kappa_grid: vec![0.02, 0.04, 0.05, 0.055, 0.065, 0.08],
    };
    let rows = mass_curve::compute(&p).unwrap();
    for r in &rows {
        assert_eq!(r.status == NO_MASS, r.kappa >= kc, "{r:?}");
    }
    let checks = mass_curve::checks(&p, &rows).unwrap();
    assert!(checks.iter().any(|c| c.name == "transition_bracket"));
    assert!(checks.iter().all(|c| c.passed), "{checks:?}");
}

fn diagram(side_grid: Vec<usize>, n_grid: Vec<usize>) -> DiagramParams {
    DiagramParams {
        d: 2,
        side_grid,
        n_grid,
        kappa: 0.01,
        burn_in: 20,
        thin: 1,
        count: 100,
        chains: 4,
        master_seed: 19,
    }
}

#[test]
fn commuting_diagram_paths_meet_at_the_zd_value() {
    let r = commuting_diagram::compute(&diagram(vec![4, 8], vec![16, 64])).unwrap();
    assert_eq!(r.gibbs.len(), 4);
    let checks = commuting_diagram::checks(&r);
    assert!(checks.iter().all(|c| c.passed), "{checks:?}");
}

#[test]
fn degenerate_grid_returns_the_raw_estimates() {
    let r = commuting_diagram::compute(&diagram(vec![6], vec![8])).unwrap();
    assert_eq!(r.gibbs.len(), 1);
    assert_eq!(r.path_a(), r.gibbs[0].2);
    assert_eq!(r.path_b(), r.gaussian[0].1);
}

fn run_in(dir: &Path, json: &str) -> Config {
    let mut cfg = Config::from_json(json).unwrap();
    cfg.output.dir = Some(dir.to_path_buf());
    cfg
}

#[test]
fn kappa_c_run_reports_levels_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let report = kappa_c_exp::run(&run_in(dir.path(), r#"{"lattice":{"d":3},"seeds":{"master":0}}"#)).unwrap();
    let stable = report.checks.iter().find(|c| c.name == "quadrature_stable").unwrap();
    assert!(stable.passed);
    let text = fs::read_to_string(dir.path().join("kappa_c_levels.csv")).unwrap();
    assert!(text.lines().count() > 3);
}

#[test]
fn sample_gff_run_persists_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let report = sample_gff::run(&run_in(
        dir.path(),
        r#"{"lattice":{"d":2,"L":4},"model":{"kappa":0.05},"sampler":{"count":2000},"seeds":{"master":4}}"#,
    ))
    .unwrap();
    let (h, data) = read_checkpoint(&dir.path().join("gff_samples.lnck")).unwrap();
    assert_eq!(h.shape, vec![2000, 16]);
    assert_eq!(data.len(), 2000 * 16);
    assert_eq!(report.outputs.len(), 3);
}

#[test]
fn shipped_configs_resolve() {
    use largen_exp::experiments::kappa_c::KappaCParams;
    use largen_exp::experiments::sample_gff::SampleGffParams;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let load = |name: &str| Config::load(&dir.join(name)).unwrap();
    ChaosRateParams::from_config(&load("chaos-rate.json")).unwrap();
    StationaryW2Params::from_config(&load("stationary-w2.json")).unwrap();
    MassCurveParams::from_config(&load("mass-curve.json")).unwrap();
    MassCurveParams::from_config(&load("mass-curve-z3.json")).unwrap();
    DiagramParams::from_config(&load("commuting-diagram.json")).unwrap();
    KappaCParams::from_config(&load("kappa-c.json")).unwrap();
    SampleGffParams::from_config(&load("sample-gff.json")).unwrap();
}
