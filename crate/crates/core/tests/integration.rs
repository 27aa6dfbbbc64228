use muxsim::params::DeviceConfig;
use muxsim::runner::experiments::{run_histogram, run_rabi, run_spectroscopy, simulate_ensembles};
use muxsim::runner::shots::Chain;
use muxsim::runner::ExperimentConfig;
use std::path::Path;
use std::process::{Command, Output};

fn muxsim(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_muxsim"));
    cmd.args(args).current_dir(dir);
    match threads {
        Some(t) => cmd.env("MUXSIM_THREADS", t),
        None => cmd.env_remove("MUXSIM_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("ok.json"), r#"{"experiment": "histogram"}"#).unwrap();
    std::fs::write(d.join("unknown_key.json"), r#"{"experiment": "histogram", "shotz": 5}"#).unwrap();
    std::fs::write(d.join("broken.json"), "{ not json").unwrap();
    std::fs::write(d.join("bad_value.json"), r#"{"experiment": "histogram", "amplifier": {"efficiency": 1.5}}"#).unwrap();

    assert_eq!(muxsim(&["validate", "--config", "ok.json"], d, None).status.code(), Some(0));
    for bad in ["unknown_key.json", "broken.json", "bad_value.json", "missing.json"] {
        let out = muxsim(&["validate", "--config", bad], d, None);
        assert_eq!(out.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = muxsim(&["validate", "--config", "ok.json"], d, Some("zero"));
    assert_eq!(out.status.code(), Some(2));
    let out = muxsim(&["run", "--config", "ok.json", "--experiment", "nonsense"], d, None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_run_writes_summary_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("c.json"), r#"{"experiment": "histogram"}"#).unwrap();
    let out = muxsim(&["run", "--config", "c.json", "--shots", "2000", "--fast-path", "--out", "res"], d, Some("2"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(d.join("res/summary.txt")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("Q2.fidelity=")), "{summary}");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("res/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["shots"], 2000);
    assert_eq!(manifest["config"]["fast_path"], true);
    assert!(!d.join("res/timing.json").exists());
}

#[test]
fn selective_readout_leaves_truth_unchanged() {
    let dev = DeviceConfig::table1();
    let mut cfg = ExperimentConfig::shipped();
    cfg.fast_path = true;
    let tau = cfg.integration_length(&dev).unwrap();
    let all = simulate_ensembles(&Chain::from_config(&cfg, &dev).unwrap(), 300, tau).unwrap();
    cfg.comb.channels = Some(vec!["Q2".into()]);
    let one = simulate_ensembles(&Chain::from_config(&cfg, &dev).unwrap(), 300, tau).unwrap();
    assert_eq!(all.shots.len(), one.shots.len());
    for ((ha, _), (hb, _)) in all.shots.iter().zip(&one.shots) {
        assert_eq!(ha, hb);
    }
}

#[test]
fn ideal_chain_is_perfect() {
    let dev = DeviceConfig::table1();
    let mut cfg = ExperimentConfig::shipped();
    cfg.shots = 2000;
    cfg.amplifier.noiseless = true;
    cfg.physics.relaxation = false;
    cfg.physics.thermal = false;
    cfg.timing.pi_infidelity = 0.0;
    for fast in [false, true] {
        cfg.fast_path = fast;
        let res = run_histogram(&cfg, &dev).unwrap();
        for c in &res.channels {
            assert_eq!(c.fidelity.empirical_fidelity, 1.0, "{} fast={fast}", c.label);
            assert_eq!(c.fidelity.discarded_g + c.fidelity.discarded_e, 0);
        }
    }
}

#[test]
fn decay_limited_assignment_error() {
    // noiseless readout: an excited shot is misread when it relaxes in roughly
    // the first half of the window, so the e→g error approaches τ/(2T1)
    let dev = DeviceConfig::table1();
    let mut cfg = ExperimentConfig::shipped();
    cfg.shots = 20_000;
    cfg.fast_path = true;
    cfg.amplifier.noiseless = true;
    cfg.physics.thermal = false;
    cfg.timing.herald = false;
    cfg.timing.pi_infidelity = 0.0;
    let tau = cfg.integration_length(&dev).unwrap();
    let res = run_histogram(&cfg, &dev).unwrap();
    for c in &res.channels {
        let t1 = dev.channels[dev.channel_index(&c.label).unwrap()].t1;
        let expected = 1.0 - (-tau / (2.0 * t1)).exp();
        let err = c.fidelity.empirical_err_e_as_g;
        assert!((err / expected - 1.0).abs() < 0.25, "{}: {err} vs {expected}", c.label);
        assert_eq!(c.fidelity.empirical_err_g_as_e, 0.0);
    }
}

#[test]
fn rabi_q4_is_weaker_than_q2_and_q3() {
    let dev = DeviceConfig::table1();
    let mut cfg = ExperimentConfig::shipped();
    cfg.rabi.shots_per_point = 400;
    let res = run_rabi(&cfg, &dev).unwrap();
    let c = |l: &str| res.contrast(res.labels.iter().position(|x| x == l).unwrap());
    assert!(c("Q4") < c("Q2") && c("Q4") < c("Q3"), "Q2 {} Q3 {} Q4 {}", c("Q2"), c("Q3"), c("Q4"));
    for p in res.expected_population.iter().flatten() {
        assert!((0.0..=1.0).contains(p));
    }
}

#[test]
fn unprobed_spectroscopy_is_flat() {
    let dev = DeviceConfig::table1();
    let mut cfg = ExperimentConfig::shipped();
    cfg.spectroscopy.photons = 0.0;
    cfg.spectroscopy.points = 21;
    let res = run_spectroscopy(&cfg, &dev).unwrap();
    for c in &res.channels {
        assert!(c.fits.is_none());
        assert!(c.response.iter().flatten().all(|z| z.norm() == 0.0), "{}", c.label);
    }
}
