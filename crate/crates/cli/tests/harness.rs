use std::path::Path;
use std::process::Command;

use rbsmc::prior::BlockLayout;
use rbsmc_cli::config::{MetamodelSource, TruthMode};
use rbsmc_cli::files::{read_models, read_table, read_vectors, state_names};
use rbsmc_cli::run::{self, synthesize};
use rbsmc_cli::{Run, ScenarioConfig};

const SMALL: &str = r#"
seed = 5

[layout]
areas_per_block = [2, 1]
frequencies = 4
angles = 3

[prior]
reference = [[3.0, 0.2, 1.1, 0.05], [5.0, 0.4, 1.5, 0.1]]
drift = [[-0.3, 0.1, 0.0, 0.02], [0.2, 0.0, -0.1, 0.0]]

[metamodel]
training_pairs = 40
bootstrap_replicates = 100

[smc]
particles = 40
"#;

fn small() -> ScenarioConfig {
    ScenarioConfig::from_toml(SMALL).unwrap()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn linear_noiseless_measurements_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small();
    config.observation.noise_scale = 0.0;
    config.metamodel.nonlinearity = 0.0;
    let run = Run::new(config.clone(), ".", dir.path()).unwrap();
    let case = run::generate(&run).unwrap();
    let models = read_models(&dir.path().join("model.csv"), 4, 12, 12).unwrap();
    let truth = read_vectors(&dir.path().join("truth.csv"), 4, &state_names(&config.block_layout())).unwrap();
    let y = run.load_scenario().unwrap().observations;
    for k in 0..4 {
        // the fitted residual covariance is at rounding level, not exactly zero
        assert!((&y[k] - (&models[k].a * &truth[k] + &models[k].y0)).amax() < 1e-10);
        assert_eq!(truth[k], case.states[k]);
    }
}

#[test]
fn fully_correlated_smooth_truth_is_flat() {
    let mut config = small();
    config.prior.drift = vec![[0.0; 4]; 2];
    config.truth.rho = Some(vec![1.0]);
    let case = synthesize(&config, None).unwrap();
    for x in &case.states[1..] {
        assert!((x - &case.states[0]).amax() < 1e-12);
    }
}

#[test]
fn irregular_truth_has_no_lag_one_correlation() {
    let mut config = small();
    config.layout.areas_per_block = vec![10, 10];
    config.layout.frequencies = 30;
    config.metamodel.training_pairs = 100;
    config.truth.mode = TruthMode::Irregular;
    let case = synthesize(&config, None).unwrap();
    let priors = config.priors().unwrap();
    let z: Vec<Vec<f64>> = case
        .states
        .iter()
        .zip(&priors)
        .map(|(x, p)| (0..x.len()).map(|i| (x[i] - p.mean[i]) / p.cov.matrix()[(i, i)].sqrt()).collect())
        .collect();
    let products: Vec<f64> = (0..z[0].len()).flat_map(|i| z.windows(2).map(move |w| w[0][i] * w[1][i])).collect();
    let n = products.len() as f64;
    let mean = products.iter().sum::<f64>() / n;
    // unit-variance independent pairs: Var(z_k z_{k+1}) = 1, but areas in a
    // block share spatial correlation, so use the empirical spread
    let sd = (products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let per_area: Vec<f64> = (0..z[0].len()).map(|i| z.windows(2).map(|w| w[0][i] * w[1][i]).sum::<f64>() / 29.0).collect();
    let m = per_area.iter().sum::<f64>() / per_area.len() as f64;
    let se = (per_area.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (per_area.len() - 1) as f64 / per_area.len() as f64).sqrt();
    assert!(m.abs() < 3.0 * se.max(sd / n.sqrt()), "lag-1 {m} ± {se}");

    config.truth.mode = TruthMode::Smooth;
    config.truth.rho = Some(vec![0.95]);
    let smooth = synthesize(&config, None).unwrap();
    let zs: Vec<Vec<f64>> = smooth
        .states
        .iter()
        .zip(&priors)
        .map(|(x, p)| (0..x.len()).map(|i| (x[i] - p.mean[i]) / p.cov.matrix()[(i, i)].sqrt()).collect())
        .collect();
    let lag: f64 = (0..zs[0].len()).flat_map(|i| zs.windows(2).map(move |w| w[0][i] * w[1][i])).sum::<f64>() / n;
    assert!(lag > 0.5, "smooth lag-1 {lag}");
}

#[test]
fn inversion_is_reproducible_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let run = Run::new(small(), ".", dir.path()).unwrap();
        run::generate(&run).unwrap();
        let result = run::invert(&run, |_| {}).unwrap();
        let (prior, post) = result.rmse.unwrap();
        assert!(post < prior);
    }
    let names = files_in(a.path());
    for expected in ["particles.csv", "profiles.csv", "histograms.csv", "diagnostics.csv", "summary.csv", "config.echo.toml"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing");
    }
    for name in &names {
        let left = std::fs::read(a.path().join(name)).unwrap();
        assert!(left.starts_with(b"# rbsmc "), "{name} lacks a provenance line");
        if name != "timing.csv" {
            assert_eq!(left, std::fs::read(b.path().join(name)).unwrap(), "{name} differs");
        }
    }
    let summary = read_table(&a.path().join("summary.csv")).unwrap();
    let metrics: Vec<&str> = summary.rows.iter().map(|r| r[0].as_str()).collect();
    assert!(metrics.contains(&"prior_rmse") && metrics.contains(&"posterior_rmse"));
}

#[test]
fn echoed_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(small(), ".", dir.path()).unwrap();
    run::generate(&run).unwrap();
    let echoed = ScenarioConfig::load(&dir.path().join("config.echo.toml")).unwrap();
    assert_eq!(echoed, small());
}

#[test]
fn fit_reproduces_the_generated_model() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(small(), ".", dir.path()).unwrap();
    let case = run::generate(&run).unwrap();
    let mut config = small();
    config.metamodel.source = MetamodelSource::Training;
    let refit = Run::new(config, ".", dir.path()).unwrap();
    let models = run::fit(&refit, rbsmc::par::Execution::Sequential).unwrap();
    for (a, b) in models.iter().zip(&case.models) {
        assert!((&a.a - &b.a).amax() < 1e-12);
        assert!((&a.r - &b.r).amax() < 1e-12);
    }
    let boot = read_table(&dir.path().join("bootstrap.csv")).unwrap();
    assert_eq!(boot.rows.len(), 4 * 12 * 13);
}

#[test]
fn oracle_routes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let run = Run::new(small(), ".", dir.path()).unwrap();
    run::generate(&run).unwrap();
    let r = run::oracle(&run, &[0.6]).unwrap();
    assert!((r.kalman - r.dense).abs() <= 1e-8 * r.dense.abs());
    assert!((r.whitened - r.dense).abs() <= 1e-8 * r.dense.abs());
    assert!(run::oracle(&run, &[0.6, 0.1, 0.2]).is_err());
}

#[test]
fn full_scale_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full-scale.toml");
    let config = ScenarioConfig::load(&path).unwrap();
    let layout: BlockLayout = config.block_layout();
    assert_eq!(layout.n_blocks(), 5);
    assert_eq!(layout.n_areas(), 19);
    assert_eq!(config.layout.frequencies, 30);
    assert_eq!(config.smc.particles, 100);
    let echoed = ScenarioConfig::from_toml(&config.to_toml()).unwrap();
    assert_eq!(echoed, config);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rbsmc"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("run");
    let status = |args: &[&str]| {
        binary().args(args).env("RUST_LOG", "off").status().unwrap().code().unwrap()
    };
    let cfg = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    assert_eq!(status(&["invert", "--config", cfg, "--out", o]), 2, "missing measurements");
    assert_eq!(status(&["generate", "--config", cfg, "--out", o]), 0);
    assert_eq!(status(&["invert", "--config", cfg, "--out", o, "--threads", "2"]), 0);
    assert_eq!(status(&["oracle", "--config", cfg, "--out", o, "--rho", "0.5"]), 0);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("[prior]", "[prior]\nspatial_correlation = 1.2")).unwrap();
    assert_eq!(status(&["generate", "--config", bad.to_str().unwrap(), "--out", o]), 2);

    let capped = dir.path().join("capped.toml");
    std::fs::write(&capped, SMALL.replace("particles = 40", "particles = 40\nmax_generations = 1")).unwrap();
    assert_eq!(status(&["invert", "--config", capped.to_str().unwrap(), "--out", o]), 4);
}
