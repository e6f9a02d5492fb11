//! The four verbs. Each has an in-memory core (used by tests) and a wrapper
//! that reads inputs from and writes outputs to the run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rbsmc::dense::{dense_log_likelihood, DEFAULT_DENSE_CAP};
use rbsmc::estimator::{frequency_profiles, posterior_samples, rb_moments, rho_histograms, PosteriorSummary};
use rbsmc::gaussian::standard_normal_vector;
use rbsmc::kalman::WhitenedModel;
use rbsmc::metamodel::{
    bootstrap_linearity_error, fit_linear_metamodel, observe, residual_covariance, LinearObservationModel, SyntheticSolver,
    TrainingSet,
};
use rbsmc::prior::{sample_prior_trajectory, CorrelationParam, MarginalPrior, Property};
use rbsmc::rng::{derive_seed, stream, substream, StreamRng};
use rbsmc::smc::{run_smc_observed, GenerationDiagnostics, KalmanLikelihood, RhoLikelihood, SmcRun};
use rbsmc::Scenario;

use crate::config::{MetamodelSource, ScenarioConfig, TruthMode};
use crate::error::{HarnessError, Result};
use crate::files::{
    num, observation_names, read_models, read_training, read_vectors, state_names, write_echo, write_models, write_training,
    write_vectors, Provenance, Table,
};

/// A loaded configuration together with where it came from and where
/// outputs go.
pub struct Run {
    pub config: ScenarioConfig,
    /// Directory of the config file; relative input paths start here.
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: ScenarioConfig, base: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Result<Self> {
        let out = out.into();
        std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
        Ok(Self { config, base: base.into(), out })
    }

    /// Loads `path` and applies an optional seed override.
    pub fn from_file(path: &Path, seed: Option<u64>, out: impl Into<PathBuf>) -> Result<Self> {
        let mut config = ScenarioConfig::load(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, base, out)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { scenario_hash: self.config.scenario_hash(), seed: self.config.seed }
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        match given {
            Some(p) if p.is_relative() => self.base.join(p),
            Some(p) => p.clone(),
            None => self.out.join(default),
        }
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn echo(&self) -> Result<()> {
        write_echo(&self.output("config.echo.toml"), &self.provenance(), &self.config.to_toml())
    }

    fn require(path: &Path) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("input file {} does not exist", path.display())))
        }
    }

    fn load_models(&self) -> Result<Vec<LinearObservationModel>> {
        let path = self.input(&self.config.inputs.model, "model.csv");
        Self::require(&path)?;
        let l = &self.config.layout;
        read_models(&path, l.frequencies, 4 * l.angles, self.config.block_layout().state_dim())
    }

    fn load_training(&self) -> Result<Vec<TrainingSet>> {
        let path = self.input(&self.config.inputs.training, "training.csv");
        Self::require(&path)?;
        let l = &self.config.layout;
        read_training(&path, l.frequencies, &self.config.block_layout(), l.angles)
    }

    /// Priors, models and measurements from the configured inputs.
    pub fn load_scenario(&self) -> Result<Scenario> {
        let config = &self.config;
        let measurements = self.input(&config.inputs.measurements, "measurements.csv");
        Self::require(&measurements)?;
        let models = self.load_models()?;
        let observations = read_vectors(&measurements, config.layout.frequencies, &observation_names(config.layout.angles))?;
        Ok(Scenario::new(config.block_layout(), config.priors()?, models, observations)?)
    }

    /// The true trajectory if a truth file is configured or present.
    pub fn load_truth(&self) -> Result<Option<Vec<DVector<f64>>>> {
        let path = self.input(&self.config.inputs.truth, "truth.csv");
        if self.config.inputs.truth.is_none() && !path.is_file() {
            return Ok(None);
        }
        Self::require(&path)?;
        let names = state_names(&self.config.block_layout());
        Ok(Some(read_vectors(&path, self.config.layout.frequencies, &names)?))
    }
}

fn draw_marginal(prior: &MarginalPrior, scale: f64, rng: &mut StreamRng) -> DVector<f64> {
    let z = standard_normal_vector(prior.dim(), rng);
    &prior.mean + prior.sqrt.matrix() * z * scale
}

/// Linear metamodel per frequency with `R_k = residual covariance + σ²·I`.
pub fn fit_models(sets: &[TrainingSet], noise_scale: f64) -> Result<Vec<LinearObservationModel>> {
    sets.iter()
        .map(|set| {
            let fit = fit_linear_metamodel(set)?;
            let m = fit.y0.len();
            let r = residual_covariance(&fit.residuals, fit.n_params()).matrix + DMatrix::identity(m, m) * noise_scale.powi(2);
            Ok(fit.into_model(r)?)
        })
        .collect()
}

/// A simulated experiment.
#[derive(Clone, Debug)]
pub struct SyntheticCase {
    /// `None` for irregular truth, which has no AR parameter.
    pub rho: Option<CorrelationParam>,
    pub states: Vec<DVector<f64>>,
    pub training: Option<Vec<TrainingSet>>,
    pub models: Vec<LinearObservationModel>,
    pub measurements: Vec<DVector<f64>>,
}

impl SyntheticCase {
    pub fn scenario(&self, config: &ScenarioConfig) -> Result<Scenario> {
        Ok(Scenario::new(config.block_layout(), config.priors()?, self.models.clone(), self.measurements.clone())?)
    }
}

/// Draws a truth, builds the observation models and simulates measurements.
/// `external` supplies the training sets or matrices for the non-synthetic
/// metamodel sources.
pub fn synthesize(config: &ScenarioConfig, external: Option<ExternalModel>) -> Result<SyntheticCase> {
    let seed = config.seed;
    let layout = config.block_layout();
    let priors = config.priors()?;
    let rho_prior = config.rho_prior();

    let (rho, states) = match config.truth.mode {
        TruthMode::Smooth => {
            let rho = match &config.truth.rho {
                Some(v) => {
                    let values = if v.len() == 1 { vec![v[0]; rho_prior.dim()] } else { v.clone() };
                    CorrelationParam::new(config.rho.case, values)?
                }
                None => rho_prior.sample(&mut substream(seed, &[stream::TRUTH, 0])),
            };
            let states = sample_prior_trajectory(&rho, &layout, &priors, &mut substream(seed, &[stream::TRUTH, 1]))?;
            (Some(rho), states)
        }
        TruthMode::Irregular => {
            let mut rng = substream(seed, &[stream::TRUTH, 2]);
            (None, priors.iter().map(|p| draw_marginal(p, 1.0, &mut rng)).collect())
        }
    };

    let noise = config.observation.noise_scale;
    let (training, models) = match (config.metamodel.source, external) {
        (MetamodelSource::Synthetic, _) => {
            let centers = priors.iter().map(|p| p.mean.clone()).collect();
            let solver = SyntheticSolver::new(config.layout.angles, centers, derive_seed(seed, &[stream::SOLVER]))?;
            let gamma = config.metamodel.nonlinearity;
            let sets = priors
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut rng = substream(seed, &[stream::TRAINING, k as u64]);
                    let pairs: Vec<_> = (0..config.metamodel.training_pairs)
                        .map(|_| {
                            let x = draw_marginal(p, config.metamodel.training_spread, &mut rng);
                            let y = solver.evaluate(k, &x, gamma);
                            (x, y)
                        })
                        .collect();
                    Ok(TrainingSet::from_pairs(&pairs)?.with_state_names(state_names(&layout)))
                })
                .collect::<Result<Vec<_>>>()?;
            let models = fit_models(&sets, noise)?;
            (Some(sets), models)
        }
        (MetamodelSource::Training, Some(ExternalModel::Training(sets))) => {
            let models = fit_models(&sets, noise)?;
            (Some(sets), models)
        }
        (MetamodelSource::Matrices, Some(ExternalModel::Matrices(models))) => (None, models),
        (source, _) => return Err(HarnessError::Config(format!("metamodel source {source:?} needs its input file"))),
    };

    let measurements = models
        .iter()
        .zip(&states)
        .enumerate()
        .map(|(k, (m, x))| observe(m, x, &mut substream(seed, &[stream::NOISE, k as u64])))
        .collect();
    Ok(SyntheticCase { rho, states, training, models, measurements })
}

pub enum ExternalModel {
    Training(Vec<TrainingSet>),
    Matrices(Vec<LinearObservationModel>),
}

/// `generate`: writes truth, training set, fitted model and measurements.
pub fn generate(run: &Run) -> Result<SyntheticCase> {
    let config = &run.config;
    let external = match config.metamodel.source {
        MetamodelSource::Synthetic => None,
        MetamodelSource::Training => Some(ExternalModel::Training(run.load_training()?)),
        MetamodelSource::Matrices => Some(ExternalModel::Matrices(run.load_models()?)),
    };
    let case = synthesize(config, external)?;
    let prov = run.provenance();
    let layout = config.block_layout();
    run.echo()?;
    write_vectors(&run.output("truth.csv"), &prov, &case.states, &state_names(&layout))?;
    let mut rho_table = Table::new(["component", "value"]);
    if let Some(rho) = &case.rho {
        for (j, v) in rho.values.iter().enumerate() {
            rho_table.push(vec![rho.case.component_name(j, &layout), num(*v)]);
        }
    }
    rho_table.write(&run.output("truth_rho.csv"), &prov)?;
    if let (Some(sets), MetamodelSource::Synthetic) = (&case.training, config.metamodel.source) {
        write_training(&run.output("training.csv"), &prov, sets, &layout, config.layout.angles)?;
    }
    write_models(&run.output("model.csv"), &prov, &case.models)?;
    write_vectors(&run.output("measurements.csv"), &prov, &case.measurements, &observation_names(config.layout.angles))?;
    Ok(case)
}

/// `fit`: least-squares metamodel (and bootstrap spread) from a training file.
pub fn fit(run: &Run, exec: rbsmc::par::Execution) -> Result<Vec<LinearObservationModel>> {
    let config = &run.config;
    let sets = run.load_training()?;
    let models = fit_models(&sets, config.observation.noise_scale)?;
    let prov = run.provenance();
    run.echo()?;
    write_models(&run.output("model.csv"), &prov, &models)?;
    if config.metamodel.bootstrap_replicates > 0 {
        let mut t = Table::new(["k", "matrix", "row", "col", "estimate", "sd", "lo", "hi"]);
        for (k, (set, model)) in sets.iter().zip(&models).enumerate() {
            let mut rng = substream(config.seed, &[stream::BOOTSTRAP, k as u64]);
            let b = bootstrap_linearity_error(set, config.metamodel.bootstrap_replicates, &mut rng, exec)?;
            for i in 0..model.a.nrows() {
                for j in 0..model.a.ncols() {
                    let v = [model.a[(i, j)], b.a_sd[(i, j)], b.a_lo[(i, j)], b.a_hi[(i, j)]];
                    t.push([k.to_string(), "a".into(), i.to_string(), j.to_string()].into_iter().chain(v.map(num)).collect());
                }
                let v = [model.y0[i], b.y0_sd[i], b.y0_lo[i], b.y0_hi[i]];
                t.push([k.to_string(), "y0".into(), i.to_string(), "0".into()].into_iter().chain(v.map(num)).collect());
            }
        }
        t.write(&run.output("bootstrap.csv"), &prov)?;
    }
    Ok(models)
}

/// Root-mean-square difference over every frequency and component.
pub fn rmse(estimate: &[DVector<f64>], truth: &[DVector<f64>]) -> f64 {
    let (sum, count) = estimate
        .iter()
        .zip(truth)
        .fold((0.0, 0usize), |(s, c), (e, t)| (s + (e - t).norm_squared(), c + t.len()));
    (sum / count as f64).sqrt()
}

/// Everything an inversion produces, before it is written out.
pub struct Inversion {
    pub smc: SmcRun,
    pub summary: PosteriorSummary,
    pub samples: Vec<Vec<DVector<f64>>>,
    /// `(prior, posterior)` RMSE against the truth, when known.
    pub rmse: Option<(f64, f64)>,
    pub wall_seconds: Vec<f64>,
}

impl Inversion {
    /// Weighted mean of each ρ component over the final cloud.
    pub fn rho_mean(&self) -> Vec<f64> {
        let cloud = &self.smc.cloud;
        (0..cloud.particles[0].rho.dim())
            .map(|j| cloud.particles.iter().zip(&cloud.weights).map(|(p, w)| w * p.rho.values[j]).sum())
            .collect()
    }
}

/// Sampler, posterior moments and optional posterior draws for a scenario.
pub fn invert_scenario(
    config: &ScenarioConfig,
    scenario: &Scenario,
    truth: Option<&[DVector<f64>]>,
    mut on_generation: impl FnMut(&GenerationDiagnostics),
) -> Result<Inversion> {
    let start = Instant::now();
    let mut wall_seconds = Vec::new();
    let model = WhitenedModel::new(scenario);
    let smc = run_smc_observed(&config.rho_prior(), &model, &config.smc, derive_seed(config.seed, &[stream::SMC]), |d| {
        wall_seconds.push(start.elapsed().as_secs_f64());
        on_generation(d);
    })?;
    let exec = config.smc.execution;
    let summary = rb_moments(&smc.cloud, scenario, exec)?;
    let samples = if config.output.posterior_samples > 0 {
        posterior_samples(&smc.cloud, scenario, config.output.posterior_samples, derive_seed(config.seed, &[stream::ESTIMATION]), exec)?
    } else {
        Vec::new()
    };
    let rmse = truth.map(|t| (rmse(&PosteriorSummary::prior(scenario).means, t), rmse(&summary.means, t)));
    Ok(Inversion { smc, summary, samples, rmse, wall_seconds })
}

/// `invert`: the full inversion with every output table.
pub fn invert(run: &Run, on_generation: impl FnMut(&GenerationDiagnostics)) -> Result<Inversion> {
    let config = &run.config;
    let scenario = run.load_scenario()?;
    let truth = run.load_truth()?;
    let result = invert_scenario(config, &scenario, truth.as_deref(), on_generation)?;
    let prov = run.provenance();
    let layout = &scenario.layout;
    run.echo()?;

    let cloud = &result.smc.cloud;
    let rho_names: Vec<String> = (0..cloud.particles[0].rho.dim()).map(|j| config.rho.case.component_name(j, layout)).collect();
    let mut t = Table::new(std::iter::once("particle".to_string()).chain(rho_names.iter().cloned()).chain(["weight".into(), "log_lik".into()]));
    for (i, (p, w)) in cloud.particles.iter().zip(&cloud.weights).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.rho.values.iter().map(|&v| num(v)));
        row.extend([num(*w), num(p.log_lik)]);
        t.push(row);
    }
    t.write(&run.output("particles.csv"), &prov)?;

    let mut t = Table::new(["k", "area", "property", "mean", "std"]);
    let mut rows = Vec::new();
    for p in Property::ALL {
        for area in 0..layout.n_areas() {
            for r in frequency_profiles(&result.summary, area, p)? {
                rows.push((r.k, area, p, r.mean, r.std));
            }
        }
    }
    rows.sort_by_key(|r| (r.0, r.1, r.2.index()));
    for (k, area, p, mean, std) in rows {
        t.push(vec![k.to_string(), (area + 1).to_string(), p.name().into(), num(mean), num(std)]);
    }
    t.write(&run.output("profiles.csv"), &prov)?;

    let mut t = Table::new(["component", "bin", "lower", "upper", "count", "height"]);
    for (name, h) in rho_names.iter().zip(rho_histograms(cloud, config.output.histogram_bins)?) {
        for b in 0..h.counts.len() {
            t.push(vec![name.clone(), b.to_string(), num(h.edges[b]), num(h.edges[b + 1]), num(h.counts[b]), num(h.heights[b])]);
        }
    }
    t.write(&run.output("histograms.csv"), &prov)?;

    let mut diag = Table::new(["generation", "alpha", "ess", "acceptance", "step_scale", "evaluations"]);
    let mut timing = Table::new(["generation", "wall_seconds"]);
    for (d, wall) in result.smc.diagnostics.iter().zip(&result.wall_seconds) {
        diag.push(vec![
            d.generation.to_string(),
            num(d.alpha),
            num(d.ess),
            num(d.acceptance),
            num(d.step_scale),
            d.evaluations.to_string(),
        ]);
        timing.push(vec![d.generation.to_string(), format!("{wall:.6}")]);
    }
    diag.write(&run.output("diagnostics.csv"), &prov)?;
    timing.write(&run.output("timing.csv"), &prov)?;

    if !result.samples.is_empty() {
        let names = state_names(layout);
        let mut t = Table::new(["draw", "k", "component", "value"]);
        for (d, traj) in result.samples.iter().enumerate() {
            for (k, x) in traj.iter().enumerate() {
                for (i, v) in x.iter().enumerate() {
                    t.push(vec![d.to_string(), k.to_string(), names[i].clone(), num(*v)]);
                }
            }
        }
        t.write(&run.output("samples.csv"), &prov)?;
    }

    let mut t = Table::new(["metric", "value"]);
    t.push(vec!["generations".into(), cloud.generation.to_string()]);
    t.push(vec!["likelihood_evaluations".into(), result.smc.evaluations.to_string()]);
    for (name, m) in rho_names.iter().zip(result.rho_mean()) {
        t.push(vec![format!("{name}.mean"), num(m)]);
    }
    if let Some((prior, post)) = result.rmse {
        t.push(vec!["prior_rmse".into(), num(prior)]);
        t.push(vec!["posterior_rmse".into(), num(post)]);
        t.push(vec!["rmse_ratio".into(), num(post / prior)]);
    }
    t.write(&run.output("summary.csv"), &prov)?;
    Ok(result)
}

/// Log-likelihood of one ρ by three independent routes.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub dense: f64,
    pub kalman: f64,
    pub whitened: f64,
}

/// `oracle`: dense joint-Gaussian reference likelihood for a small scenario.
pub fn oracle(run: &Run, rho: &[f64]) -> Result<OracleReport> {
    let config = &run.config;
    let scenario = run.load_scenario()?;
    let dim = config.rho.case.dim(&scenario.layout);
    let values = match rho.len() {
        1 => vec![rho[0]; dim],
        n if n == dim => rho.to_vec(),
        n => return Err(HarnessError::Config(format!("--rho has {n} values, case {:?} needs 1 or {dim}", config.rho.case))),
    };
    let rho = CorrelationParam::new(config.rho.case, values).map_err(|e| HarnessError::Config(format!("--rho: {e}")))?;
    let report = OracleReport {
        dense: dense_log_likelihood(&scenario, &rho, DEFAULT_DENSE_CAP)?,
        kalman: KalmanLikelihood(&scenario).log_likelihood(&rho)?,
        whitened: WhitenedModel::new(&scenario).log_likelihood(&rho)?,
    };
    run.echo()?;
    let mut t = Table::new(["method", "log_likelihood"]);
    t.push(vec!["dense".into(), num(report.dense)]);
    t.push(vec!["kalman".into(), num(report.kalman)]);
    t.push(vec!["whitened".into(), num(report.whitened)]);
    t.write(&run.output("oracle.csv"), &run.provenance())?;
    Ok(report)
}
