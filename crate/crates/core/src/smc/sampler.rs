use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cloud::{ess, next_temperature, resample_systematic, reweight, Particle, ParticleCloud};
use super::mutation::{mh_chain, MoveStats};
use super::prior::RhoPrior;
use super::RhoLikelihood;
use crate::error::{Error, Result};
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::rng::substream;

const TARGET_ACCEPTANCE: f64 = 0.3;
const STEP_BOUNDS: (f64, f64) = (1e-3, 10.0);
/// Stream tag for the resampling uniform, distinct from any particle index.
const RESAMPLE_TAG: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    pub particles: usize,
    /// ESS target `τ` as a fraction of the cloud size.
    pub ess_fraction: f64,
    /// MH moves per particle per generation.
    pub mh_steps: usize,
    /// Initial random-walk scale on the logit scale.
    pub step_scale: f64,
    pub max_generations: usize,
    pub execution: Execution,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self { particles: 100, ess_fraction: 0.5, mh_steps: 5, step_scale: 0.5, max_generations: 200, execution: Execution::Parallel }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidParameter("smc.particles must be at least 2".into()));
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction < 1.0) {
            return Err(Error::InvalidParameter("smc.ess_fraction must lie in (0,1)".into()));
        }
        if self.mh_steps == 0 || self.max_generations == 0 {
            return Err(Error::InvalidParameter("smc.mh_steps and smc.max_generations must be positive".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::InvalidParameter("smc.step_scale must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the per-generation log.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationDiagnostics {
    pub generation: usize,
    pub alpha: f64,
    /// ESS after reweighting, before resampling.
    pub ess: f64,
    pub acceptance: f64,
    pub step_scale: f64,
    /// Likelihood evaluations during this generation.
    pub evaluations: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SmcRun {
    pub cloud: ParticleCloud,
    pub diagnostics: Vec<GenerationDiagnostics>,
    pub evaluations: usize,
}

/// `N_p` prior draws with uniform weights at `α = 0`.
pub fn init_cloud<L: RhoLikelihood + ?Sized>(
    prior: &RhoPrior,
    likelihood: &L,
    config: &SmcConfig,
    seed: u64,
) -> Result<ParticleCloud> {
    config.validate()?;
    let particles = try_map_indexed(config.execution, config.particles, |i| {
        let rho = prior.sample(&mut substream(seed, &[0, i as u64]));
        match likelihood.log_likelihood(&rho) {
            Ok(log_lik) => Ok(Particle { rho, log_lik }),
            Err(e) => Err(Error::Likelihood { rho: rho.values.clone(), source: Box::new(e) }),
        }
    })?;
    ParticleCloud::uniform(particles, 0.0)
}

/// Moves every particle with `config.mh_steps` MH steps at the cloud's
/// temperature. Particle `i` uses the substream `(seed, generation, i)`.
pub fn mh_mutate<L: RhoLikelihood + ?Sized>(
    cloud: &mut ParticleCloud,
    step: f64,
    prior: &RhoPrior,
    likelihood: &L,
    config: &SmcConfig,
    seed: u64,
) -> Result<MoveStats> {
    let generation = cloud.generation as u64;
    let alpha = cloud.alpha;
    let moved = map_indexed(config.execution, cloud.len(), |i| {
        let mut rng = substream(seed, &[generation, i as u64]);
        mh_chain(&cloud.particles[i], alpha, step, config.mh_steps, prior, likelihood, &mut rng)
    });
    let mut stats = MoveStats::default();
    let mut particles = Vec::with_capacity(moved.len());
    for (p, s) in moved {
        particles.push(p);
        stats += s;
    }
    if 2 * stats.failed > stats.proposed {
        return Err(Error::ProposalFailures { failed: stats.failed, total: stats.proposed });
    }
    cloud.particles = particles;
    Ok(stats)
}

fn adapt_step(step: f64, acceptance: f64) -> f64 {
    let factor = (2.0 * (acceptance - TARGET_ACCEPTANCE)).exp().clamp(0.5, 2.0);
    (step * factor).clamp(STEP_BOUNDS.0, STEP_BOUNDS.1)
}

fn acceptance_rate(stats: &MoveStats) -> f64 {
    if stats.proposed == 0 {
        0.0
    } else {
        stats.accepted as f64 / stats.proposed as f64
    }
}

/// Tempered SMC from the prior (`α = 0`) to the posterior (`α = 1`).
///
/// Each generation picks the next temperature by ESS bisection, reweights,
/// resamples systematically and applies MH moves. Once `α = 1` one more
/// round of moves is made with the step scale frozen. `observer` sees every
/// generation's diagnostics as they are produced, including the ones before
/// a generation-cap failure.
pub fn run_smc_observed<L, F>(
    prior: &RhoPrior,
    likelihood: &L,
    config: &SmcConfig,
    seed: u64,
    mut observer: F,
) -> Result<SmcRun>
where
    L: RhoLikelihood + ?Sized,
    F: FnMut(&GenerationDiagnostics),
{
    let start = Instant::now();
    let mut cloud = init_cloud(prior, likelihood, config, seed)?;
    let mut evaluations = cloud.len();
    let mut diagnostics = Vec::new();
    let mut step = config.step_scale;
    let mut record = |d: GenerationDiagnostics, diagnostics: &mut Vec<GenerationDiagnostics>| {
        observer(&d);
        diagnostics.push(d);
    };
    record(
        GenerationDiagnostics {
            generation: 0,
            alpha: 0.0,
            ess: cloud.ess(),
            acceptance: 0.0,
            step_scale: step,
            evaluations,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
        &mut diagnostics,
    );

    let mut finished = false;
    while !finished {
        if cloud.generation >= config.max_generations {
            return Err(Error::GenerationCap { cap: config.max_generations, alpha: cloud.alpha });
        }
        cloud.generation += 1;
        let generation_ess;
        let adapt;
        if cloud.alpha < 1.0 {
            let alpha = next_temperature(&cloud, config.ess_fraction);
            reweight(&mut cloud, alpha)?;
            generation_ess = ess(&cloud.weights);
            let mut rng = substream(seed, &[cloud.generation as u64, RESAMPLE_TAG]);
            resample_systematic(&mut cloud, &mut rng);
            adapt = true;
        } else {
            // closing round at the target with a frozen step
            generation_ess = cloud.ess();
            adapt = false;
            finished = true;
        }
        let stats = mh_mutate(&mut cloud, step, prior, likelihood, config, seed)?;
        evaluations += stats.evaluations;
        let acceptance = acceptance_rate(&stats);
        record(
            GenerationDiagnostics {
                generation: cloud.generation,
                alpha: cloud.alpha,
                ess: generation_ess,
                acceptance,
                step_scale: step,
                evaluations: stats.evaluations,
                wall_seconds: start.elapsed().as_secs_f64(),
            },
            &mut diagnostics,
        );
        if adapt {
            step = adapt_step(step, acceptance);
        }
    }
    Ok(SmcRun { cloud, diagnostics, evaluations })
}

pub fn run_smc<L: RhoLikelihood + ?Sized>(prior: &RhoPrior, likelihood: &L, config: &SmcConfig, seed: u64) -> Result<SmcRun> {
    run_smc_observed(prior, likelihood, config, seed, |_| {})
}
