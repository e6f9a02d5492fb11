use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::prior::{BlockLayout, CorrelationParam, RhoCase};

/// Prior of one ρ component on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ComponentPrior {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl ComponentPrior {
    fn validate(&self) -> Result<()> {
        match *self {
            ComponentPrior::Uniform => Ok(()),
            ComponentPrior::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            ComponentPrior::Beta { a, b } => Err(Error::InvalidParameter(format!("Beta({a}, {b}) needs positive shapes"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ComponentPrior::Uniform => 0.5,
            ComponentPrior::Beta { a, b } => a / (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ComponentPrior::Uniform => 1.0 / 12.0,
            ComponentPrior::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            ComponentPrior::Uniform => 0.0,
            ComponentPrior::Beta { a, b } => {
                let norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
                norm + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ComponentPrior::Uniform => rng.random::<f64>(),
            ComponentPrior::Beta { a, b } => Beta::new(a, b).expect("validated shapes").sample(rng),
        }
    }
}

/// Independent per-component prior `p(ρ)` on `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoPrior {
    pub case: RhoCase,
    pub components: Vec<ComponentPrior>,
}

impl RhoPrior {
    pub fn new(case: RhoCase, components: Vec<ComponentPrior>) -> Result<Self> {
        if components.is_empty() || (case == RhoCase::Scalar && components.len() != 1) {
            return Err(Error::Dimension(format!("{} prior components for {case:?}", components.len())));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { case, components })
    }

    /// The same prior for every component of `case` on `layout`.
    pub fn iid(case: RhoCase, layout: &BlockLayout, component: ComponentPrior) -> Result<Self> {
        Self::new(case, vec![component; case.dim(layout)])
    }

    pub fn uniform(case: RhoCase, layout: &BlockLayout) -> Self {
        Self::iid(case, layout, ComponentPrior::Uniform).expect("uniform prior is valid")
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn ln_pdf(&self, rho: &CorrelationParam) -> f64 {
        self.components.iter().zip(&rho.values).map(|(c, &x)| c.ln_pdf(x)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CorrelationParam {
        let values = self.components.iter().map(|c| c.sample(rng)).collect();
        CorrelationParam::new(self.case, values).expect("prior draws lie in [0,1]")
    }
}
