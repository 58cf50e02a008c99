//! The four data-generating designs and dataset generation.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{control_value, FirstStageFamily, Observation, ObservationSet, ThetaParams};

/// `Z` continuous (1, 2) or logit-binary (3, 4); `W~` uniform on `[0, 2]` (1, 3) or Bernoulli(0.5) (2, 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DesignId {
    One,
    Two,
    Three,
    Four,
}

impl DesignId {
    pub const ALL: [DesignId; 4] = [Self::One, Self::Two, Self::Three, Self::Four];

    pub fn number(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
            Self::Four => 4,
        }
    }

    pub fn family(self) -> FirstStageFamily {
        match self {
            Self::One | Self::Two => FirstStageFamily::Linear,
            Self::Three | Self::Four => FirstStageFamily::Logit,
        }
    }

    pub fn binary_instrument(self) -> bool {
        matches!(self, Self::Two | Self::Four)
    }
}

impl TryFrom<u8> for DesignId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            4 => Ok(Self::Four),
            _ => Err(Error::Config(format!("design must be 1, 2, 3 or 4, got {v}"))),
        }
    }
}

impl From<DesignId> for u8 {
    fn from(d: DesignId) -> u8 {
        d.number()
    }
}

impl fmt::Display for DesignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for DesignId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("design must be 1, 2, 3 or 4, got '{s}'")))?;
        Self::try_from(v)
    }
}

/// How the `2` in `nu ~ N(0, 2)` of the continuous designs is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuScale {
    /// Standard deviation 2 (variance 4).
    #[default]
    StdDev,
    /// Variance 2 (standard deviation `sqrt 2`).
    Variance,
}

impl NuScale {
    pub fn std_dev(self) -> f64 {
        match self {
            Self::StdDev => 2.0,
            Self::Variance => std::f64::consts::SQRT_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StdDev => "sd",
            Self::Variance => "variance",
        }
    }
}

impl FromStr for NuScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sd" | "std_dev" | "stddev" => Ok(Self::StdDev),
            "var" | "variance" => Ok(Self::Variance),
            other => Err(Error::Config(format!("nu scale must be 'sd' or 'variance', got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub design: DesignId,
    pub n: usize,
    pub gamma_true: Vec<f64>,
    pub theta_true: ThetaParams,
    pub replications: usize,
    pub seed: u64,
    pub nu_scale: NuScale,
}

impl SimulationDesign {
    /// Default parameters, 500 replications, seed 0.
    pub fn new(design: DesignId, n: usize) -> Self {
        Self {
            design,
            n,
            gamma_true: vec![-1.0, 0.6, 2.3],
            theta_true: ThetaParams::design_truth(),
            replications: 500,
            seed: 0,
            nu_scale: NuScale::default(),
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_nu_scale(mut self, nu_scale: NuScale) -> Self {
        self.nu_scale = nu_scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("sample size must be at least 2, got {}", self.n)));
        }
        self.theta_true.validate()?;
        if self.theta_true.m() != 1 || self.gamma_true.len() != 3 {
            return Err(Error::Dimension(
                "simulation designs have one covariate: theta for m = 1 and gamma of length 3".into(),
            ));
        }
        if self.gamma_true.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config("gamma has a non-finite component".into()));
        }
        Ok(())
    }

    /// Random stream for one replication; independent of how replications are scheduled.
    pub fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        rng
    }
}

/// Draws one dataset; returns the observations and the true control-function values.
pub fn generate_dataset(design: &SimulationDesign, replication: u64) -> Result<(ObservationSet, Vec<f64>)> {
    design.validate()?;
    let mut rng = design.rng(replication);
    let t = &design.theta_true;
    let g = &design.gamma_true;
    let family = design.design.family();
    let rho_c = (1.0 - t.rho * t.rho).sqrt();

    let mut obs = Vec::with_capacity(design.n);
    let mut control = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let x: f64 = rng.sample(StandardNormal);
        let w = if design.design.binary_instrument() {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        } else {
            2.0 * rng.random::<f64>()
        };
        let index = g[0] + g[1] * x + g[2] * w;
        let (z, v) = match family {
            FirstStageFamily::Logit => {
                let u: f64 = rng.sample(Open01);
                let nu = (u / (1.0 - u)).ln();
                let z = if index - nu > 0.0 { 1.0 } else { 0.0 };
                (z, control_value(family, index, z))
            }
            _ => {
                let e: f64 = rng.sample(StandardNormal);
                let nu = design.nu_scale.std_dev() * e;
                (index + nu, nu)
            }
        };
        // (eps_T, eps_C) = L e with L the Cholesky factor of Sigma
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let eps_t = t.sigma_t * e1;
        let eps_c = t.sigma_c * (t.rho * e1 + rho_c * e2);

        let time = t.beta_t[0] + x * t.beta_t[1] + z * t.alpha_t + v * t.lambda_t + eps_t;
        let cens = t.beta_c[0] + x * t.beta_c[1] + z * t.alpha_c + v * t.lambda_c + eps_c;
        let delta = time <= cens;
        obs.push(Observation::new(time.min(cens), delta, vec![x], w, z)?);
        control.push(v);
    }
    Ok((ObservationSet::new(obs)?, control))
}
