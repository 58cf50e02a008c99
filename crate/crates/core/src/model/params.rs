use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced form linking the confounded regressor `Z` to `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstStageFamily {
    /// `Z = W^T gamma + nu`, control function `V = Z - W^T gamma`.
    Linear,
    /// Binary `Z` with standard normal `nu`.
    Probit,
    /// Binary `Z` with standard logistic `nu`.
    Logit,
}

impl FirstStageFamily {
    pub fn requires_binary_z(self) -> bool {
        !matches!(self, FirstStageFamily::Linear)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FirstStageFamily::Linear => "linear",
            FirstStageFamily::Probit => "probit",
            FirstStageFamily::Logit => "logit",
        }
    }
}

impl fmt::Display for FirstStageFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FirstStageFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "probit" => Ok(Self::Probit),
            "logit" => Ok(Self::Logit),
            other => Err(Error::Config(format!("unknown first-stage family '{other}'"))),
        }
    }
}

/// Second-stage parameters
/// `(beta_T, alpha_T, lambda_T, beta_C, alpha_C, lambda_C, sigma_T, sigma_C, rho)`.
///
/// `beta_t` and `beta_c` have length `m + 1`, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub beta_t: Vec<f64>,
    pub alpha_t: f64,
    pub lambda_t: f64,
    pub beta_c: Vec<f64>,
    pub alpha_c: f64,
    pub lambda_c: f64,
    pub sigma_t: f64,
    pub sigma_c: f64,
    pub rho: f64,
}

/// Offsets of each block inside the flat vector returned by [`ThetaParams::to_vec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub m: usize,
}

impl ThetaLayout {
    pub fn new(m: usize) -> Self {
        Self { m }
    }
    pub fn len(&self) -> usize {
        2 * self.m + 9
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn beta_t(&self) -> std::ops::Range<usize> {
        0..self.m + 1
    }
    pub fn alpha_t(&self) -> usize {
        self.m + 1
    }
    pub fn lambda_t(&self) -> usize {
        self.m + 2
    }
    pub fn beta_c(&self) -> std::ops::Range<usize> {
        self.m + 3..2 * self.m + 4
    }
    pub fn alpha_c(&self) -> usize {
        2 * self.m + 4
    }
    pub fn lambda_c(&self) -> usize {
        2 * self.m + 5
    }
    pub fn sigma_t(&self) -> usize {
        2 * self.m + 6
    }
    pub fn sigma_c(&self) -> usize {
        2 * self.m + 7
    }
    pub fn rho(&self) -> usize {
        2 * self.m + 8
    }

    /// Plain-text names, e.g. `beta_T0`, `alpha_T`, `sigma_C`.
    pub fn names(&self) -> Vec<String> {
        self.names_with(|eq, j| format!("beta_{eq}{j}"), |sym, eq| format!("{sym}_{eq}"), "rho")
    }

    /// Table labels, e.g. `β_{T,0}`, `α_T`, `σ_C`, `ρ`.
    pub fn labels(&self) -> Vec<String> {
        self.names_with(
            |eq, j| format!("β_{{{eq},{j}}}"),
            |sym, eq| {
                let greek = match sym {
                    "alpha" => "α",
                    "lambda" => "λ",
                    _ => "σ",
                };
                format!("{greek}_{eq}")
            },
            "ρ",
        )
    }

    fn names_with(
        &self,
        beta: impl Fn(&str, usize) -> String,
        scalar: impl Fn(&str, &str) -> String,
        rho: &str,
    ) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for eq in ["T", "C"] {
            out.extend((0..=self.m).map(|j| beta(eq, j)));
            out.push(scalar("alpha", eq));
            out.push(scalar("lambda", eq));
        }
        out.push(scalar("sigma", "T"));
        out.push(scalar("sigma", "C"));
        out.push(rho.to_string());
        out
    }
}

impl ThetaParams {
    pub fn m(&self) -> usize {
        self.beta_t.len().saturating_sub(1)
    }

    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout::new(self.m())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().len());
        v.extend_from_slice(&self.beta_t);
        v.push(self.alpha_t);
        v.push(self.lambda_t);
        v.extend_from_slice(&self.beta_c);
        v.push(self.alpha_c);
        v.push(self.lambda_c);
        v.push(self.sigma_t);
        v.push(self.sigma_c);
        v.push(self.rho);
        v
    }

    pub fn from_slice(m: usize, v: &[f64]) -> Result<Self> {
        let l = ThetaLayout::new(m);
        if v.len() != l.len() {
            return Err(Error::Dimension(format!(
                "theta has length {}, expected {} for m = {m}",
                v.len(),
                l.len()
            )));
        }
        Ok(Self {
            beta_t: v[l.beta_t()].to_vec(),
            alpha_t: v[l.alpha_t()],
            lambda_t: v[l.lambda_t()],
            beta_c: v[l.beta_c()].to_vec(),
            alpha_c: v[l.alpha_c()],
            lambda_c: v[l.lambda_c()],
            sigma_t: v[l.sigma_t()],
            sigma_c: v[l.sigma_c()],
            rho: v[l.rho()],
        })
    }

    /// Checks `sigma_T, sigma_C > 0`, `|rho| < 1`, finiteness and block lengths.
    pub fn validate(&self) -> Result<()> {
        if self.beta_t.is_empty() || self.beta_t.len() != self.beta_c.len() {
            return Err(Error::Dimension(format!(
                "beta_T has length {}, beta_C has length {}",
                self.beta_t.len(),
                self.beta_c.len()
            )));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("theta has a non-finite component".into()));
        }
        if !(self.sigma_t > 0.0 && self.sigma_c > 0.0) {
            return Err(Error::Config(format!(
                "scales must be positive, got sigma_T = {}, sigma_C = {}",
                self.sigma_t, self.sigma_c
            )));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::InvalidCorrelation(self.rho));
        }
        Ok(())
    }

    /// Parameters of the simulation designs: `beta_T = (2.5, 2.6)`, `alpha_T = 1.8`,
    /// `lambda_T = 2`, `beta_C = (2.8, 1.9)`, `alpha_C = 1.5`, `lambda_C = 1.2`,
    /// `sigma_T = 1.1`, `sigma_C = 1.4`, `rho = 0.75`.
    pub fn design_truth() -> Self {
        Self {
            beta_t: vec![2.5, 2.6],
            alpha_t: 1.8,
            lambda_t: 2.0,
            beta_c: vec![2.8, 1.9],
            alpha_c: 1.5,
            lambda_c: 1.2,
            sigma_t: 1.1,
            sigma_c: 1.4,
            rho: 0.75,
        }
    }
}
