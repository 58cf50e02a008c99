use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One record `(Y, Delta, X~, W~, Z)`.
///
/// `y` is the log follow-up time `min(T, C)`; `delta` is true when the event
/// time was observed (`T <= C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub delta: bool,
    pub x_tilde: Vec<f64>,
    pub w_tilde: f64,
    pub z: f64,
}

impl Observation {
    pub fn new(y: f64, delta: bool, x_tilde: Vec<f64>, w_tilde: f64, z: f64) -> Result<Self> {
        let obs = Self {
            y,
            delta,
            x_tilde,
            w_tilde,
            z,
        };
        obs.check_finite()?;
        Ok(obs)
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.y.is_finite()
            && self.w_tilde.is_finite()
            && self.z.is_finite()
            && self.x_tilde.iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Data(format!("non-finite field in {self:?}")))
        }
    }

    pub fn m(&self) -> usize {
        self.x_tilde.len()
    }

    /// `w^T gamma` with `w = (1, x~, w~)`.
    #[inline]
    pub fn instrument_index(&self, gamma: &[f64]) -> f64 {
        let m = self.x_tilde.len();
        gamma[0] + dot(&self.x_tilde, &gamma[1..=m]) + self.w_tilde * gamma[m + 1]
    }

    /// The first-stage regressor vector `w = (1, x~, w~)`.
    pub fn instrument_vector(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.x_tilde.len() + 2);
        w.push(1.0);
        w.extend_from_slice(&self.x_tilde);
        w.push(self.w_tilde);
        w
    }

    pub fn z_is_binary(&self) -> bool {
        self.z == 0.0 || self.z == 1.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A sample of observations sharing the covariate dimension `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    observations: Vec<Observation>,
    m: usize,
}

impl ObservationSet {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Data("at least one observation is required".into()))?;
        let m = first.m();
        for (i, obs) in observations.iter().enumerate() {
            if obs.m() != m {
                return Err(Error::Data(format!(
                    "observation {i} has {} covariates, expected {m}",
                    obs.m()
                )));
            }
            obs.check_finite()
                .map_err(|_| Error::Data(format!("observation {i} has a non-finite field")))?;
        }
        Ok(Self { observations, m })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of covariates `m` (excluding the intercept).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    /// Fraction of censored records, `1 - mean(delta)`.
    pub fn censoring_rate(&self) -> f64 {
        let events = self.observations.iter().filter(|o| o.delta).count();
        1.0 - events as f64 / self.len() as f64
    }

    pub fn z_is_binary(&self) -> bool {
        self.observations.iter().all(Observation::z_is_binary)
    }

    /// Requires at least one observed event and one censored record.
    pub fn check_both_outcomes(&self) -> Result<()> {
        let events = self.observations.iter().filter(|o| o.delta).count();
        if events == 0 {
            Err(Error::Data("no uncensored observations (delta = 1)".into()))
        } else if events == self.len() {
            Err(Error::Data("no censored observations (delta = 0)".into()))
        } else {
            Ok(())
        }
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}
