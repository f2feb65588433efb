use crate::error::{DapsmError, Result};
use crate::geometry::{Location, Metric};
use crate::propensity::DesignMatrix;

/// Spatially indexed units with observed covariates, a binary treatment and
/// an optional outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub locations: Vec<Location>,
    pub metric: Metric,
    pub covariate_names: Vec<String>,
    /// One vector per covariate, each of length `n_units`.
    pub covariates: Vec<Vec<f64>>,
    pub treatment: Vec<bool>,
    pub outcome: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        locations: Vec<Location>,
        metric: Metric,
        covariate_names: Vec<String>,
        covariates: Vec<Vec<f64>>,
        treatment: Vec<bool>,
        outcome: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = ids.len();
        if locations.len() != n || treatment.len() != n {
            return Err(DapsmError::input("ids, locations and treatment differ in length"));
        }
        if covariate_names.len() != covariates.len() {
            return Err(DapsmError::input("covariate names and columns differ in count"));
        }
        if let Some(col) = covariates.iter().position(|c| c.len() != n) {
            return Err(DapsmError::input(format!(
                "covariate `{}` has {} values, expected {n}",
                covariate_names[col],
                covariates[col].len()
            )));
        }
        if outcome.as_ref().is_some_and(|y| y.len() != n) {
            return Err(DapsmError::input("outcome length differs from unit count"));
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(DapsmError::input(format!("duplicate unit id `{dup}`")));
        }
        Ok(Dataset {
            ids,
            locations,
            metric,
            covariate_names,
            covariates,
            treatment,
            outcome,
        })
    }

    pub fn n_units(&self) -> usize {
        self.ids.len()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.treatment[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| !self.treatment[i]).collect()
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.covariates[k].as_slice())
    }

    pub fn outcome(&self) -> Result<&[f64]> {
        self.outcome
            .as_deref()
            .ok_or_else(|| DapsmError::input("dataset has no outcome column"))
    }

    /// Intercept plus every covariate.
    pub fn design(&self) -> Result<DesignMatrix> {
        DesignMatrix::from_columns(
            self.n_units(),
            self.covariate_names.iter().map(String::as_str).zip(self.covariates.iter().map(Vec::as_slice)),
        )
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n_units() {
            return Err(DapsmError::input("appended covariate has the wrong length"));
        }
        self.covariate_names.push(name.into());
        self.covariates.push(values);
        Ok(self)
    }

    pub fn without_covariate(mut self, name: &str) -> Self {
        if let Some(k) = self.covariate_names.iter().position(|n| n == name) {
            self.covariate_names.remove(k);
            self.covariates.remove(k);
        }
        self
    }
}
