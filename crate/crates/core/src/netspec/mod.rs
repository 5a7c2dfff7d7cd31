//! Experiment files: a source, an ordered channel list and APD detectors on
//! one frequency grid, optionally swept over parameters.

mod build;
mod run;
mod schema;

pub use build::Built;
pub use run::{PointResult, RunResult, THREADS_ENV};
pub use schema::*;

use crate::error::{Error, Result};

/// A parsed and validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    spec: ExperimentSpec,
}

impl Experiment {
    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    /// Validates `spec`: every mode reference resolves, channels are
    /// unitary and every sweep value yields a buildable point.
    pub fn from_spec(spec: ExperimentSpec) -> Result<Self> {
        if spec.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "schema_version".into(),
                message: format!("unsupported version {}, expected {SCHEMA_VERSION}", spec.schema_version),
            });
        }
        build::Built::new(&spec, true)?;
        let mut names = Vec::new();
        for axis in &spec.sweep {
            if names.contains(&axis.parameter) {
                return Err(Error::Invalid(format!("sweep parameter {} listed twice", axis.parameter)));
            }
            names.push(axis.parameter.clone());
            if axis.values.is_empty() {
                return Err(Error::Invalid(format!("sweep parameter {} has no values", axis.parameter)));
            }
            let builds_source = axis.parameter.starts_with("source.");
            for (k, &v) in axis.values.iter().enumerate() {
                let mut point = spec.clone();
                build::set_parameter(&mut point, &axis.parameter, v)?;
                build::Built::new(&point, builds_source).map_err(|e| Error::AtPoint {
                    point: k,
                    params: format!("{}={v}", axis.parameter),
                    source: Box::new(e),
                })?;
            }
        }
        Ok(Experiment { spec })
    }

    /// Replaces (or adds) the sweep axis for `parameter`.
    pub fn override_parameter(&self, parameter: &str, values: Vec<f64>) -> Result<Self> {
        let mut spec = self.spec.clone();
        match spec.sweep.iter_mut().find(|a| a.parameter == parameter) {
            Some(axis) => axis.values = values,
            None => spec.sweep.push(SweepAxis { parameter: parameter.into(), values }),
        }
        Self::from_spec(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("experiment spec serializes")
    }

    /// Parameter names and values of every sweep point, first axis slowest.
    pub fn points(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let names = self.spec.sweep.iter().map(|a| a.parameter.clone()).collect();
        let mut points = vec![Vec::new()];
        for axis in &self.spec.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        (names, points)
    }

    /// Builds the network at one sweep point.
    pub fn build_point(&self, values: &[f64]) -> Result<Built> {
        let mut spec = self.spec.clone();
        for (axis, &v) in self.spec.sweep.iter().zip(values) {
            build::set_parameter(&mut spec, &axis.parameter, v)?;
        }
        Built::new(&spec, true)
    }

    /// Evaluates every sweep point, in parallel when allowed by
    /// `PHOTONNET_THREADS`.
    pub fn run(&self) -> Result<RunResult> {
        run::run(self, run::threads_from_env()?)
    }

    pub fn run_with_threads(&self, threads: Option<usize>) -> Result<RunResult> {
        run::run(self, threads)
    }
}

/// Parses an experiment file, reporting the field path of schema errors.
pub fn parse(text: &str) -> Result<Experiment> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema { path: if path.is_empty() { ".".into() } else { path }, message: e.into_inner().to_string() }
    })?;
    Experiment::from_spec(spec)
}

/// JSON Schema of the experiment file.
pub fn json_schema() -> String {
    serde_json::to_string_pretty(&schemars::schema_for!(ExperimentSpec)).expect("schema serializes")
}

#[cfg(test)]
mod tests;
