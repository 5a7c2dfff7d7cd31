use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Experiment, OutputKind};
use crate::detection::DetectionEvaluator;
use crate::error::{Error, Result};

/// Worker-thread count for sweeps; unset means rayon's default.
pub const THREADS_ENV: &str = "PHOTONNET_THREADS";

pub(crate) fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Invalid(format!("{THREADS_ENV}: {e}"))),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Invalid(format!("{THREADS_ENV} = {s:?} is not a positive integer"))),
        },
    }
}

/// Results of one sweep point. Outcome-table entries are indexed by click
/// bitmask: bit `d` set means detector `d` clicked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: usize,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_table: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_photons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub parameters: Vec<String>,
    pub detectors: Vec<String>,
    pub outputs: Vec<OutputKind>,
    pub points: Vec<PointResult>,
}

fn describe(names: &[String], values: &[f64]) -> String {
    names.iter().zip(values).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(",")
}

fn evaluate(exp: &Experiment, index: usize, values: &[f64]) -> Result<PointResult> {
    let built = exp.build_point(values)?;
    let outputs = &exp.spec().outputs;
    let d = built.detectors.len();
    let want = |k| outputs.contains(&k);
    let mut table = want(OutputKind::OutcomeTable).then(|| vec![0.0; 1 << d]);
    let mut marginals = want(OutputKind::Marginals).then(|| vec![0.0; d]);
    let mut means = want(OutputKind::MeanPhotons).then(|| vec![0.0; d]);
    for (w, psi) in built.output_states()? {
        let ev = DetectionEvaluator::with_overlaps(&psi, &built.detectors, &built.overlaps)?;
        if let Some(t) = table.as_mut() {
            for (acc, p) in t.iter_mut().zip(ev.outcome_table()?) {
                *acc += w * p;
            }
        }
        if let Some(m) = marginals.as_mut() {
            for (i, acc) in m.iter_mut().enumerate() {
                *acc += w * ev.marginal(i)?;
            }
        }
        if let Some(m) = means.as_mut() {
            for (i, acc) in m.iter_mut().enumerate() {
                *acc += w * ev.mean_photons(i);
            }
        }
    }
    Ok(PointResult { index, values: values.to_vec(), outcome_table: table, marginals, mean_photons: means })
}

pub(crate) fn run(exp: &Experiment, threads: Option<usize>) -> Result<RunResult> {
    let (names, points) = exp.points();
    let eval = |(i, v): (usize, &Vec<f64>)| {
        evaluate(exp, i, v).map_err(|e| Error::AtPoint { point: i, params: describe(&names, v), source: Box::new(e) })
    };
    let results: Result<Vec<PointResult>> = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            pool.install(|| points.par_iter().enumerate().map(eval).collect())
        }
        None => points.par_iter().enumerate().map(eval).collect(),
    };
    let spec = exp.spec();
    let detectors = spec.detectors.iter().map(|d| d.name.clone()).collect();
    Ok(RunResult {
        schema_version: super::SCHEMA_VERSION,
        parameters: names,
        detectors,
        outputs: spec.outputs.clone(),
        points: results?,
    })
}

impl RunResult {
    /// Long-format CSV: `point,<parameters...>,quantity,label,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["point".to_string()];
        header.extend(self.parameters.iter().cloned());
        header.extend(["quantity", "label", "value"].map(String::from));
        w.write_record(&header).expect("in-memory write");
        let d = self.detectors.len();
        for p in &self.points {
            let mut row = |quantity: &str, label: String, value: f64| {
                let mut r = vec![p.index.to_string()];
                r.extend(p.values.iter().map(f64::to_string));
                r.extend([quantity.to_string(), label, value.to_string()]);
                w.write_record(&r).expect("in-memory write");
            };
            if let Some(t) = &p.outcome_table {
                for (mask, &v) in t.iter().enumerate() {
                    let label = (0..d)
                        .map(|i| format!("{}={}", self.detectors[i], mask >> i & 1))
                        .collect::<Vec<_>>()
                        .join(";");
                    row("outcome", label, v);
                }
            }
            if let Some(m) = &p.marginals {
                for (i, &v) in m.iter().enumerate() {
                    row("marginal", self.detectors[i].clone(), v);
                }
            }
            if let Some(m) = &p.mean_photons {
                for (i, &v) in m.iter().enumerate() {
                    row("mean_photons", self.detectors[i].clone(), v);
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }
}
