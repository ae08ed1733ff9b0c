//! Python bindings: load aligned frames from the CSV formats and expose
//! the metric and teaming entry points for scripting.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use percept_core::ingest::{
    build_frame, parse_annotations, parse_label_space, parse_predictions, parse_truth,
    ClassifierRef, EvalFrame,
};
use percept_core::metrics::{
    accuracy, agreement, balanced_subset, human_entropy, machine_confidence,
    matching_percentage, mean_time,
};
use percept_core::teaming::{oracle_team, realistic_team, select_threshold, TeamingCell};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen)]
struct Frame {
    inner: EvalFrame,
}

impl Frame {
    fn get(&self, id: &str) -> PyResult<ClassifierRef<'_>> {
        self.inner
            .classifier(id)
            .ok_or_else(|| PyKeyError::new_err(format!("no classifier '{id}'")))
    }

    fn group(&self, ids: Vec<String>) -> PyResult<Vec<ClassifierRef<'_>>> {
        ids.iter().map(|id| self.get(id)).collect()
    }
}

fn cell_dict<'py>(py: Python<'py>, cell: &TeamingCell) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("base_acc", cell.base_acc)?;
    d.set_item("partner_acc", cell.partner_acc)?;
    d.set_item("teamed_acc", cell.teamed_acc)?;
    d.set_item("boost", cell.boost)?;
    d.set_item("n_swapped", cell.n_swapped)?;
    Ok(d)
}

#[pymethods]
impl Frame {
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    fn class_names(&self) -> Vec<String> {
        self.inner.label_space().class_names().to_vec()
    }

    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids().to_vec()
    }

    fn classifier_ids(&self) -> Vec<String> {
        self.inner
            .classifiers()
            .map(|c| c.id().to_string())
            .collect()
    }

    fn kind(&self, id: &str) -> PyResult<String> {
        Ok(self.get(id)?.kind().as_str().to_string())
    }

    fn accuracy(&self, id: &str) -> PyResult<f64> {
        Ok(accuracy(self.get(id)?))
    }

    fn machine_confidence(&self, id: &str) -> PyResult<Vec<f64>> {
        Ok(machine_confidence(self.get(id)?)
            .map_err(value_err)?
            .values()
            .to_vec())
    }

    #[pyo3(signature = (ids, exclude=None))]
    fn agreement(&self, ids: Vec<String>, exclude: Option<&str>) -> PyResult<Vec<f64>> {
        let group = self.group(ids)?;
        Ok(agreement(&group, exclude)
            .map_err(value_err)?
            .values()
            .to_vec())
    }

    fn human_entropy(&self, ids: Vec<String>) -> PyResult<Vec<f64>> {
        let group = self.group(ids)?;
        Ok(human_entropy(&group).map_err(value_err)?.values().to_vec())
    }

    fn mean_time(&self, ids: Vec<String>) -> PyResult<Vec<f64>> {
        let group = self.group(ids)?;
        Ok(mean_time(&group).map_err(value_err)?.values().to_vec())
    }

    /// Matching percentage of `a` against `b` over `b`'s balanced subset.
    fn matching(&self, a: &str, b: &str, seed: u64) -> PyResult<f64> {
        let bref = self.get(b)?;
        let subset = balanced_subset(bref, seed).map_err(value_err)?;
        matching_percentage(self.get(a)?, bref, &subset).map_err(value_err)
    }

    fn oracle_team<'py>(
        &self,
        py: Python<'py>,
        base: &str,
        partner: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (_, cell) = oracle_team(self.get(base)?, self.get(partner)?).map_err(value_err)?;
        cell_dict(py, &cell)
    }

    fn realistic_team<'py>(
        &self,
        py: Python<'py>,
        base: &str,
        partner: &str,
        eta: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (_, cell) =
            realistic_team(self.get(base)?, self.get(partner)?, eta).map_err(value_err)?;
        cell_dict(py, &cell)
    }

    /// Smallest grid threshold statistically tied with each base's best,
    /// as (eta_star, fallback).
    fn select_threshold(
        &self,
        bases: Vec<String>,
        partner: &str,
        grid: Vec<f64>,
        alpha: f64,
    ) -> PyResult<(f64, bool)> {
        let base_refs = self.group(bases)?;
        let sel = select_threshold(&base_refs, self.get(partner)?, &grid, alpha)
            .map_err(value_err)?;
        Ok((sel.eta_star, sel.fallback))
    }
}

/// Parse the CSV inputs and build an aligned frame.
///
/// `predictions` and `annotations` are lists of (classifier_id, path).
#[pyfunction]
#[pyo3(signature = (classes, truth, predictions, annotations=Vec::new()))]
fn load_frame(
    classes: &str,
    truth: &str,
    predictions: Vec<(String, String)>,
    annotations: Vec<(String, String)>,
) -> PyResult<Frame> {
    let space = parse_label_space(classes).map_err(value_err)?;
    let truth: BTreeMap<String, usize> = parse_truth(truth, &space).map_err(value_err)?;
    let mut machines = Vec::new();
    for (id, path) in &predictions {
        machines.push(parse_predictions(path, &space, id).map_err(value_err)?);
    }
    let mut humans = Vec::new();
    for (id, path) in &annotations {
        humans.push(parse_annotations(path, &space, id).map_err(value_err)?);
    }
    let inner = build_frame(space, truth, machines, humans).map_err(value_err)?;
    Ok(Frame { inner })
}

/// CDF of Student's t at `t` with `df` degrees of freedom.
#[pyfunction]
fn t_cdf(t: f64, df: usize) -> PyResult<f64> {
    percept_core::stats::t_cdf(t, df).map_err(value_err)
}

#[pymodule]
fn percept(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Frame>()?;
    m.add_function(wrap_pyfunction!(load_frame, m)?)?;
    m.add_function(wrap_pyfunction!(t_cdf, m)?)?;
    Ok(())
}
