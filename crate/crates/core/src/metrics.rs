//! Shape-reconstruction metrics and their aggregation into report tables.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::ShapeKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("mask shapes differ: {a:?} vs {b:?}")]
    Shape {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("cannot aggregate an empty record list")]
    Empty,
    #[error("invalid record: {0}")]
    Record(String),
}

fn check_dims(a: &Array2<u8>, b: &Array2<u8>) -> Result<(), MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Shape {
            a: a.dim(),
            b: b.dim(),
        });
    }
    Ok(())
}

/// Intersection over union of two binary masks (nonzero = object).
///
/// Two empty masks agree perfectly and score 1.0.
pub fn iou(a: &Array2<u8>, b: &Array2<u8>) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Fraction of pixels on which two binary masks agree.
pub fn pixel_accuracy(a: &Array2<u8>, b: &Array2<u8>) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    if a.is_empty() {
        return Ok(1.0);
    }
    let agree = a
        .iter()
        .zip(b.iter())
        .filter(|(&x, &y)| (x != 0) == (y != 0))
        .count();
    Ok(agree as f64 / a.len() as f64)
}

/// Score of one reconstruction against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: u64,
    pub shape: ShapeKind,
    /// Method tag such as `physical-60`, `physical-256` or `wifigen`.
    pub method: String,
    pub iou: f64,
    pub pixel_accuracy: f64,
}

impl EvalRecord {
    /// Scores `prediction` against `truth`.
    pub fn score(
        sample_id: u64,
        shape: ShapeKind,
        method: &str,
        prediction: &Array2<u8>,
        truth: &Array2<u8>,
    ) -> Result<Self, MetricsError> {
        let record = Self {
            sample_id,
            shape,
            method: method.to_string(),
            iou: iou(prediction, truth)?,
            pixel_accuracy: pixel_accuracy(prediction, truth)?,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.method.is_empty()
            || !self
                .method
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(MetricsError::Record(format!(
                "method tag {:?} must be non-empty ASCII [A-Za-z0-9_-]",
                self.method
            )));
        }
        for (name, v) in [("iou", self.iou), ("pixel_accuracy", self.pixel_accuracy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::Record(format!(
                    "sample {} {name} = {v} outside [0, 1]",
                    self.sample_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub shape: ShapeKind,
    pub count: usize,
    pub mean_iou: f64,
    pub mean_pixel_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub count: usize,
    pub mean_iou: f64,
    pub mean_pixel_accuracy: f64,
    /// Shapes with at least one record, in [`ShapeKind::ALL`] order.
    pub shapes: Vec<ShapeSummary>,
}

impl MethodSummary {
    pub fn shape(&self, kind: ShapeKind) -> Option<&ShapeSummary> {
        self.shapes.iter().find(|s| s.shape == kind)
    }
}

/// Mean scores per method and per (method, shape). Methods are sorted by
/// tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub methods: Vec<MethodSummary>,
}

impl ReportTable {
    pub fn method(&self, tag: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == tag)
    }
}

/// Order-independent mean: values are sorted before summation so the
/// result is bitwise identical for any permutation of the input.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// IoU and pixel-accuracy values of one group.
type Scores = (Vec<f64>, Vec<f64>);

/// Aggregates records into a [`ReportTable`].
pub fn aggregate_report(records: &[EvalRecord]) -> Result<ReportTable, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut groups: BTreeMap<&str, BTreeMap<ShapeKind, Scores>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let cell = groups
            .entry(r.method.as_str())
            .or_default()
            .entry(r.shape)
            .or_default();
        cell.0.push(r.iou);
        cell.1.push(r.pixel_accuracy);
    }
    let methods = groups
        .into_iter()
        .map(|(method, by_shape)| {
            let mut all_iou = Vec::new();
            let mut all_acc = Vec::new();
            let shapes = by_shape
                .into_iter()
                .map(|(shape, (mut ious, mut accs))| {
                    all_iou.extend_from_slice(&ious);
                    all_acc.extend_from_slice(&accs);
                    ShapeSummary {
                        shape,
                        count: ious.len(),
                        mean_iou: stable_mean(&mut ious),
                        mean_pixel_accuracy: stable_mean(&mut accs),
                    }
                })
                .collect();
            MethodSummary {
                method: method.to_string(),
                count: all_iou.len(),
                mean_iou: stable_mean(&mut all_iou),
                mean_pixel_accuracy: stable_mean(&mut all_acc),
                shapes,
            }
        })
        .collect();
    Ok(ReportTable { methods })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn record(id: u64, shape: ShapeKind, method: &str, iou: f64) -> EvalRecord {
        EvalRecord {
            sample_id: id,
            shape,
            method: method.into(),
            iou,
            pixel_accuracy: 0.9,
        }
    }

    #[test]
    fn iou_definitions() {
        let a = array![[1u8, 1, 0], [0, 1, 0]];
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = array![[0u8, 0, 1], [1, 0, 1]];
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let z = Array2::<u8>::zeros((2, 3));
        assert_eq!(iou(&z, &z).unwrap(), 1.0);
        assert_eq!(iou(&a, &z).unwrap(), 0.0);
    }

    #[test]
    fn shifted_block_scores_one_third() {
        let mut a = Array2::<u8>::zeros((4, 4));
        let mut b = Array2::<u8>::zeros((4, 4));
        for y in 1..3 {
            for x in 0..2 {
                a[[y, x]] = 1;
                b[[y, x + 1]] = 1;
            }
        }
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Array2::<u8>::zeros((2, 3));
        let b = Array2::<u8>::zeros((3, 2));
        assert!(matches!(iou(&a, &b), Err(MetricsError::Shape { .. })));
        assert!(pixel_accuracy(&a, &b).is_err());
    }

    #[test]
    fn pixel_accuracy_counts_agreement() {
        let a = array![[1u8, 0], [0, 0]];
        let b = array![[1u8, 1], [0, 0]];
        assert_eq!(pixel_accuracy(&a, &b).unwrap(), 0.75);
    }

    #[test]
    fn single_record_report() {
        let t = aggregate_report(&[record(1, ShapeKind::Ring, "physical-60", 0.5)]).unwrap();
        let m = t.method("physical-60").unwrap();
        assert_eq!(m.mean_iou, 0.5);
        assert_eq!(m.shape(ShapeKind::Ring).unwrap().mean_iou, 0.5);
        assert_eq!(m.count, 1);
    }

    #[test]
    fn two_shapes_average() {
        let t = aggregate_report(&[
            record(1, ShapeKind::Circle, "a", 0.2),
            record(2, ShapeKind::Square, "a", 0.4),
        ])
        .unwrap();
        assert!((t.methods[0].mean_iou - 0.3).abs() < 1e-15);
    }

    #[test]
    fn methods_and_shapes_are_ordered() {
        let t = aggregate_report(&[
            record(1, ShapeKind::Ring, "physical-60", 0.1),
            record(2, ShapeKind::Circle, "physical-256", 0.2),
            record(3, ShapeKind::Circle, "physical-60", 0.3),
        ])
        .unwrap();
        let tags: Vec<_> = t.methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(tags, ["physical-256", "physical-60"]);
        let shapes: Vec<_> = t.methods[1].shapes.iter().map(|s| s.shape).collect();
        assert_eq!(shapes, [ShapeKind::Circle, ShapeKind::Ring]);
    }

    #[test]
    fn empty_and_invalid_inputs() {
        assert_eq!(aggregate_report(&[]), Err(MetricsError::Empty));
        let bad = record(1, ShapeKind::Circle, "x", 1.5);
        assert!(matches!(
            aggregate_report(&[bad]),
            Err(MetricsError::Record(_))
        ));
        let comma = record(1, ShapeKind::Circle, "a,b", 0.5);
        assert!(comma.validate().is_err());
    }
}
