//! Confusion matrices and Intersection-over-Union.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::mask::{LabelMask, MaskError, IGNORE};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("class id {0} is outside the evaluated label space")]
    UnknownClass(u8),
    #[error("label space must be non-empty, unique and exclude {IGNORE}")]
    InvalidLabelSpace,
    #[error("confusion matrices have different label spaces")]
    LabelSpaceMismatch,
}

/// True/false positive and false negative pixel counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    /// `tp / (tp + fp + fn)`, or `None` when the class never occurs in
    /// either mask.
    pub fn iou(&self) -> Option<f64> {
        let denom = self.tp + self.fp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

/// `counts[g][p]`: pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<u8>,
    index: [Option<u8>; 256],
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[u8]) -> Result<Self, MetricsError> {
        if classes.is_empty() || classes.len() > 255 || classes.contains(&IGNORE) {
            return Err(MetricsError::InvalidLabelSpace);
        }
        let mut index = [None; 256];
        for (i, &c) in classes.iter().enumerate() {
            if index[c as usize].replace(i as u8).is_some() {
                return Err(MetricsError::InvalidLabelSpace);
            }
        }
        let k = classes.len();
        Ok(Self {
            classes: classes.to_vec(),
            index,
            counts: vec![0; k * k],
        })
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    fn k(&self) -> usize {
        self.classes.len()
    }

    fn slot(&self, id: u8) -> Result<usize, MetricsError> {
        self.index[id as usize].map(usize::from).ok_or(MetricsError::UnknownClass(id))
    }

    pub fn get(&self, truth: u8, pred: u8) -> Result<u64, MetricsError> {
        Ok(self.counts[self.slot(truth)? * self.k() + self.slot(pred)?])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every pixel where neither mask is [`IGNORE`]. On error the
    /// matrix is left unchanged.
    pub fn accumulate(&mut self, pred: &LabelMask, truth: &LabelMask) -> Result<u64, MetricsError> {
        pred.ensure_same_dimensions(truth)?;
        let k = self.k();
        let mut local = vec![0u64; k * k];
        let mut added = 0;
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            if p == IGNORE || t == IGNORE {
                continue;
            }
            let ti = self.index[t as usize].ok_or(MetricsError::UnknownClass(t))? as usize;
            let pi = self.index[p as usize].ok_or(MetricsError::UnknownClass(p))? as usize;
            local[ti * k + pi] += 1;
            added += 1;
        }
        for (c, l) in self.counts.iter_mut().zip(local) {
            *c += l;
        }
        Ok(added)
    }

    pub fn accumulated(mut self, pred: &LabelMask, truth: &LabelMask) -> Result<Self, MetricsError> {
        self.accumulate(pred, truth)?;
        Ok(self)
    }

    /// Element-wise sum with a matrix over the same label space.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.classes != other.classes {
            return Err(MetricsError::LabelSpaceMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn transposed(&self) -> ConfusionMatrix {
        let k = self.k();
        let mut counts = vec![0; k * k];
        for g in 0..k {
            for p in 0..k {
                counts[p * k + g] = self.counts[g * k + p];
            }
        }
        ConfusionMatrix { counts, ..self.clone() }
    }

    pub fn class_counts(&self, class: u8) -> Result<ClassCounts, MetricsError> {
        let c = self.slot(class)?;
        let k = self.k();
        let tp = self.counts[c * k + c];
        let row: u64 = self.counts[c * k..(c + 1) * k].iter().sum();
        let col: u64 = (0..k).map(|g| self.counts[g * k + c]).sum();
        Ok(ClassCounts {
            tp,
            fp: col - tp,
            fn_: row - tp,
        })
    }

    pub fn iou_per_class(&self) -> BTreeMap<u8, Option<f64>> {
        self.classes
            .iter()
            .map(|&c| (c, self.class_counts(c).expect("own class").iou()))
            .collect()
    }

    /// Mean of the defined IoUs over `eval_classes`; `None` if none is defined.
    pub fn mean_iou(&self, eval_classes: &[u8]) -> Result<Option<f64>, MetricsError> {
        let mut values = Vec::with_capacity(eval_classes.len());
        for &c in eval_classes {
            if let Some(v) = self.class_counts(c)?.iou() {
                values.push(v);
            }
        }
        Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
    }
}
