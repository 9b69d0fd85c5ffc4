use std::fmt;
use std::str::FromStr;

use super::{forward_traced, sigmoid, view_logit, AggKind, BagFeatures, HeadParams};
use crate::error::{Error, Result};
use crate::par::Exec;

/// How the head is trained and how a bag score is formed at inference.
///
/// `SilMean`/`SilMax` train on individual views that inherit their bag's
/// label, then pool per-view probabilities by mean or max at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    Mil,
    SilMean,
    SilMax,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Mil => "mil",
            TrainMode::SilMean => "sil_mean",
            TrainMode::SilMax => "sil_max",
        }
    }

    pub fn is_sil(self) -> bool {
        self != TrainMode::Mil
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TrainMode::Mil => 0,
            TrainMode::SilMean => 1,
            TrainMode::SilMax => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => TrainMode::Mil,
            1 => TrainMode::SilMean,
            2 => TrainMode::SilMax,
            _ => return None,
        })
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mil" => Ok(TrainMode::Mil),
            "sil_mean" => Ok(TrainMode::SilMean),
            "sil_max" => Ok(TrainMode::SilMax),
            other => Err(Error::invalid(format!(
                "unknown mode '{other}' (expected mil, sil_mean or sil_max)"
            ))),
        }
    }
}

/// Trained parameters plus the inference rule that goes with them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: HeadParams,
    pub mode: TrainMode,
}

impl Model {
    pub fn new(params: HeadParams, mode: TrainMode) -> Result<Self> {
        if mode.is_sil() && (params.agg().global == AggKind::None || params.agg().local != AggKind::None) {
            return Err(Error::invalid("single-instance models use the global stream only"));
        }
        Ok(Model { params, mode })
    }

    /// Bag-level probability of the positive class.
    pub fn score(&self, bag: &BagFeatures) -> Result<f64> {
        if bag.dim() != self.params.dims().embed_dim {
            return Err(Error::Dimension(format!(
                "bag dimension {} vs model dimension {}",
                bag.dim(),
                self.params.dims().embed_dim
            )));
        }
        match self.mode {
            TrainMode::Mil => Ok(sigmoid(forward_traced(bag, &self.params)?.logit)),
            TrainMode::SilMean | TrainMode::SilMax => {
                let mut probs = Vec::with_capacity(bag.global.nrows());
                for row in bag.global.rows() {
                    probs.push(sigmoid(view_logit(row, &self.params)?));
                }
                if probs.is_empty() {
                    return Err(Error::invalid("bag has no views"));
                }
                Ok(if self.mode == TrainMode::SilMax {
                    probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    probs.iter().sum::<f64>() / probs.len() as f64
                })
            }
        }
    }

    pub fn score_all(&self, bags: &[BagFeatures], exec: Exec) -> Result<Vec<f64>> {
        exec.map(bags, |b| self.score(b)).into_iter().collect()
    }
}
