//! Residual student network partitioned into ordered transfer units.
//!
//! Unit 1 is the stem (convolution + batch norm), units `2..U-1` are basic
//! residual blocks in forward order, and unit `U` is global average pooling
//! followed by the cosine classifier. Every parameter and every batch-norm
//! running statistic lives in exactly one unit, stored contiguously in a
//! single arena so a unit is one slice.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::Result;
use crate::invalid;

pub mod head;
pub mod layers;
mod network;

pub use head::cosine_head;
pub use network::{Logits, Mode, Model, Network, Trace};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ArchitectureConfig {
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub num_categories: usize,
    /// Fixed temperature of the cosine classifier.
    pub head_temperature: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            stage_widths: alloc::vec![16, 32, 64, 128],
            blocks_per_stage: 2,
            num_categories: 10,
            head_temperature: 0.1,
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.is_empty() {
            return invalid!("at least one stage is required");
        }
        if self.stage_widths.contains(&0) {
            return invalid!("stage widths must be positive: {:?}", self.stage_widths);
        }
        if self.stage_widths.windows(2).any(|w| w[1] < w[0]) {
            return invalid!("stage widths must be non-decreasing: {:?}", self.stage_widths);
        }
        if self.blocks_per_stage == 0 {
            return invalid!("blocks_per_stage must be >= 1");
        }
        if self.num_categories < 2 {
            return invalid!("num_categories must be >= 2, got {}", self.num_categories);
        }
        if !(self.head_temperature > 0.0 && self.head_temperature.is_finite()) {
            return invalid!("head temperature must be positive, got {}", self.head_temperature);
        }
        Ok(())
    }

    /// `U = 1 + stages * blocks + 1`.
    pub fn unit_count(&self) -> usize {
        2 + self.stage_widths.len() * self.blocks_per_stage
    }

    pub fn feature_dim(&self) -> usize {
        *self.stage_widths.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ParamKind {
    ConvWeight,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
    HeadWeight,
}

impl ParamKind {
    /// Receives gradients and optimizer updates.
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    /// Subject to weight decay (batch-norm parameters are exempt).
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::HeadWeight)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::ConvWeight => "conv_weight",
            ParamKind::BnScale => "bn_scale",
            ParamKind::BnShift => "bn_shift",
            ParamKind::RunningMean => "running_mean",
            ParamKind::RunningVar => "running_var",
            ParamKind::HeadWeight => "head_weight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ParamKind::ConvWeight,
            ParamKind::BnScale,
            ParamKind::BnShift,
            ParamKind::RunningMean,
            ParamKind::RunningVar,
            ParamKind::HeadWeight,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// One named tensor in the parameter arena.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    /// Offset in elements.
    pub offset: usize,
    pub len: usize,
    /// Zero-based index of the owning transfer unit.
    pub unit: usize,
}

impl ParamEntry {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// A contiguous group of entries forming one transfer unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferUnit {
    pub name: String,
    /// Element range in the arena.
    pub range: Range<usize>,
    /// Index range into the entry table.
    pub entries: Range<usize>,
}

/// The ordered partition of the arena.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferUnitPartition {
    pub units: Vec<TransferUnit>,
    pub entries: Vec<ParamEntry>,
}

impl TransferUnitPartition {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.units.last().map_or(0, |u| u.range.end)
    }

    pub(crate) fn unit_name(stage: usize, block: usize) -> String {
        format!("stage{}.block{}", stage + 1, block + 1)
    }
}

/// Flat copy of every parameter and running statistic, with unit bounds.
///
/// Equality is bitwise.
#[derive(Debug, Clone)]
pub struct ParamSnapshot {
    pub values: Vec<f32>,
    pub unit_ranges: Vec<Range<usize>>,
}

impl ParamSnapshot {
    pub fn unit(&self, u: usize) -> &[f32] {
        &self.values[self.unit_ranges[u].clone()]
    }

    /// Bitwise equality of one unit.
    pub fn unit_eq(&self, other: &Self, u: usize) -> bool {
        bits_eq(self.unit(u), other.unit(u))
    }

    /// Zero-based indices of units that differ bitwise.
    pub fn changed_units(&self, other: &Self) -> Vec<usize> {
        (0..self.unit_ranges.len()).filter(|&u| !self.unit_eq(other, u)).collect()
    }
}

impl PartialEq for ParamSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.unit_ranges == other.unit_ranges && bits_eq(&self.values, &other.values)
    }
}

fn bits_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
