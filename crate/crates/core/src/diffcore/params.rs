use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named, contiguous block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat parameter storage with an ordered segment map.
///
/// Segment names are dotted; a group query such as `"theta2"` covers every
/// segment whose name starts with `"theta2."`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    /// Builds a zeroed vector from `(name, len)` pairs laid out in order.
    pub fn zeros(shape: &[(String, usize)]) -> Self {
        let mut layout = Vec::with_capacity(shape.len());
        let mut offset = 0;
        for (name, len) in shape {
            layout.push(Segment { name: name.clone(), offset, len: *len });
            offset += len;
        }
        Self { values: vec![0.0; offset], layout }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self { values: vec![0.0; other.values.len()], layout: other.layout.clone() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    /// Index range of an exact segment name or of a dotted group prefix.
    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        if let Some(s) = self.segment(name) {
            return Some(s.range());
        }
        let prefix = format!("{name}.");
        let mut members = self.layout.iter().filter(|s| s.name.starts_with(&prefix));
        let first = members.next()?;
        let end = members.fold(first.offset + first.len, |_, s| s.offset + s.len);
        Some(first.offset..end)
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        let r = self.range(name).unwrap_or_else(|| panic!("no segment `{name}`"));
        &self.values[r]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name).unwrap_or_else(|| panic!("no segment `{name}`"));
        &mut self.values[r]
    }

    /// Name of the first segment holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.layout.iter().find(|s| self.values[s.range()].iter().any(|v| !v.is_finite())).map(|s| s.name.as_str())
    }

    /// Splits the flat vector into owned per-segment blocks.
    pub fn unpack(&self) -> Vec<(String, Vec<f64>)> {
        self.layout.iter().map(|s| (s.name.clone(), self.values[s.range()].to_vec())).collect()
    }

    /// Inverse of [`ParamVector::unpack`].
    pub fn pack(blocks: &[(String, Vec<f64>)]) -> Self {
        let shape: Vec<_> = blocks.iter().map(|(n, v)| (n.clone(), v.len())).collect();
        let mut p = Self::zeros(&shape);
        let mut at = 0;
        for (_, v) in blocks {
            p.values[at..at + v.len()].copy_from_slice(v);
            at += v.len();
        }
        p
    }

    /// Checks that segments tile `0..len` without gaps or overlaps.
    pub fn validate_layout(&self) -> Result<()> {
        let mut at = 0;
        for s in &self.layout {
            if s.offset != at {
                return Err(Error::InvalidConfig(format!("segment `{}` not contiguous", s.name)));
            }
            at += s.len;
        }
        if at != self.values.len() {
            return Err(Error::InvalidConfig("segments do not cover the parameter vector".into()));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
