use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

/// Binary class label, `±1` on the wire and in the Gaussian/probit models.
/// The harmonic model maps it to `{0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    /// `{0, 1}` encoding used by the harmonic model.
    pub fn binary(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    /// `sign(v)` with `sign(0) = +1`.
    pub fn from_sign(v: f64) -> Label {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn from_int(v: i64) -> Result<Label> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(invalid(format!("label must be +1 or -1, got {other}"))),
        }
    }

    pub fn as_int(self) -> i8 {
        match self {
            Label::Negative => -1,
            Label::Positive => 1,
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub const BOTH: [Label; 2] = [Label::Positive, Label::Negative];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_int())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_int(v).map_err(serde::de::Error::custom)
    }
}

/// Ordered labeled observations. Indices are distinct unless a repeat was
/// added explicitly through [`LabeledSet::with_repeat`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSet {
    entries: Vec<(usize, Label)>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Label)>) -> Result<Self> {
        let mut set = LabeledSet::new();
        for (i, y) in pairs {
            set.insert(i, y)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, index: usize, label: Label) -> Result<()> {
        if self.contains(index) {
            return Err(invalid(format!("node {index} is already labeled")));
        }
        self.entries.push((index, label));
        Ok(())
    }

    /// Copy with `(index, label)` appended even if `index` is already
    /// present, modelling a repeated observation of the same node.
    pub fn with_repeat(&self, index: usize, label: Label) -> Self {
        let mut entries = self.entries.clone();
        entries.push((index, label));
        LabeledSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.entries.iter().copied()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.entries.iter().any(|e| e.0 == index)
    }

    /// Label of the first observation of `index`.
    pub fn label_of(&self, index: usize) -> Option<Label> {
        self.entries.iter().find(|e| e.0 == index).map(|e| e.1)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.0).max()
    }

    /// `true` at labeled positions.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &(i, _) in &self.entries {
            mask[i] = true;
        }
        mask
    }

    /// Unlabeled nodes in ascending order.
    pub fn unlabeled(&self, n: usize) -> Vec<usize> {
        let mask = self.mask(n);
        (0..n).filter(|&i| !mask[i]).collect()
    }

    pub(crate) fn check_bounds(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(m) if m >= n => Err(invalid(format!("labeled index {m} out of range for {n} nodes"))),
            _ => Ok(()),
        }
    }
}
