use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// A `<library>-<function>` tag naming one function of one library.
///
/// Library names may not contain a dash, so the rendered form always splits
/// back on its first dash.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label {
    library: String,
    function: String,
}

impl Label {
    pub fn new(library: impl Into<String>, function: impl Into<String>) -> Result<Self, ModelError> {
        let library = library.into();
        let function = function.into();
        if library.is_empty() || function.is_empty() {
            return Err(ModelError::InvalidLabel(format!("{library}-{function}")));
        }
        if library.contains('-') {
            return Err(ModelError::InvalidLabel(format!(
                "library name `{library}` contains a dash"
            )));
        }
        Ok(Self { library, function })
    }

    pub fn library(&self) -> &str {
        &self.library
    }

    pub fn function(&self) -> &str {
        &self.function
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.library, self.function)
    }
}

impl FromStr for Label {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (library, function) = s
            .split_once('-')
            .ok_or_else(|| ModelError::InvalidLabel(s.to_owned()))?;
        Label::new(library, function)
    }
}

impl TryFrom<String> for Label {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.to_string()
    }
}

/// A set of labels. Serializes as a sorted list of rendered labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` when the label was not already present.
    pub fn insert(&mut self, label: Label) -> bool {
        self.0.insert(label)
    }

    pub fn extend_from(&mut self, other: &LabelSet) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.0.contains(label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> + '_ {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union_len(&self, other: &LabelSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    /// Rendered labels in sorted order.
    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(Label::to_string).collect()
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a LabelSet {
    type Item = &'a Label;
    type IntoIter = std::collections::btree_set::Iter<'a, Label>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
