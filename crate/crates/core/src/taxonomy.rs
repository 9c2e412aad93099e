use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERTEBRA_LUMBAR: &str = "vertebra_lumbar";
pub const VERTEBRA_SACRAL: &str = "vertebra_sacral";
pub const CAGE: &str = "cage";
pub const SCREW: &str = "screw";
pub const INSTRUMENTATION: &str = "instrumentation";

const REQUIRED: [&str; 5] = [VERTEBRA_LUMBAR, VERTEBRA_SACRAL, CAGE, SCREW, INSTRUMENTATION];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("duplicate class name `{0}`")]
    Duplicate(String),
    #[error("taxonomy is missing required class `{0}`")]
    MissingClass(String),
    #[error("taxonomy holds {0} classes, at most 254 fit an 8-bit mask")]
    TooMany(usize),
    #[error("empty class name")]
    EmptyName,
}

/// Ordered class names. The class at position `i` has index `i + 1`;
/// index 0 is reserved for background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelTaxonomy {
    names: Vec<String>,
}

impl LabelTaxonomy {
    pub fn new<I, S>(names: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > 254 {
            return Err(TaxonomyError::TooMany(names.len()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(TaxonomyError::EmptyName);
            }
            if names[..i].contains(n) {
                return Err(TaxonomyError::Duplicate(n.clone()));
            }
        }
        for req in REQUIRED {
            if !names.iter().any(|n| n == req) {
                return Err(TaxonomyError::MissingClass(req.to_string()));
            }
        }
        Ok(Self { names })
    }

    /// Number of classes including background.
    pub fn n_classes(&self) -> usize {
        self.names.len() + 1
    }

    pub fn index_of(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| (i + 1) as u8)
    }

    pub fn name_of(&self, index: u8) -> Option<&str> {
        if index == 0 {
            return Some("background");
        }
        self.names.get(index as usize - 1).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lumbar(&self) -> u8 {
        self.index_of(VERTEBRA_LUMBAR).expect("checked at construction")
    }

    pub fn sacral(&self) -> u8 {
        self.index_of(VERTEBRA_SACRAL).expect("checked at construction")
    }

    pub fn is_vertebra(&self, index: u8) -> bool {
        index == self.lumbar() || index == self.sacral()
    }
}

impl Default for LabelTaxonomy {
    fn default() -> Self {
        Self::new(REQUIRED).expect("built-in taxonomy is valid")
    }
}

impl TryFrom<Vec<String>> for LabelTaxonomy {
    type Error = TaxonomyError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<LabelTaxonomy> for Vec<String> {
    fn from(t: LabelTaxonomy) -> Self {
        t.names
    }
}
