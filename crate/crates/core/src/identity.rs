//! Template registry and threshold matching over 128-d face embeddings.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 128;

/// Two embeddings belong to the same person when their distance is strictly
/// below this value.
pub const MATCH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentityError {
    #[error("embedding must have {EMBEDDING_DIM} components, got {0}")]
    WrongDimension(usize),
    #[error("embedding component {0} is not finite")]
    NonFinite(usize),
    #[error("template label must be non-empty")]
    EmptyLabel,
}

/// 128 finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: [f64; EMBEDDING_DIM],
}

impl Embedding {
    pub fn new(values: [f64; EMBEDDING_DIM]) -> Result<Self, IdentityError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(IdentityError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self, IdentityError> {
        let arr: [f64; EMBEDDING_DIM] = values
            .try_into()
            .map_err(|_| IdentityError::WrongDimension(values.len()))?;
        Self::new(arr)
    }

    pub fn zeros() -> Self {
        Self {
            values: [0.0; EMBEDDING_DIM],
        }
    }

    pub fn values(&self) -> &[f64; EMBEDDING_DIM] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// Component-wise sum; finite inputs with finite sums only.
    pub(crate) fn add_unchecked(&self, other: &[f64; EMBEDDING_DIM]) -> Self {
        let mut values = self.values;
        for (v, o) in values.iter_mut().zip(other) {
            *v += o;
        }
        Self { values }
    }
}

/// L2 distance between two embeddings.
pub fn euclidean_distance(a: &Embedding, b: &Embedding) -> f64 {
    let sum: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    libm::sqrt(sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub label: String,
    pub embedding: Embedding,
    /// Simulation time of capture, seconds.
    pub captured_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub label: String,
    pub distance: f64,
    pub matched: bool,
}

/// Labeled templates, unique by label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    templates: Vec<Template>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a registry; later duplicates of a label replace earlier ones.
    pub fn from_templates(
        templates: impl IntoIterator<Item = Template>,
    ) -> Result<Self, IdentityError> {
        let mut reg = Self::new();
        for t in templates {
            reg.capture(t.label, t.embedding, t.captured_at)?;
        }
        Ok(reg)
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.label == label)
    }

    /// Stores a template, replacing any existing one with the same label.
    pub fn capture(
        &mut self,
        label: impl Into<String>,
        embedding: Embedding,
        captured_at: f64,
    ) -> Result<(), IdentityError> {
        let label = label.into();
        if label.is_empty() {
            return Err(IdentityError::EmptyLabel);
        }
        let template = Template {
            label,
            embedding,
            captured_at,
        };
        match self.templates.iter_mut().find(|t| t.label == template.label) {
            Some(slot) => *slot = template,
            None => self.templates.push(template),
        }
        Ok(())
    }

    pub fn best_match(&self, query: &Embedding) -> Option<MatchResult> {
        best_match(query, &self.templates)
    }
}

/// Nearest template to `query`. Equal distances resolve to the earliest
/// `captured_at`, then to the lexicographically smaller label.
pub fn best_match(query: &Embedding, templates: &[Template]) -> Option<MatchResult> {
    templates
        .iter()
        .map(|t| (t, euclidean_distance(query, &t.embedding)))
        .min_by(|(ta, da), (tb, db)| {
            da.total_cmp(db)
                .then_with(|| ta.captured_at.total_cmp(&tb.captured_at))
                .then_with(|| ta.label.cmp(&tb.label))
        })
        .map(|(t, distance)| MatchResult {
            label: t.label.clone(),
            distance,
            matched: distance < MATCH_THRESHOLD,
        })
}
