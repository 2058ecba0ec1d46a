//! Label schema, examples, tokenisation, vocabularies, splits and the
//! synthetic corpus generator.

mod split;
mod synth;
mod tokenize;
mod vocab;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{split, DEFAULT_SPLIT};
pub use synth::{synth_generate, SynthSpec};
pub use tokenize::tokenize;
pub use vocab::Vocabulary;

pub const SYMPTOM_NAMES: [&str; 9] = [
    "Lack of Interest",
    "Feeling Down",
    "Sleeping Disorder",
    "Lack of Energy",
    "Eating Disorder",
    "Low Self-Esteem",
    "Concentration Problem",
    "Hyper/Lower Activity",
    "Self-Harm",
];

pub const FIGURATIVE_NAMES: [&str; 3] = ["metaphor", "sarcasm", "others"];

pub const METAPHOR: usize = 0;
pub const SARCASM: usize = 1;
pub const OTHERS: usize = 2;

/// Ordered class names of both tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub primary_names: Vec<String>,
    pub aux_names: Vec<String>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self {
            primary_names: SYMPTOM_NAMES.iter().map(|s| s.to_string()).collect(),
            aux_names: FIGURATIVE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LabelSchema {
    pub fn validate(&self) -> Result<()> {
        for names in [&self.primary_names, &self.aux_names] {
            for (i, n) in names.iter().enumerate() {
                if names[..i].contains(n) {
                    return Err(Error::config(format!("duplicate class name {n:?}")));
                }
            }
        }
        if self.aux_names.len() != FIGURATIVE_NAMES.len() {
            return Err(Error::config("auxiliary schema must be [metaphor, sarcasm, others]"));
        }
        Ok(())
    }

    pub fn primary_index(&self, name: &str) -> Result<usize> {
        self.primary_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    pub fn aux_index(&self, name: &str) -> Result<usize> {
        self.aux_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    /// Multi-hot vectors from class names. `others` is set iff neither
    /// figurative class is present; listing it next to one is an error.
    pub fn encode_labels<S: AsRef<str>>(&self, symptoms: &[S], figurative: &[S]) -> Result<(Vec<bool>, Vec<bool>)> {
        let mut primary = vec![false; self.primary_names.len()];
        for s in symptoms {
            primary[self.primary_index(s.as_ref())?] = true;
        }
        let mut aux = vec![false; self.aux_names.len()];
        for f in figurative {
            aux[self.aux_index(f.as_ref())?] = true;
        }
        let figurative_set = aux[METAPHOR] || aux[SARCASM];
        if figurative_set && aux[OTHERS] {
            return Err(Error::Schema(format!(
                "{:?} cannot be combined with a figurative class",
                self.aux_names[OTHERS]
            )));
        }
        aux[OTHERS] = !figurative_set;
        Ok((primary, aux))
    }

    pub fn primary_label_names(&self, labels: &[bool]) -> Vec<String> {
        names_of(&self.primary_names, labels)
    }

    pub fn aux_label_names(&self, labels: &[bool]) -> Vec<String> {
        names_of(&self.aux_names, labels)
    }
}

fn names_of(names: &[String], labels: &[bool]) -> Vec<String> {
    names
        .iter()
        .zip(labels)
        .filter(|(_, &on)| on)
        .map(|(n, _)| n.clone())
        .collect()
}

/// One text with labels for both tasks. `tokens` is empty until the
/// example is encoded against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub tokens: Vec<usize>,
    pub primary_labels: Vec<bool>,
    pub aux_labels: Vec<bool>,
}

impl Example {
    pub fn new(text: impl Into<String>, primary_labels: Vec<bool>, aux_labels: Vec<bool>) -> Self {
        Self {
            text: text.into(),
            tokens: Vec::new(),
            primary_labels,
            aux_labels,
        }
    }

    pub fn is_depressive(&self) -> bool {
        self.primary_labels.iter().any(|&b| b)
    }

    pub fn is_figurative(&self) -> bool {
        self.aux_labels[METAPHOR] || self.aux_labels[SARCASM]
    }

    /// Training view with both tasks.
    pub fn to_sample(&self) -> Sample {
        Sample {
            tokens: self.tokens.clone(),
            labels: vec![self.primary_labels.clone(), self.aux_labels.clone()],
        }
    }

    /// Training view with one binary task: any symptom versus none.
    pub fn to_binary_sample(&self) -> Sample {
        Sample {
            tokens: self.tokens.clone(),
            labels: vec![vec![self.is_depressive()]],
        }
    }
}

/// Fills in `tokens` for every example.
pub fn encode_all(examples: &mut [Example], vocab: &Vocabulary, max_len: usize) {
    for ex in examples {
        ex.tokens = vocab.encode(&ex.text, max_len);
    }
}

/// Token ids plus one multi-hot label vector per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub labels: Vec<Vec<bool>>,
}
