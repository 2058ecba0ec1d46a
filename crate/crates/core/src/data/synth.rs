//! Template-based synthetic corpus with correlated primary/auxiliary labels.
//!
//! Every symptom class owns a set of literal phrases. A figurative example
//! of symptom `k` wraps metaphor and/or sarcasm markers around a literal
//! phrase of symptom `k + 1 (mod 9)`, so the surface words alone point to
//! the wrong class and the figurative bit decides how to read them.
//! Non-depressive examples are built from neutral phrases, some of which
//! share words with the sarcasm markers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Example, METAPHOR, OTHERS, SARCASM, SYMPTOM_NAMES};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Share of depressive examples written figuratively.
    pub figurative_fraction: f64,
    /// Share of examples with no symptom.
    pub non_depressive_fraction: f64,
    /// Probability that a depressive example carries a second symptom.
    pub multi_p: f64,
    /// Probability of a neutral filler phrase around a symptom phrase.
    pub filler_p: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            figurative_fraction: 0.4,
            // 8417 non-depressive of 12155 tweets
            non_depressive_fraction: 0.69,
            multi_p: 0.15,
            filler_p: 0.3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("figurative_fraction", self.figurative_fraction),
            ("non_depressive_fraction", self.non_depressive_fraction),
            ("multi_p", self.multi_p),
            ("filler_p", self.filler_p),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

// Relative symptom frequencies (tweets per class in the reference corpus).
const SYMPTOM_WEIGHTS: [f64; 9] = [494.0, 657.0, 261.0, 301.0, 473.0, 1054.0, 136.0, 122.0, 970.0];

// Shares of figurative examples: metaphor only, sarcasm only, both.
const FIGURATIVE_MIX: [f64; 3] = [817.0 / 1485.0, 379.0 / 1485.0, 289.0 / 1485.0];

const LITERAL: [&[&str]; 9] = [
    &[
        "nothing interests me anymore",
        "i do not enjoy my hobbies",
        "lost all interest in everything",
        "cannot be bothered to do anything",
        "no desire to go out",
    ],
    &[
        "i feel so hopeless",
        "crying again for no reason",
        "deep sadness will not leave me",
        "i feel so low today",
        "everything feels gloomy and sad",
    ],
    &[
        "i can not sleep at night",
        "awake at four am again",
        "insomnia is ruining me",
        "sleeping all day long",
        "barely slept for days",
    ],
    &[
        "i am always so tired",
        "no energy to get up",
        "exhausted all the time",
        "too drained to move",
        "fatigue never goes away",
    ],
    &[
        "i have not eaten all day",
        "no appetite at all",
        "binge eating again tonight",
        "starving myself on purpose",
        "lost so much weight",
    ],
    &[
        "i hate myself",
        "i am such a failure",
        "i am worthless and ugly",
        "nobody could love me",
        "i am a disappointment",
    ],
    &[
        "can not focus on anything",
        "my mind keeps wandering",
        "forgot what i was reading",
        "unable to concentrate in class",
        "brain fog all week",
    ],
    &[
        "i can not sit still",
        "restless and pacing around",
        "moving so slowly lately",
        "fidgeting nonstop",
        "my body feels sluggish",
    ],
    &[
        "i want to cut myself",
        "thinking about hurting myself",
        "the scars are back",
        "i just want to die",
        "ending it all sounds good",
    ],
];

const SARCASM_MARKERS: [&str; 8] = [
    "oh great",
    "yeah right",
    "lucky me",
    "simply perfect",
    "how lovely",
    "best moment ever",
    "wow so fun",
    "thanks a lot",
];

const METAPHOR_MARKERS: [&str; 8] = [
    "drowning in a dark sea",
    "my soul is a desert",
    "locked in a cage",
    "under a storm cloud",
    "a black hole inside",
    "heart made of stone",
    "carrying a mountain",
    "a ghost of me",
];

const NEUTRAL: [&str; 20] = [
    "watching the game tonight",
    "had coffee with friends",
    "new phone arrived today",
    "traffic was crazy this morning",
    "cooking pasta for dinner",
    "the weather is lovely",
    "going to the beach this weekend",
    "reading a good book",
    "my team won again",
    "finished the project at work",
    "happy birthday to my sister",
    "listening to music",
    "cleaning the house",
    "the movie was great",
    "walked the dog in the park",
    "what a perfect day",
    "fun night out",
    "thanks for the gift",
    "right back at you",
    "best pizza in town",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Neutral,
    Literal,
    Figurative,
}

#[derive(Debug, Clone, Copy)]
struct FigurativeFlags {
    metaphor: bool,
    sarcasm: bool,
}

fn weighted_index(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn symptom_phrase(rng: &mut Rng, symptom: usize, flags: Option<FigurativeFlags>) -> String {
    let Some(flags) = flags else {
        return String::from(*rng.choose(LITERAL[symptom]));
    };
    let surface = *rng.choose(LITERAL[(symptom + 1) % LITERAL.len()]);
    let mut parts: Vec<&str> = Vec::with_capacity(3);
    if flags.sarcasm {
        parts.push(rng.choose(&SARCASM_MARKERS));
    }
    parts.push(surface);
    if flags.metaphor {
        parts.push(rng.choose(&METAPHOR_MARKERS));
    }
    parts.join(" ")
}

/// Generates `n` examples. Class proportions are exact quotas (rounded),
/// assigned to positions by a seeded shuffle.
pub fn synth_generate(n: usize, seed: u64, spec: &SynthSpec) -> Result<Vec<Example>> {
    spec.validate()?;
    let root = Rng::new(seed);
    let n_neutral = libm::round(spec.non_depressive_fraction * n as f64) as usize;
    let n_depressive = n - n_neutral;
    let n_figurative = libm::round(spec.figurative_fraction * n_depressive as f64) as usize;
    let mut kinds: Vec<Kind> = Vec::with_capacity(n);
    kinds.extend(core::iter::repeat_n(Kind::Neutral, n_neutral));
    kinds.extend(core::iter::repeat_n(Kind::Figurative, n_figurative));
    kinds.extend(core::iter::repeat_n(Kind::Literal, n_depressive - n_figurative));
    root.fork(1).shuffle(&mut kinds);

    let mut rng = root.fork(2);
    let mut out = Vec::with_capacity(n);
    for kind in kinds {
        let mut primary = vec![false; SYMPTOM_NAMES.len()];
        let mut aux = vec![false; 3];
        let text = match kind {
            Kind::Neutral => {
                let k = 1 + rng.below(3);
                (0..k).map(|_| *rng.choose(&NEUTRAL)).collect::<Vec<_>>().join(" ")
            }
            Kind::Literal | Kind::Figurative => {
                let flags = (kind == Kind::Figurative).then(|| match weighted_index(&mut rng, &FIGURATIVE_MIX) {
                    0 => FigurativeFlags { metaphor: true, sarcasm: false },
                    1 => FigurativeFlags { metaphor: false, sarcasm: true },
                    _ => FigurativeFlags { metaphor: true, sarcasm: true },
                });
                let first = weighted_index(&mut rng, &SYMPTOM_WEIGHTS);
                let mut symptoms = vec![first];
                if rng.bernoulli(spec.multi_p) {
                    let mut weights = SYMPTOM_WEIGHTS;
                    weights[first] = 0.0;
                    symptoms.push(weighted_index(&mut rng, &weights));
                }
                let mut parts: Vec<String> = Vec::new();
                if rng.bernoulli(spec.filler_p) {
                    parts.push(String::from(*rng.choose(&NEUTRAL)));
                }
                let phrases: Vec<String> = symptoms.iter().map(|&s| symptom_phrase(&mut rng, s, flags)).collect();
                parts.push(phrases.join(" and "));
                if rng.bernoulli(spec.filler_p) {
                    parts.push(String::from(*rng.choose(&NEUTRAL)));
                }
                for s in symptoms {
                    primary[s] = true;
                }
                if let Some(f) = flags {
                    aux[METAPHOR] = f.metaphor;
                    aux[SARCASM] = f.sarcasm;
                }
                parts.join(" ")
            }
        };
        aux[OTHERS] = !(aux[METAPHOR] || aux[SARCASM]);
        out.push(Example::new(text, primary, aux));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figurative_share_of_depressive_examples() {
        let data = synth_generate(1000, 11, &SynthSpec::default()).unwrap();
        let dep: Vec<_> = data.iter().filter(|e| e.is_depressive()).collect();
        let fig = dep.iter().filter(|e| e.is_figurative()).count();
        let frac = fig as f64 / dep.len() as f64;
        assert!((0.35..=0.45).contains(&frac), "{frac}");
        assert!(data.iter().filter(|e| !e.is_depressive()).all(|e| !e.is_figurative()));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec::default();
        assert_eq!(synth_generate(200, 5, &spec).unwrap(), synth_generate(200, 5, &spec).unwrap());
        assert_ne!(synth_generate(200, 5, &spec).unwrap(), synth_generate(200, 6, &spec).unwrap());
    }

    #[test]
    fn zero_figurative_fraction_means_others_everywhere() {
        let spec = SynthSpec {
            figurative_fraction: 0.0,
            ..SynthSpec::default()
        };
        let data = synth_generate(300, 2, &spec).unwrap();
        assert!(data.iter().all(|e| e.aux_labels == [false, false, true]));
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        let spec = SynthSpec {
            multi_p: 1.5,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(10, 0, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn markers_do_not_reuse_literal_content_words() {
        let literal: Vec<&str> = LITERAL.iter().flat_map(|p| p.iter()).flat_map(|s| s.split(' ')).collect();
        let function_words = ["a", "in", "my", "of", "so", "me", "is"];
        for m in SARCASM_MARKERS.iter().chain(&METAPHOR_MARKERS) {
            for w in m.split(' ').filter(|w| !function_words.contains(w)) {
                assert!(!literal.contains(&w), "{w} from {m}");
            }
        }
    }
}
