//! Deterministic synthetic QA data for tests and smoke runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::QAPair;

const SUBJECTS: &[&str] = &[
    "the eiffel tower",
    "mount everest",
    "the nile",
    "jupiter",
    "the amazon",
    "sahara desert",
    "lake baikal",
    "the moon",
    "mars",
    "antarctica",
    "the pacific ocean",
    "mount fuji",
    "the danube",
    "iceland",
    "the great barrier reef",
    "venus",
];
const FACTS: &[&str] = &[
    "was built in 1889",
    "is 8848 metres tall",
    "flows north into the sea",
    "has 95 known moons",
    "carries more water than any river",
    "covers 9.2 million square km",
    "is over 1600 m deep",
    "orbits at 384,400 km",
    "has two small moons",
    "holds 70% of fresh water",
    "is the largest ocean",
    "last erupted in 1707",
    "passes through ten countries",
    "sits on a mid-ocean ridge",
    "is visible from space",
    "rotates backwards",
];
const FILLER: &[&str] = &[
    "many tourists visit every year",
    "the weather there is often cold",
    "scientists study it closely",
    "it appears in several films",
    "local legends describe it",
    "maps from 1500 show it",
    "it is a popular subject of paintings",
    "records were kept by monks",
];
const TEMPLATES: &[&str] = &[
    "what is notable about {}?",
    "tell me a fact about {}.",
    "why is {} famous?",
];

/// `n_questions` questions with `per_question` candidates each; exactly one
/// candidate per question is correct. Same seed, same output.
pub fn synthetic_pairs(n_questions: usize, per_question: usize, seed: u64) -> Vec<QAPair> {
    assert!(
        per_question >= 2,
        "need a correct and an incorrect candidate"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_questions * per_question);
    for q in 0..n_questions {
        let s = q % SUBJECTS.len();
        let subject = SUBJECTS[s];
        let question = TEMPLATES[rng.gen_range(0..TEMPLATES.len())].replace("{}", subject);
        let correct_slot = rng.gen_range(0..per_question);
        for a in 0..per_question {
            let (answer, label) = if a == correct_slot {
                (format!("{} {}.", capitalize(subject), FACTS[s]), 1)
            } else {
                let other = (s + 1 + rng.gen_range(0..SUBJECTS.len() - 1)) % SUBJECTS.len();
                let tail = FILLER.choose(&mut rng).expect("non-empty");
                (
                    format!(
                        "{} {}; {}.",
                        capitalize(SUBJECTS[other]),
                        FACTS[other],
                        tail
                    ),
                    0,
                )
            };
            out.push(QAPair {
                qid: format!("Q{q}"),
                aid: format!("Q{q}-A{a}"),
                question: question.clone(),
                answer,
                label,
            });
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = synthetic_pairs(10, 5, 3);
        assert_eq!(a.len(), 50);
        assert_eq!(a, synthetic_pairs(10, 5, 3));
        assert_ne!(a, synthetic_pairs(10, 5, 4));
        for q in a.chunks(5) {
            assert_eq!(q.iter().filter(|p| p.label == 1).count(), 1);
        }
    }
}
