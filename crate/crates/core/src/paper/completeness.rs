use std::collections::BTreeSet;

use super::document::PaperDocument;
use crate::citation::mentions;

/// Head nouns that make a phrase technical.
const LEXICON: &[&str] = &[
    "loss", "sampling", "sampler", "encoding", "encoder", "field", "network", "grid", "plane", "factorization",
    "decomposition", "regularization", "regularizer", "rendering", "embedding", "representation", "volume", "mlp",
    "voxel", "interpolation", "estimator", "module", "scheduler", "schedule", "prior", "tensor", "feature",
    "distillation", "optimization", "parameterization", "contraction",
];

const STOP: &[&str] = &[
    "a", "an", "the", "of", "and", "or", "to", "in", "on", "for", "with", "by", "from", "as", "at", "is", "are",
    "be", "we", "our", "this", "that", "these", "which", "it", "its", "via", "into", "while", "than", "both", "each",
    "new", "novel", "also", "use", "uses", "using", "propose", "present", "introduce", "achieve", "achieves",
    "reduce", "reduces", "improve", "improves", "enable", "enables", "yield", "yields", "allow", "allows",
    "require", "requires", "produce", "produces", "outperform", "outperforms", "make", "makes", "show", "shows",
];

fn word_stem(w: &str) -> &str {
    w.strip_suffix("es")
        .filter(|b| b.ends_with("ss"))
        .or_else(|| w.strip_suffix('s').filter(|b| b.len() >= 3 && !b.ends_with('s')))
        .unwrap_or(w)
}

pub(crate) fn in_lexicon(word: &str) -> bool {
    let w = word.to_lowercase();
    let head = w.rsplit('-').next().unwrap_or(&w);
    LEXICON.contains(&word_stem(head))
}

/// Two-token phrases `modifier head` with a lexicon head, in order of
/// appearance, lowercased and deduplicated.
pub fn keyphrases(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for sentence in crate::citation::sentences(text) {
        let words: Vec<&str> = sentence
            .split(|c: char| !(c.is_alphanumeric() || c == '-'))
            .filter(|w| !w.is_empty())
            .collect();
        for pair in words.windows(2) {
            let (m, h) = (pair[0], pair[1]);
            let content = |w: &str| !STOP.contains(&w.to_lowercase().as_str()) && w.chars().any(char::is_alphabetic);
            if content(m) && content(h) && in_lexicon(h) {
                let phrase = format!("{} {}", m.to_lowercase(), h.to_lowercase());
                if seen.insert(phrase.clone()) {
                    out.push(phrase);
                }
            }
        }
    }
    out
}

/// Abstract keyphrases that the body never mentions. Empty means
/// complete; a document without an abstract has nothing to check.
pub fn validate_completeness(doc: &PaperDocument) -> Vec<String> {
    let Some(abstract_text) = doc.abstract_text() else {
        return Vec::new();
    };
    let body = doc.body_text();
    keyphrases(&abstract_text)
        .into_iter()
        .filter(|p| !mentions(&body, p))
        .collect()
}
