//! Automatic text metrics: Distinct-n, Repeat@8, corpus BLEU, sentence
//! similarity, Genre-ACC and perplexity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Genre;
use crate::gateway::{cosine, Backends, GatewayError, GenreClassifier, PerplexityScorer, SentenceEmbedder};

pub const REPEAT_WINDOW: usize = 8;
pub const BLEU_MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no sequence is long enough to contain a {0}-gram")]
    NoNgrams(usize),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("{left} candidates but {right} references or targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("candidate {0} is empty")]
    EmptyCandidate(usize),
    #[error("no inputs")]
    EmptyInput,
    #[error("genre-free texts have no target class")]
    GenreFreeTarget,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("metric `{0}` needs references")]
    MissingReferences(&'static str),
    #[error("metric `genre` needs a target genre")]
    MissingTarget,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Lowercases, splits on whitespace, and makes every punctuation character
/// its own token. Runs of letters and digits stay together.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Unique n-grams over all n-gram occurrences, pooled across the corpus.
pub fn distinct_n<S: AsRef<str>>(corpus: &[Vec<S>], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::NoNgrams(n));
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0usize;
    for seq in corpus {
        for w in seq.windows(n) {
            total += 1;
            seen.insert(w.iter().map(AsRef::as_ref).collect());
        }
    }
    if total == 0 {
        return Err(MetricError::NoNgrams(n));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// Percentage of tokens equal to one of the 8 tokens before them.
pub fn repeat_rate<S: AsRef<str> + PartialEq>(seq: &[S]) -> Result<f64, MetricError> {
    if seq.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let repeats = (1..seq.len())
        .filter(|&i| seq[i.saturating_sub(REPEAT_WINDOW)..i].contains(&seq[i]))
        .count();
    Ok(100.0 * repeats as f64 / seq.len() as f64)
}

/// Mean of per-sequence repeat rates.
pub fn mean_repeat_rate<S: AsRef<str> + PartialEq>(corpus: &[Vec<S>]) -> Result<f64, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut sum = 0.0;
    for seq in corpus {
        sum += repeat_rate(seq)?;
    }
    Ok(sum / corpus.len() as f64)
}

fn ngram_counts<S: AsRef<str>>(seq: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in seq.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU-4 with clipped precisions pooled over the corpus. A zero
/// numerator becomes `1 / (2 * denominator)`.
pub fn corpus_bleu<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>]) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if let Some(i) = candidates.iter().position(Vec::is_empty) {
        return Err(MetricError::EmptyCandidate(i));
    }
    let mut matched = [0usize; BLEU_MAX_ORDER];
    let mut possible = [0usize; BLEU_MAX_ORDER];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, reference) in candidates.iter().zip(references) {
        c += cand.len();
        r += reference.len();
        for n in 1..=BLEU_MAX_ORDER {
            let refs = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                matched[n - 1] += count.min(refs.get(&gram).copied().unwrap_or(0));
            }
            possible[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let log_mean = (0..BLEU_MAX_ORDER)
        .map(|i| {
            let denom = possible[i].max(1) as f64;
            let p = if matched[i] == 0 {
                1.0 / (2.0 * denom)
            } else {
                matched[i] as f64 / denom
            };
            p.ln()
        })
        .sum::<f64>()
        / BLEU_MAX_ORDER as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * log_mean.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub score: f64,
    /// One side embedded to the zero vector; the score is 0 by convention.
    pub degenerate: bool,
}

pub fn sentence_similarity(embedder: &dyn SentenceEmbedder, a: &str, b: &str) -> Result<Similarity, MetricError> {
    if a.trim().is_empty() || b.trim().is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let e = embedder.embed_texts(&[a.to_string(), b.to_string()])?;
    let degenerate = e[0].is_zero() || e[1].is_zero();
    Ok(Similarity {
        score: if degenerate {
            0.0
        } else {
            cosine(&e[0].values, &e[1].values)
        },
        degenerate,
    })
}

/// Mean pairwise similarity; degenerate pairs count as 0.
pub fn mean_sentence_similarity(
    embedder: &dyn SentenceEmbedder,
    left: &[String],
    right: &[String],
) -> Result<f64, MetricError> {
    if left.len() != right.len() {
        return Err(MetricError::LengthMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    if left.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let scores = left
        .par_iter()
        .zip(right)
        .map(|(a, b)| sentence_similarity(embedder, a, b).map(|s| s.score))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Fraction of texts whose classifier argmax is the target; ties are wrong.
pub fn genre_accuracy(
    classifier: &dyn GenreClassifier,
    texts: &[String],
    targets: &[Genre],
) -> Result<f64, MetricError> {
    if texts.len() != targets.len() {
        return Err(MetricError::LengthMismatch {
            left: texts.len(),
            right: targets.len(),
        });
    }
    if texts.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if targets.iter().any(|g| g.is_free()) {
        return Err(MetricError::GenreFreeTarget);
    }
    let hits = texts
        .par_iter()
        .zip(targets)
        .map(|(t, g)| Ok(classifier.classify_genre(t)?.argmax() == Some(*g)))
        .collect::<Result<Vec<bool>, GatewayError>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
}

/// Token-weighted perplexity over all texts.
pub fn mean_perplexity(scorer: &dyn PerplexityScorer, texts: &[String]) -> Result<f64, MetricError> {
    if texts.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let scores = texts
        .par_iter()
        .map(|t| scorer.score_perplexity(t))
        .collect::<Result<Vec<_>, _>>()?;
    let tokens: f64 = scores.iter().map(|s| f64::from(s.token_count)).sum();
    let nll: f64 = scores
        .iter()
        .map(|s| s.mean_nll_per_token * f64::from(s.token_count))
        .sum();
    Ok((nll / tokens).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Distinct,
    Repeat,
    Bleu,
    SentSim,
    Genre,
    Ppl,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Distinct,
        Metric::Repeat,
        Metric::Bleu,
        Metric::SentSim,
        Metric::Genre,
        Metric::Ppl,
    ];
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "distinct" => Ok(Metric::Distinct),
            "repeat" => Ok(Metric::Repeat),
            "bleu" => Ok(Metric::Bleu),
            "sentsim" => Ok(Metric::SentSim),
            "genre" | "genreacc" => Ok(Metric::Genre),
            "ppl" | "perplexity" => Ok(Metric::Ppl),
            _ => Err(MetricError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub distinct: BTreeMap<usize, f64>,
    pub repeat_pct: Option<f64>,
    pub bleu: Option<f64>,
    pub sent_sim: Option<f64>,
    pub genre_acc: Option<f64>,
    pub ppl: Option<f64>,
}

/// Inputs for [`evaluate`]; references pair with candidates by position.
#[derive(Debug, Clone, Default)]
pub struct EvalInput {
    pub candidates: Vec<String>,
    pub references: Option<Vec<String>>,
    pub target: Option<Genre>,
}

pub fn evaluate(backends: &Backends, input: &EvalInput, metrics: &[Metric]) -> Result<MetricReport, MetricError> {
    if input.candidates.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let cand_tokens: Vec<Vec<String>> = input.candidates.iter().map(|t| tokenize(t)).collect();
    let mut report = MetricReport::default();
    for metric in metrics {
        match metric {
            Metric::Distinct => {
                for n in 1..=3 {
                    report.distinct.insert(n, distinct_n(&cand_tokens, n)?);
                }
            }
            Metric::Repeat => report.repeat_pct = Some(mean_repeat_rate(&cand_tokens)?),
            Metric::Bleu => {
                let refs = input
                    .references
                    .as_ref()
                    .ok_or(MetricError::MissingReferences("bleu"))?;
                let ref_tokens: Vec<Vec<String>> = refs.iter().map(|t| tokenize(t)).collect();
                report.bleu = Some(corpus_bleu(&cand_tokens, &ref_tokens)?);
            }
            Metric::SentSim => {
                let refs = input
                    .references
                    .as_ref()
                    .ok_or(MetricError::MissingReferences("sentsim"))?;
                report.sent_sim = Some(mean_sentence_similarity(
                    backends.embedder.as_ref(),
                    &input.candidates,
                    refs,
                )?);
            }
            Metric::Genre => {
                let target = input.target.ok_or(MetricError::MissingTarget)?;
                let targets = vec![target; input.candidates.len()];
                report.genre_acc = Some(genre_accuracy(
                    backends.classifier.as_ref(),
                    &input.candidates,
                    &targets,
                )?);
            }
            Metric::Ppl => report.ppl = Some(mean_perplexity(backends.scorer.as_ref(), &input.candidates)?),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::lexicon::Lexicon;
    use crate::gateway::{Embedding, MockClassifier, MockEmbedder, PerplexityScore};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("Hello, World!  It's 9pm."),
            vec!["hello", ",", "world", "!", "it", "'", "s", "9pm", "."]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n(&[toks("a a a a")], 1).unwrap(), 0.25);
        assert_eq!(distinct_n(&[toks("a b a")], 2).unwrap(), 1.0);
        assert!(matches!(distinct_n(&[toks("a")], 2), Err(MetricError::NoNgrams(2))));
    }

    #[test]
    fn distinct_pools_across_corpus() {
        // four unigrams in total, two unique
        assert_eq!(distinct_n(&[toks("a b"), toks("a b")], 1).unwrap(), 0.5);
    }

    #[test]
    fn repeat_examples() {
        assert_eq!(repeat_rate(&toks("a b c d")).unwrap(), 0.0);
        assert_eq!(repeat_rate(&toks("a a")).unwrap(), 50.0);
        assert_eq!(repeat_rate(&toks("a b c d e f g h i a")).unwrap(), 0.0);
        assert_eq!(repeat_rate(&toks("a b c d e f g h a")).unwrap(), 100.0 / 9.0);
        assert!(matches!(repeat_rate::<String>(&[]), Err(MetricError::EmptySequence)));
    }

    #[test]
    fn bleu_examples() {
        let x = vec![toks("the cat sat on the mat")];
        assert_eq!(corpus_bleu(&x, &x).unwrap(), 1.0);
        let bp = corpus_bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
        assert!((bp - (-0.25f64).exp()).abs() < 1e-12);
        assert!(matches!(
            corpus_bleu(&[toks("a")], &[]),
            Err(MetricError::LengthMismatch { .. })
        ));
        assert!(matches!(
            corpus_bleu(&[Vec::<String>::new()], &[toks("a")]),
            Err(MetricError::EmptyCandidate(0))
        ));
    }

    #[test]
    fn bleu_smoothing_floor() {
        // single 8-token disjoint pair: precisions 1/16, 1/14, 1/12, 1/10
        let one = corpus_bleu(&[toks("a b c d e f g h")], &[toks("q r s t u v w x")]).unwrap();
        let expected = (1.0f64 / (16.0 * 14.0 * 12.0 * 10.0)).powf(0.25);
        assert!((one - expected).abs() < 1e-12);
        let cands = vec![toks("a b c d e f g h"), toks("i j k l m n o p")];
        let refs = vec![toks("q r s t u v w x"), toks("y z aa bb cc dd ee ff")];
        assert!(corpus_bleu(&cands, &refs).unwrap() < 0.05);
    }

    struct Table(Vec<(String, Vec<f64>)>);
    impl SentenceEmbedder for Table {
        fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
            Ok(texts
                .iter()
                .map(|t| {
                    let v = &self.0.iter().find(|(k, _)| k == t).unwrap().1;
                    Embedding::normalized(v.clone())
                })
                .collect())
        }
    }

    #[test]
    fn similarity_examples() {
        let emb = MockEmbedder::default();
        let s = sentence_similarity(&emb, "the war is over", "the war is over").unwrap();
        assert!((s.score - 1.0).abs() < 1e-6);
        let t = Table(vec![
            ("x".into(), vec![1.0, 0.0]),
            ("y".into(), vec![0.0, 1.0]),
            ("z".into(), vec![0.5f64.sqrt(), 0.5f64.sqrt()]),
        ]);
        assert_eq!(sentence_similarity(&t, "x", "y").unwrap().score, 0.0);
        assert!((sentence_similarity(&t, "x", "z").unwrap().score - 0.5f64.sqrt()).abs() < 1e-6);
        let d = sentence_similarity(&emb, "...", "words here").unwrap();
        assert!(d.degenerate);
        assert_eq!(d.score, 0.0);
    }

    #[test]
    fn genre_accuracy_fixture() {
        let lex = Lexicon::builtin();
        let text_for = |g: Genre| {
            let l = lex.iter().find(|l| l.genre == g).unwrap();
            l.tokens[..3].join(" ")
        };
        let c = MockClassifier::new(lex.clone());
        let texts = vec![
            text_for(Genre::Crime),
            text_for(Genre::War),
            text_for(Genre::Romance),
            text_for(Genre::SciFi),
        ];
        let targets = [Genre::Crime, Genre::War, Genre::Romance, Genre::Crime];
        assert_eq!(genre_accuracy(&c, &texts, &targets).unwrap(), 0.75);
        assert_eq!(genre_accuracy(&c, &texts[..1], &targets[..1]).unwrap(), 1.0);
        // a tie never counts
        assert_eq!(
            genre_accuracy(&c, &["nothing".to_string()], &[Genre::Crime]).unwrap(),
            0.0
        );
        assert!(matches!(
            genre_accuracy(&c, &texts[..1], &[Genre::GenreFree]),
            Err(MetricError::GenreFreeTarget)
        ));
    }

    struct Fixed(HashMap<String, PerplexityScore>);
    impl PerplexityScorer for Fixed {
        fn score_perplexity(&self, text: &str) -> Result<PerplexityScore, GatewayError> {
            Ok(self.0[text])
        }
    }

    #[test]
    fn perplexity_is_token_weighted() {
        let s = |nll, n| PerplexityScore {
            mean_nll_per_token: nll,
            token_count: n,
        };
        let f = Fixed(HashMap::from([
            ("a".to_string(), s(1.0, 10)),
            ("b".to_string(), s(3.0, 30)),
            ("z".to_string(), s(0.0, 4)),
        ]));
        let ab = mean_perplexity(&f, &["a".into(), "b".into()]).unwrap();
        assert!((ab - 2.5f64.exp()).abs() < 1e-9);
        assert_eq!(ab, mean_perplexity(&f, &["b".into(), "a".into()]).unwrap());
        assert_eq!(mean_perplexity(&f, &["z".into()]).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_fills_requested_fields() {
        let input = EvalInput {
            candidates: vec!["the detective follows the money.".into()],
            references: Some(vec!["the detective follows the money.".into()]),
            target: Some(Genre::Crime),
        };
        let r = evaluate(&Backends::mock(), &input, &Metric::ALL).unwrap();
        assert_eq!(r.distinct.len(), 3);
        assert_eq!(r.bleu, Some(1.0));
        assert!(r.sent_sim.unwrap() > 0.999);
        assert!(r.ppl.unwrap() >= 1.0);
        assert!(r.repeat_pct.is_some() && r.genre_acc.is_some());
        let no_refs = EvalInput {
            references: None,
            ..input
        };
        assert!(matches!(
            evaluate(&Backends::mock(), &no_refs, &[Metric::Bleu]),
            Err(MetricError::MissingReferences("bleu"))
        ));
        assert_eq!("sent-sim".parse::<Metric>().unwrap(), Metric::SentSim);
    }

    proptest! {
        #[test]
        fn bleu_identity(corpus in prop::collection::vec(prop::collection::vec("[a-e]", 4..12), 1..5)) {
            prop_assert_eq!(corpus_bleu(&corpus, &corpus).unwrap(), 1.0);
        }

        #[test]
        fn bleu_permutation_invariant(
            pairs in prop::collection::vec((prop::collection::vec("[a-d]", 1..8), prop::collection::vec("[a-d]", 0..8)), 1..6),
            rot in 0usize..6,
        ) {
            let (c, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let mut rotated = pairs.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            let (c2, r2): (Vec<_>, Vec<_>) = rotated.into_iter().unzip();
            let a = corpus_bleu(&c, &r).unwrap();
            let b = corpus_bleu(&c2, &r2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ranges_hold(seq in prop::collection::vec("[a-f]", 1..40)) {
            let r = repeat_rate(&seq).unwrap();
            prop_assert!((0.0..=100.0).contains(&r));
            let d = distinct_n(std::slice::from_ref(&seq), 1).unwrap();
            prop_assert!(d > 0.0 && d <= 1.0);
        }

        #[test]
        fn repeating_a_window_token_never_lowers_rate(seq in prop::collection::vec("[a-f]", 1..40), back in 0usize..8) {
            let before = repeat_rate(&seq).unwrap();
            let pick = seq[seq.len() - 1 - back.min(seq.len() - 1)].clone();
            let mut longer = seq.clone();
            longer.push(pick);
            prop_assert!(repeat_rate(&longer).unwrap() >= before);
        }
    }
}
