//! Genre-conditioned plot generation.
//!
//! A control-code sentence is prepended to the user's starting words, the
//! generator samples `N` continuations with top-k decoding, and the genre
//! classifier picks the candidate most likely to belong to the requested
//! genre. The winning text is then split into per-scene sentences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Genre, Plot, PlotCandidate, PlotSentence};
use crate::gateway::{Backends, GatewayError, GenerationRequest, GenreClassifier, TextGenerator};
use crate::text::normalize_whitespace;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("starting words are empty")]
    EmptyStartingWords,
    #[error("text contains no sentences")]
    NoSentences,
    #[error("every generated candidate was empty")]
    AllCandidatesEmpty,
    #[error("no candidates to rescore")]
    NoCandidates,
    #[error("genre-free plots are not rescored")]
    GenreFreeRescore,
    #[error("no candidate could be classified: {0}")]
    NoScorableCandidate(#[source] GatewayError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Decoding parameters shared by every generation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub top_k: u32,
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            top_k: 4,
            max_new_tokens: 200,
            temperature: 1.0,
        }
    }
}

impl DecodingParams {
    pub fn request(&self, prompt: String, num_candidates: u32, seed: u64, stop: Option<&str>) -> GenerationRequest {
        GenerationRequest {
            prompt,
            max_new_tokens: self.max_new_tokens,
            top_k: self.top_k,
            temperature: self.temperature,
            num_candidates,
            seed,
            stop_marker: stop.map(str::to_string),
        }
    }
}

/// Sampling and rescoring settings. Defaults: 10 candidates, top-4 sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RescoreConfig {
    pub num_candidates: u32,
    pub top_k: u32,
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        let d = DecodingParams::default();
        Self {
            num_candidates: 10,
            top_k: d.top_k,
            max_new_tokens: d.max_new_tokens,
            temperature: d.temperature,
        }
    }
}

impl RescoreConfig {
    pub fn decoding(&self) -> DecodingParams {
        DecodingParams {
            top_k: self.top_k,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
        }
    }
}

/// Candidates after rescoring and the plot built from the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub plot: Plot,
    pub candidates: Vec<PlotCandidate>,
    pub selected: usize,
}

/// `"This is a <genre> plot. " + starting_words`, or the bare words for genre-free.
pub fn build_plot_prompt(genre: Genre, starting_words: &str) -> Result<String, PlotError> {
    if starting_words.trim().is_empty() {
        return Err(PlotError::EmptyStartingWords);
    }
    Ok(match genre.control_code() {
        Some(code) => format!("{code} {starting_words}"),
        None => starting_words.to_string(),
    })
}

fn clean_continuation(raw: &str, prompt: &str) -> String {
    let mut text = raw.strip_prefix(prompt).unwrap_or(raw).to_string();
    for g in Genre::CLASSES {
        if let Some(code) = g.control_code() {
            text = text.replace(&code, " ");
        }
    }
    normalize_whitespace(&text)
}

fn join_words(a: &str, b: &str) -> String {
    normalize_whitespace(&format!("{a} {b}"))
}

/// Samples `cfg.num_candidates` continuations of `context` with any control-code text removed.
pub fn sample_continuations(
    generator: &dyn TextGenerator,
    genre: Genre,
    context: &str,
    cfg: &RescoreConfig,
    seed: u64,
) -> Result<Vec<String>, PlotError> {
    let prompt = build_plot_prompt(genre, context)?;
    let request = cfg.decoding().request(prompt.clone(), cfg.num_candidates, seed, None);
    let raw = generator.generate_text(&request)?;
    Ok(raw.iter().map(|r| clean_continuation(r, &prompt)).collect())
}

/// Samples plot candidates; each text is the starting words plus a continuation.
pub fn generate_plot_candidates(
    generator: &dyn TextGenerator,
    genre: Genre,
    starting_words: &str,
    cfg: &RescoreConfig,
    seed: u64,
) -> Result<Vec<PlotCandidate>, PlotError> {
    let continuations = sample_continuations(generator, genre, starting_words, cfg, seed)?;
    if continuations.iter().all(String::is_empty) {
        return Err(PlotError::AllCandidatesEmpty);
    }
    Ok(continuations
        .iter()
        .enumerate()
        .map(|(i, c)| PlotCandidate {
            text: join_words(starting_words, c),
            candidate_index: i,
            target_genre_prob: None,
        })
        .collect())
}

/// Classifies every candidate, records its target-genre probability and
/// returns the position of the winner (first maximum). Candidates whose
/// classification fails keep `None` and are skipped.
pub fn score_candidates(
    classifier: &dyn GenreClassifier,
    candidates: &mut [PlotCandidate],
    genre: Genre,
) -> Result<usize, PlotError> {
    if genre.is_free() {
        return Err(PlotError::GenreFreeRescore);
    }
    if candidates.is_empty() {
        return Err(PlotError::NoCandidates);
    }
    let results: Vec<_> = candidates
        .par_iter()
        .map(|c| classifier.classify_genre(&c.text))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut last_error = None;
    for (pos, (cand, result)) in candidates.iter_mut().zip(results).enumerate() {
        match result {
            Ok(dist) => {
                let p = dist.prob(genre);
                cand.target_genre_prob = Some(p);
                if best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((pos, p));
                }
            }
            Err(e) => {
                log::warn!("candidate {} not classified: {e}", cand.candidate_index);
                cand.target_genre_prob = None;
                last_error = Some(e);
            }
        }
    }
    match best {
        Some((pos, _)) => Ok(pos),
        None => Err(PlotError::NoScorableCandidate(
            last_error.unwrap_or(GatewayError::EmptyText),
        )),
    }
}

/// Picks the candidate with the highest probability for `genre`; ties go to the lowest index.
pub fn rescore_and_select(
    classifier: &dyn GenreClassifier,
    mut candidates: Vec<PlotCandidate>,
    genre: Genre,
) -> Result<Selection, PlotError> {
    let selected = score_candidates(classifier, &mut candidates, genre)?;
    let plot = plot_from_text(genre, &candidates[selected].text)?;
    Ok(Selection {
        plot,
        candidates,
        selected,
    })
}

/// Full plot stage: prompt, sample, rescore. Genre-free runs draw one sample and skip rescoring.
pub fn generate_plot(
    backends: &Backends,
    genre: Genre,
    starting_words: &str,
    cfg: &RescoreConfig,
    seed: u64,
) -> Result<Selection, PlotError> {
    if genre.is_free() {
        let single = RescoreConfig {
            num_candidates: 1,
            ..*cfg
        };
        let candidates = generate_plot_candidates(backends.generator.as_ref(), genre, starting_words, &single, seed)?;
        let plot = plot_from_text(genre, &candidates[0].text)?;
        return Ok(Selection {
            plot,
            candidates,
            selected: 0,
        });
    }
    let candidates = generate_plot_candidates(backends.generator.as_ref(), genre, starting_words, cfg, seed)?;
    rescore_and_select(backends.classifier.as_ref(), candidates, genre)
}

pub fn plot_from_text(genre: Genre, text: &str) -> Result<Plot, PlotError> {
    let sentences = segment_plot(text)?;
    Ok(Plot {
        text: normalize_whitespace(text),
        genre,
        sentences,
    })
}

const ABBREVIATIONS: [&str; 7] = ["mr.", "dr.", "mrs.", "st.", "vs.", "e.g.", "i.e."];

/// Fragments shorter than this many characters are merged into a neighbour.
const MIN_SENTENCE_CHARS: usize = 3;

fn ends_with_abbreviation(fragment: &str) -> bool {
    let last = fragment.rsplit(' ').next().unwrap_or(fragment);
    let last = last.trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&last.to_lowercase().as_str())
}

/// Splits normalized text at terminators followed by a space or the end,
/// outside double quotes and not after a known abbreviation.
fn split_fragments(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut in_quote = false;
    let mut k = 0usize;
    while k < chars.len() {
        let (pos, c) = chars[k];
        match c {
            '"' => in_quote = !in_quote,
            '“' => in_quote = true,
            '”' => in_quote = false,
            '.' | '!' | '?' => {
                let mut end = k;
                while let Some(&(_, next)) = chars.get(end + 1) {
                    match next {
                        '.' | '!' | '?' | ')' | '\'' | '’' => end += 1,
                        '"' if in_quote => {
                            in_quote = false;
                            end += 1;
                        }
                        '”' => {
                            in_quote = false;
                            end += 1;
                        }
                        _ => break,
                    }
                }
                let at_break = chars.get(end + 1).is_none_or(|(_, ch)| ch.is_whitespace());
                let single_period = c == '.' && end == k;
                let abbreviated = single_period && ends_with_abbreviation(&text[start..=pos]);
                if at_break && !in_quote && !abbreviated {
                    let stop = chars[end].0 + chars[end].1.len_utf8();
                    let frag = text[start..stop].trim();
                    if !frag.is_empty() {
                        out.push(frag);
                    }
                    start = stop;
                }
                k = end;
            }
            _ => {}
        }
        k += 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Rule-based sentence segmentation of a plot.
pub fn segment_plot(text: &str) -> Result<Vec<PlotSentence>, PlotError> {
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(PlotError::NoSentences);
    }
    let mut merged: Vec<String> = Vec::new();
    let mut pending: Option<String> = None;
    for frag in split_fragments(&normalized) {
        let frag = match pending.take() {
            Some(p) => format!("{p} {frag}"),
            None => frag.to_string(),
        };
        if frag.chars().count() < MIN_SENTENCE_CHARS {
            match merged.last_mut() {
                Some(last) => {
                    last.push(' ');
                    last.push_str(&frag);
                }
                None => pending = Some(frag),
            }
        } else {
            merged.push(frag);
        }
    }
    merged.extend(pending);
    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(index, text)| PlotSentence { index, text })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GenreDistribution, MockClassifier, MockGenerator};

    fn texts(sentences: &[PlotSentence]) -> Vec<&str> {
        sentences.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn crime_prompt_has_control_code() {
        assert_eq!(
            build_plot_prompt(Genre::Crime, "Chicago detective Frank Sheppard").unwrap(),
            "This is a crime plot. Chicago detective Frank Sheppard"
        );
    }

    #[test]
    fn genre_free_prompt_is_unchanged() {
        assert_eq!(
            build_plot_prompt(Genre::GenreFree, "A quiet town").unwrap(),
            "A quiet town"
        );
    }

    #[test]
    fn blank_starting_words_rejected() {
        assert!(matches!(
            build_plot_prompt(Genre::SciFi, "  "),
            Err(PlotError::EmptyStartingWords)
        ));
    }

    #[test]
    fn segmentation_examples() {
        assert_eq!(
            texts(&segment_plot("A. B went home. He slept.").unwrap()),
            vec!["A. B went home.", "He slept."]
        );
        assert_eq!(texts(&segment_plot("Hello world.").unwrap()), vec!["Hello world."]);
        assert_eq!(
            texts(&segment_plot("Dr. Lee ran. Then fell!").unwrap()),
            vec!["Dr. Lee ran.", "Then fell!"]
        );
    }

    #[test]
    fn segmentation_respects_quotes_and_abbreviations() {
        assert_eq!(
            texts(&segment_plot(r#"She yells "Stop. Now!" and runs. Mr. Kim e.g. waits."#).unwrap()),
            vec![r#"She yells "Stop. Now!""#, "and runs.", "Mr. Kim e.g. waits."]
        );
        assert_eq!(
            texts(&segment_plot(r#"He said "go." Then left."#).unwrap()),
            vec![r#"He said "go.""#, "Then left."]
        );
    }

    #[test]
    fn segmentation_edge_cases() {
        assert!(matches!(segment_plot("   "), Err(PlotError::NoSentences)));
        assert_eq!(
            texts(&segment_plot("no terminator here").unwrap()),
            vec!["no terminator here"]
        );
        assert_eq!(
            texts(&segment_plot("Wait... what?! Ok.").unwrap()),
            vec!["Wait...", "what?!", "Ok."]
        );
        assert_eq!(
            texts(&segment_plot("He ran. B. Then.").unwrap()),
            vec!["He ran. B.", "Then."]
        );
        assert_eq!(
            texts(&segment_plot("3.5 million vanish.").unwrap()),
            vec!["3.5 million vanish."]
        );
    }

    #[test]
    fn indices_are_contiguous() {
        let s = segment_plot("One here. Two here. Three here.").unwrap();
        assert_eq!(s.iter().map(|x| x.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn candidates_are_deterministic_and_prefixed_by_starting_words() {
        let g = MockGenerator::default();
        let cfg = RescoreConfig::default();
        let a = generate_plot_candidates(&g, Genre::SciFi, "A lone pilot", &cfg, 5).unwrap();
        let b = generate_plot_candidates(&g, Genre::SciFi, "A lone pilot", &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for (i, c) in a.iter().enumerate() {
            assert_eq!(c.candidate_index, i);
            assert!(c.text.starts_with("A lone pilot"));
            assert!(!c.text.contains("This is a sci-fi plot."));
        }
        let one = RescoreConfig {
            num_candidates: 1,
            ..cfg
        };
        let single = generate_plot_candidates(&g, Genre::SciFi, "A lone pilot", &one, 5).unwrap();
        assert_eq!(single.len(), 1);
    }

    struct Echo;
    impl TextGenerator for Echo {
        fn generate_text(&self, r: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
            Ok(vec![
                format!("{} This is a war plot. More text.", r.prompt);
                r.num_candidates as usize
            ])
        }
    }

    #[test]
    fn echoed_prompt_and_control_codes_are_stripped() {
        let cfg = RescoreConfig {
            num_candidates: 2,
            ..Default::default()
        };
        let c = generate_plot_candidates(&Echo, Genre::SciFi, "Start", &cfg, 0).unwrap();
        assert_eq!(c[0].text, "Start More text.");
    }

    struct Blank;
    impl TextGenerator for Blank {
        fn generate_text(&self, r: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
            Ok(vec!["   ".to_string(); r.num_candidates as usize])
        }
    }

    #[test]
    fn all_empty_candidates_error() {
        let r = generate_plot_candidates(&Blank, Genre::War, "Start", &RescoreConfig::default(), 0);
        assert!(matches!(r, Err(PlotError::AllCandidatesEmpty)));
    }

    /// Classifier returning a fixed target probability per candidate text.
    struct Fixed(Vec<(String, f64)>);
    impl GenreClassifier for Fixed {
        fn classify_genre(&self, text: &str) -> Result<GenreDistribution, GatewayError> {
            let p = self
                .0
                .iter()
                .find(|(t, _)| t == text)
                .map(|(_, p)| *p)
                .ok_or(GatewayError::EmptyText)?;
            let rest = (1.0 - p) / 3.0;
            Ok(GenreDistribution::from_weights([p, rest, rest, rest]).unwrap())
        }
    }

    fn cands(texts: &[&str]) -> Vec<PlotCandidate> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| PlotCandidate {
                text: t.to_string(),
                candidate_index: i,
                target_genre_prob: None,
            })
            .collect()
    }

    #[test]
    fn first_maximum_wins_ties() {
        let cls = Fixed(vec![("a.".into(), 0.2), ("b.".into(), 0.9), ("c.".into(), 0.9)]);
        let sel = rescore_and_select(&cls, cands(&["a.", "b.", "c."]), Genre::Crime).unwrap();
        assert_eq!(sel.selected, 1);
        assert_eq!(sel.plot.text, "b.");
    }

    #[test]
    fn single_candidate_is_selected() {
        let cls = Fixed(vec![("only one.".into(), 0.01)]);
        let sel = rescore_and_select(&cls, cands(&["only one."]), Genre::Crime).unwrap();
        assert_eq!(sel.selected, 0);
    }

    #[test]
    fn failed_classifications_are_skipped() {
        let cls = Fixed(vec![("b.".into(), 0.3)]);
        let sel = rescore_and_select(&cls, cands(&["a.", "b."]), Genre::Crime).unwrap();
        assert_eq!(sel.selected, 1);
        assert_eq!(sel.candidates[0].target_genre_prob, None);
        let none = Fixed(vec![]);
        assert!(matches!(
            rescore_and_select(&none, cands(&["a."]), Genre::Crime),
            Err(PlotError::NoScorableCandidate(_))
        ));
    }

    #[test]
    fn genre_free_is_not_rescored() {
        let cls = MockClassifier::default();
        assert!(matches!(
            rescore_and_select(&cls, cands(&["a."]), Genre::GenreFree),
            Err(PlotError::GenreFreeRescore)
        ));
    }

    #[test]
    fn lexicon_counts_decide_the_winner() {
        // 0, 3 and 5 sci-fi lexicon hits respectively.
        let texts = [
            "A quiet morning in the town.",
            "The alien robot boards the spaceship.",
            "The alien robot boards the spaceship near the planet nebula.",
        ];
        let sel = rescore_and_select(&MockClassifier::default(), cands(&texts), Genre::SciFi).unwrap();
        assert_eq!(sel.selected, 2);
        let probs: Vec<f64> = sel.candidates.iter().map(|c| c.target_genre_prob.unwrap()).collect();
        assert!((probs[0] - 0.25).abs() < 1e-12);
        assert!((probs[1] - 3.1 / 3.4).abs() < 1e-12);
        assert!((probs[2] - 5.1 / 5.4).abs() < 1e-12);
    }

    #[test]
    fn full_plot_stage_for_genre_free_draws_one_sample() {
        let sel = generate_plot(
            &Backends::mock(),
            Genre::GenreFree,
            "A quiet town",
            &RescoreConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(sel.candidates.len(), 1);
        assert_eq!(sel.candidates[0].target_genre_prob, None);
        assert!(sel.plot.text.starts_with("A quiet town"));
    }
}
