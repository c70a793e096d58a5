//! Per-genre token lists backing the mock generator and classifier.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Genre;

const BUILTIN: [&str; 4] = [
    include_str!("../../data/lexicons/crime.json"),
    include_str!("../../data/lexicons/sci-fi.json"),
    include_str!("../../data/lexicons/war.json"),
    include_str!("../../data/lexicons/romance.json"),
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("reading lexicon {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing lexicon {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("lexicon for {0} must hold lowercase single-word tokens")]
    BadToken(Genre),
    #[error("token `{token}` appears in more than one lexicon")]
    Overlap { token: String },
    #[error("expected exactly one lexicon for each of the four genres")]
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub genre: Genre,
    pub tokens: Vec<String>,
}

impl Lexicon {
    /// The shipped lexicons, one per genre class in canonical order.
    pub fn builtin() -> Vec<Lexicon> {
        let lexicons: Vec<Lexicon> = BUILTIN
            .iter()
            .map(|src| serde_json::from_str(src).expect("builtin lexicon is valid JSON"))
            .collect();
        Self::check_set(lexicons).expect("builtin lexicons are consistent")
    }

    /// Loads `*.json` lexicon documents from a directory.
    pub fn load_dir(dir: &Path) -> Result<Vec<Lexicon>, LexiconError> {
        let io = |source| LexiconError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let lex: Lexicon = serde_json::from_str(&text).map_err(|source| LexiconError::Parse {
                path: path.display().to_string(),
                source,
            })?;
            out.push(lex);
        }
        Self::check_set(out)
    }

    /// Orders lexicons by genre class and checks the set is complete and disjoint.
    pub fn check_set(mut lexicons: Vec<Lexicon>) -> Result<Vec<Lexicon>, LexiconError> {
        lexicons.sort_by_key(|l| l.genre);
        let genres: Vec<Genre> = lexicons.iter().map(|l| l.genre).collect();
        if genres != Genre::CLASSES {
            return Err(LexiconError::Incomplete);
        }
        let mut seen: HashMap<&str, Genre> = HashMap::new();
        for lex in &lexicons {
            for t in &lex.tokens {
                let ok = !t.is_empty() && t.chars().all(|c| c.is_alphanumeric() && !c.is_uppercase());
                if !ok {
                    return Err(LexiconError::BadToken(lex.genre));
                }
                if seen.insert(t, lex.genre).is_some_and(|g| g != lex.genre) {
                    return Err(LexiconError::Overlap { token: t.clone() });
                }
            }
        }
        Ok(lexicons)
    }
}
