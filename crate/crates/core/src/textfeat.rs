//! Text-derived views: TF-IDF word 1–4-grams, lexicon category proportions
//! and the speaker one-hot block appended to them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::corpus::{Claim, FeatureView};
use crate::error::{Result, VeriflowError};

/// Number of categories in the psycholinguistic lexicon the views are sized for.
pub const LEXICON_CATEGORIES: usize = 64;

pub const NGRAM_RANGE: (usize, usize) = (1, 4);

const STUB_LEXICON: &str = include_str!("../data/lexicon_stub.tsv");

/// Lower-case, drop punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

fn ngrams(tokens: &[String], (lo, hi): (usize, usize)) -> Vec<String> {
    let mut out = Vec::new();
    for n in lo..=hi {
        if n > tokens.len() {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    pub ngram_range: (usize, usize),
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub norm: bool,
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn idf_of(&self, ngram: &str) -> Option<f64> {
        self.vocabulary.get(ngram).map(|&i| self.idf[i])
    }
}

/// Vocabulary is every n-gram in `texts`; `idf = ln((1 + N) / (1 + df)) + 1`.
/// Indices follow lexicographic n-gram order.
pub fn fit_tfidf<S: AsRef<str>>(texts: &[S]) -> Result<TfidfModel> {
    if texts.is_empty() {
        return Err(VeriflowError::Empty("tf-idf corpus".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let distinct: HashSet<String> = ngrams(&tokenize(text.as_ref()), NGRAM_RANGE)
            .into_iter()
            .collect();
        for gram in distinct {
            *df.entry(gram).or_default() += 1;
        }
    }
    let n_docs = texts.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (i, (gram, count)) in df.into_iter().enumerate() {
        idf.push(((1.0 + n_docs) / (1.0 + count as f64)).ln() + 1.0);
        vocabulary.insert(gram, i);
    }
    Ok(TfidfModel {
        ngram_range: NGRAM_RANGE,
        vocabulary,
        idf,
        norm: true,
    })
}

/// Raw term frequency times idf, then L2-normalized when the model says so.
/// Out-of-vocabulary n-grams are dropped.
pub fn tfidf_vector(model: &TfidfModel, text: &str) -> SparseVector {
    let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
    for gram in ngrams(&tokenize(text), model.ngram_range) {
        if let Some(&i) = model.vocabulary.get(&gram) {
            *tf.entry(i).or_default() += 1.0;
        }
    }
    let mut vector = SparseVector {
        dim: model.dim(),
        entries: tf.into_iter().map(|(i, f)| (i, f * model.idf[i])).collect(),
    };
    if model.norm {
        let norm = vector.norm();
        if norm > 0.0 {
            vector.entries.iter_mut().for_each(|(_, v)| *v /= norm);
        }
    }
    vector
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Word(String),
    Prefix(String),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Pattern> {
        let raw = raw.trim().to_lowercase();
        let (stem, wildcard) = match raw.strip_suffix('*') {
            Some(stem) => (stem.to_string(), true),
            None => (raw.clone(), false),
        };
        if stem.is_empty() || stem.contains('*') {
            return Err(VeriflowError::parse("lexicon", format!("bad pattern {raw:?}")));
        }
        Ok(if wildcard {
            Pattern::Prefix(stem)
        } else {
            Pattern::Word(stem)
        })
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Word(w) => token == w,
            Pattern::Prefix(p) => token.starts_with(p.as_str()),
        }
    }
}

/// Word categories with literal and trailing-wildcard patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub categories: Vec<String>,
    pub patterns: Vec<Vec<Pattern>>,
}

impl Lexicon {
    pub fn new(categories: Vec<(String, Vec<Pattern>)>) -> Self {
        let (categories, patterns) = categories.into_iter().unzip();
        Lexicon {
            categories,
            patterns,
        }
    }

    /// Appends pattern-less categories until there are `size` of them.
    pub fn padded_to(mut self, size: usize) -> Self {
        while self.categories.len() < size {
            self.categories.push(format!("unused{}", self.categories.len()));
            self.patterns.push(Vec::new());
        }
        self
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// The small compatible-format lexicon bundled with the crate.
    pub fn stub() -> Lexicon {
        Lexicon::parse(STUB_LEXICON).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let raw = fs::read_to_string(path).map_err(|e| VeriflowError::io(path, e))?;
        Lexicon::parse(&raw)
    }

    /// TSV with header `category<TAB>pattern`, optionally preceded by a
    /// `# categories: N` line. Categories keep first-appearance order; a row
    /// with an empty pattern declares a category without patterns.
    pub fn parse(raw: &str) -> Result<Lexicon> {
        let mut lines = raw.lines().filter(|l| !l.trim().is_empty()).peekable();
        let mut declared = None;
        if let Some(first) = lines.peek() {
            if let Some(rest) = first.trim().strip_prefix('#') {
                let count = rest
                    .trim()
                    .strip_prefix("categories:")
                    .ok_or_else(|| VeriflowError::parse("lexicon", "expected '# categories: N'"))?;
                declared = Some(
                    count
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| VeriflowError::parse("lexicon header", e))?,
                );
                lines.next();
            }
        }
        match lines.next() {
            Some(h) if h.trim_end() == "category\tpattern" => {}
            _ => return Err(VeriflowError::parse("lexicon", "missing 'category<TAB>pattern' header")),
        }

        let mut order: Vec<(String, Vec<Pattern>)> = Vec::new();
        let mut position: HashMap<String, usize> = HashMap::new();
        for (i, line) in lines.enumerate() {
            let (category, pattern) = line
                .split_once('\t')
                .ok_or_else(|| VeriflowError::parse(format!("lexicon row {}", i + 1), "missing tab"))?;
            let slot = *position.entry(category.to_string()).or_insert_with(|| {
                order.push((category.to_string(), Vec::new()));
                order.len() - 1
            });
            if !pattern.trim().is_empty() {
                order[slot].1.push(Pattern::parse(pattern)?);
            }
        }
        if let Some(n) = declared {
            if n != order.len() {
                return Err(VeriflowError::DimensionMismatch {
                    context: "lexicon categories".into(),
                    expected: n,
                    actual: order.len(),
                });
            }
        }
        Ok(Lexicon::new(order))
    }
}

/// Share of tokens matching each category; a token may count for several categories.
pub fn lexicon_proportions(lexicon: &Lexicon, text: &str) -> Vec<f64> {
    let tokens = tokenize(text);
    let mut out = vec![0.0; lexicon.len()];
    if tokens.is_empty() {
        return out;
    }
    for (slot, patterns) in out.iter_mut().zip(&lexicon.patterns) {
        let hits = tokens
            .iter()
            .filter(|t| patterns.iter().any(|p| p.matches(t)))
            .count();
        *slot = hits as f64 / tokens.len() as f64;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerEncoder {
    pub roster: Vec<String>,
}

impl SpeakerEncoder {
    pub fn new(roster: &[String]) -> Self {
        SpeakerEncoder {
            roster: roster.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.roster.len()
    }

    /// All zeros for a speaker outside the roster.
    pub fn encode(&self, speaker: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.roster.len()];
        if let Some(i) = self.roster.iter().position(|s| s == speaker) {
            out[i] = 1.0;
        }
        out
    }
}

/// `[lexicon proportions ; speaker one-hot]`.
pub fn liwc_speaker_view(lexicon: &Lexicon, encoder: &SpeakerEncoder, claim: &Claim) -> Vec<f64> {
    let mut out = lexicon_proportions(lexicon, &claim.text);
    out.extend(encoder.encode(&claim.speaker));
    out
}

pub fn liwc_speaker_feature_view<'a>(
    name: &str,
    lexicon: &Lexicon,
    encoder: &SpeakerEncoder,
    claims: impl IntoIterator<Item = &'a Claim>,
) -> FeatureView {
    let mut view = FeatureView::new(name, lexicon.len() + encoder.dim());
    for claim in claims {
        view.rows
            .insert(claim.claim_id.clone(), liwc_speaker_view(lexicon, encoder, claim));
    }
    view
}

pub fn tfidf_feature_view<'a>(
    name: &str,
    model: &TfidfModel,
    claims: impl IntoIterator<Item = &'a Claim>,
) -> FeatureView {
    let mut view = FeatureView::new(name, model.dim());
    for claim in claims {
        view.rows
            .insert(claim.claim_id.clone(), tfidf_vector(model, &claim.text).to_dense());
    }
    view
}
