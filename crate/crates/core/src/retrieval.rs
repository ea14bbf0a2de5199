//! Search tool: BM25 over a small shipped corpus of health notes, with an
//! optional HTTP client for a live search service behind the same trait.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CORPUS_JSONL: &str = include_str!("../data/search_corpus.jsonl");
pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const SNIPPET_CHARS: usize = 500;
pub const DEFAULT_K: usize = 3;
pub const NO_RESULTS: &str = "NO_RESULTS";
/// Environment variable naming a remote search endpoint.
pub const SEARCH_URL_ENV: &str = "INSIGHT_SEARCH_URL";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate url '{0}'")]
    DuplicateUrl(String),
    #[error("document '{0}' has an empty body")]
    EmptyBody(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("remote search: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub url: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub score: f64,
}

/// Anything that can answer a search act.
pub trait SearchTool: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, RetrievalError>;
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<Document>, RetrievalError> {
    let mut docs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line).map_err(|source| RetrievalError::Json { line: i + 1, source })?);
    }
    Ok(docs)
}

pub fn default_corpus() -> Vec<Document> {
    read_corpus(DEFAULT_CORPUS_JSONL.as_bytes()).expect("shipped corpus parses")
}

#[derive(Debug, Clone)]
pub struct Index {
    docs: Vec<Document>,
    /// term -> (document, term frequency), in document order
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<usize>,
    avg_len: f64,
}

impl Index {
    pub fn build(docs: Vec<Document>) -> Result<Index, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut urls = HashSet::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.body.trim().is_empty() {
                return Err(RetrievalError::EmptyBody(doc.url.clone()));
            }
            if !urls.insert(doc.url.as_str()) {
                return Err(RetrievalError::DuplicateUrl(doc.url.clone()));
            }
            let mut tokens = tokenize(&doc.title);
            tokens.extend(tokenize(&doc.body));
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }
        let avg_len = doc_len.iter().sum::<usize>() as f64 / docs.len() as f64;
        Ok(Index {
            docs,
            postings,
            doc_len,
            avg_len,
        })
    }

    pub fn default_corpus() -> Index {
        Index::build(default_corpus()).expect("shipped corpus is valid")
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    /// Number of documents whose title or body contains `term` (already
    /// tokenized).
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, which stays positive even for
    /// terms in most documents.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn query_terms(query: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        tokenize(query).into_iter().filter(|t| seen.insert(t.clone())).collect()
    }

    /// BM25 score of every document, in document order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        for term in Self::query_terms(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = 1.0 - B + B * self.doc_len[doc] as f64 / self.avg_len;
                scores[doc] += idf * tf * (K1 + 1.0) / (tf + K1 * norm);
            }
        }
        scores
    }

    /// Top `k` documents with a positive score, best first; equal scores keep
    /// corpus order.
    pub fn search(&self, query: &str, k: usize) -> Vec<SearchResult> {
        let terms: HashSet<String> = Self::query_terms(query).into_iter().collect();
        let mut ranked: Vec<(usize, f64)> =
            self.scores(query).into_iter().enumerate().filter(|&(_, s)| s > 0.0).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
            .into_iter()
            .take(k)
            .map(|(i, score)| {
                let doc = &self.docs[i];
                SearchResult {
                    url: doc.url.clone(),
                    title: doc.title.clone(),
                    snippet: snippet(&doc.body, &terms),
                    score,
                }
            })
            .collect()
    }
}

impl SearchTool for Index {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, RetrievalError> {
        Ok(Index::search(self, query, k))
    }
}

/// The window of at most [`SNIPPET_CHARS`] characters, starting and ending
/// on word boundaries, that holds the most query-term occurrences. The
/// earliest such window wins.
pub fn snippet(body: &str, terms: &HashSet<String>) -> String {
    // (byte start, byte end, char start, char end, matches a term)
    let mut words = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (chars, (byte, c)) in body.char_indices().chain(std::iter::once((body.len(), ' '))).enumerate() {
        if c.is_alphanumeric() {
            start.get_or_insert((byte, chars));
        } else if let Some((b0, c0)) = start.take() {
            let hit = terms.contains(&body[b0..byte].to_lowercase());
            words.push((b0, byte, c0, chars, hit));
        }
    }
    if words.is_empty() {
        return String::new();
    }
    // window is words[i..j]
    let (mut best, mut best_hits) = ((0, 1), 0usize);
    let (mut j, mut hits) = (0usize, 0usize);
    for i in 0..words.len() {
        if j <= i {
            j = i + 1;
            hits = usize::from(words[i].4);
        }
        while j < words.len() && words[j].3 - words[i].2 <= SNIPPET_CHARS {
            hits += usize::from(words[j].4);
            j += 1;
        }
        if i == 0 || hits > best_hits {
            best = (i, j);
            best_hits = hits;
        }
        hits -= usize::from(words[i].4);
    }
    let (i, j) = (best.0, best.1 - 1);
    // a single word longer than the limit is cut on a char boundary
    let text = &body[words[i].0..words[j].1];
    text.chars().take(SNIPPET_CHARS).collect()
}

/// One block per result (title, snippet, source), blank lines between.
pub fn format_search_observation(results: &[SearchResult]) -> String {
    if results.is_empty() {
        return NO_RESULTS.to_string();
    }
    results
        .iter()
        .map(|r| {
            let snippet = r.snippet.split_whitespace().collect::<Vec<_>>().join(" ");
            format!("{}\n{}\nSource: {}", r.title.trim(), snippet, r.url)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Client for a search service answering `GET <url>?q=<query>&k=<k>` with a
/// JSON list of results.
#[derive(Debug, Clone)]
pub struct RemoteSearch {
    endpoint: reqwest::Url,
    client: reqwest::blocking::Client,
}

impl RemoteSearch {
    pub fn new(endpoint: &str) -> Result<Self, RetrievalError> {
        let endpoint = reqwest::Url::parse(endpoint).map_err(|e| RetrievalError::Remote(format!("{endpoint}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(30))
            .build()
            .map_err(|e| RetrievalError::Remote(e.to_string()))?;
        Ok(RemoteSearch { endpoint, client })
    }

    /// Client for `$INSIGHT_SEARCH_URL`, if set.
    pub fn from_env() -> Option<Result<Self, RetrievalError>> {
        std::env::var(SEARCH_URL_ENV).ok().map(|u| RemoteSearch::new(&u))
    }
}

impl SearchTool for RemoteSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, RetrievalError> {
        let mut url = self.endpoint.clone();
        url.query_pairs_mut().append_pair("q", query).append_pair("k", &k.to_string());
        let resp = self
            .client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| RetrievalError::Remote(e.to_string()))?;
        let mut results: Vec<SearchResult> = resp.json().map_err(|e| RetrievalError::Remote(e.to_string()))?;
        results.truncate(k);
        Ok(results)
    }
}
