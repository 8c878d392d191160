//! BM25 inverted index.
//!
//! Build-then-frozen: single-writer construction over the item collection,
//! immutable afterwards. Scoring follows Okapi BM25 with IDF
//! ln(1 + (N - df + 0.5)/(df + 0.5)); duplicate query tokens count once.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::tokenize::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

const MLEX_MAGIC: &[u8; 4] = b"MLEX";
const MLEX_VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct LexicalIndex {
    /// term -> postings as (doc ordinal, term frequency), ordinals strictly
    /// increasing within each list.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    item_ids: Vec<String>,
    k1: f64,
    b: f64,
}

impl LexicalIndex {
    /// Index (item_id, title) documents. Ids must be unique, titles non-empty.
    pub fn build(docs: &[(String, String)], k1: f64, b: f64) -> Result<Self> {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut item_ids = Vec::with_capacity(docs.len());
        let mut seen = std::collections::HashSet::new();

        for (ordinal, (item_id, title)) in docs.iter().enumerate() {
            if title.trim().is_empty() {
                return Err(Error::Config(format!("item {item_id} has an empty title")));
            }
            if !seen.insert(item_id.as_str()) {
                return Err(Error::Config(format!("duplicate item id {item_id}")));
            }
            let tokens = tokenize(title);
            doc_lengths.push(tokens.len() as u32);
            item_ids.push(item_id.clone());
            let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push((ordinal as u32, tf));
            }
        }
        Ok(LexicalIndex {
            postings,
            doc_lengths,
            item_ids,
            k1,
            b,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lengths.is_empty()
    }

    pub fn item_id(&self, ordinal: usize) -> &str {
        &self.item_ids[ordinal]
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn avgdl(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            return 0.0;
        }
        self.doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / self.len() as f64
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// First-occurrence dedup of query tokens.
    fn unique_tokens(tokens: &[String]) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        tokens
            .iter()
            .map(String::as_str)
            .filter(|t| seen.insert(*t))
            .collect()
    }

    /// BM25 score of one document against query tokens. Terms absent from
    /// the document contribute 0.
    pub fn bm25_score(&self, query_tokens: &[String], ordinal: usize) -> f64 {
        let dl = f64::from(self.doc_lengths[ordinal]);
        let avgdl = self.avgdl();
        let mut score = 0.0;
        for term in Self::unique_tokens(query_tokens) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let Ok(pos) = list.binary_search_by_key(&(ordinal as u32), |&(d, _)| d) else {
                continue;
            };
            let tf = f64::from(list[pos].1);
            let norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl);
            score += self.idf(list.len()) * tf * (self.k1 + 1.0) / norm;
        }
        score
    }

    /// Exact top-k over documents containing at least one query term, plus
    /// the total number of matching documents. Ties break by ascending
    /// item id.
    pub fn search_with_match_count(&self, query: &str, k: usize) -> (Vec<(String, f64)>, usize) {
        let tokens = tokenize(query);
        let mut scores: HashMap<u32, f64> = HashMap::new();
        let avgdl = self.avgdl();
        for term in Self::unique_tokens(&tokens) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for &(ordinal, tf) in list {
                let dl = f64::from(self.doc_lengths[ordinal as usize]);
                let tf = f64::from(tf);
                let norm = tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl);
                *scores.entry(ordinal).or_insert(0.0) += idf * tf * (self.k1 + 1.0) / norm;
            }
        }
        let matches = scores.len();
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_unstable_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.item_ids[a.0 as usize].cmp(&self.item_ids[b.0 as usize]))
        });
        ranked.truncate(k);
        let results = ranked
            .into_iter()
            .map(|(ord, s)| (self.item_ids[ord as usize].clone(), s))
            .collect();
        (results, matches)
    }

    /// Exact top-k; see [`Self::search_with_match_count`].
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.search_with_match_count(query, k).0
    }

    /// Persist: magic MLEX, version, k1/b as f64, doc lengths, item ids,
    /// then terms with their postings. All integers little-endian.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(MLEX_MAGIC).map_err(io_err)?;
        w.write_all(&[MLEX_VERSION]).map_err(io_err)?;
        w.write_all(&self.k1.to_le_bytes()).map_err(io_err)?;
        w.write_all(&self.b.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io_err)?;
        for &dl in &self.doc_lengths {
            w.write_all(&dl.to_le_bytes()).map_err(io_err)?;
        }
        for id in &self.item_ids {
            let bytes = id.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
            w.write_all(bytes).map_err(io_err)?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes()).map_err(io_err)?;
        for (term, list) in &self.postings {
            let bytes = term.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
            w.write_all(bytes).map_err(io_err)?;
            w.write_all(&(list.len() as u64).to_le_bytes()).map_err(io_err)?;
            for &(ordinal, tf) in list {
                w.write_all(&ordinal.to_le_bytes()).map_err(io_err)?;
                w.write_all(&tf.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MLEX_MAGIC {
            return Err(Error::format(path, "bad magic, expected MLEX"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(io_err)?;
        if version[0] != MLEX_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version[0])));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8).map_err(io_err)?;
        let k1 = f64::from_le_bytes(buf8);
        r.read_exact(&mut buf8).map_err(io_err)?;
        let b = f64::from_le_bytes(buf8);
        r.read_exact(&mut buf8).map_err(io_err)?;
        let n = u64::from_le_bytes(buf8) as usize;

        let mut buf4 = [0u8; 4];
        let mut doc_lengths = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf4).map_err(io_err)?;
            doc_lengths.push(u32::from_le_bytes(buf4));
        }
        let read_string = |r: &mut BufReader<File>| -> Result<String> {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4).map_err(|e| Error::io(path, e))?;
            let len = u32::from_le_bytes(b4) as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
            String::from_utf8(bytes).map_err(|_| Error::format(path, "invalid UTF-8"))
        };
        let mut item_ids = Vec::with_capacity(n);
        for _ in 0..n {
            item_ids.push(read_string(&mut r)?);
        }
        r.read_exact(&mut buf8).map_err(io_err)?;
        let term_count = u64::from_le_bytes(buf8) as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..term_count {
            let term = read_string(&mut r)?;
            r.read_exact(&mut buf8).map_err(io_err)?;
            let len = u64::from_le_bytes(buf8) as usize;
            let mut list = Vec::with_capacity(len);
            let mut prev: Option<u32> = None;
            for _ in 0..len {
                r.read_exact(&mut buf4).map_err(io_err)?;
                let ordinal = u32::from_le_bytes(buf4);
                r.read_exact(&mut buf4).map_err(io_err)?;
                let tf = u32::from_le_bytes(buf4);
                if let Some(p) = prev {
                    if ordinal <= p {
                        return Err(Error::format(path, "postings not strictly increasing"));
                    }
                }
                prev = Some(ordinal);
                list.push((ordinal, tf));
            }
            postings.insert(term, list);
        }
        Ok(LexicalIndex {
            postings,
            doc_lengths,
            item_ids,
            k1,
            b,
        })
    }
}
