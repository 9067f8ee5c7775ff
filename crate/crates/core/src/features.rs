//! Item feature vectors: precomputed sentence embeddings or a built-in
//! hashed TF-IDF featurizer.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 384;

/// Dense vectors of a fixed dimension keyed by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    id: String,
    vector: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "vector for {id:?} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("vector for {id:?} has a non-finite component")));
        }
        match self.index.get(&id) {
            Some(&i) => self.vectors[i] = vector,
            None => {
                self.index.insert(id.clone(), self.vectors.len());
                self.ids.push(id);
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Ids from `wanted` that have no vector.
    pub fn missing<'a>(&self, wanted: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        wanted
            .into_iter()
            .filter(|id| !self.index.contains_key(*id))
            .map(str::to_string)
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            serde_json::to_writer(&mut out, &serde_json::json!({ "id": id, "vector": vector }))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Load a JSON-lines embedding file; the dimension is taken from the first line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut matrix: Option<EmbeddingMatrix> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingLine =
            serde_json::from_str(&line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        let matrix = match &mut matrix {
            Some(m) => m,
            None => matrix.insert(
                EmbeddingMatrix::new(parsed.vector.len())
                    .map_err(|e| Error::format(path, i + 1, e.to_string()))?,
            ),
        };
        matrix
            .insert(parsed.id, parsed.vector)
            .map_err(|e| Error::format(path, i + 1, e.to_string()))?;
    }
    matrix.ok_or_else(|| Error::format(path, 0, "embedding file is empty"))
}

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn token_hash(token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    token
        .bytes()
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Lowercase, then split on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedTfidfModel {
    pub dim: usize,
    pub doc_count: usize,
    pub bucket_df: Vec<usize>,
    pub normalize: bool,
}

impl HashedTfidfModel {
    pub fn bucket(&self, token: &str) -> usize {
        (token_hash(token) % self.dim as u64) as usize
    }

    pub fn idf(&self, bucket: usize) -> f64 {
        ((1.0 + self.doc_count as f64) / (1.0 + self.bucket_df[bucket] as f64)).ln() + 1.0
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        for (j, x) in v.iter_mut().enumerate() {
            if *x != 0.0 {
                *x *= self.idf(j);
            }
        }
        if self.normalize {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        v
    }

    /// Embed every `(id, text)` pair into a matrix.
    pub fn embed_all<'a>(
        &self,
        docs: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<EmbeddingMatrix> {
        let mut matrix = EmbeddingMatrix::new(self.dim)?;
        for (id, text) in docs {
            matrix.insert(id, self.embed(&text))?;
        }
        Ok(matrix)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: HashedTfidfModel = serde_json::from_str(&text)?;
        if model.dim == 0 || model.bucket_df.len() != model.dim {
            return Err(Error::Validation("featurizer bucket table does not match dim".into()));
        }
        if model.bucket_df.iter().any(|&df| df > model.doc_count) {
            return Err(Error::Validation("bucket document frequency exceeds doc_count".into()));
        }
        Ok(model)
    }
}

pub fn fit_hashed_tfidf<S: AsRef<str>>(corpus: &[S], dim: usize, normalize: bool) -> Result<HashedTfidfModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a featurizer on an empty corpus".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("featurizer dimension must be positive".into()));
    }
    let mut model = HashedTfidfModel {
        dim,
        doc_count: corpus.len(),
        bucket_df: vec![0; dim],
        normalize,
    };
    let mut seen = vec![false; dim];
    for doc in corpus {
        seen.iter_mut().for_each(|s| *s = false);
        for token in tokenize(doc.as_ref()) {
            seen[model.bucket(&token)] = true;
        }
        for (df, hit) in model.bucket_df.iter_mut().zip(&seen) {
            *df += *hit as usize;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(token_hash(""), 0xcbf29ce484222325);
        assert_eq!(token_hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(token_hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Fix NPE--in  Login_Form!"), ["fix", "npe", "in", "login", "form"]);
        assert!(tokenize("  ..  ").is_empty());
    }

    #[test]
    fn document_frequency_counts_each_document_once() {
        // brute force the buckets from the hash definition
        let dim = 8;
        let a = (token_hash("a") % 8) as usize;
        let b = (token_hash("b") % 8) as usize;
        assert_ne!(a, b);
        let model = fit_hashed_tfidf(&["a b", "a a"], dim, true).unwrap();
        assert_eq!(model.doc_count, 2);
        assert_eq!(model.bucket_df[a], 2);
        assert_eq!(model.bucket_df[b], 1);
        assert_eq!(model.bucket_df.iter().sum::<usize>(), 3);
    }

    #[test]
    fn empty_documents_have_no_frequencies() {
        let model = fit_hashed_tfidf(&["", ""], 16, true).unwrap();
        assert_eq!(model.doc_count, 2);
        assert!(model.bucket_df.iter().all(|&d| d == 0));
        assert!(model.embed("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_bucket_collects_everything() {
        let model = fit_hashed_tfidf(&["x y z", "w"], 1, false).unwrap();
        assert_eq!(model.bucket_df, [2]);
        // idf = ln(3/3) + 1 = 1, three tokens land in bucket 0
        assert_eq!(model.embed("x y z"), [3.0]);
    }

    #[test]
    fn idf_weight_matches_formula() {
        let model = fit_hashed_tfidf(&["x", "x y"], 64, false).unwrap();
        let x = model.bucket("x");
        let y = model.bucket("y");
        assert_ne!(x, y);
        let v = model.embed("x");
        assert_eq!(v[x], 1.0);
        assert_eq!(v.iter().filter(|&&e| e != 0.0).count(), 1);
        let v = model.embed("y y");
        assert!((v[y] - 2.0 * ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(fit_hashed_tfidf::<&str>(&[], 8, true).is_err());
        assert!(fit_hashed_tfidf(&["a"], 0, true).is_err());
    }

    #[test]
    fn embeddings_load_and_reject_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("e.jsonl");
        std::fs::write(
            &good,
            "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[0,0,0,0]}\n{\"id\":\"c\",\"vector\":[0.5,0,0,1]}\n",
        )
        .unwrap();
        let m = load_embeddings(&good).unwrap();
        assert_eq!((m.dim(), m.len()), (4, 3));
        assert_eq!(m.get("c").unwrap(), [0.5, 0.0, 0.0, 1.0]);
        assert_eq!(m.missing(["a", "zz"]), ["zz"]);

        let ragged = dir.path().join("r.jsonl");
        std::fs::write(
            &ragged,
            "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"odd\",\"vector\":[1,2,3,4,5]}\n",
        )
        .unwrap();
        let err = load_embeddings(&ragged).unwrap_err().to_string();
        assert!(err.contains("odd") && err.contains(":2"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = EmbeddingMatrix::new(2).unwrap();
        assert!(m.insert("a", vec![f64::NAN, 0.0]).is_err());
        assert!(m.insert("a", vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn model_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = fit_hashed_tfidf(&["alpha beta", "beta gamma"], 32, true).unwrap();
        model.save(&path).unwrap();
        assert_eq!(HashedTfidfModel::load(&path).unwrap(), model);
    }

    proptest! {
        #[test]
        fn embed_is_pure_and_normalized(
            corpus in prop::collection::vec("[a-e ]{0,20}", 1..6),
            query in "[a-f .,]{0,30}",
            dim in 1usize..40,
        ) {
            let model = fit_hashed_tfidf(&corpus, dim, true).unwrap();
            prop_assert!(model.bucket_df.iter().all(|&df| df <= model.doc_count));
            let v = model.embed(&query);
            prop_assert_eq!(v.len(), dim);
            prop_assert_eq!(&v, &model.embed(&query));
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        }
    }
}
