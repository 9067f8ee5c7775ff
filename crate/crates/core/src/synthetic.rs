//! Deterministic synthetic projects with a known ground-truth scorer.
//!
//! Items get random unit-length features `x`, a true effort score
//! `s = w*·x` for a fixed `w*`, and story points equal to `s` quantized into
//! equal-frequency levels `1..=levels`. Splits are 60/20/20 in item order.

use crate::dataset::{BacklogItem, ProjectDataset, Split, StoryPoint};
use crate::error::{Error, Result};
use crate::features::EmbeddingMatrix;
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
pub struct SyntheticProject {
    pub dataset: ProjectDataset,
    pub embeddings: EmbeddingMatrix,
    pub w_star: Vec<f64>,
    /// True score per item, in dataset order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub levels: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 500,
            dim: 16,
            levels: 8,
            seed: 20_240_501,
        }
    }
}

/// The fixed scorer: `w*_j = (-1)^j · (1 + j mod 4) / 4`.
pub fn fixed_weights(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1 + j % 4) as f64 / 4.0
        })
        .collect()
}

pub fn split_for(index: usize, n: usize) -> Split {
    let train_end = n * 3 / 5;
    let val_end = n * 4 / 5;
    if index < train_end {
        Split::Train
    } else if index < val_end {
        Split::Validation
    } else {
        Split::Test
    }
}

pub fn generate(spec: SyntheticSpec) -> Result<SyntheticProject> {
    if spec.n < 2 || spec.dim == 0 || spec.levels == 0 {
        return Err(Error::InvalidArgument("synthetic project needs n ≥ 2, dim ≥ 1, levels ≥ 1".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let w_star = fixed_weights(spec.dim);
    let mut features = Vec::with_capacity(spec.n);
    while features.len() < spec.n {
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.normal()).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            features.push(x.into_iter().map(|v| v / norm).collect::<Vec<f64>>());
        }
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|x| x.iter().zip(&w_star).map(|(a, b)| a * b).sum())
        .collect();

    // equal-frequency quantization by rank
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut levels = vec![0i64; spec.n];
    for (rank, &i) in order.iter().enumerate() {
        levels[i] = (rank * spec.levels / spec.n) as i64 + 1;
    }

    let width = spec.n.to_string().len();
    let mut embeddings = EmbeddingMatrix::new(spec.dim)?;
    let mut items = Vec::with_capacity(spec.n);
    for (i, x) in features.into_iter().enumerate() {
        let id = format!("SYN-{i:0width$}");
        embeddings.insert(&id, x)?;
        items.push(BacklogItem {
            id,
            title: format!("synthetic item {i}"),
            description: format!("level {} effort", levels[i]),
            story_point: Some(StoryPoint::integer(levels[i])),
            split: split_for(i, spec.n),
        });
    }
    Ok(SyntheticProject {
        dataset: ProjectDataset::new(format!("synthetic-{}", spec.n), items)?,
        embeddings,
        w_star,
        scores,
    })
}

/// Planning-poker values used by the stand-in backlogs.
const POKER: [i64; 9] = [1, 2, 3, 5, 8, 13, 20, 40, 100];

const VERBS: [&str; 8] = ["add", "fix", "update", "remove", "refactor", "support", "migrate", "document"];
const NOUNS: [&str; 12] = [
    "button", "dialog", "query", "index", "cache", "endpoint", "schema", "parser", "report", "token", "plugin",
    "workflow",
];
const SMALL: [&str; 6] = ["typo", "label", "tooltip", "rename", "color", "wording"];
const LARGE: [&str; 8] = [
    "redesign",
    "concurrency",
    "migration",
    "architecture",
    "distributed",
    "performance",
    "security",
    "integration",
];
const FILLER: [&str; 10] = ["the", "when", "user", "should", "page", "data", "error", "with", "new", "value"];

fn pick<'a>(rng: &mut SeededRng, words: &[&'a str]) -> &'a str {
    words[rng.below(words.len())]
}

/// A labeled backlog of `n` items with story points in `min_sp..=max_sp`,
/// both ends present, split 60/20/20 in item order. Texts carry a weak,
/// noisy signal of effort: larger items get longer descriptions and more
/// words from a "large work" vocabulary.
pub fn standin_project(name: &str, n: usize, min_sp: i64, max_sp: i64, seed: u64) -> Result<ProjectDataset> {
    if n < 2 || min_sp < 1 || max_sp < min_sp {
        return Err(Error::InvalidArgument("stand-in needs n ≥ 2 and 1 ≤ min ≤ max".into()));
    }
    let mut values: Vec<i64> = POKER.iter().copied().filter(|v| (min_sp..=max_sp).contains(v)).collect();
    for end in [min_sp, max_sp] {
        if !values.contains(&end) {
            values.push(end);
        }
    }
    values.sort_unstable();

    let mut rng = SeededRng::new(seed);
    // geometric-ish preference for small values
    let weights: Vec<f64> = (0..values.len()).map(|i| 0.6f64.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut sps: Vec<i64> = (0..n)
        .map(|_| {
            let mut u = rng.unit_f64() * total;
            for (v, w) in values.iter().zip(&weights) {
                if u < *w {
                    return *v;
                }
                u -= w;
            }
            *values.last().expect("values is non-empty")
        })
        .collect();
    let lo = rng.below(n);
    let mut hi = rng.below(n - 1);
    if hi >= lo {
        hi += 1;
    }
    sps[lo] = min_sp;
    sps[hi] = max_sp;

    let width = n.to_string().len();
    let prefix = name.to_uppercase();
    let items = sps
        .iter()
        .enumerate()
        .map(|(i, &sp)| {
            let level = (sp as f64).ln() / (max_sp.max(2) as f64).ln();
            let title = format!("{} {} {}", pick(&mut rng, &VERBS), pick(&mut rng, &NOUNS), pick(&mut rng, &NOUNS));
            let words = 4 + rng.below(6) + (level * 20.0 * rng.unit_f64()) as usize;
            let description: Vec<&str> = (0..words)
                .map(|_| {
                    let u = rng.unit_f64();
                    if u < 0.35 * level {
                        pick(&mut rng, &LARGE)
                    } else if u < 0.35 * level + 0.25 * (1.0 - level) {
                        pick(&mut rng, &SMALL)
                    } else {
                        pick(&mut rng, &FILLER)
                    }
                })
                .collect();
            BacklogItem {
                id: format!("{prefix}-{i:0width$}"),
                title,
                description: description.join(" "),
                story_point: Some(StoryPoint::integer(sp)),
                split: split_for(i, n),
            }
        })
        .collect();
    ProjectDataset::new(name, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::summarize;

    #[test]
    fn fixture_shape() {
        let p = generate(SyntheticSpec::default()).unwrap();
        let s = summarize(&p.dataset).unwrap();
        assert_eq!((s.n, s.train, s.validation, s.test), (500, 300, 100, 100));
        assert_eq!((s.min_sp, s.max_sp), (StoryPoint::integer(1), StoryPoint::integer(8)));
        assert_eq!(p.embeddings.len(), 500);
        for id in p.embeddings.ids() {
            let norm: f64 = p.embeddings.get(id).unwrap().iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let per_level = p.dataset.items().iter().filter(|i| i.story_point == Some(StoryPoint::integer(3))).count();
        assert!((62..=63).contains(&per_level));
    }

    #[test]
    fn standin_matches_requested_shape() {
        let ds = standin_project("usergrid", 482, 1, 8, 7).unwrap();
        let s = summarize(&ds).unwrap();
        assert_eq!((s.n, s.labeled), (482, 482));
        assert_eq!((s.min_sp, s.max_sp), (StoryPoint::integer(1), StoryPoint::integer(8)));
        let ds = standin_project("odd", 30, 4, 17, 1).unwrap();
        let s = summarize(&ds).unwrap();
        assert_eq!((s.min_sp, s.max_sp), (StoryPoint::integer(4), StoryPoint::integer(17)));
        assert_eq!(ds, standin_project("odd", 30, 4, 17, 1).unwrap());
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = generate(SyntheticSpec::default()).unwrap();
        let b = generate(SyntheticSpec::default()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.embeddings, b.embeddings);
    }
}
