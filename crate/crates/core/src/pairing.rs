//! Comparative-judgment pair sets.
//!
//! Every item in turn is the anchor (`a`) of up to `k` pairs with distinct
//! partners drawn uniformly without replacement from the other items. For
//! simulated judgments the label is `+1` when the anchor has the larger story
//! point and `-1` when it has the smaller one; a tied partner is discarded and
//! another untried partner is drawn instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::BacklogItem;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Which item of a pair needs more effort: `+1` for `a`, `-1` for `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Judgment {
    AMore,
    BMore,
}

impl Judgment {
    pub fn y(self) -> i8 {
        match self {
            Judgment::AMore => 1,
            Judgment::BMore => -1,
        }
    }

    pub fn from_y(y: i64) -> Result<Self> {
        match y {
            1 => Ok(Judgment::AMore),
            -1 => Ok(Judgment::BMore),
            other => Err(Error::Validation(format!("judgment must be +1 or -1, got {other}"))),
        }
    }

    pub fn as_f64(self) -> f64 {
        self.y() as f64
    }
}

impl Serialize for Judgment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.y())
    }
}

impl<'de> Deserialize<'de> for Judgment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let y = i64::deserialize(d)?;
        Judgment::from_y(y).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativePair {
    pub a: String,
    pub b: String,
    pub y: Judgment,
}

impl ComparativePair {
    pub fn new(a: impl Into<String>, b: impl Into<String>, y: Judgment) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        if a == b {
            return Err(Error::Validation(format!("self-pair on {a:?}")));
        }
        Ok(ComparativePair { a, b, y })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPair {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<ComparativePair>,
    /// Partners requested per anchor.
    pub k: usize,
    /// Pairs missing from the full `k * n` because an anchor ran out of
    /// untied partners.
    pub shortfall: usize,
    /// Anchors that received fewer than `k` pairs.
    pub short_anchors: usize,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_args(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 items to pair, got {n}")));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// Draw partners for `anchor` one at a time from the untried pool, accepting
/// those `accept` allows, until `k` are accepted or the pool is empty.
fn draw_partners(
    rng: &mut SeededRng,
    pool: &mut Vec<usize>,
    n: usize,
    anchor: usize,
    k: usize,
    mut accept: impl FnMut(usize) -> bool,
) -> Vec<usize> {
    pool.clear();
    pool.extend((0..n).filter(|&j| j != anchor));
    let mut chosen = Vec::with_capacity(k);
    let mut untried = pool.len();
    while chosen.len() < k && untried > 0 {
        let pick = rng.below(untried);
        let partner = pool[pick];
        untried -= 1;
        pool.swap(pick, untried);
        if accept(partner) {
            chosen.push(partner);
        }
    }
    chosen
}

/// Simulate judgments from ground-truth story points.
pub fn simulate_pairs(items: &[BacklogItem], k: usize, seed: u64) -> Result<PairSet> {
    check_args(items.len(), k)?;
    let sps = items
        .iter()
        .map(|item| {
            item.story_point
                .ok_or_else(|| Error::Validation(format!("item {:?} has no story point", item.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = items.len();
    let mut rng = SeededRng::new(seed);
    let mut pool = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(k * n);
    let mut shortfall = 0;
    let mut short_anchors = 0;
    for anchor in 0..n {
        let partners = draw_partners(&mut rng, &mut pool, n, anchor, k, |j| sps[j] != sps[anchor]);
        if partners.len() < k {
            shortfall += k - partners.len();
            short_anchors += 1;
        }
        for partner in partners {
            let y = if sps[anchor] > sps[partner] {
                Judgment::AMore
            } else {
                Judgment::BMore
            };
            pairs.push(ComparativePair {
                a: items[anchor].id.clone(),
                b: items[partner].id.clone(),
                y,
            });
        }
    }
    Ok(PairSet {
        pairs,
        k,
        shortfall,
        short_anchors,
    })
}

/// Unlabeled pairs for human annotation: same sampling, no tie rejection.
/// Each anchor gets `min(k, n - 1)` partners.
pub fn generate_annotation_pairs(items: &[BacklogItem], k: usize, seed: u64) -> Result<Vec<AnnotationPair>> {
    check_args(items.len(), k)?;
    let n = items.len();
    let mut rng = SeededRng::new(seed);
    let mut pool = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(k.min(n - 1) * n);
    for anchor in 0..n {
        for partner in draw_partners(&mut rng, &mut pool, n, anchor, k, |_| true) {
            pairs.push(AnnotationPair {
                a: items[anchor].id.clone(),
                b: items[partner].id.clone(),
            });
        }
    }
    Ok(pairs)
}

pub fn save_pairs<T: Serialize>(pairs: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<ComparativePair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: ComparativePair =
            serde_json::from_str(&line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        if pair.a == pair.b {
            return Err(Error::format(path, i + 1, format!("self-pair on {:?}", pair.a)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}
