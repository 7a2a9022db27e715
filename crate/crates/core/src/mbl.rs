//! Memory-based learner: verbatim exemplar storage, exact Euclidean
//! k-nearest-neighbour retrieval and a majority vote.
//!
//! Neighbours are ranked by squared Euclidean distance (same order as the
//! Euclidean distance), ties going to the earlier-stored exemplar.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cues, LabeledFrame, PhoneId, N_CUES, N_PHONES};

#[derive(Debug, Error, PartialEq)]
pub enum MblError {
    #[error("k = {k} exceeds the {size} stored exemplars")]
    TooFewExemplars { k: usize, size: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MblConfig {
    pub k: usize,
}

impl Default for MblConfig {
    fn default() -> Self {
        Self { k: 7 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExemplarStore {
    cues: Vec<Cues>,
    phones: Vec<PhoneId>,
}

impl ExemplarStore {
    /// Stores the pairs as they are, in order.
    pub fn store<'a>(pairs: impl IntoIterator<Item = &'a LabeledFrame>) -> Self {
        let mut s = Self::default();
        for f in pairs {
            s.push(f.cues, f.phone);
        }
        s
    }

    pub fn push(&mut self, cues: Cues, phone: PhoneId) {
        self.cues.push(cues);
        self.phones.push(phone);
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    pub fn cues(&self, id: usize) -> &Cues {
        &self.cues[id]
    }

    pub fn phone(&self, id: usize) -> PhoneId {
        self.phones[id]
    }
}

/// Squared Euclidean distance, summed in dimension order.
pub fn squared_distance(a: &Cues, b: &Cues) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Partial sum with early exit once it reaches `bound`. The returned value
/// equals [`squared_distance`] whenever it is below `bound`.
#[inline]
fn bounded_distance(a: &Cues, b: &Cues, bound: f64) -> Option<f64> {
    let mut s = 0.0;
    for (chunk_a, chunk_b) in a.chunks(13).zip(b.chunks(13)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = x - y;
            s += d * d;
        }
        if s >= bound {
            return None;
        }
    }
    Some(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub squared_distance: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }

    fn rank(&self, other: &Self) -> Ordering {
        self.squared_distance
            .total_cmp(&other.squared_distance)
            .then(self.id.cmp(&other.id))
    }
}

struct Ranked(Neighbor);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank(&other.0)
    }
}

/// The `k` nearest exemplars, closest first.
pub fn knn(store: &ExemplarStore, query: &Cues, k: usize) -> Result<Vec<Neighbor>, MblError> {
    if k == 0 {
        return Err(MblError::ZeroK);
    }
    if k > store.len() {
        return Err(MblError::TooFewExemplars {
            k,
            size: store.len(),
        });
    }
    // Max-heap on (distance, id): the root is the current k-th neighbour.
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
    for (id, cues) in store.cues.iter().enumerate() {
        if heap.len() < k {
            heap.push(Ranked(Neighbor {
                id,
                squared_distance: squared_distance(query, cues),
            }));
            continue;
        }
        let worst = heap.peek().map(|r| r.0.squared_distance).unwrap_or(f64::INFINITY);
        // Later ids lose ties, so a candidate must be strictly closer.
        if let Some(d) = bounded_distance(query, cues, worst) {
            heap.pop();
            heap.push(Ranked(Neighbor {
                id,
                squared_distance: d,
            }));
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|r| r.0).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub phone: PhoneId,
    /// Winning votes over `k`.
    pub confidence: f64,
    /// Neighbours, closest first.
    pub neighbors: Vec<Neighbor>,
    pub counts: [u32; N_PHONES],
}

impl VoteResult {
    pub fn neighbor_ids(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.id).collect()
    }

    /// Vote shares per phone; sums to 1.
    pub fn shares(&self) -> [f64; N_PHONES] {
        let k = self.neighbors.len() as f64;
        std::array::from_fn(|j| self.counts[j] as f64 / k)
    }
}

/// Majority vote over the `k` nearest exemplars. Among tied labels the one
/// whose closest member ranks first wins.
pub fn predict(
    store: &ExemplarStore,
    query: &Cues,
    config: &MblConfig,
) -> Result<VoteResult, MblError> {
    let neighbors = knn(store, query, config.k)?;
    let mut counts = [0u32; N_PHONES];
    for n in &neighbors {
        counts[store.phone(n.id).0] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    // Neighbours are in rank order, so the first with a top count wins.
    let phone = neighbors
        .iter()
        .map(|n| store.phone(n.id))
        .find(|p| counts[p.0] == top)
        .expect("some neighbour holds the top count");
    Ok(VoteResult {
        phone,
        confidence: top as f64 / config.k as f64,
        neighbors,
        counts,
    })
}

/// Convenience: dimension check for externally built vectors.
pub fn to_cues(values: &[f64]) -> Option<Cues> {
    (values.len() == N_CUES).then(|| std::array::from_fn(|i| values[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn on_axis(x: f64) -> Cues {
        let mut c = [0.0; N_CUES];
        c[0] = x;
        c
    }

    fn store_of(points: &[(f64, usize)]) -> ExemplarStore {
        let mut s = ExemplarStore::default();
        for &(x, p) in points {
            s.push(on_axis(x), PhoneId(p));
        }
        s
    }

    /// Sort everything, take k.
    fn brute_force(store: &ExemplarStore, q: &Cues, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..store.len())
            .map(|i| {
                let d: f64 = store
                    .cues(i)
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .fold(0.0, |s, x| s + x);
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn store_is_verbatim() {
        assert!(ExemplarStore::store(&[]).is_empty());
        let f = LabeledFrame {
            word_id: "w".into(),
            trial_index: 0,
            phone: PhoneId(3),
            cues: on_axis(1.0),
        };
        let s = ExemplarStore::store([&f, &f]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.cues(1), &f.cues);
    }

    #[test]
    fn exact_match_is_nearest() {
        let s = store_of(&[(0.0, 1), (5.0, 2), (9.0, 3)]);
        let n = knn(&s, &on_axis(5.0), 1).unwrap();
        assert_eq!(n[0].id, 1);
        assert_eq!(n[0].distance(), 0.0);
    }

    #[test]
    fn axis_toy() {
        let s = store_of(&[(0.0, 0), (1.0, 0), (2.0, 0), (3.0, 0)]);
        let ids: Vec<usize> = knn(&s, &on_axis(1.4), 2).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn distance_ties_prefer_insertion_order() {
        let s = store_of(&[(2.0, 0), (-2.0, 1), (2.0, 2), (0.5, 3)]);
        let ids: Vec<usize> = knn(&s, &on_axis(0.0), 3).unwrap().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![3, 0, 1]);
    }

    #[test]
    fn k_larger_than_store_fails() {
        let s = store_of(&[(0.0, 0)]);
        assert_eq!(
            knn(&s, &on_axis(0.0), 2),
            Err(MblError::TooFewExemplars { k: 2, size: 1 })
        );
        assert_eq!(knn(&s, &on_axis(0.0), 0), Err(MblError::ZeroK));
    }

    #[test]
    fn majority_vote_example() {
        // n = 22, m = 21, s = 28 in the default inventory order.
        let s = store_of(&[
            (0.1, 22),
            (0.2, 21),
            (0.3, 22),
            (0.4, 28),
            (0.5, 22),
            (0.6, 21),
            (0.7, 22),
            (50.0, 28),
        ]);
        let v = predict(&s, &on_axis(0.0), &MblConfig::default()).unwrap();
        assert_eq!(v.phone, PhoneId(22));
        assert!((v.confidence - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(v.neighbor_ids(), (0..7).collect::<Vec<_>>());
        assert!((v.shares().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vote_ties_go_to_the_closest_class() {
        let s = store_of(&[(0.3, 5), (0.1, 6), (0.4, 5), (0.2, 6)]);
        let v = predict(&s, &on_axis(0.0), &MblConfig { k: 4 }).unwrap();
        assert_eq!(v.phone, PhoneId(6));
        assert_eq!(v.confidence, 0.5);
    }

    #[test]
    fn k_one_and_unanimous_votes() {
        let s = store_of(&[(0.0, 3), (1.0, 3), (2.0, 3), (10.0, 4)]);
        let v = predict(&s, &on_axis(9.0), &MblConfig { k: 1 }).unwrap();
        assert_eq!((v.phone, v.confidence), (PhoneId(4), 1.0));
        let v = predict(&s, &on_axis(0.5), &MblConfig { k: 3 }).unwrap();
        assert_eq!((v.phone, v.confidence), (PhoneId(3), 1.0));
    }

    #[test]
    fn matches_brute_force_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = ExemplarStore::default();
        for _ in 0..2000 {
            s.push(
                std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                PhoneId(rng.random_range(0..N_PHONES)),
            );
        }
        for _ in 0..200 {
            let q: Cues = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let got: Vec<usize> = knn(&s, &q, 7).unwrap().iter().map(|n| n.id).collect();
            assert_eq!(got, brute_force(&s, &q, 7));
        }
    }

    #[test]
    fn self_query_returns_own_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = ExemplarStore::default();
        for _ in 0..300 {
            s.push(
                std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                PhoneId(rng.random_range(0..N_PHONES)),
            );
        }
        for i in 0..s.len() {
            let v = predict(&s, s.cues(i), &MblConfig { k: 1 }).unwrap();
            assert_eq!(v.phone, s.phone(i));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points() -> impl Strategy<Value = (Vec<(Cues, usize)>, Cues)> {
            (
                prop::collection::vec(
                    (prop::collection::vec(-10.0f64..10.0, N_CUES), 0usize..N_PHONES),
                    8..60,
                ),
                prop::collection::vec(-10.0f64..10.0, N_CUES),
            )
                .prop_map(|(pts, q)| {
                    (
                        pts.into_iter()
                            .map(|(c, p)| (to_cues(&c).unwrap(), p))
                            .collect(),
                        to_cues(&q).unwrap(),
                    )
                })
        }

        proptest! {
            #[test]
            fn permutation_leaves_prediction_unchanged((pts, q) in points(), rot in 0usize..60) {
                let mut a = ExemplarStore::default();
                for (c, p) in &pts { a.push(*c, PhoneId(*p)); }
                let mut rotated = pts.clone();
                let r = rot % rotated.len();
                rotated.rotate_left(r);
                rotated.reverse();
                let mut b = ExemplarStore::default();
                for (c, p) in &rotated { b.push(*c, PhoneId(*p)); }
                // Continuous random data: distances are distinct.
                let cfg = MblConfig::default();
                prop_assert_eq!(predict(&a, &q, &cfg).unwrap().phone, predict(&b, &q, &cfg).unwrap().phone);
            }

            #[test]
            fn scaling_preserves_neighbours((pts, q) in points(), s in 0.1f64..10.0) {
                let mut a = ExemplarStore::default();
                let mut b = ExemplarStore::default();
                for (c, p) in &pts {
                    a.push(*c, PhoneId(*p));
                    b.push(std::array::from_fn(|i| c[i] * s), PhoneId(*p));
                }
                let qs: Cues = std::array::from_fn(|i| q[i] * s);
                let ia: Vec<usize> = knn(&a, &q, 7).unwrap().iter().map(|n| n.id).collect();
                let ib: Vec<usize> = knn(&b, &qs, 7).unwrap().iter().map(|n| n.id).collect();
                prop_assert_eq!(ia, ib);
            }
        }
    }
}
