//! Synthetic data: Gaussian streams, the rare-subspace matrix and a
//! single-topic document corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{CoresetError, Result};
use crate::linalg::{DenseMatrix, DenseVector};

pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<DenseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| DenseVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)))
        .collect()
}

/// Gaussian directions with log-normal row scales `exp(σ z)`; `σ = 0` gives
/// [`gaussian_rows`].
pub fn scaled_gaussian_rows(n: usize, d: usize, sigma: f64, seed: u64) -> Vec<DenseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let g = DenseVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let z: f64 = StandardNormal.sample(&mut rng);
            g * (sigma * z).exp()
        })
        .collect()
}

/// Random `d × d` orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g = DenseMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RareSubspaceParams {
    pub n: usize,
    pub d: usize,
    /// Rank of the dominant subspace.
    pub r1: usize,
    /// Rank of the rare subspace, orthogonal to the dominant one.
    pub r2: usize,
    /// Fraction of rows drawn from the rare subspace.
    pub fraction: f64,
}

impl Default for RareSubspaceParams {
    fn default() -> Self {
        RareSubspaceParams {
            n: 200_000,
            d: 30,
            r1: 8,
            r2: 4,
            fraction: 1e-4,
        }
    }
}

/// Unit rows `B c / ‖B c‖` with `c` uniform on `[0,1]^r`; `round(f n)` rows
/// use the rare basis and sit at random stream positions.
pub fn rare_subspace(params: &RareSubspaceParams, seed: u64) -> Result<Vec<DenseVector>> {
    let RareSubspaceParams { n, d, r1, r2, fraction } = *params;
    if r1 + r2 > d {
        return Err(CoresetError::Config(format!("r1 + r2 = {} exceeds d = {d}", r1 + r2)));
    }
    if r1 == 0 {
        return Err(CoresetError::Config("r1 must be positive".into()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CoresetError::Config(format!("fraction {fraction} outside [0, 1]")));
    }
    let rare = (fraction * n as f64).round() as usize;
    if rare > 0 && r2 == 0 {
        return Err(CoresetError::Config("rare rows need r2 > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(d, &mut rng);
    let b1 = q.columns(0, r1).into_owned();
    let b2 = q.columns(r1, r2).into_owned();
    let mut is_rare = vec![false; n];
    is_rare[..rare].iter_mut().for_each(|v| *v = true);
    is_rare.shuffle(&mut rng);
    let rows = is_rare
        .iter()
        .map(|&r| {
            let b = if r { &b2 } else { &b1 };
            loop {
                let c = DenseVector::from_fn(b.ncols(), |_, _| rng.random::<f64>());
                let v = b * c;
                let norm = v.norm();
                if norm > 1e-12 {
                    break v / norm;
                }
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicCorpusParams {
    pub docs: usize,
    /// Vocabulary size.
    pub d: usize,
    pub topics: usize,
    /// Words per document; 0 means the document is its topic distribution.
    pub doc_length: usize,
    /// Dirichlet concentration of the topic-word distributions.
    pub concentration: f64,
}

impl Default for TopicCorpusParams {
    fn default() -> Self {
        TopicCorpusParams {
            docs: 5000,
            d: 50,
            topics: 5,
            doc_length: 100,
            concentration: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TopicCorpus {
    /// ℓ1-normalised word-frequency vectors.
    pub documents: Vec<DenseVector>,
    /// Topic-word distributions.
    pub topics: Vec<DenseVector>,
    /// Topic of each document.
    pub labels: Vec<usize>,
    /// Topic proportions.
    pub mixing: Vec<f64>,
}

fn dirichlet(dim: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<DenseVector> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| CoresetError::Config(e.to_string()))?;
    loop {
        let v = DenseVector::from_fn(dim, |_, _| gamma.sample(rng));
        let s = v.sum();
        if s > 0.0 {
            return Ok(v / s);
        }
    }
}

fn categorical(probs: &DenseVector, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Single-topic corpus: each document draws one topic, then `doc_length`
/// words from it.
pub fn topic_corpus(params: &TopicCorpusParams, seed: u64) -> Result<TopicCorpus> {
    let TopicCorpusParams { docs, d, topics: k, doc_length, concentration } = *params;
    if k == 0 || d == 0 {
        return Err(CoresetError::Config("topics and d must be positive".into()));
    }
    if !(concentration > 0.0) {
        return Err(CoresetError::Config("concentration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics: Vec<DenseVector> = (0..k)
        .map(|_| dirichlet(d, concentration, &mut rng))
        .collect::<Result<_>>()?;
    let mixing = DenseVector::from_fn(k, |i, _| 1.0 + (i % 3) as f64);
    let mixing = &mixing / mixing.sum();
    let mut labels = Vec::with_capacity(docs);
    let documents = (0..docs)
        .map(|_| {
            let h = categorical(&mixing, &mut rng);
            labels.push(h);
            if doc_length == 0 {
                return topics[h].clone();
            }
            let mut counts = DenseVector::zeros(d);
            for _ in 0..doc_length {
                counts[categorical(&topics[h], &mut rng)] += 1.0;
            }
            counts / doc_length as f64
        })
        .collect();
    Ok(TopicCorpus {
        documents,
        topics,
        labels,
        mixing: mixing.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{stack_rows, SymmetricPsd};

    #[test]
    fn rare_subspace_shape_and_rank() {
        let params = RareSubspaceParams {
            n: 2000,
            fraction: 0.01,
            ..Default::default()
        };
        let rows = rare_subspace(&params, 1).unwrap();
        assert_eq!(rows.len(), 2000);
        assert!(rows.iter().all(|r| (r.norm() - 1.0).abs() < 1e-12));
        let a = stack_rows(30, &rows).unwrap();
        assert_eq!(SymmetricPsd::gram_of_rows(&a).unwrap().rank(), 12);
    }

    #[test]
    fn zero_fraction_is_exactly_dominant_rank() {
        let params = RareSubspaceParams {
            n: 500,
            fraction: 0.0,
            ..Default::default()
        };
        let a = stack_rows(30, &rare_subspace(&params, 2).unwrap()).unwrap();
        assert_eq!(SymmetricPsd::gram_of_rows(&a).unwrap().rank(), 8);
    }

    #[test]
    fn oversized_subspaces_are_rejected() {
        let params = RareSubspaceParams {
            n: 10,
            d: 10,
            r1: 8,
            r2: 4,
            fraction: 0.1,
        };
        assert!(matches!(rare_subspace(&params, 0), Err(CoresetError::Config(_))));
    }

    #[test]
    fn one_topic_infinite_length_repeats_the_topic() {
        let params = TopicCorpusParams {
            docs: 20,
            topics: 1,
            doc_length: 0,
            ..Default::default()
        };
        let c = topic_corpus(&params, 3).unwrap();
        assert!(c.documents.iter().all(|doc| doc == &c.topics[0]));
    }

    #[test]
    fn documents_are_distributions() {
        let c = topic_corpus(&TopicCorpusParams { docs: 50, ..Default::default() }, 4).unwrap();
        for doc in &c.documents {
            assert!((doc.sum() - 1.0).abs() < 1e-12);
            assert!(doc.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gaussian_rows(5, 3, 9), gaussian_rows(5, 3, 9));
        let p = RareSubspaceParams { n: 100, fraction: 0.05, ..Default::default() };
        assert_eq!(rare_subspace(&p, 7).unwrap(), rare_subspace(&p, 7).unwrap());
    }
}
