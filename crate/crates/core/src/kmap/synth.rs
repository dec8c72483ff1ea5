//! Synthetic components with known complexity character, and a small
//! system built from them: START reaches a noise adder `B` and a plain
//! forwarder `E`; both feed an aggregator `C`, which START cannot reach
//! directly.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_kmap, EdgeSpec, KMapGraph, KNode, KmapError, ObservationTrace};

/// Bytes per observed input.
pub const RECORD_BYTES: usize = 8;

fn sparse_bytes(rng: &mut ChaCha8Rng, p: f64, n: usize) -> Vec<u8> {
    let bit = Bernoulli::new(p).expect("probability in range");
    (0..n)
        .map(|_| (0..8).fold(0u8, |acc, _| (acc << 1) | bit.sample(rng) as u8))
        .collect()
}

/// Echoes all-zero input.
pub fn zero_echo(observations: usize) -> ObservationTrace {
    let pairs: Vec<_> = (0..observations)
        .map(|_| (vec![0u8; RECORD_BYTES], vec![0u8; RECORD_BYTES]))
        .collect();
    ObservationTrace::from_pairs("zero", &pairs)
}

/// Adds uniform random bytes to a moderately busy input stream.
pub fn noise_adder(seed: u64, observations: usize) -> ObservationTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..observations)
        .map(|_| {
            let input = sparse_bytes(&mut rng, 0.3, RECORD_BYTES);
            let output = input.iter().map(|b| b.wrapping_add(rng.random())).collect();
            (input, output)
        })
        .collect();
    ObservationTrace::from_pairs("B", &pairs)
}

/// Passes a low-entropy stream through untouched.
pub fn forwarder(seed: u64, observations: usize) -> ObservationTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..observations)
        .map(|_| {
            let input = sparse_bytes(&mut rng, 1.0 / 16.0, RECORD_BYTES);
            (input.clone(), input)
        })
        .collect();
    ObservationTrace::from_pairs("E", &pairs)
}

/// Reduces each sparse input record to a one-byte count of set bits.
pub fn aggregator(seed: u64, observations: usize) -> ObservationTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..observations)
        .map(|_| {
            let input = sparse_bytes(&mut rng, 1.0 / 16.0, RECORD_BYTES);
            let count = input.iter().map(|b| b.count_ones()).sum::<u32>() as u8;
            (input, vec![count])
        })
        .collect();
    ObservationTrace::from_pairs("C", &pairs)
}

/// Traces for `B`, `E` and `C`, each from its own stream of `seed`.
pub fn replica_traces(seed: u64, observations: usize) -> [ObservationTrace; 3] {
    let s = seed.wrapping_mul(3);
    [
        noise_adder(s, observations),
        forwarder(s.wrapping_add(1), observations),
        aggregator(s.wrapping_add(2), observations),
    ]
}

pub fn replica_layout() -> Vec<KNode> {
    vec![
        KNode::new("START", 0.0, 0.0),
        KNode::new("B", 1.0, 1.0),
        KNode::new("E", 1.0, -1.0),
        KNode::new("C", 2.0, 0.0),
    ]
}

/// Each edge is weighted by the density of the component it enters.
pub fn replica_graph(seed: u64, observations: usize) -> Result<KMapGraph, KmapError> {
    let [b, e, c] = replica_traces(seed, observations);
    build_kmap(
        replica_layout(),
        "START",
        vec![
            EdgeSpec::trace("START", "B", b),
            EdgeSpec::trace("START", "E", e),
            EdgeSpec::trace("B", "C", c.clone()),
            EdgeSpec::trace("E", "C", c),
        ],
    )
}
