//! Named, independent random substreams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream families. Each draws from its own key space so that, for
/// example, changing the batch schedule never perturbs parameter init.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Params,
    Scores,
    Topology,
    Labels,
    Partition,
    Batches,
    Retention,
    Dataset,
    Probe,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Params => 0x7061_7261_6d73,
            Stream::Scores => 0x7363_6f72_6573,
            Stream::Topology => 0x746f_706f,
            Stream::Labels => 0x6c61_6265_6c73,
            Stream::Partition => 0x7061_7274,
            Stream::Batches => 0x6261_7463_68,
            Stream::Retention => 0x7265_7465_6e74,
            Stream::Dataset => 0x6461_7461,
            Stream::Probe => 0x7072_6f62_65,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a root seed, a stream family and a path of indices into one seed.
pub fn derive_seed(root: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(root ^ splitmix64(stream.tag()));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    h
}

pub fn stream_rng(root: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream, path))
}
