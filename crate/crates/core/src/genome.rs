use std::fmt;
use std::str::FromStr;

use rand::Rng;
use smallvec::SmallVec;

/// Fixed-length bit vector; bit `j` set means zone `j` receives an intervention.
///
/// Bits are packed most-significant-first so that the derived ordering of two
/// genomes of equal length is the lexicographic order of their bit strings.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    words: SmallVec<[u64; 2]>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenomeParseError {
    #[error("genome string is empty")]
    Empty,
    #[error("invalid character {found:?} at position {position} (expected '0' or '1')")]
    InvalidChar { position: usize, found: char },
}

const WORD: usize = 64;

#[inline]
fn locate(index: usize) -> (usize, u64) {
    (index / WORD, 1u64 << (WORD - 1 - index % WORD))
}

impl Genome {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: SmallVec::from_elem(0, len.div_ceil(WORD)),
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut genome = Self::zeros(len);
        for j in 0..len {
            genome.set(j, true);
        }
        genome
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut genome = Self::zeros(bits.len());
        for (j, &bit) in bits.iter().enumerate() {
            genome.set(j, bit);
        }
        genome
    }

    /// The `index`-th genome of length `len` in lexicographic order.
    pub fn from_index(index: u64, len: usize) -> Self {
        assert!(len <= 64, "lexicographic indexing supports at most 64 bits");
        let mut genome = Self::zeros(len);
        for j in 0..len {
            genome.set(j, (index >> (len - 1 - j)) & 1 == 1);
        }
        genome
    }

    /// Inverse of [`Genome::from_index`].
    pub fn index(&self) -> u64 {
        assert!(self.len <= 64, "lexicographic indexing supports at most 64 bits");
        self.iter().fold(0u64, |acc, bit| (acc << 1) | bit as u64)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut genome = Self::zeros(len);
        for j in 0..len {
            genome.set(j, rng.gen_bool(0.5));
        }
        genome
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len, "bit {index} out of range for length {}", self.len);
        let (w, mask) = locate(index);
        self.words[w] & mask != 0
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        assert!(index < self.len, "bit {index} out of range for length {}", self.len);
        let (w, mask) = locate(index);
        if value {
            self.words[w] |= mask;
        } else {
            self.words[w] &= !mask;
        }
    }

    pub fn flip(&mut self, index: usize) {
        let bit = self.get(index);
        self.set(index, !bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |j| self.get(j))
    }

    /// Indices of the set bits, ascending.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&j| self.get(j))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Genome) -> usize {
        assert_eq!(self.len, other.len, "hamming distance needs equal lengths");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn union(&self, other: &Genome) -> Genome {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Genome) -> Genome {
        self.zip_words(other, |a, b| a & b)
    }

    fn zip_words(&self, other: &Genome, op: impl Fn(u64, u64) -> u64) -> Genome {
        assert_eq!(self.len, other.len, "bitwise ops need equal lengths");
        Genome {
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect(),
            len: self.len,
        }
    }

    /// Bits `[0, cut)` from `self` followed by bits `[cut, len)` from `tail`.
    pub fn splice(&self, tail: &Genome, cut: usize) -> Genome {
        assert_eq!(self.len, tail.len);
        assert!(cut <= self.len);
        let mut child = self.clone();
        for j in cut..self.len {
            child.set(j, tail.get(j));
        }
        child
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.iter() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({self})")
    }
}

impl FromStr for Genome {
    type Err = GenomeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(GenomeParseError::Empty);
        }
        let bits = s
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                found => Err(GenomeParseError::InvalidChar { position, found }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Genome::from_bits(&bits))
    }
}
