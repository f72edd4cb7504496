use serde::{Deserialize, Serialize};

/// Number of binary inputs in every pattern.
pub const N_INPUTS: usize = 12;
/// Number of distinct input patterns, `2^N_INPUTS`.
pub const N_PATTERNS: usize = 1 << N_INPUTS;

/// One configuration of the twelve binary inputs.
///
/// The index is the bit string read as a binary number with input 0 as the
/// most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pattern(u16);

impl Pattern {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < N_PATTERNS).then_some(Pattern(index as u16))
    }

    pub fn from_bits(bits: &[u8; N_INPUTS]) -> Self {
        let index = bits
            .iter()
            .fold(0u16, |acc, &b| (acc << 1) | u16::from(b != 0));
        Pattern(index)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn bit(self, input: usize) -> u8 {
        ((self.0 >> (N_INPUTS - 1 - input)) & 1) as u8
    }

    pub fn bits(self) -> [u8; N_INPUTS] {
        std::array::from_fn(|i| self.bit(i))
    }

    /// Inputs as `0.0`/`1.0`, the encoding fed to the network.
    pub fn inputs(self) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| f64::from(self.bit(i)))
    }

    /// Inputs mapped to `-1.0`/`+1.0`.
    pub fn signs(self) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| 2.0 * f64::from(self.bit(i)) - 1.0)
    }

    /// Applies an input permutation: input `i` moves to position `perm[i]`.
    pub fn permuted(self, perm: &[u8; N_INPUTS]) -> Self {
        let mut bits = [0u8; N_INPUTS];
        for (i, &b) in self.bits().iter().enumerate() {
            bits[perm[i] as usize] = b;
        }
        Pattern::from_bits(&bits)
    }

    pub fn all() -> impl ExactSizeIterator<Item = Pattern> {
        (0..N_PATTERNS as u16).map(Pattern)
    }
}

/// All patterns as a row-major `N_PATTERNS x N_INPUTS` matrix of `0.0`/`1.0`.
pub fn input_matrix() -> Vec<f64> {
    Pattern::all().flat_map(|p| p.inputs()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first() {
        let p = Pattern::from_index(0b1000_0000_0001).unwrap();
        assert_eq!(p.bit(0), 1);
        assert_eq!(p.bit(11), 1);
        assert_eq!(p.bits().iter().map(|&b| b as u32).sum::<u32>(), 2);
        assert!(Pattern::from_index(N_PATTERNS).is_none());
    }

    #[test]
    fn exactly_4096_distinct() {
        let set: std::collections::HashSet<_> = Pattern::all().map(|p| p.bits()).collect();
        assert_eq!(set.len(), 4096);
    }

    proptest! {
        #[test]
        fn index_round_trips(i in 0usize..N_PATTERNS) {
            let p = Pattern::from_index(i).unwrap();
            prop_assert_eq!(Pattern::from_bits(&p.bits()).index(), i);
        }
    }
}
