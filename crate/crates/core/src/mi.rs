//! Exact mutual information and the binned information-plane estimator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ActivationRecord;
use crate::task::JointDistribution;

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Dense joint probability table `p(a,b)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl JointTable {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDistribution(format!(
                "{} entries for a {rows}x{cols} table",
                data.len()
            )));
        }
        Ok(JointTable { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.cols + b]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `I(A;B)` in bits of a dense joint table.
pub fn mutual_information(joint: &JointTable) -> Result<f64> {
    if let Some(p) = joint.data.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
    }
    let total: f64 = joint.data.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("table sums to {total}")));
    }
    let cols = joint.cols;
    Ok(mutual_information_sparse(
        joint.rows,
        joint.cols,
        joint
            .data
            .iter()
            .enumerate()
            .map(|(k, &p)| (k / cols, k % cols, p)),
    ))
}

/// `I(A;B)` from `(a, b, p)` triples; repeated pairs are not allowed.
/// Inputs are assumed normalized. Every sum runs over sorted terms, so the
/// result does not depend on the order of the triples or on how symbols are
/// labeled. Tiny negative results from rounding are clamped to zero.
pub fn mutual_information_sparse(
    n_a: usize,
    n_b: usize,
    entries: impl Iterator<Item = (usize, usize, f64)> + Clone,
) -> f64 {
    let mut rows = vec![Vec::new(); n_a];
    let mut cols = vec![Vec::new(); n_b];
    for (a, b, p) in entries.clone() {
        rows[a].push(p);
        cols[b].push(p);
    }
    let pa: Vec<f64> = rows.into_iter().map(sorted_sum).collect();
    let pb: Vec<f64> = cols.into_iter().map(sorted_sum).collect();
    let terms = entries
        .filter(|&(_, _, p)| p > 0.0)
        .map(|(a, b, p)| p * (p / (pa[a] * pb[b])).log2())
        .collect();
    sorted_sum(terms).max(0.0)
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

/// Value interval mapped onto the bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub lo: f64,
    pub hi: f64,
}

impl BinRange {
    pub const TANH: BinRange = BinRange { lo: -1.0, hi: 1.0 };
    pub const SIGMOID: BinRange = BinRange { lo: 0.0, hi: 1.0 };
}

const RANGE_SLACK: f64 = 1e-9;

/// `floor((v - lo) * bins / (hi - lo))`, with `v = hi` in the top bin.
pub fn bin_index(v: f64, bin_count: usize, range: BinRange) -> Result<u16> {
    let BinRange { lo, hi } = range;
    if !(v >= lo - RANGE_SLACK && v <= hi + RANGE_SLACK) {
        return Err(Error::Range { value: v, lo, hi });
    }
    let raw = ((v - lo) * bin_count as f64 / (hi - lo)).floor();
    Ok(raw.clamp(0.0, (bin_count - 1) as f64) as u16)
}

/// One layer's activations reduced to per-neuron bin indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscretizedLayer {
    width: usize,
    bin_count: usize,
    // n_patterns x width, row-major
    bins: Vec<u16>,
}

impl DiscretizedLayer {
    pub fn from_activations(
        values: &[f64],
        width: usize,
        bin_count: usize,
        range: BinRange,
    ) -> Result<Self> {
        assert!(width > 0 && values.len() % width == 0);
        let bins = values
            .iter()
            .map(|&v| bin_index(v, bin_count, range))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscretizedLayer {
            width,
            bin_count,
            bins,
        })
    }

    /// Builds a layer directly from bin tuples.
    pub fn from_bins(bins: Vec<u16>, width: usize, bin_count: usize) -> Self {
        assert!(width > 0 && bins.len() % width == 0);
        assert!(bins.iter().all(|&b| (b as usize) < bin_count));
        DiscretizedLayer {
            width,
            bin_count,
            bins,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn n_patterns(&self) -> usize {
        self.bins.len() / self.width
    }

    pub fn tuple(&self, x: usize) -> &[u16] {
        &self.bins[x * self.width..(x + 1) * self.width]
    }

    /// Whole-layer symbols: equal bin tuples share an id, ids in order of
    /// first appearance.
    pub fn symbols(&self) -> LayerSymbols {
        let mut ids: HashMap<&[u16], u32> = HashMap::with_capacity(self.n_patterns());
        let symbol = (0..self.n_patterns())
            .map(|x| {
                let next = ids.len() as u32;
                *ids.entry(self.tuple(x)).or_insert(next)
            })
            .collect();
        LayerSymbols {
            symbol,
            n_symbols: ids.len(),
        }
    }
}

/// Deterministic encoder `x -> t` of a binned layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSymbols {
    pub symbol: Vec<u32>,
    pub n_symbols: usize,
}

impl LayerSymbols {
    /// `p(t)` under the pattern marginal of `joint`.
    pub fn marginal(&self, joint: &JointDistribution) -> Vec<f64> {
        let mut p_t = vec![0.0; self.n_symbols];
        for (x, &t) in self.symbol.iter().enumerate() {
            p_t[t as usize] += joint.p_x()[x];
        }
        p_t
    }

    /// Decoder `p(y|t)`, one `[p0, p1]` row per symbol.
    pub fn decoder(&self, joint: &JointDistribution) -> Vec<[f64; 2]> {
        let mut p_ty = vec![[0.0; 2]; self.n_symbols];
        for (x, &t) in self.symbol.iter().enumerate() {
            p_ty[t as usize][0] += joint.joint(x, 0);
            p_ty[t as usize][1] += joint.joint(x, 1);
        }
        p_ty.into_iter()
            .map(|[a, b]| {
                let s = a + b;
                if s > 0.0 {
                    [a / s, b / s]
                } else {
                    [0.5, 0.5]
                }
            })
            .collect()
    }
}

/// Information-plane coordinates of one layer at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoPoint {
    pub layer: usize,
    pub epoch: usize,
    pub i_x: f64,
    pub i_y: f64,
}

/// Bins every layer of a snapshot. Hidden layers use `hidden_range`, the
/// final (output) layer uses `output_range`.
pub fn discretize(
    record: &ActivationRecord,
    bin_count: usize,
    hidden_range: BinRange,
    output_range: BinRange,
) -> Result<Vec<DiscretizedLayer>> {
    let n_layers = record.layers.len();
    record
        .layers
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            let range = if k + 1 == n_layers { output_range } else { hidden_range };
            DiscretizedLayer::from_activations(&layer.values, layer.width, bin_count, range)
        })
        .collect()
}

/// `(I(X;T), I(T;Y))` of a binned layer, against the full rule distribution.
pub fn layer_plane_coords(
    layer: &DiscretizedLayer,
    joint: &JointDistribution,
    layer_index: usize,
    epoch: usize,
) -> InfoPoint {
    assert_eq!(layer.n_patterns(), joint.n_patterns());
    let symbols = layer.symbols();
    let n = joint.n_patterns();
    let i_x = mutual_information_sparse(
        symbols.n_symbols,
        n,
        symbols
            .symbol
            .iter()
            .enumerate()
            .map(|(x, &t)| (t as usize, x, joint.p_x()[x])),
    );
    let mut p_ty = vec![0.0; symbols.n_symbols * 2];
    for (x, &t) in symbols.symbol.iter().enumerate() {
        p_ty[2 * t as usize] += joint.joint(x, 0);
        p_ty[2 * t as usize + 1] += joint.joint(x, 1);
    }
    let i_y = mutual_information_sparse(
        symbols.n_symbols,
        2,
        p_ty.iter().enumerate().map(|(k, &p)| (k / 2, k % 2, p)),
    );
    InfoPoint {
        layer: layer_index,
        epoch,
        i_x,
        i_y,
    }
}

/// Information-plane coordinates of every layer of a snapshot; layers are
/// numbered from 1 (first hidden) to the output.
pub fn snapshot_plane_coords(
    record: &ActivationRecord,
    joint: &JointDistribution,
    bin_count: usize,
) -> Result<Vec<InfoPoint>> {
    let layers = discretize(record, bin_count, BinRange::TANH, BinRange::SIGMOID)?;
    Ok(layers
        .iter()
        .enumerate()
        .map(|(k, layer)| layer_plane_coords(layer, joint, k + 1, record.epoch))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_is_zero() {
        let pa = [0.2, 0.3, 0.5];
        let pb = [0.6, 0.4];
        let data = pa.iter().flat_map(|a| pb.iter().map(move |b| a * b)).collect();
        let mi = mutual_information(&JointTable::new(3, 2, data).unwrap()).unwrap();
        assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn copy_of_fair_bit_is_one_bit() {
        let t = JointTable::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((mutual_information(&t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_symmetric_channel() {
        let t = JointTable::new(2, 2, vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        let mi = mutual_information(&t).unwrap();
        assert!((mi - 0.278072).abs() < 1e-6, "{mi}");
        assert!((mi - (1.0 - binary_entropy(0.2))).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_rejected() {
        let t = JointTable::new(1, 2, vec![0.4, 0.4]).unwrap();
        assert!(matches!(mutual_information(&t), Err(Error::InvalidDistribution(_))));
        let t = JointTable::new(1, 2, vec![1.1, -0.1]).unwrap();
        assert!(mutual_information(&t).is_err());
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(-1.0, 30, BinRange::TANH).unwrap(), 0);
        assert_eq!(bin_index(1.0, 30, BinRange::TANH).unwrap(), 29);
        assert_eq!(bin_index(0.97, 30, BinRange::TANH).unwrap(), 29);
        assert_eq!(bin_index(0.0, 30, BinRange::TANH).unwrap(), 15);
        assert_eq!(bin_index(1.0 + 5e-10, 30, BinRange::TANH).unwrap(), 29);
        assert!(matches!(
            bin_index(1.01, 30, BinRange::TANH),
            Err(Error::Range { .. })
        ));
        assert_eq!(bin_index(1.0, 30, BinRange::SIGMOID).unwrap(), 29);
    }

    fn toy_joint() -> JointDistribution {
        JointDistribution::with_marginal(vec![0.1, 0.2, 0.3, 0.4], vec![0.9, 0.2, 0.6, 0.05]).unwrap()
    }

    #[test]
    fn identity_and_constant_layers() {
        let joint = JointDistribution::from_conditional(
            (0..16).map(|i| (i as f64 + 0.5) / 16.0).collect(),
        )
        .unwrap();
        let identity = DiscretizedLayer::from_bins((0..16).collect(), 1, 16);
        let p = layer_plane_coords(&identity, &joint, 1, 0);
        assert!((p.i_x - 4.0).abs() < 1e-12);
        assert!((p.i_y - joint.mi_xy()).abs() < 1e-12);
        let constant = DiscretizedLayer::from_bins(vec![3; 16], 1, 16);
        let p = layer_plane_coords(&constant, &joint, 1, 0);
        assert_eq!((p.i_x, p.i_y), (0.0, 0.0));
    }

    #[test]
    fn two_neuron_layer_matches_brute_force() {
        let joint = toy_joint();
        // patterns 0 and 2 collide, 1 and 3 distinct
        let bins = vec![1, 2, 0, 0, 1, 2, 3, 3];
        let layer = DiscretizedLayer::from_bins(bins.clone(), 2, 4);
        let got = layer_plane_coords(&layer, &joint, 1, 0);

        // Oracle: explicit double loops over (t, x) and (t, y).
        let tuples: Vec<(u16, u16)> = (0..4).map(|x| (bins[2 * x], bins[2 * x + 1])).collect();
        let mut distinct = tuples.clone();
        distinct.sort();
        distinct.dedup();
        let mut ix = 0.0;
        let mut iy = 0.0;
        for t in &distinct {
            let pt: f64 = (0..4).filter(|&x| tuples[x] == *t).map(|x| joint.p_x()[x]).sum();
            for x in 0..4 {
                let ptx = if tuples[x] == *t { joint.p_x()[x] } else { 0.0 };
                if ptx > 0.0 {
                    ix += ptx * (ptx / (pt * joint.p_x()[x])).log2();
                }
            }
            for y in 0..2 {
                let pty: f64 = (0..4).filter(|&x| tuples[x] == *t).map(|x| joint.joint(x, y)).sum();
                let py: f64 = (0..4).map(|x| joint.joint(x, y)).sum();
                if pty > 0.0 {
                    iy += pty * (pty / (pt * py)).log2();
                }
            }
        }
        assert!((got.i_x - ix).abs() < 1e-12);
        assert!((got.i_y - iy).abs() < 1e-12);
    }

    fn random_table(rng: &mut ChaCha8Rng) -> JointTable {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let mut data: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() })
            .collect();
        if data.iter().all(|&p| p == 0.0) {
            data[0] = 1.0;
        }
        let s: f64 = data.iter().sum();
        data.iter_mut().for_each(|p| *p /= s);
        JointTable::new(rows, cols, data).unwrap()
    }

    fn double_loop_mi(t: &JointTable) -> f64 {
        let mut mi = 0.0;
        for a in 0..t.rows() {
            for b in 0..t.cols() {
                let p = t.get(a, b);
                if p == 0.0 {
                    continue;
                }
                let pa: f64 = (0..t.cols()).map(|c| t.get(a, c)).sum();
                let pb: f64 = (0..t.rows()).map(|r| t.get(r, b)).sum();
                mi += p * (p.ln() - pa.ln() - pb.ln());
            }
        }
        (mi / std::f64::consts::LN_2).max(0.0)
    }

    #[test]
    fn random_tables_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let t = random_table(&mut rng);
            let got = mutual_information(&t).unwrap();
            assert!((got - double_loop_mi(&t)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn table_permutation_is_exact(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(&mut rng);
            let mut ra: Vec<usize> = (0..t.rows()).collect();
            let mut cb: Vec<usize> = (0..t.cols()).collect();
            ra.shuffle(&mut rng);
            cb.shuffle(&mut rng);
            let data = ra.iter().flat_map(|&a| cb.iter().map(move |&b| (a, b))).map(|(a, b)| t.get(a, b)).collect();
            let p = JointTable::new(t.rows(), t.cols(), data).unwrap();
            prop_assert_eq!(mutual_information(&t).unwrap(), mutual_information(&p).unwrap());
        }

        #[test]
        fn symbol_relabeling_is_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let joint = JointDistribution::from_conditional(
                (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
            let bins: Vec<u16> = (0..64 * 2).map(|_| rng.random_range(0..5)).collect();
            let a = layer_plane_coords(&DiscretizedLayer::from_bins(bins.clone(), 2, 5), &joint, 1, 0);
            // bijection on symbols: reverse bin order in each neuron
            let relabeled: Vec<u16> = bins.iter().map(|&b| 4 - b).collect();
            let b = layer_plane_coords(&DiscretizedLayer::from_bins(relabeled, 2, 5), &joint, 1, 0);
            prop_assert_eq!(a.i_x, b.i_x);
            prop_assert_eq!(a.i_y, b.i_y);
        }

        #[test]
        fn coarsening_never_raises_ix(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let joint = JointDistribution::from_conditional(
                (0..128).map(|_| rng.random::<f64>()).collect()).unwrap();
            let acts: Vec<f64> = (0..128 * 3).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let fine = DiscretizedLayer::from_activations(&acts, 3, 30, BinRange::TANH).unwrap();
            let coarse = DiscretizedLayer::from_activations(&acts, 3, 15, BinRange::TANH).unwrap();
            let f = layer_plane_coords(&fine, &joint, 1, 0);
            let c = layer_plane_coords(&coarse, &joint, 1, 0);
            prop_assert!(c.i_x <= f.i_x + 1e-12);
            prop_assert!(c.i_y <= f.i_y + 1e-12);
        }
    }
}
