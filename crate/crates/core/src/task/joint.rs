use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mi::{mutual_information_sparse, JointTable};

/// Exact joint distribution of a pattern `x` and a binary label `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    p_x: Vec<f64>,
    p_y1: Vec<f64>,
    mi_xy: f64,
}

impl JointDistribution {
    /// Uniform `p(x)` over the given conditionals `p(y=1|x)`.
    pub fn from_conditional(p_y1: Vec<f64>) -> Result<Self> {
        let n = p_y1.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("no patterns".into()));
        }
        Self::with_marginal(vec![1.0 / n as f64; n], p_y1)
    }

    pub fn with_marginal(p_x: Vec<f64>, p_y1: Vec<f64>) -> Result<Self> {
        if p_x.len() != p_y1.len() {
            return Err(Error::InvalidDistribution(format!(
                "marginal has {} entries, conditional {}",
                p_x.len(),
                p_y1.len()
            )));
        }
        if let Some(p) = p_x.iter().chain(&p_y1).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDistribution(format!("probability {p} outside [0,1]")));
        }
        let total: f64 = p_x.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("p(x) sums to {total}")));
        }
        let mut joint = JointDistribution {
            p_x,
            p_y1,
            mi_xy: 0.0,
        };
        joint.mi_xy = joint.recompute_mi();
        Ok(joint)
    }

    fn recompute_mi(&self) -> f64 {
        let n = self.p_x.len();
        mutual_information_sparse(
            n,
            2,
            (0..n).flat_map(|x| {
                let (px, p1) = (self.p_x[x], self.p_y1[x]);
                [(x, 0, px * (1.0 - p1)), (x, 1, px * p1)]
            }),
        )
    }

    pub fn n_patterns(&self) -> usize {
        self.p_x.len()
    }

    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }

    /// `p(y=1|x)` per pattern.
    pub fn p_y1(&self) -> &[f64] {
        &self.p_y1
    }

    /// `[p(y=0|x), p(y=1|x)]`.
    pub fn conditional(&self, x: usize) -> [f64; 2] {
        [1.0 - self.p_y1[x], self.p_y1[x]]
    }

    pub fn joint(&self, x: usize, y: usize) -> f64 {
        self.p_x[x] * self.conditional(x)[y]
    }

    /// `p(y=1)`.
    pub fn prior(&self) -> f64 {
        self.p_x.iter().zip(&self.p_y1).map(|(a, b)| a * b).sum()
    }

    /// `I(X;Y)` in bits.
    pub fn mi_xy(&self) -> f64 {
        self.mi_xy
    }

    pub fn to_table(&self) -> JointTable {
        let n = self.n_patterns();
        let mut data = Vec::with_capacity(2 * n);
        for x in 0..n {
            data.push(self.joint(x, 0));
            data.push(self.joint(x, 1));
        }
        JointTable::new(n, 2, data).expect("joint distribution is normalized")
    }

    /// Writes `pattern_index,p_y1` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "pattern_index,p_y1")?;
        for (x, p) in self.p_y1.iter().enumerate() {
            writeln!(out, "{x},{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::mutual_information;
    use proptest::prelude::*;

    #[test]
    fn stored_mi_matches_table() {
        let p: Vec<f64> = (0..64).map(|i| (i as f64 / 63.0).powi(2)).collect();
        let j = JointDistribution::from_conditional(p).unwrap();
        let t = mutual_information(&j.to_table()).unwrap();
        assert!((t - j.mi_xy()).abs() < 1e-12);
        assert!((j.p_x().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(JointDistribution::from_conditional(vec![0.5, 1.2]).is_err());
    }

    proptest! {
        #[test]
        fn mi_invariant_under_pattern_relabeling(
            p in proptest::collection::vec(0.0f64..=1.0, 2..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let j = JointDistribution::from_conditional(p.clone()).unwrap();
            let mut q = p;
            q.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let k = JointDistribution::from_conditional(q).unwrap();
            prop_assert!((j.mi_xy() - k.mi_xy()).abs() < 1e-12);
        }
    }
}
