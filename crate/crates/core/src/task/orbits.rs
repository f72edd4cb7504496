//! The icosahedral rotation group acting on input patterns.

use serde::{Deserialize, Serialize};

use super::pattern::{Pattern, N_INPUTS, N_PATTERNS};
use super::sphere::{cross, dot, normalize, SpherePoints, Vec3};
use crate::error::{Error, Result};

const MATCH_TOL: f64 = 1e-9;

/// Rotations of the sphere that map the point set onto itself, stored as
/// the vertex permutations they induce.
#[derive(Debug, Clone)]
pub struct RotationGroup {
    perms: Vec<[u8; N_INPUTS]>,
}

fn frame(u: Vec3, v: Vec3) -> [Vec3; 3] {
    let e1 = normalize(u);
    let d = dot(v, e1);
    let e2 = normalize([v[0] - d * e1[0], v[1] - d * e1[1], v[2] - d * e1[2]]);
    [e1, e2, cross(e1, e2)]
}

fn apply(target: &[Vec3; 3], source: &[Vec3; 3], p: Vec3) -> Vec3 {
    // R = T S^T with frames as columns
    let coords = [dot(source[0], p), dot(source[1], p), dot(source[2], p)];
    std::array::from_fn(|k| {
        target[0][k] * coords[0] + target[1][k] * coords[1] + target[2][k] * coords[2]
    })
}

impl RotationGroup {
    /// Builds the order-60 rotation group of an icosahedral point set.
    ///
    /// Every rotation is determined by where it sends one vertex and one of
    /// its nearest neighbours; each candidate is checked to permute the set.
    pub fn icosahedral(points: &SpherePoints) -> Result<Self> {
        let pts = points.points();
        if pts.len() != N_INPUTS {
            return Err(Error::SymmetryBroken(format!(
                "expected {N_INPUTS} points, got {}",
                pts.len()
            )));
        }
        let neighbours = |i: usize| -> Vec<usize> {
            let best = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| dot(pts[i], pts[j]))
                .fold(f64::NEG_INFINITY, f64::max);
            (0..pts.len())
                .filter(|&j| j != i && (dot(pts[i], pts[j]) - best).abs() < 1e-6)
                .collect()
        };
        let ref_nb = neighbours(0);
        if ref_nb.len() != 5 {
            return Err(Error::SymmetryBroken(format!(
                "vertex 0 has {} nearest neighbours, expected 5",
                ref_nb.len()
            )));
        }
        let source = frame(pts[0], pts[ref_nb[0]]);

        let mut perms = Vec::with_capacity(60);
        for a in 0..pts.len() {
            let nb = neighbours(a);
            if nb.len() != 5 {
                return Err(Error::SymmetryBroken(format!(
                    "vertex {a} has {} nearest neighbours, expected 5",
                    nb.len()
                )));
            }
            for &b in &nb {
                let target = frame(pts[a], pts[b]);
                let mut perm = [0u8; N_INPUTS];
                for (i, &p) in pts.iter().enumerate() {
                    let q = apply(&target, &source, p);
                    let hit = pts.iter().position(|&r| {
                        let d = [q[0] - r[0], q[1] - r[1], q[2] - r[2]];
                        dot(d, d).sqrt() < MATCH_TOL.sqrt()
                    });
                    match hit {
                        Some(j) => perm[i] = j as u8,
                        None => {
                            return Err(Error::SymmetryBroken(format!(
                                "rotation sending vertex 0 to {a} does not map vertex {i} onto the set"
                            )))
                        }
                    }
                }
                perms.push(perm);
            }
        }
        perms.sort_unstable();
        perms.dedup();
        if perms.len() != 60 {
            return Err(Error::SymmetryBroken(format!(
                "found {} distinct rotations, expected 60",
                perms.len()
            )));
        }
        Ok(RotationGroup { perms })
    }

    pub fn permutations(&self) -> &[[u8; N_INPUTS]] {
        &self.perms
    }

    pub fn order(&self) -> usize {
        self.perms.len()
    }
}

/// Partition of all patterns into orbits of the rotation group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitTable {
    orbit_id: Vec<u32>,
    orbit_count: usize,
}

impl OrbitTable {
    pub fn from_group(group: &RotationGroup) -> Self {
        let mut orbit_id = vec![u32::MAX; N_PATTERNS];
        let mut next = 0u32;
        for p in Pattern::all() {
            if orbit_id[p.index()] != u32::MAX {
                continue;
            }
            for perm in group.permutations() {
                orbit_id[p.permuted(perm).index()] = next;
            }
            next += 1;
        }
        OrbitTable {
            orbit_id,
            orbit_count: next as usize,
        }
    }

    pub fn orbit_of(&self, pattern: Pattern) -> u32 {
        self.orbit_id[pattern.index()]
    }

    pub fn orbit_ids(&self) -> &[u32] {
        &self.orbit_id
    }

    pub fn orbit_count(&self) -> usize {
        self.orbit_count
    }

    pub fn orbit_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.orbit_count];
        for &id in &self.orbit_id {
            sizes[id as usize] += 1;
        }
        sizes
    }
}

/// Number of ones and the histogram of pairwise inner products among the
/// active points. Any rule built from the harmonic power spectrum depends on
/// a pattern only through this profile.
pub fn pair_profile(points: &SpherePoints, pattern: Pattern) -> Vec<usize> {
    let pts = points.points();
    let mut levels: Vec<f64> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = dot(pts[i], pts[j]);
            if !levels.iter().any(|&l| (l - d).abs() < MATCH_TOL.sqrt()) {
                levels.push(d);
            }
        }
    }
    levels.sort_by(f64::total_cmp);
    let active: Vec<usize> = (0..pts.len()).filter(|&i| pattern.bit(i) == 1).collect();
    let mut profile = vec![0; levels.len() + 1];
    profile[0] = active.len();
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            let d = dot(pts[i], pts[j]);
            let k = levels
                .iter()
                .position(|&l| (l - d).abs() < MATCH_TOL.sqrt())
                .expect("level table covers all pairs");
            profile[k + 1] += 1;
        }
    }
    profile
}

impl OrbitTable {
    /// Merges orbits whose members share a [`pair_profile`].
    pub fn merge_by_profile(&self, points: &SpherePoints) -> Self {
        let mut class_of_profile: std::collections::HashMap<Vec<usize>, u32> = Default::default();
        let mut class_of_orbit = vec![u32::MAX; self.orbit_count];
        let mut orbit_id = vec![0; N_PATTERNS];
        for p in Pattern::all() {
            let o = self.orbit_of(p) as usize;
            if class_of_orbit[o] == u32::MAX {
                let next = class_of_profile.len() as u32;
                class_of_orbit[o] = *class_of_profile.entry(pair_profile(points, p)).or_insert(next);
            }
            orbit_id[p.index()] = class_of_orbit[o];
        }
        OrbitTable {
            orbit_id,
            orbit_count: class_of_profile.len(),
        }
    }
}

/// Partition of the patterns into classes on which every power-spectrum
/// rule is constant: orbits of the icosahedral rotation group, merged when
/// they share a pair-distance profile. The rotation group alone leaves 96
/// orbits; the merged partition has 64 classes.
pub fn enumerate_orbits(points: &SpherePoints) -> Result<OrbitTable> {
    let group = RotationGroup::icosahedral(points)?;
    Ok(OrbitTable::from_group(&group).merge_by_profile(points))
}
