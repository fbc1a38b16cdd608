//! Large-scale-fading AP selection and the sparse channel it induces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, C64};

/// AP sets per user (sorted, zero-based AP indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApSets(pub Vec<Vec<usize>>);

#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub sets: ApSets,
    pub g_bar: CMat,
}

/// User `k` is served by AP `n` iff `zeta[n][k]` exceeds the network-wide
/// mean gain. A user left without APs falls back to its strongest AP (lowest
/// index on ties).
pub fn select_aps(zeta: &DMatrix<f64>) -> ApSets {
    let (n_t, k) = zeta.shape();
    let mean = zeta.sum() / (n_t * k) as f64;
    let sets = (0..k)
        .map(|u| {
            let mut set: Vec<usize> = (0..n_t).filter(|&n| zeta[(n, u)] - mean > 0.0).collect();
            if set.is_empty() {
                let mut best = 0;
                for n in 1..n_t {
                    if zeta[(n, u)] > zeta[(best, u)] {
                        best = n;
                    }
                }
                set.push(best);
            }
            set
        })
        .collect();
    ApSets(sets)
}

/// Zeroes every estimated coefficient outside the user's AP set.
pub fn sparsify(g_hat: &CMat, sets: &ApSets) -> CMat {
    let mut g_bar = CMat::zeros(g_hat.nrows(), g_hat.ncols());
    for (k, set) in sets.0.iter().enumerate() {
        for &n in set {
            g_bar[(n, k)] = g_hat[(n, k)];
        }
    }
    g_bar
}

pub fn cluster(zeta: &DMatrix<f64>, g_hat: &CMat) -> ClusterAssignment {
    let sets = select_aps(zeta);
    let g_bar = sparsify(g_hat, &sets);
    ClusterAssignment { sets, g_bar }
}

impl ApSets {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("AP sets serialize")
    }

    /// Mask with ones on selected links.
    pub fn mask(&self, n_t: usize) -> CMat {
        let mut m = CMat::zeros(n_t, self.0.len());
        for (k, set) in self.0.iter().enumerate() {
            for &n in set {
                m[(n, k)] = C64::new(1.0, 0.0);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_estimate;
    use crate::rng::{substream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn uniform_gains_fall_back_to_first_ap() {
        let zeta = DMatrix::from_element(4, 3, 2.0);
        assert_eq!(select_aps(&zeta), ApSets(vec![vec![0], vec![0], vec![0]]));
    }

    #[test]
    fn hand_threshold() {
        let zeta = DMatrix::from_column_slice(2, 1, &[4.0, 1.0]);
        assert_eq!(select_aps(&zeta), ApSets(vec![vec![0]]));
    }

    #[test]
    fn dominant_ap_per_user_gives_disjoint_singletons() {
        let mut zeta = DMatrix::from_element(5, 3, 1e-3);
        zeta[(4, 0)] = 10.0;
        zeta[(1, 1)] = 10.0;
        zeta[(2, 2)] = 10.0;
        assert_eq!(select_aps(&zeta), ApSets(vec![vec![4], vec![1], vec![2]]));
    }

    #[test]
    fn full_mask_keeps_estimate() {
        let zeta = DMatrix::from_element(4, 2, 1.0);
        let g = sample_estimate(&zeta, &mut substream(1, Purpose::Test, 0, 0));
        let all = ApSets(vec![(0..4).collect(), (0..4).collect()]);
        assert_eq!(sparsify(&g, &all), g);
    }

    #[test]
    fn singleton_sets_leave_one_nonzero_per_column() {
        let zeta = DMatrix::from_element(6, 3, 1.0);
        let g = sample_estimate(&zeta, &mut substream(2, Purpose::Test, 0, 0));
        let sets = ApSets(vec![vec![5], vec![0], vec![3]]);
        let g_bar = sparsify(&g, &sets);
        for k in 0..3 {
            assert_eq!(g_bar.column(k).iter().filter(|z| z.norm() > 0.0).count(), 1);
        }
    }

    #[test]
    fn json_export() {
        let sets = ApSets(vec![vec![0, 2], vec![1]]);
        assert_eq!(sets.to_json(), "[[0,2],[1]]");
        let back: ApSets = serde_json::from_str(&sets.to_json()).unwrap();
        assert_eq!(back, sets);
    }

    fn zeta_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..6, 1usize..4).prop_flat_map(|(extra, k)| {
            let n_t = k + extra;
            prop::collection::vec(1e-3f64..1e3, n_t * k).prop_map(move |v| DMatrix::from_vec(n_t, k, v))
        })
    }

    proptest! {
        #[test]
        fn nonzero_pattern_equals_sets(zeta in zeta_strategy(), seed in 0u64..1000) {
            let g = sample_estimate(&zeta, &mut substream(seed, Purpose::Test, 0, 0));
            let c = cluster(&zeta, &g);
            for (k, set) in c.sets.0.iter().enumerate() {
                prop_assert!(!set.is_empty());
                for n in 0..zeta.nrows() {
                    let selected = set.contains(&n);
                    prop_assert_eq!(c.g_bar[(n, k)].norm() > 0.0, selected);
                    if selected {
                        prop_assert_eq!(c.g_bar[(n, k)], g[(n, k)]);
                    }
                }
            }
        }

        #[test]
        fn scale_invariant(zeta in zeta_strategy(), c in 1e-6f64..1e6) {
            prop_assert_eq!(select_aps(&zeta), select_aps(&zeta.scale(c)));
        }

        #[test]
        fn permutation_equivariant(zeta in zeta_strategy(), shift in 0usize..8) {
            let k = zeta.ncols();
            let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
            let permuted = DMatrix::from_fn(zeta.nrows(), k, |n, u| zeta[(n, perm[u])]);
            let base = select_aps(&zeta);
            let moved = select_aps(&permuted);
            for (u, &from) in perm.iter().enumerate() {
                prop_assert_eq!(&moved.0[u], &base.0[from]);
            }
        }
    }
}
