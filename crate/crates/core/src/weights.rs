//! Static combination matrices.
//!
//! Orientation is column-stochastic: column `k` holds the weights `c_ik`
//! that node `k` applies to the local estimates of its neighbors `i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Tolerance on column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinationRule {
    NonCooperative,
    Uniform,
    Metropolis,
}

impl CombinationRule {
    pub const ALL: [CombinationRule; 3] = [
        CombinationRule::NonCooperative,
        CombinationRule::Uniform,
        CombinationRule::Metropolis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CombinationRule::NonCooperative => "non-cooperative",
            CombinationRule::Uniform => "uniform",
            CombinationRule::Metropolis => "metropolis",
        }
    }

    pub fn build(self, t: &Topology) -> CombinationMatrix {
        match self {
            CombinationRule::NonCooperative => CombinationMatrix::non_cooperative(t),
            CombinationRule::Uniform => CombinationMatrix::uniform(t),
            CombinationRule::Metropolis => CombinationMatrix::metropolis(t),
        }
    }

    pub fn is_cooperative(self) -> bool {
        self != CombinationRule::NonCooperative
    }
}

impl fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombinationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinationRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown combination rule {s:?} (expected non-cooperative, uniform or metropolis)"
                ))
            })
    }
}

/// First violated weight constraint found by [`CombinationMatrix::validate`].
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum WeightViolation {
    #[error("negative weight c[{i},{k}] = {value}")]
    Negative { i: usize, k: usize, value: f64 },
    #[error("column {k} sums to {sum}, not 1")]
    ColumnSum { k: usize, sum: f64 },
    #[error("weight c[{i},{k}] = {value} but node {i} is not a neighbor of {k}")]
    Support { i: usize, k: usize, value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinationMatrix {
    entries: DMatrix<f64>,
}

impl CombinationMatrix {
    /// Wraps a matrix without checking it; see [`CombinationMatrix::validate`].
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        assert!(entries.is_square(), "combination matrix must be square");
        CombinationMatrix { entries }
    }

    pub fn non_cooperative(t: &Topology) -> Self {
        CombinationMatrix {
            entries: DMatrix::identity(t.node_count(), t.node_count()),
        }
    }

    /// `c_ik = 1/|N_k|` on the neighborhood of `k`.
    pub fn uniform(t: &Topology) -> Self {
        let v = t.node_count();
        let sizes = t.neighborhood_sizes();
        let entries = DMatrix::from_fn(v, v, |i, k| {
            if t.is_adjacent(i, k) {
                1.0 / sizes[k] as f64
            } else {
                0.0
            }
        });
        CombinationMatrix { entries }
    }

    /// `c_ik = 1/max(|N_k|, |N_i|)` for neighbors `i ≠ k`; the diagonal
    /// takes up the remaining mass.
    pub fn metropolis(t: &Topology) -> Self {
        let v = t.node_count();
        let sizes = t.neighborhood_sizes();
        let mut entries = DMatrix::zeros(v, v);
        for k in 0..v {
            let mut off = 0.0;
            for i in t.neighbors(k).filter(|&i| i != k) {
                let c = 1.0 / sizes[k].max(sizes[i]) as f64;
                entries[(i, k)] = c;
                off += c;
            }
            entries[(k, k)] = 1.0 - off;
        }
        CombinationMatrix { entries }
    }

    pub fn node_count(&self) -> usize {
        self.entries.nrows()
    }

    /// `c_ik`: weight node `k` gives to node `i`.
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.entries[(i, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Checks non-negativity, unit column sums and neighborhood support, in
    /// that order, and reports the first violation.
    pub fn validate(&self, t: &Topology) -> Result<()> {
        let v = self.node_count();
        if v != t.node_count() {
            return Err(Error::invalid(format!(
                "combination matrix is {v}×{v} but topology has {} nodes",
                t.node_count()
            )));
        }
        for k in 0..v {
            for i in 0..v {
                let value = self.entries[(i, k)];
                if value < 0.0 || !value.is_finite() {
                    return Err(WeightViolation::Negative { i, k, value }.into());
                }
            }
        }
        for k in 0..v {
            let sum = self.entries.column(k).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(WeightViolation::ColumnSum { k, sum }.into());
            }
        }
        for k in 0..v {
            for i in 0..v {
                let value = self.entries[(i, k)];
                if value != 0.0 && !t.is_adjacent(i, k) {
                    return Err(WeightViolation::Support { i, k, value }.into());
                }
            }
        }
        Ok(())
    }

    /// Sparse view: for each node `k`, the pairs `(i, c_ik)` with `c_ik ≠ 0`.
    pub fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let v = self.node_count();
        (0..v)
            .map(|k| {
                (0..v)
                    .filter_map(|i| {
                        let c = self.entries[(i, k)];
                        (c != 0.0).then_some((i, c))
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn columns(c: &CombinationMatrix) -> Vec<Vec<f64>> {
        let v = c.node_count();
        (0..v).map(|k| (0..v).map(|i| c.weight(i, k)).collect()).collect()
    }

    fn assert_columns(c: &CombinationMatrix, expected: &[[f64; 3]; 3]) {
        for (got, want) in columns(c).iter().zip(expected) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 1e-15, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn non_cooperative_is_identity() {
        let t = Topology::path_graph(3).unwrap();
        assert_eq!(
            CombinationMatrix::non_cooperative(&t).as_matrix(),
            &DMatrix::<f64>::identity(3, 3)
        );
        let single = Topology::complete_graph(1).unwrap();
        for rule in CombinationRule::ALL {
            assert_eq!(rule.build(&single).weight(0, 0), 1.0);
        }
    }

    #[test]
    fn path_graph_rules_by_hand() {
        let t = Topology::path_graph(3).unwrap();
        let (h, th) = (0.5, 1.0 / 3.0);
        assert_columns(
            &CombinationMatrix::uniform(&t),
            &[[h, h, 0.0], [th, th, th], [0.0, h, h]],
        );
        assert_columns(
            &CombinationMatrix::metropolis(&t),
            &[[2.0 / 3.0, th, 0.0], [th, th, th], [0.0, th, 2.0 / 3.0]],
        );
    }

    #[test]
    fn complete_graph_rules_coincide() {
        for v in 1..12 {
            let t = Topology::complete_graph(v).unwrap();
            let u = CombinationMatrix::uniform(&t);
            let m = CombinationMatrix::metropolis(&t);
            for i in 0..v {
                for k in 0..v {
                    assert!((u.weight(i, k) - 1.0 / v as f64).abs() <= 1e-15);
                    assert!((u.weight(i, k) - m.weight(i, k)).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn validate_reports_each_clause() {
        let t = Topology::path_graph(3).unwrap();
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 1)] = 0.9;
        assert!(matches!(
            CombinationMatrix::from_matrix(m).validate(&t),
            Err(Error::Weights(WeightViolation::ColumnSum { k: 1, .. }))
        ));

        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(2, 0)] = 0.5;
        m[(0, 0)] = 0.5;
        assert!(matches!(
            CombinationMatrix::from_matrix(m).validate(&t),
            Err(Error::Weights(WeightViolation::Support { i: 2, k: 0, .. }))
        ));

        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 0)] = -0.5;
        m[(0, 0)] = 1.5;
        assert!(matches!(
            CombinationMatrix::from_matrix(m).validate(&t),
            Err(Error::Weights(WeightViolation::Negative { .. }))
        ));

        let k4 = Topology::complete_graph(4).unwrap();
        assert!(matches!(
            CombinationMatrix::uniform(&t).validate(&k4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in CombinationRule::ALL {
            assert_eq!(rule.as_str().parse::<CombinationRule>().unwrap(), rule);
        }
        assert!("hastings".parse::<CombinationRule>().is_err());
    }

    proptest! {
        #[test]
        fn constructors_are_left_stochastic(v in 1usize..30, p in 0.05f64..=1.0, seed: u64) {
            let t = Topology::random_connected(v, p, seed).unwrap();
            for rule in CombinationRule::ALL {
                let c = rule.build(&t);
                prop_assert!(c.validate(&t).is_ok());
                for k in 0..v {
                    let col: f64 = (0..v).map(|i| c.weight(i, k)).sum();
                    prop_assert!((col - 1.0).abs() <= STOCHASTIC_TOL);
                }
            }
        }
    }
}
