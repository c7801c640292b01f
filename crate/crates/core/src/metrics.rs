//! Grids, error fields, discrete norms and percentile aggregation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::TransformMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Equispaced,
    ChebyshevLobatto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: GridKind,
    pub intervals: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    /// Same interval and count in every dimension.
    pub fn square(kind: GridKind, lower: f64, upper: f64, count: usize, dim: usize) -> Self {
        GridSpec {
            kind,
            intervals: vec![(lower, upper); dim],
            counts: vec![count; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.len() != self.counts.len() || self.intervals.is_empty() {
            return Err(Error::InvalidArgument("grid needs one count per interval".into()));
        }
        for (&(a, b), &k) in self.intervals.iter().zip(&self.counts) {
            if !(a < b) || k < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid interval [{a}, {b}] with {k} points is invalid"
                )));
            }
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.counts.iter().product()
    }
}

/// One-dimensional nodes, ascending, endpoints included.
pub fn nodes_1d(kind: GridKind, a: f64, b: f64, k: usize) -> Vec<f64> {
    match kind {
        GridKind::Equispaced => {
            let h = (b - a) / (k - 1) as f64;
            (0..k)
                .map(|i| if i + 1 == k { b } else { a + h * i as f64 })
                .collect()
        }
        GridKind::ChebyshevLobatto => {
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            // cos(pi (i-1)/(k-1)) for i = 1..k runs from 1 to -1; reversed to ascend.
            let mut v: Vec<f64> = (0..k)
                .map(|i| {
                    let j = k - 1 - i;
                    // Exact symmetric endpoints and center.
                    if 2 * j == k - 1 {
                        mid
                    } else {
                        mid + half * (PI * j as f64 / (k - 1) as f64).cos()
                    }
                })
                .collect();
            v[0] = a;
            v[k - 1] = b;
            v
        }
    }
}

/// Tensor-product grid; the last dimension varies fastest.
pub fn make_grid(spec: &GridSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let axes: Vec<Vec<f64>> = spec
        .intervals
        .iter()
        .zip(&spec.counts)
        .map(|(&(a, b), &k)| nodes_1d(spec.kind, a, b, k))
        .collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    Ok(points)
}

/// `field[j][i] = map_j(x_i) - oracle_j(x_i)`.
pub fn error_field(
    map: &dyn TransformMap,
    oracle: &dyn TransformMap,
    grid: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = map.dim();
    if oracle.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: oracle.dim(),
        });
    }
    let mut field = vec![Vec::with_capacity(grid.len()); n];
    for x in grid {
        let a = map.eval(x)?;
        let b = oracle.eval(x)?;
        for j in 0..n {
            field[j].push(a[j] - b[j]);
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Unnormalized discrete norms over all entries.
pub fn norms(field: &[f64]) -> Norms {
    let mut l1 = 0.0;
    let mut sq = 0.0;
    let mut linf = 0.0f64;
    for &e in field {
        let a = e.abs();
        l1 += a;
        sq += e * e;
        linf = linf.max(a);
    }
    Norms {
        l1,
        l2: sq.sqrt(),
        linf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub l1: Summary,
    pub l2: Summary,
    pub linf: Summary,
    pub runs: usize,
}

/// Percentile by linear interpolation between order statistics at the
/// zero-based position `q (N-1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Summary {
        median: percentile(&v, 0.5),
        p05: percentile(&v, 0.05),
        p95: percentile(&v, 0.95),
    }
}

pub fn uq_aggregate(per_run: &[Norms]) -> Result<ErrorStats> {
    if per_run.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 2 runs, got {}",
            per_run.len()
        )));
    }
    let pick = |f: fn(&Norms) -> f64| summarize(&per_run.iter().map(f).collect::<Vec<_>>());
    Ok(ErrorStats {
        l1: pick(|n| n.l1),
        l2: pick(|n| n.l2),
        linf: pick(|n| n.linf),
        runs: per_run.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::ExprMap;

    #[test]
    fn chebyshev_three_nodes() {
        assert_eq!(nodes_1d(GridKind::ChebyshevLobatto, -1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn equispaced_spacing() {
        let v = nodes_1d(GridKind::Equispaced, -0.495, 0.0, 15);
        for w in v.windows(2) {
            assert!((w[1] - w[0] - 0.495 / 14.0).abs() < 1e-15);
        }
        assert!((v[1] - v[0] - 0.035357142857142857).abs() < 1e-12);
        assert_eq!((v[0], v[14]), (-0.495, 0.0));
    }

    #[test]
    fn grid_counts() {
        let spec = GridSpec::square(GridKind::Equispaced, -0.495, 0.0, 15, 2);
        assert_eq!(make_grid(&spec).unwrap().len(), 225);
        let spec = GridSpec::square(GridKind::ChebyshevLobatto, -0.495, 0.0, 20, 2);
        assert_eq!(make_grid(&spec).unwrap().len(), 400);
        let bad = GridSpec::square(GridKind::Equispaced, 0.0, 0.0, 15, 2);
        assert!(make_grid(&bad).is_err());
    }

    #[test]
    fn chebyshev_symmetry() {
        for k in [2, 5, 20, 21] {
            let (a, b) = (-0.91, 0.0);
            let v = nodes_1d(GridKind::ChebyshevLobatto, a, b, k);
            for i in 0..k {
                let mirrored = a + b - v[k - 1 - i];
                assert!((v[i] - mirrored).abs() < 1e-14, "k={k} i={i}");
            }
            assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn norms_examples() {
        assert_eq!(
            norms(&vec![1.0; 400]),
            Norms {
                l1: 400.0,
                l2: 20.0,
                linf: 1.0
            }
        );
        assert_eq!(
            norms(&[-3.0]),
            Norms {
                l1: 3.0,
                l2: 3.0,
                linf: 3.0
            }
        );
    }

    #[test]
    fn aggregation() {
        let runs: Vec<Norms> = (1..=5)
            .map(|v| Norms {
                l1: v as f64,
                l2: v as f64,
                linf: v as f64,
            })
            .collect();
        let s = uq_aggregate(&runs).unwrap();
        assert_eq!(s.l1.median, 3.0);
        assert!((s.l1.p05 - 1.2).abs() < 1e-12 && (s.l1.p95 - 4.8).abs() < 1e-12);
        let flat = vec![
            Norms {
                l1: 2.5,
                l2: 2.5,
                linf: 2.5
            };
            4
        ];
        let s = uq_aggregate(&flat).unwrap();
        assert_eq!((s.linf.median, s.linf.p05, s.linf.p95), (2.5, 2.5, 2.5));
        assert!(uq_aggregate(&runs[..1]).is_err());
    }

    #[test]
    fn identical_maps_give_zero_field() {
        let m = ExprMap::parse(2, &["x1*x2", "exp(x1)"]).unwrap();
        let grid = make_grid(&GridSpec::square(GridKind::ChebyshevLobatto, -1.0, 0.0, 5, 2)).unwrap();
        let f = error_field(&m, &m, &grid).unwrap();
        assert!(f.iter().flatten().all(|&v| v == 0.0));
    }
}
