//! Bounded open domains around a stable state: an interval in one dimension
//! and a ball in two or more, with boundary discretization, outward normals,
//! and offset exterior targets for boundary scans.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Open interval (lo, hi) in one dimension.
    Interval { lo: f64, hi: f64 },
    /// Open ball around `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Domain> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad interval ({lo}, {hi})")));
        }
        Ok(Domain::Interval { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Domain> {
        if center.is_empty() || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid("ball needs a nonempty center and positive radius"));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ball center must be finite"));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Ball { center, .. } => center.len(),
        }
    }

    /// Membership in the open domain; the boundary counts as outside.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Interval { lo, hi } => x[0] > *lo && x[0] < *hi,
            Domain::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 < radius * radius
            }
        }
    }

    pub fn contains_origin(&self) -> bool {
        self.contains(&vec![0.0; self.dim()])
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Interval { lo, hi } => hi - lo,
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Distance from the origin to the boundary (the inradius seen from the
    /// stable state). Errors when the origin is outside.
    pub fn inradius_from_origin(&self) -> Result<f64> {
        if !self.contains_origin() {
            return Err(Error::invalid("domain does not contain the origin"));
        }
        Ok(match self {
            Domain::Interval { lo, hi } => hi.min(-lo),
            Domain::Ball { center, radius } => {
                let norm: f64 = center.iter().map(|v| v * v).sum::<f64>().sqrt();
                radius - norm
            }
        })
    }

    /// Boundary discretization. The interval boundary is its two endpoints
    /// regardless of `n`; a planar ball gets `n` equally spaced nodes.
    pub fn boundary_nodes(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Domain::Interval { lo, hi } => Ok(vec![vec![*lo], vec![*hi]]),
            Domain::Ball { center, radius } => {
                if center.len() != 2 {
                    return Err(Error::invalid(
                        "boundary discretization of a ball is implemented for dimension 2",
                    ));
                }
                if n < 3 {
                    return Err(Error::invalid("need at least 3 boundary nodes on a circle"));
                }
                Ok((0..n)
                    .map(|i| {
                        let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                    })
                    .collect())
            }
        }
    }

    /// Unit outward normal at a boundary point.
    pub fn outward_normal(&self, node: &[f64]) -> Result<Vec<f64>> {
        match self {
            Domain::Interval { lo, hi } => {
                if (node[0] - lo).abs() <= (node[0] - hi).abs() {
                    Ok(vec![-1.0])
                } else {
                    Ok(vec![1.0])
                }
            }
            Domain::Ball { center, radius } => {
                let diff: Vec<f64> = node.iter().zip(center).map(|(a, b)| a - b).collect();
                let norm: f64 = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm < 1e-12 * radius {
                    return Err(Error::invalid("normal undefined at the ball center"));
                }
                Ok(diff.iter().map(|v| v / norm).collect())
            }
        }
    }

    /// The boundary node pushed `offset` beyond the boundary along the
    /// outward normal — a strictly exterior target.
    pub fn exterior_point(&self, node: &[f64], offset: f64) -> Result<Vec<f64>> {
        let normal = self.outward_normal(node)?;
        Ok(node.iter().zip(&normal).map(|(x, n)| x + offset * n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_membership_and_geometry() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        assert!(d.contains(&[0.0]));
        assert!(d.contains(&[0.999]));
        assert!(!d.contains(&[1.0]));
        assert!(!d.contains(&[-1.2]));
        assert_eq!(d.diameter(), 2.0);
        assert_eq!(d.inradius_from_origin().unwrap(), 1.0);
        let nodes = d.boundary_nodes(10).unwrap();
        assert_eq!(nodes, vec![vec![-1.0], vec![1.0]]);
        assert_eq!(d.outward_normal(&[-1.0]).unwrap(), vec![-1.0]);
        assert_eq!(d.outward_normal(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(d.exterior_point(&[1.0], 0.1).unwrap(), vec![1.1]);
        assert_eq!(d.exterior_point(&[-1.0], 0.1).unwrap(), vec![-1.1]);
    }

    #[test]
    fn asymmetric_interval_inradius() {
        let d = Domain::interval(-0.5, 2.0).unwrap();
        assert_eq!(d.inradius_from_origin().unwrap(), 0.5);
        let off = Domain::interval(1.0, 2.0).unwrap();
        assert!(off.inradius_from_origin().is_err());
    }

    #[test]
    fn ball_membership_normals_and_nodes() {
        let d = Domain::ball(vec![0.0, 0.0], 2.0).unwrap();
        assert!(d.contains(&[1.0, 1.0]));
        assert!(!d.contains(&[2.0, 0.0]));
        assert_eq!(d.diameter(), 4.0);
        let nodes = d.boundary_nodes(4).unwrap();
        assert_eq!(nodes.len(), 4);
        for node in &nodes {
            let r: f64 = node.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 2.0).abs() < 1e-12);
            let n = d.outward_normal(node).unwrap();
            let along: f64 = n.iter().zip(node).map(|(a, b)| a * b / 2.0).sum();
            assert!((along - 1.0).abs() < 1e-12);
        }
        let ext = d.exterior_point(&nodes[0], 0.2).unwrap();
        assert!(!d.contains(&ext));
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::interval(2.0, -2.0).is_err());
        assert!(Domain::ball(vec![], 1.0).is_err());
        assert!(Domain::ball(vec![0.0, 0.0], 0.0).is_err());
        assert!(Domain::ball(vec![0.0, 0.0, 0.0], 1.0).unwrap().boundary_nodes(8).is_err());
    }
}
