//! Parameter-efficiency frontiers.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub param_count: usize,
    pub test_mse: f64,
    pub model: String,
    pub seed: u64,
}

impl ParetoPoint {
    /// No worse in both coordinates and strictly better in one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.param_count <= other.param_count
            && self.test_mse <= other.test_mse
            && (self.param_count < other.param_count || self.test_mse < other.test_mse)
    }
}

/// Points no other point dominates, sorted by parameter count then MSE.
/// Exact duplicates are all kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.param_count
            .cmp(&b.param_count)
            .then(a.test_mse.total_cmp(&b.test_mse))
    });
    let mut front: Vec<ParetoPoint> = Vec::new();
    // best MSE among strictly smaller models, and among the current count
    let mut best_smaller = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let count = sorted[i].param_count;
        let end = sorted[i..]
            .iter()
            .position(|p| p.param_count != count)
            .map_or(sorted.len(), |k| i + k);
        let min_here = sorted[i].test_mse;
        if min_here < best_smaller {
            front.extend(
                sorted[i..end]
                    .iter()
                    .take_while(|p| p.test_mse == min_here)
                    .map(|p| (*p).clone()),
            );
            best_smaller = min_here;
        }
        i = end;
    }
    front
}

/// Smallest parameter count on `frontier` with `test_mse < threshold`;
/// `None` means the threshold was never reached.
pub fn threshold_params(frontier: &[ParetoPoint], threshold: f64) -> Option<usize> {
    frontier
        .iter()
        .filter(|p| p.test_mse < threshold)
        .map(|p| p.param_count)
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: usize, m: f64) -> ParetoPoint {
        ParetoPoint {
            param_count: c,
            test_mse: m,
            model: "m".into(),
            seed: 0,
        }
    }

    fn pairs(v: &[ParetoPoint]) -> Vec<(usize, f64)> {
        v.iter().map(|p| (p.param_count, p.test_mse)).collect()
    }

    #[test]
    fn drops_the_dominated_point() {
        let f = pareto_front(&[pt(30, 0.4), pt(10, 0.5), pt(20, 0.3)]);
        assert_eq!(pairs(&f), vec![(10, 0.5), (20, 0.3)]);
    }

    #[test]
    fn single_point_and_ties() {
        assert_eq!(pairs(&pareto_front(&[pt(5, 1.0)])), vec![(5, 1.0)]);
        let f = pareto_front(&[pt(5, 1.0), pt(5, 1.0), pt(5, 2.0), pt(7, 1.0)]);
        assert_eq!(pairs(&f), vec![(5, 1.0), (5, 1.0)]);
    }

    #[test]
    fn thresholds() {
        assert_eq!(threshold_params(&[pt(50, 0.005)], 0.01), Some(50));
        assert_eq!(threshold_params(&[pt(50, 0.5), pt(80, 0.02)], 0.01), None);
        assert_eq!(threshold_params(&[pt(50, 0.01)], 0.01), None);
    }
}
