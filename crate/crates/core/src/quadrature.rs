//! Quadrature rules on simplices and order-stable summation.

/// Quadrature rule selector.
///
/// `Barycenter` is the assembly rule: one interior point, exact for linear
/// integrands, never touches lattice points. `Degree2` is the norm rule:
/// dim+1 interior points, exact for quadratics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureRule {
    Barycenter,
    Degree2,
}

/// Barycentric points and weight fractions for a rule on a `dim`-simplex.
/// Weight fractions sum to 1; physical weights are `fraction * volume`.
pub fn rule_points(rule: QuadratureRule, dim: usize) -> Vec<([f64; 4], f64)> {
    match (rule, dim) {
        (QuadratureRule::Barycenter, 2) => vec![([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0], 1.0)],
        (QuadratureRule::Barycenter, 3) => vec![([0.25, 0.25, 0.25, 0.25], 1.0)],
        (QuadratureRule::Degree2, 2) => {
            let a = 2.0 / 3.0;
            let b = 1.0 / 6.0;
            let w = 1.0 / 3.0;
            vec![
                ([a, b, b, 0.0], w),
                ([b, a, b, 0.0], w),
                ([b, b, a, 0.0], w),
            ]
        }
        (QuadratureRule::Degree2, 3) => {
            // Interior rule exact to degree 2: a = (1 + 3/sqrt(5))/4, b = (1 - 1/sqrt(5))/4.
            let s = 1.0 / 5.0_f64.sqrt();
            let a = (1.0 + 3.0 * s) / 4.0;
            let b = (1.0 - s) / 4.0;
            let w = 0.25;
            vec![
                ([a, b, b, b], w),
                ([b, a, b, b], w),
                ([b, b, a, b], w),
                ([b, b, b, a], w),
            ]
        }
        _ => panic!("unsupported simplex dimension {dim}"),
    }
}

/// Pairwise (cascade) summation. Deterministic and reduction-order stable:
/// reversing the input changes the result by at most a few ulps.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Incremental pairwise accumulator (binary-counter scheme); equivalent
/// accuracy to `pairwise_sum` without buffering all terms.
#[derive(Debug, Default, Clone)]
pub struct PairwiseSum {
    // stack[k] holds the sum of a block of 2^k consecutive terms
    stack: Vec<f64>,
    count: u64,
}

impl PairwiseSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        let mut carry = value;
        let mut c = self.count;
        let mut level = 0;
        while c & 1 == 1 {
            carry += self.stack[self.stack.len() - 1 - level];
            c >>= 1;
            level += 1;
        }
        self.stack.truncate(self.stack.len() - level);
        self.stack.push(carry);
        self.count += 1;
    }

    pub fn total(&self) -> f64 {
        self.stack.iter().rev().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_sum_to_one() {
        for dim in [2, 3] {
            for rule in [QuadratureRule::Barycenter, QuadratureRule::Degree2] {
                let total: f64 = rule_points(rule, dim).iter().map(|(_, w)| w).sum();
                assert!((total - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degree2_integrates_quadratics_on_reference_triangle() {
        // reference triangle (0,0),(1,0),(0,1), area 1/2
        // integral of lambda_1^2 = area/6 = 1/12
        let pts = rule_points(QuadratureRule::Degree2, 2);
        let quad: f64 = pts.iter().map(|(l, w)| 0.5 * w * l[0] * l[0]).sum();
        assert!((quad - 1.0 / 12.0).abs() < 1e-15);
        // integral of lambda_1*lambda_2 = area * 2 * 1 / 4! = 1/24
        let quad: f64 = pts.iter().map(|(l, w)| 0.5 * w * l[0] * l[1]).sum();
        assert!((quad - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn degree2_integrates_quadratics_on_reference_tet() {
        // reference tet, volume 1/6; integral of lambda_1^2 = vol/10
        let pts = rule_points(QuadratureRule::Degree2, 3);
        let vol = 1.0 / 6.0;
        let quad: f64 = pts.iter().map(|(l, w)| vol * w * l[0] * l[0]).sum();
        assert!((quad - vol / 10.0).abs() < 1e-15);
        let quad: f64 = pts.iter().map(|(l, w)| vol * w * l[0] * l[1]).sum();
        assert!((quad - vol / 20.0).abs() < 1e-15);
    }

    #[test]
    fn pairwise_accumulator_matches_slice_sum() {
        let values: Vec<f64> = (0..10_000).map(|i| ((i * 37) % 101) as f64 * 1e-3 - 0.05).collect();
        let mut acc = PairwiseSum::new();
        for &v in &values {
            acc.push(v);
        }
        let a = acc.total();
        let b = pairwise_sum(&values);
        assert!((a - b).abs() <= 1e-12 * values.len() as f64);
        // order stability
        let mut rev = values.clone();
        rev.reverse();
        let c = pairwise_sum(&rev);
        assert!((a - c).abs() <= 1e-13 * a.abs().max(1.0));
    }
}
