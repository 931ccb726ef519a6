//! Quadrature on triangles in barycentric form. Weights are fractions of the
//! triangle area.

use std::sync::OnceLock;

use crate::geometry::{signed_area, Triangle};
use crate::Point;

#[derive(Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("unsupported quadrature order {0} (expected 1, 2 or 3)")]
    UnsupportedOrder(u32),
    #[error("degenerate triangle (area {0:e})")]
    DegenerateTriangle(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes mapped to `tri` paired with weights (still relative to |T|).
    pub fn points<'a>(&'a self, tri: &'a Triangle) -> impl Iterator<Item = (Point, f64)> + 'a {
        self.nodes.iter().zip(&self.weights).map(move |(b, &w)| (map_bary(tri, b), w))
    }
}

pub fn map_bary(tri: &Triangle, b: &[f64; 3]) -> Point {
    Point::new(
        b[0] * tri[0].x + b[1] * tri[1].x + b[2] * tri[2].x,
        b[0] * tri[0].y + b[1] * tri[1].y + b[2] * tri[2].y,
    )
}

fn permutations3(a: f64, b: f64, c: f64) -> Vec<[f64; 3]> {
    vec![[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

/// Gauss rules on the triangle: one point (order 1), three points (order 2)
/// and four points with a negative central weight (order 3).
pub fn gauss_rule(order: u32) -> Result<QuadratureRule, QuadratureError> {
    let third = 1.0 / 3.0;
    match order {
        1 => Ok(QuadratureRule { nodes: vec![[third; 3]], weights: vec![1.0], degree: 1 }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(QuadratureRule { nodes: vec![[a, b, b], [b, a, b], [b, b, a]], weights: vec![third; 3], degree: 2 })
        }
        3 => {
            let (a, b) = (0.6, 0.2);
            Ok(QuadratureRule {
                nodes: vec![[a, b, b], [b, a, b], [b, b, a], [third; 3]],
                weights: vec![25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, -9.0 / 16.0],
                degree: 3,
            })
        }
        o => Err(QuadratureError::UnsupportedOrder(o)),
    }
}

/// Symmetric 12-point rule of degree 6.
pub fn high_order_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        for (a, w) in [(0.249286745170910, 0.116786275726379), (0.063089014491502, 0.050844906370207)] {
            let c = 1.0 - 2.0 * a;
            nodes.extend_from_slice(&[[a, a, c], [a, c, a], [c, a, a]]);
            weights.extend_from_slice(&[w; 3]);
        }
        nodes.extend(permutations3(0.053145049844817, 0.310352451033784, 0.636502499121399));
        weights.extend_from_slice(&[0.082851075618374; 6]);
        QuadratureRule { nodes, weights, degree: 6 }
    })
}

/// `|T| Σ w_k f(x_k)`.
pub fn integrate_on_triangle(
    rule: &QuadratureRule,
    tri: &Triangle,
    f: impl Fn(Point) -> f64,
) -> Result<f64, QuadratureError> {
    let area = signed_area(tri).abs();
    if area == 0.0 || !area.is_finite() {
        return Err(QuadratureError::DegenerateTriangle(area));
    }
    Ok(area * rule.points(tri).map(|(x, w)| w * f(x)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Triangle {
        [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn listed_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1.nodes[0], [1.0 / 3.0; 3]);
        let r2 = gauss_rule(2).unwrap();
        assert_eq!(r2.len(), 3);
        assert_eq!(r2.nodes[0], [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
        let r3 = gauss_rule(3).unwrap();
        assert_eq!(r3.weights, vec![25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, -9.0 / 16.0]);
        assert!(matches!(gauss_rule(4), Err(QuadratureError::UnsupportedOrder(4))));
        assert!(matches!(gauss_rule(0), Err(QuadratureError::UnsupportedOrder(0))));
    }

    #[test]
    fn weights_and_nodes_normalized() {
        for rule in [gauss_rule(1).unwrap(), gauss_rule(2).unwrap(), gauss_rule(3).unwrap(), high_order_rule().clone()] {
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for n in &rule.nodes {
                assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constants_give_area() {
        let t = [Point::new(0.3, -1.0), Point::new(2.0, 0.1), Point::new(-0.5, 1.7)];
        for o in 1..=3 {
            let v = integrate_on_triangle(&gauss_rule(o).unwrap(), &t, |_| 1.0).unwrap();
            assert!((v - signed_area(&t)).abs() < 1e-14);
        }
    }

    #[test]
    fn spot_values() {
        let r2 = gauss_rule(2).unwrap();
        let r3 = gauss_rule(3).unwrap();
        let xy = integrate_on_triangle(&r2, &reference(), |p| p.x * p.y).unwrap();
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
        let x3 = integrate_on_triangle(&r3, &reference(), |p| p.x.powi(3)).unwrap();
        assert!((x3 - 0.05).abs() < 1e-15);
        let x3_low = integrate_on_triangle(&r2, &reference(), |p| p.x.powi(3)).unwrap();
        assert!((x3_low - 0.05).abs() > 5e-4);
    }

    #[test]
    fn monomial_exactness() {
        let mut rules: Vec<QuadratureRule> = (1..=3).map(|o| gauss_rule(o).unwrap()).collect();
        rules.push(high_order_rule().clone());
        for rule in &rules {
            for a in 0..=rule.degree {
                for b in 0..=(rule.degree - a) {
                    let v = integrate_on_triangle(rule, &reference(), |p| p.x.powi(a as i32) * p.y.powi(b as i32))
                        .unwrap();
                    let e = monomial_exact(a, b);
                    let tol = if rule.degree == 6 { 1e-12 } else { 1e-14 };
                    assert!((v - e).abs() <= tol * e, "degree {} monomial x^{a} y^{b}: {v} vs {e}", rule.degree);
                }
            }
        }
    }

    #[test]
    fn affine_invariance() {
        let f = |p: Point| (p.x * 1.3).sin() + p.y * p.y;
        let t = reference();
        let (a11, a12, a21, a22, b1, b2) = (2.0, 0.5, -0.3, 1.5, 0.7, -0.2);
        let det: f64 = a11 * a22 - a12 * a21;
        let map = |p: Point| Point::new(a11 * p.x + a12 * p.y + b1, a21 * p.x + a22 * p.y + b2);
        let inv = |q: Point| {
            let (x, y) = (q.x - b1, q.y - b2);
            Point::new((a22 * x - a12 * y) / det, (-a21 * x + a11 * y) / det)
        };
        let image = t.map(map);
        for rule in [gauss_rule(2).unwrap(), high_order_rule().clone()] {
            let lhs = integrate_on_triangle(&rule, &image, |q| f(inv(q))).unwrap();
            let rhs = det.abs() * integrate_on_triangle(&rule, &t, f).unwrap();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_triangle() {
        let flat = [Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
        assert!(integrate_on_triangle(&gauss_rule(1).unwrap(), &flat, |_| 1.0).is_err());
    }
}
