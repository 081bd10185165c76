//! Symmetric quadrature rules on triangles and Gauss-Legendre rules on intervals.
//!
//! Triangle rules are stored in barycentric coordinates with weights normalized to
//! sum to one, so that `area * sum(w_q * f(x_q))` approximates the integral over a
//! triangle of the given area.

/// A quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Barycentric coordinates of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights, summing to one.
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: u32,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// 3-point rule, exact for degree 2.
    pub fn degree2() -> Self {
        let mut rule = Builder::default();
        rule.orbit3(1.0 / 6.0, 1.0 / 3.0);
        rule.finish(2)
    }

    /// 6-point rule, exact for degree 4.
    pub fn degree4() -> Self {
        let mut rule = Builder::default();
        rule.orbit3(0.445_948_490_915_964_9, 0.223_381_589_678_011_47);
        rule.orbit3(0.091_576_213_509_770_74, 0.109_951_743_655_321_87);
        rule.finish(4)
    }

    /// 12-point rule, exact for degree 6.
    pub fn degree6() -> Self {
        let mut rule = Builder::default();
        rule.orbit3(0.249_286_745_170_910_42, 0.116_786_275_726_379_37);
        rule.orbit3(0.063_089_014_491_502_23, 0.050_844_906_370_206_817);
        rule.orbit6(
            0.053_145_049_844_816_947,
            0.310_352_451_033_784_4,
            0.082_851_075_618_373_575,
        );
        rule.finish(6)
    }

    /// 25-point rule, exact for degree 10.
    pub fn degree10() -> Self {
        let mut rule = Builder::default();
        rule.centroid(0.090_817_990_382_753_58);
        rule.orbit3(0.485_577_633_383_657_37, 0.036_725_957_756_466_705);
        rule.orbit3(0.109_481_575_485_037_05, 0.045_321_059_435_527_935);
        rule.orbit6(
            0.141_707_219_414_879_95,
            0.307_939_838_764_120_95,
            0.072_757_916_845_420_11,
        );
        rule.orbit6(
            0.025_003_534_762_686_386,
            0.246_672_560_639_902_7,
            0.028_327_242_531_057_485,
        );
        rule.orbit6(
            0.009_540_815_400_299_458,
            0.066_803_251_012_200_27,
            0.009_421_666_963_732_823,
        );
        rule.finish(10)
    }

    /// The smallest catalogue rule that integrates polynomials of `degree` exactly.
    /// Degrees above 10 fall back to the degree-10 rule.
    pub fn for_degree(degree: u32) -> Self {
        match degree {
            0..=2 => Self::degree2(),
            3..=4 => Self::degree4(),
            5..=6 => Self::degree6(),
            _ => Self::degree10(),
        }
    }

    /// Maps the rule to the triangle `tri`, yielding `(physical point, barycentric point, weight)`.
    /// Weights are normalized (multiply by the triangle area to integrate).
    pub fn mapped<'a>(
        &'a self,
        tri: &'a [[f64; 2]; 3],
    ) -> impl Iterator<Item = ([f64; 2], [f64; 3], f64)> + 'a {
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            let x = l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0];
            let y = l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1];
            ([x, y], *l, w)
        })
    }
}

#[derive(Default)]
struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn centroid(&mut self, w: f64) {
        let c = 1.0 / 3.0;
        self.points.push([c, c, c]);
        self.weights.push(w);
    }

    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [
            [a, b, c],
            [b, a, c],
            [a, c, b],
            [c, a, b],
            [b, c, a],
            [c, b, a],
        ] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn finish(self, degree: u32) -> QuadRule {
        QuadRule {
            points: self.points,
            weights: self.weights,
            degree,
        }
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on [0, 1] (exact to degree `2n - 1`), computed by Newton iteration
    /// on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = 0.5 * (1.0 - x);
            weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(a + s * len))
            .sum::<f64>()
            * len
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact value of the normalized integral of l1^a l2^b over the reference triangle.
    fn monomial_moment(a: u32, b: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn catalogue_rules_integrate_monomials_exactly() {
        for rule in [
            QuadRule::degree2(),
            QuadRule::degree4(),
            QuadRule::degree6(),
            QuadRule::degree10(),
        ] {
            let sum: f64 = rule.weights.iter().sum();
            assert!(
                (sum - 1.0).abs() < 1e-15,
                "weights of degree {}",
                rule.degree
            );
            for a in 0..=rule.degree {
                for b in 0..=(rule.degree - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(l, w)| w * l[0].powi(a as i32) * l[1].powi(b as i32))
                        .sum();
                    let exact = monomial_moment(a, b);
                    assert!(
                        (q - exact).abs() <= 1e-15 + 1e-13 * exact,
                        "degree {} rule fails on l1^{a} l2^{b}: {q} vs {exact}",
                        rule.degree
                    );
                }
            }
        }
    }

    #[test]
    fn point_counts_match_catalogue() {
        assert_eq!(QuadRule::degree2().len(), 3);
        assert_eq!(QuadRule::degree4().len(), 6);
        assert_eq!(QuadRule::degree6().len(), 12);
        assert_eq!(QuadRule::degree10().len(), 25);
    }

    #[test]
    fn gauss_legendre_exact_to_degree_2n_minus_1() {
        for n in 1..=8 {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let q = rule.integrate(0.0, 2.0, |t| t.powi(deg as i32));
                let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!(
                    (q - exact).abs() < 1e-13 * exact.max(1.0),
                    "n={n} deg={deg}"
                );
            }
        }
    }
}
