//! Fixed quadrature rules on tetrahedra and triangles.
//!
//! Points are barycentric and weights are relative to the simplex measure,
//! so `∫_S f ≈ |S| Σ w_q f(x_q)`. Weights may be negative.

use crate::geometry::{GeometryError, DEGENERATE_VOLUME};
use crate::mesh::signed_volume6;
use crate::{Point3, Vector3};

/// A quadrature rule on a simplex with `D` vertices (`D = 4` tets, `D = 3` triangles).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    pub exactness_degree: u32,
}

pub type TetRule = QuadratureRule<4>;
pub type TriRule = QuadratureRule<3>;

/// All distinct permutations of `p`, in lexicographic order of first appearance.
fn orbit<const D: usize>(p: [f64; D]) -> Vec<[f64; D]> {
    fn go<const D: usize>(p: &mut [f64; D], k: usize, out: &mut Vec<[f64; D]>) {
        if k == D {
            if !out.contains(p) {
                out.push(*p);
            }
            return;
        }
        for i in k..D {
            p.swap(k, i);
            go(p, k + 1, out);
            p.swap(k, i);
        }
    }
    let mut out = Vec::new();
    go(&mut p.clone(), 0, &mut out);
    out
}

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps barycentric point `q` onto the simplex with the given vertices.
    pub fn map_point(vertices: &[Point3; D], q: &[f64; D]) -> Point3 {
        Point3::from(vertices.iter().zip(q).map(|(v, &l)| v.coords * l).sum::<Vector3>())
    }

    /// Weighted sum `Σ w_q f(q)` over barycentric points, without the measure factor.
    pub fn mean_bary(&self, mut f: impl FnMut(&[f64; D]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(q, &w)| w * f(q)).sum()
    }
}

impl TetRule {
    /// 10-point rule: vertices with weight `-1/20`, edge midpoints with weight `1/5`.
    pub fn tet_degree2() -> Self {
        let mut points = orbit([1.0, 0.0, 0.0, 0.0]);
        let mut weights = vec![-1.0 / 20.0; 4];
        points.extend(orbit([0.5, 0.5, 0.0, 0.0]));
        weights.extend([0.2; 6]);
        Self {
            points,
            weights,
            exactness_degree: 2,
        }
    }

    /// Keast's 15-point rule, exact up to degree 5.
    pub fn tet_degree5() -> Self {
        let third = 1.0 / 3.0;
        let (a, b) = (8.0 / 11.0, 1.0 / 11.0);
        let (c, d) = (0.433_449_846_426_335_7, 0.066_550_153_573_664_3);
        let mut points = vec![[0.25; 4]];
        let mut weights = vec![0.181_702_068_582_535_04];
        for (pts, w) in [
            (orbit([0.0, third, third, third]), 0.036_160_714_285_714_29),
            (orbit([a, b, b, b]), 0.069_871_494_516_173_82),
            (orbit([c, c, d, d]), 0.065_694_849_368_318_75),
        ] {
            weights.extend(std::iter::repeat_n(w, pts.len()));
            points.extend(pts);
        }
        Self {
            points,
            weights,
            exactness_degree: 5,
        }
    }

    /// The four vertices with equal weights; exact for linear functions only.
    pub fn tet_vertices() -> Self {
        Self {
            points: orbit([1.0, 0.0, 0.0, 0.0]),
            weights: vec![0.25; 4],
            exactness_degree: 1,
        }
    }

    /// `∫_T f` over the tetrahedron with the given vertices.
    pub fn integrate(&self, vertices: &[Point3; 4], mut f: impl FnMut(&Point3) -> f64) -> Result<f64, GeometryError> {
        let volume = signed_volume6(vertices).abs() / 6.0;
        if volume <= DEGENERATE_VOLUME {
            return Err(GeometryError::Degenerate(volume));
        }
        Ok(volume * self.mean_bary(|q| f(&Self::map_point(vertices, q))))
    }
}

impl TriRule {
    /// Edge midpoints with weight `1/3` each; exact up to degree 2.
    pub fn tri_midpoint3() -> Self {
        Self {
            points: orbit([0.5, 0.5, 0.0]),
            weights: vec![1.0 / 3.0; 3],
            exactness_degree: 2,
        }
    }

    /// `∫_F f` over the triangle with the given vertices.
    pub fn integrate(&self, vertices: &[Point3; 3], mut f: impl FnMut(&Point3) -> f64) -> Result<f64, GeometryError> {
        let area = triangle_area(vertices);
        if area <= DEGENERATE_VOLUME {
            return Err(GeometryError::Degenerate(area));
        }
        Ok(area * self.mean_bary(|q| f(&Self::map_point(vertices, q))))
    }
}

/// Mean value of the barycentric monomial `Π λ_i^{α_i}` over a simplex with
/// `D` vertices: `(D-1)! Π α_i! / (|α| + D - 1)!`.
pub fn barycentric_monomial_mean<const D: usize>(alpha: &[u32; D]) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let total: u32 = alpha.iter().sum();
    let d = D as u32 - 1;
    fact(d) * alpha.iter().map(|&a| fact(a)).product::<f64>() / fact(total + d)
}

/// All exponent vectors of length `D` with total degree at most `degree`.
pub fn exponents<const D: usize>(degree: u32) -> Vec<[u32; D]> {
    let mut out = vec![[0u32; D]];
    for d in 0..D {
        let mut next = Vec::new();
        for base in &out {
            let used: u32 = base.iter().sum();
            for a in 0..=degree - used {
                let mut e = *base;
                e[d] = a;
                next.push(e);
            }
        }
        out = next;
    }
    out
}

pub fn triangle_area(v: &[Point3; 3]) -> f64 {
    0.5 * (v[1] - v[0]).cross(&(v[2] - v[0])).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_means() {
        assert_eq!(barycentric_monomial_mean(&[0u32, 0, 0, 0]), 1.0);
        assert!((barycentric_monomial_mean(&[1u32, 0, 0, 0]) - 0.25).abs() < 1e-16);
        assert!((barycentric_monomial_mean(&[2u32, 0, 0, 0]) - 0.1).abs() < 1e-16);
        assert!((barycentric_monomial_mean(&[1u32, 1, 0]) - 1.0 / 12.0).abs() < 1e-16);
        assert_eq!(exponents::<4>(2).len(), 15);
        assert_eq!(exponents::<3>(5).len(), 56);
        for rule in [TetRule::tet_degree2(), TetRule::tet_degree5()] {
            for alpha in exponents::<4>(rule.exactness_degree) {
                let got = rule.mean_bary(|q| (0..4).map(|i| q[i].powi(alpha[i] as i32)).product());
                assert!((got - barycentric_monomial_mean(&alpha)).abs() < 1e-15);
            }
        }
    }
    use num_rational::Ratio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i128>;

    fn fact(n: u32) -> i128 {
        (1..=n as i128).product()
    }

    /// Exact ∫ x^a y^b z^c over the reference tetrahedron: a! b! c! / (a+b+c+3)!.
    fn ref_tet_monomial(a: u32, b: u32, c: u32) -> Q {
        Q::new(fact(a) * fact(b) * fact(c), fact(a + b + c + 3))
    }

    /// Exact ∫ λ1^a λ2^b λ3^c over a triangle, divided by its area: 2 a! b! c! / (a+b+c+2)!.
    fn tri_bary_mean(a: u32, b: u32, c: u32) -> Q {
        Q::new(2 * fact(a) * fact(b) * fact(c), fact(a + b + c + 2))
    }

    fn to_f64(q: Q) -> f64 {
        *q.numer() as f64 / *q.denom() as f64
    }

    fn reference() -> [Point3; 4] {
        [
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(0., 0., 1.),
        ]
    }

    fn monomials(max: u32) -> Vec<(u32, u32, u32)> {
        let mut out = vec![];
        for a in 0..=max {
            for b in 0..=max - a {
                for c in 0..=max - a - b {
                    out.push((a, b, c));
                }
            }
        }
        out
    }

    fn random_tet(rng: &mut ChaCha8Rng) -> [Point3; 4] {
        loop {
            let mut v = [0; 4].map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            if signed_volume6(&v) < 0.0 {
                v.swap(0, 1);
            }
            if signed_volume6(&v) > 0.05 {
                return v;
            }
        }
    }

    #[test]
    fn weights_and_points_are_normalized() {
        for rule in [TetRule::tet_degree2(), TetRule::tet_degree5(), TetRule::tet_vertices()] {
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for q in &rule.points {
                assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
        let tri = TriRule::tri_midpoint3();
        assert!((tri.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(TetRule::tet_degree2().len(), 10);
        assert_eq!(TetRule::tet_degree5().len(), 15);
    }

    #[test]
    fn degree2_rule_examples() {
        let rule = TetRule::tet_degree2();
        let r = reference();
        assert!((rule.integrate(&r, |_| 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((rule.integrate(&r, |p| p.x * p.x).unwrap() - 1.0 / 60.0).abs() < 1e-15);
        let cubic = rule.integrate(&r, |p| p.x.powi(3)).unwrap();
        assert!((cubic - to_f64(ref_tet_monomial(3, 0, 0))).abs() > 1e-4);

        let big = r.map(|p| Point3::from(p.coords * 2.0));
        // ∫ x over the tet scaled by 2: 2⁴ · ∫_ref x = 16/24
        assert!((rule.integrate(&big, |p| p.x).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn keast_exact_on_reference_monomials() {
        let rule = TetRule::tet_degree5();
        let r = reference();
        for (a, b, c) in monomials(5) {
            let got = rule.integrate(&r, |p| p.x.powi(a as i32) * p.y.powi(b as i32) * p.z.powi(c as i32)).unwrap();
            let want = to_f64(ref_tet_monomial(a, b, c));
            assert!((got - want).abs() <= 1e-15 + 1e-13 * want, "x^{a} y^{b} z^{c}: {got} vs {want}");
        }
        assert_eq!(monomials(5).len(), 56);
        let x6 = rule.integrate(&r, |p| p.x.powi(6)).unwrap();
        assert!((x6 - to_f64(ref_tet_monomial(6, 0, 0))).abs() > 1e-7);
    }

    /// Exact integral of a monomial in physical coordinates over an arbitrary
    /// tet, via the multinomial expansion of x = Σ λ_i x_i in barycentric coordinates.
    fn exact_on_tet(v: &[Point3; 4], exps: [u32; 3]) -> f64 {
        // polynomial in λ as map from exponent 4-tuple to coefficient
        use std::collections::HashMap;
        let mut poly: HashMap<[u32; 4], f64> = HashMap::from([([0; 4], 1.0)]);
        for (d, &e) in exps.iter().enumerate() {
            for _ in 0..e {
                let mut next = HashMap::new();
                for (k, c) in &poly {
                    for i in 0..4 {
                        let mut k2 = *k;
                        k2[i] += 1;
                        *next.entry(k2).or_insert(0.0) += c * v[i][d];
                    }
                }
                poly = next;
            }
        }
        let vol = signed_volume6(v).abs() / 6.0;
        poly.iter()
            .map(|(k, c)| {
                let num: i128 = k.iter().map(|&e| fact(e)).product();
                c * 6.0 * num as f64 / fact(k.iter().sum::<u32>() + 3) as f64
            })
            .sum::<f64>()
            * vol
    }

    #[test]
    fn tet_rules_exact_on_random_tets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (rule, deg, tol) in [(TetRule::tet_degree2(), 2, 1e-14), (TetRule::tet_degree5(), 5, 1e-12)] {
            for _ in 0..100 {
                let v = random_tet(&mut rng);
                for (a, b, c) in monomials(deg) {
                    let got = rule.integrate(&v, |p| p.x.powi(a as i32) * p.y.powi(b as i32) * p.z.powi(c as i32)).unwrap();
                    let want = exact_on_tet(&v, [a, b, c]);
                    // Relative to the integral of |monomial|-scale to avoid cancellation near zero.
                    let scale = exact_on_tet(&v, [0, 0, 0]);
                    assert!((got - want).abs() <= tol * scale.max(want.abs()), "{a}{b}{c}: {got} {want}");
                }
            }
        }
    }

    #[test]
    fn triangle_rule() {
        let rule = TriRule::tri_midpoint3();
        let v = [Point3::new(0.2, 0.1, 0.3), Point3::new(1.1, 0.4, -0.2), Point3::new(0.1, 0.9, 0.5)];
        let area = triangle_area(&v);
        assert!((rule.integrate(&v, |_| 1.0).unwrap() - area).abs() < 1e-15);
        assert!((rule.mean_bary(|l| l[0] * l[1]) - 1.0 / 12.0).abs() < 1e-15);
        assert!((rule.mean_bary(|l| l[0].powi(3)) - to_f64(tri_bary_mean(3, 0, 0))).abs() > 1e-3);
    }

    #[test]
    fn triangle_rule_exact_to_degree2_on_random_triangles() {
        let rule = TriRule::tri_midpoint3();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v = [0; 3].map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            if triangle_area(&v) < 1e-2 {
                continue;
            }
            for a in 0..=2u32 {
                for b in 0..=2 - a {
                    for c in 0..=2 - a - b {
                        let got = rule.mean_bary(|l| l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32));
                        assert!((got - to_f64(tri_bary_mean(a, b, c))).abs() < 1e-15);
                    }
                }
            }
            // a physical quadratic: exact through the barycentric expansion
            let f = |p: &Point3| p.x * p.y - 2.0 * p.z * p.z + p.y;
            let got = rule.integrate(&v, f).unwrap();
            let fine = {
                let n = 200;
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n - i {
                        // centroid of the upward sub-triangles and downward ones
                        let up = [(i as f64 + 1. / 3.) / n as f64, (j as f64 + 1. / 3.) / n as f64];
                        let pu = Point3::from(v[0].coords + (v[1] - v[0]) * up[0] + (v[2] - v[0]) * up[1]);
                        s += f(&pu);
                        if i + j + 1 < n {
                            let dn = [(i as f64 + 2. / 3.) / n as f64, (j as f64 + 2. / 3.) / n as f64];
                            let pd = Point3::from(v[0].coords + (v[1] - v[0]) * dn[0] + (v[2] - v[0]) * dn[1]);
                            s += f(&pd);
                        }
                    }
                }
                s * triangle_area(&v) / (n * n) as f64
            };
            assert!((got - fine).abs() < 1e-4 * (1.0 + fine.abs()));
        }
    }

    #[test]
    fn affine_invariance() {
        let rule = TetRule::tet_degree5();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = reference();
        for _ in 0..20 {
            let v = random_tet(&mut rng);
            let f = |p: &Point3| (p.x + 2.0 * p.y).powi(2) * p.z + p.y.powi(4);
            let direct = rule.integrate(&v, f).unwrap();
            let det = signed_volume6(&v);
            let pulled = rule
                .integrate(&r, |q| f(&Point3::from(v[0].coords + (v[1] - v[0]) * q.x + (v[2] - v[0]) * q.y + (v[3] - v[0]) * q.z)))
                .unwrap()
                * det;
            assert!((direct - pulled).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn degenerate_simplex_rejected() {
        let flat = [Point3::new(0., 0., 0.), Point3::new(1., 0., 0.), Point3::new(0., 1., 0.), Point3::new(1., 1., 0.)];
        assert!(TetRule::tet_degree2().integrate(&flat, |_| 1.0).is_err());
        let line = [Point3::new(0., 0., 0.), Point3::new(1., 0., 0.), Point3::new(2., 0., 0.)];
        assert!(TriRule::tri_midpoint3().integrate(&line, |_| 1.0).is_err());
    }
}
