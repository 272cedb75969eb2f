//! Error norms against the manufactured solution, normalized errors and the
//! convergence indicator.

use num_rational::Ratio;

use crate::elements::{combine_gradients, cr_gradients, cr_value, p1_value, BarycentricMap, Rt0Basis};
use crate::geometry::TetGeometry;
use crate::mesh::Mesh;
use crate::quadrature::TetRule;
use crate::system::Field;
use crate::{Error, Point3, Result, Vector3};

type Q = Ratio<i128>;

/// A polynomial on the unit cube written as a sum of products `c · p(x) q(y) r(z)`
/// of univariate polynomials with rational coefficients (ascending powers).
#[derive(Debug, Clone)]
pub struct SeparablePoly {
    terms: Vec<(Q, [Vec<Q>; 3])>,
}

fn poly_mul(a: &[Q], b: &[Q]) -> Vec<Q> {
    let mut out = vec![Q::from_integer(0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `∫_0^1 p(t) dt`
fn poly_integral(p: &[Q]) -> Q {
    p.iter()
        .enumerate()
        .map(|(k, c)| c / Q::from_integer(k as i128 + 1))
        .fold(Q::from_integer(0), |a, b| a + b)
}

impl SeparablePoly {
    pub fn new(terms: Vec<(Q, [Vec<Q>; 3])>) -> Self {
        Self { terms }
    }

    pub fn scaled(&self, s: Q) -> Self {
        Self {
            terms: self.terms.iter().map(|(c, f)| (c * s, f.clone())).collect(),
        }
    }

    pub fn square(&self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * self.terms.len());
        for (ca, fa) in &self.terms {
            for (cb, fb) in &self.terms {
                let f = [0, 1, 2].map(|d| poly_mul(&fa[d], &fb[d]));
                terms.push((ca * cb, f));
            }
        }
        Self { terms }
    }

    /// Exact integral over the unit cube.
    pub fn integral(&self) -> Q {
        self.terms
            .iter()
            .map(|(c, f)| c * poly_integral(&f[0]) * poly_integral(&f[1]) * poly_integral(&f[2]))
            .fold(Q::from_integer(0), |a, b| a + b)
    }

    pub fn eval(&self, p: &Point3) -> f64 {
        let horner = |c: &[Q], t: f64| c.iter().rev().fold(0.0, |acc, q| acc * t + to_f64(*q));
        self.terms
            .iter()
            .map(|(c, f)| to_f64(*c) * horner(&f[0], p.x) * horner(&f[1], p.y) * horner(&f[2], p.z))
            .sum()
    }
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn q(n: i128) -> Q {
    Q::from_integer(n)
}

/// `u = s · x(1-x) y(1-y) z(1-z)` with `f = -Δu`, on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub scale: f64,
}

impl Default for ManufacturedCase {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

fn bump(t: f64) -> f64 {
    t * (1.0 - t)
}

impl ManufacturedCase {
    pub fn u(&self, p: &Point3) -> f64 {
        self.scale * bump(p.x) * bump(p.y) * bump(p.z)
    }

    pub fn grad_u(&self, p: &Point3) -> Vector3 {
        let (x, y, z) = (bump(p.x), bump(p.y), bump(p.z));
        self.scale
            * Vector3::new(
                (1.0 - 2.0 * p.x) * y * z,
                x * (1.0 - 2.0 * p.y) * z,
                x * y * (1.0 - 2.0 * p.z),
            )
    }

    pub fn f(&self, p: &Point3) -> f64 {
        let (x, y, z) = (bump(p.x), bump(p.y), bump(p.z));
        2.0 * self.scale * (y * z + x * z + x * y)
    }

    /// `u` for unit scale as a separable polynomial.
    fn u_poly() -> SeparablePoly {
        let b = vec![q(0), q(1), q(-1)];
        SeparablePoly::new(vec![(q(1), [b.clone(), b.clone(), b])])
    }

    fn f_poly() -> SeparablePoly {
        let b = vec![q(0), q(1), q(-1)];
        let one = vec![q(1)];
        SeparablePoly::new(vec![
            (q(2), [one.clone(), b.clone(), b.clone()]),
            (q(2), [b.clone(), one.clone(), b.clone()]),
            (q(2), [b.clone(), b, one]),
        ])
    }

    /// `‖Δu‖²` for unit scale, exactly: 8/225.
    pub fn delta_u_norm_sq_exact() -> Q {
        Self::f_poly().square().integral()
    }

    /// `‖u‖²` for unit scale, exactly: 1/27000.
    pub fn u_norm_sq_exact() -> Q {
        Self::u_poly().square().integral()
    }

    /// `Σ_i ‖∂_ii u‖²` for unit scale, exactly: 1/75. This is `‖Δu‖²` without
    /// the mixed products `(∂_ii u, ∂_jj u)`.
    pub fn hessian_diagonal_norm_sq_exact() -> Q {
        Self::f_poly()
            .terms
            .into_iter()
            .map(|term| SeparablePoly::new(vec![term]).square().integral())
            .fold(q(0), |a, b| a + b)
    }

    /// `‖Δu‖ = ‖f‖`.
    pub fn normalization_delta_u(&self) -> f64 {
        self.scale.abs() * to_f64(Self::delta_u_norm_sq_exact()).sqrt()
    }

    pub fn normalization(&self, kind: Normalization) -> f64 {
        match kind {
            Normalization::DeltaU => self.normalization_delta_u(),
            Normalization::HessianDiagonal => self.scale.abs() * to_f64(Self::hessian_diagonal_norm_sq_exact()).sqrt(),
        }
    }

    pub fn u_l2_norm(&self) -> f64 {
        self.scale.abs() * to_f64(Self::u_norm_sq_exact()).sqrt()
    }
}

/// Divisor applied to the raw error norms in convergence tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `‖Δu‖`, `√(8/225)` for the unit-scale case.
    #[default]
    DeltaU,
    /// `(Σ_i ‖∂_ii u‖²)^{1/2}`, `1/√75` for the unit-scale case. The reference
    /// error tables for this case are consistent with this divisor.
    HessianDiagonal,
}

/// Value of a P1, CR or P0 (mixed) field at barycentric point `lambda` of tet `t`.
fn scalar_value(field: &Field, local: &[f64; 4], lambda: &[f64; 4], t: usize) -> f64 {
    match field {
        Field::P1(_) => p1_value(local, lambda),
        Field::Cr(_) => cr_value(local, lambda),
        Field::Mixed { u, .. } => u[t],
    }
}

/// `‖u - u_h‖_{L²}` with the given rule applied elementwise.
pub fn l2_error_with(mesh: &Mesh, field: &Field, u: impl Fn(&Point3) -> f64, rule: &TetRule) -> Result<f64> {
    field.check(mesh)?;
    let mut total = 0.0;
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let local = field.local(mesh, t);
        let geom = TetGeometry::new(v)?;
        let mut sum = 0.0;
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let e = u(&TetRule::map_point(&v, lambda)) - scalar_value(field, &local, lambda, t);
            sum += w * e * e;
        }
        total += geom.volume * sum;
    }
    Ok(total.sqrt())
}

/// `‖u - u_h‖_{L²}` with the degree-5 rule.
pub fn l2_error(mesh: &Mesh, field: &Field, u: impl Fn(&Point3) -> f64) -> Result<f64> {
    l2_error_with(mesh, field, u, &TetRule::tet_degree5())
}

/// Broken `|u - u_h|_{H¹(T_h)}` with the given rule. For a mixed field this is
/// `‖∇u - σ_h‖_{L²}`.
pub fn broken_h1_error_with(
    mesh: &Mesh,
    field: &Field,
    grad_u: impl Fn(&Point3) -> Vector3,
    rule: &TetRule,
) -> Result<f64> {
    field.check(mesh)?;
    let mut total = 0.0;
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let local = field.local(mesh, t);
        let discrete: Box<dyn Fn(&Point3) -> Vector3> = match field {
            Field::P1(_) => {
                let g = combine_gradients(&local, &BarycentricMap::new(&v)?.grads);
                Box::new(move |_| g)
            }
            Field::Cr(_) => {
                let g = combine_gradients(&local, &cr_gradients(&BarycentricMap::new(&v)?));
                Box::new(move |_| g)
            }
            Field::Mixed { .. } => {
                let sigma = Rt0Basis::new(&geom).combine(&local);
                Box::new(move |p| sigma.eval(p))
            }
        };
        let mut sum = 0.0;
        for (lambda, w) in rule.points.iter().zip(&rule.weights) {
            let p = TetRule::map_point(&v, lambda);
            sum += w * (grad_u(&p) - discrete(&p)).norm_squared();
        }
        total += geom.volume * sum;
    }
    Ok(total.sqrt())
}

/// Broken `|u - u_h|_{H¹(T_h)}` with the degree-5 rule.
pub fn broken_h1_error(mesh: &Mesh, field: &Field, grad_u: impl Fn(&Point3) -> Vector3) -> Result<f64> {
    broken_h1_error_with(mesh, field, grad_u, &TetRule::tet_degree5())
}

/// `r_k = log2(e_{k-1} / e_k)`; one entry fewer than `errors`.
pub fn convergence_indicator(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some(e) = errors.iter().find(|e| !e.is_finite() || **e <= 0.0) {
        return Err(Error::InvalidArgument(format!("errors must be positive and finite, got {e}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// `‖φ_h‖ / |φ_h|_{H¹(T_h)}` for a CR field (both integrals exact).
pub fn discrete_poincare_ratio(mesh: &Mesh, field: &Field) -> Result<f64> {
    if !matches!(field, Field::Cr(_)) {
        return Err(Error::FieldMismatch("discrete Poincaré ratio needs a CR field".into()));
    }
    let rule = TetRule::tet_degree2();
    let l2 = l2_error_with(mesh, field, |_| 0.0, &rule)?;
    let h1 = broken_h1_error_with(mesh, field, |_| Vector3::zeros(), &rule)?;
    if h1 == 0.0 {
        return Err(Error::InvalidArgument("zero field has no Poincaré ratio".into()));
    }
    Ok(l2 / h1)
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    pub n: usize,
    pub h: f64,
    pub h_nominal: f64,
    pub h_computed: f64,
    pub dofs: usize,
    pub err_h1: f64,
    pub r_h1: Option<f64>,
    pub err_l2: f64,
    pub r_l2: Option<f64>,
}

impl ConvergenceRow {
    pub const CSV_HEADER: &'static str = "M,N,h,H_nominal,H_computed,dofs,err_h1,r_h1,err_l2,r_l2";

    pub fn to_csv(&self) -> String {
        let r = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{},{:.6e},{:.6e},{:.6e},{},{:.6e},{},{:.6e},{}",
            self.m,
            self.n,
            self.h,
            self.h_nominal,
            self.h_computed,
            self.dofs,
            self.err_h1,
            r(self.r_h1),
            self.err_l2,
            r(self.r_l2)
        )
    }

    /// Fills in the indicators of `rows` from consecutive errors.
    pub fn fill_rates(rows: &mut [ConvergenceRow]) -> Result<()> {
        let h1 = convergence_indicator(&rows.iter().map(|r| r.err_h1).collect::<Vec<_>>())?;
        let l2 = convergence_indicator(&rows.iter().map(|r| r.err_l2).collect::<Vec<_>>())?;
        for (k, row) in rows.iter_mut().enumerate() {
            row.r_h1 = k.checked_sub(1).map(|j| h1[j]);
            row.r_l2 = k.checked_sub(1).map(|j| l2[j]);
        }
        Ok(())
    }
}

/// The flat tetrahedron `(0,0,0), (h,0,0), (h/2, h^{3/2}, 0), (h/2, 0, h/2)` on
/// which the pointwise CR interpolant of `|x|²` loses accuracy.
pub fn counterexample_tet(h: f64) -> [Point3; 4] {
    [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(h, 0.0, 0.0),
        Point3::new(h / 2.0, h.powf(1.5), 0.0),
        Point3::new(h / 2.0, 0.0, h / 2.0),
    ]
}

/// `|φ - I_T^{CR,S} φ|_{H¹(T)} / |φ|_{H²(T)}` for `φ = |x|²`, with the gradient
/// error integrated by `rule`.
pub fn pointwise_cr_interpolation_error(v: &[Point3; 4], rule: &TetRule) -> Result<f64> {
    let phi = |x: &Point3| x.coords.norm_squared();
    let coeffs = crate::elements::cr_interpolate_pointwise(v, phi);
    let grad_i = combine_gradients(&coeffs, &cr_gradients(&BarycentricMap::new(v)?));
    let err_sq = rule.integrate(v, |x| (2.0 * x.coords - grad_i).norm_squared())?;
    // the Hessian of φ is 2I, so |φ|²_{H²(T)} = 12|T|
    let volume = TetGeometry::new(*v)?.volume;
    Ok((err_sq / (12.0 * volume)).sqrt())
}

/// One row of the interpolation counterexample table.
///
/// `h_t` is the anisotropy parameter minimized over all edge pairs and `err`
/// uses the degree-5 rule (exact here). The `*_opposite`/`*_vertex_rule`
/// variants restrict the minimum to the three pairs of opposite edges and
/// integrate with the four-point vertex rule; the reference table is
/// consistent with these.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpDemoRow {
    pub n: usize,
    pub h: f64,
    pub h_t: f64,
    pub err: f64,
    pub r: Option<f64>,
    pub h_t_opposite: f64,
    pub err_vertex_rule: f64,
    pub r_vertex_rule: Option<f64>,
}

impl InterpDemoRow {
    pub const CSV_HEADER: &'static str = "N,h,H_T,err,r,H_T_opposite_pairs,err_vertex_rule,r_vertex_rule";

    pub fn to_csv(&self) -> String {
        let r = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        format!(
            "{},{:.6e},{:.6e},{:.6e},{},{:.6e},{:.6e},{}",
            self.n,
            self.h,
            self.h_t,
            self.err,
            r(self.r),
            self.h_t_opposite,
            self.err_vertex_rule,
            r(self.r_vertex_rule)
        )
    }
}

/// The counterexample rows for `h = 1/N`, `N` in `ns`.
pub fn interp_demo(ns: &[usize]) -> Result<Vec<InterpDemoRow>> {
    if let Some(n) = ns.iter().find(|&&n| n == 0) {
        return Err(Error::InvalidArgument(format!("N must be positive, got {n}")));
    }
    let (exact, vertex) = (TetRule::tet_degree5(), TetRule::tet_vertices());
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let h = 1.0 / n as f64;
        let v = counterexample_tet(h);
        let geom = TetGeometry::new(v)?;
        rows.push(InterpDemoRow {
            n,
            h,
            h_t: geom.anisotropy,
            err: pointwise_cr_interpolation_error(&v, &exact)?,
            r: None,
            h_t_opposite: geom.opposite_edge_anisotropy(),
            err_vertex_rule: pointwise_cr_interpolation_error(&v, &vertex)?,
            r_vertex_rule: None,
        });
    }
    let r = convergence_indicator(&rows.iter().map(|r| r.err).collect::<Vec<_>>())?;
    let rv = convergence_indicator(&rows.iter().map(|r| r.err_vertex_rule).collect::<Vec<_>>())?;
    for k in 1..rows.len() {
        rows[k].r = Some(r[k - 1]);
        rows[k].r_vertex_rule = Some(rv[k - 1]);
    }
    Ok(rows)
}
