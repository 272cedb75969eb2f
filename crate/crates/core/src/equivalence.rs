//! Bubble enrichment of the Crouzeix–Raviart space and the Marini
//! reconstruction of the RT0 mixed solution from a CR solve with
//! elementwise-constant data.
//!
//! With `φ_T = L - 12|x - x_T|²` and `γ_T = Π_T f / 72`, the enriched solution
//! `ū_CR + Σ γ_T φ_T` has broken gradient `σ̄ = ∇ū_CR - (Π_T f / 3)(x - x_T)`,
//! which lies in RT0 and coincides with the mixed flux. Its elementwise mean
//! gives the mixed pressure `Π_T ū_CR + Π_T f · L / 180`.

use crate::elements::{combine_gradients, cr_gradients, p0_project, rt_interpolate, BarycentricMap, Rt0Basis};
use crate::geometry::TetGeometry;
use crate::mesh::{Mesh, LOCAL_FACES};
use crate::quadrature::{TetRule, TriRule};
use crate::system::{assemble_cr, assemble_rt0_mixed, solve_saddle, solve_spd, Field, RhsMode, SolveStats, SolverOptions, Source};
use crate::{Error, Point3, Result, Vector3};

/// `γ_T = Π_T f / BUBBLE_DIVISOR`.
pub const BUBBLE_DIVISOR: f64 = 72.0;

/// The bubble `φ_T` of one tet together with its coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleElement {
    /// `L = Σ_i |x_i - x_T|²`
    pub l: f64,
    pub centroid: Point3,
    pub gamma: f64,
}

impl BubbleElement {
    pub fn new(geom: &TetGeometry, gamma: f64) -> Self {
        Self {
            l: geom.l_sum,
            centroid: geom.barycentre,
            gamma,
        }
    }

    pub fn eval(&self, x: &Point3) -> f64 {
        self.l - 12.0 * (x - self.centroid).norm_squared()
    }

    pub fn grad(&self, x: &Point3) -> Vector3 {
        -24.0 * (x - self.centroid)
    }
}

pub fn bubble_eval(geom: &TetGeometry, x: &Point3) -> f64 {
    BubbleElement::new(geom, 1.0).eval(x)
}

pub fn bubble_grad(geom: &TetGeometry, x: &Point3) -> Vector3 {
    BubbleElement::new(geom, 1.0).grad(x)
}

/// `(1/|F_i|) ∫_{F_i} φ_T` for the four faces (midpoint rule, exact for quadratics).
pub fn bubble_face_means(geom: &TetGeometry) -> [f64; 4] {
    let rule = TriRule::tri_midpoint3();
    let b = BubbleElement::new(geom, 1.0);
    [0, 1, 2, 3].map(|i| {
        let tri = LOCAL_FACES[i].map(|k| geom.vertices[k]);
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(q, w)| w * b.eval(&TriRule::map_point(&tri, q)))
            .sum()
    })
}

/// `((1/|T|)∫_T φ_T, (1/|T|)∫_T |∇φ_T|²)`, which equal `2L/5` and `144L/5`.
pub fn bubble_identities(geom: &TetGeometry) -> (f64, f64) {
    let rule = TetRule::tet_degree2();
    let b = BubbleElement::new(geom, 1.0);
    let v = &geom.vertices;
    let mean = rule.mean_bary(|q| b.eval(&TetRule::map_point(v, q)));
    let grad_sq = rule.mean_bary(|q| b.grad(&TetRule::map_point(v, q)).norm_squared());
    (mean, grad_sq)
}

/// Largest relative violation of the three bubble identities over the mesh:
/// face means (relative to `L`), mean value and gradient energy.
pub fn bubble_identity_deviation(mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in 0..mesh.num_tets() {
        let geom = TetGeometry::new(mesh.tet_vertices(t))?;
        let l = geom.l_sum;
        for m in bubble_face_means(&geom) {
            worst = worst.max(m.abs() / l);
        }
        let (mean, grad_sq) = bubble_identities(&geom);
        worst = worst.max((mean - 0.4 * l).abs() / (0.4 * l));
        worst = worst.max((grad_sq - 28.8 * l).abs() / (28.8 * l));
    }
    Ok(worst)
}

/// `Π_T f` for every tet, by the degree-5 rule.
pub fn projected_source(mesh: &Mesh, f: Source) -> Vec<f64> {
    (0..mesh.num_tets()).map(|t| p0_project(&mesh.tet_vertices(t), f)).collect()
}

/// Bubble coefficients `Π_T f / divisor`; the correct divisor is [`BUBBLE_DIVISOR`].
pub fn bubble_coefficients(mesh: &Mesh, f: Source, divisor: f64) -> Vec<f64> {
    projected_source(mesh, f).into_iter().map(|p| p / divisor).collect()
}

/// Solves the CR problem with data `Π_h^0 f` and returns it with the bubble
/// coefficients of the enriched solution. The bubble part decouples because
/// bubbles are orthogonal to CR functions in the broken energy product.
pub fn enriched_cr_solve(mesh: &Mesh, f: Source, opts: SolverOptions) -> Result<(Field, Vec<f64>, SolveStats)> {
    let system = assemble_cr(mesh, f, RhsMode::Projected)?;
    let (field, stats) = solve_spd(&system, opts)?;
    Ok((field, bubble_coefficients(mesh, f, BUBBLE_DIVISOR), stats))
}

/// Broken energy product `Σ_T ∫_T ∇ψ_h · ∇b_h` of a CR field with the bubble
/// field with coefficients `gamma` (degree-2 rule, exact).
pub fn cr_bubble_product(mesh: &Mesh, psi: &Field, gamma: &[f64]) -> Result<f64> {
    if !matches!(psi, Field::Cr(_)) || gamma.len() != mesh.num_tets() {
        return Err(Error::FieldMismatch("expected a CR field and one bubble coefficient per tet".into()));
    }
    psi.check(mesh)?;
    let rule = TetRule::tet_degree2();
    let mut total = 0.0;
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let g = combine_gradients(&psi.local(mesh, t), &cr_gradients(&BarycentricMap::new(&v)?));
        let b = BubbleElement::new(&geom, gamma[t]);
        total += geom.volume * rule.mean_bary(|q| g.dot(&(b.gamma * b.grad(&TetRule::map_point(&v, q)))));
    }
    Ok(total)
}

/// The reconstructed mixed pair and the conformity diagnostics of the flux.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub field: Field,
    /// Largest difference between the two incident tets' normal fluxes on an interior face.
    pub max_jump: f64,
}

/// Builds `(σ̄, ū)` from a CR solution and bubble coefficients:
/// `σ̄|_T = ∇ū_CR + γ_T ∇φ_T`, `ū|_T = Π_T ū_CR + γ_T Π_T φ_T`.
///
/// Each face flux is the average of the values seen from its incident tets;
/// their difference is reported as the jump.
pub fn reconstruct_from_bubbles(mesh: &Mesh, cr: &Field, gamma: &[f64]) -> Result<Reconstruction> {
    if !matches!(cr, Field::Cr(_)) || gamma.len() != mesh.num_tets() {
        return Err(Error::FieldMismatch("expected a CR field and one bubble coefficient per tet".into()));
    }
    cr.check(mesh)?;
    let faces = mesh.faces();
    let mut sum = vec![0.0; faces.len()];
    let mut first = vec![f64::NAN; faces.len()];
    let mut max_jump: f64 = 0.0;
    let mut u = vec![0.0; mesh.num_tets()];
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let local = cr.local(mesh, t);
        let grad = combine_gradients(&local, &cr_gradients(&BarycentricMap::new(&v)?));
        let bubble = BubbleElement::new(&geom, gamma[t]);
        let coeffs = rt_interpolate(&geom, |x| grad + bubble.gamma * bubble.grad(x));
        let (ids, signs) = (faces.tet_faces(t), faces.tet_signs(t));
        for i in 0..4 {
            let c = signs[i] * coeffs[i];
            if first[ids[i]].is_nan() {
                first[ids[i]] = c;
            } else {
                max_jump = max_jump.max((c - first[ids[i]]).abs());
            }
            sum[ids[i]] += c;
        }
        // Π_T of a CR function is the mean of its face values; Π_T φ_T = 2L/5
        u[t] = local.iter().sum::<f64>() / 4.0 + bubble.gamma * 0.4 * bubble.l;
    }
    let sigma = faces
        .faces()
        .iter()
        .zip(&sum)
        .map(|(face, s)| if face.is_boundary() { *s } else { s / 2.0 })
        .collect();
    Ok(Reconstruction {
        field: Field::Mixed { sigma, u },
        max_jump,
    })
}

/// The Marini reconstruction with the correct bubble coefficients `Π_T f / 72`.
pub fn marini_reconstruct(mesh: &Mesh, cr: &Field, f: Source) -> Result<Reconstruction> {
    reconstruct_from_bubbles(mesh, cr, &bubble_coefficients(mesh, f, BUBBLE_DIVISOR))
}

/// `max_T |div σ_h|_T + Π_T f|` for a mixed field.
pub fn divergence_deviation(mesh: &Mesh, field: &Field, f: Source) -> Result<f64> {
    if !matches!(field, Field::Mixed { .. }) {
        return Err(Error::FieldMismatch("divergence check needs a mixed field".into()));
    }
    field.check(mesh)?;
    let pf = projected_source(mesh, f);
    let mut worst: f64 = 0.0;
    for t in 0..mesh.num_tets() {
        let geom = TetGeometry::new(mesh.tet_vertices(t))?;
        let div = Rt0Basis::new(&geom).combine(&field.local(mesh, t)).div();
        worst = worst.max((div + pf[t]).abs());
    }
    Ok(worst)
}

/// Relative L² distances `(‖σ_a - σ_b‖ / ‖σ_a‖, ‖u_a - u_b‖ / ‖u_a‖)` of two mixed fields.
pub fn mixed_l2_discrepancy(mesh: &Mesh, a: &Field, b: &Field) -> Result<(f64, f64)> {
    let (Field::Mixed { sigma: sa, u: ua }, Field::Mixed { sigma: sb, u: ub }) = (a, b) else {
        return Err(Error::FieldMismatch("discrepancy needs two mixed fields".into()));
    };
    a.check(mesh)?;
    b.check(mesh)?;
    let diff = Field::Mixed {
        sigma: sa.iter().zip(sb).map(|(x, y)| x - y).collect(),
        u: ua.iter().zip(ub).map(|(x, y)| x - y).collect(),
    };
    let (ds, du) = mixed_l2_norms(mesh, &diff)?;
    let (ns, nu) = mixed_l2_norms(mesh, a)?;
    let rel = |d: f64, n: f64| if n == 0.0 { d } else { d / n };
    Ok((rel(ds, ns), rel(du, nu)))
}

/// `(‖σ_h‖_{L²}, ‖u_h‖_{L²})`, exact for RT0 × P0.
pub fn mixed_l2_norms(mesh: &Mesh, field: &Field) -> Result<(f64, f64)> {
    let Field::Mixed { u, .. } = field else {
        return Err(Error::FieldMismatch("expected a mixed field".into()));
    };
    let rule = TetRule::tet_degree2();
    let (mut s, mut p) = (0.0, 0.0);
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let sigma = Rt0Basis::new(&geom).combine(&field.local(mesh, t));
        s += geom.volume * rule.mean_bary(|q| sigma.eval(&TetRule::map_point(&v, q)).norm_squared());
        p += geom.volume * u[t] * u[t];
    }
    Ok((s.sqrt(), p.sqrt()))
}

/// Outcome of comparing the reconstruction with a direct mixed solve.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub sigma_rel_l2: f64,
    pub u_rel_l2: f64,
    pub max_jump: f64,
    pub max_div_deviation: f64,
    pub cr_stats: SolveStats,
    pub mixed_stats: SolveStats,
}

/// Solves the CR problem with `Π_h^0 f`, reconstructs `(σ̄, ū)` with bubble
/// divisor `divisor` and compares it with the direct RT0 mixed solve.
pub fn check_equivalence(mesh: &Mesh, f: Source, opts: SolverOptions, divisor: f64) -> Result<EquivalenceReport> {
    let (cr, _, cr_stats) = enriched_cr_solve(mesh, f, opts)?;
    let rec = reconstruct_from_bubbles(mesh, &cr, &bubble_coefficients(mesh, f, divisor))?;
    let (direct, mixed_stats) = solve_saddle(&assemble_rt0_mixed(mesh, f, RhsMode::Projected)?, opts)?;
    let (sigma_rel_l2, u_rel_l2) = mixed_l2_discrepancy(mesh, &direct, &rec.field)?;
    Ok(EquivalenceReport {
        sigma_rel_l2,
        u_rel_l2,
        max_jump: rec.max_jump,
        max_div_deviation: divergence_deviation(mesh, &rec.field, f)?,
        cr_stats,
        mixed_stats,
    })
}
