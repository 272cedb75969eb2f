use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CliError;
use crate::elements::{local_commuting_check, BarycentricMap};
use crate::equivalence::{
    bubble_coefficients, bubble_identity_deviation, check_equivalence, cr_bubble_product, BUBBLE_DIVISOR,
};
use crate::geometry::TetGeometry;
use crate::mesh::{generate_aniso_cube, validate_conformity, Mesh};
use crate::quadrature::{barycentric_monomial_mean, exponents, triangle_area, QuadratureRule, TetRule, TriRule};
use crate::system::{duality_defect, Field, SolverOptions};
use crate::{Point3, Result, Vector3};

/// A deliberately broken ingredient, to confirm the suite notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Reverse one tet's orientation sign on an interior face.
    RtSign,
    /// Use 1/70 instead of 1/72 for the bubble coefficients.
    BubbleConstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCheck {
    pub identity: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl VerifyCheck {
    pub fn pass(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

fn random_tet(rng: &mut ChaCha8Rng) -> [Point3; 4] {
    loop {
        let v = [(); 4].map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let Ok(g) = TetGeometry::new(v) else { continue };
        if g.volume > 1e-3 {
            return v;
        }
    }
}

fn random_triangle(rng: &mut ChaCha8Rng) -> [Point3; 3] {
    loop {
        let v = [(); 3].map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        if triangle_area(&v) > 1e-2 {
            return v;
        }
    }
}

/// Worst relative error of `rule` on barycentric monomials up to its degree,
/// evaluated through physical coordinates on 100 random tets.
fn tet_rule_exactness(rule: &TetRule, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = random_tet(rng);
        let bary = BarycentricMap::new(&v)?;
        let volume = TetGeometry::new(v)?.volume;
        for alpha in exponents::<4>(rule.exactness_degree) {
            let got = rule.integrate(&v, |x| {
                let l = bary.eval(x);
                (0..4).map(|i| l[i].powi(alpha[i] as i32)).product()
            })?;
            let want = volume * barycentric_monomial_mean(&alpha);
            worst = worst.max((got - want).abs() / want);
        }
    }
    Ok(worst)
}

fn tri_rule_exactness(rule: &TriRule, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = random_triangle(rng);
        let area = triangle_area(&v);
        let bary = |x: &Point3| [0, 1, 2].map(|i| triangle_area(&[*x, v[(i + 1) % 3], v[(i + 2) % 3]]) / area);
        for alpha in exponents::<3>(rule.exactness_degree) {
            let got = rule.integrate(&v, |x| {
                let l = bary(x);
                (0..3).map(|i| l[i].powi(alpha[i] as i32)).product()
            })?;
            let want = area * barycentric_monomial_mean(&alpha);
            worst = worst.max((got - want).abs() / want);
        }
    }
    Ok(worst)
}

fn monomial(e: &[u32; 3], x: &Point3) -> f64 {
    (0..3).map(|d| x[d].powi(e[d] as i32)).product()
}

/// `div I^RT v = Π⁰ div v` for 100 random quadratic fields on random tets.
fn commuting_diagram(rng: &mut ChaCha8Rng) -> Result<f64> {
    let monomials = exponents::<3>(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let geom = TetGeometry::new(random_tet(rng))?;
        let coeffs: Vec<[f64; 3]> = monomials.iter().map(|_| [(); 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let field = |x: &Point3| {
            monomials
                .iter()
                .zip(&coeffs)
                .fold(Vector3::zeros(), |acc, (e, c)| acc + Vector3::from(*c) * monomial(e, x))
        };
        let div = |x: &Point3| {
            let mut s = 0.0;
            for (e, c) in monomials.iter().zip(&coeffs) {
                for d in 0..3 {
                    if e[d] > 0 {
                        let mut lower = *e;
                        lower[d] -= 1;
                        s += c[d] * e[d] as f64 * monomial(&lower, x);
                    }
                }
            }
            s
        };
        let (a, b) = local_commuting_check(&geom, field, div);
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    Ok(worst)
}

fn duality(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Result<f64> {
    let faces = mesh.faces();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let sigma = (0..faces.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let psi = (0..faces.len())
            .map(|k| if faces.get(k).is_boundary() { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let v_h = Field::Mixed {
            sigma,
            u: vec![0.0; mesh.num_tets()],
        };
        let (total, scale) = duality_defect(mesh, &v_h, &Field::Cr(psi))?;
        worst = worst.max(total.abs() / scale.max(1.0));
    }
    Ok(worst)
}

fn orthogonality(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let psi = Field::Cr((0..mesh.num_faces()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let gamma: Vec<f64> = (0..mesh.num_tets()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(cr_bubble_product(mesh, &psi, &gamma)?.abs());
    }
    Ok(worst)
}

fn faulty_mesh(m: usize, n: usize, fault: Fault) -> Result<Mesh> {
    let mesh = generate_aniso_cube(m, n)?;
    if fault != Fault::RtSign {
        return Ok(mesh);
    }
    let faces = mesh.faces();
    let t = (0..mesh.num_tets())
        .find(|&t| faces.tet_faces(t).iter().all(|&f| !faces.get(f).is_boundary()))
        .expect("mesh has an interior tet");
    Ok(mesh.with_face_sign_flip(t, 0))
}

/// Runs every identity check and returns them in a fixed order.
pub fn verify_checks(fault: Fault) -> Result<Vec<VerifyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checks = Vec::new();
    let mut push = |identity, max_deviation, tolerance| {
        checks.push(VerifyCheck {
            identity,
            max_deviation,
            tolerance,
        })
    };

    push("quadrature_tet_degree2", tet_rule_exactness(&QuadratureRule::tet_degree2(), &mut rng)?, 1e-12);
    push("quadrature_tet_degree5", tet_rule_exactness(&QuadratureRule::tet_degree5(), &mut rng)?, 1e-12);
    push("quadrature_tri_degree2", tri_rule_exactness(&QuadratureRule::tri_midpoint3(), &mut rng)?, 1e-12);
    push("commuting_diagram", commuting_diagram(&mut rng)?, 1e-12);

    let small = faulty_mesh(2, 2, fault)?;
    let medium = faulty_mesh(4, 8, fault)?;
    let conformity = validate_conformity(&medium);
    push("mesh_conformity", if conformity.passed { 0.0 } else { 1.0 }, 0.0);
    push(
        "bubble_identities",
        bubble_identity_deviation(&small)?.max(bubble_identity_deviation(&medium)?),
        1e-12,
    );
    push("discrete_duality", duality(&small, &mut rng)?, 1e-11);
    push("cr_bubble_orthogonality", orthogonality(&small, &mut rng)?, 1e-11);

    let case = crate::analysis::ManufacturedCase::default();
    let f = |p: &Point3| case.f(p);
    let divisor = if fault == Fault::BubbleConstant { 70.0 } else { BUBBLE_DIVISOR };
    let opts = SolverOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let (mut sigma, mut u, mut div, mut jump) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for mesh in [&small, &medium] {
        let report = check_equivalence(mesh, &f, opts, divisor)?;
        sigma = sigma.max(report.sigma_rel_l2);
        u = u.max(report.u_rel_l2);
        div = div.max(report.max_div_deviation);
        jump = jump.max(report.max_jump);
    }
    push("marini_sigma_l2", sigma, 1e-7);
    push("marini_u_l2", u, 1e-7);
    push("marini_divergence", div, 1e-11);
    push("normal_jump", jump, 1e-9);

    // γ_T = Π_T f / 72 gives γ = 1 for f ≡ 72
    let gamma = bubble_coefficients(&small, &|_| 72.0, divisor);
    push("bubble_coefficient", gamma.iter().fold(0.0f64, |m, g| m.max((g - 1.0).abs())), 1e-13);
    Ok(checks)
}

/// Writes the check table as CSV and fails if any check fails.
pub fn run_verify(fault: Fault, out: &mut dyn Write) -> Result<(), CliError> {
    let checks = verify_checks(fault)?;
    writeln!(out, "identity,max_deviation,tolerance,pass")?;
    for c in &checks {
        writeln!(out, "{},{:.3e},{:.1e},{}", c.identity, c.max_deviation, c.tolerance, c.pass())?;
    }
    out.flush()?;
    match checks.iter().filter(|c| !c.pass()).count() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}
