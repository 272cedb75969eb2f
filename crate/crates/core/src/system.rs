//! Global assembly of the P1, Crouzeix–Raviart and RT0 mixed systems, and
//! the iterative solvers used on them.
//!
//! Degrees of freedom:
//! * P1: one per vertex, boundary vertices constrained to zero;
//! * CR: one per face (its mean value), boundary faces constrained to zero;
//! * RT0 × P0: one flux per face, measured against the stored face normal
//!   `n_F`, followed by one pressure per tetrahedron. No constraints.
//!
//! Constraints are eliminated symmetrically: the row and column are dropped
//! and a unit diagonal entry with zero right-hand side takes their place.

use thiserror::Error;

use crate::elements::{combine_gradients, cr_gradients, cr_value, BarycentricMap, Rt0Basis};
use crate::geometry::TetGeometry;
use crate::mesh::{signed_volume6, Mesh};
use crate::quadrature::TetRule;
use crate::sparse::{dot, norm, CsrMatrix};
use crate::{Error, Point3, Result};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("solver breakdown: {0}")]
    Breakdown(&'static str),
    #[error("{0} system passed to the wrong solver")]
    WrongSystem(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    P1,
    Cr,
    /// RT0 fluxes on faces plus P0 pressures on tets.
    Mixed,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::P1 => "P1",
            Space::Cr => "CR",
            Space::Mixed => "RT0-P0",
        }
    }
}

/// How the load `f` enters the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// `(f, φ)` integrated with the degree-5 rule.
    Exact,
    /// `(Π_h^0 f, φ)`: `f` replaced by its elementwise mean.
    Projected,
}

pub type Source<'a> = &'a dyn Fn(&Point3) -> f64;

#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub space: Space,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global index of each local DOF of each tet (vertices for P1, faces otherwise).
    pub dof_map: Vec<[usize; 4]>,
    /// DOFs eliminated by the homogeneous Dirichlet condition.
    pub constrained: Vec<usize>,
    /// Number of flux unknowns; pressures start at this offset (mixed systems only).
    pub num_flux: usize,
    /// Tet volumes, in tet order.
    pub volumes: Vec<f64>,
}

impl SparseSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// `‖b - A x‖ / ‖b‖`, or `‖A x‖` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        relative_residual(&self.matrix, &self.rhs, x)
    }
}

fn relative_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// A discrete solution tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    P1(Vec<f64>),
    Cr(Vec<f64>),
    Mixed { sigma: Vec<f64>, u: Vec<f64> },
}

impl Field {
    pub fn space(&self) -> Space {
        match self {
            Field::P1(_) => Space::P1,
            Field::Cr(_) => Space::Cr,
            Field::Mixed { .. } => Space::Mixed,
        }
    }

    /// Checks that the coefficient counts fit `mesh`.
    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        let ok = match self {
            Field::P1(c) => c.len() == mesh.num_vertices(),
            Field::Cr(c) => c.len() == mesh.num_faces(),
            Field::Mixed { sigma, u } => sigma.len() == mesh.num_faces() && u.len() == mesh.num_tets(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::FieldMismatch(format!(
                "{} field with wrong coefficient count for a mesh with {} vertices, {} faces, {} tets",
                self.space().name(),
                mesh.num_vertices(),
                mesh.num_faces(),
                mesh.num_tets()
            )))
        }
    }

    /// Local coefficients on tet `t` (vertex values, face values or oriented fluxes).
    pub fn local(&self, mesh: &Mesh, t: usize) -> [f64; 4] {
        match self {
            Field::P1(c) => mesh.tets()[t].v.map(|i| c[i]),
            Field::Cr(c) => mesh.faces().tet_faces(t).map(|f| c[f]),
            Field::Mixed { sigma, .. } => {
                let faces = mesh.faces();
                let (ids, signs) = (faces.tet_faces(t), faces.tet_signs(t));
                [0, 1, 2, 3].map(|i| signs[i] * sigma[ids[i]])
            }
        }
    }
}

fn load_vector(
    mesh: &Mesh,
    f: Source,
    mode: RhsMode,
    basis: impl Fn(&[f64; 4]) -> [f64; 4],
    dof_of: impl Fn(usize) -> [usize; 4],
    rhs: &mut [f64],
) -> Result<()> {
    let rule = TetRule::tet_degree5();
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let dofs = dof_of(t);
        match mode {
            RhsMode::Exact => {
                let mut local = [0.0; 4];
                for (q, w) in rule.points.iter().zip(&rule.weights) {
                    let fx = f(&TetRule::map_point(&v, q));
                    let phi = basis(q);
                    for i in 0..4 {
                        local[i] += w * fx * phi[i];
                    }
                }
                for i in 0..4 {
                    rhs[dofs[i]] += geom.volume * local[i];
                }
            }
            RhsMode::Projected => {
                // both P1 and CR basis functions have mean 1/4 over the tet
                let mean = rule.mean_bary(|q| f(&TetRule::map_point(&v, q)));
                for &d in &dofs {
                    rhs[d] += mean * geom.volume / 4.0;
                }
            }
        }
    }
    Ok(())
}

fn tet_volumes(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.num_tets()).map(|t| signed_volume6(&mesh.tet_vertices(t)) / 6.0).collect()
}

fn eliminate(n: usize, triplets: Vec<(usize, usize, f64)>, constrained: &[usize], rhs: &mut [f64]) -> CsrMatrix {
    let mut fixed = vec![false; n];
    for &d in constrained {
        fixed[d] = true;
        rhs[d] = 0.0;
    }
    let mut kept: Vec<_> = triplets.into_iter().filter(|&(r, c, _)| !fixed[r] && !fixed[c]).collect();
    kept.extend(constrained.iter().map(|&d| (d, d, 1.0)));
    CsrMatrix::from_triplets(n, n, &kept)
}

/// Conforming P1 system with homogeneous Dirichlet data.
pub fn assemble_p1(mesh: &Mesh, f: Source, mode: RhsMode) -> Result<SparseSystem> {
    if mesh.num_tets() == 0 {
        return Err(crate::mesh::MeshError::Empty.into());
    }
    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(16 * mesh.num_tets());
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let bary = BarycentricMap::new(&v)?;
        let dofs = mesh.tets()[t].v;
        for i in 0..4 {
            for j in 0..4 {
                triplets.push((dofs[i], dofs[j], geom.volume * bary.grads[i].dot(&bary.grads[j])));
            }
        }
    }
    let mut rhs = vec![0.0; n];
    load_vector(mesh, f, mode, |q| *q, |t| mesh.tets()[t].v, &mut rhs)?;

    let faces = mesh.faces();
    let mut on_boundary = vec![false; n];
    for face in faces.faces().iter().filter(|f| f.is_boundary()) {
        for &v in &face.vertices {
            on_boundary[v] = true;
        }
    }
    let constrained: Vec<usize> = (0..n).filter(|&v| on_boundary[v]).collect();
    let matrix = eliminate(n, triplets, &constrained, &mut rhs);
    Ok(SparseSystem {
        space: Space::P1,
        matrix,
        rhs,
        dof_map: mesh.tets().iter().map(|t| t.v).collect(),
        constrained,
        num_flux: 0,
        volumes: tet_volumes(mesh),
    })
}

/// Crouzeix–Raviart system: one unknown per face, boundary face means fixed to zero.
pub fn assemble_cr(mesh: &Mesh, f: Source, mode: RhsMode) -> Result<SparseSystem> {
    if mesh.num_tets() == 0 {
        return Err(crate::mesh::MeshError::Empty.into());
    }
    let faces = mesh.faces();
    let n = faces.len();
    let mut triplets = Vec::with_capacity(16 * mesh.num_tets());
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let bary = BarycentricMap::new(&v)?;
        let dofs = faces.tet_faces(t);
        for i in 0..4 {
            for j in 0..4 {
                // ∇θ_i = -3∇λ_i
                triplets.push((dofs[i], dofs[j], 9.0 * geom.volume * bary.grads[i].dot(&bary.grads[j])));
            }
        }
    }
    let mut rhs = vec![0.0; n];
    load_vector(mesh, f, mode, |q| q.map(|l| 1.0 - 3.0 * l), |t| faces.tet_faces(t), &mut rhs)?;

    let constrained: Vec<usize> = (0..n).filter(|&k| faces.get(k).is_boundary()).collect();
    let matrix = eliminate(n, triplets, &constrained, &mut rhs);
    Ok(SparseSystem {
        space: Space::Cr,
        matrix,
        rhs,
        dof_map: (0..mesh.num_tets()).map(|t| faces.tet_faces(t)).collect(),
        constrained,
        num_flux: 0,
        volumes: tet_volumes(mesh),
    })
}

/// Local RT0 mass matrix `∫_T ψ_i · ψ_j`, by the degree-2 rule (exact for this integrand).
pub fn rt0_local_mass(geom: &TetGeometry) -> [[f64; 4]; 4] {
    let basis = Rt0Basis::new(geom);
    let rule = TetRule::tet_degree2();
    let mut m = [[0.0; 4]; 4];
    for (q, w) in rule.points.iter().zip(&rule.weights) {
        let x = TetRule::map_point(&geom.vertices, q);
        let psi = [0, 1, 2, 3].map(|i| basis.eval(i, &x));
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += w * geom.volume * psi[i].dot(&psi[j]);
            }
        }
    }
    m
}

/// The RT0 × P0 saddle-point system
/// `[[A, Bᵀ], [B, 0]] (σ, u) = (0, -(f, q))`.
pub fn assemble_rt0_mixed(mesh: &Mesh, f: Source, mode: RhsMode) -> Result<SparseSystem> {
    if mesh.num_tets() == 0 {
        return Err(crate::mesh::MeshError::Empty.into());
    }
    let faces = mesh.faces();
    let nf = faces.len();
    let n = nf + mesh.num_tets();
    let rule = TetRule::tet_degree5();
    let mut triplets = Vec::with_capacity(24 * mesh.num_tets());
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let ids = faces.tet_faces(t);
        let signs = faces.tet_signs(t);
        let mass = rt0_local_mass(&geom);
        for i in 0..4 {
            for j in 0..4 {
                triplets.push((ids[i], ids[j], signs[i] * signs[j] * mass[i][j]));
            }
        }
        // b(ψ_i, q_T) = ∫_T div ψ_i = |F_i|
        let p = nf + t;
        for i in 0..4 {
            let b = signs[i] * geom.face_areas[i];
            triplets.push((ids[i], p, b));
            triplets.push((p, ids[i], b));
        }
        let mean = rule.mean_bary(|q| f(&TetRule::map_point(&v, q)));
        // (f, 1_T) and (Π f, 1_T) coincide; both evaluated with the same rule
        rhs[p] = match mode {
            RhsMode::Exact | RhsMode::Projected => -mean * geom.volume,
        };
    }
    let matrix = CsrMatrix::from_triplets(n, n, &triplets);
    Ok(SparseSystem {
        space: Space::Mixed,
        matrix,
        rhs,
        dof_map: (0..mesh.num_tets()).map(|t| faces.tet_faces(t)).collect(),
        constrained: Vec::new(),
        num_flux: nf,
        volumes: tet_volumes(mesh),
    })
}

/// `(v_h, ∇_h ψ_h) + (div v_h, ψ_h)` for an RT0 flux `v_h` (the flux part of a
/// mixed field) and a CR field `ψ_h`, with the sum of the absolute elementwise
/// terms as a scale. The first value vanishes when `ψ_h` has zero boundary face means.
pub fn duality_defect(mesh: &Mesh, v_h: &Field, psi_h: &Field) -> Result<(f64, f64)> {
    if !matches!(v_h, Field::Mixed { .. }) || !matches!(psi_h, Field::Cr(_)) {
        return Err(Error::FieldMismatch("duality defect needs a mixed field and a CR field".into()));
    }
    v_h.check(mesh)?;
    psi_h.check(mesh)?;
    let rule = TetRule::tet_degree2();
    let (mut total, mut scale) = (0.0, 0.0);
    for t in 0..mesh.num_tets() {
        let v = mesh.tet_vertices(t);
        let geom = TetGeometry::new(v)?;
        let bary = BarycentricMap::new(&v)?;
        let field = Rt0Basis::new(&geom).combine(&v_h.local(mesh, t));
        let c = psi_h.local(mesh, t);
        let grad = combine_gradients(&c, &cr_gradients(&bary));
        let a = rule.integrate(&v, |p| field.eval(p).dot(&grad))?;
        let b = rule.integrate(&v, |p| field.div() * cr_value(&c, &bary.eval(p)))?;
        total += a + b;
        scale += a.abs() + b.abs();
    }
    Ok((total, scale))
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Target relative residual `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite matrix.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], opts: SolverOptions) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let nb = norm(b);
    if nb == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut iterations = 0;
    let mut ap = vec![0.0; n];
    // Restart from the true residual if the recursive one drifted below tolerance.
    loop {
        let mut r: Vec<f64> = {
            a.mul_vec_into(&x, &mut ap);
            b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect()
        };
        let true_res = norm(&r) / nb;
        if true_res <= opts.tol {
            return Ok((x, SolveStats { iterations, relative_residual: true_res }));
        }
        if iterations >= opts.max_iter {
            return Err(SolverError::NotConverged { iterations, residual: true_res });
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(SolverError::Breakdown("matrix is not positive definite"));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm(&r) / nb <= opts.tol {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) matrix with a
/// positive diagonal preconditioner given by its inverse.
pub fn minres(
    a: &CsrMatrix,
    b: &[f64],
    inv_precond: &[f64],
    opts: SolverOptions,
) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let nb = norm(b);
    if nb == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let mut iterations = 0;
    loop {
        let ax = a.mul_vec(&x);
        let r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let true_res = norm(&r0) / nb;
        if true_res <= opts.tol {
            return Ok((x, SolveStats { iterations, relative_residual: true_res }));
        }
        if iterations >= opts.max_iter {
            return Err(SolverError::NotConverged { iterations, residual: true_res });
        }
        let dx = minres_cycle(a, &r0, inv_precond, opts.tol * nb / norm(&r0), opts.max_iter - iterations, &mut iterations)?;
        for i in 0..n {
            x[i] += dx[i];
        }
    }
}

/// One MINRES run from a zero initial guess; stops on the preconditioned residual estimate.
fn minres_cycle(
    a: &CsrMatrix,
    b: &[f64],
    inv_precond: &[f64],
    rtol: f64,
    budget: usize,
    iterations: &mut usize,
) -> Result<Vec<f64>, SolverError> {
    let n = b.len();
    let apply_precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(inv_precond).map(|(a, m)| a * m).collect() };
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = apply_precond(&r1);
    let beta1 = dot(&r1, &y);
    if beta1 < 0.0 {
        return Err(SolverError::Breakdown("preconditioner is not positive definite"));
    }
    let beta1 = beta1.sqrt();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    // The preconditioned estimate is checked with a small margin; the caller verifies the true residual.
    let target = 0.5 * rtol * beta1;
    for k in 0..budget {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        a.mul_vec_into(&v, &mut y);
        if k > 0 {
            let c = beta / oldb;
            for i in 0..n {
                y[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for i in 0..n {
            y[i] -= c * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y = apply_precond(&r2);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            return Err(SolverError::Breakdown("preconditioner is not positive definite"));
        }
        beta = bsq.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        *iterations += 1;
        if phibar <= target || beta == 0.0 {
            break;
        }
    }
    Ok(x)
}

/// Solves a P1 or CR system with Jacobi-preconditioned CG.
pub fn solve_spd(system: &SparseSystem, opts: SolverOptions) -> Result<(Field, SolveStats)> {
    let (x, stats) = match system.space {
        Space::Mixed => return Err(SolverError::WrongSystem("mixed").into()),
        _ => conjugate_gradient(&system.matrix, &system.rhs, opts)?,
    };
    let field = match system.space {
        Space::P1 => Field::P1(x),
        _ => Field::Cr(x),
    };
    Ok((field, stats))
}

/// Pressure block of the MINRES preconditioner for the mixed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PressureBlock {
    /// `|T|` on each pressure, the lumped P0 mass matrix.
    #[default]
    VolumeMass,
    /// `diag(B diag(A)⁻¹ Bᵀ)`, a diagonal Schur-complement approximation.
    /// Usually needs about half the iterations on anisotropic meshes.
    SchurDiagonal,
}

/// Inverse of the block-diagonal preconditioner: `diag(A)` on the fluxes and
/// the chosen pressure block.
pub fn saddle_preconditioner(system: &SparseSystem, block: PressureBlock, volumes: &[f64]) -> Vec<f64> {
    let nf = system.num_flux;
    let diag = system.matrix.diagonal();
    let mut inv = vec![0.0; system.dim()];
    for f in 0..nf {
        inv[f] = 1.0 / diag[f];
    }
    for p in nf..system.dim() {
        inv[p] = match block {
            PressureBlock::VolumeMass => 1.0 / volumes[p - nf],
            PressureBlock::SchurDiagonal => {
                let (cols, vals) = system.matrix.row(p);
                1.0 / cols.iter().zip(vals).map(|(&c, &b)| b * b / diag[c]).sum::<f64>()
            }
        };
    }
    inv
}

/// Solves the RT0 mixed system with block-preconditioned MINRES.
pub fn solve_saddle(system: &SparseSystem, opts: SolverOptions) -> Result<(Field, SolveStats)> {
    solve_saddle_with(system, opts, PressureBlock::default())
}

pub fn solve_saddle_with(system: &SparseSystem, opts: SolverOptions, block: PressureBlock) -> Result<(Field, SolveStats)> {
    if system.space != Space::Mixed {
        return Err(SolverError::WrongSystem(system.space.name()).into());
    }
    let inv = saddle_preconditioner(system, block, &system.volumes);
    let (x, stats) = minres(&system.matrix, &system.rhs, &inv, opts)?;
    let nf = system.num_flux;
    Ok((
        Field::Mixed {
            sigma: x[..nf].to_vec(),
            u: x[nf..].to_vec(),
        },
        stats,
    ))
}

/// Assembles and solves the problem for `space` in one call.
pub fn solve(mesh: &Mesh, space: Space, f: Source, mode: RhsMode, opts: SolverOptions) -> Result<(Field, SolveStats)> {
    match space {
        Space::P1 => solve_spd(&assemble_p1(mesh, f, mode)?, opts),
        Space::Cr => solve_spd(&assemble_cr(mesh, f, mode)?, opts),
        Space::Mixed => solve_saddle(&assemble_rt0_mixed(mesh, f, mode)?, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_aniso_cube, Tet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_tets() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0., 0., 0.),
                Point3::new(1., 0., 0.),
                Point3::new(0., 1., 0.),
                Point3::new(0., 0., 1.),
                Point3::new(1., 1., 1.),
            ],
            vec![Tet::new([0, 1, 2, 3]), Tet::new([1, 2, 3, 4])].into_iter().map(fix).collect(),
        )
        .unwrap()
    }

    fn fix(mut t: Tet) -> Tet {
        let p = [
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 1., 0.),
            Point3::new(0., 0., 1.),
            Point3::new(1., 1., 1.),
        ];
        if crate::mesh::signed_volume6(&t.v.map(|i| p[i])) < 0.0 {
            t.v.swap(2, 3);
        }
        t
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let m = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= m * a[k][j];
                }
                b[i] -= m * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            x[k] = (b[k] - (k + 1..n).map(|j| a[k][j] * x[j]).sum::<f64>()) / a[k][k];
        }
        x
    }

    #[test]
    fn cg_small_cases() {
        let id = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let (x, _) = conjugate_gradient(&id, &[1.0, -2.0, 3.0], SolverOptions::default()).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        let (x, stats) = conjugate_gradient(&a, &[1.0, 1.0], SolverOptions::default()).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12 && (x[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(stats.relative_residual <= 1e-10);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 10.0), (2, 2, 100.0), (0, 1, 0.5), (1, 0, 0.5)]);
        let err = conjugate_gradient(&a, &[1.0, 1.0, 1.0], SolverOptions { tol: 1e-14, max_iter: 1 }).unwrap_err();
        assert!(matches!(err, SolverError::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn minres_on_indefinite_matrix() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 0, 1.0), (2, 1, 1.0)]);
        let b = [1.0, 2.0, 3.0];
        let (x, stats) = minres(&a, &b, &[1.0; 3], SolverOptions::default()).unwrap();
        let want = dense_solve(a.to_dense(), b.to_vec());
        for i in 0..3 {
            assert!((x[i] - want[i]).abs() < 1e-9);
        }
        assert!(stats.relative_residual <= 1e-10);
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let mesh = generate_aniso_cube(2, 2).unwrap();
        let zero = |_: &Point3| 0.0;
        for space in [Space::P1, Space::Cr, Space::Mixed] {
            let (field, _) = solve(&mesh, space, &zero, RhsMode::Exact, SolverOptions::default()).unwrap();
            let all_zero = match &field {
                Field::P1(c) | Field::Cr(c) => c.iter().all(|&v| v == 0.0),
                Field::Mixed { sigma, u } => sigma.iter().chain(u).all(|&v| v == 0.0),
            };
            assert!(all_zero);
        }
    }

    #[test]
    fn p1_stiffness_annihilates_constants() {
        let mesh = generate_aniso_cube(2, 4).unwrap();
        let mut triplets = vec![];
        for t in 0..mesh.num_tets() {
            let v = mesh.tet_vertices(t);
            let g = TetGeometry::new(v).unwrap();
            let b = BarycentricMap::new(&v).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    triplets.push((mesh.tets()[t].v[i], mesh.tets()[t].v[j], g.volume * b.grads[i].dot(&b.grads[j])));
                }
            }
        }
        let k = CsrMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), &triplets);
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(k.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn system_sizes_and_symmetry() {
        let mesh = generate_aniso_cube(4, 8).unwrap();
        let f = |p: &Point3| p.x * p.y + 1.0;
        let p1 = assemble_p1(&mesh, &f, RhsMode::Exact).unwrap();
        assert_eq!(p1.dim(), 225);
        assert_eq!(p1.dim() - p1.constrained.len(), 3 * 3 * 7);
        let cr = assemble_cr(&mesh, &f, RhsMode::Exact).unwrap();
        assert_eq!(cr.dim(), 1440);
        assert_eq!(cr.constrained.len(), 320);
        let mixed = assemble_rt0_mixed(&mesh, &f, RhsMode::Exact).unwrap();
        assert_eq!(mixed.num_flux, 1440);
        assert_eq!(mixed.dim() - mixed.num_flux, 640);
        for sys in [&p1, &cr, &mixed] {
            assert_eq!(sys.matrix.asymmetry(), 0.0);
        }
    }

    #[test]
    fn cr_solve_converges_quickly_enough() {
        let mesh = generate_aniso_cube(4, 8).unwrap();
        let f = |p: &Point3| p.x + p.y * p.z;
        let sys = assemble_cr(&mesh, &f, RhsMode::Exact).unwrap();
        let (field, stats) = solve_spd(&sys, SolverOptions::default()).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        assert!(stats.iterations < 5000, "{} iterations", stats.iterations);
        let Field::Cr(x) = field else { panic!() };
        assert!(sys.relative_residual(&x) <= 1e-10);
    }

    #[test]
    fn mixed_solve_matches_dense_oracle_on_two_tets() {
        let mesh = two_tets();
        let f = |p: &Point3| 1.0 + p.x - 2.0 * p.z;
        let sys = assemble_rt0_mixed(&mesh, &f, RhsMode::Projected).unwrap();
        let (field, _) = solve_saddle(&sys, SolverOptions { tol: 1e-13, ..Default::default() }).unwrap();
        let want = dense_solve(sys.matrix.to_dense(), sys.rhs.clone());
        let Field::Mixed { sigma, u } = field else { panic!() };
        let got: Vec<f64> = sigma.iter().chain(&u).copied().collect();
        let scale = norm(&want);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn mixed_solve_on_cube() {
        let mesh = generate_aniso_cube(4, 8).unwrap();
        let f = |p: &Point3| p.x * (1.0 - p.x) + p.z;
        let sys = assemble_rt0_mixed(&mesh, &f, RhsMode::Exact).unwrap();
        let (field, stats) = solve_saddle(&sys, SolverOptions::default()).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        let Field::Mixed { sigma, u } = field else { panic!() };
        let x: Vec<f64> = sigma.into_iter().chain(u).collect();
        assert!(sys.relative_residual(&x) <= 1e-10);
    }

    #[test]
    fn wrong_solver_is_rejected() {
        let mesh = generate_aniso_cube(2, 1).unwrap();
        let f = |_: &Point3| 1.0;
        let cr = assemble_cr(&mesh, &f, RhsMode::Exact).unwrap();
        assert!(solve_saddle(&cr, SolverOptions::default()).is_err());
        let mixed = assemble_rt0_mixed(&mesh, &f, RhsMode::Exact).unwrap();
        assert!(solve_spd(&mixed, SolverOptions::default()).is_err());
    }

    #[test]
    fn empty_mesh_is_rejected() {
        let mesh = Mesh::new(vec![], vec![]).unwrap();
        let f = |_: &Point3| 1.0;
        assert!(assemble_p1(&mesh, &f, RhsMode::Exact).is_err());
    }

    #[test]
    fn projected_and_exact_loads_agree_for_constant_f() {
        let mesh = generate_aniso_cube(2, 3).unwrap();
        let f = |_: &Point3| 2.5;
        let a = assemble_cr(&mesh, &f, RhsMode::Exact).unwrap();
        let b = assemble_cr(&mesh, &f, RhsMode::Projected).unwrap();
        for (x, y) in a.rhs.iter().zip(&b.rhs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn tet_order_does_not_change_the_solution() {
        let mesh = generate_aniso_cube(4, 4).unwrap();
        let order: Vec<usize> = (0..mesh.num_tets()).map(|k| (k * 37) % mesh.num_tets()).collect();
        let permuted = mesh.permute_tets(&order);
        let f = |p: &Point3| (p.x * 3.0).sin() + p.y;
        let opts = SolverOptions { tol: 1e-12, ..Default::default() };
        for space in [Space::P1, Space::Cr] {
            let (a, _) = solve(&mesh, space, &f, RhsMode::Exact, opts).unwrap();
            let (b, _) = solve(&permuted, space, &f, RhsMode::Exact, opts).unwrap();
            let (Field::P1(a) | Field::Cr(a)) = a else { panic!() };
            let (Field::P1(b) | Field::Cr(b)) = b else { panic!() };
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn both_pressure_blocks_give_the_same_solution() {
        let mesh = generate_aniso_cube(4, 8).unwrap();
        let f = |p: &Point3| 1.0 + p.y;
        let sys = assemble_rt0_mixed(&mesh, &f, RhsMode::Projected).unwrap();
        let opts = SolverOptions { tol: 1e-12, ..Default::default() };
        let (a, _) = solve_saddle_with(&sys, opts, PressureBlock::VolumeMass).unwrap();
        let (b, _) = solve_saddle_with(&sys, opts, PressureBlock::SchurDiagonal).unwrap();
        let (Field::Mixed { sigma: sa, u: ua }, Field::Mixed { sigma: sb, u: ub }) = (a, b) else { panic!() };
        let diff: Vec<f64> = sa.iter().chain(&ua).zip(sb.iter().chain(&ub)).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) <= 1e-9 * norm(&sa));
    }

    #[test]
    fn mixed_residual_matches_hand_assembly_on_two_tets() {
        let mesh = two_tets();
        let f = |p: &Point3| 2.0 - p.y;
        let sys = assemble_rt0_mixed(&mesh, &f, RhsMode::Exact).unwrap();
        let faces = mesh.faces();
        let nf = faces.len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // residual computed tet by tet from point evaluations of the fields
        let mut want = sys.rhs.clone();
        let dense_rule = TetRule::tet_degree5();
        for t in 0..mesh.num_tets() {
            let v = mesh.tet_vertices(t);
            let geom = TetGeometry::new(v).unwrap();
            let basis = Rt0Basis::new(&geom);
            let (ids, signs) = (faces.tet_faces(t), faces.tet_signs(t));
            let c = [0, 1, 2, 3].map(|i| signs[i] * x[ids[i]]);
            let sigma = basis.combine(&c);
            for i in 0..4 {
                let psi_dot_sigma = dense_rule
                    .integrate(&v, |p| basis.eval(i, p).dot(&sigma.eval(p)))
                    .unwrap();
                let div_psi = dense_rule.integrate(&v, |_| basis.div(i)).unwrap();
                want[ids[i]] -= signs[i] * (psi_dot_sigma + div_psi * x[nf + t]);
            }
            want[nf + t] -= dense_rule.integrate(&v, |_| sigma.div()).unwrap();
        }
        let ax = sys.matrix.mul_vec(&x);
        for k in 0..sys.dim() {
            assert!((sys.rhs[k] - ax[k] - want[k]).abs() <= 1e-12, "row {k}");
        }
    }

    #[test]
    fn discrete_duality_identity() {
        let mesh = generate_aniso_cube(2, 2).unwrap();
        let faces = mesh.faces();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let sigma: Vec<f64> = (0..faces.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let psi: Vec<f64> = (0..faces.len())
                .map(|k| if faces.get(k).is_boundary() { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let v_h = Field::Mixed { sigma, u: vec![0.0; mesh.num_tets()] };
            let (total, scale) = duality_defect(&mesh, &v_h, &Field::Cr(psi)).unwrap();
            assert!(total.abs() <= 1e-11 * scale.max(1.0), "{total}");
        }
    }

    #[test]
    fn duality_needs_zero_boundary_means() {
        let mesh = generate_aniso_cube(2, 2).unwrap();
        let v_h = Field::Mixed { sigma: vec![1.0; mesh.num_faces()], u: vec![0.0; mesh.num_tets()] };
        let (total, _) = duality_defect(&mesh, &v_h, &Field::Cr(vec![1.0; mesh.num_faces()])).unwrap();
        // with ψ ≡ 1 the defect is the net outward flux through ∂Ω
        let boundary_flux: f64 = mesh
            .faces()
            .faces()
            .iter()
            .filter(|f| f.is_boundary())
            .map(|f| f.area * mesh.faces().tet_signs(f.first_tet())[f.local[0]])
            .sum();
        assert!((total - boundary_flux).abs() < 1e-12);
    }
}
