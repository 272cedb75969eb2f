//! Local shape functions and interpolation operators on a single tetrahedron.
//!
//! Local face `i` is opposite vertex `i` and carries the outward normal `n_i`.
//! With that ordering the P1 nodal basis `λ_i`, the Crouzeix–Raviart basis
//! `θ_i = 3(1/3 - λ_i)` and the Raviart–Thomas basis
//! `ψ_i = |F_i| / (3|T|) (x - x_i)` are each dual to their own degrees of
//! freedom: point values, face means and normal-flux means.

use crate::geometry::{GeometryError, TetGeometry};
use crate::mesh::LOCAL_FACES;
use crate::quadrature::{TetRule, TriRule};
use crate::{Point3, Vector3};

/// The affine barycentric coordinates of a tetrahedron.
#[derive(Debug, Clone)]
pub struct BarycentricMap {
    /// `λ_i(x) = offsets[i] + grads[i] · x`
    pub offsets: [f64; 4],
    pub grads: [Vector3; 4],
}

impl BarycentricMap {
    pub fn new(v: &[Point3; 4]) -> Result<Self, GeometryError> {
        let jac = nalgebra::Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        let inv = jac.try_inverse().ok_or(GeometryError::Degenerate(0.0))?;
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        let grads = [-(g1 + g2 + g3), g1, g2, g3];
        let offsets = [0, 1, 2, 3].map(|i| if i == 0 { 1.0 } else { 0.0 } - grads[i].dot(&v[0].coords));
        Ok(Self { offsets, grads })
    }

    pub fn eval(&self, x: &Point3) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.offsets[i] + self.grads[i].dot(&x.coords))
    }
}

/// Gradients of the Crouzeix–Raviart basis functions `θ_i = 1 - 3λ_i`.
pub fn cr_gradients(bary: &BarycentricMap) -> [Vector3; 4] {
    bary.grads.map(|g| -3.0 * g)
}

pub fn cr_basis(lambda: &[f64; 4]) -> [f64; 4] {
    lambda.map(|l| 1.0 - 3.0 * l)
}

/// The Raviart–Thomas basis `ψ_i(x) = s_i (x - x_i)` with `s_i = |F_i| / (3|T|)`.
#[derive(Debug, Clone)]
pub struct Rt0Basis {
    pub scale: [f64; 4],
    pub vertices: [Point3; 4],
}

impl Rt0Basis {
    pub fn new(geom: &TetGeometry) -> Self {
        Self {
            scale: geom.face_areas.map(|a| a / (3.0 * geom.volume)),
            vertices: geom.vertices,
        }
    }

    pub fn eval(&self, i: usize, x: &Point3) -> Vector3 {
        self.scale[i] * (x - self.vertices[i])
    }

    /// `div ψ_i = 3 s_i = |F_i| / |T|`.
    pub fn div(&self, i: usize) -> f64 {
        3.0 * self.scale[i]
    }

    /// The RT0 field with local coefficients `c`, as `p + q x`.
    pub fn combine(&self, c: &[f64; 4]) -> Rt0Field {
        let mut p = Vector3::zeros();
        let mut q = 0.0;
        for i in 0..4 {
            p -= c[i] * self.scale[i] * self.vertices[i].coords;
            q += c[i] * self.scale[i];
        }
        Rt0Field { constant: p, linear: q }
    }
}

/// An element of `RT0(T)`: `v(x) = constant + linear · x`.
#[derive(Debug, Clone, Copy)]
pub struct Rt0Field {
    pub constant: Vector3,
    pub linear: f64,
}

impl Rt0Field {
    pub fn eval(&self, x: &Point3) -> Vector3 {
        self.constant + self.linear * x.coords
    }

    pub fn div(&self) -> f64 {
        3.0 * self.linear
    }
}

fn face_vertices(v: &[Point3; 4], i: usize) -> [Point3; 3] {
    LOCAL_FACES[i].map(|k| v[k])
}

/// `Π_T^0 f`: the mean value of `f` over `T`, by the degree-5 rule.
pub fn p0_project(v: &[Point3; 4], f: impl Fn(&Point3) -> f64) -> f64 {
    TetRule::tet_degree5().mean_bary(|q| f(&TetRule::map_point(v, q)))
}

/// Face mean of `f` over local face `i` by the three-point midpoint rule.
pub fn face_mean(v: &[Point3; 4], i: usize, f: impl Fn(&Point3) -> f64) -> f64 {
    let fv = face_vertices(v, i);
    TriRule::tri_midpoint3().mean_bary(|q| f(&TriRule::map_point(&fv, q)))
}

/// Coefficients of `I_T^CR φ = Σ (face mean of φ over F_i) θ_i`.
pub fn cr_interpolate(v: &[Point3; 4], phi: impl Fn(&Point3) -> f64) -> [f64; 4] {
    [0, 1, 2, 3].map(|i| face_mean(v, i, &phi))
}

/// Coefficients of `I_T^{CR,S} φ = Σ φ(x_{F_i}) θ_i`, using face barycentres.
pub fn cr_interpolate_pointwise(v: &[Point3; 4], phi: impl Fn(&Point3) -> f64) -> [f64; 4] {
    [0, 1, 2, 3].map(|i| {
        let [a, b, c] = face_vertices(v, i);
        phi(&Point3::from((a.coords + b.coords + c.coords) / 3.0))
    })
}

/// Coefficients of `I_T^RT v`: outward normal-flux means over each face.
pub fn rt_interpolate(geom: &TetGeometry, vfield: impl Fn(&Point3) -> Vector3) -> [f64; 4] {
    [0, 1, 2, 3].map(|i| face_mean(&geom.vertices, i, |x| vfield(x).dot(&geom.face_normals[i])))
}

/// Returns `(div I_T^RT v, Π_T^0 div v)`, which agree for every `v`.
pub fn local_commuting_check(
    geom: &TetGeometry,
    vfield: impl Fn(&Point3) -> Vector3,
    div_v: impl Fn(&Point3) -> f64,
) -> (f64, f64) {
    let coeffs = rt_interpolate(geom, vfield);
    let interp = Rt0Basis::new(geom).combine(&coeffs);
    (interp.div(), p0_project(&geom.vertices, div_v))
}

/// Value of the P1 function with nodal values `c` at barycentric point `lambda`.
pub fn p1_value(c: &[f64; 4], lambda: &[f64; 4]) -> f64 {
    c.iter().zip(lambda).map(|(a, b)| a * b).sum()
}

/// Value of the CR function with face values `c` at barycentric point `lambda`.
pub fn cr_value(c: &[f64; 4], lambda: &[f64; 4]) -> f64 {
    c.iter().zip(cr_basis(lambda)).map(|(a, b)| a * b).sum()
}

pub fn combine_gradients(c: &[f64; 4], grads: &[Vector3; 4]) -> Vector3 {
    c.iter().zip(grads).map(|(&a, g)| a * g).sum()
}
