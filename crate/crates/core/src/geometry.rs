//! Per-element geometric quantities and the anisotropy parameter.

use thiserror::Error;

use crate::mesh::{outward_area_vector, signed_volume6, Mesh, LOCAL_EDGES};
use crate::{Point3, Vector3};

/// Volumes at or below this are rejected rather than clamped.
pub const DEGENERATE_VOLUME: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate tetrahedron (signed volume {0:e})")]
    Degenerate(f64),
    #[error("mesh has no tetrahedra")]
    EmptyMesh,
}

/// Geometric data of one tetrahedron.
///
/// Edges follow [`LOCAL_EDGES`]; face quantities are indexed by the opposite vertex.
#[derive(Debug, Clone)]
pub struct TetGeometry {
    pub vertices: [Point3; 4],
    pub volume: f64,
    /// `h_T`, the longest edge.
    pub diameter: f64,
    pub edge_lengths: [f64; 6],
    pub edge_midpoints: [Point3; 6],
    pub barycentre: Point3,
    /// `L = Σ |x_i - x_T|²`.
    pub l_sum: f64,
    pub face_areas: [f64; 4],
    /// Outward unit normals.
    pub face_normals: [Vector3; 4],
    /// `ℓ_F`: distance from vertex `i` to the plane of the opposite face.
    pub heights: [f64; 4],
    /// `H_T = h_T² / |T| · min_{i≠j} |L_i||L_j|` over all 15 edge pairs.
    pub anisotropy: f64,
}

impl TetGeometry {
    pub fn new(vertices: [Point3; 4]) -> Result<Self, GeometryError> {
        let signed = signed_volume6(&vertices) / 6.0;
        if signed <= DEGENERATE_VOLUME {
            return Err(GeometryError::Degenerate(signed));
        }
        let volume = signed;
        let edge_lengths = LOCAL_EDGES.map(|[a, b]| (vertices[b] - vertices[a]).norm());
        let edge_midpoints = LOCAL_EDGES.map(|[a, b]| nalgebra::center(&vertices[a], &vertices[b]));
        let diameter = edge_lengths.iter().copied().fold(0.0, f64::max);
        let barycentre = Point3::from(vertices.iter().map(|p| p.coords).sum::<Vector3>() / 4.0);
        let l_sum = vertices.iter().map(|p| (p - barycentre).norm_squared()).sum();

        let mut face_areas = [0.0; 4];
        let mut face_normals = [Vector3::zeros(); 4];
        let mut heights = [0.0; 4];
        for i in 0..4 {
            let n = outward_area_vector(&vertices, i);
            face_areas[i] = n.norm();
            face_normals[i] = n / face_areas[i];
            heights[i] = 3.0 * volume / face_areas[i];
        }

        let mut min_pair = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                min_pair = min_pair.min(edge_lengths[a] * edge_lengths[b]);
            }
        }
        let anisotropy = diameter * diameter / volume * min_pair;

        Ok(Self {
            vertices,
            volume,
            diameter,
            edge_lengths,
            edge_midpoints,
            barycentre,
            l_sum,
            face_areas,
            face_normals,
            heights,
            anisotropy,
        })
    }

    /// `H_T` with the minimum taken only over the three pairs of opposite edges.
    ///
    /// This variant reproduces the `H_T` column tabulated for the single-element
    /// interpolation experiment; the standard parameter is [`Self::anisotropy`].
    pub fn opposite_edge_anisotropy(&self) -> f64 {
        let e = &self.edge_lengths;
        let min_pair = (e[0] * e[5]).min(e[1] * e[4]).min(e[2] * e[3]);
        self.diameter * self.diameter / self.volume * min_pair
    }

    /// `|m_14 - m_23|² + |m_13 - m_24|² + |m_12 - m_34|²`, which equals `L`.
    pub fn opposite_midpoint_sum(&self) -> f64 {
        let m = &self.edge_midpoints;
        (m[0] - m[5]).norm_squared() + (m[1] - m[4]).norm_squared() + (m[2] - m[3]).norm_squared()
    }
}

pub fn tet_geometry(mesh: &Mesh, t: usize) -> Result<TetGeometry, GeometryError> {
    TetGeometry::new(mesh.tet_vertices(t))
}

/// Mesh-wide size and anisotropy measures.
#[derive(Debug, Clone, Copy)]
pub struct GlobalMetrics {
    /// `h = max h_T`.
    pub h: f64,
    /// `H = max H_T`.
    pub big_h: f64,
    /// `max_T h_T² / min_{F ⊂ ∂T} ℓ_F`, the quantity driving the classical consistency bound.
    pub consistency_ratio: f64,
}

pub fn global_metrics(mesh: &Mesh) -> Result<GlobalMetrics, GeometryError> {
    if mesh.num_tets() == 0 {
        return Err(GeometryError::EmptyMesh);
    }
    let mut metrics = GlobalMetrics {
        h: 0.0,
        big_h: 0.0,
        consistency_ratio: 0.0,
    };
    for t in 0..mesh.num_tets() {
        let g = tet_geometry(mesh, t)?;
        let min_height = g.heights.iter().copied().fold(f64::INFINITY, f64::min);
        metrics.h = metrics.h.max(g.diameter);
        metrics.big_h = metrics.big_h.max(g.anisotropy);
        metrics.consistency_ratio = metrics.consistency_ratio.max(g.diameter * g.diameter / min_height);
    }
    Ok(metrics)
}
