use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use super::{per_mesh_path, CliError};
use crate::analysis::{broken_h1_error, l2_error, convergence_indicator, ConvergenceRow, ManufacturedCase, Normalization};
use crate::geometry::global_metrics;
use crate::mesh::generate_aniso_cube;
use crate::system::{
    assemble_cr, assemble_p1, assemble_rt0_mixed, solve_saddle_with, solve_spd, PressureBlock, RhsMode, SolverOptions,
    Space, SparseSystem,
};
use crate::vtk::write_vtk;

#[derive(Debug, Clone)]
pub struct ConvergeConfig {
    pub space: Space,
    pub gamma: f64,
    pub pairs: Vec<(usize, usize)>,
    pub tol: f64,
    pub max_iter: usize,
    pub normalization: Normalization,
    pub pressure_block: PressureBlock,
    pub vtk: Option<PathBuf>,
    pub dump_matrix: Option<PathBuf>,
}

impl ConvergeConfig {
    pub fn new(space: Space, gamma: f64, pairs: Vec<(usize, usize)>) -> Self {
        Self {
            space,
            gamma,
            pairs,
            tol: 1e-10,
            max_iter: 200_000,
            normalization: Normalization::DeltaU,
            pressure_block: PressureBlock::VolumeMass,
            vtk: None,
            dump_matrix: None,
        }
    }
}

/// The (M, N) sequences of the reference tables for gamma 1.5, 1.9 and 2.0;
/// `N = round(M^gamma)` for any other gamma in (1, 2].
pub fn default_pairs(gamma: f64, large: bool) -> Result<Vec<(usize, usize)>, CliError> {
    let same = |a: f64| (gamma - a).abs() < 1e-12;
    let mut pairs = if same(1.5) {
        vec![(4, 8), (8, 22), (16, 64), (32, 182)]
    } else if same(1.9) {
        vec![(4, 14), (8, 52), (16, 194), (32, 724)]
    } else if same(2.0) {
        vec![(4, 16), (8, 64), (16, 256), (32, 1024)]
    } else if gamma > 1.0 && gamma <= 2.0 {
        [4usize, 8, 16, 32].iter().map(|&m| (m, (m as f64).powf(gamma).round() as usize)).collect()
    } else {
        return Err(CliError::Config(format!("gamma must lie in (1, 2] to use default pairs, got {gamma}")));
    };
    if !large {
        pairs.pop();
    }
    Ok(pairs)
}

pub(crate) fn parse_pairs(items: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    let parse = |s: &str| -> Option<(usize, usize)> {
        let (m, n) = s.trim().split_once(':')?;
        Some((m.trim().parse().ok()?, n.trim().parse().ok()?))
    };
    let pairs = items
        .iter()
        .map(|s| parse(s).ok_or_else(|| CliError::Config(format!("cannot parse pair '{s}', expected M:N"))))
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(CliError::Config("no (M, N) pairs given".into()));
    }
    Ok(pairs)
}

fn validate(config: &ConvergeConfig) -> Result<(), CliError> {
    if !(config.tol > 0.0 && config.tol < 1.0) {
        return Err(CliError::Config(format!("tolerance must lie in (0, 1), got {}", config.tol)));
    }
    if !config.gamma.is_finite() {
        return Err(CliError::Config("gamma must be finite".into()));
    }
    for &(m, n) in &config.pairs {
        if m == 0 || m % 2 != 0 {
            return Err(CliError::Config(format!("M must be a positive even integer, got {m}")));
        }
        if n == 0 {
            return Err(CliError::Config(format!("N must be positive, got {n}")));
        }
    }
    Ok(())
}

/// Runs the study, writing the header and then one CSV row per mesh as soon as
/// it is computed. Solver statistics go to `log`.
pub fn run_converge(config: &ConvergeConfig, out: &mut dyn Write, log: &mut dyn Write) -> Result<(), CliError> {
    validate(config)?;
    let case = ManufacturedCase::default();
    let f = |p: &crate::Point3| case.f(p);
    let scale = case.normalization(config.normalization);
    let opts = SolverOptions {
        tol: config.tol,
        max_iter: config.max_iter,
    };
    let several = config.pairs.len() > 1;

    writeln!(out, "{}", ConvergenceRow::CSV_HEADER)?;
    out.flush()?;
    let mut previous: Option<ConvergenceRow> = None;
    for &(m, n) in &config.pairs {
        let mesh = generate_aniso_cube(m, n).map_err(crate::Error::from)?;
        let metrics = global_metrics(&mesh).map_err(crate::Error::from)?;
        if let Some(path) = &config.vtk {
            let h_t: Vec<f64> = (0..mesh.num_tets())
                .map(|t| crate::geometry::tet_geometry(&mesh, t).map(|g| g.anisotropy))
                .collect::<Result<_, _>>()
                .map_err(crate::Error::from)?;
            let file = File::create(per_mesh_path(path, m, n, several))?;
            write_vtk(&mesh, &[("H_T", &h_t)], BufWriter::new(file))?;
        }
        let system: SparseSystem = match config.space {
            Space::P1 => assemble_p1(&mesh, &f, RhsMode::Exact)?,
            Space::Cr => assemble_cr(&mesh, &f, RhsMode::Exact)?,
            Space::Mixed => assemble_rt0_mixed(&mesh, &f, RhsMode::Exact)?,
        };
        if let Some(path) = &config.dump_matrix {
            let file = File::create(per_mesh_path(path, m, n, several))?;
            system.matrix.write_matrix_market(BufWriter::new(file))?;
        }
        let solved = match config.space {
            Space::Mixed => solve_saddle_with(&system, opts, config.pressure_block),
            _ => solve_spd(&system, opts),
        };
        let (field, stats) = match solved {
            Ok(ok) => ok,
            Err(e) => {
                out.flush()?;
                return Err(e.into());
            }
        };
        writeln!(
            log,
            "{} M={m} N={n}: {} unknowns, {} iterations, relative residual {:.3e}",
            config.space.name(),
            system.dim(),
            stats.iterations,
            stats.relative_residual
        )?;
        let dofs = match config.space {
            Space::P1 => mesh.num_vertices(),
            Space::Cr => mesh.num_faces(),
            Space::Mixed => mesh.num_faces() + mesh.num_tets(),
        };
        let h = 1.0 / m as f64;
        let mut row = ConvergenceRow {
            m,
            n,
            h,
            h_nominal: h.powf(2.0 - config.gamma),
            h_computed: metrics.big_h,
            dofs,
            err_h1: broken_h1_error(&mesh, &field, |p| case.grad_u(p))? / scale,
            r_h1: None,
            err_l2: l2_error(&mesh, &field, |p| case.u(p))? / scale,
            r_l2: None,
        };
        if let Some(prev) = &previous {
            row.r_h1 = Some(convergence_indicator(&[prev.err_h1, row.err_h1])?[0]);
            row.r_l2 = Some(convergence_indicator(&[prev.err_l2, row.err_l2])?[0]);
        }
        writeln!(out, "{}", row.to_csv())?;
        out.flush()?;
        previous = Some(row);
    }
    Ok(())
}
