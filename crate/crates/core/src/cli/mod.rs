//! Command-line front end: convergence studies, the interpolation
//! counterexample and the verification suite.

mod converge;
mod interp;
mod verify;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use converge::{default_pairs, run_converge, ConvergeConfig};
pub use interp::run_interp_demo;
pub use verify::{run_verify, verify_checks, Fault, VerifyCheck};

use crate::analysis::Normalization;
use crate::system::{PressureBlock, Space};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),
    #[error("{0} verification check(s) failed")]
    ChecksFailed(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 0 success, 1 numerical failure, 2 configuration error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(crate::Error::InvalidArgument(_)) => 2,
            CliError::Numerical(crate::Error::Mesh(crate::mesh::MeshError::InvalidM(_) | crate::mesh::MeshError::InvalidN(_))) => 2,
            CliError::Numerical(_) | CliError::ChecksFailed(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "anisofem", version, about = "CR, P1 and RT0 finite elements on anisotropic tetrahedral meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ElementArg {
    P1,
    Cr,
    Rt,
}

impl From<ElementArg> for Space {
    fn from(e: ElementArg) -> Self {
        match e {
            ElementArg::P1 => Space::P1,
            ElementArg::Cr => Space::Cr,
            ElementArg::Rt => Space::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    /// ‖Δu‖
    DeltaU,
    /// (Σ_i ‖∂_ii u‖²)^{1/2}, matching the reference tables
    HessianDiagonal,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::DeltaU => Normalization::DeltaU,
            NormalizationArg::HessianDiagonal => Normalization::HessianDiagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PressureBlockArg {
    VolumeMass,
    SchurDiagonal,
}

impl From<PressureBlockArg> for PressureBlock {
    fn from(p: PressureBlockArg) -> Self {
        match p {
            PressureBlockArg::VolumeMass => PressureBlock::VolumeMass,
            PressureBlockArg::SchurDiagonal => PressureBlock::SchurDiagonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    RtSign,
    BubbleConstant,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the manufactured problem on a sequence of meshes and print the error table.
    Converge {
        #[arg(long, value_enum)]
        element: ElementArg,
        /// Anisotropy exponent: N ~ M^gamma.
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        /// Comma-separated M:N pairs, e.g. 4:8,8:22. Defaults depend on gamma.
        #[arg(long, value_delimiter = ',')]
        pairs: Option<Vec<String>>,
        /// Include the M = 32 row in the default pairs.
        #[arg(long)]
        large: bool,
        /// Relative residual tolerance of the linear solver.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "delta-u")]
        normalization: NormalizationArg,
        /// Pressure block of the MINRES preconditioner (rt only).
        #[arg(long, value_enum, default_value = "volume-mass")]
        pressure_block: PressureBlockArg,
        /// CSV output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write each mesh with its H_T values as legacy VTK.
        #[arg(long)]
        vtk: Option<PathBuf>,
        /// Write each assembled matrix in Matrix Market format.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Pointwise CR interpolation error of |x|² on a flat tetrahedron of size h = 1/N.
    InterpDemo {
        /// Comma-separated N values.
        #[arg(long = "n", value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024, 2048, 4096])]
        ns: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the identity and equivalence checks on small meshes.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Deliberately break one ingredient to see the suite fail.
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

/// Output sink: a file or stdout.
pub(crate) fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `dir/stem_M{m}_N{n}.ext` when several meshes share one output path.
pub(crate) fn per_mesh_path(path: &Path, m: usize, n: usize, several: bool) -> PathBuf {
    if !several {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_M{m}_N{n}.{ext}"),
        None => format!("{stem}_M{m}_N{n}"),
    };
    path.with_file_name(name)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Converge {
            element,
            gamma,
            pairs,
            large,
            tol,
            max_iter,
            normalization,
            pressure_block,
            out,
            vtk,
            dump_matrix,
        } => {
            let pairs = match pairs {
                Some(list) => converge::parse_pairs(&list)?,
                None => default_pairs(gamma, large)?,
            };
            let config = ConvergeConfig {
                space: element.into(),
                gamma,
                pairs,
                tol,
                max_iter,
                normalization: normalization.into(),
                pressure_block: pressure_block.into(),
                vtk,
                dump_matrix,
            };
            let mut w = open_output(out.as_deref())?;
            run_converge(&config, &mut w, &mut io::stderr())
        }
        Command::InterpDemo { ns, out } => {
            let mut w = open_output(out.as_deref())?;
            run_interp_demo(&ns, &mut w)
        }
        Command::Verify { out, inject_fault } => {
            let fault = match inject_fault {
                None => Fault::None,
                Some(FaultArg::RtSign) => Fault::RtSign,
                Some(FaultArg::BubbleConstant) => Fault::BubbleConstant,
            };
            let mut w = open_output(out.as_deref())?;
            run_verify(fault, &mut w)
        }
    }
}
