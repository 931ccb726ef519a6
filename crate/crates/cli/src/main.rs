//! `dlm`: convergence runs and overlay diagnostics for the fictitious-domain
//! FSI discretization.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dlm_core::assembly::{CouplingForm, CouplingMethod, LoadKind, RhsOptions};
use dlm_core::geometry::build_overlay;
use dlm_core::mesh::affine_map_mesh;
use dlm_core::verification::{make_test, parse_levels, run_test, Level, PressureElement, RunOptions};
use dlm_core::{Matrix, Vector};

#[derive(Parser, Debug)]
#[command(name = "dlm", version, about = "Fictitious-domain FSI solver with a distributed Lagrange multiplier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one test on a sequence of levels and write the error table as CSV.
    Run(RunArgs),
    /// Build the solid/fluid mesh overlay of one test and report its statistics.
    OverlayStats(OverlayArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Test configuration, 1 to 8.
    #[arg(long = "test")]
    test: u32,
    #[arg(long, value_enum, default_value_t = Method::Intersect)]
    method: Method,
    #[arg(long, value_enum, default_value_t = Element::Bp)]
    element: Element,
    /// Fluid mesh sizes `1/a` down to `1/b`, e.g. `4:64`.
    #[arg(long, default_value = "4:32")]
    levels: String,
    /// Output directory for the CSV table.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Inner product of the coupling terms.
    #[arg(long, value_enum, default_value_t = Form::H1)]
    form: Form,
    /// How volume data enter the right-hand sides.
    #[arg(long, value_enum, default_value_t = Loads::Interpolated)]
    loads: Loads,
    /// Do not print the table.
    #[arg(long)]
    quiet: bool,
}

#[derive(clap::Args, Debug)]
struct OverlayArgs {
    #[arg(long = "test")]
    test: u32,
    /// Fluid mesh size `1/d`.
    #[arg(long, default_value_t = 4)]
    level: usize,
    #[arg(long, value_enum, default_value_t = Element::Bp)]
    element: Element,
    /// Translation `dx,dy` of the solid relative to the fluid.
    #[arg(long, value_parser = parse_shift, allow_hyphen_values = true)]
    shift: Option<Vector>,
    /// Print the cell and sub-triangle count of every solid triangle.
    #[arg(long)]
    per_triangle: bool,
    /// Write the overlay polygons as CSV vertex loops.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Intersect,
    #[value(name = "noint-q2")]
    NointQ2,
    #[value(name = "noint-q3")]
    NointQ3,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Element {
    Bp,
    #[value(name = "bp-p0")]
    BpP0,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Form {
    L2,
    H1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Loads {
    Interpolated,
    Quadrature,
}

impl From<Method> for CouplingMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Intersect => CouplingMethod::Intersect,
            Method::NointQ2 => CouplingMethod::NoIntQ2,
            Method::NointQ3 => CouplingMethod::NoIntQ3,
        }
    }
}

impl From<Element> for PressureElement {
    fn from(e: Element) -> Self {
        match e {
            Element::Bp => PressureElement::Bp,
            Element::BpP0 => PressureElement::BpP0,
        }
    }
}

fn parse_shift(s: &str) -> Result<Vector, String> {
    let (x, y) = s.split_once(',').ok_or("expected `dx,dy`")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Vector::new(x, y))
}

#[derive(Debug)]
enum CliError {
    Core(dlm_core::Error),
    Io(PathBuf, std::io::Error),
}

impl<E: Into<dlm_core::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_internal() => 2,
            _ => 1,
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let levels = parse_levels(&args.levels)?;
    let opts = RunOptions {
        form: match args.form {
            Form::L2 => CouplingForm::L2,
            Form::H1 => CouplingForm::H1,
        },
        rhs: RhsOptions {
            loads: match args.loads {
                Loads::Interpolated => LoadKind::Interpolated,
                Loads::Quadrature => LoadKind::Quadrature,
            },
            ..Default::default()
        },
        ..Default::default()
    };
    let table = run_test(args.test, args.method.into(), args.element.into(), &levels, &opts)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(args.out.clone(), e))?;
    let path = args.out.join(table.file_name());
    std::fs::write(&path, table.to_csv()).map_err(|e| CliError::Io(path.clone(), e))?;
    if !args.quiet {
        emit(&table.to_text());
    }
    emit(&format!("wrote {}\n", path.display()));
    Ok(())
}

fn cmd_overlay_stats(args: &OverlayArgs) -> Result<(), CliError> {
    let case = make_test(args.test)?;
    let level = Level::from_fluid_denominator(args.level);
    let pair = case.fluid_meshes(level.fluid_n, args.element.into())?;
    let solid = case.solid_mesh(level.solid_n)?;
    let fluid = match args.shift {
        Some(d) => affine_map_mesh(&pair.fine, &Matrix::identity(), &-d)?,
        None => (*pair.fine).clone(),
    };
    let overlay = build_overlay(&solid, &case.xbar, &fluid)?;
    let stats = overlay.stats();

    let mut out = String::new();
    let _ = writeln!(out, "test {} | fluid h 1/{} | solid n {}", case.id, args.level, level.solid_n);
    let _ = writeln!(out, "fluid triangles      {}", fluid.num_triangles());
    let _ = writeln!(out, "solid triangles      {}", stats.solid_triangles);
    let _ = writeln!(out, "overlay cells        {}", stats.cells);
    let _ = writeln!(out, "sub-triangles        {}", stats.sub_triangles);
    let _ = writeln!(out, "mapped solid area    {:.15e}", stats.mapped_area);
    let _ = writeln!(out, "covered area         {:.15e}", stats.covered_area);
    let _ = writeln!(out, "max area defect      {:.3e}", stats.max_defect);
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for cells in &overlay.cells {
        *histogram.entry(cells.len()).or_default() += 1;
    }
    let _ = writeln!(out, "cells per solid triangle:");
    for (k, count) in &histogram {
        let _ = writeln!(out, "  {k:>3}: {count}");
    }
    if args.per_triangle {
        let _ = writeln!(out, "solid_tri,cells,sub_triangles");
        for (s, cells) in overlay.cells.iter().enumerate() {
            let subs: usize = cells.iter().map(|c| c.sub_tris.len()).sum();
            let _ = writeln!(out, "{s},{},{subs}", cells.len());
        }
    }
    emit(&out);

    if let Some(path) = &args.dump {
        let mut csv = String::from("solid_tri,fluid_tri,vertex,x,y\n");
        for (s, cells) in overlay.cells.iter().enumerate() {
            for cell in cells {
                for (k, p) in cell.polygon.vertices.iter().enumerate() {
                    let _ = writeln!(csv, "{s},{},{k},{},{}", cell.fluid_tri, p.x, p.y);
                }
            }
        }
        std::fs::write(path, csv).map_err(|e| CliError::Io(path.clone(), e))?;
        emit(&format!("wrote {}\n", path.display()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::OverlayStats(args) => cmd_overlay_stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
