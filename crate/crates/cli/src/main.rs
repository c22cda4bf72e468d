//! `qm`: conformal moduli from the command line.
//!
//! Results go to stdout as JSON (or CSV for sweeps); diagnostics go to
//! stderr. Exit status is 0 on success, 2 when the dof budget ran out before
//! the requested tolerance (the bracket is still printed), 1 on bad input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qmod_core::elliptic::{asymptotic_modulus, bowman_modulus, ellip_k, mu, mu_inv};
use qmod_core::experiments::{format_significant, run_sweep, Experiment, SweepGrid, SweepParams};
use qmod_core::geometry::quad_from_points;
use qmod_core::modulus::{solve_quad, solve_ring, Solved, DEFAULT_MAX_DOFS, DEFAULT_TOL};
use qmod_core::{AdaptiveOptions, Point, Polygon, Quadrilateral, RingCondenser};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "qm",
    version,
    about = "Conformal moduli of quadrilaterals and ring condensers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Modulus of a quadrilateral, with a two-sided bracket.
    ///
    /// Points are given in marked order z1 z2 z3 z4; the potential is 0 on
    /// the arc z2→z3 and 1 on z4→z1, so "1,2 0,2 0,0 1,0" has modulus 2.
    Quad {
        /// Four points "x1,y1 x2,y2 x3,y3 x4,y4".
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        points: Option<String>,
        /// Quadrilateral JSON {"vertices": [[x,y],...], "marked": [i1,i2,i3,i4]}.
        #[arg(long)]
        file: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Capacity and modulus of a ring condenser.
    Ring {
        /// Polygon JSON {"vertices": [...]} of the outer plate.
        #[arg(long, requires = "inner", required_unless_present = "file")]
        outer: Option<PathBuf>,
        /// Polygon JSON of the inner plate.
        #[arg(long, requires = "outer")]
        inner: Option<PathBuf>,
        /// Ring JSON {"outer": {...}, "inner": {...}}.
        #[arg(long, conflicts_with_all = ["outer", "inner"])]
        file: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Evaluate a special function.
    Specfun {
        #[arg(long = "fn", value_enum)]
        function: SpecialFn,
        #[arg(long, allow_negative_numbers = true)]
        arg: f64,
    },
    /// Evaluate a conjectured inequality over a grid and write CSV.
    Sweep {
        /// trans, dupl, area or sum.
        #[arg(long)]
        experiment: String,
        /// "xmin:xmax:nx,ymin:ymax:ny"; defaults depend on the experiment.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long, default_value_t = qmod_core::experiments::SWEEP_TOL)]
        tol: f64,
        #[arg(long, default_value_t = qmod_core::experiments::SWEEP_MAX_DOFS)]
        max_dofs: usize,
        /// CSV destination; without it the CSV goes to stdout and the summary to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Relative tolerance on the bracket width (quad) or energy decrement (ring).
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Node budget per mesh.
    #[arg(long, default_value_t = DEFAULT_MAX_DOFS)]
    max_dofs: usize,
    /// Write the final mesh and nodal potential as JSON.
    #[arg(long)]
    export_solution: Option<PathBuf>,
    /// Write the final reduced stiffness matrix in Matrix Market format.
    #[arg(long)]
    dump_system: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpecialFn {
    /// Complete elliptic integral K(r).
    #[value(name = "K")]
    K,
    /// Grötzsch ring modulus μ(r).
    #[value(name = "mu")]
    Mu,
    /// Inverse of μ.
    #[value(name = "muinv")]
    MuInv,
    /// Closed-form trapezoid modulus M(h).
    #[value(name = "M")]
    M,
    /// Large-h asymptotic of M.
    #[value(name = "Masym")]
    MAsym,
}

const MIN_MAX_DOFS: usize = 1000;

/// Failure with the exit code it maps to.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(1, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QM_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Quad {
            points,
            file,
            solve,
        } => {
            let opts = solve.options()?;
            let quad = match (points, file) {
                (Some(p), _) => quad_from_points(parse_points(&p)?)?,
                (None, Some(f)) => read_json::<Quadrilateral>(&f)?,
                (None, None) => unreachable!("clap requires one of --points/--file"),
            };
            let solved = solve_quad(&quad, &opts)?;
            log::info!(
                "modulus {} in [{}, {}] after {} levels",
                solved.result.value,
                solved.result.lower,
                solved.result.upper,
                solved.result.levels
            );
            solve.write_artifacts(&solved)?;
            print_json(&solved.result)?;
            Ok(exit_code(solved.result.converged))
        }
        Command::Ring {
            outer,
            inner,
            file,
            solve,
        } => {
            let opts = solve.options()?;
            let ring = match (outer, inner, file) {
                (_, _, Some(f)) => read_json::<RingCondenser>(&f)?,
                (Some(o), Some(i), None) => {
                    RingCondenser::new(read_json::<Polygon>(&o)?, read_json::<Polygon>(&i)?)?
                }
                _ => return Err(Failure(1, "need --outer and --inner, or --file".into())),
            };
            let solved = solve_ring(&ring, &opts)?;
            solve.write_artifacts(&solved)?;
            print_json(&solved.result)?;
            Ok(exit_code(solved.result.converged))
        }
        Command::Specfun { function, arg } => {
            let v = match function {
                SpecialFn::K => ellip_k(arg)?,
                SpecialFn::Mu => mu(arg)?,
                SpecialFn::MuInv => mu_inv(arg)?,
                SpecialFn::M => bowman_modulus(arg)?,
                SpecialFn::MAsym => {
                    if !(arg > 0.0 && arg.is_finite()) {
                        return Err(Failure(
                            1,
                            format!("Masym needs a positive argument, got {arg}"),
                        ));
                    }
                    asymptotic_modulus(arg)
                }
            };
            println!("{}", format_significant(v, 15));
            Ok(0)
        }
        Command::Sweep {
            experiment,
            grid,
            alpha,
            beta,
            tol,
            max_dofs,
            out,
            jobs,
        } => {
            let experiment: Experiment = experiment.parse()?;
            let grid = match grid {
                Some(g) => g.parse::<SweepGrid>()?,
                None => experiment.default_grid(),
            };
            let mut params = SweepParams::defaults(experiment);
            params.alpha = alpha.unwrap_or(params.alpha);
            params.beta = beta.unwrap_or(params.beta);
            params.opts = options(tol, max_dofs)?;
            if let Some(n) = jobs {
                if n == 0 {
                    return Err(Failure(1, "--jobs must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()?;
            }
            let step = (grid.len() / 20).max(1);
            let result = run_sweep(experiment, &grid, &params, &|done, total| {
                if done % step == 0 || done == total {
                    log::info!("{done}/{total} points");
                }
            })?;
            let summary = result.summary();
            let summary_json = serde_json::to_string_pretty(&summary)?;
            match out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(&path)?);
                    result.write_csv(&mut w)?;
                    w.flush()?;
                    println!("{summary_json}");
                }
                None => {
                    let stdout = io::stdout();
                    result.write_csv(stdout.lock())?;
                    eprintln!("{summary_json}");
                }
            }
            if summary.violated > 0 {
                log::warn!(
                    "{} point(s) with delta below minus the bracket width; see the CSV",
                    summary.violated
                );
            }
            Ok(0)
        }
    }
}

impl SolveArgs {
    fn options(&self) -> Result<AdaptiveOptions, Failure> {
        options(self.tol, self.max_dofs)
    }

    fn write_artifacts<R>(&self, solved: &Solved<R>) -> Result<(), Failure> {
        if let Some(path) = &self.export_solution {
            let w = BufWriter::new(File::create(path)?);
            serde_json::to_writer(w, &solved.export())?;
        }
        if let Some(path) = &self.dump_system {
            let mut w = BufWriter::new(File::create(path)?);
            solved.final_system()?.matrix.write_matrix_market(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}

fn options(tol: f64, max_dofs: usize) -> Result<AdaptiveOptions, Failure> {
    if max_dofs < MIN_MAX_DOFS {
        return Err(Failure(
            1,
            format!("--max-dofs must be at least {MIN_MAX_DOFS}, got {max_dofs}"),
        ));
    }
    let opts = AdaptiveOptions::new(tol, max_dofs);
    opts.validate()?;
    Ok(opts)
}

fn exit_code(converged: bool) -> u8 {
    if converged {
        0
    } else {
        log::warn!("dof budget exhausted before the requested tolerance");
        2
    }
}

fn parse_points(s: &str) -> Result<[Point; 4], Failure> {
    let pts = s
        .split_whitespace()
        .map(|tok| {
            let (x, y) = tok
                .split_once(',')
                .ok_or_else(|| Failure(1, format!("point '{tok}' is not of the form x,y")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Failure(1, format!("bad coordinate '{v}' in '{tok}'")))
            };
            Ok(Point::new(parse(x)?, parse(y)?))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    pts.try_into()
        .map_err(|v: Vec<Point>| Failure(1, format!("expected 4 points, got {}", v.len())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure(1, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure(1, format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}
