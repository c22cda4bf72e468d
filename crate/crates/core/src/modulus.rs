//! Adaptive computation of quadrilateral moduli (with a two-sided bracket)
//! and of ring capacities.
//!
//! A quadrilateral is solved twice: as given, and with its marking rotated
//! by one. Both discrete energies are upper bounds (for `h` and `1/h`
//! respectively), so `[1/E_conj, E_primal]` contains the true modulus.

use serde::Serialize;

use crate::error::ModulusError;
use crate::fem::{
    element_error_indicators_with, solve_from, BoundaryConditions, PotentialSolution,
    DEFAULT_REL_TOL, DORFLER_THETA,
};
use crate::geometry::{Quadrilateral, RingCondenser};
use crate::mesh::{triangulate, Domain, Mesh};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_DOFS: usize = 200_000;

/// Knobs of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Relative stopping tolerance (bracket width or energy decrement).
    pub tol: f64,
    /// Stop once a mesh has this many nodes.
    pub max_dofs: usize,
    /// Relative residual for each linear solve.
    pub solver_tol: f64,
    /// Dörfler bulk fraction.
    pub theta: f64,
    /// Initial triangle area bound; defaults to domain area / 64.
    pub initial_max_area: Option<f64>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_dofs: DEFAULT_MAX_DOFS,
            solver_tol: DEFAULT_REL_TOL,
            theta: DORFLER_THETA,
            initial_max_area: None,
        }
    }
}

impl AdaptiveOptions {
    pub fn new(tol: f64, max_dofs: usize) -> Self {
        Self {
            tol,
            max_dofs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModulusError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ModulusError::BadOptions(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(ModulusError::BadOptions(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.max_dofs == 0 {
            return Err(ModulusError::BadOptions("max_dofs must be positive".into()));
        }
        Ok(())
    }
}

/// Modulus of a quadrilateral with its certified bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusResult {
    /// Bracket midpoint.
    pub value: f64,
    /// `1 / E_conjugate`.
    pub lower: f64,
    /// `E_primal`.
    pub upper: f64,
    /// Largest node count among the two final meshes.
    pub dofs: usize,
    /// Refinement steps taken.
    pub levels: usize,
    pub converged: bool,
    /// Primal energies per level.
    #[serde(skip)]
    pub energy_history: Vec<f64>,
    /// Conjugate energies per level.
    #[serde(skip)]
    pub conjugate_history: Vec<f64>,
}

impl ModulusResult {
    /// `upper − lower`, clamped at zero (exact cases can round to −ulp).
    pub fn bracket_width(&self) -> f64 {
        (self.upper - self.lower).max(0.0)
    }

    /// `E_primal · E_conjugate`, which is at least 1 and tends to 1.
    pub fn reciprocity_product(&self) -> f64 {
        self.upper / self.lower
    }
}

/// Capacity and modulus of a ring condenser.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub capacity: f64,
    /// `2π / capacity`.
    pub modulus: f64,
    pub dofs: usize,
    pub levels: usize,
    pub converged: bool,
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

/// Result plus the final primal mesh and potential, for rendering.
#[derive(Debug, Clone)]
pub struct Solved<R> {
    pub result: R,
    pub mesh: Mesh,
    pub potential: PotentialSolution,
}

/// Final mesh plus nodal potential, serialized as the mesh JSON with an
/// extra `values` array.
#[derive(Debug, Serialize)]
pub struct SolutionExport<'a> {
    #[serde(flatten)]
    pub mesh: &'a Mesh,
    pub values: &'a [f64],
}

impl<R> Solved<R> {
    pub fn export(&self) -> SolutionExport<'_> {
        SolutionExport {
            mesh: &self.mesh,
            values: &self.potential.nodal_values,
        }
    }

    /// The reduced linear system of the final primal solve.
    pub fn final_system(&self) -> Result<crate::fem::ReducedSystem, ModulusError> {
        Ok(crate::fem::reduced_system(&self.mesh, &self.potential.bc)?)
    }
}

/// One adaptive sequence: mesh, latest solution and energy history.
struct AdaptiveRun {
    bc: BoundaryConditions,
    opts: AdaptiveOptions,
    mesh: Mesh,
    solution: PotentialSolution,
    history: Vec<f64>,
}

impl AdaptiveRun {
    fn start(
        domain: &Domain,
        bc: BoundaryConditions,
        opts: AdaptiveOptions,
    ) -> Result<Self, ModulusError> {
        let max_area = opts.initial_max_area.unwrap_or(domain.area() / 64.0);
        let mesh = triangulate(domain, max_area)?;
        let solution = solve_from(&mesh, &bc, opts.solver_tol, None)?;
        let history = vec![solution.energy];
        Ok(Self {
            bc,
            opts,
            mesh,
            solution,
            history,
        })
    }

    fn energy(&self) -> f64 {
        self.solution.energy
    }

    fn dofs(&self) -> usize {
        self.mesh.node_count()
    }

    /// Sum of squared indicators, a proxy for the energy error.
    fn estimate(&self) -> f64 {
        element_error_indicators_with(&self.mesh, &self.solution, self.opts.theta)
            .indicators
            .iter()
            .map(|e| e * e)
            .sum()
    }

    fn step(&mut self) -> Result<(), ModulusError> {
        let marking = element_error_indicators_with(&self.mesh, &self.solution, self.opts.theta);
        if marking.marked.is_empty() {
            return Ok(());
        }
        let refined = self.mesh.refine_marked(&marking.marked)?;
        let guess = refined.prolongate(&self.solution.nodal_values);
        self.solution = solve_from(&refined.mesh, &self.bc, self.opts.solver_tol, Some(&guess))?;
        self.mesh = refined.mesh;
        self.history.push(self.solution.energy);
        Ok(())
    }
}

/// Modulus of `q` with default options apart from `tol` and `max_dofs`.
pub fn quad_modulus(
    q: &Quadrilateral,
    tol: f64,
    max_dofs: usize,
) -> Result<ModulusResult, ModulusError> {
    Ok(solve_quad(q, &AdaptiveOptions::new(tol, max_dofs))?.result)
}

/// Adaptive loop on `q` and its conjugate until the bracket is narrower than
/// `tol·value` or a mesh reaches `max_dofs` nodes.
pub fn solve_quad(
    q: &Quadrilateral,
    opts: &AdaptiveOptions,
) -> Result<Solved<ModulusResult>, ModulusError> {
    opts.validate()?;
    let bc = BoundaryConditions::quadrilateral();
    let (primal, conjugate) = rayon::join(
        || AdaptiveRun::start(&Domain::Quad(q.clone()), bc.clone(), *opts),
        || AdaptiveRun::start(&Domain::Quad(q.conjugate()), bc.clone(), *opts),
    );
    let (mut primal, mut conjugate) = (primal?, conjugate?);
    let mut levels = 0;
    let converged = loop {
        let upper = primal.energy();
        let lower = 1.0 / conjugate.energy();
        let value = 0.5 * (upper + lower);
        log::info!(
            "level {levels}: bracket [{lower:.12}, {upper:.12}], dofs {} / {}",
            primal.dofs(),
            conjugate.dofs()
        );
        if upper - lower <= opts.tol * value {
            break true;
        }
        if primal.dofs().max(conjugate.dofs()) >= opts.max_dofs {
            break false;
        }
        // refine the side(s) carrying most of the bracket width
        let (est_p, est_c) = rayon::join(
            || primal.estimate(),
            || conjugate.estimate() * value * value,
        );
        let biggest = est_p.max(est_c);
        let (do_p, do_c) = (est_p >= 0.25 * biggest, est_c >= 0.25 * biggest);
        let (rp, rc) = rayon::join(
            || if do_p { primal.step() } else { Ok(()) },
            || if do_c { conjugate.step() } else { Ok(()) },
        );
        rp?;
        rc?;
        levels += 1;
    };
    let upper = primal.energy();
    let lower = 1.0 / conjugate.energy();
    let result = ModulusResult {
        value: 0.5 * (upper + lower),
        lower,
        upper,
        dofs: primal.dofs().max(conjugate.dofs()),
        levels,
        converged,
        energy_history: primal.history,
        conjugate_history: conjugate.history,
    };
    Ok(Solved {
        result,
        mesh: primal.mesh,
        potential: primal.solution,
    })
}

pub fn ring_capacity(
    r: &RingCondenser,
    tol: f64,
    max_dofs: usize,
) -> Result<CapacityResult, ModulusError> {
    Ok(solve_ring(r, &AdaptiveOptions::new(tol, max_dofs))?.result)
}

/// Adaptive loop on a ring until successive energies differ by at most
/// `tol·capacity`.
pub fn solve_ring(
    r: &RingCondenser,
    opts: &AdaptiveOptions,
) -> Result<Solved<CapacityResult>, ModulusError> {
    opts.validate()?;
    let mut run = AdaptiveRun::start(&Domain::Ring(r.clone()), BoundaryConditions::ring(), *opts)?;
    let mut levels = 0;
    let converged = loop {
        if let [.., prev, last] = run.history[..] {
            if (prev - last).abs() <= opts.tol * last {
                break true;
            }
        }
        if run.dofs() >= opts.max_dofs {
            break false;
        }
        run.step()?;
        levels += 1;
        log::info!(
            "level {levels}: capacity {:.12}, dofs {}",
            run.energy(),
            run.dofs()
        );
    };
    let capacity = run.energy();
    let result = CapacityResult {
        capacity,
        modulus: 2.0 * std::f64::consts::PI / capacity,
        dofs: run.dofs(),
        levels,
        converged,
        energy_history: run.history,
    };
    Ok(Solved {
        result,
        mesh: run.mesh,
        potential: run.solution,
    })
}
