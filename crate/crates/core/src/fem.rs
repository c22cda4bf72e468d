//! P1 finite elements for the Laplace equation with piecewise constant
//! Dirichlet data and homogeneous Neumann data.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::SolveError;
use crate::geometry::Point;
use crate::mesh::{BoundaryTag, Mesh, RefinementMarking};
use crate::sparse::{conjugate_gradient, CsrMatrix};

/// Default relative residual for the linear solver.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Default Dörfler bulk fraction.
pub const DORFLER_THETA: f64 = 0.5;

/// Constant Dirichlet values per tag plus the insulated (zero flux) tags.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    dirichlet: BTreeMap<BoundaryTag, f64>,
    neumann: BTreeSet<BoundaryTag>,
}

impl BoundaryConditions {
    pub fn new(
        dirichlet: impl IntoIterator<Item = (BoundaryTag, f64)>,
        neumann: impl IntoIterator<Item = BoundaryTag>,
    ) -> Result<Self, SolveError> {
        let dirichlet: BTreeMap<_, _> = dirichlet.into_iter().collect();
        let neumann: BTreeSet<_> = neumann.into_iter().collect();
        if let Some(t) = neumann.iter().find(|t| dirichlet.contains_key(t)) {
            return Err(SolveError::OverlappingTags(t.to_string()));
        }
        Ok(Self { dirichlet, neumann })
    }

    /// `u = 0` on γ2, `u = 1` on γ4, insulated γ1 and γ3.
    pub fn quadrilateral() -> Self {
        use BoundaryTag::*;
        Self {
            dirichlet: [(Gamma2, 0.0), (Gamma4, 1.0)].into_iter().collect(),
            neumann: [Gamma1, Gamma3].into_iter().collect(),
        }
    }

    /// `u = 1` on the inner plate, `u = 0` on the outer one.
    pub fn ring() -> Self {
        use BoundaryTag::*;
        Self {
            dirichlet: [(PlateE, 1.0), (PlateF, 0.0)].into_iter().collect(),
            neumann: BTreeSet::new(),
        }
    }

    pub fn dirichlet(&self) -> &BTreeMap<BoundaryTag, f64> {
        &self.dirichlet
    }

    pub fn is_neumann(&self, tag: BoundaryTag) -> bool {
        self.neumann.contains(&tag)
    }

    /// Prescribed value per node (`None` for free nodes).
    ///
    /// A node shared by a Dirichlet and a Neumann edge is a Dirichlet node.
    pub fn node_values(&self, mesh: &Mesh) -> Result<Vec<Option<f64>>, SolveError> {
        let tags = mesh.tags();
        if let Some(t) = tags
            .iter()
            .find(|t| !self.dirichlet.contains_key(t) && !self.neumann.contains(t))
        {
            return Err(SolveError::UncoveredTag(t.to_string()));
        }
        if !tags.iter().any(|t| self.dirichlet.contains_key(t)) {
            return Err(SolveError::Singular);
        }
        let mut values = vec![None; mesh.node_count()];
        for &(a, b, tag) in mesh.boundary() {
            if let Some(&g) = self.dirichlet.get(&tag) {
                for v in [a, b] {
                    match values[v] {
                        Some(old) if old != g => return Err(SolveError::ConflictingDirichlet(v)),
                        _ => values[v] = Some(g),
                    }
                }
            }
        }
        Ok(values)
    }
}

/// Discrete potential on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub nodal_values: Vec<f64>,
    /// `∫ |∇u_h|²`.
    pub energy: f64,
    /// Relative residual reached by the linear solver.
    pub residual: f64,
    pub iterations: usize,
    pub bc: BoundaryConditions,
}

/// Gradient coefficients of the three hat functions: `∇φ_k = (b_k, c_k) / (2A)`.
fn hat_gradients(p: [Point; 3]) -> ([f64; 3], [f64; 3], f64) {
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for k in 0..3 {
        let (q, r) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        b[k] = q.y - r.y;
        c[k] = r.x - q.x;
    }
    let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
    (b, c, area)
}

fn element_stiffness(p: [Point; 3]) -> [[f64; 3]; 3] {
    let (b, c, area) = hat_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
        }
    }
    k
}

/// Full stiffness matrix `∫ ∇φ_i·∇φ_j` over all nodes.
pub fn assemble_stiffness(mesh: &Mesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = element_stiffness(mesh.triangle_points(t));
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], k[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.node_count(), triplets)
}

/// The system for the free nodes after eliminating Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Mesh node of each unknown.
    pub free_nodes: Vec<usize>,
    /// Prescribed value per node (`None` for free nodes).
    pub prescribed: Vec<Option<f64>>,
}

pub fn reduced_system(mesh: &Mesh, bc: &BoundaryConditions) -> Result<ReducedSystem, SolveError> {
    let prescribed = bc.node_values(mesh)?;
    let mut unknown = vec![usize::MAX; mesh.node_count()];
    let mut free_nodes = Vec::new();
    for (v, g) in prescribed.iter().enumerate() {
        if g.is_none() {
            unknown[v] = free_nodes.len();
            free_nodes.push(v);
        }
    }
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
    let mut rhs = vec![0.0; free_nodes.len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = element_stiffness(mesh.triangle_points(t));
        for i in 0..3 {
            let row = unknown[tri[i]];
            if row == usize::MAX {
                continue;
            }
            for j in 0..3 {
                match prescribed[tri[j]] {
                    None => triplets.push((row, unknown[tri[j]], k[i][j])),
                    Some(g) => rhs[row] -= k[i][j] * g,
                }
            }
        }
    }
    Ok(ReducedSystem {
        matrix: CsrMatrix::from_triplets(free_nodes.len(), triplets),
        rhs,
        free_nodes,
        prescribed,
    })
}

/// Assembles and solves the mixed problem, returning the potential and its energy.
pub fn assemble_and_solve(
    mesh: &Mesh,
    bc: &BoundaryConditions,
    rel_tol: f64,
) -> Result<PotentialSolution, SolveError> {
    solve_from(mesh, bc, rel_tol, None)
}

/// As [`assemble_and_solve`], warm-starting CG from `initial` nodal values.
pub fn solve_from(
    mesh: &Mesh,
    bc: &BoundaryConditions,
    rel_tol: f64,
    initial: Option<&[f64]>,
) -> Result<PotentialSolution, SolveError> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(SolveError::BadTolerance(rel_tol));
    }
    let sys = reduced_system(mesh, bc)?;
    let mut x: Vec<f64> = match initial {
        Some(u) => sys.free_nodes.iter().map(|&v| u[v]).collect(),
        None => vec![0.0; sys.free_nodes.len()],
    };
    let stats = conjugate_gradient(&sys.matrix, &sys.rhs, &mut x, rel_tol)?;
    let mut nodal_values: Vec<f64> = sys.prescribed.iter().map(|g| g.unwrap_or(0.0)).collect();
    for (&v, &xv) in sys.free_nodes.iter().zip(&x) {
        nodal_values[v] = xv;
    }
    let energy = dirichlet_energy(mesh, &nodal_values);
    log::debug!(
        "solved {} unknowns in {} CG iterations, residual {:.2e}, energy {:.15}",
        sys.free_nodes.len(),
        stats.iterations,
        stats.relative_residual,
        energy
    );
    Ok(PotentialSolution {
        nodal_values,
        energy,
        residual: stats.relative_residual,
        iterations: stats.iterations,
        bc: bc.clone(),
    })
}

/// Piecewise constant gradient of a P1 field.
pub fn gradients(mesh: &Mesh, values: &[f64]) -> Vec<Point> {
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(t, tri)| {
            let (b, c, area) = hat_gradients(mesh.triangle_points(t));
            let (mut gx, mut gy) = (0.0, 0.0);
            for k in 0..3 {
                gx += values[tri[k]] * b[k];
                gy += values[tri[k]] * c[k];
            }
            Point::new(gx / (2.0 * area), gy / (2.0 * area))
        })
        .collect()
}

/// `Σ_T |∇u_h|²·area(T)`.
pub fn dirichlet_energy(mesh: &Mesh, values: &[f64]) -> f64 {
    gradients(mesh, values)
        .iter()
        .enumerate()
        .map(|(t, g)| g.dot(*g) * mesh.triangle_area(t))
        .sum()
}

/// Gradient-jump error indicators with Dörfler marking at [`DORFLER_THETA`].
pub fn element_error_indicators(mesh: &Mesh, sol: &PotentialSolution) -> RefinementMarking {
    element_error_indicators_with(mesh, sol, DORFLER_THETA)
}

/// Residual-type indicator `η_T² = Σ ½|E|²·[∂u/∂n]²` over the interior edges
/// of `T`, plus `|E|²·(∂u/∂n)²` over its insulated boundary edges.
pub fn element_error_indicators_with(
    mesh: &Mesh,
    sol: &PotentialSolution,
    theta: f64,
) -> RefinementMarking {
    let grads = gradients(mesh, &sol.nodal_values);
    let mut eta2 = vec![0.0; mesh.triangle_count()];
    let nodes = mesh.nodes();
    for ((a, b), tris) in mesh.edge_triangles() {
        if let [t1, t2] = tris[..] {
            let e = nodes[b] - nodes[a];
            let normal = Point::new(e.y, -e.x);
            // |E|·jump = |(∇u1 − ∇u2)·n̂|·|E| = |(∇u1 − ∇u2)·(e rotated)|
            let jump = (grads[t1] - grads[t2]).dot(normal);
            let share = 0.5 * jump * jump;
            eta2[t1] += share;
            eta2[t2] += share;
        }
    }
    let mut edge_owner = std::collections::HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            edge_owner.insert((tri[k], tri[(k + 1) % 3]), t);
        }
    }
    for &(a, b, tag) in mesh.boundary() {
        if !sol.bc.is_neumann(tag) {
            continue;
        }
        if let Some(&t) = edge_owner.get(&(a, b)) {
            let e = nodes[b] - nodes[a];
            let flux = grads[t].dot(Point::new(e.y, -e.x));
            eta2[t] += flux * flux;
        }
    }
    let indicators = eta2.into_iter().map(f64::sqrt).collect();
    RefinementMarking::dorfler(indicators, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quad_from_points, regular_polygon, RingCondenser};
    use crate::mesh::{triangulate, Domain};

    fn rect(h: f64) -> Domain {
        quad_from_points([
            Point::new(1.0, h),
            Point::new(0.0, h),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap()
        .into()
    }

    #[test]
    fn rectangle_solution_is_x() {
        let h = 2.0;
        let mesh = triangulate(&rect(h), 0.05).unwrap();
        let sol = assemble_and_solve(&mesh, &BoundaryConditions::quadrilateral(), 1e-12).unwrap();
        for (p, u) in mesh.nodes().iter().zip(&sol.nodal_values) {
            assert!((p.x - u).abs() <= 1e-8, "{p}: {u}");
        }
        assert!((sol.energy - h).abs() < 1e-9);
        let marking = element_error_indicators(&mesh, &sol);
        assert!(marking.indicators.iter().all(|&e| e <= 1e-8));
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let ring = RingCondenser::new(
            regular_polygon(8, Point::new(0.0, 0.0), 2.0, 0.0).unwrap(),
            regular_polygon(5, Point::new(0.0, 0.0), 1.0, 0.0).unwrap(),
        )
        .unwrap();
        let mesh = triangulate(&ring.into(), 0.1).unwrap();
        let bc =
            BoundaryConditions::new([(BoundaryTag::PlateE, 1.0), (BoundaryTag::PlateF, 1.0)], [])
                .unwrap();
        let sol = assemble_and_solve(&mesh, &bc, 1e-10).unwrap();
        assert!(sol.nodal_values.iter().all(|&u| (u - 1.0).abs() < 1e-8));
        assert!(sol.energy.abs() < 1e-14);
    }

    #[test]
    fn missing_dirichlet_is_singular() {
        let mesh = triangulate(&rect(1.0), 0.1).unwrap();
        let bc = BoundaryConditions::new([], BoundaryTag::ARCS).unwrap();
        assert_eq!(
            assemble_and_solve(&mesh, &bc, 1e-10).unwrap_err(),
            SolveError::Singular
        );
    }

    #[test]
    fn uncovered_and_overlapping_tags() {
        let mesh = triangulate(&rect(1.0), 0.1).unwrap();
        let bc =
            BoundaryConditions::new([(BoundaryTag::Gamma2, 0.0)], [BoundaryTag::Gamma1]).unwrap();
        assert!(matches!(
            assemble_and_solve(&mesh, &bc, 1e-10),
            Err(SolveError::UncoveredTag(_))
        ));
        assert!(matches!(
            BoundaryConditions::new([(BoundaryTag::Gamma2, 0.0)], [BoundaryTag::Gamma2]),
            Err(SolveError::OverlappingTags(_))
        ));
        assert!(matches!(
            assemble_and_solve(&mesh, &BoundaryConditions::quadrilateral(), 1.5),
            Err(SolveError::BadTolerance(_))
        ));
    }

    #[test]
    fn conflicting_dirichlet_values_detected() {
        let mesh = triangulate(&rect(1.0), 0.1).unwrap();
        use BoundaryTag::*;
        let bc = BoundaryConditions::new([(Gamma1, 0.0), (Gamma2, 1.0)], [Gamma3, Gamma4]).unwrap();
        assert!(matches!(
            assemble_and_solve(&mesh, &bc, 1e-10),
            Err(SolveError::ConflictingDirichlet(_))
        ));
    }

    #[test]
    fn stiffness_symmetric_and_energy_consistent() {
        let q = quad_from_points([
            Point::new(1.3, 1.1),
            Point::new(-0.2, 0.8),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let mesh = triangulate(&q.into(), 0.02).unwrap();
        let a = assemble_stiffness(&mesh);
        assert_eq!(a.max_asymmetry(), 0.0);
        let sol = assemble_and_solve(&mesh, &BoundaryConditions::quadrilateral(), 1e-10).unwrap();
        let quad = a.quadratic_form(&sol.nodal_values);
        assert!((quad - sol.energy).abs() <= 1e-12 * sol.energy);
        let reduced = reduced_system(&mesh, &BoundaryConditions::quadrilateral()).unwrap();
        assert_eq!(reduced.matrix.max_asymmetry(), 0.0);
    }

    #[test]
    fn dirichlet_nodes_exact_and_max_principle() {
        let q = quad_from_points([
            Point::new(1.0, 3.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let mesh = triangulate(&q.into(), 0.01).unwrap();
        let bc = BoundaryConditions::quadrilateral();
        let sol = assemble_and_solve(&mesh, &bc, 1e-10).unwrap();
        for (u, g) in sol.nodal_values.iter().zip(bc.node_values(&mesh).unwrap()) {
            if let Some(g) = g {
                assert_eq!(*u, g);
            }
            assert!(*u >= -1e-8 && *u <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn refinement_never_raises_energy() {
        let q = quad_from_points([
            Point::new(1.0, 3.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let bc = BoundaryConditions::quadrilateral();
        let mut mesh = triangulate(&q.into(), 0.05).unwrap();
        let mut sol = assemble_and_solve(&mesh, &bc, 1e-12).unwrap();
        for _ in 0..6 {
            let marking = element_error_indicators(&mesh, &sol);
            let r = mesh.refine_marked(&marking.marked).unwrap();
            let next =
                solve_from(&r.mesh, &bc, 1e-12, Some(&r.prolongate(&sol.nodal_values))).unwrap();
            assert!(next.energy <= sol.energy + 1e-12);
            mesh = r.mesh;
            sol = next;
        }
    }

    #[test]
    fn indicators_concentrate_at_reentrant_marked_corner() {
        // interior angle 3π/4 at z2 = 2i, where γ1 (insulated) meets γ2 (u = 0)
        let q = quad_from_points([
            Point::new(1.0, 3.0),
            Point::new(0.0, 2.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let bc = BoundaryConditions::quadrilateral();
        let mut mesh = triangulate(&q.into(), 0.02).unwrap();
        let mut sol = assemble_and_solve(&mesh, &bc, 1e-12).unwrap();
        for _ in 0..4 {
            let marking = element_error_indicators(&mesh, &sol);
            let r = mesh.refine_marked(&marking.marked).unwrap();
            sol = solve_from(&r.mesh, &bc, 1e-12, Some(&r.prolongate(&sol.nodal_values))).unwrap();
            mesh = r.mesh;
        }
        let marking = element_error_indicators(&mesh, &sol);
        let worst = (0..mesh.triangle_count())
            .max_by(|&a, &b| marking.indicators[a].total_cmp(&marking.indicators[b]))
            .unwrap();
        // two layers: the worst triangle touches a triangle that touches z2
        let corner = mesh
            .nodes()
            .iter()
            .position(|&p| p == Point::new(0.0, 2.0))
            .unwrap();
        let layer1: std::collections::HashSet<usize> = mesh
            .triangles()
            .iter()
            .filter(|t| t.contains(&corner))
            .flat_map(|t| t.iter().copied())
            .collect();
        let tri = mesh.triangles()[worst];
        let near = tri.iter().any(|v| layer1.contains(v));
        assert!(near, "max indicator at {:?}", mesh.triangle_points(worst));
    }

    #[test]
    fn indicators_scale_invariant() {
        let q = quad_from_points([
            Point::new(1.2, 0.9),
            Point::new(0.1, 1.4),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        let bc = BoundaryConditions::quadrilateral();
        let mesh = triangulate(&q.clone().into(), 0.02).unwrap();
        let k = 3.0;
        let scaled = Mesh::from_parts(
            mesh.nodes().iter().map(|&p| p * k).collect(),
            mesh.triangles().to_vec(),
            mesh.boundary().to_vec(),
        )
        .unwrap();
        let a = element_error_indicators(&mesh, &assemble_and_solve(&mesh, &bc, 1e-13).unwrap());
        let b =
            element_error_indicators(&scaled, &assemble_and_solve(&scaled, &bc, 1e-13).unwrap());
        for (x, y) in a.indicators.iter().zip(&b.indicators) {
            assert!(*x >= 0.0);
            if *x > 1e-6 {
                assert!((y / x - 1.0).abs() < 1e-6);
            }
        }
    }
}
