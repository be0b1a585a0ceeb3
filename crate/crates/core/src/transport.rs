//! Exact 1-Wasserstein distances between discrete measures.
//!
//! The transport LP is solved as a min-cost flow on the bipartite support
//! graph with network-simplex-style pivoting on a spanning-tree basis, not as
//! a dense general-purpose LP. The solver returns both an optimal plan and
//! the tree's dual potentials, from which a 1-Lipschitz Kantorovich–Rubinstein
//! witness is recovered. A closed-form quantile coupling ([`w1_1d`]) serves as
//! an independent oracle in dimension one.

use thiserror::Error;

use crate::measures::{DiscreteMeasure, Point, MERGE_TOL};

/// Hard cap on simplex pivots; exceeding it means a cycling bug, not a big
/// instance.
pub const PIVOT_CAP: usize = 1_000_000;

/// Pivots moving less mass than this count as degenerate.
const DEGEN_FLOW_EPS: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("transport simplex did not converge within {PIVOT_CAP} pivots")]
    NumericalFailure,
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// An optimal (or feasible) coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    source_atoms: Vec<Point>,
    target_atoms: Vec<Point>,
    flow: Vec<f64>, // row-major, rows = sources
    total_cost: f64,
}

impl TransportPlan {
    pub fn source_atoms(&self) -> &[Point] {
        &self.source_atoms
    }

    pub fn target_atoms(&self) -> &[Point] {
        &self.target_atoms
    }

    pub fn rows(&self) -> usize {
        self.source_atoms.len()
    }

    pub fn cols(&self) -> usize {
        self.target_atoms.len()
    }

    pub fn flow(&self, i: usize, j: usize) -> f64 {
        self.flow[i * self.cols() + j]
    }

    /// Σᵢⱼ flow[i][j]·‖xᵢ − yⱼ‖₂.
    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    /// Row sums of the flow matrix (should equal the source weights).
    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.cols();
        self.flow.chunks(n).map(|r| r.iter().sum()).collect()
    }

    /// Column sums of the flow matrix (should equal the target weights).
    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.cols();
        let mut sums = vec![0.0; n];
        for row in self.flow.chunks(n) {
            for (s, f) in sums.iter_mut().zip(row) {
                *s += f;
            }
        }
        sums
    }

    /// Nonzero entries as `(i, j, flow, unit_cost)`.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let n = self.cols();
        self.flow.iter().enumerate().filter_map(move |(k, &f)| {
            if f > 0.0 {
                let (i, j) = (k / n, k % n);
                Some((i, j, f, self.source_atoms[i].dist(&self.target_atoms[j])))
            } else {
                None
            }
        })
    }
}

/// A 1-Lipschitz Kantorovich–Rubinstein dual witness, defined on the union of
/// both supports (and, through the distance envelope, on all of ℝᵈ).
#[derive(Debug, Clone)]
pub struct DualPotential {
    points: Vec<Point>,
    values: Vec<f64>,
    // Envelope sites (yⱼ, φⱼ); eval(z) = minⱼ φⱼ + ‖z − yⱼ‖.
    sites: Vec<(Point, f64)>,
}

impl DualPotential {
    /// Union support points the potential is tabulated on.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluate the potential anywhere via its Lipschitz envelope.
    pub fn eval(&self, z: &Point) -> f64 {
        self.sites
            .iter()
            .map(|(y, phi)| phi + z.dist(y))
            .fold(f64::INFINITY, f64::min)
    }

    /// ∫f dρ − ∫f dσ; equals W₁(ρ,σ) when the potential came from an optimal
    /// solve of that pair.
    pub fn pairing(&self, rho: &DiscreteMeasure, sigma: &DiscreteMeasure) -> f64 {
        let plus: f64 = rho
            .atoms()
            .iter()
            .zip(rho.weights())
            .map(|(x, w)| w * self.eval(x))
            .sum();
        let minus: f64 = sigma
            .atoms()
            .iter()
            .zip(sigma.weights())
            .map(|(y, w)| w * self.eval(y))
            .sum();
        plus - minus
    }
}

/// Exact W₁ distance and an optimal transport plan.
pub fn w1_distance(
    rho: &DiscreteMeasure,
    sigma: &DiscreteMeasure,
) -> Result<(f64, TransportPlan)> {
    check_dims(rho, sigma)?;
    let sol = solve_transport(rho, sigma)?;
    let plan = TransportPlan {
        source_atoms: rho.atoms().to_vec(),
        target_atoms: sigma.atoms().to_vec(),
        flow: sol.flow,
        total_cost: sol.cost,
    };
    Ok((sol.cost, plan))
}

/// Exact W₁ in dimension one via the quantile coupling
/// ∫₀¹ |F_ρ⁻¹(t) − F_σ⁻¹(t)| dt, merging sorted cumulative-weight breakpoints.
pub fn w1_1d(rho: &DiscreteMeasure, sigma: &DiscreteMeasure) -> Result<f64> {
    check_dims(rho, sigma)?;
    if rho.dim() != 1 {
        return Err(TransportError::DimensionMismatch {
            left: rho.dim(),
            right: 1,
        });
    }
    // Canonical measures are lex-sorted, which in d = 1 is ascending order.
    let xa: Vec<f64> = rho.atoms().iter().map(|p| p.coords()[0]).collect();
    let xb: Vec<f64> = sigma.atoms().iter().map(|p| p.coords()[0]).collect();
    let (mut i, mut j) = (0usize, 0usize);
    let mut ra = rho.weights()[0];
    let mut rb = sigma.weights()[0];
    let mut total = 0.0;
    loop {
        let step = if ra <= rb {
            let s = ra;
            rb -= s;
            ra = 0.0;
            s
        } else {
            let s = rb;
            ra -= s;
            rb = 0.0;
            s
        };
        total += step * (xa[i] - xb[j]).abs();
        if ra == 0.0 {
            i += 1;
            if i == xa.len() {
                break;
            }
            ra = rho.weights()[i];
        }
        if rb == 0.0 {
            j += 1;
            if j == xb.len() {
                break;
            }
            rb = sigma.weights()[j];
        }
    }
    Ok(total)
}

/// A 1-Lipschitz dual witness with ∫f dρ − ∫f dσ = W₁(ρ,σ).
///
/// Dual variables come out of the transport simplex tree; they are then
/// tightened by the Lipschitz-envelope pass f(z) ← min_y (f(y) + ‖z − y‖)
/// over the target support, which both restores 1-Lipschitzness off the tree
/// and pins the pairing to the primal value.
pub fn kr_dual_potential(
    rho: &DiscreteMeasure,
    sigma: &DiscreteMeasure,
) -> Result<DualPotential> {
    check_dims(rho, sigma)?;
    let sol = solve_transport(rho, sigma)?;
    let sites: Vec<(Point, f64)> = sigma
        .atoms()
        .iter()
        .zip(&sol.v)
        .map(|(y, &vj)| (y.clone(), -vj))
        .collect();

    // Union support, deduplicated the same way measures canonicalize atoms.
    let mut union: Vec<Point> = rho.atoms().to_vec();
    union.extend(sigma.atoms().iter().cloned());
    union.sort_by(|p, q| {
        p.coords()
            .iter()
            .zip(q.coords())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    union.dedup_by(|a, b| a.sup_dist(b) <= MERGE_TOL);

    let pot = DualPotential {
        values: Vec::new(),
        points: Vec::new(),
        sites,
    };
    let values: Vec<f64> = union.iter().map(|z| pot.eval(z)).collect();
    Ok(DualPotential {
        points: union,
        values,
        ..pot
    })
}

fn check_dims(rho: &DiscreteMeasure, sigma: &DiscreteMeasure) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(TransportError::DimensionMismatch {
            left: rho.dim(),
            right: sigma.dim(),
        });
    }
    Ok(())
}

struct TransportSolution {
    flow: Vec<f64>, // m*n row-major
    cost: f64,
    #[allow(dead_code)]
    u: Vec<f64>, // source potentials, u_i + v_j = c_ij on the tree
    v: Vec<f64>, // sink potentials
}

/// Transportation simplex on the full bipartite graph.
///
/// Initial solution: zero-distance pairs across the measures are saturated
/// first (they are a matching, and saturating them is compatible with some
/// optimal plan because the ground cost is a metric), then a northwest-corner
/// pass over the leftovers. The union of both arc sets is provably acyclic,
/// so it extends to a spanning-tree basis with degenerate arcs.
fn solve_transport(rho: &DiscreteMeasure, sigma: &DiscreteMeasure) -> Result<TransportSolution> {
    let m = rho.len();
    let n = sigma.len();
    let mut cost = vec![0.0f64; m * n];
    let mut max_cost = 0.0f64;
    for (i, x) in rho.atoms().iter().enumerate() {
        for (j, y) in sigma.atoms().iter().enumerate() {
            let c = x.dist(y);
            cost[i * n + j] = c;
            max_cost = max_cost.max(c);
        }
    }
    let eps_opt = 1e-12 * (1.0 + max_cost);

    let mut a: Vec<f64> = rho.weights().to_vec();
    let mut b: Vec<f64> = sigma.weights().to_vec();
    let mut flow = vec![0.0f64; m * n];
    let mut basic = vec![false; m * n];

    // Saturate exact zero-cost pairs.
    for i in 0..m {
        for j in 0..n {
            if cost[i * n + j] == 0.0 && a[i] > 0.0 && b[j] > 0.0 {
                let f = if a[i] <= b[j] {
                    let f = a[i];
                    b[j] -= f;
                    a[i] = 0.0;
                    f
                } else {
                    let f = b[j];
                    a[i] -= f;
                    b[j] = 0.0;
                    f
                };
                flow[i * n + j] = f;
            }
        }
    }

    // Northwest corner on the leftovers, skipping exhausted rows/columns.
    let (mut i, mut j) = (0usize, 0usize);
    while i < m && j < n {
        if a[i] <= 0.0 {
            i += 1;
            continue;
        }
        if b[j] <= 0.0 {
            j += 1;
            continue;
        }
        if a[i] <= b[j] {
            let f = a[i];
            b[j] -= f;
            a[i] = 0.0;
            flow[i * n + j] += f;
        } else {
            let f = b[j];
            a[i] -= f;
            b[j] = 0.0;
            flow[i * n + j] += f;
        }
    }

    // Spanning-tree basis: positive-flow arcs plus degenerate fillers.
    let mut dsu = Dsu::new(m + n);
    for cell in 0..m * n {
        if flow[cell] > 0.0 {
            let (ci, cj) = (cell / n, cell % n);
            if !dsu.union(ci, m + cj) {
                // A cycle among positive init arcs means the init invariant
                // broke; bail out rather than produce a wrong basis.
                return Err(TransportError::NumericalFailure);
            }
            basic[cell] = true;
        }
    }
    for cell in 0..m * n {
        if !basic[cell] {
            let (ci, cj) = (cell / n, cell % n);
            if dsu.union(ci, m + cj) {
                basic[cell] = true;
            }
        }
    }

    let mut tree = Tree::new(m, n, &basic);
    let mut u = vec![0.0f64; m];
    let mut v = vec![0.0f64; n];
    tree.potentials(&cost, &mut u, &mut v);

    let mut bland = false;
    let mut degen_run = 0usize;
    let degen_limit = 2 * (m + n) + 16;

    for _pivot in 0..PIVOT_CAP {
        // Pricing: Dantzig rule, or Bland's least-index rule after a long
        // degenerate run (guards against cycling on zero-cost structures).
        let mut enter: Option<usize> = None;
        let mut best = -eps_opt;
        'scan: for ci in 0..m {
            for cj in 0..n {
                let cell = ci * n + cj;
                if basic[cell] {
                    continue;
                }
                let r = cost[cell] - u[ci] - v[cj];
                if r < best {
                    best = r;
                    enter = Some(cell);
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some(entering) = enter else {
            // Optimal: no reduced cost below -eps_opt.
            let total = flow
                .iter()
                .zip(&cost)
                .map(|(f, c)| f * c)
                .sum::<f64>();
            return Ok(TransportSolution {
                flow,
                cost: total,
                u,
                v,
            });
        };

        let (ei, ej) = (entering / n, entering % n);
        // Cycle: entering arc + tree path from sink ej back to source ei.
        let path = tree.path(m + ej, ei);
        // Walking the path from the sink end, arcs traversed sink→source lose
        // flow; arcs traversed source→sink gain it.
        let mut delta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for w in path.windows(2) {
            if w[0] >= m {
                let cell = w[1] * n + (w[0] - m);
                if flow[cell] <= delta {
                    delta = flow[cell];
                    leaving = Some(cell);
                }
            }
        }
        let Some(leaving) = leaving else {
            // A bipartite cycle always alternates orientation.
            return Err(TransportError::NumericalFailure);
        };

        flow[entering] += delta;
        for w in path.windows(2) {
            if w[0] >= m {
                let cell = w[1] * n + (w[0] - m);
                flow[cell] -= delta;
            } else {
                let cell = w[0] * n + (w[1] - m);
                flow[cell] += delta;
            }
        }
        flow[leaving] = 0.0;
        basic[leaving] = false;
        basic[entering] = true;
        tree.replace(leaving, entering);
        tree.potentials(&cost, &mut u, &mut v);

        if delta <= DEGEN_FLOW_EPS {
            degen_run += 1;
            if degen_run > degen_limit {
                bland = true;
            }
        } else {
            degen_run = 0;
            bland = false;
        }
    }
    Err(TransportError::NumericalFailure)
}

/// Spanning-tree adjacency over sources 0..m and sinks m..m+n.
struct Tree {
    m: usize,
    n: usize,
    adj: Vec<Vec<usize>>, // node -> incident basic cells
}

impl Tree {
    fn new(m: usize, n: usize, basic: &[bool]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for (cell, &is_basic) in basic.iter().enumerate() {
            if is_basic {
                let (ci, cj) = (cell / n, cell % n);
                adj[ci].push(cell);
                adj[m + cj].push(cell);
            }
        }
        Tree { m, n, adj }
    }

    fn other_end(&self, cell: usize, node: usize) -> usize {
        let (ci, cj) = (cell / self.n, cell % self.n);
        if node == ci {
            self.m + cj
        } else {
            ci
        }
    }

    fn replace(&mut self, out_cell: usize, in_cell: usize) {
        let n = self.n;
        let (oi, oj) = (out_cell / n, out_cell % n);
        self.adj[oi].retain(|&c| c != out_cell);
        self.adj[self.m + oj].retain(|&c| c != out_cell);
        let (ii, ij) = (in_cell / n, in_cell % n);
        self.adj[ii].push(in_cell);
        self.adj[self.m + ij].push(in_cell);
    }

    /// Node path from `from` to `to` (inclusive) through the tree.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent: Vec<usize> = vec![usize::MAX; total];
        let mut queue = std::collections::VecDeque::new();
        parent[from] = from;
        queue.push_back(from);
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for &cell in &self.adj[node] {
                let next = self.other_end(cell, node);
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = vec![to];
        let mut node = to;
        while node != from {
            node = parent[node];
            path.push(node);
        }
        path.reverse();
        path
    }

    /// Recompute potentials with u[0] = 0 and u_i + v_j = c_ij on tree arcs.
    fn potentials(&self, cost: &[f64], u: &mut [f64], v: &mut [f64]) {
        let mut seen = vec![false; self.m + self.n];
        let mut queue = std::collections::VecDeque::new();
        u[0] = 0.0;
        seen[0] = true;
        queue.push_back(0usize);
        while let Some(node) = queue.pop_front() {
            for &cell in &self.adj[node] {
                let next = self.other_end(cell, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (ci, cj) = (cell / self.n, cell % self.n);
                if next >= self.m {
                    v[cj] = cost[cell] - u[ci];
                } else {
                    u[ci] = cost[cell] - v[cj];
                }
                queue.push_back(next);
            }
        }
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    /// Returns false if x and y were already connected.
    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        self.parent[rx] = ry;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;

    fn p(x: f64) -> Point {
        Point::scalar(x)
    }

    fn p2(x: f64, y: f64) -> Point {
        Point::new(vec![x, y]).unwrap()
    }

    fn measure(pts: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(pts.iter().map(|&x| p(x)).collect(), ws.to_vec()).unwrap()
    }

    #[test]
    fn dirac_to_dirac() {
        let (d, plan) = w1_distance(
            &DiscreteMeasure::dirac(p2(0.0, 0.0)),
            &DiscreteMeasure::dirac(p2(3.0, 4.0)),
        )
        .unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        assert!((plan.flow(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_points_to_dirac() {
        let u = measure(&[0.0, 1.0, 2.0, 3.0], &[0.25; 4]);
        let (d, plan) = w1_distance(&u, &DiscreteMeasure::dirac(p(0.0))).unwrap();
        assert!((d - 1.5).abs() < 1e-12);
        let rows = plan.row_sums();
        for (r, w) in rows.iter().zip(u.weights()) {
            assert!((r - w).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let m = measure(&[0.0, 0.5, 2.0], &[0.2, 0.3, 0.5]);
        let (d, _) = w1_distance(&m, &m).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn w1_1d_examples() {
        let (d5, _) = w1_distance(&DiscreteMeasure::dirac(p(0.0)), &DiscreteMeasure::dirac(p(5.0)))
            .unwrap();
        assert!((d5 - 5.0).abs() < 1e-12);
        assert_eq!(
            w1_1d(&DiscreteMeasure::dirac(p(0.0)), &DiscreteMeasure::dirac(p(5.0))).unwrap(),
            5.0
        );
        let u = measure(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(w1_1d(&u, &u).unwrap(), 0.0);
        assert!((w1_1d(&u, &DiscreteMeasure::dirac(p(0.5))).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lp_matches_quantile_formula() {
        // Deterministic pseudo-random pairs via a small LCG.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let na = 1 + (next() * 15.0) as usize;
            let nb = 1 + (next() * 15.0) as usize;
            let build = |k: usize, next: &mut dyn FnMut() -> f64| {
                let pts: Vec<Point> = (0..k).map(|_| p(next() * 4.0 - 2.0)).collect();
                let mut ws: Vec<f64> = (0..k).map(|_| next() + 1e-3).collect();
                let s: f64 = ws.iter().sum();
                ws.iter_mut().for_each(|w| *w /= s);
                DiscreteMeasure::new(pts, ws).unwrap()
            };
            let rho = build(na, &mut next);
            let sigma = build(nb, &mut next);
            let (lp, plan) = w1_distance(&rho, &sigma).unwrap();
            let oracle = w1_1d(&rho, &sigma).unwrap();
            assert!(
                (lp - oracle).abs() < 1e-9,
                "lp={lp} oracle={oracle} na={na} nb={nb}"
            );
            // Plan invariants.
            let recost: f64 = plan.iter_nonzero().map(|(_, _, f, c)| f * c).sum();
            assert!((recost - plan.total_cost()).abs() < 1e-9);
            for (r, w) in plan.row_sums().iter().zip(rho.weights()) {
                assert!((r - w).abs() < 1e-9);
            }
            for (c, w) in plan.col_sums().iter().zip(sigma.weights()) {
                assert!((c - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dual_potential_witnesses_distance() {
        let rho = DiscreteMeasure::dirac(p(0.0));
        let sigma = DiscreteMeasure::dirac(p(1.0));
        let pot = kr_dual_potential(&rho, &sigma).unwrap();
        assert!((pot.eval(&p(0.0)) - pot.eval(&p(1.0)) - 1.0).abs() < 1e-9);
        assert!((pot.pairing(&rho, &sigma) - 1.0).abs() < 1e-9);

        let same = measure(&[0.0, 2.0], &[0.5, 0.5]);
        let pot0 = kr_dual_potential(&same, &same).unwrap();
        assert!(pot0.pairing(&same, &same).abs() < 1e-9);
    }

    #[test]
    fn dual_potential_is_one_lipschitz_on_support() {
        let rho = measure(&[0.0, 0.7, -1.3], &[0.5, 0.25, 0.25]);
        let sigma = measure(&[0.2, 1.9], &[0.4, 0.6]);
        let pot = kr_dual_potential(&rho, &sigma).unwrap();
        let (w, _) = w1_distance(&rho, &sigma).unwrap();
        assert!((pot.pairing(&rho, &sigma) - w).abs() < 1e-7);
        let pts = pot.points();
        let vals = pot.values();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((vals[i] - vals[j]).abs() <= pts[i].dist(&pts[j]) + 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = DiscreteMeasure::dirac(p(0.0));
        let b = DiscreteMeasure::dirac(p2(0.0, 0.0));
        assert!(matches!(
            w1_distance(&a, &b),
            Err(TransportError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            w1_1d(&b, &b),
            Err(TransportError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn shared_atoms_stay_in_place() {
        // ρ and σ share the atom at 1.0; min(0.6, 0.5) of it should not move.
        let rho = measure(&[0.0, 1.0], &[0.4, 0.6]);
        let sigma = measure(&[1.0, 2.0], &[0.5, 0.5]);
        let (d, plan) = w1_distance(&rho, &sigma).unwrap();
        // Optimal: 0.4 moves 0→1 is wasteful; quantile coupling gives
        // 0.4·(1-0) + 0.1·(2-1) + ... check against the 1-d oracle instead.
        assert!((d - w1_1d(&rho, &sigma).unwrap()).abs() < 1e-12);
        assert!(plan.flow(1, 0) >= 0.5 - 1e-12);
    }
}
