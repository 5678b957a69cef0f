//! Kirchhoff solve for node voltages and the memristive edge equation of state.
//!
//! Pinned nodes (voltage sources and grounds) are eliminated from the nodal
//! system; the remaining conductance-weighted Laplacian block is symmetric
//! positive definite for any connected graph with at least one pinned node
//! and is factorised by sparse (or, for dense graphs, dense) Cholesky. The
//! sparsity pattern never changes during a run, so the symbolic analysis is
//! computed once per [`NodalSolver`].
//!
//! Edge state follows a threshold rule: above `v_threshold` the filament state
//! `s` grows linearly in the excess drop, below it relaxes exponentially, and
//! the conductance is the affine map `g_off + (g_on - g_off) s`.

use std::collections::{BTreeMap, BTreeSet};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt as SparseLlt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, MatMut, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::NetworkGraph;

/// Contract on every solve: worst relative KCL residual at a free node.
pub const KCL_TOLERANCE: f64 = 1e-10;

/// Weight of the componentwise scale `sum g (|V_i| + |V_j|)` in the residual
/// denominator. Nodes whose incident currents are genuinely zero (dangling
/// subtrees, symmetric points) are then judged against rounding of their
/// voltages instead of against an exact zero.
pub const RESIDUAL_SCALE_FLOOR: f64 = 1e-4;

// Solves aim below the contract so that a refined answer never sits on it.
const SOLVE_TARGET: f64 = 1e-12;
const MAX_REFINEMENTS: usize = 4;
// Free-block fill ratio above which a dense Cholesky beats the sparse one.
const DENSE_FILL_RATIO: f64 = 0.05;
// Between factorisations the last Cholesky factor preconditions CG. A solve
// that needs more than REFACTOR_AFTER iterations schedules a fresh factor.
const MAX_PCG_ITERS: usize = 30;
const REFACTOR_AFTER: usize = 8;
// PCG stops once each node's residual is within an allowance a quarter of
// SOLVE_TARGET wide, scaled by the currents of the previous solve; the
// answer is then confirmed with the exact componentwise residual.

/// Sign convention of the state update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// Growth driven by `|v|`; the sign of the drop is irrelevant.
    #[default]
    Unipolar,
    /// Signed state: a drop above threshold in the edge's forward direction
    /// (`V_i - V_j`, `i < j`) grows the filament, the reverse drop erases it.
    Bipolar,
}

/// Equation-of-state constants shared by every junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemristorParams {
    /// Volts; drops at or below this magnitude do not grow the filament.
    pub v_threshold: f64,
    pub g_off: f64,
    pub g_on: f64,
    /// Growth rate per volt of excess drop, 1/(V s).
    pub k_grow: f64,
    /// Relaxation rate below threshold, 1/s.
    pub k_decay: f64,
    /// Sub-intervals per time step. Within [`Circuit::step`] the voltages are
    /// re-solved at every sub-interval.
    pub sub_steps: usize,
    pub polarity: Polarity,
}

impl Default for MemristorParams {
    fn default() -> Self {
        MemristorParams {
            v_threshold: 0.01,
            g_off: 0.01,
            g_on: 1.0,
            k_grow: 500.0,
            k_decay: 2.0,
            sub_steps: 1,
            polarity: Polarity::Unipolar,
        }
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_threshold, self.g_off, self.g_on, self.k_grow, self.k_decay].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("memristor", "all constants must be finite"));
        }
        if !(self.g_off > 0.0 && self.g_off < self.g_on) {
            return Err(Error::param("g_off", format!("need 0 < g_off < g_on, got {} and {}", self.g_off, self.g_on)));
        }
        if self.v_threshold <= 0.0 {
            return Err(Error::param("v_threshold", "must be positive"));
        }
        if self.k_grow < 0.0 || self.k_decay < 0.0 {
            return Err(Error::param("k_grow", "rates must be non-negative"));
        }
        if self.sub_steps == 0 {
            return Err(Error::param("sub_steps", "must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn conductance(&self, s: f64) -> f64 {
        self.g_off + (self.g_on - self.g_off) * s
    }

    /// One sub-interval of the state rule for a single edge.
    #[inline]
    fn advance_state(&self, s: f64, drop: f64, dt: f64, decay_factor: f64) -> f64 {
        let magnitude = drop.abs();
        let next = if magnitude > self.v_threshold {
            let growth = self.k_grow * (magnitude - self.v_threshold) * dt;
            match self.polarity {
                Polarity::Unipolar => s + growth,
                Polarity::Bipolar if drop > 0.0 => s + growth,
                Polarity::Bipolar => s - growth,
            }
        } else {
            s * decay_factor
        };
        next.clamp(0.0, 1.0)
    }
}

/// Filament state and conductance of every edge, in graph edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    s: Vec<f64>,
    g: Vec<f64>,
}

impl EdgeState {
    /// All filaments empty, every junction at `g_off`.
    pub fn pristine(n_edges: usize, params: &MemristorParams) -> Self {
        EdgeState { s: vec![0.0; n_edges], g: vec![params.g_off; n_edges] }
    }

    pub fn from_filaments(s: Vec<f64>, params: &MemristorParams) -> Result<Self> {
        if let Some(bad) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("s", format!("filament state {bad} outside [0, 1]")));
        }
        let g = s.iter().map(|&v| params.conductance(v)).collect();
        Ok(EdgeState { s, g })
    }

    pub fn filaments(&self) -> &[f64] {
        &self.s
    }

    pub fn conductances(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Mean and population standard deviation of the conductances.
    pub fn conductance_stats(&self) -> (f64, f64) {
        mean_std(&self.g)
    }

    /// Applies the state rule over `dt`, split into `params.sub_steps` equal
    /// sub-intervals with the drops held fixed.
    pub fn advance(&mut self, drops: &[f64], dt: f64, params: &MemristorParams) -> Result<()> {
        if drops.len() != self.s.len() {
            return Err(Error::Dimension(format!("{} edge drops for {} edges", drops.len(), self.s.len())));
        }
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let h = dt / params.sub_steps as f64;
        for _ in 0..params.sub_steps {
            self.advance_once(drops, h, params);
        }
        Ok(())
    }

    fn advance_once(&mut self, drops: &[f64], dt: f64, params: &MemristorParams) {
        let decay = (-params.k_decay * dt).exp();
        for ((s, g), &v) in self.s.iter_mut().zip(self.g.iter_mut()).zip(drops) {
            *s = params.advance_state(*s, v, dt, decay);
            *g = params.conductance(*s);
        }
    }
}

/// Pure form of [`EdgeState::advance`].
pub fn update_edges(state: &EdgeState, drops: &[f64], dt: f64, params: &MemristorParams) -> Result<EdgeState> {
    let mut next = state.clone();
    next.advance(drops, dt, params)?;
    Ok(next)
}

/// Fraction of edges whose drop magnitude exceeds `v_threshold`.
pub fn active_fraction(drops: &[f64], v_threshold: f64) -> Result<f64> {
    if drops.is_empty() {
        return Err(Error::Empty("edge drop list"));
    }
    let active = drops.iter().filter(|v| v.abs() > v_threshold).count();
    Ok(active as f64 / drops.len() as f64)
}

/// Node voltages and derived quantities of one Kirchhoff solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSolution {
    pub node_voltages: Vec<f64>,
    /// `V_i - V_j` for every edge `(i, j)`, `i < j`.
    pub edge_drops: Vec<f64>,
    /// Net current injected into the network at each pinned node, sources
    /// first (in the order given) then grounds. Grounds report negative values
    /// when they sink current.
    pub source_currents: Vec<(usize, f64)>,
}

impl CircuitSolution {
    /// Total power delivered by the pinned nodes, `sum I V`.
    pub fn delivered_power(&self) -> f64 {
        self.source_currents.iter().map(|&(node, i)| i * self.node_voltages[node]).sum()
    }
}

/// Worst relative KCL residual over the free nodes of a solution.
///
/// At node `i` the ratio is `|sum g (V_j - V_i)| / (sum g |V_j - V_i| + eps_i)`
/// with `eps_i = RESIDUAL_SCALE_FLOOR * sum g (|V_i| + |V_j|)`.
pub fn kcl_residual(graph: &NetworkGraph, conductances: &[f64], voltages: &[f64], pinned: &[usize]) -> f64 {
    let n = graph.n_nodes();
    let mut net = vec![0.0; n];
    let mut abs = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for (&(i, j), &g) in graph.edges().iter().zip(conductances) {
        let flow = g * (voltages[j] - voltages[i]);
        net[i] += flow;
        net[j] -= flow;
        abs[i] += flow.abs();
        abs[j] += flow.abs();
        let s = g * (voltages[i].abs() + voltages[j].abs());
        scale[i] += s;
        scale[j] += s;
    }
    let mut is_pinned = vec![false; n];
    for &p in pinned {
        is_pinned[p] = true;
    }
    (0..n).filter(|&v| !is_pinned[v]).map(|v| relative_residual(net[v], abs[v], scale[v])).fold(0.0, f64::max)
}

#[inline]
fn relative_residual(net: f64, abs: f64, scale: f64) -> f64 {
    if net == 0.0 {
        0.0
    } else {
        net.abs() / (abs + RESIDUAL_SCALE_FLOOR * scale)
    }
}

#[derive(Debug, Clone, Copy)]
enum Stamp {
    /// Both ends free: two diagonal slots and one off-diagonal slot.
    Internal { diag_i: usize, diag_j: usize, off: usize, fi: usize, fj: usize },
    /// One end pinned: stamps the diagonal and moves `g V_pinned` to the rhs.
    Boundary { diag: usize, free: usize, pinned: usize },
    /// Both ends pinned: no unknowns involved.
    Pinned,
}

struct Residuals {
    net: Vec<f64>,
    abs: Vec<f64>,
    scale: Vec<f64>,
    worst_node: usize,
    worst: f64,
}

enum Backend {
    Sparse(SymbolicLlt<usize>),
    Dense,
}

enum Factor {
    Sparse(SparseLlt<usize, f64>),
    Dense(faer::linalg::solvers::Llt<f64>),
}

impl Factor {
    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let rhs = MatMut::from_column_major_slice_mut(x, n, 1);
        match self {
            Factor::Sparse(f) => f.solve_in_place(rhs),
            Factor::Dense(f) => f.solve_in_place(rhs),
        }
    }
}

/// Reusable Kirchhoff solver for a fixed graph and fixed pinned node sets.
pub struct NodalSolver {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    sources: Vec<usize>,
    grounds: Vec<usize>,
    free_nodes: Vec<usize>,
    stamps: Vec<Stamp>,
    pinned_edges: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    backend: Backend,
    values: Vec<f64>,
    dense: Mat<f64>,
    rhs: Vec<f64>,
    factor: Option<Factor>,
    refactor_next: bool,
    warm: Vec<f64>,
    // Per-node residual allowance from the last accepted solve.
    tol: Vec<f64>,
}

impl std::fmt::Debug for NodalSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodalSolver")
            .field("n_nodes", &self.n_nodes)
            .field("n_edges", &self.edges.len())
            .field("sources", &self.sources)
            .field("grounds", &self.grounds)
            .field("dense", &matches!(self.backend, Backend::Dense))
            .finish()
    }
}

impl NodalSolver {
    pub fn new(graph: &NetworkGraph, sources: &[usize], grounds: &[usize]) -> Result<Self> {
        let n = graph.n_nodes();
        if sources.is_empty() && grounds.is_empty() {
            return Err(Error::Empty("pinned node set"));
        }
        if grounds.is_empty() {
            return Err(Error::Empty("ground node set"));
        }
        let mut pinned = vec![false; n];
        let mut is_source = vec![false; n];
        for &node in sources {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n_nodes: n });
            }
            if is_source[node] {
                return Err(Error::param("sources", format!("node {node} listed twice")));
            }
            is_source[node] = true;
            pinned[node] = true;
        }
        for &node in grounds {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n_nodes: n });
            }
            if is_source[node] {
                return Err(Error::BoundaryOverlap(node));
            }
            if pinned[node] {
                return Err(Error::param("grounds", format!("node {node} listed twice")));
            }
            pinned[node] = true;
        }

        let mut slot = vec![usize::MAX; n];
        let mut free_nodes = Vec::with_capacity(n);
        for v in 0..n {
            if !pinned[v] {
                slot[v] = free_nodes.len();
                free_nodes.push(v);
            }
        }
        let nf = free_nodes.len();

        // Lower-triangular pattern, column by column.
        let mut columns: Vec<Vec<usize>> = (0..nf).map(|c| vec![c]).collect();
        for &(i, j) in graph.edges() {
            let (a, b) = (slot[i], slot[j]);
            if a != usize::MAX && b != usize::MAX {
                columns[a.min(b)].push(a.max(b));
            }
        }
        let mut col_ptr = Vec::with_capacity(nf + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut columns {
            col.sort_unstable();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let find = |row: usize, col: usize| -> usize {
            let start = col_ptr[col];
            let rows = &row_idx[start..col_ptr[col + 1]];
            start + rows.binary_search(&row).expect("pattern contains every stamped entry")
        };

        let stamps = graph
            .edges()
            .iter()
            .map(|&(i, j)| match (slot[i], slot[j]) {
                (usize::MAX, usize::MAX) => Stamp::Pinned,
                (a, usize::MAX) => Stamp::Boundary { diag: find(a, a), free: a, pinned: j },
                (usize::MAX, b) => Stamp::Boundary { diag: find(b, b), free: b, pinned: i },
                (a, b) => Stamp::Internal {
                    diag_i: find(a, a),
                    diag_j: find(b, b),
                    off: find(a.max(b), a.min(b)),
                    fi: a,
                    fj: b,
                },
            })
            .collect();

        let pinned_edges = (0..graph.n_edges())
            .filter(|&k| {
                let (i, j) = graph.edges()[k];
                pinned[i] || pinned[j]
            })
            .collect();

        let lower_entries = (nf * (nf + 1) / 2).max(1);
        let backend = if nf == 0 || row_idx.len() as f64 / lower_entries as f64 > DENSE_FILL_RATIO {
            Backend::Dense
        } else {
            let symbolic = SymbolicSparseColMatRef::new_checked(nf, nf, &col_ptr, None, &row_idx);
            let analysis = SymbolicLlt::try_new(symbolic, Side::Lower)
                .map_err(|e| Error::Solver(format!("symbolic analysis failed: {e:?}")))?;
            Backend::Sparse(analysis)
        };
        let dense = match backend {
            Backend::Dense => Mat::zeros(nf, nf),
            Backend::Sparse(_) => Mat::zeros(0, 0),
        };

        Ok(NodalSolver {
            n_nodes: n,
            edges: graph.edges().to_vec(),
            sources: sources.to_vec(),
            grounds: grounds.to_vec(),
            free_nodes,
            stamps,
            pinned_edges,
            values: vec![0.0; row_idx.len()],
            col_ptr,
            row_idx,
            backend,
            dense,
            rhs: vec![0.0; nf],
            factor: None,
            refactor_next: true,
            warm: vec![0.0; nf],
            tol: Vec::new(),
        })
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Forgets the cached factor and warm start. Solves after a reset follow
    /// the same path as on a fresh solver, so replays stay bit-identical.
    pub fn reset_cache(&mut self) {
        self.factor = None;
        self.refactor_next = true;
        self.warm.fill(0.0);
        self.tol.clear();
    }

    pub fn grounds(&self) -> &[usize] {
        &self.grounds
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Solves for all node voltages given per-edge conductances and one
    /// voltage per source node (grounds are held at 0 V).
    pub fn solve(&mut self, conductances: &[f64], source_volts: &[f64]) -> Result<CircuitSolution> {
        if conductances.len() != self.edges.len() {
            return Err(Error::Dimension(format!(
                "{} conductances for {} edges",
                conductances.len(),
                self.edges.len()
            )));
        }
        if source_volts.len() != self.sources.len() {
            return Err(Error::Dimension(format!(
                "{} source voltages for {} sources",
                source_volts.len(),
                self.sources.len()
            )));
        }
        if let Some(k) = source_volts.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "source voltage", step: k });
        }

        let mut voltages = vec![0.0; self.n_nodes];
        for (&node, &v) in self.sources.iter().zip(source_volts) {
            voltages[node] = v;
        }

        if !self.free_nodes.is_empty() {
            self.assemble(conductances, &voltages);
            let reused = !self.refactor_next && self.pcg(conductances, &mut voltages)?;
            if !reused {
                let factor = self.factorize()?;
                let mut x = self.rhs.clone();
                factor.solve_in_place(&mut x);
                for (&node, &v) in self.free_nodes.iter().zip(&x) {
                    voltages[node] = v;
                }
                self.refine(&factor, conductances, &mut voltages)?;
                self.factor = Some(factor);
                self.refactor_next = false;
            }
            for (w, &node) in self.warm.iter_mut().zip(&self.free_nodes) {
                *w = voltages[node];
            }
        }

        let edge_drops: Vec<f64> = self.edges.iter().map(|&(i, j)| voltages[i] - voltages[j]).collect();
        // Only pinned nodes report currents, so only edges touching them count.
        let mut injected = vec![0.0; self.n_nodes];
        for &k in &self.pinned_edges {
            let (i, j) = self.edges[k];
            let flow = conductances[k] * edge_drops[k];
            injected[i] += flow;
            injected[j] -= flow;
        }
        let source_currents = self.sources.iter().chain(&self.grounds).map(|&node| (node, injected[node])).collect();

        Ok(CircuitSolution { node_voltages: voltages, edge_drops, source_currents })
    }

    fn assemble(&mut self, conductances: &[f64], voltages: &[f64]) {
        self.values.fill(0.0);
        self.rhs.fill(0.0);
        for (stamp, &g) in self.stamps.iter().zip(conductances) {
            match *stamp {
                Stamp::Internal { diag_i, diag_j, off, .. } => {
                    self.values[diag_i] += g;
                    self.values[diag_j] += g;
                    self.values[off] -= g;
                }
                Stamp::Boundary { diag, free, pinned } => {
                    self.values[diag] += g;
                    self.rhs[free] += g * voltages[pinned];
                }
                Stamp::Pinned => {}
            }
        }
        // The pattern is fixed, so entries outside it stay zero between steps.
        if let Backend::Dense = self.backend {
            for col in 0..self.free_nodes.len() {
                for k in self.col_ptr[col]..self.col_ptr[col + 1] {
                    let row = self.row_idx[k];
                    self.dense[(row, col)] = self.values[k];
                    self.dense[(col, row)] = self.values[k];
                }
            }
        }
    }

    /// `y = A x` for the assembled reduced matrix.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nf = x.len();
        match self.backend {
            Backend::Dense => {
                let xs = faer::MatRef::from_column_major_slice(x, nf, 1);
                let ys = MatMut::from_column_major_slice_mut(y, nf, 1);
                faer::linalg::matmul::matmul(ys, faer::Accum::Replace, self.dense.as_ref(), xs, 1.0, faer::Par::Seq);
            }
            Backend::Sparse(_) => {
                y.fill(0.0);
                for col in 0..nf {
                    for k in self.col_ptr[col]..self.col_ptr[col + 1] {
                        let (row, v) = (self.row_idx[k], self.values[k]);
                        y[row] += v * x[col];
                        if row != col {
                            y[col] += v * x[row];
                        }
                    }
                }
            }
        }
    }

    /// Conjugate gradients preconditioned by the most recent factor, warm
    /// started from the previous solution. Returns false when the caller
    /// should factorise afresh instead.
    fn pcg(&mut self, conductances: &[f64], voltages: &mut [f64]) -> Result<bool> {
        let Some(factor) = self.factor.take() else {
            return Ok(false);
        };
        let accepted = self.pcg_with(&factor, conductances, voltages);
        self.factor = Some(factor);
        accepted
    }

    fn pcg_with(&mut self, factor: &Factor, conductances: &[f64], voltages: &mut [f64]) -> Result<bool> {
        let nf = self.free_nodes.len();
        let mut x = self.warm.clone();
        let mut r = vec![0.0; nf];
        self.apply(&x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(&self.rhs) {
            *ri = bi - *ri;
        }
        let mut tol = std::mem::take(&mut self.tol);
        let mut z = r.clone();
        factor.solve_in_place(&mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut q = vec![0.0; nf];
        for iter in 1..=MAX_PCG_ITERS {
            self.apply(&p, &mut q);
            let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
            if !(pq > 0.0) || !rz.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for k in 0..nf {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            if r.iter().zip(&tol).all(|(ri, t)| ri.abs() <= *t) {
                for (&node, &v) in self.free_nodes.iter().zip(&x) {
                    voltages[node] = v;
                }
                let res = self.residuals(conductances, voltages);
                if res.worst < SOLVE_TARGET {
                    self.keep_tolerances(&res);
                    self.refactor_next = iter > REFACTOR_AFTER;
                    return Ok(true);
                }
                if !res.worst.is_finite() {
                    break;
                }
                // Allowances from an earlier step were too loose for this
                // drive: tighten them and continue from the true residual.
                self.keep_tolerances(&res);
                tol = std::mem::take(&mut self.tol);
                r.copy_from_slice(&res.net);
            }
            z.copy_from_slice(&r);
            factor.solve_in_place(&mut z);
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..nf {
                p[k] = z[k] + beta * p[k];
            }
        }
        Ok(false)
    }

    fn keep_tolerances(&mut self, res: &Residuals) {
        self.tol.clear();
        self.tol
            .extend(res.abs.iter().zip(&res.scale).map(|(a, s)| 0.25 * SOLVE_TARGET * (a + RESIDUAL_SCALE_FLOOR * s)));
    }

    /// Net current into each free node with its absolute and voltage scales,
    /// plus the worst relative residual and where it sits.
    fn residuals(&self, conductances: &[f64], voltages: &[f64]) -> Residuals {
        let nf = self.free_nodes.len();
        let mut net = vec![0.0; nf];
        let mut abs = vec![0.0; nf];
        let mut scale = vec![0.0; nf];
        for (stamp, &g) in self.stamps.iter().zip(conductances) {
            match *stamp {
                Stamp::Internal { fi, fj, .. } => {
                    let (vi, vj) = (voltages[self.free_nodes[fi]], voltages[self.free_nodes[fj]]);
                    let flow = g * (vj - vi);
                    net[fi] += flow;
                    net[fj] -= flow;
                    abs[fi] += flow.abs();
                    abs[fj] += flow.abs();
                    let s = g * (vi.abs() + vj.abs());
                    scale[fi] += s;
                    scale[fj] += s;
                }
                Stamp::Boundary { free, pinned, .. } => {
                    let (vf, vp) = (voltages[self.free_nodes[free]], voltages[pinned]);
                    let flow = g * (vp - vf);
                    net[free] += flow;
                    abs[free] += flow.abs();
                    scale[free] += g * (vf.abs() + vp.abs());
                }
                Stamp::Pinned => {}
            }
        }
        let (worst_node, worst) = (0..nf)
            .map(|k| (k, relative_residual(net[k], abs[k], scale[k])))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 || x.1.is_nan() { x } else { acc });
        Residuals { net, abs, scale, worst_node, worst }
    }

    fn factorize(&mut self) -> Result<Factor> {
        let nf = self.free_nodes.len();
        let not_spd = |e: &dyn std::fmt::Debug| {
            Error::Solver(format!(
                "reduced conductance matrix ({nf} free nodes) is not positive definite: {e:?}; \
                 check that every free node is connected to a pinned node and conductances are positive"
            ))
        };
        match &self.backend {
            Backend::Sparse(symbolic) => {
                let pattern = SymbolicSparseColMatRef::new_checked(nf, nf, &self.col_ptr, None, &self.row_idx);
                let matrix = SparseColMatRef::new(pattern, &self.values);
                SparseLlt::try_new_with_symbolic(symbolic.clone(), matrix, Side::Lower)
                    .map(Factor::Sparse)
                    .map_err(|e| not_spd(&e))
            }
            Backend::Dense => self.dense.llt(Side::Lower).map(Factor::Dense).map_err(|e| not_spd(&e)),
        }
    }

    /// Iterative refinement against the per-node relative KCL residual.
    fn refine(&mut self, factor: &Factor, conductances: &[f64], voltages: &mut [f64]) -> Result<()> {
        for round in 0..=MAX_REFINEMENTS {
            let res = self.residuals(conductances, voltages);
            self.keep_tolerances(&res);
            let Residuals { mut net, worst_node, worst, .. } = res;
            if !worst.is_finite() {
                return Err(Error::Solver(format!("non-finite residual at node {}", self.free_nodes[worst_node])));
            }
            if worst < SOLVE_TARGET || (round == MAX_REFINEMENTS && worst < KCL_TOLERANCE) {
                return Ok(());
            }
            if round == MAX_REFINEMENTS {
                return Err(Error::Solver(format!(
                    "KCL residual {worst:.3e} at node {} after {MAX_REFINEMENTS} refinements",
                    self.free_nodes[worst_node]
                )));
            }
            // `net` is b - A x in the reduced system.
            factor.solve_in_place(&mut net);
            for (k, &node) in self.free_nodes.iter().enumerate() {
                voltages[node] += net[k];
            }
        }
        unreachable!()
    }
}

/// One-shot solve with explicit boundary map and ground set.
pub fn solve_voltages(
    graph: &NetworkGraph,
    state: &EdgeState,
    boundary: &BTreeMap<usize, f64>,
    grounds: &BTreeSet<usize>,
) -> Result<CircuitSolution> {
    if boundary.is_empty() {
        return Err(Error::Empty("boundary voltage map"));
    }
    if let Some(&node) = boundary.keys().find(|k| grounds.contains(k)) {
        return Err(Error::BoundaryOverlap(node));
    }
    let sources: Vec<usize> = boundary.keys().copied().collect();
    let volts: Vec<f64> = boundary.values().copied().collect();
    let grounds: Vec<usize> = grounds.iter().copied().collect();
    NodalSolver::new(graph, &sources, &grounds)?.solve(state.conductances(), &volts)
}

/// A stepping session: solver, edge state and constants for one network.
#[derive(Debug)]
pub struct Circuit {
    solver: NodalSolver,
    state: EdgeState,
    params: MemristorParams,
}

impl Circuit {
    pub fn new(
        graph: &NetworkGraph,
        sources: &[usize],
        grounds: &[usize],
        params: MemristorParams,
        state: EdgeState,
    ) -> Result<Self> {
        params.validate()?;
        if state.len() != graph.n_edges() {
            return Err(Error::Dimension(format!(
                "edge state has {} entries for {} edges",
                state.len(),
                graph.n_edges()
            )));
        }
        Ok(Circuit { solver: NodalSolver::new(graph, sources, grounds)?, state, params })
    }

    /// Solves on the current conductances, then advances the edge state over
    /// `dt`. With `sub_steps > 1` the voltages are re-solved on each
    /// sub-interval. Returns the solution seen at the start of the step.
    pub fn step(&mut self, source_volts: &[f64], dt: f64) -> Result<CircuitSolution> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let h = dt / self.params.sub_steps as f64;
        let first = self.solver.solve(self.state.conductances(), source_volts)?;
        self.state.advance_once(&first.edge_drops, h, &self.params);
        for _ in 1..self.params.sub_steps {
            let sol = self.solver.solve(self.state.conductances(), source_volts)?;
            self.state.advance_once(&sol.edge_drops, h, &self.params);
        }
        Ok(first)
    }

    pub fn state(&self) -> &EdgeState {
        &self.state
    }

    pub fn set_state(&mut self, state: EdgeState) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::Dimension("edge state length changed".into()));
        }
        self.solver.reset_cache();
        self.state = state;
        Ok(())
    }

    pub fn into_state(self) -> EdgeState {
        self.state
    }

    pub fn params(&self) -> &MemristorParams {
        &self.params
    }

    pub fn solver(&self) -> &NodalSolver {
        &self.solver
    }
}

/// Pure single step: solve on `state`, then advance it.
pub fn step(
    graph: &NetworkGraph,
    state: &EdgeState,
    boundary: &BTreeMap<usize, f64>,
    grounds: &BTreeSet<usize>,
    dt: f64,
    params: &MemristorParams,
) -> Result<(CircuitSolution, EdgeState)> {
    if let Some(&node) = boundary.keys().find(|k| grounds.contains(k)) {
        return Err(Error::BoundaryOverlap(node));
    }
    let sources: Vec<usize> = boundary.keys().copied().collect();
    let volts: Vec<f64> = boundary.values().copied().collect();
    let grounds: Vec<usize> = grounds.iter().copied().collect();
    let mut circuit = Circuit::new(graph, &sources, &grounds, *params, state.clone())?;
    let solution = circuit.step(&volts, dt)?;
    Ok((solution, circuit.into_state()))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MemristorParams {
        MemristorParams::default()
    }

    fn state_with(g: &[f64]) -> EdgeState {
        EdgeState { s: vec![0.0; g.len()], g: g.to_vec() }
    }

    #[test]
    fn ohms_law_on_single_edge() {
        let graph = NetworkGraph::from_edges(2, [(0, 1)]).unwrap();
        let mut solver = NodalSolver::new(&graph, &[0], &[1]).unwrap();
        let sol = solver.solve(&[0.5], &[1.0]).unwrap();
        assert_eq!(sol.node_voltages, vec![1.0, 0.0]);
        assert_eq!(sol.edge_drops, vec![1.0]);
        assert_eq!(sol.source_currents[0], (0, 0.5));
        assert_eq!(sol.source_currents[1], (1, -0.5));
    }

    #[test]
    fn symmetric_divider() {
        let graph = NetworkGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let boundary = BTreeMap::from([(0, 1.0)]);
        let grounds = BTreeSet::from([2]);
        let sol = solve_voltages(&graph, &state_with(&[0.3, 0.3]), &boundary, &grounds).unwrap();
        assert!((sol.node_voltages[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_hand_solution() {
        // KCL at b: g_ab (1 - V_b) = g_bc V_b.
        let graph = NetworkGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let boundary = BTreeMap::from([(0, 1.0)]);
        let grounds = BTreeSet::from([2]);
        // Edge order after sorting: (0,1)=ab, (0,2)=ac, (1,2)=bc.
        let sol = solve_voltages(&graph, &state_with(&[1.0, 3.0, 2.0]), &boundary, &grounds).unwrap();
        assert!((sol.node_voltages[1] - 1.0 / 3.0).abs() < 1e-15);
        // Source delivers g_ab (1 - 1/3) + g_ac * 1.
        assert!((sol.source_currents[0].1 - (2.0 / 3.0 + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn overlapping_boundary_and_ground_rejected() {
        let graph = NetworkGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let boundary = BTreeMap::from([(0, 1.0)]);
        let grounds = BTreeSet::from([0]);
        assert!(matches!(
            solve_voltages(&graph, &state_with(&[1.0, 1.0]), &boundary, &grounds),
            Err(Error::BoundaryOverlap(0))
        ));
        assert!(NodalSolver::new(&graph, &[0], &[3]).is_err());
        assert!(NodalSolver::new(&graph, &[0], &[]).is_err());
    }

    #[test]
    fn pure_decay() {
        let p = MemristorParams { k_decay: 0.5, ..params() };
        let state = EdgeState::from_filaments(vec![0.5], &p).unwrap();
        let next = update_edges(&state, &[0.0], 1.0, &p).unwrap();
        assert!((next.filaments()[0] - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((next.filaments()[0] - 0.3033).abs() < 1e-4);
    }

    #[test]
    fn sub_threshold_empty_filament_stays_off() {
        let p = params();
        let state = EdgeState::pristine(3, &p);
        let next = update_edges(&state, &[0.01, -0.005, 0.0], 7.0, &p).unwrap();
        assert_eq!(next.filaments(), &[0.0, 0.0, 0.0]);
        assert_eq!(next.conductances(), &[p.g_off; 3]);
    }

    #[test]
    fn one_step_growth() {
        let p = MemristorParams { k_grow: 10.0, ..params() };
        let state = EdgeState::pristine(1, &p);
        let one = update_edges(&state, &[0.5], 0.005, &p).unwrap();
        assert!((one.filaments()[0] - 0.0245).abs() < 1e-15);
        let fine = MemristorParams { sub_steps: 100, ..p };
        let many = update_edges(&state, &[0.5], 0.005, &fine).unwrap();
        assert!((many.filaments()[0] - one.filaments()[0]).abs() < 1e-3);
    }

    #[test]
    fn bipolar_reverse_drop_erases() {
        let p = MemristorParams { polarity: Polarity::Bipolar, k_grow: 10.0, ..params() };
        let state = EdgeState::from_filaments(vec![0.5, 0.5], &p).unwrap();
        let next = update_edges(&state, &[0.11, -0.11], 0.1, &p).unwrap();
        assert!((next.filaments()[0] - 0.6).abs() < 1e-12);
        assert!((next.filaments()[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn active_fraction_counts_strictly_above_threshold() {
        assert_eq!(active_fraction(&[0.0; 4], 0.01).unwrap(), 0.0);
        assert_eq!(active_fraction(&[0.02, 0.005, -0.03, 0.0], 0.01).unwrap(), 0.5);
        assert!(active_fraction(&[], 0.01).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(MemristorParams { g_off: 1.0, g_on: 1.0, ..params() }.validate().is_err());
        assert!(MemristorParams { v_threshold: 0.0, ..params() }.validate().is_err());
        assert!(MemristorParams { sub_steps: 0, ..params() }.validate().is_err());
        assert!(MemristorParams { k_decay: -1.0, ..params() }.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn quiescent_network_stays_put() {
        let graph = NetworkGraph::random_connected(20, 40, 2).unwrap();
        let p = params();
        let state = EdgeState::pristine(graph.n_edges(), &p);
        let boundary = BTreeMap::from([(0, 0.0), (1, 0.0)]);
        let grounds = BTreeSet::from([5]);
        let (sol, next) = step(&graph, &state, &boundary, &grounds, 0.005, &p).unwrap();
        assert!(sol.node_voltages.iter().all(|&v| v == 0.0));
        assert_eq!(next, state);
    }

    #[test]
    fn single_junction_grows_then_fades() {
        let graph = NetworkGraph::from_edges(2, [(0, 1)]).unwrap();
        let p = params();
        let mut circuit = Circuit::new(&graph, &[0], &[1], p, EdgeState::pristine(1, &p)).unwrap();
        let mut last = 0.0;
        for _ in 0..200 {
            circuit.step(&[1.0], 0.005).unwrap();
            let s = circuit.state().filaments()[0];
            assert!(s >= last);
            last = s;
        }
        assert!(last > 0.0);
        for _ in 0..200 {
            circuit.step(&[0.0], 0.005).unwrap();
            let s = circuit.state().filaments()[0];
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn both_backends_meet_kcl_contract() {
        let graph = NetworkGraph::random_connected(60, 120, 9).unwrap();
        let complete = NetworkGraph::random_connected(60, 1770, 9).unwrap();
        for g in [&graph, &complete] {
            let cond: Vec<f64> = (0..g.n_edges()).map(|k| 0.01 + (k % 7) as f64 * 0.1).collect();
            let mut solver = NodalSolver::new(g, &[0, 1, 2], &[3]).unwrap();
            let sol = solver.solve(&cond, &[0.3, -0.2, 0.1]).unwrap();
            let res = kcl_residual(g, &cond, &sol.node_voltages, &[0, 1, 2, 3]);
            assert!(res < KCL_TOLERANCE, "{res}");
        }
    }
}
