//! Time-ordered propagation of `H(t) = Σ_k c_k(t) H_k` with fixed Hermitian
//! terms `H_k` and real coefficients.
//!
//! Each step is a fourth-order commutator-free Magnus step (two exponentials
//! at the Gauss–Legendre nodes). Exponentials act on blocks of columns via a
//! scaled Taylor series, so nothing larger than the sparse terms is ever
//! formed. The union sparsity graph of the terms is split into connected
//! components that are propagated independently; instantaneous kicks are
//! diagonal and therefore never couple components.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gram_residual, max_abs, CMatrix, SparseMatrix, C64, ONE, ZERO};

const HERMITIAN_TOL: f64 = 1e-12;
const TAYLOR_TOL: f64 = 1e-17;
const TAYLOR_MAX_TERMS: usize = 60;
// Per-substep bound on `τ‖H‖∞`.
const TAYLOR_SUBSTEP_NORM: f64 = 2.0;

type Coefficients = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// Time-dependent Hermitian operator given as a real linear combination of
/// fixed Hermitian terms.
#[derive(Clone)]
pub struct DrivenHamiltonian {
    dim: usize,
    terms: Vec<SparseMatrix>,
    coefficients: Arc<Coefficients>,
}

impl std::fmt::Debug for DrivenHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DrivenHamiltonian")
            .field("dim", &self.dim)
            .field("terms", &self.terms.len())
            .finish()
    }
}

impl DrivenHamiltonian {
    pub fn new<F>(terms: Vec<SparseMatrix>, coefficients: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        let dim = terms
            .first()
            .map(|t| t.nrows())
            .ok_or_else(|| Error::InvalidParameter {
                name: "terms",
                reason: "at least one term is required".into(),
            })?;
        for (k, term) in terms.iter().enumerate() {
            if term.nrows() != dim || term.ncols() != dim {
                return Err(Error::Dimension {
                    expected: format!("{dim}x{dim}"),
                    found: format!("{}x{}", term.nrows(), term.ncols()),
                });
            }
            if !term.is_hermitian(HERMITIAN_TOL) {
                return Err(Error::NonHermitian(format!("term {k}")));
            }
        }
        Ok(DrivenHamiltonian {
            dim,
            terms,
            coefficients: Arc::new(coefficients),
        })
    }

    /// Time-independent operator.
    pub fn constant(h: SparseMatrix) -> Result<Self> {
        Self::new(vec![h], |_, out| out[0] = 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[SparseMatrix] {
        &self.terms
    }

    pub fn coefficients_at(&self, t: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.terms.len()];
        (self.coefficients)(t, &mut c);
        c
    }

    pub fn at(&self, t: f64) -> SparseMatrix {
        let c = self.coefficients_at(t);
        let triplets = self
            .terms
            .iter()
            .zip(&c)
            .flat_map(|(term, &ck)| term.iter().map(move |(r, col, v)| (r, col, v * ck)));
        SparseMatrix::from_triplets(self.dim, self.dim, triplets)
    }

    pub fn dense_at(&self, t: f64) -> CMatrix {
        self.at(t).to_dense()
    }
}

/// Instantaneous diagonal unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalUnitary {
    phases: Vec<C64>,
}

impl DiagonalUnitary {
    pub fn new(phases: Vec<C64>) -> Self {
        DiagonalUnitary { phases }
    }

    pub fn identity(dim: usize) -> Self {
        DiagonalUnitary {
            phases: vec![ONE; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[C64] {
        &self.phases
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.phases.iter().all(|z| (z.norm() - 1.0).abs() <= tol)
    }

    /// `self ⊗ 1_n`.
    pub fn tensor_identity(&self, n: usize) -> Self {
        DiagonalUnitary {
            phases: self
                .phases
                .iter()
                .flat_map(|&z| std::iter::repeat_n(z, n))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.phases))
    }

    pub fn apply(&self, state: &mut CMatrix) {
        for (r, &z) in self.phases.iter().enumerate() {
            state.row_mut(r).iter_mut().for_each(|v| *v *= z);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kick: Option<DiagonalUnitary>,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Segment {
            start,
            end,
            kick: None,
        }
    }

    /// Applies `kick` at the end of the segment.
    pub fn then(mut self, kick: DiagonalUnitary) -> Self {
        self.kick = Some(kick);
        self
    }
}

/// Contiguous integration segments, each optionally followed by a kick.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Self {
        Schedule { segments }
    }

    pub fn single(start: f64, end: f64) -> Self {
        Schedule::new(vec![Segment::new(start, end)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Maps every kick through `f` (e.g. to lift it onto a larger space).
    pub fn map_kicks(&self, f: impl Fn(&DiagonalUnitary) -> DiagonalUnitary) -> Self {
        Schedule {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start: s.start,
                    end: s.end,
                    kick: s.kick.as_ref().map(&f),
                })
                .collect(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: "no segments".into(),
            });
        }
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.end > s.start) {
                return Err(Error::InvalidParameter {
                    name: "schedule",
                    reason: format!("segment {k} has end {} <= start {}", s.end, s.start),
                });
            }
            if k > 0 && self.segments[k - 1].end != s.start {
                return Err(Error::InvalidParameter {
                    name: "schedule",
                    reason: format!("segment {k} does not start where segment {} ends", k - 1),
                });
            }
            if let Some(kick) = &s.kick {
                if kick.dim() != dim {
                    return Err(Error::Dimension {
                        expected: dim.to_string(),
                        found: kick.dim().to_string(),
                    });
                }
                if !kick.is_unitary(1e-12) {
                    return Err(Error::InvalidParameter {
                        name: "kick",
                        reason: format!("kick after segment {k} is not unitary"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PropagationOptions {
    /// Steps per segment; rounded up to an even number.
    pub steps_per_segment: usize,
    /// Allowed Frobenius norm of `X†X - X0†X0` at the end of the run.
    pub unitarity_tol: f64,
    pub store_trajectory: bool,
    /// Rows whose summed population is integrated over time for each column.
    pub tracked_rows: Vec<usize>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            steps_per_segment: 2000,
            unitarity_tol: 1e-9,
            store_trajectory: false,
            tracked_rows: Vec::new(),
        }
    }
}

impl PropagationOptions {
    pub fn with_steps(steps_per_segment: usize) -> Self {
        PropagationOptions {
            steps_per_segment,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub state: CMatrix,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<usize>,
    pub state_differences: Vec<f64>,
    pub metric_differences: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    /// Propagated columns; the full propagator when started from identity.
    pub state: CMatrix,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    /// Per column, `∫ Σ_{tracked rows} |x_r(t)|² dt` (composite Simpson).
    pub occupation_time: Vec<f64>,
    pub unitarity_residual: f64,
    pub steps_per_segment: usize,
    pub convergence: Option<ConvergenceReport>,
}

/// Evolves `initial` (columns) through `schedule`.
pub fn propagate(
    h: &DrivenHamiltonian,
    schedule: &Schedule,
    initial: &CMatrix,
    opts: &PropagationOptions,
) -> Result<EvolutionResult> {
    let dim = h.dim();
    if initial.nrows() != dim {
        return Err(Error::Dimension {
            expected: format!("{dim} rows"),
            found: format!("{} rows", initial.nrows()),
        });
    }
    schedule.validate(dim)?;
    if opts.steps_per_segment == 0 {
        return Err(Error::InvalidParameter {
            name: "steps_per_segment",
            reason: "must be positive".into(),
        });
    }
    if let Some(&bad) = opts.tracked_rows.iter().find(|&&r| r >= dim) {
        return Err(Error::InvalidParameter {
            name: "tracked_rows",
            reason: format!("row {bad} out of range for dimension {dim}"),
        });
    }
    let steps = opts.steps_per_segment + opts.steps_per_segment % 2;

    let ncols = initial.ncols();
    let mut state = CMatrix::zeros(dim, ncols);
    let mut occupation = vec![0.0; ncols];
    let n_points = schedule.segments().len() * (steps + 1);
    let mut trajectory: Option<Vec<TrajectoryPoint>> = opts.store_trajectory.then(|| {
        let mut points = Vec::with_capacity(n_points);
        for seg in schedule.segments() {
            let dt = (seg.end - seg.start) / steps as f64;
            for k in 0..=steps {
                points.push(TrajectoryPoint {
                    time: seg.start + k as f64 * dt,
                    state: CMatrix::zeros(dim, ncols),
                });
            }
        }
        points
    });

    for component in Component::split(h) {
        let active: Vec<usize> = (0..ncols)
            .filter(|&j| component.rows.iter().any(|&r| initial[(r, j)] != ZERO))
            .collect();
        if active.is_empty() {
            continue;
        }
        let mut local = CMatrix::from_fn(component.rows.len(), active.len(), |r, j| {
            initial[(component.rows[r], active[j])]
        });
        let tracked: Vec<usize> = component
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| opts.tracked_rows.contains(r))
            .map(|(i, _)| i)
            .collect();
        let mut stepper = Stepper::new(&component, h, active.len());
        let mut point = 0;

        for seg in schedule.segments() {
            let dt = (seg.end - seg.start) / steps as f64;
            let mut populations = Vec::with_capacity(steps + 1);
            let mut record = |local: &CMatrix, point: usize, populations: &mut Vec<Vec<f64>>| {
                if !tracked.is_empty() {
                    populations.push(tracked_populations(local, &tracked));
                }
                if let Some(traj) = trajectory.as_mut() {
                    let target = &mut traj[point].state;
                    for (li, &gi) in component.rows.iter().enumerate() {
                        for (lj, &gj) in active.iter().enumerate() {
                            target[(gi, gj)] = local[(li, lj)];
                        }
                    }
                }
            };
            record(&local, point, &mut populations);
            point += 1;
            for k in 0..steps {
                stepper.cfm4_step(h, seg.start + k as f64 * dt, dt, &mut local);
                record(&local, point, &mut populations);
                point += 1;
            }
            if !tracked.is_empty() {
                for (lj, &gj) in active.iter().enumerate() {
                    let samples: Vec<f64> = populations.iter().map(|p| p[lj]).collect();
                    occupation[gj] += simpson(&samples, dt);
                }
            }
            if let Some(kick) = &seg.kick {
                for (li, &gi) in component.rows.iter().enumerate() {
                    let z = kick.phases()[gi];
                    local.row_mut(li).iter_mut().for_each(|v| *v *= z);
                }
            }
        }

        for (li, &gi) in component.rows.iter().enumerate() {
            for (lj, &gj) in active.iter().enumerate() {
                state[(gi, gj)] = local[(li, lj)];
            }
        }
    }

    let unitarity_residual = gram_residual(&state, &(initial.adjoint() * initial));
    if !(unitarity_residual <= opts.unitarity_tol) {
        return Err(Error::Unitarity {
            residual: unitarity_residual,
            tolerance: opts.unitarity_tol,
        });
    }

    Ok(EvolutionResult {
        state,
        trajectory,
        occupation_time: occupation,
        unitarity_residual,
        steps_per_segment: steps,
        convergence: None,
    })
}

/// Full propagator: [`propagate`] starting from the identity.
pub fn propagator(
    h: &DrivenHamiltonian,
    schedule: &Schedule,
    opts: &PropagationOptions,
) -> Result<EvolutionResult> {
    propagate(h, schedule, &CMatrix::identity(h.dim(), h.dim()), opts)
}

/// Repeats a run at twice the step count and compares both the final
/// columns and a scalar downstream metric. Report-only.
pub fn convergence_certify<F>(steps: usize, tolerance: f64, mut run: F) -> Result<ConvergenceReport>
where
    F: FnMut(usize) -> Result<(CMatrix, f64)>,
{
    let (coarse, coarse_metric) = run(steps)?;
    let (fine, fine_metric) = run(2 * steps)?;
    let state_difference = max_abs(&(&fine - &coarse));
    let metric_difference = (fine_metric - coarse_metric).abs();
    Ok(ConvergenceReport {
        steps: vec![steps, 2 * steps],
        state_differences: vec![state_difference],
        metric_differences: vec![metric_difference],
        tolerance,
        passed: state_difference < tolerance && metric_difference < tolerance,
    })
}

/// Doubles the step count until successive final states agree to
/// `tolerance` (max entry modulus); returns the finest run with its record.
pub fn propagate_converged(
    h: &DrivenHamiltonian,
    schedule: &Schedule,
    initial: &CMatrix,
    opts: &PropagationOptions,
    tolerance: f64,
    max_refinements: usize,
) -> Result<EvolutionResult> {
    let mut current = propagate(h, schedule, initial, opts)?;
    let mut steps = vec![current.steps_per_segment];
    let mut diffs = Vec::new();
    for _ in 0..max_refinements {
        let finer_opts = PropagationOptions {
            steps_per_segment: 2 * current.steps_per_segment,
            ..opts.clone()
        };
        let finer = propagate(h, schedule, initial, &finer_opts)?;
        let diff = max_abs(&(&finer.state - &current.state));
        steps.push(finer.steps_per_segment);
        diffs.push(diff);
        current = finer;
        if diff < tolerance {
            current.convergence = Some(ConvergenceReport {
                steps,
                state_differences: diffs,
                metric_differences: Vec::new(),
                tolerance,
                passed: true,
            });
            return Ok(current);
        }
    }
    Err(Error::Convergence {
        refinements: max_refinements,
        difference: diffs.last().copied().unwrap_or(f64::INFINITY),
    })
}

fn tracked_populations(local: &CMatrix, tracked: &[usize]) -> Vec<f64> {
    (0..local.ncols())
        .map(|j| tracked.iter().map(|&r| local[(r, j)].norm_sqr()).sum())
        .collect()
}

/// Composite Simpson on an even number of intervals.
fn simpson(samples: &[f64], dt: f64) -> f64 {
    let n = samples.len() - 1;
    debug_assert!(n % 2 == 0);
    let interior: f64 = samples[1..n]
        .iter()
        .enumerate()
        .map(|(i, &v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    (samples[0] + samples[n] + interior) * dt / 3.0
}

/// Rows of one connected block of the union sparsity graph, with the term
/// values laid out on a shared local pattern.
struct Component {
    rows: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    term_values: Vec<Vec<C64>>,
}

impl Component {
    fn split(h: &DrivenHamiltonian) -> Vec<Component> {
        let dim = h.dim();
        let mut parent: Vec<usize> = (0..dim).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for term in h.terms() {
            for (r, c, _) in term.iter() {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of_root = vec![usize::MAX; dim];
        for r in 0..dim {
            let root = find(&mut parent, r);
            if group_of_root[root] == usize::MAX {
                group_of_root[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[group_of_root[root]].push(r);
        }

        groups
            .into_iter()
            .map(|rows| {
                let mut local_of = std::collections::HashMap::with_capacity(rows.len());
                for (i, &r) in rows.iter().enumerate() {
                    local_of.insert(r, i);
                }
                let mut row_ptr = vec![0];
                let mut col_idx = Vec::new();
                let mut term_values: Vec<Vec<C64>> = vec![Vec::new(); h.terms().len()];
                for &r in &rows {
                    let mut cols: Vec<usize> = h
                        .terms()
                        .iter()
                        .flat_map(|t| t.iter().filter(move |e| e.0 == r).map(|e| e.1))
                        .chain(std::iter::once(r))
                        .collect();
                    cols.sort_unstable();
                    cols.dedup();
                    for &c in &cols {
                        col_idx.push(local_of[&c]);
                        for (k, t) in h.terms().iter().enumerate() {
                            term_values[k].push(t.get(r, c));
                        }
                    }
                    row_ptr.push(col_idx.len());
                }
                Component {
                    rows,
                    row_ptr,
                    col_idx,
                    term_values,
                }
            })
            .collect()
    }
}

struct Stepper<'a> {
    component: &'a Component,
    coef_a: Vec<f64>,
    coef_b: Vec<f64>,
    combined: Vec<C64>,
    term: CMatrix,
    next: CMatrix,
}

impl<'a> Stepper<'a> {
    fn new(component: &'a Component, h: &DrivenHamiltonian, ncols: usize) -> Self {
        let n = component.rows.len();
        Stepper {
            component,
            coef_a: vec![0.0; h.terms().len()],
            coef_b: vec![0.0; h.terms().len()],
            combined: vec![ZERO; component.col_idx.len()],
            term: CMatrix::zeros(n, ncols),
            next: CMatrix::zeros(n, ncols),
        }
    }

    fn cfm4_step(&mut self, h: &DrivenHamiltonian, t: f64, dt: f64, x: &mut CMatrix) {
        let r3 = 3f64.sqrt();
        let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
        let (w1, w2) = (0.25 + r3 / 6.0, 0.25 - r3 / 6.0);
        (h.coefficients)(t + c1 * dt, &mut self.coef_a);
        (h.coefficients)(t + c2 * dt, &mut self.coef_b);
        // Earlier node weighted more heavily in the first exponential.
        self.combine(w1, w2);
        self.expmv(dt, x);
        self.combine(w2, w1);
        self.expmv(dt, x);
    }

    fn combine(&mut self, wa: f64, wb: f64) {
        self.combined.iter_mut().for_each(|v| *v = ZERO);
        for (k, values) in self.component.term_values.iter().enumerate() {
            let c = wa * self.coef_a[k] + wb * self.coef_b[k];
            if c == 0.0 {
                continue;
            }
            for (dst, &v) in self.combined.iter_mut().zip(values) {
                *dst += v * c;
            }
        }
    }

    /// `x <- exp(-i dt H) x` for the combined operator. The Taylor series is
    /// applied to `H - μ`, with `μ` the centre of the Gershgorin interval.
    fn expmv(&mut self, dt: f64, x: &mut CMatrix) {
        let comp = self.component;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..comp.rows.len() {
            let mut diag = 0.0;
            let mut radius = 0.0;
            for k in comp.row_ptr[r]..comp.row_ptr[r + 1] {
                if comp.col_idx[k] == r {
                    diag = self.combined[k].re;
                } else {
                    radius += self.combined[k].norm();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        let shift = 0.5 * (lo + hi);
        let norm = 0.5 * (hi - lo);
        if norm > 0.0 {
            for r in 0..comp.rows.len() {
                for k in comp.row_ptr[r]..comp.row_ptr[r + 1] {
                    if comp.col_idx[k] == r {
                        self.combined[k] -= shift;
                    }
                }
            }
            let substeps = ((dt * norm / TAYLOR_SUBSTEP_NORM).ceil() as usize).max(1);
            let tau = dt / substeps as f64;
            for _ in 0..substeps {
                self.term.copy_from(x);
                for j in 1..=TAYLOR_MAX_TERMS {
                    sparse_mul_into(comp, &self.combined, &self.term, &mut self.next);
                    let factor = C64::new(0.0, -tau / j as f64);
                    self.next.iter_mut().for_each(|v| *v *= factor);
                    *x += &self.next;
                    std::mem::swap(&mut self.term, &mut self.next);
                    if max_abs(&self.term) <= TAYLOR_TOL * max_abs(x) {
                        break;
                    }
                }
            }
        }
        if shift != 0.0 {
            let phase = C64::from_polar(1.0, -dt * shift);
            x.iter_mut().for_each(|v| *v *= phase);
        }
    }
}

fn sparse_mul_into(comp: &Component, values: &[C64], src: &CMatrix, dst: &mut CMatrix) {
    let n = comp.rows.len();
    for j in 0..src.ncols() {
        let s = src.column(j);
        let mut d = dst.column_mut(j);
        for r in 0..n {
            let mut acc = ZERO;
            for k in comp.row_ptr[r]..comp.row_ptr[r + 1] {
                acc += values[k] * s[comp.col_idx[k]];
            }
            d[r] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        // Small deterministic LCG; only used to get a generic matrix.
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let h = DrivenHamiltonian::constant(SparseMatrix::zeros(3, 3)).unwrap();
        let r = propagator(
            &h,
            &Schedule::single(0.0, 2.0),
            &PropagationOptions::with_steps(4),
        )
        .unwrap();
        assert_eq!(r.state, CMatrix::identity(3, 3));
    }

    #[test]
    fn constant_hamiltonian_matches_matrix_exponential() {
        let hd = random_hermitian(6, 7) * C64::new(3.0, 0.0);
        let h = DrivenHamiltonian::constant(SparseMatrix::from_dense(&hd)).unwrap();
        let r = propagator(
            &h,
            &Schedule::single(0.0, 1.3),
            &PropagationOptions::with_steps(10),
        )
        .unwrap();
        let exact = (hd * (-I * 1.3)).exp();
        assert!(max_abs(&(r.state - exact)) < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian_terms() {
        let bad = SparseMatrix::from_triplets(2, 2, [(0, 1, ONE)]);
        assert!(matches!(
            DrivenHamiltonian::constant(bad),
            Err(Error::NonHermitian(_))
        ));
    }

    #[test]
    fn rejects_broken_schedules() {
        let h = DrivenHamiltonian::constant(SparseMatrix::identity(2)).unwrap();
        let gap = Schedule::new(vec![Segment::new(0.0, 1.0), Segment::new(1.5, 2.0)]);
        assert!(propagator(&h, &gap, &Default::default()).is_err());
        let bad_kick = Schedule::new(vec![
            Segment::new(0.0, 1.0).then(DiagonalUnitary::new(vec![ONE, ONE * 2.0]))
        ]);
        assert!(propagator(&h, &bad_kick, &Default::default()).is_err());
    }

    #[test]
    fn resonant_pi_pulse_inverts_two_level_system() {
        // sin² envelope with area π.
        let x = SparseMatrix::from_triplets(2, 2, [(0, 1, ONE * 0.5), (1, 0, ONE * 0.5)]);
        let h = DrivenHamiltonian::new(vec![x], |t, out| {
            out[0] = 2.0 * std::f64::consts::PI * (std::f64::consts::PI * t).sin().powi(2);
        })
        .unwrap();
        let r = propagator(
            &h,
            &Schedule::single(0.0, 1.0),
            &PropagationOptions::with_steps(400),
        )
        .unwrap();
        assert!((r.state[(1, 0)].norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let a = SparseMatrix::from_dense(&random_hermitian(4, 1));
        let b = SparseMatrix::from_dense(&random_hermitian(4, 2));
        let h = DrivenHamiltonian::new(vec![a, b], |t, out| {
            out[0] = 3.0;
            out[1] = 4.0 * (5.0 * t).cos();
        })
        .unwrap();
        let sched = Schedule::single(0.0, 1.0);
        let run = |n| {
            propagator(&h, &sched, &PropagationOptions::with_steps(n))
                .unwrap()
                .state
        };
        let reference = run(2048);
        let e1 = max_abs(&(run(32) - &reference));
        let e2 = max_abs(&(run(64) - &reference));
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn components_propagate_independently() {
        // Two decoupled blocks; an input living only in the first block must
        // never leak into the second.
        let h = SparseMatrix::from_triplets(
            4,
            4,
            [(0, 1, ONE), (1, 0, ONE), (2, 3, I), (3, 2, -I), (2, 2, ONE)],
        );
        let h = DrivenHamiltonian::constant(h).unwrap();
        let mut x0 = CMatrix::zeros(4, 1);
        x0[0] = ONE;
        let r = propagate(
            &h,
            &Schedule::single(0.0, 1.0),
            &x0,
            &PropagationOptions::with_steps(20),
        )
        .unwrap();
        assert_eq!(r.state[2], ZERO);
        assert_eq!(r.state[3], ZERO);
        assert!((r.state[0] - C64::new(1f64.cos(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn occupation_time_of_rabi_cycle() {
        // Constant drive Ω σx/2 starting in |0>: P1(t) = sin²(Ωt/2), so
        // ∫₀^τ P1 = τ/2 - sin(Ωτ)/(2Ω).
        let omega = 3.0;
        let x = SparseMatrix::from_triplets(
            2,
            2,
            [(0, 1, ONE * 0.5 * omega), (1, 0, ONE * 0.5 * omega)],
        );
        let h = DrivenHamiltonian::constant(x).unwrap();
        let mut x0 = CMatrix::zeros(2, 1);
        x0[0] = ONE;
        let opts = PropagationOptions {
            steps_per_segment: 1000,
            tracked_rows: vec![1],
            ..Default::default()
        };
        let r = propagate(&h, &Schedule::single(0.0, 1.7), &x0, &opts).unwrap();
        let exact = 1.7 / 2.0 - (omega * 1.7).sin() / (2.0 * omega);
        let err = (r.occupation_time[0] - exact).abs();
        assert!(err < 1e-11, "{err:e}");
    }

    #[test]
    fn certify_flags_coarse_steps() {
        let a = SparseMatrix::from_dense(&random_hermitian(3, 5));
        let h = DrivenHamiltonian::new(vec![a], |t, out| out[0] = 20.0 * (3.0 * t).sin()).unwrap();
        let sched = Schedule::single(0.0, 1.0);
        let run = |n: usize| -> Result<(CMatrix, f64)> {
            let r = propagator(&h, &sched, &PropagationOptions::with_steps(n))?;
            let metric = r.state[(0, 0)].norm();
            Ok((r.state, metric))
        };
        assert!(!convergence_certify(4, 1e-8, run).unwrap().passed);
        assert!(convergence_certify(400, 1e-8, run).unwrap().passed);
    }

    #[test]
    fn converged_propagation_records_decreasing_differences() {
        let a = SparseMatrix::from_dense(&random_hermitian(3, 9));
        let h = DrivenHamiltonian::new(vec![a], |t, out| out[0] = 10.0 * (2.0 * t).cos()).unwrap();
        let r = propagate_converged(
            &h,
            &Schedule::single(0.0, 1.0),
            &CMatrix::identity(3, 3),
            &PropagationOptions::with_steps(8),
            1e-10,
            8,
        )
        .unwrap();
        let rec = r.convergence.unwrap();
        assert!(rec.state_differences.windows(2).all(|w| w[1] < w[0]));
    }
}
