//! Multidimensional orthogonal matching pursuit.
//!
//! Each greedy iteration picks the atom maximizing the normalized
//! correlation with the residual. The maximization starts from the best
//! point of a coarse exhaustive search (plus caller hints) and refines by
//! cyclic one-dimensional sweeps. All selected coefficients are then refit
//! jointly by least squares.

mod operator;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dict::DictionarySet;
use crate::estimate::ChannelEstimate;
use crate::signal::{MeasurementBatch, PathOrder, PathParams};
use crate::Result;

pub use operator::{coarse_strides, AtomOperator, Index5};

/// Solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Maximum alternating-maximization sweeps per greedy iteration.
    pub refine_sweeps: usize,
    /// Atom budget of the coarse exhaustive search.
    pub coarse_budget: usize,
    /// Number of best starting points refined by sweeps.
    pub n_starts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            refine_sweeps: 3,
            coarse_budget: 2_000_000,
            n_starts: 2,
        }
    }
}

pub struct MompProblem<'a> {
    pub batch: &'a MeasurementBatch,
    pub dict: &'a DictionarySet,
    pub n_paths: usize,
    pub options: SolverOptions,
    /// Extra starting points, e.g. previous-frame paths.
    pub hints: Vec<Index5>,
}

impl<'a> MompProblem<'a> {
    pub fn new(batch: &'a MeasurementBatch, dict: &'a DictionarySet, n_paths: usize) -> Self {
        Self {
            batch,
            dict,
            n_paths,
            options: SolverOptions::default(),
            hints: Vec::new(),
        }
    }
}

/// Per-frame solver record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Sweeps run in each greedy iteration.
    pub sweeps: Vec<usize>,
    /// Residual norm before the first and after every accepted atom.
    pub residual_curve: Vec<f64>,
    pub atoms: Vec<Index5>,
    /// Atoms rejected because they made the refit rank deficient.
    pub dropped: Vec<Index5>,
    /// Atom scores computed.
    pub evaluations: u64,
    /// `∏ N_k^a` of the dictionaries searched.
    pub search_space: f64,
    pub coarse_strides: [usize; 5],
    pub below_noise_floor: bool,
}

#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub atoms: Vec<Index5>,
    pub coeffs: Vec<Complex64>,
    pub residual_norm: f64,
    pub params: Vec<PathParams>,
    pub diagnostics: Diagnostics,
}

/// Distinct atoms tried per requested path before giving up on rank
/// deficiencies.
const MAX_ATTEMPTS_PER_PATH: usize = 3;

/// Relative pivot threshold for declaring refit columns dependent.
const RANK_TOL: f64 = 1e-9;

/// Joint least squares `min ‖y − A x‖`; `None` when the newest column is
/// numerically dependent on the others.
fn refit(cols: &[DVector<Complex64>], y: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let a = DMatrix::from_columns(cols);
    let qr = a.qr();
    let r = qr.r();
    let k = cols.len() - 1;
    let scale = cols[k].norm();
    if scale == 0.0 || r[(k, k)].norm() <= RANK_TOL * scale {
        return None;
    }
    let qty = qr.q().adjoint() * y;
    r.solve_upper_triangular(&qty)
}

fn unstack(v: &DVector<Complex64>, m: usize, c: usize, q: usize) -> Vec<DMatrix<Complex64>> {
    (0..m)
        .map(|i| DMatrix::from_column_slice(c, q, &v.as_slice()[i * c * q..(i + 1) * c * q]))
        .collect()
}

fn excluded_along(excluded: &[Index5], j: Index5, k: usize, a: usize) -> bool {
    excluded
        .iter()
        .any(|s| s[k] == a && (0..5).all(|d| d == k || s[d] == j[d]))
}

/// Cyclic coordinate ascent from `start`; moves only on strict improvement.
fn refine(
    op: &AtomOperator<'_>,
    resid: &[DMatrix<Complex64>],
    start: Index5,
    start_score: f64,
    sweeps: usize,
    excluded: &[Index5],
) -> (Index5, f64, usize) {
    let mut j = start;
    let mut best = start_score;
    let mut done = 0;
    for _ in 0..sweeps {
        done += 1;
        let mut changed = false;
        for k in 0..5 {
            let scores = op.scan(resid, j, k);
            let mut arg = j[k];
            let mut top = best;
            for (a, &s) in scores.iter().enumerate() {
                if s > top && !excluded_along(excluded, j, k, a) {
                    top = s;
                    arg = a;
                }
            }
            if arg != j[k] {
                j[k] = arg;
                best = top;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (j, best, done)
}

/// Greedy selection of `n_paths` atoms with joint refits.
pub fn momp_solve(p: &MompProblem<'_>) -> Result<SparseSolution> {
    let op = AtomOperator::new(p.batch, p.dict)?;
    let (m, c, q) = (op.m, op.c, op.q);
    let y = p.batch.stacked();
    let sizes = p.dict.sizes();
    let strides = coarse_strides(sizes, p.options.coarse_budget);
    let noise_floor = p.batch.cfg.noise_psd * y.len() as f64 * 1.05;

    let mut diag = Diagnostics {
        search_space: p.dict.atom_count(),
        coarse_strides: strides,
        residual_curve: vec![y.norm()],
        ..Default::default()
    };
    let mut atoms: Vec<Index5> = Vec::new();
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    let mut coeffs = DVector::<Complex64>::zeros(0);
    let mut resid_vec = y.clone();
    let mut excluded: Vec<Index5> = Vec::new();
    let total: usize = sizes.iter().product();
    let target = p.n_paths.min(total);
    let mut attempts = 0;

    while atoms.len() < target && attempts < MAX_ATTEMPTS_PER_PATH * target.max(1) {
        attempts += 1;
        if resid_vec.norm_squared() < noise_floor {
            diag.below_noise_floor = true;
        }
        let resid = unstack(&resid_vec, m, c, q);

        let mut starts: Vec<(Index5, f64)> = Vec::new();
        if let Some(best) = op.coarse_search(&resid, strides, &excluded) {
            starts.push(best);
        }
        for &h in &p.hints {
            if p.dict.check_index(h).is_ok() && !excluded.contains(&h) {
                starts.push((h, op.score(&resid, h)));
            }
        }
        starts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        starts.dedup_by(|a, b| a.0 == b.0);
        starts.truncate(p.options.n_starts.max(1));

        let mut chosen: Option<(Index5, f64)> = None;
        let mut sweeps = 0;
        for (s, score) in starts {
            let (j, sc, n) = refine(&op, &resid, s, score, p.options.refine_sweeps, &excluded);
            sweeps += n;
            if operator::better(sc, j, chosen) {
                chosen = Some((j, sc));
            }
        }
        diag.sweeps.push(sweeps);
        diag.iterations += 1;
        let Some((j, _)) = chosen else { break };

        excluded.push(j);
        cols.push(op.apply_atom(j)?);
        match refit(&cols, &y) {
            Some(x) => {
                atoms.push(j);
                resid_vec = &y - DMatrix::from_columns(&cols) * &x;
                coeffs = x;
                diag.residual_curve.push(resid_vec.norm());
            }
            None => {
                cols.pop();
                diag.dropped.push(j);
            }
        }
    }
    if resid_vec.norm_squared() < noise_floor {
        diag.below_noise_floor = true;
    }
    diag.atoms = atoms.clone();
    diag.evaluations = op.evaluations();

    let coeffs: Vec<Complex64> = coeffs.iter().copied().collect();
    let params = decode_paths(p.dict, &atoms, &coeffs);
    Ok(SparseSolution {
        atoms,
        coeffs,
        residual_norm: resid_vec.norm(),
        params,
        diagnostics: diag,
    })
}

fn decode_paths(dict: &DictionarySet, atoms: &[Index5], coeffs: &[Complex64]) -> Vec<PathParams> {
    let mut params: Vec<PathParams> = atoms
        .iter()
        .zip(coeffs)
        .map(|(&j, &gain)| {
            let a = dict.decode(j);
            PathParams {
                gain,
                toa: a.toa,
                tdoa: 0.0,
                doa_az: a.doa_az,
                doa_el: a.doa_el,
                dod_az: a.dod_az,
                dod_el: a.dod_el,
                order: PathOrder::Unknown,
            }
        })
        .collect();
    let t_min = params.iter().map(|p| p.toa).fold(f64::INFINITY, f64::min);
    for p in &mut params {
        p.tdoa = p.toa - t_min;
    }
    params
}

/// `batch` with the fitted atoms of `sol` (selected from `dict`) removed.
pub fn residual_batch(batch: &MeasurementBatch, dict: &DictionarySet, sol: &SparseSolution) -> Result<MeasurementBatch> {
    let op = AtomOperator::new(batch, dict)?;
    let mut r = batch.stacked();
    for (&j, &g) in sol.atoms.iter().zip(&sol.coeffs) {
        r -= op.apply_atom(j)? * g;
    }
    Ok(MeasurementBatch {
        y: unstack(&r, op.m, op.c, op.q),
        beams: batch.beams.clone(),
        cfg: batch.cfg.clone(),
    })
}

/// Runs the solver and packages the result as a [`ChannelEstimate`].
pub fn estimate_channel(p: &MompProblem<'_>, t: f64) -> Result<(ChannelEstimate, SparseSolution)> {
    let sol = momp_solve(p)?;
    let mut est = ChannelEstimate::from_paths(t, sol.params.clone());
    est.below_noise_floor = sol.diagnostics.below_noise_floor;
    Ok((est, sol))
}
