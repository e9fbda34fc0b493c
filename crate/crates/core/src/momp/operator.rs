//! Structured evaluation of measurement-domain atoms.
//!
//! For measurement `m`, combiner column `c` and pilot sample `q`, atom `j`
//! contributes
//!
//! ```text
//! A_m[c, q] = √P_t · rx_mc(j3, j4) · tx_m(j1, j2) · g_m(j5)[q]
//! tx_m  = Σ_ix Σ_iy Ψ1[ix, j1] Ψ2[iy, j2] F_m[ix, iy]
//! rx_mc = Σ_ix Σ_iy Ψ3[ix, j3] Ψ4[iy, j4] conj(W̆_m[ix, iy, c])
//! g_m   = pilot convolution of Ψ5[:, j5]
//! ```
//!
//! Nothing of size `∏ N_k^s` is ever formed.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dict::DictionarySet;
use crate::signal::{pilot_convolve, MeasurementBatch};
use crate::{Error, Result};

pub type Index5 = [usize; 5];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub struct AtomOperator<'a> {
    pub(crate) dict: &'a DictionarySet,
    pub(crate) m: usize,
    pub(crate) c: usize,
    pub(crate) q: usize,
    amp: f64,
    /// Precoder `m` reshaped `N_t^x × N_t^y`.
    prec: Vec<DMatrix<Complex64>>,
    /// Conjugated whitened combiner column `(m, c)` reshaped `N_r^x × N_r^y`.
    comb: Vec<Vec<DMatrix<Complex64>>>,
    /// Pilot group of each measurement.
    pilot_of: Vec<usize>,
    /// Per pilot group: `Q × N_5^a` table of convolved delay atoms.
    gtab: Vec<DMatrix<f64>>,
    /// Per pilot group: squared norms of the `gtab` columns.
    gnorm2: Vec<Vec<f64>>,
    evaluations: Cell<u64>,
}

fn reshape(v: &[Complex64], nx: usize, ny: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(nx, ny, |ix, iy| v[ix * ny + iy])
}

impl<'a> AtomOperator<'a> {
    pub fn new(batch: &MeasurementBatch, dict: &'a DictionarySet) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let beams = &batch.beams;
        let [ntx, nty, nrx, nry, nd] = dict.dims;
        if beams.nt() != ntx * nty || beams.nr() != nrx * nry || batch.cfg.nd != nd {
            return Err(Error::DimensionMismatch(format!(
                "dictionary dims {:?} vs beams nt={} nr={} nd={}",
                dict.dims,
                beams.nt(),
                beams.nr(),
                batch.cfg.nd
            )));
        }
        let prec = beams
            .precoders
            .iter()
            .map(|f| reshape(f.as_slice(), ntx, nty))
            .collect();
        let comb = beams
            .whitened
            .iter()
            .map(|w| {
                (0..w.ncols())
                    .map(|c| {
                        let col: Vec<Complex64> = w.column(c).iter().map(|z| z.conj()).collect();
                        reshape(&col, nrx, nry)
                    })
                    .collect()
            })
            .collect();
        let mut groups: Vec<&Vec<f64>> = Vec::new();
        let mut pilot_of = Vec::with_capacity(beams.len());
        for p in &beams.pilots {
            let id = match groups.iter().position(|g| *g == p) {
                Some(id) => id,
                None => {
                    groups.push(p);
                    groups.len() - 1
                }
            };
            pilot_of.push(id);
        }
        let n5 = dict.grids[4].len();
        let q = beams.q();
        let mut gtab = Vec::with_capacity(groups.len());
        let mut gnorm2 = Vec::with_capacity(groups.len());
        for pilot in groups {
            let mut t = DMatrix::zeros(q, n5);
            let mut norms = Vec::with_capacity(n5);
            for j in 0..n5 {
                let p: Vec<f64> = dict.psi[4].column(j).iter().map(|z| z.re).collect();
                let g = pilot_convolve(pilot, &p);
                norms.push(g.iter().map(|v| v * v).sum());
                t.set_column(j, &DVector::from_vec(g));
            }
            gtab.push(t);
            gnorm2.push(norms);
        }
        Ok(Self {
            dict,
            m: beams.len(),
            c: beams.n_rf(),
            q,
            amp: batch.cfg.pt_watts().sqrt(),
            prec,
            comb,
            pilot_of,
            gtab,
            gnorm2,
            evaluations: Cell::new(0),
        })
    }

    /// Number of atom scores computed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.get()
    }

    fn count(&self, n: usize) {
        self.evaluations.set(self.evaluations.get() + n as u64);
    }

    pub fn sizes(&self) -> [usize; 5] {
        self.dict.sizes()
    }

    fn psi(&self, k: usize, row: usize, col: usize) -> Complex64 {
        self.dict.psi[k][(row, col)]
    }

    /// `Σ_iy Ψ2[iy, j2] F_m[ix, iy]` for every ix.
    fn tx_partial_y(&self, m: usize, j2: usize) -> Vec<Complex64> {
        let f = &self.prec[m];
        (0..f.nrows())
            .map(|ix| (0..f.ncols()).map(|iy| self.psi(1, iy, j2) * f[(ix, iy)]).sum())
            .collect()
    }

    /// `Σ_ix Ψ1[ix, j1] F_m[ix, iy]` for every iy.
    fn tx_partial_x(&self, m: usize, j1: usize) -> Vec<Complex64> {
        let f = &self.prec[m];
        (0..f.ncols())
            .map(|iy| (0..f.nrows()).map(|ix| self.psi(0, ix, j1) * f[(ix, iy)]).sum())
            .collect()
    }

    fn rx_partial_y(&self, m: usize, c: usize, j4: usize) -> Vec<Complex64> {
        let w = &self.comb[m][c];
        (0..w.nrows())
            .map(|ix| (0..w.ncols()).map(|iy| self.psi(3, iy, j4) * w[(ix, iy)]).sum())
            .collect()
    }

    fn rx_partial_x(&self, m: usize, c: usize, j3: usize) -> Vec<Complex64> {
        let w = &self.comb[m][c];
        (0..w.ncols())
            .map(|iy| (0..w.nrows()).map(|ix| self.psi(2, ix, j3) * w[(ix, iy)]).sum())
            .collect()
    }

    fn dot_col(&self, k: usize, col: usize, v: &[Complex64]) -> Complex64 {
        let psi = &self.dict.psi[k];
        v.iter().enumerate().map(|(i, x)| psi[(i, col)] * x).sum()
    }

    pub(crate) fn tx_coef(&self, m: usize, j1: usize, j2: usize) -> Complex64 {
        self.dot_col(0, j1, &self.tx_partial_y(m, j2))
    }

    pub(crate) fn rx_coefs(&self, m: usize, j3: usize, j4: usize) -> Vec<Complex64> {
        (0..self.c)
            .map(|c| self.dot_col(2, j3, &self.rx_partial_y(m, c, j4)))
            .collect()
    }

    fn g(&self, m: usize, j5: usize) -> nalgebra::DVectorView<'_, f64> {
        self.gtab[self.pilot_of[m]].column(j5)
    }

    fn gn(&self, m: usize, j5: usize) -> f64 {
        self.gnorm2[self.pilot_of[m]][j5]
    }

    /// Atom `j` in the measurement domain, stacked like
    /// [`MeasurementBatch::stacked`].
    pub fn apply_atom(&self, j: Index5) -> Result<DVector<Complex64>> {
        self.dict.check_index(j)?;
        let mut out = DVector::zeros(self.m * self.c * self.q);
        for m in 0..self.m {
            let t = self.tx_coef(m, j[0], j[1]) * self.amp;
            let r = self.rx_coefs(m, j[2], j[3]);
            let g = self.g(m, j[4]);
            let base = m * self.c * self.q;
            for q in 0..self.q {
                for c in 0..self.c {
                    out[base + q * self.c + c] = r[c] * t * g[q];
                }
            }
        }
        Ok(out)
    }

    /// `Σ_q g_m(j5)[q] r_m[c, q]` per measurement and combiner column.
    fn delay_match(&self, resid: &[DMatrix<Complex64>], j5: usize) -> Vec<Vec<Complex64>> {
        (0..self.m)
            .map(|m| {
                let g = self.g(m, j5);
                (0..self.c)
                    .map(|c| (0..self.q).map(|q| resid[m][(c, q)] * g[q]).sum())
                    .collect()
            })
            .collect()
    }

    /// Normalized correlation `|⟨A_j, r⟩|² / ‖A_j‖²` (without the common
    /// `P_t` factor).
    pub fn score(&self, resid: &[DMatrix<Complex64>], j: Index5) -> f64 {
        self.count(1);
        let z = self.delay_match(resid, j[4]);
        let mut corr = ZERO;
        let mut nrm = 0.0;
        for m in 0..self.m {
            let t = self.tx_coef(m, j[0], j[1]);
            let r = self.rx_coefs(m, j[2], j[3]);
            let rc: Complex64 = r.iter().zip(&z[m]).map(|(a, b)| a.conj() * b).sum();
            corr += t.conj() * rc;
            nrm += t.norm_sqr() * r.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.gn(m, j[4]);
        }
        ratio(corr, nrm)
    }

    /// Scores of every candidate along dimension `k` with the other four
    /// indices taken from `j`.
    pub fn scan(&self, resid: &[DMatrix<Complex64>], j: Index5, k: usize) -> Vec<f64> {
        let n = self.dict.grids[k].len();
        self.count(n);
        match k {
            0 | 1 => {
                let z = self.delay_match(resid, j[4]);
                let mut beta = Vec::with_capacity(self.m);
                let mut gamma = Vec::with_capacity(self.m);
                let mut partial = Vec::with_capacity(self.m);
                for m in 0..self.m {
                    let r = self.rx_coefs(m, j[2], j[3]);
                    beta.push(r.iter().zip(&z[m]).map(|(a, b)| a.conj() * b).sum::<Complex64>());
                    gamma.push(r.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.gn(m, j[4]));
                    partial.push(if k == 0 {
                        self.tx_partial_y(m, j[1])
                    } else {
                        self.tx_partial_x(m, j[0])
                    });
                }
                (0..n)
                    .map(|a| {
                        let mut corr = ZERO;
                        let mut nrm = 0.0;
                        for m in 0..self.m {
                            let t = self.dot_col(k, a, &partial[m]);
                            corr += t.conj() * beta[m];
                            nrm += t.norm_sqr() * gamma[m];
                        }
                        ratio(corr, nrm)
                    })
                    .collect()
            }
            2 | 3 => {
                let z = self.delay_match(resid, j[4]);
                let mut txs = Vec::with_capacity(self.m);
                let mut partial = Vec::with_capacity(self.m);
                for m in 0..self.m {
                    txs.push(self.tx_coef(m, j[0], j[1]));
                    partial.push(
                        (0..self.c)
                            .map(|c| {
                                if k == 2 {
                                    self.rx_partial_y(m, c, j[3])
                                } else {
                                    self.rx_partial_x(m, c, j[2])
                                }
                            })
                            .collect::<Vec<_>>(),
                    );
                }
                (0..n)
                    .map(|a| {
                        let mut corr = ZERO;
                        let mut nrm = 0.0;
                        for m in 0..self.m {
                            let mut rc = ZERO;
                            let mut rn = 0.0;
                            for c in 0..self.c {
                                let r = self.dot_col(k, a, &partial[m][c]);
                                rc += r.conj() * z[m][c];
                                rn += r.norm_sqr();
                            }
                            corr += txs[m].conj() * rc;
                            nrm += txs[m].norm_sqr() * rn * self.gn(m, j[4]);
                        }
                        ratio(corr, nrm)
                    })
                    .collect()
            }
            _ => {
                // ρ_u[q] = Σ_{m ∈ u} conj(tx_m) Σ_c conj(rx_mc) r_m[c, q]
                let groups = self.gtab.len();
                let mut rho = vec![vec![ZERO; self.q]; groups];
                let mut weight = vec![0.0; groups];
                for m in 0..self.m {
                    let t = self.tx_coef(m, j[0], j[1]);
                    let r = self.rx_coefs(m, j[2], j[3]);
                    let u = self.pilot_of[m];
                    for q in 0..self.q {
                        let s: Complex64 = (0..self.c).map(|c| r[c].conj() * resid[m][(c, q)]).sum();
                        rho[u][q] += t.conj() * s;
                    }
                    weight[u] += t.norm_sqr() * r.iter().map(|a| a.norm_sqr()).sum::<f64>();
                }
                (0..n)
                    .map(|a| {
                        let mut corr = ZERO;
                        let mut nrm = 0.0;
                        for u in 0..groups {
                            let g = self.gtab[u].column(a);
                            corr += (0..self.q).map(|q| rho[u][q] * g[q]).sum::<Complex64>();
                            nrm += weight[u] * self.gnorm2[u][a];
                        }
                        ratio(corr, nrm)
                    })
                    .collect()
            }
        }
    }

    /// Exhaustive search over the sub-grid `{0, s_k, 2 s_k, …}` of every
    /// dimension. Returns the best index and its score; ties go to the
    /// lexicographically lowest index. Indices in `excluded` are skipped.
    pub fn coarse_search(
        &self,
        resid: &[DMatrix<Complex64>],
        strides: [usize; 5],
        excluded: &[Index5],
    ) -> Option<(Index5, f64)> {
        let sizes = self.sizes();
        let pts: [Vec<usize>; 5] = std::array::from_fn(|k| (0..sizes[k]).step_by(strides[k]).collect());
        let n12 = pts[0].len() * pts[1].len();
        let n34 = pts[2].len() * pts[3].len();
        self.count(n12 * n34 * pts[4].len());

        // conj(tx) table, n12 × M
        let mut tx = DMatrix::<Complex64>::zeros(n12, self.m);
        for m in 0..self.m {
            for (b_i, &b) in pts[1].iter().enumerate() {
                let h = self.tx_partial_y(m, b);
                for (a_i, &a) in pts[0].iter().enumerate() {
                    tx[(a_i * pts[1].len() + b_i, m)] = self.dot_col(0, a, &h).conj();
                }
            }
        }
        let tx_pow = tx.map(|z| z.norm_sqr());
        // rx coefficients, per m: n34 × C
        let mut rx = Vec::with_capacity(self.m);
        let mut rx_pow = DMatrix::<f64>::zeros(self.m, n34);
        for m in 0..self.m {
            let mut r = DMatrix::<Complex64>::zeros(n34, self.c);
            for c in 0..self.c {
                for (d_i, &d) in pts[3].iter().enumerate() {
                    let h = self.rx_partial_y(m, c, d);
                    for (c_i, &cc) in pts[2].iter().enumerate() {
                        r[(c_i * pts[3].len() + d_i, c)] = self.dot_col(2, cc, &h);
                    }
                }
            }
            for i in 0..n34 {
                rx_pow[(m, i)] = r.row(i).iter().map(|z| z.norm_sqr()).sum();
            }
            rx.push(r);
        }

        let mut best: Option<(Index5, f64)> = None;
        for &j5 in &pts[4] {
            let z = self.delay_match(resid, j5);
            let mut p = DMatrix::<Complex64>::zeros(self.m, n34);
            let mut w = rx_pow.clone();
            for m in 0..self.m {
                for i in 0..n34 {
                    p[(m, i)] = (0..self.c).map(|c| rx[m][(i, c)].conj() * z[m][c]).sum();
                }
                let gn = self.gn(m, j5);
                w.row_mut(m).iter_mut().for_each(|v| *v *= gn);
            }
            let corr = &tx * p;
            let nrm = &tx_pow * w;
            for i12 in 0..n12 {
                for i34 in 0..n34 {
                    let s = ratio(corr[(i12, i34)], nrm[(i12, i34)]);
                    let j = [
                        pts[0][i12 / pts[1].len()],
                        pts[1][i12 % pts[1].len()],
                        pts[2][i34 / pts[3].len()],
                        pts[3][i34 % pts[3].len()],
                        j5,
                    ];
                    if excluded.contains(&j) {
                        continue;
                    }
                    if better(s, j, best) {
                        best = Some((j, s));
                    }
                }
            }
        }
        best
    }
}

pub(crate) fn better(s: f64, j: Index5, best: Option<(Index5, f64)>) -> bool {
    match best {
        None => true,
        Some((bj, bs)) => s > bs || (s == bs && j < bj),
    }
}

fn ratio(corr: Complex64, nrm: f64) -> f64 {
    if nrm > 0.0 {
        corr.norm_sqr() / nrm
    } else {
        0.0
    }
}

/// Strides so that the coarse grid holds at most `budget` atoms. The
/// dimension with the most remaining points is thinned first.
pub fn coarse_strides(sizes: [usize; 5], budget: usize) -> [usize; 5] {
    let mut strides = [1usize; 5];
    let count = |s: &[usize; 5]| -> f64 {
        (0..5).map(|k| sizes[k].div_ceil(s[k]) as f64).product()
    };
    while count(&strides) > budget.max(1) as f64 {
        let k = (0..5)
            .max_by(|&a, &b| {
                let na = sizes[a].div_ceil(strides[a]);
                let nb = sizes[b].div_ceil(strides[b]);
                na.cmp(&nb).then(b.cmp(&a))
            })
            .unwrap();
        if sizes[k].div_ceil(strides[k]) <= 1 {
            break;
        }
        strides[k] += 1;
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_fit_budget() {
        let s = coarse_strides([32, 32, 24, 24, 256], 2_000_000);
        let n: usize = (0..5).map(|k| [32usize, 32, 24, 24, 256][k].div_ceil(s[k])).product();
        assert!(n <= 2_000_000);
        assert_eq!(coarse_strides([3, 3, 3, 3, 3], 1000), [1; 5]);
    }
}
