//! Lowest eigenpairs of Hermitian operators.
//!
//! Thick-restart Lanczos with full (two-pass classical Gram-Schmidt)
//! reorthogonalization. Converged Ritz pairs are locked and later runs work
//! in their orthogonal complement. A single start vector only sees one
//! direction per degenerate eigenspace, so after `k` pairs are locked a
//! verification run checks the complement for anything lower than the top
//! locked level; that is what recovers degenerate partners.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// Any upper bound on the spectral norm; scales the residual tolerance.
    fn norm_bound(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigensolverConfig {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub degeneracy_threshold: f64,
    pub max_krylov: usize,
    pub max_restarts: usize,
    /// Bytes allowed for stored Krylov vectors; caps `max_krylov` on large bases.
    pub krylov_memory_budget: usize,
}

impl Default for EigensolverConfig {
    fn default() -> Self {
        EigensolverConfig {
            k: 4,
            tol: 1e-10,
            seed: 7,
            degeneracy_threshold: 1e-8,
            max_krylov: 500,
            max_restarts: 100,
            krylov_memory_budget: 1 << 28,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSolution {
    pub energies: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<C64>>,
    pub residuals: Vec<f64>,
    pub degeneracy_groups: Vec<Vec<usize>>,
}

impl EigenSolution {
    fn new(energies: Vec<f64>, vectors: Vec<Vec<C64>>, residuals: Vec<f64>, threshold: f64) -> Self {
        let degeneracy_groups = degeneracy_split(&energies, threshold);
        EigenSolution { energies, vectors, residuals, degeneracy_groups }
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    /// Vectors spanning the lowest degenerate group.
    pub fn ground_manifold(&self) -> Vec<&[C64]> {
        self.degeneracy_groups[0].iter().map(|&i| self.vectors[i].as_slice()).collect()
    }

    pub fn ground_degeneracy(&self) -> usize {
        self.degeneracy_groups[0].len()
    }

    /// Energy of the first level above the ground group, minus the ground energy.
    pub fn gap(&self) -> Option<f64> {
        self.degeneracy_groups.get(1).map(|g| self.energies[g[0]] - self.energies[0])
    }

    /// Mean energy of each degeneracy group, ascending.
    pub fn multiplet_energies(&self) -> Vec<f64> {
        self.degeneracy_groups
            .iter()
            .map(|g| g.iter().map(|&i| self.energies[i]).sum::<f64>() / g.len() as f64)
            .collect()
    }
}

/// Maximal runs of ascending `energies` whose consecutive gaps are below `threshold`.
pub fn degeneracy_split(energies: &[f64], threshold: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if e - energies[*g.last().unwrap()] < threshold => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Vector kernels work on blocks of this many entries so that the target
/// stays in cache while the basis streams past. Per-block partial sums are
/// combined in block order, so results do not depend on the thread count.
const BLOCK: usize = 2048;

#[inline]
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    // <a, b> = Σ conj(a) b, with independent accumulators for throughput.
    let mut re = [0.0; 4];
    let mut im = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            re[l] += x[l].re * y[l].re + x[l].im * y[l].im;
            im[l] += x[l].re * y[l].im - x[l].im * y[l].re;
        }
    }
    for (x, y) in ta.iter().zip(tb) {
        re[0] += x.re * y.re + x.im * y.im;
        im[0] += x.re * y.im - x.im * y.re;
    }
    C64::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

#[inline]
fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `<v_i, w>` for every `v_i`.
fn dots(vs: &[&[C64]], w: &[C64]) -> Vec<C64> {
    let partials: Vec<Vec<C64>> = w
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(b, wc)| {
            let at = b * BLOCK..b * BLOCK + wc.len();
            vs.iter().map(|v| dot(&v[at.clone()], wc)).collect()
        })
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); vs.len()];
    for p in partials {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

/// `w -= Σ c_i v_i`.
fn subtract(vs: &[&[C64]], cs: &[C64], w: &mut [C64]) {
    w.par_chunks_mut(BLOCK).enumerate().for_each(|(b, wc)| {
        let at = b * BLOCK..b * BLOCK + wc.len();
        for (v, &c) in vs.iter().zip(cs) {
            axpy(-c, &v[at.clone()], wc);
        }
    });
}

/// `Y[:, j] = Σ_i V[:, i] C[i, j]` for the first `cols` columns of `C`.
fn combine_many(basis: &[Vec<C64>], c: &DMatrix<C64>, cols: usize) -> Vec<Vec<C64>> {
    let n = basis.first().map_or(0, |v| v.len());
    let mut out = vec![vec![C64::new(0.0, 0.0); n]; cols];
    let mut blocks: Vec<Vec<&mut [C64]>> = (0..n.div_ceil(BLOCK)).map(|_| Vec::with_capacity(cols)).collect();
    for y in out.iter_mut() {
        for (b, chunk) in y.chunks_mut(BLOCK).enumerate() {
            blocks[b].push(chunk);
        }
    }
    blocks.into_par_iter().enumerate().for_each(|(b, mut ys)| {
        let start = b * BLOCK;
        for (i, v) in basis.iter().enumerate() {
            let vc = &v[start..start + ys.first().map_or(0, |y| y.len())];
            for (j, y) in ys.iter_mut().enumerate() {
                axpy(c[(i, j)], vc, y);
            }
        }
    });
    out
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn scale(a: &mut [C64], s: f64) {
    for z in a {
        *z *= s;
    }
}

/// Classical Gram-Schmidt of `w` against `basis` (and silently against
/// `extra`), with a second pass when the first removed most of the norm.
/// Returns the accumulated coefficients `<v_i, w>` for `basis`.
fn orthogonalize_against(extra: &[Vec<C64>], basis: &[Vec<C64>], w: &mut [C64]) -> Vec<C64> {
    let all: Vec<&[C64]> = extra.iter().chain(basis).map(|v| v.as_slice()).collect();
    let mut coeffs = vec![C64::new(0.0, 0.0); basis.len()];
    let mut before = norm(w);
    for _ in 0..3 {
        let pass = dots(&all, w);
        subtract(&all, &pass, w);
        for (acc, c) in coeffs.iter_mut().zip(&pass[extra.len()..]) {
            *acc += c;
        }
        let after = norm(w);
        if after > std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
        before = after;
    }
    coeffs
}

fn orthogonalize(basis: &[Vec<C64>], w: &mut [C64]) -> Vec<C64> {
    orthogonalize_against(&[], basis, w)
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng, locked: &[Vec<C64>]) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    orthogonalize(locked, &mut v);
    let n = norm(&v);
    scale(&mut v, 1.0 / n);
    v
}

/// Sorted eigen-decomposition of a small Hermitian matrix.
fn small_eigh(t: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = t.nrows();
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Krylov basis `V` with the projected matrix `T = V† A V` and the pending
/// residual `w = A v_last - V T[:, last]`.
struct Krylov<'a, A: LinearOperator + ?Sized> {
    op: &'a A,
    locked: &'a [Vec<C64>],
    basis: Vec<Vec<C64>>,
    t: Vec<Vec<C64>>,
    residual: Vec<C64>,
    beta: f64,
}

impl<'a, A: LinearOperator + ?Sized> Krylov<'a, A> {
    fn new(op: &'a A, locked: &'a [Vec<C64>], start: Vec<C64>) -> Self {
        Krylov { op, locked, basis: vec![start], t: Vec::new(), residual: Vec::new(), beta: 0.0 }
    }

    fn len(&self) -> usize {
        self.t.len()
    }

    /// Applies the operator to the newest basis vector and fills its column of `T`.
    fn expand(&mut self) {
        let j = self.basis.len() - 1;
        let mut w = vec![C64::new(0.0, 0.0); self.op.dim()];
        self.op.apply(&self.basis[j], &mut w);
        let coeffs = orthogonalize_against(self.locked, &self.basis, &mut w);
        for row in self.t.iter_mut() {
            row.push(C64::new(0.0, 0.0));
        }
        self.t.push(vec![C64::new(0.0, 0.0); j + 1]);
        for (i, c) in coeffs.into_iter().enumerate() {
            if i == j {
                self.t[j][j] = C64::new(c.re, 0.0);
            } else {
                self.t[i][j] = c;
                self.t[j][i] = c.conj();
            }
        }
        self.beta = norm(&w);
        self.residual = w;
    }

    fn push_residual(&mut self) {
        let mut v = std::mem::take(&mut self.residual);
        scale(&mut v, 1.0 / self.beta);
        self.basis.push(v);
    }

    fn ritz(&self) -> (Vec<f64>, DMatrix<C64>) {
        let m = self.len();
        small_eigh(DMatrix::from_fn(m, m, |r, c| self.t[r][c]))
    }

    /// Keeps the `keep` lowest Ritz vectors plus the normalized residual.
    fn restart(&mut self, values: &[f64], vectors: &DMatrix<C64>, keep: usize) {
        self.basis = combine_many(&self.basis[..self.len()], vectors, keep);
        self.t = (0..keep)
            .map(|r| {
                let mut row = vec![C64::new(0.0, 0.0); keep];
                row[r] = C64::new(values[r], 0.0);
                row
            })
            .collect();
        self.push_residual();
    }
}

fn pairs_from(
    basis: &[Vec<C64>],
    values: &[f64],
    vectors: &DMatrix<C64>,
    resid: &[f64],
    count: usize,
) -> Vec<(f64, Vec<C64>, f64)> {
    combine_many(basis, vectors, count).into_iter().enumerate().map(|(c, y)| (values[c], y, resid[c])).collect()
}

struct RunOutcome {
    pairs: Vec<(f64, Vec<C64>, f64)>,
    best_residuals: Vec<f64>,
    converged: bool,
}

/// One thick-restart run in the complement of `locked`, aiming at the `want`
/// lowest pairs. Returns the converged prefix of the Ritz spectrum.
///
/// With a `floor`, a single wanted pair may also be returned once it is
/// converged to `sqrt(tol)` and its interval `θ ± r` lies above the floor.
fn run<A: LinearOperator + ?Sized>(
    op: &A,
    locked: &[Vec<C64>],
    want: usize,
    cfg: &EigensolverConfig,
    rng: &mut ChaCha8Rng,
    floor: Option<f64>,
    start: Option<Vec<C64>>,
) -> RunOutcome {
    let n = op.dim();
    let free = n - locked.len();
    let memory_cap = (cfg.krylov_memory_budget / (n * std::mem::size_of::<C64>()).max(1)).max(8);
    let m_max = cfg.max_krylov.min(memory_cap).min(free).max(1);
    let want = want.min(free).max(1);
    let threshold = cfg.tol * op.norm_bound().max(1.0);
    let loose = cfg.tol.sqrt() * op.norm_bound().max(1.0);
    let breakdown = 1e-13 * op.norm_bound().max(1.0);
    let check_every = 4;

    let start = start.unwrap_or_else(|| random_unit(n, rng, locked));
    let mut kry = Krylov::new(op, locked, start);
    let mut restarts = 0;
    loop {
        kry.expand();
        let m = kry.len();
        let full = m == m_max;
        let exhausted = kry.beta < breakdown;
        if full || exhausted || (m >= want && m.is_multiple_of(check_every)) {
            let (values, vectors) = kry.ritz();
            let resid: Vec<f64> = (0..m).map(|c| kry.beta * vectors[(m - 1, c)].norm()).collect();
            let nconv = (0..m.min(want)).take_while(|&c| exhausted || resid[c] <= threshold).count();
            if let Some(f) = floor.filter(|_| want == 1 && !exhausted) {
                // The lowest Ritz pair must itself be converged (loosely) before
                // it can stand in for the bottom of the remaining spectrum.
                if resid[0] <= loose && values[0] - resid[0] > f {
                    let y = combine_many(&kry.basis[..m], &vectors, 1).remove(0);
                    return RunOutcome { pairs: vec![(values[0], y, resid[0])], best_residuals: vec![resid[0]], converged: false };
                }
            }
            if nconv == want.min(m) && (m >= want || exhausted) {
                log::debug!("run converged: m = {m}, restarts = {restarts}");
                let pairs = pairs_from(&kry.basis[..m], &values, &vectors, &resid, nconv);
                return RunOutcome { pairs, best_residuals: resid[..want.min(m)].to_vec(), converged: true };
            }
            if exhausted {
                // Invariant subspace smaller than `want`: everything found is exact.
                let pairs = pairs_from(&kry.basis[..m], &values, &vectors, &resid, m);
                return RunOutcome { pairs, best_residuals: resid, converged: true };
            }
            if full {
                if restarts == cfg.max_restarts {
                    let pairs = pairs_from(&kry.basis[..m], &values, &vectors, &resid, nconv);
                    return RunOutcome { pairs, best_residuals: resid[..want.min(m)].to_vec(), converged: false };
                }
                restarts += 1;
                let keep = (m_max / 2).max(want + 1).min(m - 1).max(1);
                if m_max < 3 {
                    // No room to restart thickly; start over from the best Ritz vector.
                    let y = combine_many(&kry.basis[..m], &vectors, 1).remove(0);
                    kry = Krylov::new(op, locked, y);
                    continue;
                }
                kry.restart(&values, &vectors, keep);
                continue;
            }
        }
        kry.push_residual();
    }
}

/// The `k` lowest eigenpairs of `op` (fewer if `dim < k`), extended by any
/// further states degenerate with the `k`-th so that every returned group is
/// complete.
pub fn lowest<A: LinearOperator + ?Sized>(op: &A, cfg: &EigensolverConfig) -> Result<EigenSolution> {
    lowest_from(op, cfg, None)
}

/// [`lowest`] with the first Krylov sequence started from `start`, e.g. a
/// ground state of a nearby problem. A zero start falls back to a random one.
pub fn lowest_from<A: LinearOperator + ?Sized>(
    op: &A,
    cfg: &EigensolverConfig,
    start: Option<&[C64]>,
) -> Result<EigenSolution> {
    let n = op.dim();
    let k = cfg.k.min(n).max(1);
    let thr = cfg.degeneracy_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut locked: Vec<Vec<C64>> = Vec::new();
    let mut energies: Vec<f64> = Vec::new();
    if start.is_some_and(|s| s.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: start.map_or(0, |s| s.len()) });
    }
    let mut start = start.map(|s| s.to_vec()).and_then(|mut v| {
        let nv = norm(&v);
        (nv > 0.0).then(|| {
            scale(&mut v, 1.0 / nv);
            v
        })
    });

    // Fill k slots.
    while locked.len() < k {
        let outcome = run(op, &locked, k - locked.len(), cfg, &mut rng, None, start.take());
        if !outcome.converged && outcome.pairs.is_empty() {
            return Err(Error::NoConvergence { restarts: cfg.max_restarts, residuals: outcome.best_residuals });
        }
        for (e, v, _) in outcome.pairs.into_iter().take(k - locked.len()) {
            energies.push(e);
            locked.push(v);
        }
    }
    // Verify in the complement: anything below the top level was missed, and
    // anything level with it completes the top group.
    while locked.len() < n {
        let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let outcome = run(op, &locked, 1, cfg, &mut rng, Some(top + thr), None);
        let Some((e, v, r)) = outcome.pairs.into_iter().next() else {
            return Err(Error::NoConvergence { restarts: cfg.max_restarts, residuals: outcome.best_residuals });
        };
        if e - r > top + thr || (outcome.converged && e >= top + thr) {
            break;
        }
        if !outcome.converged {
            return Err(Error::NoConvergence { restarts: cfg.max_restarts, residuals: vec![r] });
        }
        energies.push(e);
        locked.push(v);
        if e >= top - thr {
            continue;
        }
        // A missed lower state: the old top group drops out if the rest still fills k.
        let in_top: Vec<usize> = (0..energies.len()).filter(|&i| energies[i] >= top - thr).collect();
        if energies.len() - in_top.len() >= k {
            for &i in in_top.iter().rev() {
                energies.swap_remove(i);
                locked.swap_remove(i);
            }
        }
    }
    rayleigh_ritz(op, locked, cfg)
}

/// Final projection onto the locked span: sorts, cleans mixing within
/// near-degenerate levels, and measures true residuals.
fn rayleigh_ritz<A: LinearOperator + ?Sized>(
    op: &A,
    mut locked: Vec<Vec<C64>>,
    cfg: &EigensolverConfig,
) -> Result<EigenSolution> {
    let n = op.dim();
    // Re-orthonormalize the locked set.
    for i in 0..locked.len() {
        let (done, rest) = locked.split_at_mut(i);
        orthogonalize(done, &mut rest[0]);
        let nv = norm(&rest[0]);
        scale(&mut rest[0], 1.0 / nv);
    }
    let m = locked.len();
    let images: Vec<Vec<C64>> = locked
        .iter()
        .map(|v| {
            let mut y = vec![C64::new(0.0, 0.0); n];
            op.apply(v, &mut y);
            y
        })
        .collect();
    let t = DMatrix::from_fn(m, m, |r, c| dot(&locked[r], &images[c]));
    let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
    let (values, vectors) = small_eigh(t);
    let out_vecs = combine_many(&locked, &vectors, m);
    let residuals = combine_many(&images, &vectors, m)
        .into_iter()
        .zip(&out_vecs)
        .zip(&values)
        .map(|((mut r, y), &e)| {
            axpy(C64::new(-e, 0.0), y, &mut r);
            norm(&r)
        })
        .collect::<Vec<_>>();
    let energies = values;
    let limit = cfg.tol * op.norm_bound().max(1.0) * 10.0;
    if residuals.iter().any(|&r| r > limit) {
        return Err(Error::NoConvergence { restarts: cfg.max_restarts, residuals });
    }
    Ok(EigenSolution::new(energies, out_vecs, residuals, cfg.degeneracy_threshold))
}

/// Lowest Ritz value after each plain Lanczos step (no restarts), for diagnostics.
pub fn ritz_history<A: LinearOperator + ?Sized>(op: &A, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = random_unit(op.dim(), &mut rng, &[]);
    let mut kry = Krylov::new(op, &[], start);
    let mut out = Vec::new();
    for _ in 0..steps.min(op.dim()) {
        kry.expand();
        out.push(kry.ritz().0[0]);
        if kry.beta < 1e-13 * op.norm_bound().max(1.0) {
            break;
        }
        kry.push_residual();
    }
    out
}

/// Dense Hermitian eigensolve; the reference for small instances.
pub fn dense_lowest(matrix: &DMatrix<C64>, k: usize, threshold: f64) -> EigenSolution {
    let (values, vectors) = small_eigh(matrix.clone());
    let k = k.min(values.len());
    let vecs: Vec<Vec<C64>> = (0..k).map(|c| vectors.column(c).iter().copied().collect()).collect();
    let residuals = vecs
        .iter()
        .zip(&values)
        .map(|(v, &e)| {
            let x = nalgebra::DVector::from_column_slice(v);
            (matrix * &x - x * C64::new(e, 0.0)).norm()
        })
        .collect();
    EigenSolution::new(values[..k].to_vec(), vecs, residuals, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::SparseHermitian;

    fn diag(values: &[f64]) -> SparseHermitian {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, C64::new(v, 0.0))).collect();
        SparseHermitian::from_triplets(values.len(), &t)
    }

    #[test]
    fn two_by_two() {
        let h = diag(&[0.0, 1.0]);
        let sol = lowest(&h, &EigensolverConfig { k: 1, ..Default::default() }).unwrap();
        assert!(sol.energies[0].abs() < 1e-12);
        assert_eq!(sol.energies.len(), 1);
    }

    #[test]
    fn finds_degenerate_partners() {
        // Three-fold degenerate ground level; a single Krylov sequence sees only one direction of it.
        let mut values: Vec<f64> = (0..60).map(|i| 1.0 + 0.1 * i as f64).collect();
        values[10] = -2.0;
        values[33] = -2.0;
        values[47] = -2.0;
        values[5] = -1.5;
        let h = diag(&values);
        let sol = lowest(&h, &EigensolverConfig { k: 5, ..Default::default() }).unwrap();
        assert_eq!(sol.ground_degeneracy(), 3);
        assert!((sol.energies[3] + 1.5).abs() < 1e-10);
        assert!((sol.energies[4] - 1.0).abs() < 1e-10);
        assert_eq!(sol.degeneracy_groups, vec![vec![0, 1, 2], vec![3], vec![4]]);
    }

    #[test]
    fn restarts_with_small_krylov_space() {
        let values: Vec<f64> = (0..400).map(|i| ((i * 37) % 400) as f64 * 0.01 - 1.0).collect();
        let h = diag(&values);
        let cfg = EigensolverConfig { k: 3, max_krylov: 12, max_restarts: 2000, ..Default::default() };
        let sol = lowest(&h, &cfg).unwrap();
        assert!((sol.energies[0] + 1.0).abs() < 1e-9);
        assert!((sol.energies[1] + 0.99).abs() < 1e-9);
        assert!((sol.energies[2] + 0.98).abs() < 1e-9);
    }

    #[test]
    fn split_groups() {
        assert_eq!(degeneracy_split(&[0.0, 1e-12, 1.0], 1e-8), vec![vec![0, 1], vec![2]]);
        assert_eq!(degeneracy_split(&[0.0, 0.5, 1.0], 1e-8), vec![vec![0], vec![1], vec![2]]);
        assert!(degeneracy_split(&[], 1e-8).is_empty());
    }
}
