//! Brute-force references: dense Gram matrices, direct-summation MP and the
//! literal coefficient-domain MP driven by explicit Gram columns.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dict::{GaborDictParams, MultiDict};
use crate::engine::{adjust_coefficient, energy_decrement, selection_score};
use crate::error::{MpError, Result};
use crate::kernels::ConjPair;
use crate::par::{self, Exec};
use crate::transform::CoefficientGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest atom count for which a dense Gram matrix is formed.
pub const MAX_DENSE_ATOMS: usize = 4096;
/// Largest signal length accepted by the direct-summation oracles.
pub const MAX_ORACLE_LEN: usize = 16384;

fn guard_len(len: usize) -> Result<()> {
    if len > MAX_ORACLE_LEN {
        return Err(MpError::SizeGuard(format!("signal length {len} > {MAX_ORACLE_LEN}")));
    }
    Ok(())
}

/// Window, circular start and twiddles of one dictionary; atoms are
/// materialized on their support only.
#[derive(Debug, Clone)]
struct AtomFactory {
    dict: GaborDictParams,
    len: usize,
    window: Vec<f64>,
    center: usize,
    twiddle: Vec<Complex64>,
}

impl AtomFactory {
    fn new(dict: &GaborDictParams, len: usize) -> Result<Self> {
        let window = dict.window_samples()?;
        let m = dict.m;
        Ok(AtomFactory {
            dict: *dict,
            len,
            center: window.len() / 2,
            window,
            twiddle: (0..m)
                .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
                .collect(),
        })
    }

    /// First sample (mod L) of frame `n`'s support.
    fn start(&self, n: usize) -> usize {
        (n * self.dict.a + self.len - self.center % self.len) % self.len
    }

    /// `(start, values)` of atom `(m, n)` with `m` over all `M` bins.
    fn atom(&self, m: usize, n: usize) -> (usize, Vec<Complex64>) {
        let mm = self.dict.m;
        let values = self
            .window
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let t = (i as i64 - self.center as i64).rem_euclid(mm as i64) as usize;
                self.twiddle[(m * t) % mm] * g
            })
            .collect();
        (self.start(n), values)
    }

    /// True when the support of frame `n` meets `[start, start + width)` mod L.
    fn overlaps(&self, n: usize, start: usize, width: usize) -> bool {
        let d = (self.start(n) + self.len - start) % self.len;
        d < width || d + self.window.len() > self.len
    }

    /// `<v, d_{q,n}>` for all reduced bins `q`, `v` given as a dense signal.
    fn analyze_frame(&self, v: &[Complex64], n: usize, out: &mut [Complex64]) {
        let mm = self.dict.m;
        let s = self.start(n);
        for (q, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            let mut l = s;
            for (i, &g) in self.window.iter().enumerate() {
                let t = (i as i64 - self.center as i64).rem_euclid(mm as i64) as usize;
                acc += v[l] * self.twiddle[(q * t) % mm].conj() * g;
                l += 1;
                if l == self.len {
                    l = 0;
                }
            }
            *o = acc;
        }
    }
}

/// Direct-summation analysis on the reduced bins of every dictionary.
pub fn brute_force_analysis(exec: Exec, multidict: &MultiDict, x: &[f64]) -> Result<Vec<CoefficientGrid>> {
    let len = multidict.len();
    guard_len(len)?;
    if x.len() != len {
        return Err(MpError::Dimension(format!("signal length {} != {len}", x.len())));
    }
    let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    multidict
        .dicts()
        .iter()
        .enumerate()
        .map(|(w, d)| {
            let f = AtomFactory::new(d, len)?;
            let mut grid = CoefficientGrid::zeros(w, d, len);
            let bins = grid.bins;
            par::for_each_chunk(exec, &mut grid.values, bins, || (), |_, n, out| f.analyze_frame(&xc, n, out));
            Ok(grid)
        })
        .collect()
}

/// Dense Gram matrix over all complex atoms, `G(k, j) = <d_j, d_k>`.
/// Atom `(w, m, n)` sits at `offset(w) + m + n M_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGram {
    pub matrix: DMatrix<Complex64>,
    offsets: Vec<usize>,
    dicts: Vec<GaborDictParams>,
    len: usize,
}

impl DenseGram {
    pub fn new(multidict: &MultiDict) -> Result<Self> {
        Self::with_exec(Exec::default(), multidict)
    }

    pub fn with_exec(exec: Exec, multidict: &MultiDict) -> Result<Self> {
        let total = multidict.total_atoms();
        if total > MAX_DENSE_ATOMS {
            return Err(MpError::SizeGuard(format!("{total} atoms > {MAX_DENSE_ATOMS}")));
        }
        let len = multidict.len();
        let mut offsets = Vec::new();
        let mut atoms = Vec::with_capacity(total);
        for d in multidict.dicts() {
            offsets.push(atoms.len());
            let f = AtomFactory::new(d, len)?;
            for n in 0..d.frames(len) {
                for m in 0..d.m {
                    let (s, v) = f.atom(m, n);
                    let mut dense = vec![ZERO; len];
                    for (i, c) in v.into_iter().enumerate() {
                        dense[(s + i) % len] += c;
                    }
                    atoms.push(dense);
                }
            }
        }
        let cols: Vec<Vec<Complex64>> = par::map_range(exec, total, |j| {
            atoms
                .iter()
                .map(|dk| atoms[j].iter().zip(dk).map(|(a, b)| a * b.conj()).sum())
                .collect()
        });
        let matrix = DMatrix::from_fn(total, total, |k, j| cols[j][k]);
        Ok(DenseGram {
            matrix,
            offsets,
            dicts: multidict.dicts().to_vec(),
            len,
        })
    }

    pub fn index(&self, w: usize, m: usize, n: usize) -> usize {
        self.offsets[w] + m + n * self.dicts[w].m
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, k: usize, j: usize) -> Complex64 {
        self.matrix[(k, j)]
    }
}

/// Zeroes every entry with `|G(k, j)| <= eps`.
pub fn truncate_gram(g: &DenseGram, eps: f64) -> DenseGram {
    let mut out = g.clone();
    out.matrix.iter_mut().for_each(|v| {
        if v.norm() <= eps {
            *v = ZERO;
        }
    });
    out
}

/// Source of Gram columns for the coefficient-domain oracle.
pub trait GramColumnSource {
    /// `<d_sel, d_t>` for every reduced target atom `t`, one grid per
    /// dictionary; `m` ranges over all `M` bins of dictionary `w`.
    fn column(&mut self, w: usize, m: usize, n: usize) -> Result<Vec<CoefficientGrid>>;
}

impl GramColumnSource for DenseGram {
    fn column(&mut self, w: usize, m: usize, n: usize) -> Result<Vec<CoefficientGrid>> {
        let j = self.index(w, m, n);
        Ok(self
            .dicts
            .iter()
            .enumerate()
            .map(|(t, d)| {
                let mut grid = CoefficientGrid::zeros(t, d, self.len);
                for nn in 0..grid.frames {
                    for q in 0..grid.bins {
                        *grid.get_mut(q, nn) = self.matrix[(self.index(t, q, nn), j)];
                    }
                }
                grid
            })
            .collect())
    }
}

/// Gram columns computed on demand by direct summation over time-overlapping
/// frames, thresholded per dictionary block at `eps_rel` times the block's
/// largest magnitude.
#[derive(Debug, Clone)]
pub struct LazyGram {
    factories: Vec<AtomFactory>,
    len: usize,
    eps_rel: f64,
    thresholds: Vec<f64>,
    cache: HashMap<(usize, usize, usize), Vec<CoefficientGrid>>,
}

impl LazyGram {
    pub fn new(multidict: &MultiDict, eps_rel: f64) -> Result<Self> {
        let len = multidict.len();
        guard_len(len)?;
        let factories = multidict
            .dicts()
            .iter()
            .map(|d| AtomFactory::new(d, len))
            .collect::<Result<Vec<_>>>()?;
        let w = factories.len();
        let mut g = LazyGram {
            factories,
            len,
            eps_rel,
            thresholds: vec![0.0; w * w],
            cache: HashMap::new(),
        };
        if eps_rel > 0.0 {
            for s in 0..w {
                for t in 0..w {
                    g.thresholds[s * w + t] = eps_rel * g.block_max(s, t);
                }
            }
        }
        Ok(g)
    }

    /// Largest `|<d_s, d_t>|` over the block, from selected atoms covering
    /// every lag residue class and their conjugates.
    fn block_max(&self, s: usize, t: usize) -> f64 {
        let (ds, dt) = (&self.factories[s].dict, &self.factories[t].dict);
        let m_com = ds.m.max(dt.m);
        let a_com = ds.a.min(dt.a);
        let fr = m_com / dt.m;
        let tr = dt.a / a_com;
        let mut best: f64 = 0.0;
        for r in 0..fr.min(ds.m) {
            for bin in [r, (ds.m - r) % ds.m] {
                for n in 0..tr.min(ds.frames(self.len)) {
                    let col = self.raw_column(s, bin, n, t);
                    best = col.values.iter().fold(best, |b, v| b.max(v.norm()));
                }
            }
        }
        best
    }

    fn raw_column(&self, s: usize, m: usize, n: usize, t: usize) -> CoefficientGrid {
        let fs = &self.factories[s];
        let ft = &self.factories[t];
        let (start, values) = fs.atom(m, n);
        let mut dense = vec![ZERO; self.len];
        for (i, c) in values.iter().enumerate() {
            dense[(start + i) % self.len] += c;
        }
        let mut grid = CoefficientGrid::zeros(t, &ft.dict, self.len);
        let bins = grid.bins;
        for nn in 0..grid.frames {
            if ft.overlaps(nn, start, values.len()) {
                ft.analyze_frame(&dense, nn, &mut grid.values[nn * bins..(nn + 1) * bins]);
            }
        }
        grid
    }

    pub fn threshold(&self, s: usize, t: usize) -> f64 {
        self.thresholds[s * self.factories.len() + t]
    }
}

impl GramColumnSource for LazyGram {
    fn column(&mut self, w: usize, m: usize, n: usize) -> Result<Vec<CoefficientGrid>> {
        if let Some(c) = self.cache.get(&(w, m, n)) {
            return Ok(c.clone());
        }
        let mut out = Vec::with_capacity(self.factories.len());
        for t in 0..self.factories.len() {
            let mut g = self.raw_column(w, m, n, t);
            let thr = self.threshold(w, t);
            if self.eps_rel > 0.0 {
                g.values.iter_mut().for_each(|v| {
                    if v.norm() <= thr {
                        *v = ZERO;
                    }
                });
            }
            out.push(g);
        }
        self.cache.insert((w, m, n), out.clone());
        Ok(out)
    }
}

/// One oracle selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStep {
    pub dict: usize,
    pub bin: usize,
    pub frame: usize,
    pub coefficient: Complex64,
    pub decrement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrace {
    pub steps: Vec<OracleStep>,
    /// Exact residual energies before the first and after every step
    /// (signal-domain oracle only).
    pub residual_energies: Vec<f64>,
}

/// Argmax over reduced grids with the engine's tie-breaking.
fn argmax(grids: &[CoefficientGrid], pairs: &dyn Fn(usize, usize, usize) -> ConjPair, pedantic: bool) -> Option<(usize, usize, usize, f64)> {
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for (w, g) in grids.iter().enumerate() {
        for n in 0..g.frames {
            for m in 0..g.bins {
                let s = selection_score(g.get(m, n), pairs(w, m, n), pedantic);
                if best.is_none_or(|b| s > b.3) {
                    best = Some((w, m, n, s));
                }
            }
        }
    }
    best
}

/// Textbook MP: every step recomputes all inner products by direct summation
/// and subtracts the selected real atom (or conjugate pair) from the signal.
pub fn signal_domain_mp(exec: Exec, multidict: &MultiDict, x: &[f64], steps: usize, pedantic: bool) -> Result<OracleTrace> {
    let len = multidict.len();
    guard_len(len)?;
    let factories = multidict
        .dicts()
        .iter()
        .map(|d| AtomFactory::new(d, len))
        .collect::<Result<Vec<_>>>()?;
    let rho: Vec<Vec<ConjPair>> = factories
        .iter()
        .map(|f| {
            (0..f.dict.reduced_bins())
                .map(|m| {
                    if f.dict.is_self_conjugate(m) {
                        ConjPair::SelfConjugate
                    } else {
                        let (_, v) = f.atom(m, 0);
                        ConjPair::Pair(v.iter().map(|c| c * c).sum())
                    }
                })
                .collect()
        })
        .collect();
    let mut r = x.to_vec();
    let mut trace = OracleTrace {
        steps: Vec::new(),
        residual_energies: vec![r.iter().map(|v| v * v).sum()],
    };
    for _ in 0..steps {
        let grids = brute_force_analysis(exec, multidict, &r)?;
        let Some((w, m, n, score)) = argmax(&grids, &|w, m, _| rho[w][m], pedantic) else {
            break;
        };
        if score <= 0.0 {
            break;
        }
        let pair = rho[w][m];
        let c = adjust_coefficient(grids[w].get(m, n), pair)?;
        let (start, values) = factories[w].atom(m, n);
        for (i, v) in values.iter().enumerate() {
            let contrib = match pair {
                ConjPair::SelfConjugate => (c * v).re,
                ConjPair::Pair(_) => 2.0 * (c * v).re,
            };
            r[(start + i) % len] -= contrib;
        }
        trace.steps.push(OracleStep {
            dict: w,
            bin: m,
            frame: n,
            coefficient: c,
            decrement: energy_decrement(c, pair),
        });
        trace.residual_energies.push(r.iter().map(|v| v * v).sum());
    }
    Ok(trace)
}

/// Coefficient-domain MP with explicit Gram columns: `c_hat -= c G(:, p) +
/// conj(c) G(:, conj p)`.
pub fn dense_cd_mp(
    exec: Exec,
    multidict: &MultiDict,
    x: &[f64],
    source: &mut dyn GramColumnSource,
    steps: usize,
    pedantic: bool,
) -> Result<OracleTrace> {
    let dicts = multidict.dicts().to_vec();
    let mut grids = brute_force_analysis(exec, multidict, x)?;
    let mut rho_cache: HashMap<(usize, usize, usize), ConjPair> = HashMap::new();
    let mut trace = OracleTrace {
        steps: Vec::new(),
        residual_energies: Vec::new(),
    };
    let mut pair_of = |source: &mut dyn GramColumnSource, w: usize, m: usize, n: usize| -> Result<ConjPair> {
        if dicts[w].is_self_conjugate(m) {
            return Ok(ConjPair::SelfConjugate);
        }
        if let Some(p) = rho_cache.get(&(w, m, n)) {
            return Ok(*p);
        }
        let col = source.column(w, dicts[w].m - m, n)?;
        let p = ConjPair::Pair(col[w].get(m, n).conj());
        rho_cache.insert((w, m, n), p);
        Ok(p)
    };
    for _ in 0..steps {
        let (w, m, n) = if pedantic {
            let mut best: Option<(usize, usize, usize, f64)> = None;
            for (w, g) in grids.iter().enumerate() {
                for nn in 0..g.frames {
                    for q in 0..g.bins {
                        let s = selection_score(g.get(q, nn), pair_of(source, w, q, nn)?, true);
                        if best.is_none_or(|b| s > b.3) {
                            best = Some((w, q, nn, s));
                        }
                    }
                }
            }
            match best {
                Some((w, m, n, s)) if s > 0.0 => (w, m, n),
                _ => break,
            }
        } else {
            match argmax(&grids, &|_, _, _| ConjPair::SelfConjugate, false) {
                Some((w, m, n, s)) if s > 0.0 => (w, m, n),
                _ => break,
            }
        };
        let pair = pair_of(source, w, m, n)?;
        let c = adjust_coefficient(grids[w].get(m, n), pair)?;
        let col = source.column(w, m, n)?;
        for (g, h) in grids.iter_mut().zip(&col) {
            for (v, hv) in g.values.iter_mut().zip(&h.values) {
                *v -= c * hv;
            }
        }
        if let ConjPair::Pair(_) = pair {
            let col = source.column(w, dicts[w].m - m, n)?;
            for (g, h) in grids.iter_mut().zip(&col) {
                for (v, hv) in g.values.iter_mut().zip(&h.values) {
                    *v -= c.conj() * hv;
                }
            }
        }
        trace.steps.push(OracleStep {
            dict: w,
            bin: m,
            frame: n,
            coefficient: c,
            decrement: energy_decrement(c, pair),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dict::{atom, validate_multidict};
    use crate::kernels::KernelBank;
    use crate::transform::analyze;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn d(s: &str) -> GaborDictParams {
        s.parse().unwrap()
    }

    fn noise(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn factory_atoms_match_dictionary_atoms() {
        for s in ["hann:16:4", "blackman:32:8", "gauss:16:4"] {
            let p = d(s);
            let f = AtomFactory::new(&p, 64).unwrap();
            for (m, n) in [(0, 0), (3, 2), (15, 7)] {
                let want = atom(&p, m, n, 64).unwrap();
                let (start, v) = f.atom(m, n);
                let mut got = vec![ZERO; 64];
                for (i, c) in v.into_iter().enumerate() {
                    got[(start + i) % 64] += c;
                }
                for (a, b) in want.iter().zip(&got) {
                    assert!((a - b).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn brute_force_analysis_matches_fft() {
        let md = validate_multidict(&[d("hann:32:8"), d("gauss:16:4")], 128).unwrap();
        let x = noise(1, 128);
        let bf = brute_force_analysis(Exec::Sequential, &md, &x).unwrap();
        for (w, g) in bf.iter().enumerate() {
            let fft = analyze(md.dict(w), &x).unwrap();
            for (a, b) in g.values.iter().zip(&fft.values) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_gram_structure() {
        let md = validate_multidict(&[d("hann:16:4"), d("blackman:8:4")], 64).unwrap();
        let g = DenseGram::new(&md).unwrap();
        for k in 0..g.size() {
            assert!((g.get(k, k) - 1.0).norm() < 1e-10);
            for j in 0..g.size() {
                assert!((g.get(k, j) - g.get(j, k).conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_gram_column_matches_kernel() {
        let p = d("blackman:16:4");
        let len = 128;
        let md = validate_multidict(&[p], len).unwrap();
        let g = DenseGram::new(&md).unwrap();
        let bank = KernelBank::build(&[p], 0.0).unwrap();
        for (k, j) in [(0, 0), (3, 5), (15, 31), (8, 17)] {
            let col = g.index(0, k, j);
            for n in 0..p.frames(len) {
                for m in 0..p.m {
                    let want = g.get(g.index(0, m, n), col);
                    let got = bank.gram_entry(len, (0, k, j), (0, m, n));
                    assert!((want - got).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dense_gram_size_guard() {
        let md = validate_multidict(&[d("hann:64:16")], 2048).unwrap();
        assert!(matches!(DenseGram::new(&md), Err(MpError::SizeGuard(_))));
    }

    #[test]
    fn truncation_is_strict() {
        let md = validate_multidict(&[d("hann:16:4")], 64).unwrap();
        let g = DenseGram::new(&md).unwrap();
        let t = truncate_gram(&g, 1.0 + 1e-9);
        assert!(t.matrix.iter().all(|v| *v == ZERO));
        let diag = g.get(0, 0).norm();
        let t = truncate_gram(&g, diag);
        assert_eq!(t.get(0, 0), ZERO);
        let eps = 0.05;
        let t = truncate_gram(&g, eps);
        for (a, b) in g.matrix.iter().zip(t.matrix.iter()) {
            if a.norm() <= eps {
                assert_eq!(*b, ZERO);
            } else {
                assert_eq!(a, b);
            }
        }
        let t = truncate_gram(&g, 0.0);
        for (a, b) in g.matrix.iter().zip(t.matrix.iter()) {
            assert_eq!(*a != ZERO, *b != ZERO);
        }
    }

    #[test]
    fn lazy_columns_match_dense() {
        let md = validate_multidict(&[d("hann:16:4"), d("blackman:32:8")], 128).unwrap();
        let mut dense = DenseGram::new(&md).unwrap();
        let mut lazy = LazyGram::new(&md, 0.0).unwrap();
        for (w, m, n) in [(0, 3, 2), (1, 31, 0), (1, 5, 15), (0, 0, 31)] {
            let a = dense.column(w, m, n).unwrap();
            let b = lazy.column(w, m, n).unwrap();
            for (ga, gb) in a.iter().zip(&b) {
                for (x, y) in ga.values.iter().zip(&gb.values) {
                    assert!((x - y).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lazy_block_max_matches_kernel_max() {
        let dicts = [d("hann:16:4"), d("blackman:32:8")];
        let md = validate_multidict(&dicts, 128).unwrap();
        let lazy = LazyGram::new(&md, 1e-3).unwrap();
        let bank = KernelBank::build(&dicts, 1e-3).unwrap();
        for s in 0..2 {
            for t in 0..2 {
                let want = bank.entry(s, t).kernel.max_abs * 1e-3;
                assert!((lazy.threshold(s, t) - want).abs() < 1e-14, "{s} {t}");
            }
        }
    }

    #[test]
    fn signal_mp_removes_single_pair() {
        let p = d("blackman:32:8");
        let md = validate_multidict(&[p], 128).unwrap();
        let a = atom(&p, 5, 7, 128).unwrap();
        let x: Vec<f64> = a.iter().map(|v| 2.0 * (Complex64::new(0.3, 0.8) * v).re).collect();
        let t = signal_domain_mp(Exec::Sequential, &md, &x, 1, false).unwrap();
        assert_eq!((t.steps[0].bin, t.steps[0].frame), (5, 7));
        assert!(t.residual_energies[1] <= 1e-8 * t.residual_energies[0]);
    }

    #[test]
    fn signal_mp_strictly_decreases() {
        let md = validate_multidict(&[d("hann:16:4"), d("hann:32:8")], 128).unwrap();
        let t = signal_domain_mp(Exec::Sequential, &md, &noise(2, 128), 60, false).unwrap();
        assert!(t.residual_energies.windows(2).all(|w| w[1] < w[0]));
        for (s, e) in t.steps.iter().zip(t.residual_energies.windows(2)) {
            assert!((e[0] - e[1] - s.decrement).abs() < 1e-9 * e[0]);
        }
    }

    #[test]
    fn dense_cd_mp_equals_signal_mp() {
        let md = validate_multidict(&[d("hann:16:4"), d("blackman:8:2")], 64).unwrap();
        let x = noise(3, 64);
        for pedantic in [false, true] {
            let a = signal_domain_mp(Exec::Sequential, &md, &x, 40, pedantic).unwrap();
            let mut g = DenseGram::new(&md).unwrap();
            let b = dense_cd_mp(Exec::Sequential, &md, &x, &mut g, 40, pedantic).unwrap();
            assert_eq!(a.steps.len(), b.steps.len());
            for (s, t) in a.steps.iter().zip(&b.steps) {
                assert_eq!((s.dict, s.bin, s.frame), (t.dict, t.bin, t.frame));
                assert!((s.coefficient - t.coefficient).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_signal_gives_empty_traces() {
        let md = validate_multidict(&[d("hann:16:4")], 64).unwrap();
        let mut g = DenseGram::new(&md).unwrap();
        assert!(dense_cd_mp(Exec::Sequential, &md, &[0.0; 64], &mut g, 10, false).unwrap().steps.is_empty());
        assert!(signal_domain_mp(Exec::Sequential, &md, &[0.0; 64], 10, false).unwrap().steps.is_empty());
    }
}
