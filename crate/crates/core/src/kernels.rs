//! Truncated Gram kernels, cross-kernels on the common grid and their
//! modulation tables.
//!
//! For a selected atom at common-grid position `(F_s, T_s)` and a target atom
//! at `(F, T)`, the inner product is
//! `h(F - F_s, T - T_s) * exp(i 2 pi F_s a_com (T - T_s) / M_com)`, where
//! `h(mu, nu) = <g_sel, atom_upd(mu, nu)>` on the grid `(a_com, M_com)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::dict::{GaborDictParams, MultiDict, WindowKind, WindowSpec};
use crate::error::{MpError, Result};
use crate::par::{self, Exec};
use crate::transform::GaborTransform;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Length at which kernels are computed: the smallest common multiple of both
/// hops and channel counts that is at least `2 * max(Lw) + a_com`.
pub fn kernel_support_length(sel: &GaborDictParams, upd: &GaborDictParams) -> usize {
    let step = [sel.a, upd.a, sel.m, upd.m].into_iter().fold(1, lcm);
    let lw = sel.window.support().max(upd.window.support());
    let need = 2 * lw + sel.a.min(upd.a);
    need.div_ceil(step) * step
}

/// Shortest signal length every kernel pair of `dicts` fits into.
pub fn minimum_signal_length(dicts: &[GaborDictParams]) -> usize {
    let mut len = 0;
    for (i, s) in dicts.iter().enumerate() {
        for u in &dicts[i..] {
            len = len.max(kernel_support_length(s, u));
        }
    }
    len
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn check_pair(sel: &GaborDictParams, upd: &GaborDictParams) -> Result<()> {
    let ok = |x: usize, y: usize| x.max(y).is_multiple_of(x.min(y));
    if !ok(sel.a, upd.a) || !ok(sel.m, upd.m) {
        return Err(MpError::Compatibility(format!(
            "kernel pair {sel} / {upd} is not on a common grid"
        )));
    }
    if !sel.m.is_multiple_of(sel.a) || !upd.m.is_multiple_of(upd.a) {
        return Err(MpError::Compatibility(format!(
            "M/a must be integral for {sel} and {upd}"
        )));
    }
    Ok(())
}

/// Rectangular, thresholded kernel over signed lags `mu` (bins) and `nu`
/// (frames) of the common grid. Values are stored `nu`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedKernel {
    pub sel_dict: usize,
    pub upd_dict: usize,
    pub a_com: usize,
    pub m_com: usize,
    pub mu_lo: i64,
    pub mu_hi: i64,
    pub nu_lo: i64,
    pub nu_hi: i64,
    pub threshold: f64,
    pub max_abs: f64,
    pub values: Vec<Complex64>,
}

impl TruncatedKernel {
    pub fn freq_width(&self) -> usize {
        (self.mu_hi - self.mu_lo + 1) as usize
    }

    pub fn time_width(&self) -> usize {
        (self.nu_hi - self.nu_lo + 1) as usize
    }

    /// Kernel value, zero outside the box.
    pub fn get(&self, mu: i64, nu: i64) -> Complex64 {
        if mu < self.mu_lo || mu > self.mu_hi || nu < self.nu_lo || nu > self.nu_hi {
            return ZERO;
        }
        self.values[((nu - self.nu_lo) as usize) * self.freq_width() + (mu - self.mu_lo) as usize]
    }

    /// Row of values at time lag `nu`, indexed from `mu_lo`.
    #[inline]
    pub fn column(&self, nu: i64) -> &[Complex64] {
        let w = self.freq_width();
        let start = (nu - self.nu_lo) as usize * w;
        &self.values[start..start + w]
    }

    pub fn bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<Complex64>()
    }

    /// Wraps a frequency lag into `(-M_com/2, M_com/2]`.
    pub fn wrap_freq(&self, mu: i64) -> i64 {
        wrap_signed(mu, self.m_com as i64)
    }
}

fn wrap_signed(v: i64, period: i64) -> i64 {
    let r = v.rem_euclid(period);
    if r > period / 2 {
        r - period
    } else {
        r
    }
}

/// Computes `h(mu, nu) = <g_sel, atom_upd(mu, nu)>` on the common grid and
/// truncates it to the minimal box holding every `|h| > eps_rel * max|h|`.
/// Sub-threshold entries inside the box are stored as zero.
pub fn compute_cross_kernel(
    sel: &GaborDictParams,
    upd: &GaborDictParams,
    eps_rel: f64,
) -> Result<TruncatedKernel> {
    check_pair(sel, upd)?;
    if !(0.0..1.0).contains(&eps_rel) {
        return Err(MpError::Parameter(format!(
            "kernel threshold must lie in [0, 1), got {eps_rel}"
        )));
    }
    let a_com = sel.a.min(upd.a);
    let m_com = sel.m.max(upd.m);
    let len = kernel_support_length(sel, upd);
    let gs = sel.window_samples()?;
    let cs = gs.len() / 2;
    let mut x = vec![0.0; len];
    for (i, &v) in gs.iter().enumerate() {
        let t = i as i64 - cs as i64;
        x[t.rem_euclid(len as i64) as usize] += v;
    }
    let grid_dict = GaborDictParams::new(upd.window, a_com, m_com);
    let coarse = GaborTransform::new(&grid_dict, len)?.analyze(Exec::Sequential, 0, &x)?;
    let frames = coarse.frames as i64;
    let lw_s = gs.len() as i64;
    let lw_u = upd.window.support() as i64;
    let cu = lw_u / 2;
    let overlaps = |nu: i64| {
        let lo = nu * a_com as i64 - cu;
        let hi = lo + lw_u - 1;
        lo <= lw_s - 1 - cs as i64 && hi >= -(cs as i64)
    };
    let m = m_com as i64;
    let mu_min = -(m - 1) / 2;
    let mu_max = m / 2;
    let nu_min = -(frames - 1) / 2;
    let nu_max = frames / 2;
    let full = |mu: i64, nu: i64| -> Complex64 {
        if !overlaps(nu) {
            return ZERO;
        }
        let n = nu.rem_euclid(frames) as usize;
        if mu >= 0 {
            coarse.get(mu as usize, n)
        } else {
            coarse.get((-mu) as usize, n).conj()
        }
    };
    let mut max_abs: f64 = 0.0;
    for nu in nu_min..=nu_max {
        for mu in mu_min..=mu_max {
            max_abs = max_abs.max(full(mu, nu).norm());
        }
    }
    if max_abs <= 0.0 {
        return Err(MpError::Parameter(format!("kernel {sel} / {upd} vanishes")));
    }
    let thr = eps_rel * max_abs;
    let (mut mu_lo, mut mu_hi, mut nu_lo, mut nu_hi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for nu in nu_min..=nu_max {
        for mu in mu_min..=mu_max {
            if full(mu, nu).norm() > thr {
                mu_lo = mu_lo.min(mu);
                mu_hi = mu_hi.max(mu);
                nu_lo = nu_lo.min(nu);
                nu_hi = nu_hi.max(nu);
            }
        }
    }
    let mut values = Vec::with_capacity(((mu_hi - mu_lo + 1) * (nu_hi - nu_lo + 1)) as usize);
    for nu in nu_lo..=nu_hi {
        for mu in mu_lo..=mu_hi {
            let v = full(mu, nu);
            values.push(if v.norm() > thr { v } else { ZERO });
        }
    }
    Ok(TruncatedKernel {
        sel_dict: 0,
        upd_dict: 0,
        a_com,
        m_com,
        mu_lo,
        mu_hi,
        nu_lo,
        nu_hi,
        threshold: eps_rel,
        max_abs,
        values,
    })
}

/// Unit-modulus factors `exp(i 2 pi r a_com nu / M_com)` for `r < M_com / a_com`
/// over the kernel's time lags, stored `r`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationTable {
    pub period: usize,
    pub nu_lo: i64,
    pub width: usize,
    pub entries: Vec<Complex64>,
}

impl ModulationTable {
    pub fn entry(&self, r: usize, nu: i64) -> Complex64 {
        self.entries[r * self.width + (nu - self.nu_lo) as usize]
    }

    /// Row for residue `r`, indexed from `nu_lo`.
    #[inline]
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.entries[r * self.width..(r + 1) * self.width]
    }

    pub fn bytes(&self) -> usize {
        self.entries.len() * std::mem::size_of::<Complex64>()
    }
}

pub fn build_modulation_table(k: &TruncatedKernel) -> ModulationTable {
    let period = k.m_com / k.a_com;
    let width = k.time_width();
    let m = k.m_com as i64;
    let mut entries = Vec::with_capacity(period * width);
    for r in 0..period as i64 {
        for nu in k.nu_lo..=k.nu_hi {
            let turns = (r * k.a_com as i64 * nu).rem_euclid(m);
            entries.push(if turns == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, 2.0 * PI * turns as f64 / k.m_com as f64)
            });
        }
    }
    ModulationTable {
        period,
        nu_lo: k.nu_lo,
        width,
        entries,
    }
}

/// Inner product of an atom with its conjugate partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConjPair {
    /// Real atom (bin 0 or Nyquist); no partner.
    SelfConjugate,
    /// `<d, conj d>`, zero when the partner falls outside the kernel box.
    Pair(Complex64),
}

/// `<d_{m,n}, conj(d_{m,n})>` read from a same-dictionary kernel; it sits at
/// frequency lag `-2m` and time lag 0, where the modulation is 1.
pub fn conj_pair_inner_product(k: &TruncatedKernel, m: usize, bins_total: usize) -> Result<ConjPair> {
    let reduced = bins_total / 2 + 1;
    if m >= reduced {
        return Err(MpError::Index(format!("bin {m} outside {reduced} reduced bins")));
    }
    if m == 0 || (bins_total.is_multiple_of(2) && m == bins_total / 2) {
        return Ok(ConjPair::SelfConjugate);
    }
    let lag = wrap_signed(-2 * m as i64, bins_total as i64);
    Ok(ConjPair::Pair(k.get(lag, 0)))
}

/// Grid ratios for one (selected, updated) dictionary pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairGeometry {
    /// `M_com / M_sel`
    pub sel_freq: usize,
    /// `a_sel / a_com`
    pub sel_time: usize,
    /// `M_com / M_upd`
    pub upd_freq: usize,
    /// `a_upd / a_com`
    pub upd_time: usize,
    /// `M_com / a_com`
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEntry {
    pub kernel: TruncatedKernel,
    pub table: ModulationTable,
    pub geometry: PairGeometry,
}

/// All kernels, tables and conjugate-pair products of a multi-dictionary.
/// Immutable once built; independent of the signal length.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    dicts: Vec<GaborDictParams>,
    eps_rel: f64,
    entries: Vec<KernelEntry>,
    conj: Vec<Vec<ConjPair>>,
}

impl KernelBank {
    pub fn build(dicts: &[GaborDictParams], eps_rel: f64) -> Result<Self> {
        Self::build_with(Exec::default(), dicts, eps_rel)
    }

    pub fn build_with(exec: Exec, dicts: &[GaborDictParams], eps_rel: f64) -> Result<Self> {
        let w = dicts.len();
        let kernels = par::map_range(exec, w * w, |i| {
            let (s, u) = (i / w, i % w);
            compute_cross_kernel(&dicts[s], &dicts[u], eps_rel).map(|mut k| {
                k.sel_dict = s;
                k.upd_dict = u;
                k
            })
        });
        let kernels = kernels.into_iter().collect::<Result<Vec<_>>>()?;
        Self::assemble(dicts, eps_rel, kernels)
    }

    fn assemble(dicts: &[GaborDictParams], eps_rel: f64, kernels: Vec<TruncatedKernel>) -> Result<Self> {
        let w = dicts.len();
        let entries: Vec<KernelEntry> = kernels
            .into_iter()
            .map(|kernel| {
                let (s, u) = (&dicts[kernel.sel_dict], &dicts[kernel.upd_dict]);
                let geometry = PairGeometry {
                    sel_freq: kernel.m_com / s.m,
                    sel_time: s.a / kernel.a_com,
                    upd_freq: kernel.m_com / u.m,
                    upd_time: u.a / kernel.a_com,
                    period: kernel.m_com / kernel.a_com,
                };
                let table = build_modulation_table(&kernel);
                KernelEntry {
                    kernel,
                    table,
                    geometry,
                }
            })
            .collect();
        let mut conj = Vec::with_capacity(w);
        for (i, d) in dicts.iter().enumerate() {
            let k = &entries[i * w + i].kernel;
            conj.push(
                (0..d.reduced_bins())
                    .map(|m| conj_pair_inner_product(k, m, d.m))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(KernelBank {
            dicts: dicts.to_vec(),
            eps_rel,
            entries,
            conj,
        })
    }

    pub fn dicts(&self) -> &[GaborDictParams] {
        &self.dicts
    }

    pub fn eps_rel(&self) -> f64 {
        self.eps_rel
    }

    pub fn entry(&self, sel: usize, upd: usize) -> &KernelEntry {
        &self.entries[sel * self.dicts.len() + upd]
    }

    pub fn entries(&self) -> &[KernelEntry] {
        &self.entries
    }

    pub fn conj_pair(&self, w: usize, m: usize) -> ConjPair {
        self.conj[w][m]
    }

    /// Largest kernel time extent, in samples, over all pairs.
    pub fn max_time_span(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.kernel.time_width() * e.kernel.a_com)
            .max()
            .unwrap_or(0)
    }

    /// Checks the bank matches `multidict` and that no kernel wraps onto
    /// itself at this signal length.
    pub fn check_signal(&self, multidict: &MultiDict) -> Result<()> {
        if multidict.dicts() != self.dicts.as_slice() {
            return Err(MpError::Parameter("kernel bank built for different dictionaries".into()));
        }
        let len = multidict.len();
        for (i, s) in self.dicts.iter().enumerate() {
            for u in &self.dicts[i..] {
                let lk = kernel_support_length(s, u);
                if len < lk {
                    return Err(MpError::Parameter(format!(
                        "signal length {len} shorter than kernel length {lk} for {s} / {u}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gram entry `<d_sel, d_target>` at signal length `len` rebuilt from the
    /// kernel. `sel` and `target` are `(dict, bin, frame)` with bins over the
    /// full `0..M` range.
    pub fn gram_entry(&self, len: usize, sel: (usize, usize, usize), target: (usize, usize, usize)) -> Complex64 {
        let e = self.entry(sel.0, target.0);
        let g = e.geometry;
        let k = &e.kernel;
        let fs = (sel.1 * g.sel_freq) as i64;
        let ts = (sel.2 * g.sel_time) as i64;
        let f = (target.1 * g.upd_freq) as i64;
        let t = (target.2 * g.upd_time) as i64;
        let mu = k.wrap_freq(f - fs);
        let nu = wrap_signed(t - ts, (len / k.a_com) as i64);
        let v = k.get(mu, nu);
        if v == ZERO {
            return ZERO;
        }
        v * e.table.entry(fs as usize % g.period, nu)
    }

    pub fn total_bytes(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.kernel.bytes() + e.table.bytes())
            .sum()
    }
}

const CACHE_MAGIC: &[u8; 8] = b"MGMPKRN\0";
const CACHE_VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_i64(out: &mut Vec<u8>, v: i64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_dict(out: &mut Vec<u8>, d: &GaborDictParams) {
    out.push(d.window.kind.code());
    put_u64(out, d.window.gl as u64);
    put_f64(out, d.window.tfr);
    put_u64(out, d.a as u64);
    put_u64(out, d.m as u64);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(MpError::Cache("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn dict(&mut self) -> Result<GaborDictParams> {
        let kind = WindowKind::from_code(self.u8()?)
            .ok_or_else(|| MpError::Cache("unknown window kind".into()))?;
        let gl = self.u64()? as usize;
        let tfr = self.f64()?;
        let a = self.u64()? as usize;
        let m = self.u64()? as usize;
        Ok(GaborDictParams::new(WindowSpec::new(kind, gl, tfr), a, m))
    }
}

impl KernelBank {
    /// Serializes every kernel. Complex values are little-endian f64 pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        put_f64(&mut out, self.eps_rel);
        out.extend_from_slice(&(self.dicts.len() as u32).to_le_bytes());
        for d in &self.dicts {
            put_dict(&mut out, d);
        }
        for e in &self.entries {
            let k = &e.kernel;
            put_dict(&mut out, &self.dicts[k.sel_dict]);
            put_dict(&mut out, &self.dicts[k.upd_dict]);
            put_u64(&mut out, k.a_com as u64);
            put_u64(&mut out, k.m_com as u64);
            for v in [k.mu_lo, k.mu_hi, k.nu_lo, k.nu_hi] {
                put_i64(&mut out, v);
            }
            put_f64(&mut out, k.max_abs);
            put_u64(&mut out, k.values.len() as u64);
            for v in &k.values {
                put_f64(&mut out, v.re);
                put_f64(&mut out, v.im);
            }
        }
        out
    }

    /// Parses a cache produced by [`KernelBank::to_bytes`]; fails unless it
    /// was built for exactly `dicts` and `eps_rel`.
    pub fn from_bytes(bytes: &[u8], dicts: &[GaborDictParams], eps_rel: f64) -> Result<Self> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        if c.take(8)? != CACHE_MAGIC {
            return Err(MpError::Cache("bad magic".into()));
        }
        let version = c.u32()?;
        if version != CACHE_VERSION {
            return Err(MpError::Cache(format!("unsupported version {version}")));
        }
        let eps = c.f64()?;
        if eps.to_bits() != eps_rel.to_bits() {
            return Err(MpError::Cache(format!("threshold {eps} != {eps_rel}")));
        }
        let w = c.u32()? as usize;
        let stored = (0..w).map(|_| c.dict()).collect::<Result<Vec<_>>>()?;
        if stored != dicts {
            return Err(MpError::Cache("dictionary set differs".into()));
        }
        let mut kernels = Vec::with_capacity(w * w);
        for i in 0..w * w {
            let (s, u) = (i / w, i % w);
            if c.dict()? != dicts[s] || c.dict()? != dicts[u] {
                return Err(MpError::Cache(format!("kernel {i} keyed for another pair")));
            }
            let a_com = c.u64()? as usize;
            let m_com = c.u64()? as usize;
            let (mu_lo, mu_hi, nu_lo, nu_hi) = (c.i64()?, c.i64()?, c.i64()?, c.i64()?);
            let max_abs = c.f64()?;
            let n = c.u64()? as usize;
            if mu_hi < mu_lo || nu_hi < nu_lo || n as i64 != (mu_hi - mu_lo + 1) * (nu_hi - nu_lo + 1) {
                return Err(MpError::Cache("inconsistent kernel box".into()));
            }
            let values = (0..n)
                .map(|_| Ok(Complex64::new(c.f64()?, c.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            kernels.push(TruncatedKernel {
                sel_dict: s,
                upd_dict: u,
                a_com,
                m_com,
                mu_lo,
                mu_hi,
                nu_lo,
                nu_hi,
                threshold: eps_rel,
                max_abs,
                values,
            });
        }
        if c.pos != bytes.len() {
            return Err(MpError::Cache("trailing bytes".into()));
        }
        Self::assemble(dicts, eps_rel, kernels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| MpError::Cache(e.to_string()))?;
        f.write_all(&self.to_bytes()).map_err(|e| MpError::Cache(e.to_string()))
    }

    pub fn load(path: &Path, dicts: &[GaborDictParams], eps_rel: f64) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| MpError::Cache(e.to_string()))?;
        Self::from_bytes(&buf, dicts, eps_rel)
    }

    /// Loads a matching cache or computes the bank and (re)writes the cache.
    pub fn load_or_build(path: &Path, dicts: &[GaborDictParams], eps_rel: f64) -> Result<Self> {
        match Self::load(path, dicts, eps_rel) {
            Ok(bank) => Ok(bank),
            Err(_) => {
                let bank = Self::build(dicts, eps_rel)?;
                bank.save(path)?;
                Ok(bank)
            }
        }
    }
}
