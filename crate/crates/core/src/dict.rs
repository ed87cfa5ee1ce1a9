//! Windows, single Gabor dictionaries and validated multi-Gabor collections.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MpError, Result};

/// Relative amplitude below which Gaussian tails are cut.
const GAUSS_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Blackman,
    Gauss,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Hann => "hann",
            WindowKind::Blackman => "blackman",
            WindowKind::Gauss => "gauss",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            WindowKind::Hann => 0,
            WindowKind::Blackman => 1,
            WindowKind::Gauss => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(WindowKind::Hann),
            1 => Some(WindowKind::Blackman),
            2 => Some(WindowKind::Gauss),
            _ => None,
        }
    }
}

impl FromStr for WindowKind {
    type Err = MpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "blackman" => Ok(WindowKind::Blackman),
            "gauss" | "gaussian" => Ok(WindowKind::Gauss),
            other => Err(MpError::Parameter(format!("unknown window kind '{other}'"))),
        }
    }
}

/// Window description. `gl` is the FIR length; `tfr` (samples²) only
/// matters for the Gaussian, whose support is derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub gl: usize,
    pub tfr: f64,
}

impl WindowSpec {
    pub fn new(kind: WindowKind, gl: usize, tfr: f64) -> Self {
        WindowSpec { kind, gl, tfr }
    }

    pub fn fir(kind: WindowKind, gl: usize) -> Self {
        WindowSpec { kind, gl, tfr: 0.0 }
    }

    fn check(&self) -> Result<()> {
        if self.gl == 0 {
            return Err(MpError::Parameter("window length must be positive".into()));
        }
        if self.kind == WindowKind::Gauss && !(self.tfr > 0.0 && self.tfr.is_finite()) {
            return Err(MpError::Parameter(format!(
                "gaussian tfr must be positive, got {}",
                self.tfr
            )));
        }
        Ok(())
    }

    /// Effective support `Lw` in samples.
    pub fn support(&self) -> usize {
        match self.kind {
            WindowKind::Hann | WindowKind::Blackman => self.gl,
            WindowKind::Gauss => 2 * gauss_half_support(self.tfr) + 1,
        }
    }

    /// Index of the peak inside the materialized vector.
    pub fn center(&self) -> usize {
        self.support() / 2
    }
}

fn gauss_half_support(tfr: f64) -> usize {
    // largest l with exp(-pi l^2 / tfr) > GAUSS_TAIL
    let bound = (tfr * (1.0 / GAUSS_TAIL).ln() / PI).sqrt();
    let mut half = bound.floor() as usize;
    while half > 0 && (-PI * (half * half) as f64 / tfr).exp() <= GAUSS_TAIL {
        half -= 1;
    }
    while (-PI * ((half + 1) * (half + 1)) as f64 / tfr).exp() > GAUSS_TAIL {
        half += 1;
    }
    half
}

/// Materializes the window: length `Lw`, unit 2-norm, peak at `Lw / 2`.
pub fn make_window(spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.check()?;
    let lw = spec.support();
    let center = lw / 2;
    let gl = spec.gl as f64;
    let mut g: Vec<f64> = (0..lw)
        .map(|i| {
            let l = i as f64 - center as f64;
            match spec.kind {
                WindowKind::Hann => 0.5 + 0.5 * (2.0 * PI * l / gl).cos(),
                WindowKind::Blackman => {
                    0.42 + 0.5 * (2.0 * PI * l / gl).cos() + 0.08 * (4.0 * PI * l / gl).cos()
                }
                WindowKind::Gauss => (-PI * l * l / spec.tfr).exp(),
            }
        })
        .collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return Err(MpError::Parameter("window has zero energy".into()));
    }
    g.iter_mut().for_each(|v| *v /= norm);
    Ok(g)
}

/// One Gabor dictionary: window, hop `a`, `m` frequency channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborDictParams {
    pub window: WindowSpec,
    pub a: usize,
    pub m: usize,
}

impl GaborDictParams {
    pub fn new(window: WindowSpec, a: usize, m: usize) -> Self {
        GaborDictParams { window, a, m }
    }

    /// FIR dictionary with `gl = m`.
    pub fn fir(kind: WindowKind, m: usize, a: usize) -> Self {
        GaborDictParams::new(WindowSpec::fir(kind, m), a, m)
    }

    /// Gaussian dictionary with the grid-matched `tfr = a * m`.
    pub fn gauss(m: usize, a: usize) -> Self {
        GaborDictParams::new(WindowSpec::new(WindowKind::Gauss, m, (a * m) as f64), a, m)
    }

    /// `floor(M/2) + 1` non-negative frequency bins.
    pub fn reduced_bins(&self) -> usize {
        self.m / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        len / self.a
    }

    pub fn redundancy(&self) -> usize {
        self.m / self.a
    }

    /// Bins whose atom is real: 0 and, for even M, M/2.
    pub fn is_self_conjugate(&self, bin: usize) -> bool {
        bin == 0 || (self.m.is_multiple_of(2) && bin == self.m / 2)
    }

    pub fn window_samples(&self) -> Result<Vec<f64>> {
        make_window(&self.window)
    }

    fn check_alone(&self) -> Result<()> {
        self.window.check()?;
        if self.a == 0 || self.m == 0 {
            return Err(MpError::Parameter(format!(
                "hop and channel count must be positive ({self})"
            )));
        }
        if !self.m.is_multiple_of(self.a) {
            return Err(MpError::Compatibility(format!(
                "M/a must be an integer for {self} (M={}, a={})",
                self.m, self.a
            )));
        }
        Ok(())
    }

    /// Checks that the dictionary fits a signal of length `len`.
    pub fn check_length(&self, len: usize) -> Result<()> {
        self.check_alone()?;
        if len == 0 || !len.is_multiple_of(self.a) {
            return Err(MpError::Compatibility(format!(
                "hop a={} does not divide L={len}",
                self.a
            )));
        }
        if !len.is_multiple_of(self.m) {
            return Err(MpError::Compatibility(format!(
                "M={} does not divide L={len}",
                self.m
            )));
        }
        if self.window.support() > len {
            return Err(MpError::Parameter(format!(
                "window support {} exceeds L={len}",
                self.window.support()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for GaborDictParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.window.kind.name(), self.m, self.a)?;
        match self.window.kind {
            WindowKind::Gauss if self.window.tfr != (self.a * self.m) as f64 => {
                write!(f, ":{}", self.window.tfr)
            }
            WindowKind::Gauss => Ok(()),
            _ if self.window.gl != self.m => write!(f, ":{}", self.window.gl),
            _ => Ok(()),
        }
    }
}

/// Parses `<kind>:<M>:<a>[:gl]`. For `gauss` the optional field is the
/// time-frequency ratio instead, defaulting to `a * M`.
impl FromStr for GaborDictParams {
    type Err = MpError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(MpError::Parameter(format!(
                "dictionary spec '{s}' must look like kind:M:a[:gl]"
            )));
        }
        let kind: WindowKind = parts[0].parse()?;
        let int = |p: &str, what: &str| -> Result<usize> {
            p.parse::<usize>()
                .map_err(|_| MpError::Parameter(format!("bad {what} '{p}' in '{s}'")))
        };
        let m = int(parts[1], "M")?;
        let a = int(parts[2], "a")?;
        let params = match (kind, parts.get(3)) {
            (WindowKind::Gauss, None) => GaborDictParams::gauss(m, a),
            (WindowKind::Gauss, Some(t)) => {
                let tfr = t
                    .parse::<f64>()
                    .map_err(|_| MpError::Parameter(format!("bad tfr '{t}' in '{s}'")))?;
                GaborDictParams::new(WindowSpec::new(kind, m, tfr), a, m)
            }
            (_, None) => GaborDictParams::fir(kind, m, a),
            (_, Some(gl)) => GaborDictParams::new(WindowSpec::fir(kind, int(gl, "gl")?), a, m),
        };
        params.check_alone()?;
        Ok(params)
    }
}

/// A validated, ordered collection of Gabor dictionaries bound to a signal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDict {
    dicts: Vec<GaborDictParams>,
    len: usize,
    a_min: usize,
    m_max: usize,
}

impl MultiDict {
    pub fn dicts(&self) -> &[GaborDictParams] {
        &self.dicts
    }

    pub fn dict(&self, w: usize) -> &GaborDictParams {
        &self.dicts[w]
    }

    pub fn count(&self) -> usize {
        self.dicts.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.dicts.is_empty()
    }

    pub fn a_min(&self) -> usize {
        self.a_min
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Number of reduced atoms over all dictionaries.
    pub fn reduced_atoms(&self) -> usize {
        self.dicts
            .iter()
            .map(|d| d.reduced_bins() * d.frames(self.len))
            .sum()
    }

    /// Number of full complex atoms over all dictionaries.
    pub fn total_atoms(&self) -> usize {
        self.dicts.iter().map(|d| d.m * d.frames(self.len)).sum()
    }
}

/// Checks the pairwise divisibility rules and binds the dictionaries to `len`.
pub fn validate_multidict(params: &[GaborDictParams], len: usize) -> Result<MultiDict> {
    if params.is_empty() {
        return Err(MpError::Parameter("at least one dictionary is required".into()));
    }
    for d in params {
        d.check_length(len)?;
    }
    for (u, du) in params.iter().enumerate() {
        for (v, dv) in params.iter().enumerate().skip(u + 1) {
            let (lo, hi) = (du.a.min(dv.a), du.a.max(dv.a));
            if hi % lo != 0 {
                return Err(MpError::Compatibility(format!(
                    "dictionaries {u} ({du}) and {v} ({dv}): hop {lo} does not divide {hi}"
                )));
            }
            let (lo, hi) = (du.m.min(dv.m), du.m.max(dv.m));
            if hi % lo != 0 {
                return Err(MpError::Compatibility(format!(
                    "dictionaries {u} ({du}) and {v} ({dv}): M={lo} does not divide M={hi}"
                )));
            }
        }
    }
    let a_min = params.iter().map(|d| d.a).min().unwrap_or(1);
    let m_max = params.iter().map(|d| d.m).max().unwrap_or(1);
    Ok(MultiDict {
        dicts: params.to_vec(),
        len,
        a_min,
        m_max,
    })
}

/// Materializes atom `(m, n)` at length `len` with circular indexing.
pub fn atom(dict: &GaborDictParams, m: usize, n: usize, len: usize) -> Result<Vec<Complex64>> {
    dict.check_length(len)?;
    let frames = dict.frames(len);
    if m >= dict.m || n >= frames {
        return Err(MpError::Index(format!(
            "atom ({m}, {n}) outside {}x{frames}",
            dict.m
        )));
    }
    let g = dict.window_samples()?;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let center = g.len() / 2;
    for (i, &gv) in g.iter().enumerate() {
        let t = i as i64 - center as i64;
        let l = (n as i64 * dict.a as i64 + t).rem_euclid(len as i64) as usize;
        let phase = 2.0 * PI * ((m as i64 * t).rem_euclid(dict.m as i64)) as f64 / dict.m as f64;
        out[l] += Complex64::from_polar(gv, phase);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm2(v: &[Complex64]) -> f64 {
        v.iter().map(|c| c.norm_sqr()).sum()
    }

    #[test]
    fn hann_four_samples() {
        let g = make_window(&WindowSpec::fir(WindowKind::Hann, 4)).unwrap();
        let s = 1.5f64.sqrt();
        let expect = [0.0, 0.5 / s, 1.0 / s, 0.5 / s];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{g:?}");
        }
        assert!((g[1] - 0.40825).abs() < 1e-5 && (g[2] - 0.81650).abs() < 1e-5);
    }

    #[test]
    fn unit_norm_all_kinds() {
        for spec in [
            WindowSpec::fir(WindowKind::Hann, 33),
            WindowSpec::fir(WindowKind::Blackman, 64),
            WindowSpec::new(WindowKind::Gauss, 64, 96.0),
        ] {
            let g = make_window(&spec).unwrap();
            let e: f64 = g.iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            assert_eq!(g.len(), spec.support());
            let peak = g
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            assert_eq!(peak.0, g.len() / 2);
        }
    }

    #[test]
    fn gauss_grid_matched() {
        let d = GaborDictParams::gauss(2048, 512);
        let g = d.window_samples().unwrap();
        assert_eq!(g.len() % 2, 1);
        let c = g.len() / 2;
        for i in 0..c {
            assert!((g[c - i] - g[c + i]).abs() < 1e-15);
        }
        let ratio = g[c + 1024] / g[c];
        assert!((ratio - (-PI).exp()).abs() < 1e-12);
        // tail sample just outside must fall under the cut
        let h = c as f64 + 1.0;
        assert!((-PI * h * h / d.window.tfr).exp() <= GAUSS_TAIL);
        assert!(g[0] / g[c] > GAUSS_TAIL);
    }

    #[test]
    fn bad_window_params() {
        assert!(make_window(&WindowSpec::fir(WindowKind::Hann, 0)).is_err());
        assert!(make_window(&WindowSpec::new(WindowKind::Gauss, 8, 0.0)).is_err());
        assert!(make_window(&WindowSpec::new(WindowKind::Gauss, 8, -1.0)).is_err());
    }

    #[test]
    fn multidict_examples() {
        let l = 1 << 16;
        let md = validate_multidict(&[GaborDictParams::fir(WindowKind::Hann, 2048, 512)], l).unwrap();
        assert_eq!((md.a_min(), md.m_max()), (512, 2048));
        let md = validate_multidict(
            &[
                GaborDictParams::fir(WindowKind::Blackman, 512, 128),
                GaborDictParams::fir(WindowKind::Blackman, 2048, 512),
            ],
            l,
        )
        .unwrap();
        assert_eq!((md.a_min(), md.m_max()), (128, 2048));
        let err = validate_multidict(
            &[
                GaborDictParams::fir(WindowKind::Hann, 384, 96),
                GaborDictParams::fir(WindowKind::Hann, 512, 128),
            ],
            384 * 512,
        )
        .unwrap_err();
        assert!(matches!(err, MpError::Compatibility(ref s) if s.contains("96")), "{err}");
    }

    #[test]
    fn multidict_length_rules() {
        let d = GaborDictParams::fir(WindowKind::Hann, 64, 16);
        assert!(matches!(validate_multidict(&[d], 1000), Err(MpError::Compatibility(_))));
        assert!(matches!(validate_multidict(&[d], 48), Err(MpError::Compatibility(_))));
        assert!(validate_multidict(&[], 64).is_err());
        let odd = GaborDictParams::fir(WindowKind::Hann, 64, 24);
        assert!(matches!(validate_multidict(&[odd], 64 * 24), Err(MpError::Compatibility(_))));
    }

    #[test]
    fn parse_spec_strings() {
        let d: GaborDictParams = "blackman:2048:512".parse().unwrap();
        assert_eq!(d, GaborDictParams::fir(WindowKind::Blackman, 2048, 512));
        let d: GaborDictParams = "hann:512:128:256".parse().unwrap();
        assert_eq!(d.window.gl, 256);
        let d: GaborDictParams = "gauss:2048:512".parse().unwrap();
        assert_eq!(d.window.tfr, (2048 * 512) as f64);
        assert_eq!(d.to_string(), "gauss:2048:512");
        assert!("kaiser:8:2".parse::<GaborDictParams>().is_err());
        assert!("hann:8".parse::<GaborDictParams>().is_err());
        assert!("hann:8:3".parse::<GaborDictParams>().is_err());
    }

    #[test]
    fn atom_basics() {
        let d = GaborDictParams::fir(WindowKind::Blackman, 8, 4);
        let len = 32;
        let a00 = atom(&d, 0, 0, len).unwrap();
        let g = d.window_samples().unwrap();
        for (i, &gv) in g.iter().enumerate() {
            let l = (i as i64 - 4).rem_euclid(len as i64) as usize;
            assert!((a00[l].re - gv).abs() < 1e-15 && a00[l].im == 0.0);
        }
        for m in 0..8 {
            for n in 0..8 {
                let at = atom(&d, m, n, len).unwrap();
                assert!((norm2(&at) - 1.0).abs() < 1e-12);
                for (l, v) in at.iter().enumerate() {
                    let src = (l + len - n * 4) % len;
                    assert!((v.norm() - a00[src].norm()).abs() < 1e-14);
                }
                let conj = atom(&d, (8 - m) % 8, n, len).unwrap();
                for (c, v) in conj.iter().zip(&at) {
                    assert!((c - v.conj()).norm() < 1e-14);
                }
            }
        }
        assert!(matches!(atom(&d, 8, 0, len), Err(MpError::Index(_))));
        assert!(matches!(atom(&d, 0, 8, len), Err(MpError::Index(_))));
    }

    #[test]
    fn redundancy_matches_atom_count() {
        let d = GaborDictParams::fir(WindowKind::Hann, 64, 16);
        let len = 1024;
        assert_eq!(d.m * d.frames(len), d.redundancy() * len);
    }

    fn arb_dict() -> impl Strategy<Value = GaborDictParams> {
        (0u32..4, 0u32..3).prop_map(|(mexp, rexp)| {
            let m = 8usize << mexp;
            let a = (m >> rexp).max(1);
            GaborDictParams::fir(WindowKind::Hann, m, a)
        })
    }

    proptest! {
        #[test]
        fn validation_is_order_independent(
            mut dicts in proptest::collection::vec(arb_dict(), 1..5),
            extra in prop_oneof![Just(None), (1usize..5).prop_map(Some)],
            seed in any::<u64>(),
        ) {
            // optionally inject an odd hop to force some rejections
            if let Some(k) = extra {
                dicts.push(GaborDictParams::fir(WindowKind::Hann, 24 * k, 6 * k));
            }
            let len = 64 * 3 * 5 * 4 * 16;
            let first = validate_multidict(&dicts, len);
            let mut perm = dicts.clone();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let second = validate_multidict(&perm, len);
            prop_assert_eq!(first.is_ok(), second.is_ok());
            if let (Ok(x), Ok(y)) = (first, second) {
                prop_assert_eq!(x.a_min(), y.a_min());
                prop_assert_eq!(x.m_max(), y.m_max());
            }
        }
    }
}
