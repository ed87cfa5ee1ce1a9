//! Analysis and synthesis between the signal and the reduced coefficient domain.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dict::{GaborDictParams, MultiDict};
use crate::error::{MpError, Result};
use crate::par::{self, Exec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Frames handled per synthesis work item.
const SYNTH_BLOCK: usize = 32;

/// Reduced coefficient plane of one dictionary, linearized as `m + n * bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrid {
    pub dict_index: usize,
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<Complex64>,
}

impl CoefficientGrid {
    pub fn zeros(dict_index: usize, dict: &GaborDictParams, len: usize) -> Self {
        let bins = dict.reduced_bins();
        let frames = dict.frames(len);
        CoefficientGrid {
            dict_index,
            bins,
            frames,
            values: vec![ZERO; bins * frames],
        }
    }

    #[inline]
    pub fn index(&self, m: usize, n: usize) -> usize {
        m + n * self.bins
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.values[m + n * self.bins]
    }

    #[inline]
    pub fn get_mut(&mut self, m: usize, n: usize) -> &mut Complex64 {
        &mut self.values[m + n * self.bins]
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.values[n * self.bins..(n + 1) * self.bins]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }
}

/// Precomputed window and FFT plans for one dictionary at one signal length.
#[derive(Clone)]
pub struct GaborTransform {
    params: GaborDictParams,
    len: usize,
    window: Arc<Vec<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GaborTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborTransform")
            .field("params", &self.params)
            .field("len", &self.len)
            .finish()
    }
}

impl GaborTransform {
    pub fn new(params: &GaborDictParams, len: usize) -> Result<Self> {
        params.check_length(len)?;
        let window = params.window_samples()?;
        let mut planner = FftPlanner::new();
        Ok(GaborTransform {
            params: *params,
            len,
            window: Arc::new(window),
            fwd: planner.plan_fft_forward(params.m),
            inv: planner.plan_fft_inverse(params.m),
        })
    }

    pub fn params(&self) -> &GaborDictParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// `value(m, n) = sum_l x(l) conj(atom(m, n)(l))` for the reduced bins.
    pub fn analyze(&self, exec: Exec, dict_index: usize, x: &[f64]) -> Result<CoefficientGrid> {
        if x.len() != self.len {
            return Err(MpError::Dimension(format!(
                "signal length {} but transform bound to {}",
                x.len(),
                self.len
            )));
        }
        let mut grid = CoefficientGrid::zeros(dict_index, &self.params, self.len);
        let bins = grid.bins;
        let m = self.params.m;
        let a = self.params.a;
        let len = self.len;
        let g = &self.window;
        let center = g.len() / 2;
        let scratch_len = self.fwd.get_inplace_scratch_len();
        par::for_each_chunk(
            exec,
            &mut grid.values,
            bins,
            || (vec![ZERO; m], vec![ZERO; scratch_len]),
            |(buf, scratch), n, out| {
                buf.fill(ZERO);
                let mut idx = (n * a + len - center % len) % len;
                let mut slot = (m - center % m) % m;
                for &gv in g.iter() {
                    buf[slot].re += x[idx] * gv;
                    idx += 1;
                    if idx == len {
                        idx = 0;
                    }
                    slot += 1;
                    if slot == m {
                        slot = 0;
                    }
                }
                self.fwd.process_with_scratch(buf, scratch);
                out.copy_from_slice(&buf[..bins]);
            },
        );
        Ok(grid)
    }

    /// Adds this dictionary's contribution `D c + conj(D) conj(c)` to `out`.
    pub fn synthesize_into(&self, exec: Exec, coeffs: &CoefficientGrid, out: &mut [f64]) -> Result<()> {
        let bins = self.params.reduced_bins();
        let frames = self.params.frames(self.len);
        if coeffs.bins != bins || coeffs.frames != frames {
            return Err(MpError::Dimension(format!(
                "grid {}x{} does not match dictionary {}x{}",
                coeffs.bins, coeffs.frames, bins, frames
            )));
        }
        if out.len() != self.len {
            return Err(MpError::Dimension(format!(
                "output length {} but transform bound to {}",
                out.len(),
                self.len
            )));
        }
        let m = self.params.m;
        let a = self.params.a;
        let len = self.len;
        let g = &self.window;
        let lw = g.len();
        let center = lw / 2;
        let blocks = frames.div_ceil(SYNTH_BLOCK);
        let scratch_len = self.inv.get_inplace_scratch_len();
        let parts: Vec<Option<Vec<f64>>> = par::map_range(exec, blocks, |b| {
            let first = b * SYNTH_BLOCK;
            let last = (first + SYNTH_BLOCK).min(frames);
            if (first..last).all(|n| coeffs.frame(n).iter().all(|c| *c == ZERO)) {
                return None;
            }
            let span = (last - first - 1) * a + lw;
            let mut acc = vec![0.0; span];
            let mut buf = vec![ZERO; m];
            let mut scratch = vec![ZERO; scratch_len];
            for n in first..last {
                let frame = coeffs.frame(n);
                if frame.iter().all(|c| *c == ZERO) {
                    continue;
                }
                buf.fill(ZERO);
                buf[..bins].copy_from_slice(frame);
                for (k, c) in frame.iter().enumerate().skip(1) {
                    if !self.params.is_self_conjugate(k) {
                        buf[m - k] += c.conj();
                    }
                }
                self.inv.process_with_scratch(&mut buf, &mut scratch);
                let base = (n - first) * a;
                let mut slot = (m - center % m) % m;
                for (i, &gv) in g.iter().enumerate() {
                    acc[base + i] += gv * buf[slot].re;
                    slot += 1;
                    if slot == m {
                        slot = 0;
                    }
                }
            }
            Some(acc)
        });
        for (b, part) in parts.into_iter().enumerate() {
            let Some(part) = part else { continue };
            let start = (b * SYNTH_BLOCK * a + len - center % len) % len;
            let mut idx = start;
            for v in part {
                out[idx] += v;
                idx += 1;
                if idx == len {
                    idx = 0;
                }
            }
        }
        Ok(())
    }
}

/// Analysis of `x` with a single dictionary.
pub fn analyze(dict: &GaborDictParams, x: &[f64]) -> Result<CoefficientGrid> {
    GaborTransform::new(dict, x.len())?.analyze(Exec::default(), 0, x)
}

/// Real signal from one reduced grid per dictionary.
pub fn synthesize(multidict: &MultiDict, coeffs: &[CoefficientGrid]) -> Result<Vec<f64>> {
    synthesize_with(Exec::default(), multidict, coeffs)
}

pub fn synthesize_with(exec: Exec, multidict: &MultiDict, coeffs: &[CoefficientGrid]) -> Result<Vec<f64>> {
    if coeffs.len() != multidict.count() {
        return Err(MpError::Dimension(format!(
            "{} coefficient grids for {} dictionaries",
            coeffs.len(),
            multidict.count()
        )));
    }
    let mut out = vec![0.0; multidict.len()];
    for (d, c) in multidict.dicts().iter().zip(coeffs) {
        GaborTransform::new(d, multidict.len())?.synthesize_into(exec, c, &mut out)?;
    }
    Ok(out)
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
