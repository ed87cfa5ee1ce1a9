//! Coefficient-domain matching pursuit: selection, conjugate-pair adjustment,
//! kernel residual updates, error bookkeeping and resets.

use std::sync::Arc;

use num_complex::Complex64;

use crate::dict::MultiDict;
use crate::error::{MpError, Result};
use crate::kernels::{ConjPair, KernelBank};
use crate::maxtree::{MaxForest, ScoreGrid};
use crate::par::Exec;
use crate::transform::{energy, CoefficientGrid, GaborTransform};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const DEGENERATE_LIMIT: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MpConfig {
    /// Stop once `10 log10(E_k / |x|^2)` reaches this level.
    pub target_err_db: f64,
    /// Selection budget; `None` means `L / 5`.
    pub max_iterations: Option<usize>,
    /// Relative kernel truncation threshold.
    pub kernel_threshold: f64,
    pub pedantic: bool,
    pub resets_enabled: bool,
    /// Selections between resets; `None` derives it from `L` and the threshold.
    pub reset_max_iterations: Option<usize>,
    /// Reset once the estimate fell this far below the last exact energy;
    /// `None` means `10 log10(kernel_threshold)`.
    pub reset_err_db: Option<f64>,
    pub reset_delta: f64,
    pub exec: Exec,
}

impl Default for MpConfig {
    fn default() -> Self {
        MpConfig {
            target_err_db: -40.0,
            max_iterations: None,
            kernel_threshold: 1e-4,
            pedantic: false,
            resets_enabled: false,
            reset_max_iterations: None,
            reset_err_db: None,
            reset_delta: 0.4,
            exec: Exec::default(),
        }
    }
}

impl MpConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.target_err_db.is_finite() && self.target_err_db != f64::NEG_INFINITY {
            return Err(MpError::Parameter(format!("target error {} dB", self.target_err_db)));
        }
        if !(0.0..1.0).contains(&self.kernel_threshold) {
            return Err(MpError::Parameter(format!(
                "kernel threshold {} outside [0, 1)",
                self.kernel_threshold
            )));
        }
        if !(self.reset_delta > 0.0 && self.reset_delta < 0.5) {
            return Err(MpError::Parameter(format!("reset delta {} outside (0, 1/2)", self.reset_delta)));
        }
        if self.reset_max_iterations == Some(0) {
            return Err(MpError::Parameter("reset iteration limit must be positive".into()));
        }
        Ok(())
    }

    pub fn max_iterations_for(&self, len: usize) -> usize {
        self.max_iterations.unwrap_or(len / 5)
    }

    pub fn reset_iterations_for(&self, len: usize) -> usize {
        self.reset_max_iterations.unwrap_or_else(|| {
            if self.kernel_threshold > 0.0 {
                ((len as f64 * 5e-6 / self.kernel_threshold).round() as usize).max(100)
            } else {
                usize::MAX
            }
        })
    }

    pub fn reset_err_db_value(&self) -> f64 {
        self.reset_err_db.unwrap_or_else(|| {
            if self.kernel_threshold > 0.0 {
                10.0 * self.kernel_threshold.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetReached,
    MaxIterations,
    /// Accumulated decrements exceed the last exact energy.
    Emergency,
    /// No coefficient left with positive score.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetTrigger {
    /// `eps * S >= delta * |top coefficient|`
    Drift,
    IterationLimit,
    ErrorDrop,
    Emergency,
    Manual,
}

/// One selection: position, adjusted coefficient, energy decrement and the
/// error estimate after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub k: usize,
    pub dict: usize,
    pub bin: usize,
    pub frame: usize,
    /// Residual coefficient at selection time, before adjustment.
    pub selected: Complex64,
    pub coefficient: Complex64,
    pub decrement: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetRecord {
    pub k: usize,
    pub exact_energy: f64,
    pub trigger: ResetTrigger,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTrace {
    pub selections: Vec<StepReport>,
    pub resets: Vec<ResetRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advance {
    Step(StepReport),
    Reset(ResetTrigger),
    Stop(StopReason),
}

/// Current best candidate without selecting it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub dict: usize,
    pub bin: usize,
    pub frame: usize,
    pub score: f64,
    pub coefficient: Complex64,
}

/// `2 (|c|^2 + Re(rho c^2))`: energy of `c d + conj(c) conj(d)` with
/// `rho = <d, conj d>`.
pub fn pair_energy(c: Complex64, rho: Complex64) -> f64 {
    2.0 * (c.norm_sqr() + (rho * c * c).re)
}

/// Coefficient `c~` such that `c~ d + conj(c~) conj(d)` is the orthogonal
/// projection onto `span{d, conj d}`, given `c = <r, d>` and
/// `rho = <d, conj d>`.
pub fn adjust_coefficient(c: Complex64, pair: ConjPair) -> Result<Complex64> {
    match pair {
        ConjPair::SelfConjugate => Ok(Complex64::new(c.re, 0.0)),
        ConjPair::Pair(rho) => {
            let r2 = rho.norm_sqr();
            if r2.sqrt() >= DEGENERATE_LIMIT {
                return Err(MpError::DegeneratePair(r2.sqrt()));
            }
            Ok((c - (rho * c).conj()) / (1.0 - r2))
        }
    }
}

/// Energy removed by selecting `adjusted`.
pub fn energy_decrement(adjusted: Complex64, pair: ConjPair) -> f64 {
    match pair {
        ConjPair::SelfConjugate => adjusted.re * adjusted.re,
        ConjPair::Pair(rho) => pair_energy(adjusted, rho),
    }
}

pub fn selection_score(c: Complex64, pair: ConjPair, pedantic: bool) -> f64 {
    match pair {
        ConjPair::Pair(rho) if pedantic => match adjust_coefficient(c, pair) {
            Ok(ct) => pair_energy(ct, rho),
            Err(_) => c.norm_sqr(),
        },
        _ => c.norm_sqr(),
    }
}

/// Magnitude added to the running sum: both members of a pair count.
fn l1_mass(adjusted: Complex64, pair: ConjPair) -> f64 {
    match pair {
        ConjPair::SelfConjugate => adjusted.re.abs(),
        ConjPair::Pair(_) => 2.0 * adjusted.norm(),
    }
}

pub struct MpState {
    multidict: MultiDict,
    bank: Arc<KernelBank>,
    transforms: Vec<GaborTransform>,
    config: MpConfig,
    signal: Vec<f64>,
    input_energy: f64,
    residual: Vec<CoefficientGrid>,
    solution: Vec<CoefficientGrid>,
    forest: MaxForest,
    e_out: f64,
    decrement_sum: f64,
    s_bar: f64,
    k: usize,
    k_out: usize,
    max_iterations: usize,
    reset_iterations: usize,
    reset_err_db: f64,
    trace: ErrorTrace,
}

impl std::fmt::Debug for MpState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MpState")
            .field("k", &self.k)
            .field("k_out", &self.k_out)
            .field("e_out", &self.e_out)
            .field("estimate", &self.estimate())
            .finish_non_exhaustive()
    }
}

impl MpState {
    /// Analyzes `x` and computes all kernels.
    pub fn new(multidict: &MultiDict, x: &[f64], config: MpConfig) -> Result<Self> {
        config.validate()?;
        let bank = KernelBank::build_with(config.exec, multidict.dicts(), config.kernel_threshold)?;
        Self::with_bank(multidict, x, config, Arc::new(bank))
    }

    /// Uses precomputed kernels, which must match the dictionaries and the
    /// configured threshold.
    pub fn with_bank(multidict: &MultiDict, x: &[f64], config: MpConfig, bank: Arc<KernelBank>) -> Result<Self> {
        config.validate()?;
        if bank.eps_rel().to_bits() != config.kernel_threshold.to_bits() {
            return Err(MpError::Parameter(format!(
                "kernels built at threshold {} but configured {}",
                bank.eps_rel(),
                config.kernel_threshold
            )));
        }
        bank.check_signal(multidict)?;
        let len = multidict.len();
        if x.len() != len {
            return Err(MpError::Dimension(format!("signal length {} for dictionaries of length {len}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MpError::Parameter("signal contains non-finite samples".into()));
        }
        let transforms = multidict
            .dicts()
            .iter()
            .map(|d| GaborTransform::new(d, len))
            .collect::<Result<Vec<_>>>()?;
        let residual = transforms
            .iter()
            .enumerate()
            .map(|(w, t)| t.analyze(config.exec, w, x))
            .collect::<Result<Vec<_>>>()?;
        let solution = multidict
            .dicts()
            .iter()
            .enumerate()
            .map(|(w, d)| CoefficientGrid::zeros(w, d, len))
            .collect();
        let input_energy = energy(x);
        let forest = Self::build_forest(&bank, &residual, config.pedantic)?;
        Ok(MpState {
            multidict: multidict.clone(),
            transforms,
            max_iterations: config.max_iterations_for(len),
            reset_iterations: config.reset_iterations_for(len),
            reset_err_db: config.reset_err_db_value(),
            config,
            bank,
            signal: x.to_vec(),
            input_energy,
            residual,
            solution,
            forest,
            e_out: input_energy,
            decrement_sum: 0.0,
            s_bar: 0.0,
            k: 0,
            k_out: 0,
            trace: ErrorTrace::default(),
        })
    }

    fn build_forest(bank: &KernelBank, residual: &[CoefficientGrid], pedantic: bool) -> Result<MaxForest> {
        let grids = residual
            .iter()
            .enumerate()
            .map(|(w, g)| ScoreGrid {
                bins: g.bins,
                frames: g.frames,
                scores: g
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| selection_score(c, bank.conj_pair(w, i % g.bins), pedantic))
                    .collect(),
            })
            .collect();
        MaxForest::build(grids)
    }

    pub fn multidict(&self) -> &MultiDict {
        &self.multidict
    }

    pub fn bank(&self) -> &Arc<KernelBank> {
        &self.bank
    }

    pub fn config(&self) -> &MpConfig {
        &self.config
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn input_energy(&self) -> f64 {
        self.input_energy
    }

    /// Current running error estimate `E_k`.
    pub fn estimate(&self) -> f64 {
        self.e_out - self.decrement_sum
    }

    pub fn estimate_db(&self) -> f64 {
        10.0 * (self.estimate() / self.input_energy).log10()
    }

    /// Exact residual energy at the last reset (or the input energy).
    pub fn last_exact_energy(&self) -> f64 {
        self.e_out
    }

    pub fn decrement_sum(&self) -> f64 {
        self.decrement_sum
    }

    pub fn running_sum(&self) -> f64 {
        self.s_bar
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    pub fn iterations_at_reset(&self) -> usize {
        self.k_out
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn residual_grids(&self) -> &[CoefficientGrid] {
        &self.residual
    }

    pub fn solution(&self) -> &[CoefficientGrid] {
        &self.solution
    }

    pub fn trace(&self) -> &ErrorTrace {
        &self.trace
    }

    pub fn forest(&self) -> &MaxForest {
        &self.forest
    }

    pub fn target_energy(&self) -> f64 {
        10f64.powf(self.config.target_err_db / 10.0) * self.input_energy
    }

    pub fn emergency(&self) -> bool {
        self.decrement_sum > self.e_out
    }

    pub fn peek(&self) -> Candidate {
        let b = self.forest.query();
        Candidate {
            dict: b.dict,
            bin: b.bin,
            frame: b.frame,
            score: b.score,
            coefficient: self.residual[b.dict].get(b.bin, b.frame),
        }
    }

    /// Reason the next step would be refused, if any.
    pub fn stop_reason(&self) -> Option<StopReason> {
        if self.estimate() <= self.target_energy() {
            Some(StopReason::TargetReached)
        } else if self.k >= self.max_iterations {
            Some(StopReason::MaxIterations)
        } else if self.peek().score <= 0.0 {
            Some(StopReason::Exhausted)
        } else {
            None
        }
    }

    /// Selects the best atom, subtracts its kernel footprint from every
    /// residual grid and books the energy decrement.
    pub fn step(&mut self) -> Result<StepReport> {
        if self.estimate() <= self.target_energy() {
            return Err(MpError::Stopped(StopReason::TargetReached));
        }
        if self.k >= self.max_iterations {
            return Err(MpError::Stopped(StopReason::MaxIterations));
        }
        let best = self.peek();
        if best.score <= 0.0 {
            return Err(MpError::Stopped(StopReason::Exhausted));
        }
        let cell = best.bin + best.frame * self.solution[best.dict].bins;
        crate::maxtree::prefetch(&self.solution[best.dict].values[cell..=cell]);
        let pair = self.bank.conj_pair(best.dict, best.bin);
        let adjusted = adjust_coefficient(best.coefficient, pair)?;
        let decrement = energy_decrement(adjusted, pair);
        self.residual_update(best.dict, best.bin, best.frame, adjusted);
        *self.solution[best.dict].get_mut(best.bin, best.frame) += adjusted;
        self.decrement_sum += decrement;
        self.s_bar += l1_mass(adjusted, pair);
        self.k += 1;
        let report = StepReport {
            k: self.k,
            dict: best.dict,
            bin: best.bin,
            frame: best.frame,
            selected: best.coefficient,
            coefficient: adjusted,
            decrement,
            estimate: self.estimate(),
        };
        self.trace.selections.push(report);
        Ok(report)
    }

    /// Subtracts `c d + conj(c) conj(d)` (or `c d` for a real atom) from the
    /// residual coefficients of every dictionary and refreshes the trees.
    pub fn residual_update(&mut self, sel: usize, bin: usize, frame: usize, c: Complex64) {
        if c == ZERO {
            return;
        }
        let pair = matches!(self.bank.conj_pair(sel, bin), ConjPair::Pair(_));
        let bank = Arc::clone(&self.bank);
        for upd in 0..self.residual.len() {
            let e = bank.entry(sel, upd);
            let (k, g, table) = (&e.kernel, e.geometry, &e.table);
            let m_upd = self.multidict.dict(upd).m;
            let grid = &mut self.residual[upd];
            let (bins, frames) = (grid.bins, grid.frames);
            let fs = (bin * g.sel_freq) as i64;
            let ts = (frame * g.sel_time) as i64;
            let fr = g.upd_freq as i64;
            let tr = g.upd_time as i64;
            let mu0 = k.mu_lo + (-(fs + k.mu_lo)).rem_euclid(fr);
            let nu0 = k.nu_lo + (-(ts + k.nu_lo)).rem_euclid(tr);
            if mu0 > k.mu_hi || nu0 > k.nu_hi {
                continue;
            }
            let q0 = ((fs + mu0) / fr).rem_euclid(m_upd as i64) as usize;
            let n0 = ((ts + nu0) / tr).rem_euclid(frames as i64) as usize;
            let row = table.row(fs as usize % g.period);
            let width = ((k.mu_hi - mu0) / fr + 1) as usize;
            if q0 + width <= bins {
                let scores = self.forest.scores_mut(upd);
                let mut n = n0;
                let mut nu = nu0;
                while nu <= k.nu_hi {
                    crate::maxtree::prefetch(&grid.values[n * bins + q0..n * bins + q0 + width]);
                    crate::maxtree::prefetch(&scores[n * bins + q0..n * bins + q0 + width]);
                    n += 1;
                    if n == frames {
                        n = 0;
                    }
                    nu += tr;
                }
            }
            let (mut bin_lo, mut bin_hi) = (usize::MAX, 0);
            let mut frame_count = 0;
            let mut n = n0;
            let mut nu = nu0;
            while nu <= k.nu_hi {
                let factor = c * row[(nu - k.nu_lo) as usize];
                let column = k.column(nu);
                let cells = &mut grid.values[n * bins..(n + 1) * bins];
                let mut q = q0;
                let mut mu = mu0;
                while mu <= k.mu_hi {
                    let h = column[(mu - k.mu_lo) as usize];
                    if h != ZERO {
                        let v = factor * h;
                        if q < bins {
                            cells[q] -= v;
                            bin_lo = bin_lo.min(q);
                            bin_hi = bin_hi.max(q);
                        }
                        if pair {
                            let qc = if q == 0 { 0 } else { m_upd - q };
                            if qc < bins {
                                cells[qc] -= v.conj();
                                bin_lo = bin_lo.min(qc);
                                bin_hi = bin_hi.max(qc);
                            }
                        }
                    }
                    q += 1;
                    if q == m_upd {
                        q = 0;
                    }
                    mu += fr;
                }
                frame_count += 1;
                n += 1;
                if n == frames {
                    n = 0;
                }
                nu += tr;
            }
            if bin_lo > bin_hi {
                continue;
            }
            let scores = self.forest.scores_mut(upd);
            for i in 0..frame_count {
                let n = (n0 + i) % frames;
                for m in bin_lo..=bin_hi {
                    scores[n * bins + m] =
                        selection_score(grid.values[n * bins + m], bank.conj_pair(upd, m), self.config.pedantic);
                }
            }
            self.forest
                .refresh(upd, bin_lo..bin_hi + 1, n0, frame_count)
                .expect("update range lies inside the grid");
        }
    }

    /// Which reset condition currently holds, if any.
    pub fn should_reset(&self) -> Option<ResetTrigger> {
        if self.emergency() {
            return Some(ResetTrigger::Emergency);
        }
        let top = self.peek().coefficient.norm();
        if self.s_bar > 0.0 && self.config.kernel_threshold * self.s_bar >= self.config.reset_delta * top {
            return Some(ResetTrigger::Drift);
        }
        if self.k - self.k_out >= self.reset_iterations {
            return Some(ResetTrigger::IterationLimit);
        }
        if self.e_out > 0.0 && 10.0 * (self.estimate() / self.e_out).log10() < self.reset_err_db {
            return Some(ResetTrigger::ErrorDrop);
        }
        None
    }

    /// Exact residual `x - D c`; the basis of every reset.
    pub fn exact_residual(&self) -> Result<Vec<f64>> {
        let mut r = self.signal.clone();
        let mut recon = vec![0.0; r.len()];
        for (t, c) in self.transforms.iter().zip(&self.solution) {
            t.synthesize_into(self.config.exec, c, &mut recon)?;
        }
        for (ri, yi) in r.iter_mut().zip(&recon) {
            *ri -= yi;
        }
        Ok(r)
    }

    pub fn reconstruction(&self) -> Result<Vec<f64>> {
        let mut recon = vec![0.0; self.signal.len()];
        for (t, c) in self.transforms.iter().zip(&self.solution) {
            t.synthesize_into(self.config.exec, c, &mut recon)?;
        }
        Ok(recon)
    }

    /// Recomputes the residual coefficients from the exact residual.
    pub fn reset(&mut self, trigger: ResetTrigger) -> Result<()> {
        let r = self.exact_residual()?;
        for (w, t) in self.transforms.iter().enumerate() {
            self.residual[w] = t.analyze(self.config.exec, w, &r)?;
        }
        self.forest = Self::build_forest(&self.bank, &self.residual, self.config.pedantic)?;
        self.e_out = energy(&r);
        self.decrement_sum = 0.0;
        self.s_bar = 0.0;
        self.k_out = self.k;
        self.trace.resets.push(ResetRecord {
            k: self.k,
            exact_energy: self.e_out,
            trigger,
        });
        Ok(())
    }

    /// One iteration of the main loop: a stop, a reset or a selection.
    pub fn advance(&mut self) -> Result<Advance> {
        if self.emergency() {
            if !self.config.resets_enabled {
                return Ok(Advance::Stop(StopReason::Emergency));
            }
            self.reset(ResetTrigger::Emergency)?;
            return Ok(Advance::Reset(ResetTrigger::Emergency));
        }
        if self.estimate() <= self.target_energy() {
            return Ok(Advance::Stop(StopReason::TargetReached));
        }
        if self.k >= self.max_iterations {
            return Ok(Advance::Stop(StopReason::MaxIterations));
        }
        if self.config.resets_enabled && self.k > self.k_out {
            if let Some(trigger) = self.should_reset() {
                self.reset(trigger)?;
                return Ok(Advance::Reset(trigger));
            }
        }
        match self.step() {
            Ok(report) => Ok(Advance::Step(report)),
            Err(MpError::Stopped(reason)) => Ok(Advance::Stop(reason)),
            Err(e) => Err(e),
        }
    }

    /// Steps until a stopping condition, interleaving resets when enabled.
    pub fn run_to_end(&mut self) -> Result<StopReason> {
        loop {
            if let Advance::Stop(reason) = self.advance()? {
                return Ok(reason);
            }
        }
    }

    pub fn into_output(self, stop: StopReason) -> Result<MpOutput> {
        let reconstruction = self.reconstruction()?;
        let residual = self.signal.iter().zip(&reconstruction).map(|(x, y)| x - y).collect();
        Ok(MpOutput {
            estimate: self.estimate(),
            input_energy: self.input_energy,
            solution: self.solution,
            reconstruction,
            residual,
            trace: self.trace,
            stop,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MpOutput {
    pub solution: Vec<CoefficientGrid>,
    pub reconstruction: Vec<f64>,
    pub residual: Vec<f64>,
    pub trace: ErrorTrace,
    pub stop: StopReason,
    pub estimate: f64,
    pub input_energy: f64,
}

/// Full decomposition: init, loop, final synthesis.
pub fn run(multidict: &MultiDict, x: &[f64], config: MpConfig) -> Result<MpOutput> {
    let mut state = MpState::new(multidict, x, config)?;
    let stop = state.run_to_end()?;
    state.into_output(stop)
}

pub fn run_with_bank(multidict: &MultiDict, x: &[f64], config: MpConfig, bank: Arc<KernelBank>) -> Result<MpOutput> {
    let mut state = MpState::with_bank(multidict, x, config, bank)?;
    let stop = state.run_to_end()?;
    state.into_output(stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dict::{atom, validate_multidict, GaborDictParams};
    use crate::transform::analyze;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
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

    fn config(eps: f64) -> MpConfig {
        MpConfig {
            kernel_threshold: eps,
            exec: Exec::Sequential,
            ..MpConfig::default()
        }
    }

    fn max_grid_gap(state: &MpState) -> f64 {
        let r = state.exact_residual().unwrap();
        let mut worst: f64 = 0.0;
        for (w, g) in state.residual_grids().iter().enumerate() {
            let fresh = analyze(state.multidict().dict(w), &r).unwrap();
            for (a, b) in g.values.iter().zip(&fresh.values) {
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    #[test]
    fn score_examples() {
        let c = Complex64::new(3.0, 4.0);
        let zero = ConjPair::Pair(ZERO);
        assert_eq!(selection_score(c, zero, false), 25.0);
        assert_eq!(selection_score(c, zero, true), 50.0);
        assert_eq!(selection_score(c, ConjPair::SelfConjugate, true), 25.0);
    }

    #[test]
    fn adjust_examples() {
        let c = Complex64::new(0.3, -1.2);
        assert_eq!(adjust_coefficient(c, ConjPair::Pair(ZERO)).unwrap(), c);
        let rho = Complex64::new(0.35, 0.0);
        let got = adjust_coefficient(Complex64::new(2.0, 0.0), ConjPair::Pair(rho)).unwrap();
        assert!((got - Complex64::new(2.0 / 1.35, 0.0)).norm() < 1e-15);
        let err = adjust_coefficient(c, ConjPair::Pair(Complex64::new(1.0, 0.0))).unwrap_err();
        assert!(matches!(err, MpError::DegeneratePair(_)));
        assert_eq!(adjust_coefficient(c, ConjPair::SelfConjugate).unwrap(), Complex64::new(0.3, 0.0));
    }

    fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
    }

    proptest! {
        #[test]
        fn adjusted_pair_is_least_squares(seed in any::<u64>(), len in 3usize..24) {
            let mut rng = StdRng::seed_from_u64(seed);
            let dv: Vec<Complex64> = (0..len)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let norm = inner(&dv, &dv).re.sqrt();
            let dv: Vec<Complex64> = dv.iter().map(|v| v / norm).collect();
            let dc: Vec<Complex64> = dv.iter().map(|v| v.conj()).collect();
            let rho = inner(&dv, &dc);
            prop_assume!(rho.norm() < 0.9);
            let r: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let rc: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let c = inner(&rc, &dv);
            let ct = adjust_coefficient(c, ConjPair::Pair(rho)).unwrap();

            let a = DMatrix::from_fn(len, 2, |i, j| if j == 0 { dv[i] } else { dc[i] });
            let b = DVector::from_iterator(len, rc.iter().copied());
            let sol = (a.adjoint() * &a).try_inverse().unwrap() * a.adjoint() * b;
            prop_assert!((sol[0] - ct).norm() < 1e-9 * (1.0 + ct.norm()));
            prop_assert!((sol[1] - ct.conj()).norm() < 1e-9 * (1.0 + ct.norm()));

            let rest: f64 = (0..len).map(|i| (rc[i] - ct * dv[i] - ct.conj() * dc[i]).norm_sqr()).sum();
            let total: f64 = r.iter().map(|v| v * v).sum();
            let e = pair_energy(ct, rho);
            prop_assert!((e - (total - rest)).abs() <= 1e-9 * total.max(1e-300));
            prop_assert!((selection_score(c, ConjPair::Pair(rho), true) - e).abs() <= 1e-9 * total);
        }
    }

    #[test]
    fn zero_signal_refuses_to_step() {
        let md = validate_multidict(&[d("hann:16:4")], 64).unwrap();
        let mut s = MpState::new(&md, &[0.0; 64], config(1e-4)).unwrap();
        assert_eq!(s.estimate(), 0.0);
        assert_eq!(s.peek().score, 0.0);
        assert_eq!(s.step().unwrap_err(), MpError::Stopped(StopReason::TargetReached));
        let out = run(&md, &[0.0; 64], config(1e-4)).unwrap();
        assert!(out.trace.selections.is_empty());
        assert_eq!(out.stop, StopReason::TargetReached);
    }

    #[test]
    fn window_input_selects_its_own_atom() {
        let dicts = [d("hann:32:8"), d("blackman:16:4")];
        let md = validate_multidict(&dicts, 128).unwrap();
        let x: Vec<f64> = atom(&dicts[1], 0, 0, 128).unwrap().iter().map(|c| c.re).collect();
        let s = MpState::new(&md, &x, config(1e-4)).unwrap();
        let top = s.peek();
        assert_eq!((top.dict, top.bin, top.frame), (1, 0, 0));
        assert!((top.coefficient - 1.0).norm() < 1e-12);
    }

    #[test]
    fn init_matches_analysis() {
        let dicts = [d("hann:32:8"), d("gauss:16:4")];
        let md = validate_multidict(&dicts, 128).unwrap();
        let x = noise(1, 128);
        let s = MpState::new(&md, &x, config(1e-4)).unwrap();
        for (w, p) in dicts.iter().enumerate() {
            assert_eq!(s.residual_grids()[w].values, analyze(p, &x).unwrap().values);
        }
        assert_eq!(s.estimate(), energy(&x));
    }

    #[test]
    fn zero_update_is_noop() {
        let md = validate_multidict(&[d("hann:32:8")], 128).unwrap();
        let mut s = MpState::new(&md, &noise(2, 128), config(1e-4)).unwrap();
        let before = s.residual_grids().to_vec();
        s.residual_update(0, 3, 2, ZERO);
        assert_eq!(s.residual_grids(), before.as_slice());
    }

    #[test]
    fn untruncated_step_equals_reanalysis() {
        for spec in ["hann:32:8", "blackman:16:4", "gauss:32:16"] {
            let md = validate_multidict(&[d(spec)], 256).unwrap();
            let mut s = MpState::new(&md, &noise(3, 256), config(0.0)).unwrap();
            for _ in 0..5 {
                let r = s.step().unwrap();
                let c = s.residual_grids()[0].get(r.bin, r.frame);
                assert!(c.norm() < 1e-9, "{spec}: selected coefficient left {c}");
                assert!(max_grid_gap(&s) < 1e-9, "{spec}");
            }
        }
    }

    #[test]
    fn two_dictionary_step_equals_reanalysis() {
        let dicts = [d("hann:512:128"), d("hann:2048:512")];
        let md = validate_multidict(&dicts, 8192).unwrap();
        let mut s = MpState::new(&md, &noise(4, 8192), config(0.0)).unwrap();
        for _ in 0..4 {
            s.step().unwrap();
            assert!(max_grid_gap(&s) < 1e-9);
        }
        let mut s = MpState::new(&md, &noise(4, 8192), config(1e-4)).unwrap();
        s.step().unwrap();
        let scale = s.trace().selections[0].coefficient.norm();
        assert!(max_grid_gap(&s) < 2.0 * 1e-4 * scale * 8.0);
    }

    #[test]
    fn single_pair_removed_in_one_step() {
        let p = d("blackman:64:16");
        let md = validate_multidict(&[p], 256).unwrap();
        let a = atom(&p, 9, 5, 256).unwrap();
        let c = Complex64::new(0.7, -1.1);
        let x: Vec<f64> = a.iter().map(|v| 2.0 * (c * v).re).collect();
        let mut s = MpState::new(&md, &x, config(1e-4)).unwrap();
        let r = s.step().unwrap();
        assert_eq!((r.bin, r.frame), (9, 5));
        assert!(s.estimate() <= 1e-8 * energy(&x));
        assert!(energy(&s.exact_residual().unwrap()) <= 1e-8 * energy(&x));
    }

    #[test]
    fn replay_is_deterministic() {
        let md = validate_multidict(&[d("hann:64:16"), d("hann:32:8")], 512).unwrap();
        let x = noise(5, 512);
        let a = run(&md, &x, config(1e-3)).unwrap();
        let b = run(&md, &x, MpConfig { exec: Exec::Parallel, ..config(1e-3) }).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(!a.trace.selections.is_empty());
    }

    #[test]
    fn estimate_telescopes_exactly() {
        let md = validate_multidict(&[d("hann:64:16"), d("blackman:32:8")], 512).unwrap();
        let cfg = MpConfig {
            resets_enabled: true,
            reset_max_iterations: Some(37),
            ..config(1e-3)
        };
        let mut s = MpState::new(&md, &noise(6, 512), cfg).unwrap();
        s.run_to_end().unwrap();
        let t = s.trace();
        assert!(t.resets.len() >= 2);
        let mut base = s.input_energy();
        let mut acc = 0.0;
        let mut resets = t.resets.iter().peekable();
        for sel in &t.selections {
            if let Some(r) = resets.next_if(|r| r.k < sel.k) {
                base = r.exact_energy;
                acc = 0.0;
            }
            acc += sel.decrement;
            assert_eq!(sel.estimate.to_bits(), (base - acc).to_bits());
        }
    }

    #[test]
    fn reset_after_init_is_identity() {
        let md = validate_multidict(&[d("hann:32:8")], 128).unwrap();
        let x = noise(7, 128);
        let mut s = MpState::new(&md, &x, config(1e-4)).unwrap();
        let before = s.residual_grids().to_vec();
        s.reset(ResetTrigger::Manual).unwrap();
        for (a, b) in before[0].values.iter().zip(&s.residual_grids()[0].values) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((s.estimate() - energy(&x)).abs() < 1e-12 * energy(&x));
    }

    #[test]
    fn reset_energy_is_exact() {
        let md = validate_multidict(&[d("hann:64:16"), d("hann:128:32")], 1024).unwrap();
        let x = noise(8, 1024);
        let mut s = MpState::new(&md, &x, config(1e-2)).unwrap();
        for _ in 0..60 {
            s.step().unwrap();
        }
        s.reset(ResetTrigger::Manual).unwrap();
        let truth = energy(&s.exact_residual().unwrap());
        assert!((s.last_exact_energy() - truth).abs() <= 1e-10 * truth);
        assert_eq!(s.estimate(), s.last_exact_energy());
        assert_eq!(s.running_sum(), 0.0);
    }

    #[test]
    fn reset_conditions() {
        let md = validate_multidict(&[d("hann:32:8")], 128).unwrap();
        let cfg = MpConfig {
            resets_enabled: true,
            ..config(1e-4)
        };
        let mut s = MpState::new(&md, &noise(9, 128), cfg).unwrap();
        assert_eq!(s.should_reset(), None);
        s.step().unwrap();
        s.s_bar = 1e12;
        assert_eq!(s.should_reset(), Some(ResetTrigger::Drift));
        s.s_bar = 0.0;
        s.decrement_sum = 2.0 * s.e_out;
        assert_eq!(s.should_reset(), Some(ResetTrigger::Emergency));
        s.decrement_sum = s.e_out * (1.0 - 1e-5);
        assert_eq!(s.should_reset(), Some(ResetTrigger::ErrorDrop));
    }

    fn separated_pairs(p: &GaborDictParams, len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        let frames = p.frames(len);
        for j in 0..10 {
            let a = atom(p, 3 + 5 * j, (j * frames) / 10, len).unwrap();
            let c = Complex64::from_polar(1.0 + j as f64 * 0.3, j as f64);
            for (xi, v) in x.iter_mut().zip(&a) {
                *xi += 2.0 * (c * v).re;
            }
        }
        x
    }

    #[test]
    fn sparse_pairs_reach_minus_80_db() {
        let p = d("blackman:128:32");
        let len = 4096;
        let md = validate_multidict(&[p], len).unwrap();
        let x = separated_pairs(&p, len);
        let out = run(&md, &x, MpConfig { target_err_db: -80.0, ..config(1e-4) }).unwrap();
        assert_eq!(out.stop, StopReason::TargetReached);
        assert!(out.trace.selections.len() <= 30);
        assert!(10.0 * (energy(&out.residual) / energy(&x)).log10() <= -80.0);
    }

    #[test]
    fn pedantic_and_plain_reach_target() {
        let md = validate_multidict(&[d("hann:32:8"), d("hann:64:16")], 512).unwrap();
        let x = noise(10, 512);
        for pedantic in [false, true] {
            let cfg = MpConfig {
                pedantic,
                target_err_db: -20.0,
                max_iterations: Some(5000),
                resets_enabled: true,
                ..config(1e-4)
            };
            let out = run(&md, &x, cfg).unwrap();
            assert_eq!(out.stop, StopReason::TargetReached);
            assert!(10.0 * (energy(&out.residual) / energy(&x)).log10() <= -20.0 + 1e-3);
        }
    }

    #[test]
    fn noise_with_resets_meets_target() {
        let md = validate_multidict(&[d("hann:64:16"), d("blackman:32:8")], 1024).unwrap();
        let x = noise(11, 1024);
        let cfg = MpConfig {
            target_err_db: -25.0,
            resets_enabled: true,
            max_iterations: Some(20_000),
            ..config(1e-3)
        };
        let out = run(&md, &x, cfg).unwrap();
        assert_eq!(out.stop, StopReason::TargetReached);
        assert!(10.0 * (energy(&out.residual) / energy(&x)).log10() <= -25.0 + 1e-3);
    }

    #[test]
    fn emergency_guard_catches_drift() {
        let md = validate_multidict(&[d("hann:32:8"), d("hann:64:16")], 512).unwrap();
        let x = noise(12, 512);
        let cfg = MpConfig {
            target_err_db: -300.0,
            max_iterations: Some(200_000),
            ..config(5e-3)
        };
        let mut s = MpState::new(&md, &x, cfg).unwrap();
        let stop = s.run_to_end().unwrap();
        assert_eq!(stop, StopReason::Emergency);
        let truth = energy(&s.exact_residual().unwrap());
        let last = s.trace().selections.last().unwrap();
        assert!(last.estimate < 0.0);
        assert!((last.estimate - truth).abs() <= truth + last.decrement);
        assert!(truth > 0.0);
    }

    #[test]
    fn bank_threshold_must_match() {
        let p = d("hann:32:8");
        let md = validate_multidict(&[p], 128).unwrap();
        let bank = Arc::new(KernelBank::build(&[p], 1e-3).unwrap());
        assert!(MpState::with_bank(&md, &noise(1, 128), config(1e-4), bank).is_err());
    }
}

