use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use mgmp::convergence::{check_thm1_conditions, DiagnosticReport, DiagnosticStep};
use mgmp::engine::{Advance, MpConfig, MpState, ResetTrigger, StopReason};
use mgmp::kernels::minimum_signal_length;
use mgmp::{energy, validate_multidict, Exec, GaborDictParams, KernelBank};
use serde::{Deserialize, Serialize};

use crate::coef::{CoefFile, CoefRecord};
use crate::error::{CliError, CliResult};
use crate::reconstruct::render;
use crate::{wav, DecomposeArgs};

pub const COEFS: &str = "coefs.mgmp";
pub const RECONSTRUCTION: &str = "reconstruction.wav";
pub const RESIDUAL: &str = "residual.wav";
pub const ERROR_CURVE: &str = "error.csv";
pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub errdb: f64,
    pub maxit: usize,
    pub kernthr: f64,
    pub pedantic: bool,
    pub reset: bool,
    pub resetit: Option<usize>,
    pub reseterrdb: Option<f64>,
    pub resetdelta: f64,
    pub kernel_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalInfo {
    pub sample_rate: u32,
    pub channel: u16,
    pub orig_len: usize,
    pub padded_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub selections: usize,
    pub resets: usize,
    pub stop: String,
    pub input_energy: f64,
    pub estimated_error_db: Option<f64>,
    /// `||input - reconstruction||^2` over the written audio.
    pub exact_error_energy: f64,
    pub exact_error_norm: f64,
    pub exact_error_db: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub coefficients: PathBuf,
    pub reconstruction: PathBuf,
    pub residual: PathBuf,
    pub error_curve: PathBuf,
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input: PathBuf,
    pub dictionaries: Vec<String>,
    pub config: ConfigEcho,
    pub signal: SignalInfo,
    pub totals: Totals,
    pub outputs: Outputs,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    k: usize,
    w: Option<usize>,
    m: Option<usize>,
    n: Option<usize>,
    re: Option<f64>,
    im: Option<f64>,
    #[serde(rename = "E_k_dB")]
    e_k_db: Option<f64>,
    decrement: Option<f64>,
    #[serde(rename = "E_k")]
    e_k: f64,
    kind: &'static str,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest length `>= len` accepted by every dictionary and kernel pair.
pub fn padded_length(dicts: &[GaborDictParams], len: usize) -> usize {
    let step = dicts.iter().flat_map(|d| [d.a, d.m]).fold(1, |l, v| l / gcd(l, v) * v);
    let floor = dicts
        .iter()
        .map(|d| d.window.support())
        .chain([minimum_signal_length(dicts), len, 1])
        .max()
        .unwrap_or(1);
    floor.div_ceil(step) * step
}

fn db(ratio: f64) -> Option<f64> {
    let v = 10.0 * ratio.log10();
    v.is_finite().then_some(v)
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::TargetReached => "target-reached",
        StopReason::MaxIterations => "max-iterations",
        StopReason::Emergency => "emergency",
        StopReason::Exhausted => "exhausted",
    }
}

fn trigger_name(t: ResetTrigger) -> &'static str {
    match t {
        ResetTrigger::Drift => "reset-drift",
        ResetTrigger::IterationLimit => "reset-iterations",
        ResetTrigger::ErrorDrop => "reset-error",
        ResetTrigger::Emergency => "reset-emergency",
        ResetTrigger::Manual => "reset-manual",
    }
}

fn config_from(args: &DecomposeArgs) -> CliResult<MpConfig> {
    Ok(MpConfig {
        target_err_db: args.errdb,
        max_iterations: args.maxit,
        kernel_threshold: args.threshold.value()?,
        pedantic: args.pedantic,
        resets_enabled: args.reset,
        reset_max_iterations: args.resetit,
        reset_err_db: args.reseterrdb,
        reset_delta: args.resetdelta,
        exec: Exec::default(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path.display(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

/// Runs a decomposition and writes every artifact into `args.out`.
pub fn run(args: &DecomposeArgs) -> CliResult<RunManifest> {
    let started = Instant::now();
    let config = config_from(args)?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let audio = wav::read_channel(&args.input, args.channel)?;
    let orig_len = audio.samples.len();
    let len = padded_length(&args.dicts, orig_len);
    let multidict = validate_multidict(&args.dicts, len)?;
    let mut x = audio.samples.clone();
    x.resize(len, 0.0);

    let eps = config.kernel_threshold;
    let bank = match &args.kernel_cache {
        Some(p) => KernelBank::load_or_build(p, &args.dicts, eps)?,
        None => KernelBank::build_with(config.exec, &args.dicts, eps)?,
    };
    let mut state = MpState::with_bank(&multidict, &x, config.clone(), Arc::new(bank))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(args.out.display(), e))?;
    let curve_path = args.out.join(ERROR_CURVE);
    let csv_err = |e: csv::Error| CliError::io(curve_path.display(), e);
    let mut curve = csv::Writer::from_path(&curve_path).map_err(csv_err)?;
    let input_energy = state.input_energy();
    let row_db = |e: f64| db(e / input_energy);
    curve
        .serialize(CurveRow {
            k: 0,
            w: None,
            m: None,
            n: None,
            re: None,
            im: None,
            e_k_db: row_db(input_energy),
            decrement: None,
            e_k: input_energy,
            kind: "init",
        })
        .map_err(csv_err)?;

    let mut diag = args.diagnose.then(|| DiagnosticReport {
        delta: config.reset_delta,
        eps_rel: eps,
        steps: Vec::new(),
    });
    let mut true_energy = input_energy;

    let stop = loop {
        let running_sum = state.running_sum();
        match state.advance()? {
            Advance::Stop(reason) => break reason,
            Advance::Reset(trigger) => {
                true_energy = state.last_exact_energy();
                curve
                    .serialize(CurveRow {
                        k: state.iterations(),
                        w: None,
                        m: None,
                        n: None,
                        re: None,
                        im: None,
                        e_k_db: row_db(state.estimate()),
                        decrement: None,
                        e_k: state.estimate(),
                        kind: trigger_name(trigger),
                    })
                    .map_err(csv_err)?;
            }
            Advance::Step(r) => {
                curve
                    .serialize(CurveRow {
                        k: r.k,
                        w: Some(r.dict),
                        m: Some(r.bin),
                        n: Some(r.frame),
                        re: Some(r.coefficient.re),
                        im: Some(r.coefficient.im),
                        e_k_db: row_db(r.estimate),
                        decrement: Some(r.decrement),
                        e_k: r.estimate,
                        kind: "select",
                    })
                    .map_err(csv_err)?;
                if let Some(report) = diag.as_mut() {
                    let after = energy(&state.exact_residual()?);
                    let top = r.selected.norm();
                    let (first, second) =
                        check_thm1_conditions(top, running_sum, true_energy.sqrt(), config.reset_delta, eps);
                    report.steps.push(DiagnosticStep {
                        k: r.k,
                        top_abs: top,
                        running_sum,
                        true_energy: after,
                        estimate: r.estimate,
                        monotone_first: first,
                        monotone_second: second,
                        true_decrease: after < true_energy,
                    });
                    true_energy = after;
                }
            }
        }
    };
    curve.flush().map_err(|e| CliError::io(curve_path.display(), e))?;

    let coef = CoefFile {
        len: len as u64,
        orig_len: orig_len as u64,
        sample_rate: audio.sample_rate,
        dicts: args.dicts.clone(),
        records: state
            .trace()
            .selections
            .iter()
            .map(|r| CoefRecord {
                dict: r.dict as u16,
                bin: r.bin as u32,
                frame: r.frame as u32,
                value: r.coefficient,
            })
            .collect(),
    };
    let outputs = Outputs {
        coefficients: args.out.join(COEFS),
        reconstruction: args.out.join(RECONSTRUCTION),
        residual: args.out.join(RESIDUAL),
        error_curve: curve_path.clone(),
        diagnostics: diag.as_ref().map(|_| args.out.join(DIAGNOSTICS)),
    };
    coef.save(&outputs.coefficients)?;
    let rec = render(&coef)?;
    wav::write_f32(&outputs.reconstruction, &rec, audio.sample_rate)?;
    let residual: Vec<f64> = audio.samples.iter().zip(&rec).map(|(x, y)| x - y).collect();
    wav::write_f32(&outputs.residual, &residual, audio.sample_rate)?;
    if let (Some(report), Some(path)) = (&diag, &outputs.diagnostics) {
        write_json(path, report)?;
    }

    // error against the audio as written, i.e. after rounding to f32
    let exact: f64 = audio
        .samples
        .iter()
        .zip(&rec)
        .map(|(x, y)| {
            let d = x - f64::from(*y as f32);
            d * d
        })
        .sum();
    let manifest = RunManifest {
        input: args.input.clone(),
        dictionaries: args.dicts.iter().map(|d| d.to_string()).collect(),
        config: ConfigEcho {
            errdb: args.errdb,
            maxit: state.max_iterations(),
            kernthr: eps,
            pedantic: args.pedantic,
            reset: args.reset,
            resetit: args.resetit,
            reseterrdb: args.reseterrdb,
            resetdelta: args.resetdelta,
            kernel_cache: args.kernel_cache.clone(),
        },
        signal: SignalInfo {
            sample_rate: audio.sample_rate,
            channel: args.channel,
            orig_len,
            padded_len: len,
        },
        totals: Totals {
            selections: state.iterations(),
            resets: state.trace().resets.len(),
            stop: stop_name(stop).to_string(),
            input_energy,
            estimated_error_db: db(state.estimate() / input_energy),
            exact_error_energy: exact,
            exact_error_norm: exact.sqrt(),
            exact_error_db: db(exact / input_energy),
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        outputs,
    };
    write_json(&args.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}
