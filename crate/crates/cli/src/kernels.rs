use std::io::Write;
use std::path::Path;

use mgmp::{KernelBank, TruncatedKernel};

use crate::error::{CliError, CliResult};
use crate::KernelArgs;

pub fn run(args: &KernelArgs, out: &mut dyn Write) -> CliResult<()> {
    let eps = args.threshold.value()?;
    let bank = KernelBank::build(&args.dicts, eps)?;
    let w = args.dicts.len();
    let io = |e: std::io::Error| CliError::io("stdout", e);
    writeln!(out, "threshold {eps:e} ({:.1} dB)", 20.0 * eps.log10()).map_err(io)?;
    for s in 0..w {
        for u in 0..w {
            let e = bank.entry(s, u);
            let k = &e.kernel;
            writeln!(
                out,
                "{} -> {}: {} x {}, {} bytes, modulation table {} x {}",
                args.dicts[s],
                args.dicts[u],
                k.freq_width(),
                k.time_width(),
                k.bytes(),
                e.table.period,
                e.table.width
            )
            .map_err(io)?;
            if let Some(dir) = &args.dump {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
                dump(&dir.join(format!("kernel_{s}_{u}.csv")), k)?;
            }
        }
    }
    writeln!(out, "total {} bytes", bank.total_bytes()).map_err(io)?;
    Ok(())
}

/// Rows are frequency lags, columns time lags; cells are dB below the peak.
fn dump(path: &Path, k: &TruncatedKernel) -> CliResult<()> {
    let err = |e: csv::Error| CliError::io(path.display(), e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["mu".to_string()];
    header.extend((k.nu_lo..=k.nu_hi).map(|nu| nu.to_string()));
    w.write_record(&header).map_err(err)?;
    for mu in k.mu_lo..=k.mu_hi {
        let mut row = vec![mu.to_string()];
        row.extend((k.nu_lo..=k.nu_hi).map(|nu| {
            let v = k.get(mu, nu).norm();
            format!("{:.3}", 20.0 * (v / k.max_abs).log10())
        }));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}
