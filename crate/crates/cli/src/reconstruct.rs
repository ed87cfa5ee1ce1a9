use mgmp::{transform::synthesize_with, validate_multidict, Exec};

use crate::coef::CoefFile;
use crate::error::{CliError, CliResult};
use crate::{wav, ReconstructArgs};

/// Synthesizes a coefficient file and trims it to the original length.
/// Both `decompose` and `reconstruct` write audio through this function.
pub fn render(file: &CoefFile) -> CliResult<Vec<f64>> {
    let multidict = validate_multidict(&file.dicts, file.len as usize)?;
    let grids = file.grids(&multidict)?;
    let mut y = synthesize_with(Exec::default(), &multidict, &grids)?;
    if file.orig_len > file.len {
        return Err(CliError::Format(format!(
            "original length {} exceeds decomposition length {}",
            file.orig_len, file.len
        )));
    }
    y.truncate(file.orig_len as usize);
    Ok(y)
}

pub fn run(args: &ReconstructArgs) -> CliResult<()> {
    let file = CoefFile::load(&args.coefs)?;
    if !args.dicts.is_empty() && args.dicts != file.dicts {
        let have: Vec<String> = file.dicts.iter().map(|d| d.to_string()).collect();
        let want: Vec<String> = args.dicts.iter().map(|d| d.to_string()).collect();
        return Err(CliError::Compatibility(format!(
            "file holds dictionaries [{}] but [{}] were given",
            have.join(", "),
            want.join(", ")
        )));
    }
    let y = render(&file)?;
    wav::write_f32(&args.out, &y, file.sample_rate)
}
