use std::path::PathBuf;

use clap::Args;
use quadlin::patient_io::{load_patient, validate_case, LoadError};

use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

/// Prints the case summary as JSON, or every finding when the bundle is invalid.
pub fn run(args: &ValidateArgs) -> anyhow::Result<Outcome> {
    match load_patient(&args.bundle) {
        Ok(case) => {
            let report = validate_case(&case);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(Outcome::Success)
        }
        Err(LoadError::Invalid(findings)) => {
            for f in &findings {
                eprintln!("{}: {f}", args.bundle.display());
            }
            anyhow::bail!("{} finding(s) in {}", findings.len(), args.bundle.display())
        }
        Err(e) => Err(e.into()),
    }
}
