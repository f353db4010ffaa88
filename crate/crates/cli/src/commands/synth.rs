use std::path::PathBuf;

use clap::{Args, Subcommand};
use quadlin::patient_io::write_bundle;
use quadlin::synthetic::{phantom_case, random_case, PhantomSpec, RandomSpec};

use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
    /// Bundle directory to write.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum SynthKind {
    /// Two-dimensional target-plus-parotid phantom.
    Phantom {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.03)]
        jitter: f64,
        #[arg(long, default_value_t = 63.0)]
        ptv_gy: f64,
    },
    /// Small random instance with two targets and three organs.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        voxels: usize,
        #[arg(long, default_value_t = 8)]
        beamlets: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
    },
}

pub fn run(args: &SynthArgs) -> anyhow::Result<Outcome> {
    let Some(out) = &args.out else {
        anyhow::bail!("--out is required");
    };
    let case = match &args.kind {
        SynthKind::Phantom { seed, jitter, ptv_gy } => phantom_case(&PhantomSpec {
            seed: *seed,
            jitter: *jitter,
            predicted_ptv_gy: *ptv_gy,
            ..PhantomSpec::default()
        }),
        SynthKind::Random {
            seed,
            voxels,
            beamlets,
            density,
        } => random_case(
            &RandomSpec {
                n_voxels: *voxels,
                n_beamlets: *beamlets,
                density: *density,
            },
            *seed,
        ),
    };
    write_bundle(&case, out)?;
    println!("wrote {} ({} voxels, {} beamlets) to {}", case.id, case.n_voxels(), case.n_beamlets(), out.display());
    Ok(Outcome::Success)
}
