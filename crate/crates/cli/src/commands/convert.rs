use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use quadlin::patient_io::openkbp::{convert_openkbp, ConvertOptions, OPENKBP_DIMS};

use crate::Outcome;

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// OpenKBP-style patient folder.
    #[arg(long)]
    pub src: PathBuf,
    /// Bundle directory to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Patient id; defaults to the folder name.
    #[arg(long)]
    pub id: Option<String>,
    /// Grid dimensions as X,Y,Z.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Influence triplet CSV; defaults to dij.csv or influence.csv in the folder.
    #[arg(long)]
    pub influence: Option<PathBuf>,
    /// Prediction set as NAME=PATH; repeatable. The first becomes the bundle's prediction.
    #[arg(long = "prediction")]
    pub predictions: Vec<String>,
}

pub fn run(args: &ConvertArgs) -> anyhow::Result<Outcome> {
    let dims = match args.dims.as_deref() {
        Some(&[x, y, z]) => [x, y, z],
        Some(d) => bail!("--dims needs three values, got {}", d.len()),
        None => OPENKBP_DIMS,
    };
    let mut predictions = Vec::new();
    for p in &args.predictions {
        let Some((name, path)) = p.split_once('=') else {
            bail!("prediction `{p}` must be NAME=PATH");
        };
        predictions.push((name.to_owned(), PathBuf::from(path)));
    }
    let opts = ConvertOptions {
        id: args.id.clone(),
        dims,
        influence: args.influence.clone(),
        predictions,
    };
    let manifest = convert_openkbp(&args.src, &args.out, &opts)
        .with_context(|| format!("converting {}", args.src.display()))?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(Outcome::Success)
}
