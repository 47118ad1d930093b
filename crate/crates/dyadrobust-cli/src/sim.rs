use std::path::PathBuf;

use clap::Args;
use dyadrobust::error::Result;
use dyadrobust::simulate::{run_coverage, DyadSampling, SimConfig};

use crate::manifest::{write_csv_artifact, write_json_artifact, RunManifest};

#[derive(Args)]
pub struct SimulateArgs {
    /// key=value configuration file; CLI flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    periods: Option<usize>,
    /// Sample each dyad independently with this probability instead of
    /// taking all pairs.
    #[arg(long, allow_hyphen_values = true)]
    density: Option<f64>,
    /// Member-effect loading in both the outcome and the regressor.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    member_var: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    noise_var: Option<f64>,
    /// True slope of the observed regressor.
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    regressor_loading: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output stem; artifacts are <stem>.coverage.json / .csv.
    #[arg(long, default_value = "simulate")]
    out: PathBuf,
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::from_kv_file(path)?,
        None => SimConfig::default(),
    };
    if let Some(v) = args.members {
        cfg.n_members = v;
    }
    if let Some(v) = args.periods {
        cfg.periods = v;
    }
    if let Some(v) = args.density {
        cfg.dyad_sampling = DyadSampling::Density(v);
    }
    if let Some(v) = args.alpha {
        cfg.member_loading = v;
    }
    if let Some(v) = args.member_var {
        cfg.member_var = v;
    }
    if let Some(v) = args.noise_var {
        cfg.noise_var = v;
    }
    if let Some(v) = args.slope {
        cfg.slope_true = v;
    }
    if let Some(v) = args.regressor_loading {
        cfg.regressor_loading = v;
    }
    if let Some(v) = args.reps {
        cfg.replications = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;

    let result = run_coverage(&cfg)?;

    let mut manifest = RunManifest::new("simulate", args.out.to_string_lossy().into_owned());
    if let Some(path) = &args.config {
        manifest.data = Some(path.to_string_lossy().into_owned());
    }
    manifest.seed = Some(cfg.seed);
    manifest.simulation = Some(cfg);

    let json = args.out.with_file_name(format!(
        "{}.coverage.json",
        args.out.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    let csv = args.out.with_file_name(format!(
        "{}.coverage.csv",
        args.out.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    manifest.outputs = vec![
        json.to_string_lossy().into_owned(),
        csv.to_string_lossy().into_owned(),
    ];
    write_json_artifact(&json, &manifest, "coverage", &result)?;
    write_csv_artifact(&csv, |w| result.to_csv(w))?;
    Ok(())
}
