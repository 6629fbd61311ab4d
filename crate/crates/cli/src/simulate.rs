use std::path::PathBuf;

use clap::Args;
use vmnet_core::arrivals::DeltaRule;
use vmnet_core::dataset::write_simulation;
use vmnet_core::network::simulate_network;
use vmnet_core::Execution;

use crate::config::RunConfig;
use crate::error::Result;
use crate::FormatArgs;

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Output directory (default: <output root>/simulation).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub hubs: Option<usize>,
    #[arg(long)]
    pub years: Option<f64>,
    /// Monte Carlo paths per bond curve.
    #[arg(long)]
    pub bond_paths: Option<usize>,
    /// coin, hub_receives or hub_pays.
    #[arg(long)]
    pub delta_rule: Option<DeltaRule>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub theta_cir: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub theta_int: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub format: FormatArgs,
}

impl SimulateArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            seed => c.seed,
            nodes => c.nodes,
            hubs => c.hubs,
            years => c.years,
            bond_paths => c.bond_paths,
            delta_rule => c.delta_rule,
            kappa => c.cir.kappa,
            theta_cir => c.cir.theta,
            sigma => c.cir.sigma,
            r0 => c.cir.r0,
            gamma => c.intensity.gamma,
            eta => c.intensity.eta,
            theta_int => c.intensity.theta_int,
            beta => c.intensity.beta,
        );
        if let Some(f) = self.format.format {
            c.format = f;
        }
    }
}

pub fn run(mut config: RunConfig, args: SimulateArgs) -> Result<()> {
    args.apply(&mut config);
    let sim_config = config.simulation()?;
    let out = args.out.unwrap_or_else(|| config.output_root().join("simulation"));
    let sim = simulate_network(&sim_config, Execution::default())?;
    let manifest = write_simulation(&sim, &out, config.format, Some(config.echo()))?;

    let labels: Vec<f64> = sim.labels.iter().skip(1).flatten().copied().collect();
    let n = labels.len().max(1) as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let sd = (labels.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cls = &manifest.contract_classes;
    println!("simulation written to {}", out.display());
    println!("days: {}  nodes: {}  hubs: {}", sim.n_days(), sim.n_nodes(), config.hubs);
    println!(
        "contracts: {} (hub-hub {}, hub-private {}, private-private {})",
        manifest.n_contracts, cls.hub_hub, cls.hub_private, cls.private_private
    );
    println!("matrix width W: {}", manifest.width);
    println!("labels: mean {mean:.6e}  std {sd:.6e}  min {min:.6e}  max {max:.6e}");
    Ok(())
}
