//! Experiment harness CLI: PCRB evaluation, the joint optimization, the
//! EBC pipeline, parameter sweeps, and the verification suites.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use netsense::ebc::{AoaConfig, EbcPlan};
use netsense::harness::{self, DesignPointFile, SweepSpec};
use netsense::optimizer::{self, OptimConfig};
use netsense::scenario::{Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "netsense",
    about = "PCRB evaluation and joint transmit/compression design for networked sensing \
             over capacity-limited fronthaul"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario TOML file.
    scenario: PathBuf,
    /// Override both antenna counts with the full-size defaults (8).
    #[arg(long)]
    full: bool,
    /// Override the transmit antenna count.
    #[arg(long)]
    mt: Option<usize>,
    /// Override the receive antenna count.
    #[arg(long)]
    mr: Option<usize>,
    /// Override the Monte-Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> anyhow::Result<(ScenarioConfig, Scenario)> {
        let mut cfg = ScenarioConfig::from_path(&self.scenario)
            .with_context(|| format!("reading {}", self.scenario.display()))?;
        if self.full {
            cfg.mt = 8;
            cfg.mr = 8;
        }
        if let Some(mt) = self.mt {
            cfg.mt = mt;
        }
        if let Some(mr) = self.mr {
            cfg.mr = mr;
        }
        if let Some(s) = self.samples {
            cfg.mc_samples = s;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let scenario = Scenario::from_config(&cfg)?;
        Ok((cfg, scenario))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the PCRB at a design point (defaults to the feasible
    /// uniform-power start).
    Pcrb {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// JSON design-point file (R and Q matrices); omitted = feasible start.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Dump the posterior FIM to this CSV file.
        #[arg(long)]
        dump_fim: Option<PathBuf>,
    },
    /// Jointly optimize transmit and compression covariances.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the final design point (JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-iteration trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the estimate-then-beamform-then-compress pipeline.
    Ebc {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the EBC plan (angles + beamformers) here.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Write the per-iteration trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a parameter sweep from a TOML spec file.
    Sweep {
        /// Sweep spec (axis, values, schemes, scenario, output).
        spec: PathBuf,
    },
    /// Run the verification suites; nonzero exit on any failure.
    Verify,
}

fn optim_config() -> OptimConfig {
    OptimConfig::default()
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Pcrb { scenario, design, dump_fim } => {
            let (_, scn) = scenario.load()?;
            let samples = scn.sample_set()?;
            let cfg = optim_config();
            let point = match design {
                None => optimizer::init_feasible(&scn, &samples, &cfg)?,
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let file: DesignPointFile = serde_json::from_str(&text)?;
                    let (r, q) = file.matrices();
                    optimizer::evaluate(&scn, &samples, &r, &q)?
                }
            };
            println!("pcrb {:.12e}", point.objective);
            println!("apcrb {:.12e}", point.objective / scn.num_targets() as f64);
            for n in 0..scn.num_bs() {
                println!(
                    "bs {n}: power {:.6} W (budget {:.6}), rate {:.6} bits (cap {:.6})",
                    scn.power_w[n] - point.power_slack[n],
                    scn.power_w[n],
                    scn.fronthaul_bits[n] - point.rate_slack[n],
                    scn.fronthaul_bits[n],
                );
            }
            if let Some(path) = dump_fim {
                let f = netsense::fim::pfim(&scn, &samples, &point.r, &point.q)?;
                let mut w = std::fs::File::create(&path)?;
                netsense::fim::write_matrix_csv(&mut w, &f)?;
                println!("pfim written to {}", path.display());
            }
        }
        Command::Optimize { scenario, out, trace } => {
            let (_, scn) = scenario.load()?;
            let samples = scn.sample_set()?;
            let rep = optimizer::alternate(&scn, &samples, &optim_config())?;
            println!("pcrb {:.12e}", rep.point.objective);
            println!("apcrb {:.12e}", rep.point.objective / scn.num_targets() as f64);
            println!("outer_iters {}", rep.outer_iters);
            println!("termination: {}", rep.termination);
            for flag in &rep.flags {
                println!("flag: {flag}");
            }
            if let Some(path) = trace {
                let mut w = std::fs::File::create(&path)?;
                rep.write_csv(&mut w)?;
            }
            if let Some(path) = out {
                let file = DesignPointFile::from_point(&rep.point);
                std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
            }
        }
        Command::Ebc { scenario, plan, trace } => {
            let (_, scn) = scenario.load()?;
            let samples = scn.sample_set()?;
            let ebc_plan = EbcPlan::estimate(&scn, &AoaConfig::default())?;
            let rep = netsense::ebc::optimize_ebc(&scn, &samples, &ebc_plan, &optim_config())?;
            println!("lr {}", ebc_plan.lr);
            println!("pcrb {:.12e}", rep.point.objective);
            println!("apcrb {:.12e}", rep.point.objective / scn.num_targets() as f64);
            println!("outer_iters {}", rep.outer_iters);
            for flag in &rep.flags {
                println!("flag: {flag}");
            }
            if let Some(path) = plan {
                std::fs::write(&path, ebc_plan.to_text())?;
            }
            if let Some(path) = trace {
                let mut w = std::fs::File::create(&path)?;
                rep.write_csv(&mut w)?;
            }
        }
        Command::Sweep { spec } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec = SweepSpec::from_toml(&text)?;
            let base = ScenarioConfig::from_path(std::path::Path::new(&spec.scenario))?;
            let rows =
                harness::sweep(&base, &spec, &optim_config(), &AoaConfig::default())?;
            let mut w = std::fs::File::create(&spec.output)
                .with_context(|| format!("creating {}", spec.output))?;
            harness::write_rows_csv(&mut w, &rows)?;
            for row in &rows {
                println!("{}", row.csv_line());
            }
            println!("written to {}", spec.output);
        }
        Command::Verify => {
            let results = harness::verify();
            let mut failed = false;
            for r in &results {
                println!("{}: {} — {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
                failed |= !r.passed;
            }
            if failed {
                bail!("verification failed");
            }
        }
    }
    Ok(())
}
