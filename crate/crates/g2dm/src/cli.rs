//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, Method};
use crate::error::{argument, Result};
use crate::harness;
use crate::io;
use crate::report::{self, emit_report};

#[derive(Debug, Parser)]
#[command(name = "g2dm", version, about = "Multi-source domain generalization experiments")]
pub struct Cli {
    /// Experiment config (key = value lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run only this training seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model on the sources of the first unseen domain.
    Train {
        #[arg(long, default_value = "g2dm")]
        method: String,
    },
    /// Leave-one-domain-out evaluation of every configured method.
    Loo,
    /// Pairwise divergences on raw and encoded features.
    Divergence,
    /// Convex-hull check and risk-bound audit.
    Audit,
    /// Retrain with each source removed in turn.
    AblateSources,
    /// Vary the random projection size.
    SweepRp {
        /// Comma-separated sizes; overrides the config.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Re-emit the tables of an earlier leave-one-domain-out run.
    Report {
        /// Defaults to `<out>/result.json`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write the sampled domains as CSV.
    Data,
}

/// Resolve the config from the file and the global overrides.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn announce(paths: &[&Path]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::Train { method } => {
            let method = Method::parse(method).ok_or_else(|| argument(format!("unknown method {method:?}")))?;
            let art = harness::train_single(&cfg, cfg.seeds[0], method)?;
            let history = out.join("history.jsonl");
            io::write_history(&history, &art.report.history)?;
            let final_ckpt = out.join("checkpoint_final.json");
            io::save_checkpoint(&final_ckpt, &art.bundle)?;
            for (c, epoch, bundle) in &art.best {
                let p = out.join(format!("checkpoint_{}.json", c.name()));
                io::save_checkpoint(&p, bundle)?;
                println!("{}: epoch {epoch}", c.name());
            }
            let (j, c) = emit_report(&out, &art.report)?;
            println!("final unseen accuracy {:.4}", art.report.final_unseen_acc);
            if let Some(r) = art.report.meta_risk {
                println!("meta risk {r:.4}");
            }
            for w in &art.report.warnings {
                eprintln!("warning: {w}");
            }
            announce(&[&history, &final_ckpt, &j, &c]);
        }
        Command::Loo => {
            let result = harness::leave_one_domain_out(&cfg)?;
            let (j, c) = emit_report(&out, &result)?;
            print!("{}", report::summary(&result));
            announce(&[&j, &c]);
        }
        Command::Divergence => {
            let r = harness::divergence_study(&cfg)?;
            let (j, c) = emit_report(&out, &r)?;
            let raw = out.join("heatmap_raw.csv");
            io::write_file(&raw, report::heatmap_csv(&r.raw.labels, &r.raw.values).as_bytes())?;
            for s in &r.encoded {
                for (name, labels, values) in [
                    ("erm", &s.erm.labels, &s.erm.values),
                    ("g2dm", &s.g2dm.labels, &s.g2dm.values),
                    ("delta", &s.delta.labels, &s.delta.delta),
                ] {
                    let p = out.join(format!("heatmap_seed{}_{name}.csv", s.seed));
                    io::write_file(&p, report::heatmap_csv(labels, values).as_bytes())?;
                }
            }
            println!("fraction of pairs closer under g2dm {:.3}, mean delta {:.4}", r.fraction_positive, r.mean_delta);
            announce(&[&j, &c, &raw]);
        }
        Command::Audit => {
            let r = harness::audit_study(&cfg)?;
            let (j, c) = emit_report(&out, &r)?;
            println!(
                "hull: {}/{} pairs within epsilon + tau = {:.4}",
                r.hull.satisfied,
                r.hull.pairs.len(),
                r.hull.epsilon + r.hull.tau
            );
            for s in &r.audits {
                println!("seed {}: lhs {:.4} <= rhs {:.4}: {}", s.seed, s.audit.lhs, s.audit.rhs, s.audit.holds(0.0));
            }
            announce(&[&j, &c]);
        }
        Command::AblateSources => {
            let t = harness::source_ablation(&cfg)?;
            let (j, c) = emit_report(&out, &t)?;
            for r in &t.rows {
                println!("removed {:<16} {:.4}", r.removed.as_deref().unwrap_or("none"), r.mean);
            }
            announce(&[&j, &c]);
        }
        Command::SweepRp { sizes } => {
            let sizes = sizes.clone().unwrap_or_else(|| cfg.rp_sizes.clone());
            let t = harness::rp_size_sweep(&cfg, &sizes)?;
            let (j, c) = emit_report(&out, &t)?;
            for r in &t.rows {
                println!("size {:<5} {:.4}", r.size, r.mean);
            }
            announce(&[&j, &c]);
        }
        Command::Report { input } => {
            let input = input.clone().unwrap_or_else(|| out.join("result.json"));
            let result: harness::ExperimentResult = io::read_json(&input)?;
            let (j, c) = emit_report(&out, &result)?;
            print!("{}", report::summary(&result));
            announce(&[&j, &c]);
        }
        Command::Data => {
            let prep = harness::prepare(&cfg)?;
            let p = out.join("samples.csv");
            io::write_samples(&p, &prep.domains)?;
            announce(&[&p]);
        }
    }
    Ok(())
}
