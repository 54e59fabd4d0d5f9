use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fracture_contact::cli::bench::bench_report;
use fracture_contact::cli::export::{convergence_table, diagnostics_text, write_outputs};
use fracture_contact::cli::presets::Preset;
use fracture_contact::cli::{solve, RunConfig, RunOutcome};
use fracture_contact::mesh::load_mesh;

#[derive(Parser)]
#[command(version, about = "Frictional contact on fractures in 2D linear elasticity")]
struct Cli {
    /// Threads used for stiffness assembly (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML configuration.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in benchmark.
    Bench {
        /// inclined-crack, shear-throughgoing, sneddon, crossing-single or crossing-multi
        preset: Preset,
        /// Write the summary JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for profiles and field output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the preset configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarize a mesh file.
    MeshInfo { mesh: PathBuf },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    anyhow::ensure!(cli.threads >= 1, "--threads must be at least 1");
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            cfg.solver.threads = cli.threads;
            if out.is_some() {
                cfg.output.dir = out;
            }
            let base = config.parent().map(Path::to_path_buf);
            let outcome = solve(&cfg, base.as_deref())?;
            finish(&outcome, cfg.output.dir.as_deref())
        }
        Command::Bench { preset, report, out, print_config } => {
            let mut cfg = preset.config();
            if print_config {
                print!("{}", cfg.to_toml()?);
                return Ok(true);
            }
            cfg.solver.threads = cli.threads;
            cfg.output.dir = out;
            let outcome = solve(&cfg, None)?;
            let ok = finish(&outcome, cfg.output.dir.as_deref())?;
            let summary = bench_report(preset, &outcome)?;
            let json = serde_json::to_string_pretty(&summary)?;
            println!("{json}");
            if let Some(path) = report {
                std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ok)
        }
        Command::MeshInfo { mesh } => {
            let m = load_mesh(&mesh).with_context(|| format!("loading {}", mesh.display()))?;
            let [x0, y0, x1, y1] = m.bounding_box();
            println!("nodes        {}", m.n_nodes());
            println!("triangles    {}", m.n_elements());
            println!("fractures    {}", m.fractures.len());
            println!("bounding box [{x0}, {x1}] x [{y0}, {y1}]");
            println!("area         {}", m.total_area());
            println!("min edge     {}", m.min_edge_length());
            let split = m.prepared()?;
            for f in &split.fractures {
                println!(
                    "fracture {}: {} nodes, length {}, {}",
                    f.id,
                    f.nodes.len(),
                    split.fracture_length(f.id),
                    if f.is_through_going { "through-going" } else { "embedded" }
                );
            }
            println!("contact pairs {} ({} at crossings)", split.n_pairs(), split.pairs.iter().filter(|p| p.is_crossing_pair).count());
            Ok(true)
        }
    }
}

/// Prints the convergence table and writes outputs; returns whether every
/// load step converged.
fn finish(outcome: &RunOutcome, dir: Option<&Path>) -> Result<bool> {
    eprint!("{}", convergence_table(&outcome.steps));
    let check = outcome.contact_check();
    eprintln!(
        "pairs: {} stick, {} slip, {} open; max penetration {:e} m; wall time {:.2} s",
        check.n_stick,
        check.n_slip,
        check.n_open,
        check.max_penetration(),
        outcome.wall_time_s
    );
    if let Some(dir) = dir {
        for p in write_outputs(outcome, dir)? {
            eprintln!("wrote {}", p.display());
        }
    } else if !outcome.converged() {
        let path = PathBuf::from("diagnostics.txt");
        std::fs::write(&path, diagnostics_text(outcome)).context("writing diagnostics.txt")?;
        eprintln!("wrote {}", path.display());
    }
    Ok(outcome.converged())
}
