//! `mea`: train, check and post-process membrane equilibrium surfaces.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mea_core::config::RunConfig;
use mea_core::postproc::{export_principal, export_surface, write_atomic, ExportFormat};
use mea_core::reference::compare_values;
use mea_core::residual::{residual_samples, write_residual_csv};
use mea_core::run::{self, ReferenceData};
use mea_core::trainer::{TrainStatus, TrainedField};
use mea_core::verify::{desk_config, run_suite, Suite};
use mea_core::MeaError;

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "mea", version, about = "Membrane equilibrium form finding with physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network for the case in a configuration file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `<outputs.directory or $MEA_OUTPUT_ROOT>/<case name>`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the configured reference solution.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the stress state for admissibility and print the verdict as JSON.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare two exported `x1,x2,f` CSV files sampled at the same points.
    Compare { candidate: PathBuf, reference: PathBuf },
    /// Export fields of a trained surface.
    Export {
        #[arg(long)]
        config: PathBuf,
        /// Trained field written by `solve`.
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_enum, default_value_t = Quantity::Surface)]
        quantity: Quantity,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Grid nodes along x1 and x2, e.g. `101,81`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the oracle battery.
    Verify {
        #[arg(long, default_value = "oracles")]
        suite: String,
        /// Override the desk-scale Adam epochs of manufactured runs.
        #[arg(long)]
        adam_epochs: Option<usize>,
        #[arg(long)]
        n_pde: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    Surface,
    Residual,
    Principal,
}

enum Failure {
    Error(MeaError),
    Diverged(String),
    Verify(usize),
}

impl From<MeaError> for Failure {
    fn from(e: MeaError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(MeaError::Divergence(msg))) | Err(Failure::Diverged(msg)) => {
            eprintln!("error: training diverged: {msg}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verify(n)) => {
            eprintln!("error: {n} check(s) outside tolerance");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(v).map_err(MeaError::from)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Solve { config, output } => {
            let (cfg, text) = RunConfig::from_path(&config)?;
            let out = output.unwrap_or_else(|| cfg.output_dir());
            let outcome = run::solve(&cfg, &text, &out)?;
            print_json(&outcome.report)?;
            log::info!("artifacts in {}", out.display());
            if let TrainStatus::Diverged { epoch, reason } = outcome.result.status {
                return Err(Failure::Diverged(format!("epoch {epoch}: {reason}")));
            }
            Ok(())
        }
        Command::Reference { config, output } => {
            let (cfg, _) = RunConfig::from_path(&config)?;
            let out = output.unwrap_or_else(|| cfg.output_dir());
            std::fs::create_dir_all(&out)?;
            let case = run::prepare(&cfg)?;
            match run::build_reference(&cfg, &case)? {
                None => Err(MeaError::Config("the configuration has no [reference] section".into()).into()),
                Some(ReferenceData::Grid { solution, estimate }) => {
                    let mut buf = Vec::new();
                    solution.write_csv(&mut buf)?;
                    write_atomic(&out.join("reference.csv"), &buf)?;
                    let summary = serde_json::json!({
                        "nx": solution.nx,
                        "ny": solution.ny,
                        "relative_residual": solution.relative_residual,
                        "refinement_estimate": estimate,
                    });
                    write_atomic(&out.join("reference.json"), serde_json::to_string_pretty(&summary).map_err(MeaError::from)?.as_bytes())?;
                    print_json(&summary)
                }
                Some(ReferenceData::Manufactured) => {
                    let m = case.manufactured.as_ref().expect("manufactured reference carries its case");
                    let d = m.descriptor();
                    write_atomic(&out.join("manufactured.json"), serde_json::to_string_pretty(&d).map_err(MeaError::from)?.as_bytes())?;
                    print_json(&d)
                }
            }
        }
        Command::Check { config } => {
            let (cfg, _) = RunConfig::from_path(&config)?;
            let case = run::prepare(&cfg)?;
            print_json(&run::admissibility(&cfg, &case)?)
        }
        Command::Compare { candidate, reference } => {
            let (pc, vc) = read_field_csv(&candidate)?;
            let (pr, vr) = read_field_csv(&reference)?;
            if pc.len() != pr.len() || pc.iter().zip(&pr).any(|(a, b)| (a.0 - b.0).abs() > 1e-9 || (a.1 - b.1).abs() > 1e-9) {
                return Err(MeaError::Config("the two files are not sampled at the same points".into()).into());
            }
            print_json(&compare_values(&vc, &vr)?)
        }
        Command::Export { config, field, quantity, format, grid, output } => {
            let (cfg, _) = RunConfig::from_path(&config)?;
            let case = run::prepare(&cfg)?;
            let trained = TrainedField::load(&field)?;
            let [nx, ny] = match grid.as_deref() {
                Some([a, b]) => [*a, *b],
                Some(_) => return Err(MeaError::Config("--grid takes two values, e.g. 101,81".into()).into()),
                None => cfg.outputs.grid,
            };
            let fmt: ExportFormat = format.parse()?;
            let mut buf = Vec::new();
            match quantity {
                Quantity::Surface => {
                    export_surface(&trained, &case.domain, nx, ny, fmt, &mut buf)?;
                }
                Quantity::Residual | Quantity::Principal if fmt != ExportFormat::Csv => {
                    return Err(MeaError::Format(format!("{fmt} for this quantity; only csv is supported")).into());
                }
                Quantity::Residual => {
                    let (lo, hi) = case.domain.bounding_box();
                    let mut pts = Vec::new();
                    for j in 0..ny {
                        for i in 0..nx {
                            let p = mea_core::geometry::Point::new(
                                lo.x1 + (hi.x1 - lo.x1) * i as f64 / (nx - 1).max(1) as f64,
                                lo.x2 + (hi.x2 - lo.x2) * j as f64 / (ny - 1).max(1) as f64,
                            );
                            if case.domain.contains(p) {
                                pts.push(p);
                            }
                        }
                    }
                    write_residual_csv(&residual_samples(&trained, case.coefficients(), &pts)?, &mut buf)?;
                }
                Quantity::Principal => {
                    export_principal(case.coefficients(), &case.domain, nx, ny, &mut buf)?;
                }
            }
            write_atomic(&output, &buf)?;
            Ok(())
        }
        Command::Verify { suite, adam_epochs, n_pde } => {
            let suite: Suite = suite.parse()?;
            let mut cfg = desk_config(mea_core::trainer::Formulation::Hard);
            cfg.adam_epochs = adam_epochs.unwrap_or(cfg.adam_epochs);
            cfg.n_pde = n_pde.unwrap_or(cfg.n_pde);
            let checks = run_suite(suite, &cfg)?;
            for c in &checks {
                eprintln!("{} {:<40} {:.3e} (tolerance {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            print_json(&checks)?;
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(Failure::Verify(n)),
            }
        }
    }
}

type Samples = (Vec<(f64, f64)>, Vec<f64>);

fn read_field_csv(path: &Path) -> Result<Samples, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| MeaError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let (ix, iy, iff) = match (
        cols.iter().position(|c| *c == "x1"),
        cols.iter().position(|c| *c == "x2"),
        cols.iter().position(|c| *c == "f"),
    ) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(MeaError::Format(format!("{}: expected columns x1,x2,f", path.display())).into()),
    };
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64, Failure> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| MeaError::Format(format!("{}: bad row {}", path.display(), n + 2)).into())
        };
        pts.push((get(ix)?, get(iy)?));
        vals.push(get(iff)?);
    }
    Ok((pts, vals))
}
