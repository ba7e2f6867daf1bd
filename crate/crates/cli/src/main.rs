//! `vqg`: exact axiom checks, expansions and dimension tables for the algebra
//! descriptions in a TOML file.
//!
//! Exit codes: 0 means every requested check passed, 1 means some check
//! failed mathematically (a witness is printed) or the truncation was too
//! small even after a retry, 2 means the input could not be used at all.

mod cache;
mod input;
mod report;
mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};

use vqg_core::linalg::Space;
use vqg_core::series::Series;
use vqg_core::state_expr::parse_state;
use vqg_core::linalg::StateVector;
use vqg_core::VqgError;

use input::{EngineModel, Model, SpecFile};
use report::SuiteReport;

#[derive(Parser)]
#[command(name = "vqg", version, about = "Exact checks for vertex and quantum group data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one named check suite from a description file.
    Check {
        file: PathBuf,
        #[arg(long)]
        suite: String,
        /// Override the file's truncation depth.
        #[arg(long)]
        truncation: Option<u32>,
        /// Exponent window `lo:hi` (hi exclusive).
        #[arg(long)]
        window: Option<String>,
    },
    /// Expand `Y(left, z) right` and print the window coefficients.
    Ope {
        file: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        #[arg(long)]
        window: Option<String>,
    },
    /// Graded dimensions of the truncated state space, one line per weight.
    Dims {
        file: PathBuf,
        /// Comma-separated lattice class, e.g. `0,1`.
        #[arg(long)]
        sector: Option<String>,
        #[arg(long)]
        max_weight: Option<i64>,
    },
    /// Run every suite that applies to the file's kind.
    Report {
        file: PathBuf,
        /// `text` or `json`.
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Check {
            file,
            suite,
            truncation,
            window,
        } => cmd_check(&file, &suite, truncation, window.as_deref()),
        Cmd::Ope {
            file,
            left,
            right,
            window,
        } => cmd_ope(&file, &left, &right, window.as_deref()),
        Cmd::Dims {
            file,
            sector,
            max_weight,
        } => cmd_dims(&file, sector.as_deref(), max_weight),
        Cmd::Report { file, format } => cmd_report(&file, &format),
    }
}

fn parse_window(text: &str) -> Result<(i64, i64)> {
    let (a, b) = text
        .split_once(':')
        .context("window must have the form lo:hi")?;
    let lo: i64 = a.trim().parse().context("bad window lower bound")?;
    let hi: i64 = b.trim().parse().context("bad window upper bound")?;
    ensure!(lo < hi, "window must satisfy lo < hi, got {lo}:{hi}");
    Ok((lo, hi))
}

fn window_of(spec: &SpecFile, flag: Option<&str>) -> Result<(i64, i64)> {
    if let Some(text) = flag {
        return parse_window(text);
    }
    Ok(spec.window.map(|[a, b]| (a, b)).unwrap_or((-4, 4)))
}

fn file_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", cache::digest_hex(&[bytes]))
}

fn cmd_check(
    path: &Path,
    suite: &str,
    truncation: Option<u32>,
    window: Option<&str>,
) -> Result<i32> {
    let (spec, bytes) = input::load(path)?;
    let trunc = truncation.unwrap_or(spec.truncation);
    ensure!(trunc >= 1, "truncation must be at least 1");
    let window = window_of(&spec, window)?;
    let model = input::build(&spec)?;
    let start = Instant::now();
    let rows = suites::run_suite(&spec.kind, &model, suite, trunc, window)?;
    let suites = vec![SuiteReport {
        suite: suite.to_string(),
        rows,
        millis: start.elapsed().as_millis(),
    }];
    print!(
        "{}",
        report::render_text(
            &path.display().to_string(),
            &spec.kind,
            trunc,
            &file_digest(&bytes),
            &suites,
        )
    );
    Ok(report::exit_code(&suites))
}

fn cmd_report(path: &Path, format: &str) -> Result<i32> {
    ensure!(
        format == "text" || format == "json",
        "unknown format '{format}' (expected text or json)"
    );
    let (spec, bytes) = input::load(path)?;
    let window = window_of(&spec, None)?;
    let model = input::build(&spec)?;
    let mut all = Vec::new();
    for suite in suites::applicable_suites(&spec.kind) {
        let start = Instant::now();
        let rows = suites::run_suite(&spec.kind, &model, suite, spec.truncation, window)?;
        all.push(SuiteReport {
            suite: suite.to_string(),
            rows,
            millis: start.elapsed().as_millis(),
        });
    }
    let digest = file_digest(&bytes);
    if format == "json" {
        let value = report::to_json(&spec.kind, spec.truncation, &digest, &all);
        println!("{}", serde_json::to_string(&value)?);
    } else {
        print!(
            "{}",
            report::render_text(
                &path.display().to_string(),
                &spec.kind,
                spec.truncation,
                &digest,
                &all,
            )
        );
    }
    Ok(report::exit_code(&all))
}

fn engine_of<'a>(model: &'a Model, what: &str) -> Result<&'a EngineModel> {
    match model {
        Model::Engine(em) => Ok(em),
        _ => bail!("{what} needs a state space; this kind does not build one"),
    }
}

fn cmd_ope(path: &Path, left: &str, right: &str, window: Option<&str>) -> Result<i32> {
    let (spec, bytes) = input::load(path)?;
    let (lo, hi) = window_of(&spec, window)?;
    let model = input::build(&spec)?;
    let em = engine_of(&model, "ope")?;

    let lv = parse_state(&em.ctx, left).map_err(|e| anyhow::anyhow!("{e}"))?;
    let rv = parse_state(&em.ctx, right).map_err(|e| anyhow::anyhow!("{e}"))?;

    let key = cache::digest_hex(&[
        &bytes,
        spec.truncation.to_string().as_bytes(),
        env!("CARGO_PKG_VERSION").as_bytes(),
        left.as_bytes(),
        right.as_bytes(),
        format!("{lo}:{hi}").as_bytes(),
    ]);
    if let Some(cached) = cache::lookup(&key) {
        print!("{cached}");
        return Ok(0);
    }

    let mut acc: Option<Series<StateVector>> = None;
    for (ka, ca) in lv.iter() {
        for (kb, cb) in rv.iter() {
            let term = match em.engine.eval_pair(ka, kb, hi) {
                Ok(s) => s.scale_scalar(&ca.mul(cb)),
                Err(VqgError::Truncation(t)) => {
                    eprintln!(
                        "truncation insufficient: {t}; raise the file's truncation \
                         or shrink the window"
                    );
                    return Ok(1);
                }
                Err(e) => bail!("{e}"),
            };
            acc = Some(match acc {
                None => term,
                Some(prev) => prev.add(&term),
            });
        }
    }

    let text = match acc {
        None => "0\n".to_string(),
        Some(s) => {
            let clipped = s.clip(&[lo], &[hi]);
            if clipped.iter().next().is_none() {
                "0\n".to_string()
            } else {
                format!("{}\n", clipped.render())
            }
        }
    };
    print!("{text}");
    cache::store(&key, &text);
    Ok(0)
}

fn cmd_dims(path: &Path, sector: Option<&str>, max_weight: Option<i64>) -> Result<i32> {
    let (spec, _) = input::load(path)?;
    let model = input::build(&spec)?;
    let em = engine_of(&model, "dims")?;
    let space = em.engine.space();

    fn fock_params(space: &Space) -> Option<(u32, i64, i64)> {
        match space {
            Space::Fock {
                rank,
                lambda_box,
                max_weight,
            } => Some((*rank, *lambda_box, *max_weight)),
            Space::Labeled { inner, .. } => fock_params(inner),
            _ => None,
        }
    }

    let (space_max, sector_vec) = match (fock_params(space), space) {
        (Some((rank, lambda_box, space_max)), _) => {
            let sector_vec = match sector {
                None => None,
                Some(text) => {
                    let parts: Result<Vec<i64>, _> =
                        text.split(',').map(|p| p.trim().parse::<i64>()).collect();
                    let parts = parts.context("sector must be comma-separated integers")?;
                    ensure!(
                        parts.len() == rank as usize,
                        "sector needs {rank} entries, got {}",
                        parts.len()
                    );
                    for c in &parts {
                        ensure!(
                            c.abs() <= lambda_box,
                            "sector entry {c} lies outside the truncated class box \
                             (lambda-box {lambda_box}); raise lambda-box in the file"
                        );
                    }
                    Some(parts)
                }
            };
            (space_max, sector_vec)
        }
        (None, Space::Poly { max_deg }) => {
            ensure!(sector.is_none(), "this kind has no lattice sectors");
            (i64::from(*max_deg), None)
        }
        _ => bail!("dims needs a graded state space"),
    };

    let mw = max_weight.unwrap_or(space_max);
    ensure!(mw >= 0, "max-weight must be nonnegative");
    ensure!(
        mw <= space_max,
        "max-weight {mw} exceeds the truncated space (built up to weight {space_max}); \
         raise max-weight in the file"
    );

    for w in 0..=mw {
        let n = space.graded_dimension(sector_vec.as_deref(), w);
        println!("weight {w}: {n}");
    }
    Ok(0)
}
