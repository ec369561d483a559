use clap::{Args, Parser, Subcommand};
use coupled_gue::fredholm::DEFAULT_M;
use coupled_gue::report::{
    cmd_prob, cmd_scan, cmd_verify, to_csv, to_json, verify_csv, Command, Format, GridSpec, RunConfig,
    DEFAULT_SAMPLES,
};
use coupled_gue::residuals::{DEFAULT_H_C, DEFAULT_H_XI};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "coupled-gue", version, about = "Joint largest-eigenvalue laws of coupled GUE matrices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Joint probability P(λmax(M₁) ≤ ξ₁, λmax(M₂) ≤ ξ₂).
    Prob(Common),
    /// P and derived quantities over a grid (CSV by default).
    Scan(Common),
    /// Residuals of the identities and PDEs; exit status 0 iff all checks pass.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    n: usize,
    /// Coupling, or a comma-separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    c: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["XI1", "XI2"], allow_hyphen_values = true)]
    xi: Option<Vec<f64>>,
    /// Endpoint grid "start:stop:steps", used on both axes.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    #[arg(long, default_value_t = DEFAULT_M)]
    quad_m: usize,
    #[arg(long, default_value_t = DEFAULT_H_XI)]
    fd_h: f64,
    #[arg(long, default_value_t = DEFAULT_H_C)]
    fd_hc: f64,
    /// Tolerance for finite-difference residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated equation ids or family names.
    #[arg(long, value_delimiter = ',')]
    equations: Option<Vec<String>>,
    /// Append Monte Carlo cross-checks (verify only).
    #[arg(long)]
    mc: bool,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
}

fn config(command: Command, a: Common) -> RunConfig {
    let default_format = if command == Command::Scan { Format::Csv } else { Format::Json };
    RunConfig {
        command,
        n: a.n,
        c: a.c,
        xi: a.xi.map(|v| [v[0], v[1]]),
        grid: a.grid,
        quad_m: a.quad_m,
        fd_h: a.fd_h,
        fd_hc: a.fd_hc,
        tol: a.tol,
        equations: a.equations,
        mc: a.mc,
        samples: a.samples,
        seed: a.seed,
        out: a.out,
        format: a.format.unwrap_or(default_format),
    }
}

fn run(cfg: &RunConfig) -> coupled_gue::Result<(String, bool)> {
    Ok(match cfg.command {
        Command::Prob => {
            let rows = cmd_prob(cfg)?;
            (if cfg.format == Format::Csv { to_csv(&rows)? } else { to_json(&rows)? }, true)
        }
        Command::Scan => {
            let rows = cmd_scan(cfg)?;
            (if cfg.format == Format::Csv { to_csv(&rows)? } else { to_json(&rows)? }, true)
        }
        Command::Verify => {
            let out = cmd_verify(cfg)?;
            let text = if cfg.format == Format::Csv { verify_csv(&out)? } else { to_json(&out)? };
            (text, out.all_pass)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.cmd {
        Cmd::Prob(a) => config(Command::Prob, a),
        Cmd::Scan(a) => config(Command::Scan, a),
        Cmd::Verify(a) => config(Command::Verify, a),
    };
    match run(&cfg) {
        Ok((text, ok)) => {
            let written = match &cfg.out {
                Some(path) => std::fs::write(path, text + "\n"),
                None => {
                    println!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(2);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
