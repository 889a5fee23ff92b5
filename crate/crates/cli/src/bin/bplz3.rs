//! Command-line front end for the `bplz3` checker.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

/// Checks a straight-line Boogie program with z3.
#[derive(Parser)]
#[command(name = "bplz3", version)]
struct Args {
    /// Program to check.
    file: PathBuf,
    /// z3 executable.
    #[arg(long, env = "BPLZ3_Z3", default_value = "z3")]
    z3: PathBuf,
    /// Per-assertion time limit in seconds.
    #[arg(long, default_value_t = 10)]
    timeout: u64,
    /// Limit for the whole run in seconds.
    #[arg(long, default_value_t = 60)]
    total_timeout: u64,
    /// Print the generated SMT-LIB script instead of checking.
    #[arg(long)]
    print_smt: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let src = match std::fs::read_to_string(&args.file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", args.file.display());
            return ExitCode::from(2);
        }
    };
    if args.print_smt {
        return match bplz3::smt_script(&src, Some(Duration::from_secs(args.timeout))) {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", args.file.display());
                ExitCode::from(2)
            }
        };
    }
    let opts = bplz3::Options {
        z3: args.z3,
        check_timeout: Duration::from_secs(args.timeout),
        total_timeout: Duration::from_secs(args.total_timeout),
    };
    match bplz3::check(&src, &opts) {
        Ok(r) => {
            print!("{}", r.render(&args.file.display().to_string()));
            if r.all_proved() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            println!("{}: {e}", args.file.display());
            ExitCode::from(2)
        }
    }
}
