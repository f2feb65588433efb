use clap::{Parser, Subcommand};
use dapsm_cli::commands::{cmd_balance, cmd_match, cmd_simulate, BalanceArgs, MatchArgs, SimulateArgs};

/// Distance adjusted propensity score matching.
#[derive(Parser)]
#[command(name = "dapsm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match treated to control units and report balance and effects
    Match(MatchArgs),
    /// Run the Monte Carlo comparison
    Simulate(SimulateArgs),
    /// Balance report for an existing pairs file
    Balance(BalanceArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Balance(a) => cmd_balance(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
