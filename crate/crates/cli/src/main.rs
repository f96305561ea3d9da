use clap::Parser;
use mof_forge_cli::commands::{dispatch, Cli, Io};

fn main() {
    let cli = Cli::parse();
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    let mut io = Io { input: &mut input, out: &mut out, err: &mut err };
    if let Err(e) = dispatch(cli, &mut io) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
