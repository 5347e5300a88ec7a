use clap::Parser;

fn main() {
    let cli = sketchql_cli::Cli::parse();
    let stdin = std::io::stdin();
    let code = sketchql_cli::run(cli, &mut stdin.lock(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
