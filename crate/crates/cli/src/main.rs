use std::io;

use clap::Parser;
use planrec_cli::{run, Args};

fn main() {
    let args = Args::parse();
    let code = run(
        &args,
        io::stdin().lock(),
        &mut io::stdout().lock(),
        &mut io::stderr(),
    );
    std::process::exit(code);
}
