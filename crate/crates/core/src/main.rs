use std::process::ExitCode;

use clap::Parser;
use spikelab::cli::{Cli, main_with};

fn main() -> ExitCode {
    faer::set_global_parallelism(faer::Par::Seq);
    main_with(Cli::parse())
}
