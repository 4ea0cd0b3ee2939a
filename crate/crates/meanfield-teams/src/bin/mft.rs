fn main() {
    std::process::exit(meanfield_teams::cli::main(std::env::args_os()));
}
