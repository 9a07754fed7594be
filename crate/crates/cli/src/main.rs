fn main() {
    std::process::exit(gridplan_cli::run_cli(std::env::args_os()));
}
