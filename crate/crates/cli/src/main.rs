fn main() {
    std::process::exit(ilp_forge_cli::run(std::env::args_os()));
}
