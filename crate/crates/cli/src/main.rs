fn main() {
    std::process::exit(subspace_gp_cli::run(std::env::args_os()));
}
