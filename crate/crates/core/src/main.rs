fn main() {
    std::process::exit(vcount::cli::run_from_env());
}
