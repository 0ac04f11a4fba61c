fn main() {
    std::process::exit(gpo_cli::main_from_env());
}
