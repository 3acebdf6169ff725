fn main() {
    std::process::exit(coxsgd::cli::run());
}
