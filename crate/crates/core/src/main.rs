fn main() {
    std::process::exit(mobpart::cli::run());
}
