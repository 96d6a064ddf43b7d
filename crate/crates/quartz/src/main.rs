fn main() {
    std::process::exit(quartz::cli::run());
}
