fn main() {
    std::process::exit(geoflow::cli::run());
}
