fn main() {
    std::process::exit(fracvortex::cli::run());
}
