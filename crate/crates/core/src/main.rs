fn main() {
    std::process::exit(mobdrf::cli::run(std::env::args_os()));
}
