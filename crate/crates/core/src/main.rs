fn main() {
    std::process::exit(carnot_ou::cli::run(std::env::args_os()));
}
