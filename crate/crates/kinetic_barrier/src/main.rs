fn main() {
    std::process::exit(kinetic_barrier::cli::run(std::env::args_os()));
}
