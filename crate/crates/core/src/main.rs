fn main() {
    std::process::exit(sv_langevin::cli::run(std::env::args_os()));
}
