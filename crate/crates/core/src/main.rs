fn main() {
    std::process::exit(debiasrank::cli::main_with(std::env::args_os()));
}
