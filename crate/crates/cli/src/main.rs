fn main() {
    std::process::exit(mfst_cli::run(std::env::args_os()));
}
