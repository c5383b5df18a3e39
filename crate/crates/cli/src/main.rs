fn main() {
    std::process::exit(oamdm_cli::app::run(std::env::args_os()));
}
