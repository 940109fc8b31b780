fn main() {
    hfo_core::experiments::init_logging();
    std::process::exit(hfo_core::experiments::cli_main(std::env::args()));
}
