fn main() {
    std::process::exit(hbvm_cli::parse_and_dispatch(std::env::args_os()));
}
