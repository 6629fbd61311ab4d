fn main() {
    std::process::exit(vmnet_cli::run(std::env::args_os()));
}
