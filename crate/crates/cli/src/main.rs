fn main() {
    std::process::exit(convtab_cli::cli::run(std::env::args_os()));
}
