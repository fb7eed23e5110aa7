fn main() {
    std::process::exit(dztrack::io::cli_main(std::env::args_os()));
}
