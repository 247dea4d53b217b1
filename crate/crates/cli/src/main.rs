fn main() {
    std::process::exit(fastdecomp_cli::run(std::env::args_os()));
}
