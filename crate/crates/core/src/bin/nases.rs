fn main() {
    std::process::exit(nases::cli::run(std::env::args_os()));
}
