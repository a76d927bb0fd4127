fn main() {
    std::process::exit(admixlink::cli::run(std::env::args_os()));
}
