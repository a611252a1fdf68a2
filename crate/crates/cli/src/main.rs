fn main() {
    std::process::exit(splatwalk_cli::run(std::env::args_os()));
}
