fn main() {
    std::process::exit(deeponet_maze::cli::run(std::env::args_os()));
}
