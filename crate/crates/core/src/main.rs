fn main() {
    std::process::exit(elimtas::cli::dispatch(std::env::args_os()));
}
