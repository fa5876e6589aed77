fn main() {
    std::process::exit(crowdtop::cli::cli_main(std::env::args_os()));
}
