fn main() {
    std::process::exit(bose_feedback::driver::cli_main(std::env::args_os()));
}
