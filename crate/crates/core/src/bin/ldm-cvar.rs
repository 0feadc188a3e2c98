fn main() {
    std::process::exit(ldm_cvar::cli::cli_main(std::env::args_os()));
}
