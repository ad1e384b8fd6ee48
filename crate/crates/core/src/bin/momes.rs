fn main() {
    let mut stdout = std::io::stdout();
    let code = momes_core::cli::run(std::env::args_os(), &mut stdout);
    std::process::exit(code);
}
