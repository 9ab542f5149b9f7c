fn main() {
    let code = tdpmix::cli::run(std::env::args_os());
    std::process::exit(code);
}
