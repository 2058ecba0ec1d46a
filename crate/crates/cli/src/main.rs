fn main() {
    let code = cotask::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
