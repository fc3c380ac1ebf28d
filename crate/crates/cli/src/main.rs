fn main() {
    mmwlab_cli::configure_threads();
    let code = mmwlab_cli::run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
