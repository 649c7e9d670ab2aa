fn main() {
    std::process::exit(sdcert::run(std::env::args_os()));
}
