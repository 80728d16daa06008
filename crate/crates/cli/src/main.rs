fn main() {
    std::process::exit(tubelab::run(std::env::args_os()));
}
