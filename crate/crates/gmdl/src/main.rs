fn main() {
    std::process::exit(gmdl::run(std::env::args_os()));
}
