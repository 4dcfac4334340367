fn main() {
    std::process::exit(hopsynth::app::main_from(std::env::args_os()));
}
