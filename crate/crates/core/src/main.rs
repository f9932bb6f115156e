fn main() {
    std::process::exit(ecg_linkage::cli::main_with_args(std::env::args_os()));
}
