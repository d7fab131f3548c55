fn main() {
    std::process::exit(hic_zeroshot::cli::main_with_args(std::env::args_os()));
}
