fn main() {
    std::process::exit(osp_core::cli::run(std::env::args_os()));
}
