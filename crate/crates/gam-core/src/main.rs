fn main() {
    std::process::exit(gam_core::cli::run());
}
