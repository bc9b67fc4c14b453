fn main() {
    std::process::exit(advgcl::cli::run());
}
