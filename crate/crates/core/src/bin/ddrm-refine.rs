fn main() {
    std::process::exit(ddrm_refine::cli::main());
}
