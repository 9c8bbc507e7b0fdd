fn main() {
    ruin_core::cli::main()
}
