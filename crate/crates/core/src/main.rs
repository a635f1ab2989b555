fn main() {
    grn::cli::main()
}
