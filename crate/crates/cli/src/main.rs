fn main() {
    std::process::exit(vdmfg_cli::main_with(std::env::args_os()));
}
