fn main() {
    std::process::exit(seqtrans_cli::run(std::env::args_os()));
}
