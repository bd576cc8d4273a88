fn main() {
    std::process::exit(fracparts::cli::dispatch());
}
