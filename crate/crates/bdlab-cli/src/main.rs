fn main() {
    eprintln!("bdlab: not yet wired up");
    std::process::exit(2);
}
