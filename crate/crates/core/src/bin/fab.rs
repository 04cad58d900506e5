fn main() {
    if let Some(n) = std::env::var("FAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    let code = fab::cli::run(&argv, &mut std::io::stdout().lock());
    std::process::exit(code);
}
