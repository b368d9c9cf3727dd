use clap::Parser;
use contig_cli::artifacts::SUMMARY;
use contig_cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("contig: config error: --threads must be at least 1");
            std::process::exit(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    match cli.run() {
        Ok(s) => {
            println!(
                "{} done: fingerprint {} -> {}",
                s.stage,
                s.fingerprint,
                cli.out.join(SUMMARY).display()
            );
        }
        Err(e) => {
            eprintln!("contig: {}", e.describe());
            std::process::exit(e.exit_code());
        }
    }
}
