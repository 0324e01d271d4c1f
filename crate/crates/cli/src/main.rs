use clap::Parser;
use pointer_sim_cli::{run, RunManifest};

fn main() {
    let manifest = RunManifest::parse();
    match run(manifest) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
