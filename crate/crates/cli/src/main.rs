use std::path::PathBuf;
use std::process::ExitCode;

use filmreduce::config::RunConfig;

const USAGE: &str = "usage: filmreduce <geometry|energy|cascade|solve|validate|crosscheck> \
--config <path> [--out <dir>] [--variant printed|derived]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        eprintln!("{USAGE}");
        return ExitCode::from(if args.is_empty() { 1 } else { 0 });
    }
    let command = args[0].clone();
    let mut config_path: Option<PathBuf> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut variant: Option<String> = None;
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => config_path = it.next().map(PathBuf::from),
            "--out" => out_dir = it.next().map(PathBuf::from),
            "--variant" => variant = it.next().cloned(),
            other => {
                eprintln!("unknown flag '{other}'\n{USAGE}");
                return ExitCode::from(1);
            }
        }
    }
    let Some(config_path) = config_path else {
        eprintln!("missing --config <path>\n{USAGE}");
        return ExitCode::from(1);
    };
    let mut cfg = match RunConfig::from_path(&config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    match variant.as_deref() {
        None => {}
        Some("printed") => cfg.variant = filmreduce::Variant::Printed,
        Some("derived") => cfg.variant = filmreduce::Variant::Derived,
        Some(other) => {
            eprintln!("unknown variant '{other}' (expected printed|derived)");
            return ExitCode::from(1);
        }
    }
    match filmreduce::run(&command, &cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
