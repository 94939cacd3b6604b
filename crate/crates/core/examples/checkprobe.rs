// Runs every built-in scenario through the full checker pipeline and
// prints one line per run. Handy for eyeballing behavior after changes:
//   cargo run --release -p ccreg --example checkprobe
use ccreg::checker::check_all;
use ccreg::engine::run;
use ccreg::scenarios::presets;

fn main() {
    for name in presets::NAMES {
        let cfg = presets::by_name(name, 1).unwrap();
        let t0 = std::time::Instant::now();
        let trace = run(&cfg).unwrap();
        let report = check_all(&trace, 8).unwrap();
        println!(
            "{name}: {:?} exit={} fragments checked={} skipped={}",
            t0.elapsed(),
            report.exit_code(),
            report.bruteforce_fragments_checked,
            report.bruteforce_fragments_skipped
        );
    }
}
