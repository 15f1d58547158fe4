use psml::implant::{shift_decay_experiment, DecayConfig};

fn main() {
    let cfg = DecayConfig::default();
    let report = shift_decay_experiment(&cfg).expect("experiment runs");
    print!("{}", report.to_text());
}
