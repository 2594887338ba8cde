//! Runs a paired experiment through the harness from a TOML config and
//! prints the comparison table.

use halmdp::bench::{report, run_experiment, ExperimentConfig};

const FLAT: &str = r#"
algorithm = "flat-td"
seeds = [0, 1, 2]
[env]
kind = "nroom"
room_rows = 2
room_cols = 2
room_size = 5
[learner]
steps = 20000
eval_every = 1000
lambda = 0.001
alpha0 = 1.0
alpha_decay_c = 100000.0
"#;

const HIER: &str = r#"
algorithm = "hier-online"
seeds = [0, 1, 2]
[env]
kind = "nroom"
room_rows = 2
room_cols = 2
room_size = 5
[learner]
steps = 20000
eval_every = 1000
alpha0 = 0.7
alpha_decay_c = 100000.0
alpha_exit0 = 1.0
alpha_exit_decay_c = 100000.0
alpha_gain0 = 0.3
alpha_gain_decay_c = 1000.0
"#;

fn main() -> halmdp::Result<()> {
    let root = std::env::temp_dir().join("halmdp-experiment");
    let mut dirs = Vec::new();
    for (name, text) in [("flat", FLAT), ("hier", HIER)] {
        let mut config = ExperimentConfig::from_toml(text)?;
        config.out = root.join(name);
        let r = run_experiment(&config)?;
        print!("{}", r.summary());
        dirs.push(config.out);
    }
    print!("{}", report(&dirs)?);
    Ok(())
}
